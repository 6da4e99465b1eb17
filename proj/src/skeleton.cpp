#include "bharnet/skeleton.hpp"

#include <cmath>

#include "bharnet/parallel.hpp"

namespace bharnet {

namespace {

void check_track(const Tensor& track, int64_t frames, int64_t nodes, const std::string& path) {
    const Shape expect{frames, nodes, 3};
    if (track.shape() != expect) {
        throw ValidationError(path + ": expected shape " + shape_to_string(expect) + ", got " +
                              shape_to_string(track.shape()));
    }
    if (!track.all_finite()) throw ValidationError(path + ": non-finite coordinate");
}

void check_track_dims(const Tensor& track, int64_t nodes, const char* op) {
    if (track.rank() != 3 || track.dim(2) != 3 || (nodes > 0 && track.dim(1) != nodes)) {
        throw ValidationError(std::string(op) + ": expected track shaped [T x " +
                              (nodes > 0 ? std::to_string(nodes) : std::string("V")) + " x 3], got " +
                              shape_to_string(track.shape()));
    }
    if (track.dim(0) < 1) throw ValidationError(std::string(op) + ": track must have at least one frame");
}

}  // namespace

void Dataset::validate() const {
    if (format_version != 1) {
        throw ValidationError("dataset: unsupported version " + std::to_string(format_version));
    }
    if (num_classes < 2) throw ValidationError("dataset: num_classes must be >= 2");
    for (size_t s = 0; s < samples.size(); ++s) {
        const std::string base = "samples[" + std::to_string(s) + "]";
        const SkeletonSample& sample = samples[s];
        if (sample.label < 0 || sample.label >= num_classes) {
            throw ValidationError(base + ".label: " + std::to_string(sample.label) + " out of range [0," +
                                  std::to_string(num_classes) + ")");
        }
        if (sample.frame_count < 1) throw ValidationError(base + ".frame_count: must be >= 1");
        if (sample.persons.empty() || sample.persons.size() > 2) {
            throw ValidationError(base + ".persons: expected 1 or 2 persons, got " +
                                  std::to_string(sample.persons.size()));
        }
        for (size_t p = 0; p < sample.persons.size(); ++p) {
            const std::string pb = base + ".persons[" + std::to_string(p) + "]";
            check_track(sample.persons[p].body, sample.frame_count, kBodyNodes, pb + ".body");
            check_track(sample.persons[p].left_hand, sample.frame_count, kHandNodes, pb + ".left_hand");
            check_track(sample.persons[p].right_hand, sample.frame_count, kHandNodes, pb + ".right_hand");
        }
    }
}

bool is_hand_kind(StreamKind kind) { return kind == StreamKind::hand_joint || kind == StreamKind::hand_bone; }
bool is_bone_kind(StreamKind kind) { return kind == StreamKind::body_bone || kind == StreamKind::hand_bone; }

std::string stream_kind_name(StreamKind kind) {
    switch (kind) {
        case StreamKind::body_joint: return "body-joint";
        case StreamKind::body_bone: return "body-bone";
        case StreamKind::hand_joint: return "hand-joint";
        case StreamKind::hand_bone: return "hand-bone";
    }
    return "?";
}

StreamKind stream_kind_from_name(const std::string& name) {
    if (name == "body-joint") return StreamKind::body_joint;
    if (name == "body-bone") return StreamKind::body_bone;
    if (name == "hand-joint") return StreamKind::hand_joint;
    if (name == "hand-bone") return StreamKind::hand_bone;
    throw ValidationError("unknown stream kind '" + name + "'");
}

Tensor resample_temporal(const Tensor& track, int64_t t_out) {
    check_track_dims(track, 0, "resample_temporal");
    if (t_out < 1) throw ValidationError("resample_temporal: T_out must be >= 1");
    const int64_t t_in = track.dim(0);
    const int64_t row = track.dim(1) * 3;
    Tensor out({t_out, track.dim(1), 3});
    const double* src = track.data();
    double* dst = out.data();
    if (t_in == 1) {
        for (int64_t t = 0; t < t_out; ++t) {
            for (int64_t j = 0; j < row; ++j) dst[t * row + j] = src[j];
        }
        return out;
    }
    if (t_out == 1) {
        for (int64_t j = 0; j < row; ++j) dst[j] = src[j];
        return out;
    }
    const double step = static_cast<double>(t_in - 1) / static_cast<double>(t_out - 1);
    for (int64_t t = 0; t < t_out; ++t) {
        const double pos = static_cast<double>(t) * step;
        int64_t lo = static_cast<int64_t>(pos);
        if (lo > t_in - 2) lo = t_in - 2;
        const double frac = pos - static_cast<double>(lo);
        const double* a = src + lo * row;
        const double* b = a + row;
        for (int64_t j = 0; j < row; ++j) dst[t * row + j] = a[j] + frac * (b[j] - a[j]);
    }
    return out;
}

Tensor derive_bone(const Tensor& track, const GraphTopology& topology) {
    check_track_dims(track, 0, "derive_bone");
    if (track.dim(1) != topology.node_count) {
        throw ValidationError("derive_bone: track has " + std::to_string(track.dim(1)) + " nodes but topology has " +
                              std::to_string(topology.node_count));
    }
    const int64_t frames = track.dim(0);
    const int64_t nodes = track.dim(1);
    Tensor out({frames, nodes, 3});
    const double* src = track.data();
    double* dst = out.data();
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t v = 0; v < nodes; ++v) {
            const int64_t p = topology.parent[static_cast<size_t>(v)];
            const double* joint = src + (t * nodes + v) * 3;
            const double* par = src + (t * nodes + p) * 3;
            double* bone = dst + (t * nodes + v) * 3;
            bone[0] = joint[0] - par[0];
            bone[1] = joint[1] - par[1];
            bone[2] = joint[2] - par[2];
        }
    }
    return out;
}

Tensor normalize_center(const Tensor& track, int root_index) {
    check_track_dims(track, 0, "normalize_center");
    const int64_t nodes = track.dim(1);
    if (root_index < 0 || root_index >= nodes) {
        throw ValidationError("normalize_center: root index " + std::to_string(root_index) +
                              " out of range for " + std::to_string(nodes) + " nodes");
    }
    const int64_t frames = track.dim(0);
    Tensor out = track;
    double* dst = out.data();
    for (int64_t t = 0; t < frames; ++t) {
        const double rx = dst[(t * nodes + root_index) * 3 + 0];
        const double ry = dst[(t * nodes + root_index) * 3 + 1];
        const double rz = dst[(t * nodes + root_index) * 3 + 2];
        for (int64_t v = 0; v < nodes; ++v) {
            dst[(t * nodes + v) * 3 + 0] -= rx;
            dst[(t * nodes + v) * 3 + 1] -= ry;
            dst[(t * nodes + v) * 3 + 2] -= rz;
        }
    }
    return out;
}

PaddedHand pad_hand_layout(const Tensor& hand) {
    check_track_dims(hand, kHandNodes, "pad_hand_layout");
    const int64_t frames = hand.dim(0);
    PaddedHand out;
    out.track = Tensor({frames, kPaddedHandNodes, 3});
    out.dummy_mask.assign(kPaddedHandNodes, false);
    for (int v = kHandNodes; v < kPaddedHandNodes; ++v) out.dummy_mask[static_cast<size_t>(v)] = true;
    const double* src = hand.data();
    double* dst = out.track.data();
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t v = 0; v < kHandNodes; ++v) {
            for (int c = 0; c < 3; ++c) dst[(t * kPaddedHandNodes + v) * 3 + c] = src[(t * kHandNodes + v) * 3 + c];
        }
    }
    return out;
}

double motion_energy(const Tensor& body) {
    check_track_dims(body, 0, "motion_energy");
    const int64_t frames = body.dim(0);
    const int64_t row = body.dim(1) * 3;
    const double* src = body.data();
    double energy = 0.0;
    for (int64_t t = 0; t + 1 < frames; ++t) {
        const double* a = src + t * row;
        const double* b = a + row;
        for (int64_t j = 0; j < row; ++j) {
            const double d = b[j] - a[j];
            energy += d * d;
        }
    }
    return energy;
}

SelectedHands select_active_hands(const SkeletonSample& sample) {
    if (sample.persons.empty()) throw ValidationError("select_active_hands: sample has no persons");
    int best = 0;
    double best_energy = motion_energy(sample.persons[0].body);
    for (size_t p = 1; p < sample.persons.size(); ++p) {
        const double e = motion_energy(sample.persons[p].body);
        if (e > best_energy) {
            best_energy = e;
            best = static_cast<int>(p);
        }
    }
    return SelectedHands{sample.persons[static_cast<size_t>(best)].left_hand,
                         sample.persons[static_cast<size_t>(best)].right_hand, best};
}

namespace {

// Writes a [T x 25 x 3] track into instance slot i of data[n, :, :, i, :].
void pack_instance(Tensor& data, int64_t n, int64_t instance, const Tensor& track) {
    const int64_t frames = data.dim(2);
    const int64_t nodes = data.dim(4);
    double* base = data.data();
    const int64_t c_stride = frames * kInstances * nodes;
    const int64_t sample_base = n * 3 * c_stride;
    const double* src = track.data();
    for (int64_t t = 0; t < frames; ++t) {
        for (int64_t v = 0; v < nodes; ++v) {
            const double* xyz = src + (t * nodes + v) * 3;
            const int64_t spot = t * kInstances * nodes + instance * nodes + v;
            base[sample_base + 0 * c_stride + spot] = xyz[0];
            base[sample_base + 1 * c_stride + spot] = xyz[1];
            base[sample_base + 2 * c_stride + spot] = xyz[2];
        }
    }
}

}  // namespace

StreamBatch to_stream_tensor(const Dataset& dataset, StreamKind kind, int64_t frames,
                             const GraphTopology& topology) {
    dataset.validate();
    if (frames < 2) throw ValidationError("to_stream_tensor: T must be >= 2");
    if (topology.node_count != kPaddedHandNodes) {
        throw ValidationError("to_stream_tensor: topology must have 25 nodes");
    }
    const int64_t n = static_cast<int64_t>(dataset.samples.size());
    StreamBatch batch;
    batch.stream.kind = kind;
    batch.stream.data = Tensor({n, 3, frames, kInstances, kPaddedHandNodes});
    batch.stream.dummy_mask.assign(kPaddedHandNodes, false);
    if (is_hand_kind(kind)) {
        for (int v = kHandNodes; v < kPaddedHandNodes; ++v) batch.stream.dummy_mask[static_cast<size_t>(v)] = true;
    }
    batch.labels.resize(static_cast<size_t>(n));

    parallel_for(n, [&](int64_t i) {
        const SkeletonSample& sample = dataset.samples[static_cast<size_t>(i)];
        batch.labels[static_cast<size_t>(i)] = sample.label;
        if (is_hand_kind(kind)) {
            const SelectedHands hands = select_active_hands(sample);
            const Tensor* tracks[2] = {&hands.left, &hands.right};
            for (int64_t inst = 0; inst < kInstances; ++inst) {
                Tensor track = resample_temporal(*tracks[inst], frames);
                track = normalize_center(track, 0);  // wrist
                PaddedHand padded = pad_hand_layout(track);
                Tensor final_track =
                    is_bone_kind(kind) ? derive_bone(padded.track, topology) : std::move(padded.track);
                pack_instance(batch.stream.data, i, inst, final_track);
            }
        } else {
            for (int64_t inst = 0; inst < kInstances; ++inst) {
                if (inst >= static_cast<int64_t>(sample.persons.size())) break;  // slot stays zero
                Tensor track = resample_temporal(sample.persons[static_cast<size_t>(inst)].body, frames);
                track = normalize_center(track, body25::kPelvis);
                if (is_bone_kind(kind)) track = derive_bone(track, topology);
                pack_instance(batch.stream.data, i, inst, track);
            }
        }
    });
    return batch;
}

}  // namespace bharnet
