#pragma once

#include <string>
#include <vector>

#include "bharnet/tensor.hpp"
#include "bharnet/topology.hpp"

namespace bharnet {

// Coordinate tracks are dense tensors shaped [T x V x 3].

constexpr int kBodyNodes = 25;
constexpr int kHandNodes = 21;
constexpr int kPaddedHandNodes = 25;
constexpr int kInstances = 2;

struct PersonTrack {
    Tensor body;        // [T x 25 x 3]
    Tensor left_hand;   // [T x 21 x 3]
    Tensor right_hand;  // [T x 21 x 3]
};

struct SkeletonSample {
    int label = 0;
    int64_t frame_count = 0;
    std::vector<PersonTrack> persons;
};

struct Dataset {
    int format_version = 1;
    int num_classes = 0;
    std::vector<SkeletonSample> samples;

    // Full structural validation; error messages name the failing sample
    // index and field path.
    void validate() const;
};

enum class StreamKind { body_joint, body_bone, hand_joint, hand_bone };

bool is_hand_kind(StreamKind kind);
bool is_bone_kind(StreamKind kind);
std::string stream_kind_name(StreamKind kind);
StreamKind stream_kind_from_name(const std::string& name);

struct StreamTensor {
    Tensor data;  // [N x 3 x T x 2 x 25]
    StreamKind kind = StreamKind::body_joint;
    std::vector<bool> dummy_mask;  // length 25; 4 true entries for hand kinds, none for body
};

// Linear interpolation onto a uniform grid: output frame t maps to source
// position t * (T_in - 1) / (T_out - 1); a single input frame broadcasts.
Tensor resample_temporal(const Tensor& track, int64_t t_out);

// bone[t][v] = joint[t][v] - joint[t][parent(v)]; self-parented nodes map to
// the zero vector.
Tensor derive_bone(const Tensor& track, const GraphTopology& topology);

// Subtracts the root joint's per-frame position from every joint.
Tensor normalize_center(const Tensor& track, int root_index);

struct PaddedHand {
    Tensor track;  // [T x 25 x 3]
    std::vector<bool> dummy_mask;
};

// Copies nodes 0-20 and fills nodes 21-24 with zeros.
PaddedHand pad_hand_layout(const Tensor& hand);

// Sum over frames and nodes of the squared frame-to-frame displacement.
double motion_energy(const Tensor& body);

struct SelectedHands {
    Tensor left;   // [T x 21 x 3]
    Tensor right;  // [T x 21 x 3]
    int person_index = 0;
};

// Picks both hands of the person with maximal body motion energy; ties break
// to the lowest person index.
SelectedHands select_active_hands(const SkeletonSample& sample);

struct StreamBatch {
    StreamTensor stream;
    std::vector<int> labels;
};

// Full preprocessing pipeline: hand selection (hand kinds), temporal
// resampling to `frames`, root centering, dummy padding (hand kinds), bone
// derivation (bone kinds), instance packing into [N x 3 x T x 2 x 25].
StreamBatch to_stream_tensor(const Dataset& dataset, StreamKind kind, int64_t frames,
                             const GraphTopology& topology);

}  // namespace bharnet
