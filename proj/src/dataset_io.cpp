#include "bharnet/dataset_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <json.hpp>

namespace bharnet {

namespace {

using json = nlohmann::json;

void write_double(std::string& out, double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    out.append(buf, res.ptr);
}

// [T x V x 3] -> [[..[x,y,z]..]..]
void write_track(std::string& out, const Tensor& track) {
    const int64_t frames = track.dim(0);
    const int64_t nodes = track.dim(1);
    const double* data = track.data();
    out.push_back('[');
    for (int64_t t = 0; t < frames; ++t) {
        if (t) out.push_back(',');
        out.push_back('[');
        for (int64_t v = 0; v < nodes; ++v) {
            if (v) out.push_back(',');
            out.push_back('[');
            for (int c = 0; c < 3; ++c) {
                if (c) out.push_back(',');
                write_double(out, data[(t * nodes + v) * 3 + c]);
            }
            out.push_back(']');
        }
        out.push_back(']');
    }
    out.push_back(']');
}

Tensor read_track(const json& node, int64_t expected_nodes, const std::string& path) {
    if (!node.is_array() || node.empty()) {
        throw ValidationError(path + ": expected a non-empty array of frames");
    }
    const int64_t frames = static_cast<int64_t>(node.size());
    Tensor track({frames, expected_nodes, 3});
    double* data = track.data();
    for (int64_t t = 0; t < frames; ++t) {
        const json& frame = node[static_cast<size_t>(t)];
        if (!frame.is_array() || static_cast<int64_t>(frame.size()) != expected_nodes) {
            throw ValidationError(path + "[" + std::to_string(t) + "]: expected " + std::to_string(expected_nodes) +
                                  " nodes, got " + std::to_string(frame.size()));
        }
        for (int64_t v = 0; v < expected_nodes; ++v) {
            const json& coord = frame[static_cast<size_t>(v)];
            if (!coord.is_array() || coord.size() != 3) {
                throw ValidationError(path + "[" + std::to_string(t) + "][" + std::to_string(v) +
                                      "]: expected 3 coordinates");
            }
            for (int c = 0; c < 3; ++c) {
                const json& x = coord[static_cast<size_t>(c)];
                if (!x.is_number()) {
                    throw ValidationError(path + "[" + std::to_string(t) + "][" + std::to_string(v) + "][" +
                                          std::to_string(c) + "]: expected a number");
                }
                data[(t * expected_nodes + v) * 3 + c] = x.get<double>();
            }
        }
    }
    return track;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
    dataset.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");

    std::string buf;
    buf.reserve(1 << 20);
    buf += "{\"format_version\":";
    buf += std::to_string(dataset.format_version);
    buf += ",\"num_classes\":";
    buf += std::to_string(dataset.num_classes);
    buf += ",\"samples\":[";
    for (size_t s = 0; s < dataset.samples.size(); ++s) {
        const SkeletonSample& sample = dataset.samples[s];
        if (s) buf.push_back(',');
        buf += "{\"label\":";
        buf += std::to_string(sample.label);
        buf += ",\"persons\":[";
        for (size_t p = 0; p < sample.persons.size(); ++p) {
            if (p) buf.push_back(',');
            buf += "{\"body\":";
            write_track(buf, sample.persons[p].body);
            buf += ",\"left_hand\":";
            write_track(buf, sample.persons[p].left_hand);
            buf += ",\"right_hand\":";
            write_track(buf, sample.persons[p].right_hand);
            buf.push_back('}');
        }
        buf += "]}";
        if (buf.size() > (1 << 20)) {
            out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            buf.clear();
        }
    }
    buf += "]}";
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }

    if (!doc.is_object()) throw ValidationError("dataset: top-level document must be an object");
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
        throw ValidationError("dataset: missing integer format_version");
    }
    const int version = doc["format_version"].get<int>();
    if (version != 1) throw ValidationError("dataset: unsupported version " + std::to_string(version));
    if (!doc.contains("num_classes") || !doc["num_classes"].is_number_integer()) {
        throw ValidationError("dataset: missing integer num_classes");
    }
    if (!doc.contains("samples") || !doc["samples"].is_array()) {
        throw ValidationError("dataset: missing samples array");
    }

    Dataset dataset;
    dataset.format_version = version;
    dataset.num_classes = doc["num_classes"].get<int>();
    const json& samples = doc["samples"];
    dataset.samples.reserve(samples.size());
    for (size_t s = 0; s < samples.size(); ++s) {
        const std::string base = "samples[" + std::to_string(s) + "]";
        const json& js = samples[s];
        if (!js.is_object() || !js.contains("label") || !js["label"].is_number_integer()) {
            throw ValidationError(base + ": expected an object with an integer label");
        }
        if (!js.contains("persons") || !js["persons"].is_array() || js["persons"].empty()) {
            throw ValidationError(base + ".persons: expected a non-empty array");
        }
        SkeletonSample sample;
        sample.label = js["label"].get<int>();
        const json& persons = js["persons"];
        for (size_t p = 0; p < persons.size(); ++p) {
            const std::string pb = base + ".persons[" + std::to_string(p) + "]";
            const json& jp = persons[p];
            if (!jp.is_object() || !jp.contains("body") || !jp.contains("left_hand") || !jp.contains("right_hand")) {
                throw ValidationError(pb + ": expected body, left_hand and right_hand tracks");
            }
            PersonTrack person;
            person.body = read_track(jp["body"], kBodyNodes, pb + ".body");
            person.left_hand = read_track(jp["left_hand"], kHandNodes, pb + ".left_hand");
            person.right_hand = read_track(jp["right_hand"], kHandNodes, pb + ".right_hand");
            sample.persons.push_back(std::move(person));
        }
        sample.frame_count = sample.persons[0].body.dim(0);
        dataset.samples.push_back(std::move(sample));
    }
    dataset.validate();
    return dataset;
}

}  // namespace bharnet
