#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bharnet/skeleton.hpp"

namespace bharnet {

enum class ClassProfile { body_dominant, hand_dominant, mixed };

std::string class_profile_name(ClassProfile profile);
ClassProfile class_profile_from_name(const std::string& name);

struct SynthSpec {
    int num_classes = 12;
    int per_class_train = 50;
    int per_class_test = 25;
    int64_t frames = 48;         // raw T before resampling
    double noise_sigma = 0.005;  // coordinate standard deviation
    std::vector<ClassProfile> class_profile;  // one entry per class

    void validate() const;
};

// First third body-dominant, second third hand-dominant, rest mixed.
std::vector<ClassProfile> default_class_profile(int num_classes);
SynthSpec default_synth_spec();

enum class SynthRole { train, test };

// Deterministic synthetic motion corpus. Body-dominant classes differ only
// in body trajectories (hands stay at a class-independent rest pose plus
// noise); hand-dominant classes differ only in finger trajectories over a
// shared idle body; mixed classes differ in both. Every sample carries a
// low-motion distractor person at a random slot. The role selects which
// split is generated (per_class_train or per_class_test samples per class)
// from an independent substream of the seed.
Dataset synth_generate(const SynthSpec& spec, uint64_t seed, SynthRole role = SynthRole::train);

// JSON form used by CLI spec files and run configs. Absent fields keep their
// defaults; an absent class_profile selects the default split.
SynthSpec synth_spec_from_json(const std::string& text);

}  // namespace bharnet
