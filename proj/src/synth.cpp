#include "bharnet/synth.hpp"

#include <array>
#include <cmath>
#include <json.hpp>

#include "bharnet/rng.hpp"

namespace bharnet {

std::string class_profile_name(ClassProfile profile) {
    switch (profile) {
        case ClassProfile::body_dominant: return "body";
        case ClassProfile::hand_dominant: return "hand";
        case ClassProfile::mixed: return "mixed";
    }
    return "?";
}

ClassProfile class_profile_from_name(const std::string& name) {
    if (name == "body") return ClassProfile::body_dominant;
    if (name == "hand") return ClassProfile::hand_dominant;
    if (name == "mixed") return ClassProfile::mixed;
    throw ValidationError("unknown class profile '" + name + "'");
}

void SynthSpec::validate() const {
    if (num_classes < 2) throw ValidationError("synth spec: num_classes must be >= 2");
    if (per_class_train < 1) throw ValidationError("synth spec: per_class_train must be >= 1");
    if (per_class_test < 0) throw ValidationError("synth spec: per_class_test must be >= 0");
    if (frames < 2) throw ValidationError("synth spec: frames must be >= 2");
    if (!(noise_sigma >= 0.0)) throw ValidationError("synth spec: noise_sigma must be >= 0");
    if (static_cast<int>(class_profile.size()) != num_classes) {
        throw ValidationError("synth spec: class_profile must cover every class exactly once (got " +
                              std::to_string(class_profile.size()) + " entries for " + std::to_string(num_classes) +
                              " classes)");
    }
}

std::vector<ClassProfile> default_class_profile(int num_classes) {
    std::vector<ClassProfile> profile(static_cast<size_t>(num_classes));
    const int third = (num_classes + 2) / 3;
    for (int c = 0; c < num_classes; ++c) {
        if (c < third) {
            profile[static_cast<size_t>(c)] = ClassProfile::body_dominant;
        } else if (c < 2 * third) {
            profile[static_cast<size_t>(c)] = ClassProfile::hand_dominant;
        } else {
            profile[static_cast<size_t>(c)] = ClassProfile::mixed;
        }
    }
    return profile;
}

SynthSpec default_synth_spec() {
    SynthSpec spec;
    spec.class_profile = default_class_profile(spec.num_classes);
    return spec;
}

namespace {

constexpr double kTau = 6.283185307179586;

// Rest pose of the 25-node body, roughly in meters, y up.
const std::array<std::array<double, 3>, 25>& body_rest_pose() {
    static const std::array<std::array<double, 3>, 25> pose = {{
        {0.00, 0.90, 0.00},    // pelvis
        {0.00, 1.05, 0.00},    // spine_mid
        {0.00, 1.25, 0.00},    // chest
        {0.00, 1.40, 0.00},    // neck
        {0.00, 1.55, 0.00},    // head
        {0.18, 1.35, 0.00},    // l_shoulder
        {0.32, 1.10, 0.00},    // l_elbow
        {0.42, 0.90, 0.00},    // l_wrist
        {0.47, 0.82, 0.00},    // l_hand
        {-0.18, 1.35, 0.00},   // r_shoulder
        {-0.32, 1.10, 0.00},   // r_elbow
        {-0.42, 0.90, 0.00},   // r_wrist
        {-0.47, 0.82, 0.00},   // r_hand
        {0.10, 0.85, 0.00},    // l_hip
        {0.12, 0.45, 0.00},    // l_knee
        {0.13, 0.08, 0.00},    // l_ankle
        {0.15, 0.02, 0.08},    // l_foot
        {-0.10, 0.85, 0.00},   // r_hip
        {-0.12, 0.45, 0.00},   // r_knee
        {-0.13, 0.08, 0.00},   // r_ankle
        {-0.15, 0.02, 0.08},   // r_foot
        {0.50, 0.78, 0.00},    // l_fingertip
        {-0.50, 0.78, 0.00},   // r_fingertip
        {0.16, 0.00, 0.14},    // l_toe
        {-0.16, 0.00, 0.14},   // r_toe
    }};
    return pose;
}

// Right-hand rest pose, wrist at the origin, fingers along +x, spread in z.
const std::array<std::array<double, 3>, 21>& hand_rest_pose() {
    static const std::array<std::array<double, 3>, 21> pose = {{
        {0.000, 0.000, 0.000},
        {0.030, 0.000, 0.030},  {0.060, 0.000, 0.050},  {0.080, 0.000, 0.065},  {0.095, 0.000, 0.075},
        {0.090, 0.000, 0.025},  {0.130, 0.000, 0.030},  {0.155, 0.000, 0.032},  {0.175, 0.000, 0.033},
        {0.090, 0.000, 0.005},  {0.135, 0.000, 0.005},  {0.165, 0.000, 0.005},  {0.185, 0.000, 0.005},
        {0.088, 0.000, -0.015}, {0.128, 0.000, -0.018}, {0.155, 0.000, -0.020}, {0.172, 0.000, -0.021},
        {0.082, 0.000, -0.035}, {0.112, 0.000, -0.040}, {0.132, 0.000, -0.043}, {0.147, 0.000, -0.045},
    }};
    return pose;
}

struct BodyMover {
    std::vector<int> nodes;
    std::array<double, 3> dir;
    double amp;
    double freq;
};

using BodyPattern = std::vector<BodyMover>;

// Eight distinct body motion patterns. Body-dominant and mixed classes each
// draw a unique one; hand-dominant classes share the idle pattern below.
const std::vector<BodyPattern>& body_patterns() {
    static const std::vector<BodyPattern> patterns = {
        {{{9, 10, 11, 12, 22}, {0, 1, 0}, 0.35, 1.0}},                       // right arm raise
        {{{5, 6, 7, 8, 21}, {0, 1, 0}, 0.35, 1.0}},                          // left arm raise
        {{{0, 1, 2, 3, 4}, {0, -1, 0}, 0.40, 1.0}},                          // squat
        {{{18, 19, 20, 24}, {0, 0, 1}, 0.45, 1.0}},                          // right kick
        {{{5, 6, 7, 8, 9, 10, 11, 12, 21, 22}, {0, 0, 1}, 0.35, 1.0}},       // both arms forward
        {{{2, 3, 4, 5, 9}, {1, 0, 0}, 0.35, 2.0}},                           // torso twist
        {{{14, 15, 16, 23}, {0, 0, 1}, 0.45, 1.0}},                          // left kick
        {{{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18,
           19, 20, 21, 22, 23, 24},
          {0, 1, 0},
          0.25,
          2.0}},                                                             // bounce
    };
    return patterns;
}

// Class-independent idle motion for hand-dominant classes; large enough that
// the active person's motion energy dominates the distractor under noise.
const BodyPattern& idle_body_pattern() {
    static const BodyPattern idle = {{{2, 3, 4}, {1, 0, 0}, 0.28, 1.0}};
    return idle;
}

struct HandCurl {
    int finger;  // 0 = thumb .. 4 = pinky
    double amp;  // negative values bend backward
    double freq;
    double phase;
};

struct HandPattern {
    std::vector<HandCurl> curls;
    double spread_amp = 0.0;
    double spread_freq = 1.0;
};

// Eight distinct finger motion patterns for hand-dominant and mixed classes.
const std::vector<HandPattern>& hand_patterns() {
    static const std::vector<HandPattern> patterns = {
        {{{1, 1.0, 1.0, 0.0}}},                                                       // index curl
        {{{0, 1.0, 1.0, 0.0}, {1, 1.0, 1.0, 0.0}, {2, 1.0, 1.0, 0.0},
          {3, 1.0, 1.0, 0.0}, {4, 1.0, 1.0, 0.0}}},                                   // fist
        {{{0, 1.2, 1.0, 0.0}}},                                                       // thumb opposition
        {{}, 1.0, 1.0},                                                               // finger spread
        {{{3, 1.0, 1.0, 0.0}, {4, 1.0, 1.0, 0.0}}},                                   // ring+pinky curl
        {{{0, 1.0, 1.0, 0.0}, {1, 1.0, 1.0, 1.2566370614359172},
          {2, 1.0, 1.0, 2.5132741228718345}, {3, 1.0, 1.0, 3.7699111843077517},
          {4, 1.0, 1.0, 5.026548245743669}}},                                         // finger wave
        {{{1, -0.7, 2.0, 0.0}, {2, -0.7, 2.0, 0.0}}},                                 // index+middle flick
        {{{2, 1.0, 2.0, 0.0}, {3, 1.0, 2.0, 0.0}}},                                   // middle+ring curl
    };
    return patterns;
}

struct SampleJitter {
    double body_phase;
    double hand_phase;
    double freq_scale;
    double offset_x;
    double offset_z;
};

void add_body_motion(Tensor& body, const BodyPattern& pattern, int64_t frames, double phase, double freq_scale) {
    double* data = body.data();
    for (const BodyMover& mover : pattern) {
        for (int64_t t = 0; t < frames; ++t) {
            const double u = static_cast<double>(t) / static_cast<double>(frames);
            const double s = mover.amp * std::sin(kTau * mover.freq * freq_scale * u + phase);
            for (int node : mover.nodes) {
                double* xyz = data + (t * kBodyNodes + node) * 3;
                xyz[0] += s * mover.dir[0];
                xyz[1] += s * mover.dir[1];
                xyz[2] += s * mover.dir[2];
            }
        }
    }
}

// Curl displacement: chain position k moves k * amp * 0.012 downward and
// half that backward along the finger, driven by a raised-cosine cycle.
void add_hand_motion(Tensor& hand, const HandPattern& pattern, int64_t frames, double phase, double freq_scale,
                     double mirror) {
    double* data = hand.data();
    for (const HandCurl& curl : pattern.curls) {
        const int base = 1 + curl.finger * 4;
        for (int64_t t = 0; t < frames; ++t) {
            const double u = static_cast<double>(t) / static_cast<double>(frames);
            const double c = 0.5 * (1.0 - std::cos(kTau * curl.freq * freq_scale * u + phase + curl.phase));
            for (int k = 0; k < 4; ++k) {
                const double depth = curl.amp * 0.012 * static_cast<double>(k + 1) * c;
                double* xyz = data + (t * kHandNodes + base + k) * 3;
                xyz[1] -= depth;
                xyz[0] -= 0.5 * depth * mirror;
            }
        }
    }
    if (pattern.spread_amp != 0.0) {
        for (int64_t t = 0; t < frames; ++t) {
            const double u = static_cast<double>(t) / static_cast<double>(frames);
            const double s = pattern.spread_amp * 0.015 *
                             std::sin(kTau * pattern.spread_freq * freq_scale * u + phase);
            for (int finger = 0; finger < 5; ++finger) {
                const double weight = static_cast<double>(finger - 2);
                const int base = 1 + finger * 4;
                for (int k = 0; k < 4; ++k) {
                    data[(t * kHandNodes + base + k) * 3 + 2] += s * weight;
                }
            }
        }
    }
}

Tensor make_body_track(int64_t frames, const BodyPattern* pattern, const SampleJitter& jitter, Rng& rng,
                       double noise_sigma, double extra_offset_x) {
    Tensor body({frames, kBodyNodes, 3});
    double* data = body.data();
    const auto& rest = body_rest_pose();
    for (int64_t t = 0; t < frames; ++t) {
        for (int v = 0; v < kBodyNodes; ++v) {
            double* xyz = data + (t * kBodyNodes + v) * 3;
            xyz[0] = rest[static_cast<size_t>(v)][0] + jitter.offset_x + extra_offset_x;
            xyz[1] = rest[static_cast<size_t>(v)][1];
            xyz[2] = rest[static_cast<size_t>(v)][2] + jitter.offset_z;
        }
    }
    if (pattern) add_body_motion(body, *pattern, frames, jitter.body_phase, jitter.freq_scale);
    for (int64_t i = 0; i < body.numel(); ++i) data[i] += rng.normal(0.0, noise_sigma);
    return body;
}

// side: +1 right hand, -1 left hand (mirrored rest pose and curl).
Tensor make_hand_track(int64_t frames, const HandPattern* pattern, const SampleJitter& jitter, Rng& rng,
                       double noise_sigma, double extra_offset_x, int side) {
    Tensor hand({frames, kHandNodes, 3});
    double* data = hand.data();
    const auto& rest = hand_rest_pose();
    const auto& body_rest = body_rest_pose();
    const int wrist = side > 0 ? body25::kRWrist : body25::kLWrist;
    const double mirror = side > 0 ? -1.0 : 1.0;  // fingers point away from the torso
    for (int64_t t = 0; t < frames; ++t) {
        for (int v = 0; v < kHandNodes; ++v) {
            double* xyz = data + (t * kHandNodes + v) * 3;
            xyz[0] = body_rest[static_cast<size_t>(wrist)][0] + mirror * rest[static_cast<size_t>(v)][0] +
                     jitter.offset_x + extra_offset_x;
            xyz[1] = body_rest[static_cast<size_t>(wrist)][1] + rest[static_cast<size_t>(v)][1];
            xyz[2] = body_rest[static_cast<size_t>(wrist)][2] + rest[static_cast<size_t>(v)][2] + jitter.offset_z;
        }
    }
    if (pattern) add_hand_motion(hand, *pattern, frames, jitter.hand_phase, jitter.freq_scale, mirror);
    for (int64_t i = 0; i < hand.numel(); ++i) data[i] += rng.normal(0.0, noise_sigma);
    return hand;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec, uint64_t seed, SynthRole role) {
    spec.validate();

    // Rank classes among those that need distinct body (or hand) patterns so
    // pattern assignments never collide within a profile group.
    std::vector<int> body_rank(static_cast<size_t>(spec.num_classes), -1);
    std::vector<int> hand_rank(static_cast<size_t>(spec.num_classes), -1);
    int next_body = 0, next_hand = 0;
    for (int c = 0; c < spec.num_classes; ++c) {
        const ClassProfile profile = spec.class_profile[static_cast<size_t>(c)];
        if (profile != ClassProfile::hand_dominant) body_rank[static_cast<size_t>(c)] = next_body++;
        if (profile != ClassProfile::body_dominant) hand_rank[static_cast<size_t>(c)] = next_hand++;
    }

    const int per_class = role == SynthRole::train ? spec.per_class_train : spec.per_class_test;
    const uint64_t master = Rng::mix(seed, role == SynthRole::train ? 0x7261696eULL : 0x74657374ULL);

    Dataset dataset;
    dataset.num_classes = spec.num_classes;
    dataset.samples.reserve(static_cast<size_t>(spec.num_classes) * static_cast<size_t>(per_class));

    const int n_body_patterns = static_cast<int>(body_patterns().size());
    const int n_hand_patterns = static_cast<int>(hand_patterns().size());

    for (int c = 0; c < spec.num_classes; ++c) {
        const ClassProfile profile = spec.class_profile[static_cast<size_t>(c)];
        const BodyPattern* body_pat = nullptr;
        const HandPattern* hand_pat = nullptr;
        if (profile == ClassProfile::hand_dominant) {
            body_pat = &idle_body_pattern();
        } else {
            body_pat = &body_patterns()[static_cast<size_t>(body_rank[static_cast<size_t>(c)] % n_body_patterns)];
        }
        if (profile != ClassProfile::body_dominant) {
            hand_pat = &hand_patterns()[static_cast<size_t>(hand_rank[static_cast<size_t>(c)] % n_hand_patterns)];
        }

        for (int i = 0; i < per_class; ++i) {
            Rng rng(Rng::mix(master, static_cast<uint64_t>(c) * 1000003ULL + static_cast<uint64_t>(i)));
            SampleJitter jitter;
            jitter.body_phase = rng.uniform(-0.4, 0.4);
            jitter.hand_phase = rng.uniform(-0.4, 0.4);
            jitter.freq_scale = rng.uniform(0.95, 1.05);
            jitter.offset_x = rng.uniform(-0.4, 0.4);
            jitter.offset_z = rng.uniform(-0.4, 0.4);
            const bool swap_persons = rng.uniform() < 0.5;

            PersonTrack actor;
            actor.body = make_body_track(spec.frames, body_pat, jitter, rng, spec.noise_sigma, 0.0);
            actor.left_hand = make_hand_track(spec.frames, hand_pat, jitter, rng, spec.noise_sigma, 0.0, -1);
            actor.right_hand = make_hand_track(spec.frames, hand_pat, jitter, rng, spec.noise_sigma, 0.0, +1);

            // Low-motion distractor, offset to the side.
            static const BodyPattern distractor_sway = {{{2, 3, 4}, {1, 0, 0}, 0.01, 0.7}};
            SampleJitter djitter = jitter;
            djitter.body_phase = rng.uniform(-0.4, 0.4);
            djitter.hand_phase = 0.0;
            const double doffset = 1.2 + rng.uniform(-0.1, 0.1);
            PersonTrack distractor;
            distractor.body = make_body_track(spec.frames, &distractor_sway, djitter, rng, spec.noise_sigma, doffset);
            distractor.left_hand = make_hand_track(spec.frames, nullptr, djitter, rng, spec.noise_sigma, doffset, -1);
            distractor.right_hand = make_hand_track(spec.frames, nullptr, djitter, rng, spec.noise_sigma, doffset, +1);

            SkeletonSample sample;
            sample.label = c;
            sample.frame_count = spec.frames;
            if (swap_persons) {
                sample.persons.push_back(std::move(distractor));
                sample.persons.push_back(std::move(actor));
            } else {
                sample.persons.push_back(std::move(actor));
                sample.persons.push_back(std::move(distractor));
            }
            dataset.samples.push_back(std::move(sample));
        }
    }
    dataset.validate();
    return dataset;
}

SynthSpec synth_spec_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("cannot parse synth spec: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("synth spec: expected a JSON object");
    SynthSpec spec;
    if (doc.contains("num_classes")) spec.num_classes = doc["num_classes"].get<int>();
    if (doc.contains("per_class_train")) spec.per_class_train = doc["per_class_train"].get<int>();
    if (doc.contains("per_class_test")) spec.per_class_test = doc["per_class_test"].get<int>();
    if (doc.contains("frames")) spec.frames = doc["frames"].get<int64_t>();
    if (doc.contains("noise_sigma")) spec.noise_sigma = doc["noise_sigma"].get<double>();
    if (doc.contains("class_profile")) {
        for (const auto& entry : doc["class_profile"]) {
            spec.class_profile.push_back(class_profile_from_name(entry.get<std::string>()));
        }
    } else {
        spec.class_profile = default_class_profile(spec.num_classes);
    }
    spec.validate();
    return spec;
}

}  // namespace bharnet
