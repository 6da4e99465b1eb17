#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bharnet/gradcheck.hpp"

namespace bharnet {

// A registered finite-difference check: a seeded tiny instance of one
// operation, layer or full model variant. Elementwise targets carry tighter
// default tolerances than composite ones.
struct GradCheckTarget {
    std::string name;
    double tolerance = 1e-4;
    std::function<GradCheckReport(uint64_t seed)> run;
};

const std::vector<GradCheckTarget>& gradcheck_targets();
const GradCheckTarget* find_gradcheck_target(const std::string& name);

struct GradCheckRun {
    std::string name;
    double tolerance = 0.0;
    GradCheckReport report;
    bool passed = false;
};

// Runs one target ("all" runs every registered one). A positive
// tolerance_override replaces each target's default.
std::vector<GradCheckRun> run_gradchecks(const std::string& target, uint64_t seed, double tolerance_override = 0.0);

}  // namespace bharnet
