#pragma once

#include <string>

#include "bharnet/skeleton.hpp"

namespace bharnet {

// Single-JSON-document dataset format:
//   {"format_version":1, "num_classes":K,
//    "samples":[{"label":k, "persons":[{"body":[[T][25][3]],
//                 "left_hand":[[T][21][3]], "right_hand":[[T][21][3]]}]}]}
// Numbers are written in shortest round-trip form, so save/load reproduces
// every coordinate bit-exactly.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace bharnet
