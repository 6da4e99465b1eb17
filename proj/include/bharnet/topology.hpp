#pragma once

#include <utility>
#include <vector>

#include "bharnet/tensor.hpp"

namespace bharnet {

// Skeleton graph: a parent map (roots and isolated nodes map to themselves)
// plus the undirected edge list implied by it. Dummy nodes are self-parented
// and edge-isolated so padded layouts contribute nothing to convolution.
struct GraphTopology {
    int node_count = 0;
    std::vector<int> parent;                    // parent[v] == v marks a root or an isolated dummy
    std::vector<std::pair<int, int>> edges;     // undirected, (child, parent) pairs
    std::vector<bool> dummy;                    // true for padded nodes

    void validate() const;
    bool is_dummy(int v) const { return dummy[static_cast<size_t>(v)]; }
};

enum class TopologyKind { body25, hand21_padded25 };

// Fixed documented layouts: a 25-node body tree (pelvis root, spine chain,
// two arm chains, two leg chains, head) and the 21-node single-hand layout
// (wrist root + four-node finger chains) padded with 4 isolated dummy nodes.
GraphTopology build_topology(TopologyKind kind);

// Node index tables for the documented layouts.
namespace body25 {
constexpr int kPelvis = 0, kSpineMid = 1, kChest = 2, kNeck = 3, kHead = 4;
constexpr int kLShoulder = 5, kLElbow = 6, kLWrist = 7, kLHand = 8;
constexpr int kRShoulder = 9, kRElbow = 10, kRWrist = 11, kRHand = 12;
constexpr int kLHip = 13, kLKnee = 14, kLAnkle = 15, kLFoot = 16;
constexpr int kRHip = 17, kRKnee = 18, kRAnkle = 19, kRFoot = 20;
constexpr int kLFingertip = 21, kRFingertip = 22, kLToe = 23, kRToe = 24;
}  // namespace body25

enum class Partition { uniform, distance };

// Stack of normalized adjacency subset matrices [V x V], consumed by the
// spatial graph convolution.
struct AdjacencyStack {
    int node_count = 0;
    std::vector<Tensor> subsets;

    int subset_count() const { return static_cast<int>(subsets.size()); }
};

// uniform: one subset over A + I. distance: three subsets (self, parent
// direction, child direction). Each subset is normalized D^(-1/2) A_s
// D^(-1/2) with D from that subset's row sums; zero-degree rows stay zero
// (0^(-1/2) treated as 0), so isolated dummies have all-zero rows/columns.
AdjacencyStack normalize_adjacency(const GraphTopology& topology, Partition partition);

}  // namespace bharnet
