#include "bharnet/topology.hpp"

#include <cmath>

namespace bharnet {

void GraphTopology::validate() const {
    const int v = node_count;
    if (static_cast<int>(parent.size()) != v || static_cast<int>(dummy.size()) != v) {
        throw ValidationError("topology: parent/dummy table size does not match node_count");
    }
    for (int i = 0; i < v; ++i) {
        const int p = parent[static_cast<size_t>(i)];
        if (p < 0 || p >= v) throw ValidationError("topology: parent index out of range at node " + std::to_string(i));
        if (dummy[static_cast<size_t>(i)] && p != i) {
            throw ValidationError("topology: dummy node " + std::to_string(i) + " must be self-parented");
        }
    }
    // The parent relation must be a forest: walking up from any node
    // terminates at a self-parented root.
    for (int i = 0; i < v; ++i) {
        int cur = i;
        int steps = 0;
        while (parent[static_cast<size_t>(cur)] != cur) {
            cur = parent[static_cast<size_t>(cur)];
            if (++steps > v) throw ValidationError("topology: parent map contains a cycle through node " + std::to_string(i));
        }
    }
    for (const auto& [a, b] : edges) {
        if (a < 0 || a >= v || b < 0 || b >= v || a == b) throw ValidationError("topology: invalid edge");
        if (dummy[static_cast<size_t>(a)] || dummy[static_cast<size_t>(b)]) {
            throw ValidationError("topology: dummy nodes must have no edges");
        }
    }
}

GraphTopology build_topology(TopologyKind kind) {
    GraphTopology t;
    if (kind == TopologyKind::body25) {
        t.node_count = 25;
        t.parent = {0,  0,  1,  2,  3,   // pelvis, spine_mid, chest, neck, head
                    2,  5,  6,  7,       // left arm: shoulder, elbow, wrist, hand
                    2,  9,  10, 11,      // right arm
                    0,  13, 14, 15,      // left leg: hip, knee, ankle, foot
                    0,  17, 18, 19,      // right leg
                    8,  12, 16, 20};     // fingertips and toes
        t.dummy.assign(25, false);
    } else {
        // 21-node single hand: wrist root, then four-node chains for thumb,
        // index, middle, ring, pinky; nodes 21-24 are isolated padding.
        t.node_count = 25;
        t.parent.assign(25, 0);
        for (int finger = 0; finger < 5; ++finger) {
            const int base = 1 + finger * 4;
            t.parent[static_cast<size_t>(base)] = 0;
            for (int k = 1; k < 4; ++k) t.parent[static_cast<size_t>(base + k)] = base + k - 1;
        }
        t.dummy.assign(25, false);
        for (int v = 21; v < 25; ++v) {
            t.parent[static_cast<size_t>(v)] = v;
            t.dummy[static_cast<size_t>(v)] = true;
        }
    }
    for (int v = 0; v < t.node_count; ++v) {
        const int p = t.parent[static_cast<size_t>(v)];
        if (p != v) t.edges.emplace_back(v, p);
    }
    t.validate();
    return t;
}

namespace {

// D^(-1/2) A D^(-1/2) with D from row sums of A; rows with zero sum keep a
// zero scale factor.
Tensor symmetric_normalize(const Tensor& a, int v) {
    std::vector<double> inv_sqrt(static_cast<size_t>(v), 0.0);
    for (int i = 0; i < v; ++i) {
        double deg = 0.0;
        for (int j = 0; j < v; ++j) deg += a.data()[i * v + j];
        if (deg > 0.0) inv_sqrt[static_cast<size_t>(i)] = 1.0 / std::sqrt(deg);
    }
    Tensor out({v, v});
    for (int i = 0; i < v; ++i) {
        for (int j = 0; j < v; ++j) {
            out.data()[i * v + j] = inv_sqrt[static_cast<size_t>(i)] * a.data()[i * v + j] * inv_sqrt[static_cast<size_t>(j)];
        }
    }
    return out;
}

}  // namespace

AdjacencyStack normalize_adjacency(const GraphTopology& topology, Partition partition) {
    topology.validate();
    const int v = topology.node_count;
    AdjacencyStack stack;
    stack.node_count = v;

    if (partition == Partition::uniform) {
        Tensor a({v, v});
        for (const auto& [c, p] : topology.edges) {
            a.data()[c * v + p] = 1.0;
            a.data()[p * v + c] = 1.0;
        }
        for (int i = 0; i < v; ++i) {
            if (!topology.is_dummy(i)) a.data()[i * v + i] = 1.0;
        }
        stack.subsets.push_back(symmetric_normalize(a, v));
        return stack;
    }

    // distance partition: self, parent direction (row = child aggregating
    // from its parent), child direction (row = parent aggregating from its
    // children).
    Tensor self({v, v});
    Tensor toward_parent({v, v});
    Tensor toward_child({v, v});
    for (int i = 0; i < v; ++i) {
        if (!topology.is_dummy(i)) self.data()[i * v + i] = 1.0;
    }
    for (const auto& [c, p] : topology.edges) {
        toward_parent.data()[c * v + p] = 1.0;
        toward_child.data()[p * v + c] = 1.0;
    }
    stack.subsets.push_back(symmetric_normalize(self, v));
    stack.subsets.push_back(symmetric_normalize(toward_parent, v));
    stack.subsets.push_back(symmetric_normalize(toward_child, v));
    return stack;
}

}  // namespace bharnet
