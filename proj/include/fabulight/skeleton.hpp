#pragma once

#include <array>
#include <cstdio>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "fabulight/common.hpp"

namespace fabulight {

enum class BodyVariant { whole, upper };

inline const char* to_string(BodyVariant v) { return v == BodyVariant::whole ? "whole" : "upper"; }

inline constexpr std::size_t kWholeBodyJoints = 17;
inline constexpr std::size_t kUpperBodyJoints = 11;
inline constexpr double kAdjacencyEps = 0.001;

inline const std::array<const char*, kWholeBodyJoints>& joint_names() {
    static const std::array<const char*, kWholeBodyJoints> names = {
        "nose",          "left_eye",       "right_eye",  "left_ear",   "right_ear",
        "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
        "left_wrist",    "right_wrist",    "left_hip",   "right_hip",
        "left_knee",     "right_knee",     "left_ankle", "right_ankle"};
    return names;
}

// COCO-keypoint skeleton with the canonical drawing-order edge list. The
// upper-body variant keeps the first 11 joints and every edge among them.
struct SkeletonTopology {
    BodyVariant variant = BodyVariant::whole;
    std::size_t n_joints = kWholeBodyJoints;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::size_t central = 0;  // nose

    std::vector<std::vector<std::size_t>> adjacency_lists() const {
        std::vector<std::vector<std::size_t>> adj(n_joints);
        for (const auto& [a, b] : edges) {
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        return adj;
    }
};

inline SkeletonTopology build_topology(BodyVariant variant) {
    static const std::vector<std::pair<std::size_t, std::size_t>> whole_edges = {
        {0, 1},  {0, 2},  {1, 2},  {1, 3},   {2, 4},   {3, 5},   {4, 6},
        {5, 6},  {5, 7},  {7, 9},  {6, 8},   {8, 10},  {5, 11},  {6, 12},
        {11, 12}, {11, 13}, {13, 15}, {12, 14}, {14, 16}};
    SkeletonTopology topo;
    topo.variant = variant;
    topo.n_joints = variant == BodyVariant::whole ? kWholeBodyJoints : kUpperBodyJoints;
    for (const auto& e : whole_edges)
        if (e.first < topo.n_joints && e.second < topo.n_joints) topo.edges.push_back(e);
    return topo;
}

// Shortest-path hop counts from src over the intra-frame edge set.
inline std::vector<std::size_t> hop_distances_from(const SkeletonTopology& topo, std::size_t src) {
    if (src >= topo.n_joints) throw dimension_error("hop_distances_from: joint index out of range");
    const auto adj = topo.adjacency_lists();
    constexpr auto unreached = static_cast<std::size_t>(-1);
    std::vector<std::size_t> dist(topo.n_joints, unreached);
    std::queue<std::size_t> frontier;
    dist[src] = 0;
    frontier.push(src);
    while (!frontier.empty()) {
        const std::size_t u = frontier.front();
        frontier.pop();
        for (const std::size_t v : adj[u])
            if (dist[v] == unreached) {
                dist[v] = dist[u] + 1;
                frontier.push(v);
            }
    }
    for (const std::size_t d : dist)
        if (d == unreached) throw state_error("skeleton graph is not connected");
    return dist;
}

inline std::size_t hop_distance(const SkeletonTopology& topo, std::size_t i, std::size_t j) {
    if (j >= topo.n_joints) throw dimension_error("hop_distance: joint index out of range");
    return hop_distances_from(topo, i)[j];
}

// The 2R+1 spatial-configuration partition matrices and their
// degree-normalized counterparts. Matrices are row-major n x n; index
// r + R holds partition r, so entry 0 is the most centripetal one.
struct PartitionedAdjacency {
    std::size_t radius = 1;
    std::size_t n = 0;
    double eps = kAdjacencyEps;
    std::vector<std::vector<double>> a;  // binary
    std::vector<std::vector<double>> b;  // normalized, the learnable initialization

    std::size_t partitions() const { return 2 * radius + 1; }
};

// B = D^{-1/2} A D^{-1/2} with D_ii = row sum + eps; eps keeps empty rows
// from dividing by zero.
inline std::vector<double> normalize_adjacency(const std::vector<double>& a, std::size_t n, double eps) {
    if (a.size() != n * n) throw dimension_error("normalize_adjacency: matrix size mismatch");
    if (!(eps > 0.0)) throw config_error("normalize_adjacency: eps must be positive");
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) row_sum += a[i * n + k];
        inv_sqrt[i] = 1.0 / std::sqrt(row_sum + eps);
    }
    std::vector<double> b(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) b[i * n + j] = inv_sqrt[i] * a[i * n + j] * inv_sqrt[j];
    return b;
}

// Partition r < 0 takes ordered pairs moving toward the central node (ties
// included), r > 0 those moving away, with |r| as the hop distance.
inline PartitionedAdjacency build_partition(const SkeletonTopology& topo, std::size_t radius) {
    if (radius != 1 && radius != 2) throw config_error("build_partition: radius must be 1 or 2");
    const std::size_t n = topo.n_joints;

    std::vector<std::vector<std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = hop_distances_from(topo, i);
    const std::vector<std::size_t>& to_center = dist[topo.central];

    PartitionedAdjacency part;
    part.radius = radius;
    part.n = n;
    for (std::int64_t r = -static_cast<std::int64_t>(radius); r <= static_cast<std::int64_t>(radius); ++r) {
        std::vector<double> mat(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (r == 0) {
                    if (i == j) mat[i * n + j] = 1.0;
                    continue;
                }
                if (dist[i][j] != static_cast<std::size_t>(std::abs(r))) continue;
                if (r < 0 && to_center[i] <= to_center[j]) mat[i * n + j] = 1.0;
                if (r > 0 && to_center[i] > to_center[j]) mat[i * n + j] = 1.0;
            }
        part.b.push_back(normalize_adjacency(mat, n, part.eps));
        part.a.push_back(std::move(mat));
    }
    return part;
}

// Human-readable dump of a topology and its partition matrices.
inline std::string render_graph_report(const SkeletonTopology& topo, const PartitionedAdjacency& part) {
    std::string out;
    out += "skeleton variant: ";
    out += to_string(topo.variant);
    out += "\njoints: " + std::to_string(topo.n_joints) + "\n";
    for (std::size_t i = 0; i < topo.n_joints; ++i)
        out += "  [" + std::to_string(i) + "] " + joint_names()[i] + (i == topo.central ? "  (central)" : "") + "\n";
    out += "edges: " + std::to_string(topo.edges.size()) + "\n";
    for (const auto& [a, b] : topo.edges)
        out += std::string("  ") + joint_names()[a] + " -- " + joint_names()[b] + "\n";
    out += "partition radius R = " + std::to_string(part.radius) + "\n";
    for (std::size_t k = 0; k < part.partitions(); ++k) {
        const auto r = static_cast<std::int64_t>(k) - static_cast<std::int64_t>(part.radius);
        out += "A[r=" + std::to_string(r) + "]\n";
        for (std::size_t i = 0; i < part.n; ++i) {
            out += "  ";
            for (std::size_t j = 0; j < part.n; ++j) out += part.a[k][i * part.n + j] > 0.5 ? "1" : ".";
            out += "\n";
        }
        out += "B[r=" + std::to_string(r) + "]\n";
        for (std::size_t i = 0; i < part.n; ++i) {
            out += " ";
            for (std::size_t j = 0; j < part.n; ++j) {
                char buf[16];
                std::snprintf(buf, sizeof(buf), " %.6f", part.b[k][i * part.n + j]);
                out += buf;
            }
            out += "\n";
        }
    }
    return out;
}

}  // namespace fabulight
