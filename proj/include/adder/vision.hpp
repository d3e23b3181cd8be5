#pragma once

// FAST segment-test corners and DBSCAN clustering of the corners into
// bounding boxes.

#include <cstdint>
#include <optional>
#include <vector>

#include "adder/event.hpp"
#include "adder/frame.hpp"

namespace adder {

struct Keypoint {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// Inclusive box.
struct Box {
    std::uint16_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    std::uint64_t area() const { return std::uint64_t(x1 - x0 + 1) * (y1 - y0 + 1); }
    friend bool operator==(const Box&, const Box&) = default;
};

struct ClusterConfig {
    double eps = 16.0;
    std::size_t min_pts = 4;
    std::size_t min_cluster_size = 5;
    std::size_t max_boxes = 25;
};

void validate(const ClusterConfig& cfg);

struct FeatureCluster {
    std::vector<Keypoint> members;
    Box bbox;
};

/// Offsets of the 16-pixel Bresenham circle of radius 3, clockwise from the top.
inline constexpr int kFastRing[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                         {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};

/// Every pixel (3-pixel margin) with at least `arc_len` contiguous ring
/// pixels all brighter than p + threshold or all darker than p - threshold.
/// Sorted by (y, x). Uses channel 0 of multi-channel frames.
std::vector<Keypoint> fast_detect(const Frame& image, int threshold, int arc_len = 9);

inline constexpr int kNoise = -1;

/// DBSCAN labels (cluster id, or kNoise). min_pts counts the point itself.
/// Cluster ids follow first-touch order of the input scan; a border point
/// joins the first cluster that reaches it.
std::vector<int> dbscan(const std::vector<Keypoint>& points, double eps, std::size_t min_pts);

/// Drops noise and small clusters, orders by size (then bbox area, then
/// top-left corner) and keeps at most max_boxes.
std::vector<FeatureCluster> clusters_to_boxes(const std::vector<Keypoint>& points, const std::vector<int>& labels,
                                              const ClusterConfig& cfg);

struct DetectionConfig {
    int fast_threshold = 30;
    int arc_len = 9;
    ClusterConfig cluster;
};

std::vector<FeatureCluster> detect_clusters(const Frame& frame, const DetectionConfig& cfg = {});

}  // namespace adder
