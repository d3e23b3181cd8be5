#include "adder/vision.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>

namespace adder {

void validate(const ClusterConfig& cfg) {
    if (!(cfg.eps > 0)) throw InvalidArgument("eps must be positive");
    if (cfg.min_pts < 2) throw InvalidArgument("min_pts must be at least 2");
    if (cfg.max_boxes < 1) throw InvalidArgument("max_boxes must be at least 1");
}

namespace {

// True when `mask` (16 ring bits) has a circular run of at least n ones.
bool has_arc(std::uint32_t mask, int n) {
    if (mask == 0) return false;
    if (mask == 0xFFFF) return true;
    std::uint32_t run = mask | (mask << 16);  // unrolled twice to handle wrap
    int best = 0, cur = 0;
    for (int i = 0; i < 32; ++i) {
        if (run & (1u << i)) {
            if (++cur >= n) return true;
        } else {
            cur = 0;
        }
        best = std::max(best, cur);
    }
    return best >= n;
}

}  // namespace

std::vector<Keypoint> fast_detect(const Frame& image, int threshold, int arc_len) {
    if (image.width < 7 || image.height < 7) throw InvalidArgument("fast_detect needs at least a 7x7 image");
    if (threshold < 1) throw InvalidArgument("fast threshold must be at least 1");
    if (arc_len < 1 || arc_len > 16) throw InvalidArgument("arc length must be in 1..=16");
    const int w = image.width, h = image.height, ch = image.channels;
    const std::uint8_t* px = image.data.data();
    int offs[16];
    for (int k = 0; k < 16; ++k) offs[k] = (kFastRing[k][1] * w + kFastRing[k][0]) * ch;

    std::vector<Keypoint> out;
    for (int y = 3; y < h - 3; ++y) {
        for (int x = 3; x < w - 3; ++x) {
            const std::uint8_t* c = px + (std::size_t(y) * w + x) * ch;
            const int p = *c;
            const int hi = p + threshold, lo = p - threshold;
            // Any run of >= 9 covers at least two of the four compass pixels.
            if (arc_len >= 9) {
                int b = 0, d = 0;
                for (int k = 0; k < 16; k += 4) {
                    const int v = c[offs[k]];
                    b += v > hi;
                    d += v < lo;
                }
                if (b < 2 && d < 2) continue;
            }
            std::uint32_t bright = 0, dark = 0;
            for (int k = 0; k < 16; ++k) {
                const int v = c[offs[k]];
                if (v > hi) bright |= 1u << k;
                if (v < lo) dark |= 1u << k;
            }
            if (has_arc(bright, arc_len) || has_arc(dark, arc_len))
                out.push_back(Keypoint{std::uint16_t(x), std::uint16_t(y)});
        }
    }
    return out;
}

std::vector<int> dbscan(const std::vector<Keypoint>& points, double eps, std::size_t min_pts) {
    if (!(eps > 0)) throw InvalidArgument("eps must be positive");
    const std::size_t n = points.size();
    std::vector<int> labels(n, kNoise);
    if (n == 0) return labels;

    // Uniform grid with cell size eps; neighbor lists come out in index order.
    const double cell = eps;
    auto key = [](std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xFFFFFFFF); };
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> grid;
    grid.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i)
        grid[key(std::int64_t(points[i].x / cell), std::int64_t(points[i].y / cell))].push_back(i);
    const double eps2 = eps * eps;
    auto neighbors = [&](std::uint32_t i, std::vector<std::uint32_t>& out) {
        out.clear();
        const auto cx = std::int64_t(points[i].x / cell), cy = std::int64_t(points[i].y / cell);
        for (std::int64_t dy = -1; dy <= 1; ++dy)
            for (std::int64_t dx = -1; dx <= 1; ++dx) {
                auto it = grid.find(key(cx + dx, cy + dy));
                if (it == grid.end()) continue;
                for (auto j : it->second) {
                    const double ddx = double(points[i].x) - points[j].x;
                    const double ddy = double(points[i].y) - points[j].y;
                    if (ddx * ddx + ddy * ddy <= eps2) out.push_back(j);
                }
            }
        std::sort(out.begin(), out.end());
    };

    std::vector<char> visited(n, 0);
    std::vector<std::uint32_t> nb, nb2;
    int next_id = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (visited[i]) continue;
        visited[i] = 1;
        neighbors(i, nb);
        if (nb.size() < min_pts) continue;  // noise unless a cluster claims it later
        const int id = next_id++;
        labels[i] = id;
        std::deque<std::uint32_t> seeds(nb.begin(), nb.end());
        while (!seeds.empty()) {
            const std::uint32_t j = seeds.front();
            seeds.pop_front();
            if (labels[j] == kNoise) labels[j] = id;
            if (visited[j]) continue;
            visited[j] = 1;
            neighbors(j, nb2);
            if (nb2.size() >= min_pts) seeds.insert(seeds.end(), nb2.begin(), nb2.end());
        }
    }
    return labels;
}

std::vector<FeatureCluster> clusters_to_boxes(const std::vector<Keypoint>& points, const std::vector<int>& labels,
                                              const ClusterConfig& cfg) {
    validate(cfg);
    if (points.size() != labels.size()) throw InvalidArgument("labels do not match points");
    int max_id = -1;
    for (int l : labels) max_id = std::max(max_id, l);
    std::vector<FeatureCluster> clusters(std::size_t(max_id + 1));
    for (std::size_t i = 0; i < points.size(); ++i)
        if (labels[i] >= 0) clusters[std::size_t(labels[i])].members.push_back(points[i]);

    std::vector<FeatureCluster> out;
    for (auto& c : clusters) {
        if (c.members.empty() || c.members.size() < cfg.min_cluster_size) continue;
        Box b{std::numeric_limits<std::uint16_t>::max(), std::numeric_limits<std::uint16_t>::max(), 0, 0};
        for (const auto& m : c.members) {
            b.x0 = std::min(b.x0, m.x);
            b.y0 = std::min(b.y0, m.y);
            b.x1 = std::max(b.x1, m.x);
            b.y1 = std::max(b.y1, m.y);
        }
        c.bbox = b;
        out.push_back(std::move(c));
    }
    std::stable_sort(out.begin(), out.end(), [](const FeatureCluster& a, const FeatureCluster& b) {
        if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
        if (a.bbox.area() != b.bbox.area()) return a.bbox.area() > b.bbox.area();
        if (a.bbox.y0 != b.bbox.y0) return a.bbox.y0 < b.bbox.y0;
        return a.bbox.x0 < b.bbox.x0;
    });
    if (out.size() > cfg.max_boxes) out.resize(cfg.max_boxes);
    return out;
}

std::vector<FeatureCluster> detect_clusters(const Frame& frame, const DetectionConfig& cfg) {
    if (frame.width < 7 || frame.height < 7) return {};
    const auto points = fast_detect(frame, cfg.fast_threshold, cfg.arc_len);
    const auto labels = dbscan(points, cfg.cluster.eps, cfg.cluster.min_pts);
    return clusters_to_boxes(points, labels, cfg.cluster);
}

}  // namespace adder
