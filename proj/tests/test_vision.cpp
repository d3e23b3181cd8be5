#include <doctest.h>

#include <algorithm>
#include <random>

#include "adder/vision.hpp"
#include "oracles.hpp"

using namespace adder;

namespace {

Frame random_image(std::mt19937& rng, int w, int h) {
    Frame f(std::uint16_t(w), std::uint16_t(h), 1);
    // Blocky noise yields a healthy number of corners.
    const int bs = 1 + int(rng() % 4);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) f.at(x, y) = std::uint8_t(((x / bs) * 7919 + (y / bs) * 104729 + rng() % 3) % 256);
    for (int i = 0; i < w * h / 4; ++i) f.at(rng() % w, rng() % h) = std::uint8_t(rng());
    return f;
}

}  // namespace

TEST_CASE("fast matches the brute-force segment test") {
    std::mt19937 rng(3);
    std::size_t total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto img = random_image(rng, 32, 32);
        const int thr = 10 + int(rng() % 40);
        const int n = 9 + int(rng() % 4);
        const auto got = fast_detect(img, thr, n);
        REQUIRE(got == oracle::fast_oracle(img, thr, n));
        total += got.size();
    }
    CHECK(total > 100);
    // Short arcs skip the compass pre-test.
    std::mt19937 r2(4);
    const auto img = random_image(r2, 24, 20);
    CHECK(fast_detect(img, 20, 5) == oracle::fast_oracle(img, 20, 5));
}

TEST_CASE("fast on a bright square finds its corners") {
    Frame f(32, 32, 1);
    for (int y = 10; y < 20; ++y)
        for (int x = 10; x < 20; ++x) f.at(x, y) = 200;
    const auto kps = fast_detect(f, 30);
    CHECK(kps == oracle::fast_oracle(f, 30, 9));
    REQUIRE_FALSE(kps.empty());
    for (const auto& k : kps) {
        const bool near_corner = (std::abs(k.x - 10) <= 2 || std::abs(k.x - 19) <= 2) &&
                                 (std::abs(k.y - 10) <= 2 || std::abs(k.y - 19) <= 2);
        CHECK(near_corner);
    }
    CHECK(fast_detect(Frame(16, 16, 1), 30).empty());
    CHECK_THROWS_AS(fast_detect(Frame(6, 16, 1), 30), InvalidArgument);
    CHECK_THROWS_AS(fast_detect(f, 0), InvalidArgument);
    CHECK_THROWS_AS(fast_detect(f, 30, 17), InvalidArgument);
}

TEST_CASE("dbscan matches the quadratic reference") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<Keypoint> pts(rng() % 120);
        const int span = 20 + int(rng() % 200);
        for (auto& p : pts) p = Keypoint{std::uint16_t(rng() % span), std::uint16_t(rng() % span)};
        const double eps = 1.0 + (rng() % 200) / 10.0;
        const std::size_t min_pts = 2 + rng() % 5;
        REQUIRE(dbscan(pts, eps, min_pts) == oracle::dbscan_oracle(pts, eps, min_pts));
    }
}

TEST_CASE("dbscan small examples") {
    std::vector<Keypoint> pts{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {50, 50}, {100, 0}, {101, 0}, {100, 1}, {101, 1}};
    const auto l = dbscan(pts, 1.5, 4);
    CHECK(l == std::vector<int>{0, 0, 0, 0, kNoise, 1, 1, 1, 1});
    CHECK(dbscan({}, 2.0, 3).empty());
    CHECK_THROWS_AS(dbscan(pts, 0.0, 3), InvalidArgument);
}

TEST_CASE("cluster boxes: hull, size filter, cap and ordering") {
    ClusterConfig cfg;
    cfg.min_cluster_size = 3;
    std::vector<Keypoint> pts{{1, 2}, {5, 9}, {3, 4}, {40, 40}, {41, 41}, {7, 7}};
    std::vector<int> labels{0, 0, 0, 1, 1, kNoise};
    auto boxes = clusters_to_boxes(pts, labels, cfg);
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0].bbox == Box{1, 2, 5, 9});
    CHECK(boxes[0].members.size() == 3);

    // 40 well separated 3x3 blobs of increasing size.
    std::vector<Keypoint> many;
    std::vector<int> ids;
    for (int b = 0; b < 40; ++b)
        for (int k = 0; k < 5 + b % 7; ++k) {
            many.push_back(Keypoint{std::uint16_t(b * 20 + k % 3), std::uint16_t(k / 3)});
            ids.push_back(b);
        }
    cfg.min_cluster_size = 5;
    boxes = clusters_to_boxes(many, ids, cfg);
    CHECK(boxes.size() == 25);
    for (std::size_t i = 1; i < boxes.size(); ++i) CHECK(boxes[i - 1].members.size() >= boxes[i].members.size());

    // Relabelling the clusters does not change the output.
    std::vector<int> perm(40);
    for (int i = 0; i < 40; ++i) perm[i] = (i * 17) % 40;
    std::vector<int> relabelled;
    for (int id : ids) relabelled.push_back(perm[id]);
    const auto again = clusters_to_boxes(many, relabelled, cfg);
    REQUIRE(again.size() == boxes.size());
    for (std::size_t i = 0; i < boxes.size(); ++i) CHECK(again[i].bbox == boxes[i].bbox);

    cfg.max_boxes = 0;
    CHECK_THROWS_AS(clusters_to_boxes(many, ids, cfg), InvalidArgument);
    cfg.max_boxes = 25;
    ids.pop_back();
    CHECK_THROWS_AS(clusters_to_boxes(many, ids, cfg), InvalidArgument);
}

TEST_CASE("detect_clusters never returns more than the cap") {
    std::mt19937 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        Frame f(160, 120, 1);
        for (auto& v : f.data) v = std::uint8_t(rng());
        DetectionConfig cfg;
        cfg.cluster.eps = 4;
        cfg.cluster.min_cluster_size = 2;
        CHECK(detect_clusters(f, cfg).size() <= 25);
    }
    CHECK(detect_clusters(Frame(4, 4, 1)).empty());
}
