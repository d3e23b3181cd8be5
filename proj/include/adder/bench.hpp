#pragma once

// Throughput matrix over resolution x channels x codec, run through the full
// session pipeline on synthetic clips.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "adder/codec.hpp"

namespace adder {

struct BenchResolution {
    std::string name;
    std::uint16_t width = 0;
    std::uint16_t height = 0;
};

struct BenchConfig {
    std::vector<BenchResolution> resolutions = {{"SD", 640, 360}, {"HD", 1280, 720}, {"FHD", 1920, 1080}};
    std::vector<std::uint8_t> channels = {1, 3};
    std::vector<CodecId> codecs = {CodecId::raw, CodecId::compressed};
    std::string pattern = "square";  // synth:// pattern
    std::uint64_t frames = 30;
    int repeats = 3;  // best-of
    std::uint8_t crf = 3;
    std::uint64_t seed = 7;
    std::filesystem::path scratch_dir;  // empty = system temp dir
};

struct BenchCell {
    std::string resolution;
    std::uint16_t width = 0, height = 0;
    std::uint8_t channels = 1;
    CodecId codec = CodecId::raw;
    std::uint64_t frames = 0;
    double fps = 0;             // frames / wall time from start to finalized file
    double transcode_fps = 0;   // frames / transcoder worker time
    double mean_batch_ms = 0, median_batch_ms = 0, max_batch_ms = 0;
    std::uint64_t events = 0;
    std::uint64_t bytes = 0;
};

struct OrderingCheck {
    std::string description;  // e.g. "SD gray raw >= SD color raw"
    double lhs = 0, rhs = 0;
    bool pass = false;
};

struct BenchReport {
    std::vector<BenchCell> cells;
    std::vector<OrderingCheck> checks;
    bool all_pass() const;
};

/// Runs one cell: the best-of-`repeats` run by wall-clock FPS.
BenchCell run_bench_cell(const BenchConfig& cfg, const BenchResolution& res, std::uint8_t channels, CodecId codec);
BenchReport run_bench(const BenchConfig& cfg);

/// gray >= color, lower resolution >= higher, raw >= compressed.
std::vector<OrderingCheck> check_orderings(const std::vector<BenchCell>& cells);

std::string bench_csv(const BenchReport& report);
std::string bench_table(const BenchReport& report);

}  // namespace adder
