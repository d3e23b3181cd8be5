#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "adder/codec.hpp"
#include "adder/event.hpp"
#include "adder/frame.hpp"

namespace adder {

class TimestampRegression : public Error {
public:
    TimestampRegression(std::uint16_t x, std::uint16_t y, std::uint8_t c, std::uint32_t t, std::uint32_t last)
        : Error("timestamp regression at pixel (" + std::to_string(x) + "," + std::to_string(y) + "," +
                std::to_string(c) + "): " + std::to_string(t) + " < " + std::to_string(last)) {}
};

/// Holds the most recent event per pixel and channel. A pixel's display
/// value is 2^d over the gap between its last two events.
class Canvas {
public:
    explicit Canvas(const StreamParams& params);

    void apply(const Event& ev);
    void apply(std::span<const Event> events) {
        for (const auto& e : events) apply(e);
    }

    /// Snapshot; untouched pixels render 0.
    Frame frame_at(std::uint32_t ref_interval) const;
    Frame frame_at() const { return frame_at(params_.ref_interval); }

    const StreamParams& params() const { return params_; }

private:
    struct Cell {
        std::uint32_t last_t = 0;
        std::uint32_t prev_t = 0;
        Decimation d = kDZero;
        bool seen = false;
        std::uint8_t value = 0;  // display value at the stream's ref_interval
    };

    StreamParams params_;
    std::vector<Cell> cells_;
};

struct PlaybackFrame {
    std::uint64_t tick = 0;
    Frame frame;
};

/// Number of snapshots play() emits: ceil(duration_ticks * fps / tps).
std::uint64_t playback_frame_count(std::uint64_t duration_ticks, std::uint32_t tps, double fps);

/// Applies events in order and emits a snapshot at tick floor(k * tps / fps)
/// for k = 1..N, each including every event with t <= that tick.
void play(const DecodedStream& stream, double fps, const std::function<void(const PlaybackFrame&)>& sink);
std::vector<PlaybackFrame> play(const DecodedStream& stream, double fps);

}  // namespace adder
