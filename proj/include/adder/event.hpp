#pragma once

// ADΔER event representation: the event tuple, stream time model and the
// intensity arithmetic shared by the transcoder, codec and reconstruction.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace adder {

using Decimation = std::uint8_t;

/// Decimation sentinel meaning "zero intensity over the elapsed interval".
inline constexpr Decimation kDZero = 255;
/// Largest legal (non-sentinel) decimation exponent.
inline constexpr Decimation kDMax = 20;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Raised when an intensity is requested for a D_ZERO event; callers must
/// branch on the sentinel before doing arithmetic with d.
class SentinelDecimation : public Error {
public:
    SentinelDecimation() : Error("decimation is the D_ZERO sentinel") {}
};

struct Event {
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::uint8_t c = 0;
    Decimation d = 0;
    std::uint32_t t = 0;

    friend bool operator==(const Event&, const Event&) = default;
};

/// Canonical stream order: (t, y, x, c).
inline bool canonical_less(const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.c < b.c;
}

/// Appends `more` (canonically sorted) to `into` (canonically sorted) and
/// restores canonical order across the seam.
inline void append_canonical(std::vector<Event>& into, const std::vector<Event>& more) {
    const auto mid = std::ptrdiff_t(into.size());
    into.insert(into.end(), more.begin(), more.end());
    std::inplace_merge(into.begin(), into.begin() + mid, into.end(), canonical_less);
}

inline bool is_valid_decimation(Decimation d) { return d <= kDMax || d == kDZero; }

struct StreamParams {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t channels = 1;
    std::uint32_t tps = 0;           // ticks per second
    std::uint32_t ref_interval = 0;  // ticks per input frame
    std::uint32_t delta_t_max = 0;   // maximum inter-event gap, ticks
    std::uint8_t crf = 3;

    std::size_t pixel_count() const {
        return std::size_t(width) * height * channels;
    }

    friend bool operator==(const StreamParams&, const StreamParams&) = default;
};

/// Builds params for a framed source: tps = fps * ref_interval and
/// delta_t_max = dtm_multiple * ref_interval.
StreamParams make_params(std::uint16_t width, std::uint16_t height, std::uint8_t channels,
                         std::uint32_t fps, std::uint32_t ref_interval = 255,
                         std::uint32_t dtm_multiple = 30, std::uint8_t crf = 3);

/// Unreduced rational; intensity in units per tick.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    double value() const { return double(num) / double(den); }
};

/// Exactly 2^d / delta_t. Throws SentinelDecimation for D_ZERO and
/// InvalidArgument for delta_t == 0 or an out-of-range exponent.
Rational intensity_per_tick(Decimation d, std::uint64_t delta_t);

/// 8-bit display sample for an event: 0 for D_ZERO, otherwise
/// clamp(round(2^d * ref_interval / delta_t), 0, 255), rounding half away
/// from zero.
std::uint8_t display_value(Decimation d, std::uint64_t delta_t, std::uint32_t ref_interval);

/// Every violated StreamParams invariant, empty iff the params are valid.
std::vector<std::string> validate_params(const StreamParams& p);

/// Throws InvalidArgument listing all violations when the params are invalid.
void require_valid(const StreamParams& p);

}  // namespace adder
