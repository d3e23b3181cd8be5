#pragma once

// Wire formats of the local control endpoint: JSON messages on /ctl and
// binary preview frames on /preview.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adder/event.hpp"
#include "adder/frame.hpp"
#include "adder/pipeline.hpp"
#include "adder/vision.hpp"

namespace adder {

class ProtocolError : public Error {
public:
    using Error::Error;
};

enum class ControlKind { set_crf, set_roi, clear_roi, toggle_features, open, stop };

struct ControlMessage {
    ControlKind kind = ControlKind::stop;
    Command command;     // all kinds except open
    std::string source;  // open only

    static ControlMessage from(const Command& cmd);
    static ControlMessage open(std::string source);
};

/// Parses one command object. Rejects unknown commands, missing or extra
/// fields, non-integer values and out-of-range numbers.
ControlMessage parse_control(std::string_view text);

/// Splits a newline-delimited message into its non-blank lines.
std::vector<std::string> split_lines(std::string_view text);

/// Compact single-line JSON for a command, the exact form clients send.
std::string to_json(const ControlMessage& msg);

std::string stats_json(const StatsSnapshot& s);
std::string boxes_json(const std::vector<Box>& boxes);
std::string ack_json(const Ack& ack);
std::string error_json(std::string_view message);

inline constexpr std::size_t kPreviewHeaderSize = 13;

/// u64 tick, u16 width, u16 height, u8 channels, then row-major samples, all
/// little-endian.
std::vector<std::uint8_t> encode_preview(std::uint64_t tick, const Frame& frame);

struct DecodedPreview {
    std::uint64_t tick = 0;
    Frame frame;
};
/// Throws ProtocolError on a short header, channels outside {1,3}, or a
/// payload length other than width * height * channels.
DecodedPreview decode_preview(std::span<const std::uint8_t> bytes);

// Client-side helpers shared by anything that drives /ctl from a display.

/// Maps a drag on a display to a set_roi command: corners normalized, scaled
/// by `scale` (plane px per display px), floored and clipped to the plane.
/// Drags shorter than 3 display px on both axes are clicks and yield nothing.
std::optional<ControlMessage> roi_drag(double sx, double sy, double ex, double ey, double scale,
                                       std::uint16_t plane_w, std::uint16_t plane_h);

/// RGB bitmap for a preview: gray expanded to three channels, then the ROI
/// outlined in red and boxes in green.
std::vector<std::uint8_t> paint_preview(const DecodedPreview& p, const std::optional<RoiRect>& roi,
                                        const std::vector<Box>& boxes);

}  // namespace adder
