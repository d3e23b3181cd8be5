#include "adder/protocol.hpp"

#include <json.hpp>
#include <algorithm>
#include <cmath>
#include <set>

namespace adder {

using nlohmann::json;

ControlMessage ControlMessage::from(const Command& cmd) {
    ControlMessage m;
    m.command = cmd;
    switch (cmd.kind) {
    case CommandKind::set_crf: m.kind = ControlKind::set_crf; break;
    case CommandKind::set_roi: m.kind = ControlKind::set_roi; break;
    case CommandKind::clear_roi: m.kind = ControlKind::clear_roi; break;
    case CommandKind::toggle_features: m.kind = ControlKind::toggle_features; break;
    case CommandKind::stop: m.kind = ControlKind::stop; break;
    }
    return m;
}

ControlMessage ControlMessage::open(std::string source) {
    ControlMessage m;
    m.kind = ControlKind::open;
    m.source = std::move(source);
    return m;
}

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> keys) {
    std::set<std::string> allowed{"cmd"};
    for (auto k : keys) allowed.insert(k);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ProtocolError("unexpected field \"" + it.key() + "\"");
    for (auto k : keys)
        if (!j.contains(k)) throw ProtocolError(std::string("missing field \"") + k + "\"");
}

std::int64_t get_int(const json& j, const char* key, std::int64_t lo, std::int64_t hi) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ProtocolError(std::string("field \"") + key + "\" must be an integer");
    const auto n = v.get<std::int64_t>();
    if (n < lo || n > hi)
        throw ProtocolError(std::string("field \"") + key + "\" out of range " + std::to_string(lo) + ".." +
                            std::to_string(hi));
    return n;
}

}  // namespace

ControlMessage parse_control(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("invalid json: ") + e.what());
    }
    if (!j.is_object()) throw ProtocolError("command must be a json object");
    if (!j.contains("cmd") || !j["cmd"].is_string()) throw ProtocolError("missing string field \"cmd\"");
    const auto cmd = j["cmd"].get<std::string>();

    if (cmd == "set_crf") {
        expect_keys(j, {"value"});
        return ControlMessage::from(Command::set_crf(std::uint8_t(get_int(j, "value", 0, 9))));
    }
    if (cmd == "set_roi") {
        expect_keys(j, {"x0", "y0", "x1", "y1"});
        RoiRect r;
        r.x0 = std::uint16_t(get_int(j, "x0", 0, 65535));
        r.y0 = std::uint16_t(get_int(j, "y0", 0, 65535));
        r.x1 = std::uint16_t(get_int(j, "x1", 0, 65535));
        r.y1 = std::uint16_t(get_int(j, "y1", 0, 65535));
        if (r.x0 > r.x1 || r.y0 > r.y1) throw ProtocolError("roi corners must satisfy x0<=x1 and y0<=y1");
        return ControlMessage::from(Command::set_roi(r));
    }
    if (cmd == "clear_roi") {
        expect_keys(j, {});
        return ControlMessage::from(Command::clear_roi());
    }
    if (cmd == "toggle_features") {
        expect_keys(j, {"on"});
        if (!j["on"].is_boolean()) throw ProtocolError("field \"on\" must be a boolean");
        return ControlMessage::from(Command::toggle_features(j["on"].get<bool>()));
    }
    if (cmd == "open") {
        expect_keys(j, {"source"});
        if (!j["source"].is_string() || j["source"].get<std::string>().empty())
            throw ProtocolError("field \"source\" must be a non-empty string");
        return ControlMessage::open(j["source"].get<std::string>());
    }
    if (cmd == "stop") {
        expect_keys(j, {});
        return ControlMessage::from(Command::stop());
    }
    throw ProtocolError("unknown command \"" + cmd + "\"");
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) out.emplace_back(line);
        pos = nl + 1;
    }
    return out;
}

std::string to_json(const ControlMessage& msg) {
    // ordered_json keeps the documented field order on the wire.
    nlohmann::ordered_json j;
    switch (msg.kind) {
    case ControlKind::set_crf:
        j["cmd"] = "set_crf";
        j["value"] = msg.command.crf;
        break;
    case ControlKind::set_roi:
        j["cmd"] = "set_roi";
        j["x0"] = msg.command.roi.x0;
        j["y0"] = msg.command.roi.y0;
        j["x1"] = msg.command.roi.x1;
        j["y1"] = msg.command.roi.y1;
        break;
    case ControlKind::clear_roi: j["cmd"] = "clear_roi"; break;
    case ControlKind::toggle_features:
        j["cmd"] = "toggle_features";
        j["on"] = msg.command.on;
        break;
    case ControlKind::open:
        j["cmd"] = "open";
        j["source"] = msg.source;
        break;
    case ControlKind::stop: j["cmd"] = "stop"; break;
    }
    return j.dump();
}

namespace {

json boxes_array(const std::vector<Box>& boxes) {
    json a = json::array();
    for (const auto& b : boxes) a.push_back({b.x0, b.y0, b.x1, b.y1});
    return a;
}

}  // namespace

std::string stats_json(const StatsSnapshot& s) {
    nlohmann::ordered_json j;
    auto& o = j["stats"];
    o["events_per_sec"] = s.events_per_sec;
    o["transcode_fps"] = s.transcode_fps;
    o["compressed_bytes_per_sec"] = s.compressed_bytes_per_sec;
    o["compressor_queue_depth"] = s.compressor_queue_depth;
    o["dropped_previews"] = s.dropped_previews;
    o["latest_boxes"] = boxes_array(s.latest_boxes);
    o["frames"] = s.frames;
    o["events_emitted"] = s.events_emitted;
    o["events_compressed"] = s.events_compressed;
    o["bytes_written"] = s.bytes_written;
    o["stream_tick"] = s.stream_tick;
    o["backpressure_waits"] = s.backpressure_waits;
    o["detections"] = s.detections;
    o["elapsed_s"] = s.elapsed_s;
    o["finished"] = s.finished;
    return j.dump();
}

std::string boxes_json(const std::vector<Box>& boxes) {
    json j;
    j["boxes"] = boxes_array(boxes);
    return j.dump();
}

std::string ack_json(const Ack& ack) {
    nlohmann::ordered_json j;
    j["ack"] = {{"seq", ack.seq}, {"apply_by_tick", ack.apply_by_tick}};
    return j.dump();
}

std::string error_json(std::string_view message) {
    json j;
    j["error"] = std::string(message);
    return j.dump();
}

std::vector<std::uint8_t> encode_preview(std::uint64_t tick, const Frame& frame) {
    if (frame.data.size() != std::size_t(frame.width) * frame.height * frame.channels)
        throw InvalidArgument("frame buffer does not match its geometry");
    std::vector<std::uint8_t> out(kPreviewHeaderSize + frame.data.size());
    for (int i = 0; i < 8; ++i) out[i] = std::uint8_t(tick >> (8 * i));
    out[8] = std::uint8_t(frame.width);
    out[9] = std::uint8_t(frame.width >> 8);
    out[10] = std::uint8_t(frame.height);
    out[11] = std::uint8_t(frame.height >> 8);
    out[12] = frame.channels;
    std::copy(frame.data.begin(), frame.data.end(), out.begin() + kPreviewHeaderSize);
    return out;
}

DecodedPreview decode_preview(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kPreviewHeaderSize)
        throw ProtocolError("preview message shorter than its " + std::to_string(kPreviewHeaderSize) +
                            "-byte header");
    DecodedPreview p;
    for (int i = 0; i < 8; ++i) p.tick |= std::uint64_t(bytes[i]) << (8 * i);
    const std::uint16_t w = std::uint16_t(bytes[8] | bytes[9] << 8);
    const std::uint16_t h = std::uint16_t(bytes[10] | bytes[11] << 8);
    const std::uint8_t ch = bytes[12];
    if (ch != 1 && ch != 3) throw ProtocolError("preview channels must be 1 or 3, got " + std::to_string(ch));
    const std::size_t want = std::size_t(w) * h * ch;
    if (bytes.size() - kPreviewHeaderSize != want)
        throw ProtocolError("preview payload is " + std::to_string(bytes.size() - kPreviewHeaderSize) +
                            " bytes, expected " + std::to_string(want));
    p.frame = Frame(w, h, ch);
    std::copy(bytes.begin() + kPreviewHeaderSize, bytes.end(), p.frame.data.begin());
    return p;
}

std::optional<ControlMessage> roi_drag(double sx, double sy, double ex, double ey, double scale,
                                       std::uint16_t plane_w, std::uint16_t plane_h) {
    if (!(scale > 0) || plane_w == 0 || plane_h == 0) throw InvalidArgument("bad display mapping");
    if (std::abs(ex - sx) < 3 && std::abs(ey - sy) < 3) return std::nullopt;
    auto map = [&](double v, std::uint16_t limit) {
        const double p = std::floor(std::max(0.0, v) * scale);
        return std::uint16_t(std::min(p, double(limit - 1)));
    };
    RoiRect r;
    r.x0 = map(std::min(sx, ex), plane_w);
    r.y0 = map(std::min(sy, ey), plane_h);
    r.x1 = map(std::max(sx, ex), plane_w);
    r.y1 = map(std::max(sy, ey), plane_h);
    return ControlMessage::from(Command::set_roi(r));
}

std::vector<std::uint8_t> paint_preview(const DecodedPreview& p, const std::optional<RoiRect>& roi,
                                        const std::vector<Box>& boxes) {
    const Frame& f = p.frame;
    std::vector<std::uint8_t> rgb(std::size_t(f.width) * f.height * 3);
    for (std::size_t i = 0, n = std::size_t(f.width) * f.height; i < n; ++i)
        for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = f.data[i * f.channels + (f.channels == 3 ? c : 0)];

    auto outline = [&](std::uint32_t x0, std::uint32_t y0, std::uint32_t x1, std::uint32_t y1, std::uint8_t r,
                       std::uint8_t g, std::uint8_t b) {
        if (f.width == 0 || f.height == 0 || x0 >= f.width || y0 >= f.height) return;
        x1 = std::min<std::uint32_t>(x1, f.width - 1u);
        y1 = std::min<std::uint32_t>(y1, f.height - 1u);
        auto put = [&](std::uint32_t x, std::uint32_t y) {
            auto* px = &rgb[(std::size_t(y) * f.width + x) * 3];
            px[0] = r, px[1] = g, px[2] = b;
        };
        for (auto x = x0; x <= x1; ++x) put(x, y0), put(x, y1);
        for (auto y = y0; y <= y1; ++y) put(x0, y), put(x1, y);
    };
    for (const auto& b : boxes) outline(b.x0, b.y0, b.x1, b.y1, 0, 255, 0);
    if (roi) outline(roi->x0, roi->y0, roi->x1, roi->y1, 255, 0, 0);
    return rgb;
}

}  // namespace adder
