#include "adder/reconstruct.hpp"

#include <cmath>

namespace adder {

Canvas::Canvas(const StreamParams& params) : params_(params), cells_(params.pixel_count()) {
    require_valid(params);
}

void Canvas::apply(const Event& ev) {
    if (ev.x >= params_.width || ev.y >= params_.height || ev.c >= params_.channels)
        throw InvalidArgument("event outside canvas");
    if (!is_valid_decimation(ev.d)) throw InvalidArgument("invalid decimation " + std::to_string(ev.d));
    Cell& cell = cells_[(std::size_t(ev.y) * params_.width + ev.x) * params_.channels + ev.c];
    if (cell.seen && ev.t < cell.last_t) throw TimestampRegression(ev.x, ev.y, ev.c, ev.t, cell.last_t);
    cell.prev_t = cell.seen ? cell.last_t : 0;
    cell.last_t = ev.t;
    cell.d = ev.d;
    cell.seen = true;
    cell.value = display_value(ev.d, ev.t > cell.prev_t ? ev.t - cell.prev_t : 1, params_.ref_interval);
}

Frame Canvas::frame_at(std::uint32_t ref_interval) const {
    Frame f(params_.width, params_.height, params_.channels);
    if (ref_interval == params_.ref_interval) {
        for (std::size_t i = 0; i < cells_.size(); ++i) f.data[i] = cells_[i].value;
        return f;
    }
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const Cell& c = cells_[i];
        if (!c.seen) continue;
        const std::uint64_t dt = c.last_t > c.prev_t ? c.last_t - c.prev_t : 1;
        f.data[i] = display_value(c.d, dt, ref_interval);
    }
    return f;
}

std::uint64_t playback_frame_count(std::uint64_t duration_ticks, std::uint32_t tps, double fps) {
    if (!(fps > 0) || tps == 0) throw InvalidArgument("playback rate must be positive");
    // Round before ceil so 153000 * 30 / 76500 lands on exactly 60.
    const double frames = double(duration_ticks) * fps / double(tps);
    return std::uint64_t(std::ceil(frames - 1e-9));
}

void play(const DecodedStream& stream, double fps, const std::function<void(const PlaybackFrame&)>& sink) {
    const auto& p = stream.params;
    const std::uint64_t duration = stream.events.empty() ? 0 : stream.events.back().t;
    const std::uint64_t n = playback_frame_count(duration, p.tps, fps);
    Canvas canvas(p);
    std::size_t next = 0;
    for (std::uint64_t k = 1; k <= n; ++k) {
        const auto tick = std::uint64_t(std::floor(double(k) * double(p.tps) / fps + 1e-9));
        while (next < stream.events.size() && stream.events[next].t <= tick) canvas.apply(stream.events[next++]);
        sink(PlaybackFrame{tick, canvas.frame_at()});
    }
}

std::vector<PlaybackFrame> play(const DecodedStream& stream, double fps) {
    std::vector<PlaybackFrame> out;
    play(stream, fps, [&](const PlaybackFrame& f) { out.push_back(f); });
    return out;
}

}  // namespace adder
