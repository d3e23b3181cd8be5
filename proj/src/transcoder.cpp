#include "adder/transcoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace adder {

bool roi_fits(const RoiRect& roi, const StreamParams& p) {
    return roi.x0 <= roi.x1 && roi.y0 <= roi.y1 && roi.x1 < p.width && roi.y1 < p.height;
}

void validate_config(const TranscoderConfig& cfg) {
    require_valid(cfg.params);
    if (cfg.d_max > kDMax) throw InvalidArgument("d_max above " + std::to_string(kDMax));
    if (cfg.feature_interval < 1) throw InvalidArgument("feature_interval >= 1");
    if (cfg.roi && !roi_fits(*cfg.roi, cfg.params)) throw InvalidArgument("roi outside plane");
    if (cfg.mode == SourceMode::dvs && cfg.params.channels != 1)
        throw InvalidArgument("dvs sources are single-channel");
}

std::uint8_t effective_crf(const TranscoderConfig& cfg, std::uint32_t x, std::uint32_t y) {
    if (x >= cfg.params.width || y >= cfg.params.height)
        throw InvalidArgument("pixel (" + std::to_string(x) + "," + std::to_string(y) +
                              ") outside plane");
    if (cfg.roi && cfg.roi->contains(x, y)) return 0;
    return cfg.params.crf;
}

Decimation next_d(double measured_rate, std::uint8_t crf_eff, const StreamParams& params,
                  Decimation d_max) {
    const double ladder = double(params.ref_interval) * double(std::uint64_t{1} << crf_eff);
    // Aim at half of delta_t_max at most: a smoothed rate that overshoots
    // the true average would otherwise run into cap events, whose retained
    // residual inflates the following interval.
    const double gap = std::min(ladder, double(params.delta_t_max) / 2);
    const double target = std::max(1.0, measured_rate * gap);
    // ilogb is exact floor(log2) for finite x >= 1.
    const int d = std::ilogb(target);
    return Decimation(std::clamp(d, 0, int(d_max)));
}

Transcoder::Transcoder(TranscoderConfig cfg, DvsSourceConfig dvs) : cfg_(std::move(cfg)), dvs_(dvs) {
    validate_config(cfg_);
    if (!(dvs_.theta > 0)) throw InvalidArgument("theta must be positive");
    limits_.scale = std::uint64_t(cfg_.params.ref_interval) * kSubUnits;
    limits_.delta_t_max = cfg_.params.delta_t_max;
    limits_.d_max = cfg_.d_max;
    const std::size_t n = cfg_.params.pixel_count();
    pixels_.resize(n);
    held_rate_.assign(n, 0);
    shown_.assign(n, -1);
    if (cfg_.mode == SourceMode::dvs) {
        level_.assign(n, std::clamp(dvs_.initial_level, 0.0, 255.0));
        pos_.assign(n, 0);
    }
}

void Transcoder::require_live() const {
    if (terminated_) throw Error("transcoder already flushed");
}

const PixelState& Transcoder::pixel(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
    if (x >= cfg_.params.width || y >= cfg_.params.height || c >= cfg_.params.channels)
        throw InvalidArgument("pixel outside plane");
    return pixels_[slot(x, y, c)];
}

double Transcoder::dvs_level(std::uint32_t x, std::uint32_t y) const {
    if (cfg_.mode != SourceMode::dvs) throw Error("not a dvs transcoder");
    if (x >= cfg_.params.width || y >= cfg_.params.height) throw InvalidArgument("pixel outside plane");
    return level_[slot(x, y, 0)];
}

void Transcoder::set_crf(std::uint8_t crf) {
    if (crf > 9) throw InvalidArgument("crf must be in 0..=9");
    cfg_.params.crf = crf;
}

void Transcoder::set_roi(std::optional<RoiRect> roi) {
    if (roi && !roi_fits(*roi, cfg_.params)) throw InvalidArgument("roi outside plane");
    cfg_.roi = roi;
}

bool Transcoder::flush_redundant(std::size_t i, std::uint64_t end_t) const {
    if (shown_[i] < 0) return false;
    const auto& st = pixels_[i];
    const std::uint64_t span = end_t - st.last_t;
    // The last crossing happened somewhere in [last_t, last_t + 1), so the
    // pending average lies between acc/span and acc/(span - 1).
    const double units = double(st.acc) / double(limits_.scale) * cfg_.params.ref_interval;
    const double lo = std::min(255.0, std::floor(units / double(span) + 0.5));
    const double hi = span > 1 ? std::min(255.0, std::floor(units / double(span - 1) + 0.5)) : 255.0;
    return shown_[i] + 1 >= lo && shown_[i] - 1 <= hi;
}

void Transcoder::integrate_pixel(std::size_t i, std::uint64_t rate, std::uint64_t from,
                                 std::uint64_t to, std::vector<Event>& out) {
    const auto& p = cfg_.params;
    const std::uint32_t c = std::uint32_t(i % p.channels);
    const std::uint32_t xy = std::uint32_t(i / p.channels);
    const std::uint32_t x = xy % p.width;
    const std::uint32_t y = xy / p.width;
    auto policy = [&](const PixelState& s) {
        const std::uint8_t crf = (cfg_.roi && cfg_.roi->contains(x, y)) ? 0 : p.crf;
        return next_d(s.running_rate, crf, p, cfg_.d_max);
    };
    auto emit = [&](Decimation d, std::uint64_t t) {
        if (t > std::numeric_limits<std::uint32_t>::max()) throw Error("timestamp exceeds 32-bit tick range");
        out.push_back(Event{std::uint16_t(x), std::uint16_t(y), std::uint8_t(c), d, std::uint32_t(t)});
        // What a player now shows for this pixel; last_t is still the previous event.
        const std::uint64_t prev = pixels_[i].last_t;
        shown_[i] = display_value(d, t > prev ? t - prev : 1, p.ref_interval);
    };
    integrate(pixels_[i], rate, to - from, from, limits_, policy, emit);
}

std::vector<Event> Transcoder::transcode_frame(const Frame& frame, std::uint64_t frame_index) {
    require_live();
    const auto& p = cfg_.params;
    if (cfg_.mode != SourceMode::framed) throw Error("transcode_frame on a dvs transcoder");
    if (frame.width != p.width || frame.height != p.height || frame.channels != p.channels)
        throw InvalidArgument("frame is " + std::to_string(frame.width) + "x" +
                              std::to_string(frame.height) + "x" + std::to_string(frame.channels) +
                              ", stream is " + std::to_string(p.width) + "x" +
                              std::to_string(p.height) + "x" + std::to_string(p.channels));
    if (frame_index < next_frame_)
        throw InvalidArgument("frame index regression: got " + std::to_string(frame_index) +
                              ", expected " + std::to_string(next_frame_));
    if (frame_index > next_frame_)
        throw InvalidArgument("frame index gap: got " + std::to_string(frame_index) + ", expected " +
                              std::to_string(next_frame_));

    const std::uint64_t base = frame_index * p.ref_interval;
    const std::uint64_t end = base + p.ref_interval;
    const double inv_ref = 1.0 / p.ref_interval;
    std::vector<Event> out;
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        const std::uint8_t s = frame.data[i];
        const double measured = s * inv_ref;
        auto& st = pixels_[i];
        st.running_rate = frame_index == 0 ? measured : 0.5 * measured + 0.5 * st.running_rate;
        held_rate_[i] = std::uint64_t(s) * kSubUnits;
        integrate_pixel(i, held_rate_[i], base, end, out);
    }
    clock_ = end;
    ++next_frame_;
    std::sort(out.begin(), out.end(), canonical_less);
    return out;
}

void Transcoder::sweep_dvs(std::uint64_t to) {
    const double inv_ref = 1.0 / cfg_.params.ref_interval;
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        if (pos_[i] >= to) continue;
        auto& st = pixels_[i];
        st.running_rate = 0.5 * level_[i] * inv_ref + 0.5 * st.running_rate;
        const auto rate = std::uint64_t(std::llround(level_[i] * double(kSubUnits)));
        integrate_pixel(i, rate, pos_[i], to, pending_);
        pos_[i] = to;
    }
    watermark_ = std::max(watermark_, to);
}

std::vector<Event> Transcoder::release_dvs(std::uint64_t watermark) {
    std::sort(pending_.begin(), pending_.end(), canonical_less);
    auto split = std::upper_bound(pending_.begin(), pending_.end(), watermark,
                                  [](std::uint64_t w, const Event& e) { return w < e.t; });
    std::vector<Event> out(pending_.begin(), split);
    pending_.erase(pending_.begin(), split);
    return out;
}

std::vector<Event> Transcoder::advance_to(std::uint64_t tick) {
    require_live();
    if (cfg_.mode != SourceMode::dvs) throw Error("advance_to on a framed transcoder");
    const std::uint64_t ref = cfg_.params.ref_interval;
    for (std::uint64_t b = (watermark_ / ref + 1) * ref; b <= tick; b += ref) sweep_dvs(b);
    clock_ = std::max(clock_, tick);
    return release_dvs(watermark_);
}

std::vector<Event> Transcoder::ingest_dvs(const DvsEvent& ev, const DvsSourceConfig& cfg) {
    if (!(cfg.theta > 0)) throw InvalidArgument("theta must be positive");
    dvs_.theta = cfg.theta;
    return ingest_dvs(ev);
}

std::vector<Event> Transcoder::ingest_dvs(const DvsEvent& ev) {
    require_live();
    const auto& p = cfg_.params;
    if (cfg_.mode != SourceMode::dvs) throw Error("ingest_dvs on a framed transcoder");
    if (ev.t_us < last_t_us_)
        throw InvalidArgument("dvs timestamp regression: " + std::to_string(ev.t_us) + " < " +
                              std::to_string(last_t_us_));
    if (ev.x >= p.width || ev.y >= p.height)
        throw InvalidArgument("dvs event at (" + std::to_string(ev.x) + "," + std::to_string(ev.y) +
                              ") outside plane");
    if (ev.p != 1 && ev.p != -1) throw InvalidArgument("dvs polarity must be +1 or -1");
    last_t_us_ = ev.t_us;

    const auto tick = std::uint64_t((unsigned __int128)ev.t_us * p.tps / 1'000'000u);
    const std::uint64_t ref = p.ref_interval;
    for (std::uint64_t b = (watermark_ / ref + 1) * ref; b <= tick; b += ref) sweep_dvs(b);

    const std::size_t i = slot(ev.x, ev.y, 0);
    if (tick > pos_[i]) {
        auto& st = pixels_[i];
        st.running_rate = 0.5 * level_[i] / ref + 0.5 * st.running_rate;
        const auto rate = std::uint64_t(std::llround(level_[i] * double(kSubUnits)));
        integrate_pixel(i, rate, pos_[i], tick, pending_);
        pos_[i] = tick;
    }
    level_[i] = std::clamp(level_[i] * std::exp(ev.p * dvs_.theta), 0.0, 255.0);
    clock_ = std::max(clock_, tick);
    return release_dvs(watermark_);
}

std::vector<Event> Transcoder::flush(std::uint64_t end_t) {
    require_live();
    if (end_t < clock_)
        throw InvalidArgument("flush tick " + std::to_string(end_t) + " precedes clock " +
                              std::to_string(clock_));
    std::vector<Event> out;
    if (cfg_.mode == SourceMode::dvs) {
        sweep_dvs(end_t);
        out = std::move(pending_);
        pending_.clear();
    } else {
        for (std::size_t i = 0; i < pixels_.size(); ++i) integrate_pixel(i, held_rate_[i], clock_, end_t, out);
    }

    const auto& p = cfg_.params;
    for (std::size_t i = 0; i < pixels_.size(); ++i) {
        auto& st = pixels_[i];
        if (st.last_t >= end_t && end_t > 0) continue;
        if (flush_redundant(i, end_t)) continue;
        const std::uint32_t c = std::uint32_t(i % p.channels);
        const std::uint32_t xy = std::uint32_t(i / p.channels);
        Decimation d = kDZero;
        if (st.acc >= limits_.scale) {
            d = std::min(detail::floor_log2(st.acc / limits_.scale), cfg_.d_max);
            st.acc -= limits_.scale << d;
        }
        if (end_t > std::numeric_limits<std::uint32_t>::max()) throw Error("timestamp exceeds 32-bit tick range");
        out.push_back(Event{std::uint16_t(xy % p.width), std::uint16_t(xy / p.width), std::uint8_t(c), d,
                            std::uint32_t(end_t)});
        st.last_t = end_t;
    }
    clock_ = end_t;
    terminated_ = true;
    std::sort(out.begin(), out.end(), canonical_less);
    return out;
}

}  // namespace adder
