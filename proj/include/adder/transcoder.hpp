#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "adder/event.hpp"
#include "adder/frame.hpp"
#include "adder/integrator.hpp"

namespace adder {

/// Accumulator resolution: one unit of intensity is ref_interval * kSubUnits
/// sub-units, so framed samples integrate exactly and DVS levels keep 8
/// fractional bits.
inline constexpr std::uint64_t kSubUnits = 256;

/// Inclusive pixel rectangle.
struct RoiRect {
    std::uint16_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool contains(std::uint32_t x, std::uint32_t y) const {
        return x >= x0 && x <= x1 && y >= y0 && y <= y1;
    }
    std::uint64_t area() const { return std::uint64_t(x1 - x0 + 1) * (y1 - y0 + 1); }

    friend bool operator==(const RoiRect&, const RoiRect&) = default;
};

bool roi_fits(const RoiRect& roi, const StreamParams& p);

enum class SourceMode { framed, dvs };

struct TranscoderConfig {
    StreamParams params;
    Decimation d_max = kDMax;
    std::uint32_t feature_interval = 30;  // detections per second
    std::optional<RoiRect> roi;
    SourceMode mode = SourceMode::framed;
};

/// Throws InvalidArgument describing the first violated invariant.
void validate_config(const TranscoderConfig& cfg);

struct DvsEvent {
    std::uint64_t t_us = 0;
    std::uint16_t x = 0;
    std::uint16_t y = 0;
    std::int8_t p = 1;  // +1 or -1

    friend bool operator==(const DvsEvent&, const DvsEvent&) = default;
};

struct DvsSourceConfig {
    double theta = 0.2;           // log-intensity threshold
    double initial_level = 128.0;  // linear sample value, 0..=255
};

/// 0 inside the ROI, the global CRF elsewhere.
std::uint8_t effective_crf(const TranscoderConfig& cfg, std::uint32_t x, std::uint32_t y);

/// Decimation targeting one event per min(ref_interval * 2^crf, delta_t_max / 2)
/// ticks at the measured rate (units per tick).
Decimation next_d(double measured_rate, std::uint8_t crf_eff, const StreamParams& params,
                  Decimation d_max = kDMax);

/// Transcodes framed or DVS input into ADΔER events. Not thread-safe; one
/// worker owns an engine and applies control changes between batches.
class Transcoder {
public:
    explicit Transcoder(TranscoderConfig cfg, DvsSourceConfig dvs = {});

    const TranscoderConfig& config() const { return cfg_; }
    const StreamParams& params() const { return cfg_.params; }

    /// Integrates one frame spanning ticks (index*ref, (index+1)*ref].
    /// Frames must arrive consecutively starting at 0.
    std::vector<Event> transcode_frame(const Frame& frame, std::uint64_t frame_index);

    /// Holds the pixel's linear level since its last update, integrates it up
    /// to the event time, then applies the log-intensity step. Returns the
    /// events that are final, i.e. at or before the sweep watermark.
    std::vector<Event> ingest_dvs(const DvsEvent& ev);
    std::vector<Event> ingest_dvs(const DvsEvent& ev, const DvsSourceConfig& cfg);

    /// DVS mode: sweeps every pixel forward to `tick` and releases the
    /// buffered events up to it.
    std::vector<Event> advance_to(std::uint64_t tick);

    /// Emits a closing event at end_t (largest 2^d <= acc, else D_ZERO) for
    /// every pixel whose pending interval disagrees with what its last event
    /// displays, then terminates the engine.
    std::vector<Event> flush(std::uint64_t end_t);

    void set_crf(std::uint8_t crf);
    void set_roi(std::optional<RoiRect> roi);

    std::uint8_t effective_crf(std::uint32_t x, std::uint32_t y) const {
        return adder::effective_crf(cfg_, x, y);
    }

    /// Stream tick up to which input has been integrated.
    std::uint64_t clock() const { return clock_; }
    bool terminated() const { return terminated_; }
    std::uint64_t frames_ingested() const { return next_frame_; }

    const PixelState& pixel(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) const;
    double dvs_level(std::uint32_t x, std::uint32_t y) const;
    std::uint64_t accumulator_scale() const { return limits_.scale; }

private:
    std::size_t slot(std::uint32_t x, std::uint32_t y, std::uint32_t c) const {
        return (std::size_t(y) * cfg_.params.width + x) * cfg_.params.channels + c;
    }
    void require_live() const;
    void integrate_pixel(std::size_t i, std::uint64_t rate, std::uint64_t from, std::uint64_t to,
                         std::vector<Event>& out);
    void sweep_dvs(std::uint64_t to);
    // True when the pending interval's average already matches the value on
    // display, so a flush event would only add quantization error.
    bool flush_redundant(std::size_t i, std::uint64_t end_t) const;
    std::vector<Event> release_dvs(std::uint64_t watermark);

    TranscoderConfig cfg_;
    DvsSourceConfig dvs_;
    IntegrationLimits limits_;
    std::vector<PixelState> pixels_;
    std::vector<std::uint64_t> held_rate_;  // sub-units per tick, last input
    std::vector<int> shown_;                // display value of the last event, -1 before any
    std::uint64_t clock_ = 0;
    std::uint64_t next_frame_ = 0;
    bool terminated_ = false;

    // DVS bridge
    std::vector<double> level_;
    std::vector<std::uint64_t> pos_;
    std::uint64_t watermark_ = 0;
    std::uint64_t last_t_us_ = 0;
    std::vector<Event> pending_;
};

}  // namespace adder
