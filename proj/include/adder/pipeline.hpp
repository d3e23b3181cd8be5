#pragma once

// Live transcode session: source -> transcoder -> {compressor, preview,
// vision}. Three workers per session:
//   transcoder  owns the engine, the preview canvas and the source
//   compressor  owns the stream writer, fed by a bounded event queue
//   hub         runs feature detection on preview snapshots and publishes
//               stats/boxes to the listener
// Control commands are queued and applied by the transcoder between batches.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "adder/codec.hpp"
#include "adder/concurrency.hpp"
#include "adder/event.hpp"
#include "adder/frame.hpp"
#include "adder/reconstruct.hpp"
#include "adder/sources.hpp"
#include "adder/transcoder.hpp"
#include "adder/vision.hpp"

namespace adder {

class SessionClosed : public Error {
public:
    SessionClosed() : Error("session is no longer running") {}
};

class InvalidCommand : public Error {
public:
    using Error::Error;
};

struct OutputConfig {
    std::filesystem::path path;
    CodecId codec = CodecId::compressed;
};

struct SessionConfig {
    std::string source;  // file path, PNM pattern, synth:// or synth-dvs:// URI

    // Stream parameters; geometry and frame rate come from the source.
    std::uint8_t channels = 1;
    std::uint32_t ref_interval = 255;
    std::uint32_t dtm_multiple = 30;
    std::uint8_t crf = 3;
    std::optional<RoiRect> roi;
    std::uint32_t fps = 30;                       // for sources that carry no rate
    std::uint16_t dvs_width = 0, dvs_height = 0;  // CSV DVS geometry override
    DvsSourceConfig dvs;

    std::optional<OutputConfig> output;  // path "-" writes to stdout
    bool features_enabled = false;
    std::uint32_t feature_interval = 30;  // detections per second of stream time
    DetectionConfig detection;
    double preview_rate_cap = 0;  // previews per second of stream time; 0 = every batch
    bool pace_realtime = false;   // throttle framed input to its nominal rate

    std::size_t queue_capacity = 64;  // batches
    std::chrono::milliseconds put_timeout{50};
    // While the transcoder is mid-batch, the compressor codes for at most
    // this long (stretched as the queue fills) before waiting for the batch
    // to end, so a chunk encode never holds a shared core for long. 0 = off.
    std::chrono::microseconds compressor_slice{1000};

    // Called from the hub worker.
    std::function<void(const struct StatsSnapshot&)> on_stats;
    std::function<void(const std::vector<Box>&, std::uint64_t tick)> on_boxes;
    std::chrono::milliseconds stats_period{250};
};

struct StatsSnapshot {
    double events_per_sec = 0;
    double transcode_fps = 0;
    double compressed_bytes_per_sec = 0;
    std::size_t compressor_queue_depth = 0;
    std::uint64_t dropped_previews = 0;
    std::vector<Box> latest_boxes;

    std::uint64_t frames = 0;
    std::uint64_t events_emitted = 0;
    std::uint64_t events_compressed = 0;
    std::uint64_t bytes_written = 0;
    std::uint64_t stream_tick = 0;
    std::uint64_t backpressure_waits = 0;
    std::uint64_t detections = 0;
    double elapsed_s = 0;
    bool finished = false;
};

enum class CommandKind { set_crf, set_roi, clear_roi, toggle_features, stop };

struct Command {
    CommandKind kind = CommandKind::stop;
    std::uint8_t crf = 0;
    RoiRect roi{};
    bool on = false;

    static Command set_crf(std::uint8_t v) { return {CommandKind::set_crf, v, {}, false}; }
    static Command set_roi(RoiRect r) { return {CommandKind::set_roi, 0, r, false}; }
    static Command clear_roi() { return {CommandKind::clear_roi, 0, {}, false}; }
    static Command toggle_features(bool on) { return {CommandKind::toggle_features, 0, {}, on}; }
    static Command stop() { return {CommandKind::stop, 0, {}, false}; }
};

struct Ack {
    std::uint64_t seq = 0;
    std::uint64_t apply_by_tick = 0;
};

struct PreviewFrame {
    std::uint64_t tick = 0;
    std::shared_ptr<const Frame> frame;
};

/// Offline transcode of a whole framed source, closed by a flush at the
/// final clock. Used by tests and tools that do not need a live session.
std::vector<Event> transcode_all(FrameSource& source, const TranscoderConfig& cfg,
                                 std::uint64_t max_frames = UINT64_MAX);

class Session {
public:
    /// Opens the source and output, then spawns the workers. Throws before
    /// any worker starts if the source or output cannot be opened or the
    /// parameters are invalid.
    static std::unique_ptr<Session> start(SessionConfig cfg);
    ~Session();

    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    Ack submit(const Command& cmd);

    /// Newest preview not yet taken, or nullopt.
    std::optional<PreviewFrame> latest_preview();

    StatsSnapshot stats() const;
    const StreamParams& params() const { return params_; }
    bool dvs() const { return dvs_; }

    /// Blocks until every worker has exited.
    void wait();
    bool wait_for(std::chrono::milliseconds timeout);
    bool finished() const { return done_.load(); }

    /// Non-empty if a worker failed.
    std::string error() const;

    /// Wall-clock gaps between consecutive transcoder batch completions.
    std::vector<double> batch_intervals_ms() const;
    /// Stream tick at which the command with this ack sequence was applied.
    std::optional<std::uint64_t> applied_at(std::uint64_t seq) const;

private:
    explicit Session(SessionConfig cfg);

    using Batch = std::vector<Event>;
    struct RateSample {
        double t_s;
        std::uint64_t events, frames, bytes;
    };

    void transcoder_main(Transcoder& engine);
    void run_framed(Transcoder& engine);
    void run_dvs(Transcoder& engine);
    void compressor_main();
    void hub_main();
    void fail(const std::string& what);
    double now_s() const;
    // Marks a batch boundary at `tick`: applies pending commands, pushes the
    // previously held batch and holds `batch`. Returns false once stopped.
    bool end_batch(Transcoder& engine, Canvas& canvas, Batch&& batch, std::uint64_t tick);
    void push_batch(Transcoder& engine, Batch&& batch);
    void publish_preview(const Canvas& canvas, std::uint64_t tick, bool force);
    bool drain_commands_locked(Transcoder& engine, std::uint64_t tick);
    void join_all();
    void mark_done();
    void set_transcoder_busy(bool busy);
    void idle_until(std::chrono::steady_clock::time_point due);
    void pace_compressor(std::chrono::steady_clock::time_point& slice_start,
                         std::chrono::steady_clock::time_point& last_row);

    SessionConfig cfg_;
    StreamParams params_;
    bool dvs_ = false;
    std::unique_ptr<FrameSource> frame_src_;
    std::unique_ptr<DvsSource> dvs_src_;
    std::unique_ptr<Transcoder> engine_;
    std::unique_ptr<std::ofstream> out_file_;
    std::ostream* out_ = nullptr;
    Batch held_;

    BoundedQueue<Batch> queue_;
    LatestSlot<PreviewFrame> preview_;

    mutable std::mutex cmd_mu_;
    std::deque<std::pair<std::uint64_t, Command>> commands_;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> applied_;  // (seq, tick)
    std::uint64_t next_seq_ = 1;

    mutable std::mutex hub_mu_;
    std::condition_variable hub_cv_;
    std::vector<Box> latest_boxes_;
    std::deque<RateSample> samples_;
    std::atomic<bool> features_on_{false};

    mutable std::mutex timing_mu_;
    std::vector<double> batch_done_ms_;

    std::mutex pace_mu_;
    std::condition_variable pace_cv_;
    std::uint64_t batches_ended_ = 0;
    std::atomic<bool> transcoder_busy_{false};

    mutable std::mutex err_mu_;
    std::string error_;

    std::atomic<std::uint64_t> frames_{0}, events_emitted_{0}, events_compressed_{0}, bytes_written_{0},
        stream_tick_{0}, backpressure_waits_{0}, detections_{0};
    std::atomic<bool> stop_requested_{false}, transcoder_done_{false}, compressor_done_{false}, done_{false};
    std::chrono::steady_clock::time_point started_;
    std::atomic<std::int64_t> transcoder_end_ns_{0};
    std::uint64_t next_preview_tick_ = 0;

    std::mutex join_mu_;
    std::thread transcoder_, compressor_, hub_;
};

}  // namespace adder
