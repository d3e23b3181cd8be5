#include "adder/pipeline.hpp"

#include <algorithm>
#include <iostream>

namespace adder {

std::vector<Event> transcode_all(FrameSource& source, const TranscoderConfig& cfg, std::uint64_t max_frames) {
    Transcoder engine(cfg);
    std::vector<Event> out;
    std::uint64_t idx = 0;
    while (idx < max_frames) {
        auto frame = source.next();
        if (!frame) break;
        auto batch = engine.transcode_frame(*frame, idx++);
        out.insert(out.end(), batch.begin(), batch.end());
    }
    // Flush events share the final tick with the last frame's events.
    append_canonical(out, engine.flush(engine.clock()));
    return out;
}

namespace {

void check_command(const Command& cmd, const StreamParams& p) {
    switch (cmd.kind) {
    case CommandKind::set_crf:
        if (cmd.crf > 9) throw InvalidCommand("set_crf value must be in 0..=9");
        break;
    case CommandKind::set_roi:
        if (!roi_fits(cmd.roi, p))
            throw InvalidCommand("roi (" + std::to_string(cmd.roi.x0) + "," + std::to_string(cmd.roi.y0) + ")-(" +
                                 std::to_string(cmd.roi.x1) + "," + std::to_string(cmd.roi.y1) +
                                 ") is empty or outside the plane");
        break;
    case CommandKind::clear_roi:
    case CommandKind::toggle_features:
    case CommandKind::stop:
        break;
    default:
        throw InvalidCommand("unknown command kind");
    }
}

}  // namespace

Session::Session(SessionConfig cfg)
    : cfg_(std::move(cfg)), queue_(cfg_.queue_capacity), started_(std::chrono::steady_clock::now()) {}

std::unique_ptr<Session> Session::start(SessionConfig cfg) {
    if (cfg.source.empty()) throw InvalidArgument("session needs a source");
    if (cfg.queue_capacity < 1) throw InvalidArgument("queue capacity must be at least 1");
    if (cfg.preview_rate_cap < 0) throw InvalidArgument("preview rate cap must be nonnegative");
    validate(cfg.detection.cluster);

    std::unique_ptr<Session> s(new Session(std::move(cfg)));
    auto& c = s->cfg_;
    SourceOptions opt;
    opt.channels = c.channels;
    opt.fps = c.fps;
    opt.dvs_width = c.dvs_width;
    opt.dvs_height = c.dvs_height;

    TranscoderConfig tc;
    if (is_dvs_source(c.source)) {
        s->dvs_ = true;
        if (c.channels != 1) throw InvalidArgument("dvs sources are single-channel");
        s->dvs_src_ = open_dvs_source(c.source, opt);
        tc.params = make_params(s->dvs_src_->width(), s->dvs_src_->height(), 1, c.fps, c.ref_interval,
                                c.dtm_multiple, c.crf);
        tc.mode = SourceMode::dvs;
    } else {
        s->frame_src_ = open_frame_source(c.source, opt);
        tc.params = make_params(s->frame_src_->width(), s->frame_src_->height(), s->frame_src_->channels(),
                                s->frame_src_->fps(), c.ref_interval, c.dtm_multiple, c.crf);
    }
    tc.roi = c.roi;
    tc.feature_interval = c.feature_interval;
    s->params_ = tc.params;
    s->engine_ = std::make_unique<Transcoder>(tc, c.dvs);

    if (c.output) {
        if (c.output->path == "-") {
            s->out_ = &std::cout;
        } else {
            s->out_file_ = std::make_unique<std::ofstream>(c.output->path, std::ios::binary | std::ios::trunc);
            if (!*s->out_file_) throw Error("cannot open output " + c.output->path.string());
            s->out_ = s->out_file_.get();
        }
    }
    s->features_on_ = c.features_enabled;

    Session* raw = s.get();
    raw->transcoder_ = std::thread([raw] { raw->transcoder_main(*raw->engine_); });
    raw->compressor_ = std::thread([raw] { raw->compressor_main(); });
    raw->hub_ = std::thread([raw] { raw->hub_main(); });
    return s;
}

Session::~Session() {
    // Same path as a stop command: the transcoder flushes and closes the
    // queue, so the output stays decodable.
    stop_requested_ = true;
    hub_cv_.notify_all();
    join_all();
}

void Session::join_all() {
    std::lock_guard lock(join_mu_);
    for (auto* t : {&transcoder_, &compressor_, &hub_})
        if (t->joinable()) t->join();
}

double Session::now_s() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
}

void Session::fail(const std::string& what) {
    {
        std::lock_guard lock(err_mu_);
        if (error_.empty()) error_ = what;
    }
    stop_requested_ = true;
    queue_.close();
    hub_cv_.notify_all();
}

std::string Session::error() const {
    std::lock_guard lock(err_mu_);
    return error_;
}

Ack Session::submit(const Command& cmd) {
    check_command(cmd, params_);
    std::lock_guard lock(cmd_mu_);
    if (transcoder_done_ || stop_requested_) throw SessionClosed();
    Ack ack;
    ack.seq = next_seq_++;
    const std::uint64_t tick = stream_tick_;
    ack.apply_by_tick = tick + (dvs_ ? params_.delta_t_max : params_.ref_interval);
    if (cmd.kind == CommandKind::toggle_features) {
        // Detection belongs to the hub; the transcoder never sees this one.
        features_on_ = cmd.on;
        applied_.emplace_back(ack.seq, tick);
        hub_cv_.notify_all();
    } else {
        commands_.emplace_back(ack.seq, cmd);
    }
    return ack;
}

std::optional<std::uint64_t> Session::applied_at(std::uint64_t seq) const {
    std::lock_guard lock(cmd_mu_);
    for (const auto& [s, tick] : applied_)
        if (s == seq) return tick;
    return std::nullopt;
}

bool Session::drain_commands_locked(Transcoder& engine, std::uint64_t tick) {
    bool stop = false;
    while (!commands_.empty()) {
        auto [seq, cmd] = commands_.front();
        commands_.pop_front();
        switch (cmd.kind) {
        case CommandKind::set_crf: engine.set_crf(cmd.crf); break;
        case CommandKind::set_roi: engine.set_roi(cmd.roi); break;
        case CommandKind::clear_roi: engine.set_roi(std::nullopt); break;
        case CommandKind::toggle_features: features_on_ = cmd.on; break;
        case CommandKind::stop: stop = true; break;
        }
        applied_.emplace_back(seq, tick);
    }
    return stop;
}

std::optional<PreviewFrame> Session::latest_preview() {
    auto p = preview_.take();
    if (!p) return std::nullopt;
    return *p;
}

void Session::publish_preview(const Canvas& canvas, std::uint64_t tick, bool force) {
    if (!force && cfg_.preview_rate_cap > 0 && tick < next_preview_tick_) return;
    if (cfg_.preview_rate_cap > 0)
        next_preview_tick_ = tick + std::uint64_t(double(params_.tps) / cfg_.preview_rate_cap);
    auto frame = std::make_shared<const Frame>(canvas.frame_at());
    preview_.put(std::make_shared<const PreviewFrame>(PreviewFrame{tick, std::move(frame)}));
    hub_cv_.notify_all();
}

void Session::push_batch(Transcoder& engine, Batch&& batch) {
    // Each blocking put is bounded; between attempts the transcoder keeps
    // serving commands so a stalled compressor cannot freeze control.
    while (!queue_.push(std::move(batch), cfg_.put_timeout)) {  // moves only on success
        ++backpressure_waits_;
        if (stop_requested_ && !error().empty()) throw Error("compressor failed");
        std::lock_guard lock(cmd_mu_);
        if (drain_commands_locked(engine, stream_tick_)) stop_requested_ = true;
    }
}

bool Session::end_batch(Transcoder& engine, Canvas& canvas, Batch&& batch, std::uint64_t tick) {
    canvas.apply(batch);
    events_emitted_ += batch.size();
    ++frames_;
    // The newest batch is held back one step so the final flush, whose
    // events share its tick, can be merged in canonical order.
    Batch ready = std::move(held_);
    held_ = std::move(batch);
    if (!ready.empty()) push_batch(engine, std::move(ready));
    publish_preview(canvas, tick, false);
    {
        std::lock_guard lock(timing_mu_);
        batch_done_ms_.push_back(now_s() * 1000.0);
    }
    {
        std::lock_guard lock(pace_mu_);
        ++batches_ended_;
    }
    pace_cv_.notify_one();
    bool stop;
    {
        std::lock_guard lock(cmd_mu_);
        stream_tick_ = tick;
        stop = drain_commands_locked(engine, tick);
    }
    if (stop) stop_requested_ = true;
    return !stop_requested_;
}

void Session::run_framed(Transcoder& engine) {
    Canvas canvas(params_);
    std::uint64_t idx = 0;
    const double fps = double(params_.tps) / params_.ref_interval;
    while (!stop_requested_) {
        auto frame = frame_src_->next();
        if (!frame) break;
        if (cfg_.pace_realtime) {
            const auto due = started_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                            std::chrono::duration<double>(double(idx) / fps));
            idle_until(due);
        }
        auto batch = engine.transcode_frame(*frame, idx++);
        if (!end_batch(engine, canvas, std::move(batch), engine.clock())) break;
    }
    auto tail = engine.flush(engine.clock());
    canvas.apply(tail);
    events_emitted_ += tail.size();
    append_canonical(held_, tail);
    push_batch(engine, std::move(held_));
    publish_preview(canvas, engine.clock(), true);
}

void Session::run_dvs(Transcoder& engine) {
    Canvas canvas(params_);
    const std::uint64_t ref = params_.ref_interval;
    std::uint64_t boundary = ref;
    Batch batch;
    while (!stop_requested_) {
        auto ev = dvs_src_->next();
        if (!ev) break;
        if (cfg_.pace_realtime) idle_until(started_ + std::chrono::microseconds(ev->t_us));
        const auto tick = std::uint64_t((unsigned __int128)ev->t_us * params_.tps / 1'000'000u);
        bool stopped = false;
        while (tick >= boundary) {
            auto rel = engine.advance_to(boundary);
            batch.insert(batch.end(), rel.begin(), rel.end());
            if (!end_batch(engine, canvas, std::move(batch), boundary)) {
                stopped = true;
                break;
            }
            batch.clear();
            boundary += ref;
        }
        if (stopped) break;
        auto rel = engine.ingest_dvs(*ev);
        batch.insert(batch.end(), rel.begin(), rel.end());
    }
    auto tail = engine.flush(engine.clock());
    append_canonical(batch, tail);
    canvas.apply(batch);
    events_emitted_ += batch.size();
    append_canonical(held_, batch);
    push_batch(engine, std::move(held_));
    publish_preview(canvas, engine.clock(), true);
}

void Session::transcoder_main(Transcoder& engine) {
    set_transcoder_busy(true);
    try {
        if (dvs_)
            run_dvs(engine);
        else
            run_framed(engine);
    } catch (const std::exception& e) {
        fail(std::string("transcoder: ") + e.what());
    }
    transcoder_end_ns_ = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::steady_clock::now() - started_)
                             .count();
    {
        std::lock_guard lock(cmd_mu_);
        stream_tick_ = engine.clock();
        // Commands that raced the shutdown are acknowledged at the final tick.
        while (!commands_.empty()) {
            applied_.emplace_back(commands_.front().first, engine.clock());
            commands_.pop_front();
        }
        transcoder_done_ = true;
    }
    set_transcoder_busy(false);
    queue_.close();
    hub_cv_.notify_all();
}

void Session::set_transcoder_busy(bool busy) {
    {
        std::lock_guard lock(pace_mu_);
        transcoder_busy_ = busy;
    }
    if (!busy) pace_cv_.notify_one();
}

void Session::idle_until(std::chrono::steady_clock::time_point due) {
    if (std::chrono::steady_clock::now() >= due) return;
    set_transcoder_busy(false);
    std::this_thread::sleep_until(due);
    set_transcoder_busy(true);
}

void Session::pace_compressor(std::chrono::steady_clock::time_point& slice_start,
                              std::chrono::steady_clock::time_point& last_row) {
    using clock = std::chrono::steady_clock;
    const auto now = clock::now();
    // A row takes well under a millisecond; a longer gap means another
    // thread had the core, so a new slice starts here.
    if (now - last_row > std::chrono::milliseconds(2)) slice_start = now;
    last_row = now;
    const auto slice = cfg_.compressor_slice;
    if (slice.count() == 0 || !transcoder_busy_) return;
    const std::size_t depth = queue_.size();
    if (depth >= queue_.capacity() / 2) return;  // falling behind: run freely
    if (now - slice_start < slice + slice * std::int64_t(depth) / 4) return;
    std::unique_lock lock(pace_mu_);
    const auto seen = batches_ended_;
    pace_cv_.wait_for(lock, std::chrono::milliseconds(50),
                      [&] { return batches_ended_ != seen || !transcoder_busy_; });
    slice_start = last_row = clock::now();
}

void Session::compressor_main() {
    try {
        std::optional<StreamWriter> writer;
        if (out_) writer.emplace(*out_, params_, cfg_.output->codec);
        auto slice_start = std::chrono::steady_clock::now();
        auto last_row = slice_start;
        if (writer) writer->set_row_hook([&] { pace_compressor(slice_start, last_row); });
        while (auto batch = queue_.pop()) {
            if (writer) {
                writer->append(*batch);
                bytes_written_ = writer->bytes_written();
            }
            events_compressed_ += batch->size();
        }
        if (writer && error().empty()) {
            writer->finish();
            bytes_written_ = writer->bytes_written();
        }
        if (out_) out_->flush();
        if (out_file_) out_file_->close();
    } catch (const std::exception& e) {
        fail(std::string("compressor: ") + e.what());
    }
    compressor_done_ = true;
    hub_cv_.notify_all();
}

void Session::hub_main() {
    std::uint64_t seen_version = 0;
    std::uint64_t next_detect_tick = 0;
    const std::uint64_t detect_gap = std::max<std::uint64_t>(1, params_.tps / cfg_.feature_interval);
    double next_stats = now_s();
    const double period = std::chrono::duration<double>(cfg_.stats_period).count();
    try {
        for (;;) {
            const bool last = transcoder_done_ && compressor_done_;
            if (features_on_) {
                auto peeked = preview_.peek();
                if (peeked.value && peeked.version != seen_version &&
                    (peeked.value->tick >= next_detect_tick || last)) {
                    seen_version = peeked.version;
                    next_detect_tick = peeked.value->tick + detect_gap;
                    const auto clusters = detect_clusters(peeked.value->frame->luma(), cfg_.detection);
                    std::vector<Box> boxes;
                    boxes.reserve(clusters.size());
                    for (const auto& c : clusters) boxes.push_back(c.bbox);
                    {
                        std::lock_guard lock(hub_mu_);
                        latest_boxes_ = boxes;
                    }
                    ++detections_;
                    if (cfg_.on_boxes) cfg_.on_boxes(boxes, peeked.value->tick);
                }
            }
            const double t = now_s();
            if (t >= next_stats || last) {
                {
                    std::lock_guard lock(hub_mu_);
                    samples_.push_back({t, events_emitted_, frames_, bytes_written_});
                    while (samples_.size() > 2 && samples_[1].t_s < t - 1.0) samples_.pop_front();
                }
                next_stats = t + period;
                if (last) mark_done();
                if (cfg_.on_stats) cfg_.on_stats(stats());
            }
            if (last) break;
            std::unique_lock lock(hub_mu_);
            hub_cv_.wait_for(lock, std::chrono::milliseconds(10));
        }
    } catch (const std::exception& e) {
        fail(std::string("hub: ") + e.what());
        // Keep the session's completion contract even when detection fails.
        while (!(transcoder_done_ && compressor_done_)) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    mark_done();
}

void Session::mark_done() {
    {
        std::lock_guard lock(hub_mu_);
        done_ = true;
    }
    hub_cv_.notify_all();
}

StatsSnapshot Session::stats() const {
    StatsSnapshot s;
    s.frames = frames_;
    s.events_emitted = events_emitted_;
    s.events_compressed = events_compressed_;
    s.bytes_written = bytes_written_;
    s.stream_tick = stream_tick_;
    s.backpressure_waits = backpressure_waits_;
    s.detections = detections_;
    s.compressor_queue_depth = queue_.size();
    s.dropped_previews = preview_.dropped();
    s.finished = done_;
    s.elapsed_s = now_s();

    double t0 = 0, span = 0;
    std::uint64_t e0 = 0, f0 = 0, b0 = 0;
    {
        std::lock_guard lock(hub_mu_);
        s.latest_boxes = latest_boxes_;
        if (!transcoder_done_ && !samples_.empty() && s.elapsed_s - samples_.front().t_s > 0.05) {
            // Sliding window of roughly the last second.
            const auto& base = samples_.front();
            t0 = base.t_s;
            e0 = base.events;
            f0 = base.frames;
            b0 = base.bytes;
        }
    }
    if (transcoder_done_) {
        span = double(transcoder_end_ns_.load()) * 1e-9;
        const double cspan = s.finished ? std::max(span, s.elapsed_s) : s.elapsed_s;
        s.compressed_bytes_per_sec = cspan > 0 ? double(s.bytes_written) / cspan : 0;
    } else {
        span = s.elapsed_s - t0;
        s.compressed_bytes_per_sec = span > 0 ? double(s.bytes_written - b0) / span : 0;
    }
    if (span > 0) {
        s.events_per_sec = double(s.events_emitted - e0) / span;
        s.transcode_fps = double(s.frames - f0) / span;
    }
    return s;
}

void Session::wait() { join_all(); }

bool Session::wait_for(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    {
        std::unique_lock lock(hub_mu_);
        if (!hub_cv_.wait_until(lock, deadline, [&] { return done_.load(); })) return false;
    }
    join_all();
    return true;
}

std::vector<double> Session::batch_intervals_ms() const {
    std::lock_guard lock(timing_mu_);
    std::vector<double> out;
    for (std::size_t i = 1; i < batch_done_ms_.size(); ++i) out.push_back(batch_done_ms_[i] - batch_done_ms_[i - 1]);
    return out;
}

}  // namespace adder
