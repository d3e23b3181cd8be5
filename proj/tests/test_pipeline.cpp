#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "adder/pipeline.hpp"

using namespace adder;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
    return fs::temp_directory_path() / ("adder-pipe-" + std::to_string(::getpid()) + "-" + name);
}

// Polls until pred() holds or the deadline passes.
template <class Pred>
bool eventually(Pred pred, std::chrono::milliseconds limit = 20s) {
    const auto deadline = std::chrono::steady_clock::now() + limit;
    while (!pred()) {
        if (std::chrono::steady_clock::now() > deadline) return false;
        std::this_thread::sleep_for(2ms);
    }
    return true;
}

std::size_t count_in(const std::vector<Event>& ev, std::uint64_t lo, std::uint64_t hi) {
    std::size_t n = 0;
    for (const auto& e : ev) n += e.t > lo && e.t <= hi;
    return n;
}

}  // namespace

TEST_CASE("synth session without output previews and writes nothing") {
    SessionConfig cfg;
    cfg.source = "synth://square?w=32&h=24&frames=20";
    auto s = Session::start(cfg);
    REQUIRE(s->wait_for(30s));
    CHECK(s->error().empty());
    const auto st = s->stats();
    CHECK(st.frames == 20);
    CHECK(st.events_emitted > 0);
    CHECK(st.events_compressed == st.events_emitted);
    CHECK(st.bytes_written == 0);
    CHECK(st.finished);
    auto p = s->latest_preview();
    REQUIRE(p);
    CHECK(p->tick == 20 * 255);
    CHECK(p->frame->width == 32);
    // Latest-wins slot: taken once.
    CHECK_FALSE(s->latest_preview());
}

TEST_CASE("y4m session writes a decodable stream equal to the offline transcode") {
    const auto y4m = temp_path("in.y4m"), out = temp_path("out.adder");
    {
        SynthSource src("synth://gradient?w=20&h=10&frames=15&speed=5&channels=3");
        std::vector<Frame> frames;
        while (auto f = src.next()) frames.push_back(*f);
        write_y4m(y4m, frames, 30);
    }
    SessionConfig cfg;
    cfg.source = y4m.string();
    cfg.channels = 3;
    cfg.output = OutputConfig{out, CodecId::compressed};
    cfg.queue_capacity = 2;
    auto s = Session::start(cfg);
    REQUIRE(s->wait_for(30s));
    CHECK(s->error().empty());
    const auto decoded = read_stream(read_file(out));
    CHECK(decoded.params == s->params());
    CHECK(decoded.codec == CodecId::compressed);

    Y4mSource again(y4m, 3);
    TranscoderConfig tc;
    tc.params = s->params();
    CHECK(decoded.events == transcode_all(again, tc));
    CHECK(s->stats().events_compressed == decoded.events.size());
    fs::remove(y4m);
    fs::remove(out);
}

TEST_CASE("start fails before spawning on bad sources and parameters") {
    SessionConfig cfg;
    cfg.source = "/no/such/file.y4m";
    CHECK_THROWS_AS(Session::start(cfg), SourceError);
    cfg.source = "";
    CHECK_THROWS_AS(Session::start(cfg), InvalidArgument);
    cfg.source = "synth://constant?w=8&h=8";
    cfg.crf = 12;
    CHECK_THROWS_AS(Session::start(cfg), InvalidArgument);
    cfg.crf = 3;
    cfg.roi = RoiRect{0, 0, 8, 8};
    CHECK_THROWS_AS(Session::start(cfg), InvalidArgument);
    cfg.roi.reset();
    cfg.output = OutputConfig{"/no/such/dir/out.adder", CodecId::raw};
    CHECK_THROWS_AS(Session::start(cfg), Error);
}

TEST_CASE("set_crf mid-stream lowers the rate and is applied within one frame") {
    const auto out = temp_path("crf.adder");
    SessionConfig cfg;
    cfg.source = "synth://constant?w=16&h=16&frames=100000&value=200&fps=500";
    cfg.crf = 0;
    cfg.pace_realtime = true;
    cfg.output = OutputConfig{out, CodecId::raw};
    auto s = Session::start(cfg);
    const auto ref = s->params().ref_interval;
    REQUIRE(eventually([&] { return s->stats().frames >= 60; }));
    const auto ack = s->submit(Command::set_crf(9));
    REQUIRE(eventually([&] { return s->applied_at(ack.seq).has_value(); }));
    const auto applied = *s->applied_at(ack.seq);
    CHECK(applied <= ack.apply_by_tick);
    REQUIRE(eventually([&] { return s->stats().stream_tick >= applied + 80 * ref; }));
    s->submit(Command::stop());
    REQUIRE(s->wait_for(30s));
    CHECK(s->error().empty());

    const auto events = read_stream(read_file(out)).events;
    // Compare steady windows of 40 frames on each side, away from the switch.
    const auto before = count_in(events, applied - 50 * ref, applied - 10 * ref);
    const auto after = count_in(events, applied + 40 * ref, applied + 80 * ref);
    CHECK(after < before);
    fs::remove(out);
}

TEST_CASE("roi raises event density inside the rectangle") {
    const auto out = temp_path("roi.adder");
    SessionConfig cfg;
    cfg.source = "synth://noise?w=32&h=32&frames=60&lo=60&hi=200";
    cfg.crf = 9;
    cfg.roi = RoiRect{0, 0, 15, 31};
    cfg.output = OutputConfig{out, CodecId::raw};
    auto s = Session::start(cfg);
    REQUIRE(s->wait_for(30s));
    const auto events = read_stream(read_file(out)).events;
    std::size_t in = 0, outside = 0;
    for (const auto& e : events) (e.x <= 15 ? in : outside)++;
    CHECK(double(in) >= 1.5 * double(outside));
    fs::remove(out);
}

TEST_CASE("stop flushes, acks, and closes the session") {
    const auto out = temp_path("stop.adder");
    SessionConfig cfg;
    cfg.source = "synth://square?w=32&h=32&frames=100000&fps=200";
    cfg.pace_realtime = true;
    cfg.output = OutputConfig{out, CodecId::compressed};
    auto s = Session::start(cfg);
    REQUIRE(eventually([&] { return s->stats().frames >= 5; }));

    CHECK_THROWS_AS(s->submit(Command::set_crf(10)), InvalidCommand);
    CHECK_THROWS_AS(s->submit(Command::set_roi(RoiRect{0, 0, 40, 4})), InvalidCommand);
    CHECK_THROWS_AS(s->submit(Command::set_roi(RoiRect{5, 0, 4, 4})), InvalidCommand);

    const auto a1 = s->submit(Command::set_roi(RoiRect{0, 0, 7, 7}));
    const auto a2 = s->submit(Command::clear_roi());
    const auto a3 = s->submit(Command::toggle_features(true));
    const auto a4 = s->submit(Command::stop());
    CHECK(a2.seq == a1.seq + 1);
    CHECK(a4.seq == a3.seq + 1);
    REQUIRE(s->wait_for(30s));
    CHECK(s->error().empty());
    for (const auto& a : {a1, a2, a4}) CHECK(s->applied_at(a.seq).has_value());
    CHECK_THROWS_AS(s->submit(Command::set_crf(1)), SessionClosed);

    const auto decoded = read_stream(read_file(out));
    CHECK_FALSE(decoded.events.empty());
    CHECK(decoded.events.back().t == s->stats().stream_tick);
    CHECK(s->stats().events_compressed == s->stats().events_emitted);
    CHECK(s->stats().frames < 100000);
    // The final preview is still available after the session ends.
    CHECK(s->latest_preview().has_value());
    fs::remove(out);
}

TEST_CASE("destroying a running session leaves a complete file") {
    const auto out = temp_path("drop.adder");
    SessionConfig cfg;
    cfg.source = "synth://gradient?w=16&h=16&frames=100000&fps=300&speed=3";
    cfg.pace_realtime = true;
    cfg.output = OutputConfig{out, CodecId::compressed};
    {
        auto s = Session::start(cfg);
        REQUIRE(eventually([&] { return s->stats().frames >= 3; }));
    }
    CHECK_FALSE(read_stream(read_file(out)).events.empty());
    fs::remove(out);
}

TEST_CASE("a slow compressor backs off without losing events or freezing control") {
    const auto out = temp_path("slow.adder");
    SessionConfig cfg;
    cfg.source = "synth://noise?w=64&h=64&frames=40";
    cfg.queue_capacity = 1;
    cfg.put_timeout = 1ms;
    cfg.output = OutputConfig{out, CodecId::compressed};
    auto s = Session::start(cfg);
    const auto ack = s->submit(Command::set_crf(5));
    REQUIRE(s->wait_for(60s));
    CHECK(s->error().empty());
    CHECK(s->applied_at(ack.seq).has_value());
    const auto st = s->stats();
    CHECK(st.events_compressed == st.events_emitted);
    CHECK(read_stream(read_file(out)).events.size() == st.events_emitted);
    fs::remove(out);
}

TEST_CASE("compressor pacing never changes the written stream") {
    const std::string source = "synth://square?w=96&h=64&frames=70&seed=3";
    std::vector<std::vector<std::uint8_t>> files;
    for (auto slice : {0us, 50us, 1000us}) {
        const auto out = temp_path("paced.adder");
        SessionConfig cfg;
        cfg.source = source;
        cfg.compressor_slice = slice;
        cfg.output = OutputConfig{out, CodecId::compressed};
        auto s = Session::start(cfg);
        REQUIRE(s->wait_for(60s));
        CHECK(s->error().empty());
        files.push_back(read_file(out));
        fs::remove(out);
    }
    CHECK(files[0] == files[1]);
    CHECK(files[0] == files[2]);

    SynthSource src(source);
    TranscoderConfig tc;
    tc.params = make_params(96, 64, 1, 30);
    CHECK(read_stream(files[0]).events == transcode_all(src, tc));
}

TEST_CASE("a paced session finishes with pacing and realtime input together") {
    const auto out = temp_path("realtime.adder");
    SessionConfig cfg;
    cfg.source = "synth://noise?w=64&h=64&frames=20&fps=200";
    cfg.pace_realtime = true;
    cfg.compressor_slice = 50us;
    cfg.output = OutputConfig{out, CodecId::compressed};
    auto s = Session::start(cfg);
    REQUIRE(s->wait_for(60s));
    CHECK(s->error().empty());
    const auto st = s->stats();
    CHECK(st.events_compressed == st.events_emitted);
    CHECK(read_stream(read_file(out)).events.size() == st.events_emitted);
    fs::remove(out);
}

TEST_CASE("feature detection publishes boxes through the hub") {
    std::mutex mu;
    std::vector<std::vector<Box>> seen;
    SessionConfig cfg;
    cfg.source = "synth://square?w=96&h=64&frames=30&size=20";
    cfg.features_enabled = true;
    cfg.detection.cluster.min_cluster_size = 2;
    cfg.on_boxes = [&](const std::vector<Box>& b, std::uint64_t) {
        std::lock_guard lock(mu);
        seen.push_back(b);
    };
    auto s = Session::start(cfg);
    REQUIRE(s->wait_for(30s));
    CHECK(s->error().empty());
    CHECK(s->stats().detections >= 1);
    std::lock_guard lock(mu);
    CHECK_FALSE(seen.empty());
    for (const auto& b : seen) CHECK(b.size() <= 25);
}

TEST_CASE("dvs session transcodes a csv stream") {
    const auto csv = temp_path("ev.csv");
    {
        std::ofstream f(csv);
        f << "# width=8 height=8\n";
        for (int i = 0; i < 400; ++i) f << i * 100 << "," << i % 8 << "," << (i / 8) % 8 << "," << (i % 3 ? 1 : -1) << "\n";
    }
    SessionConfig cfg;
    cfg.source = csv.string();
    auto s = Session::start(cfg);
    CHECK(s->dvs());
    REQUIRE(s->wait_for(30s));
    CHECK(s->error().empty());
    CHECK(s->stats().events_emitted > 0);
    CHECK(s->stats().events_compressed == s->stats().events_emitted);
    fs::remove(csv);
}

TEST_CASE("offline transcode_all ends with a flush at the final clock") {
    TranscoderConfig tc;
    tc.params = make_params(4, 4, 1, 30);
    {
        // too dim to cross a threshold in 10 frames: only the flush emits
        SynthSource src("synth://constant?w=4&h=4&frames=10&value=1");
        const auto ev = transcode_all(src, tc);
        REQUIRE(ev.size() == 16);
        for (const auto& e : ev) CHECK(e.t == 10 * 255);
    }
    {
        // bright pixels already display their value; nothing follows the clock
        SynthSource src("synth://constant?w=4&h=4&frames=10&value=100");
        const auto ev = transcode_all(src, tc);
        REQUIRE_FALSE(ev.empty());
        CHECK(ev.back().t <= 10 * 255);
        CHECK(std::is_sorted(ev.begin(), ev.end(), canonical_less));
    }
}
