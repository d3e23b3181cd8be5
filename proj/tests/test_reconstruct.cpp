#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "adder/codec.hpp"
#include "adder/reconstruct.hpp"

using namespace adder;

namespace {

std::vector<std::uint8_t> load(const std::string& name) {
    return read_file(std::string(ADDER_TEST_DATA) + "/" + name);
}

// Straightforward replay: per pixel keep the last two timestamps and the
// last d, render with floating point and round-half-up.
Frame naive_frame(const StreamParams& p, const std::vector<Event>& events, std::uint64_t tick) {
    std::map<std::size_t, std::pair<std::uint64_t, std::pair<std::uint64_t, int>>> last;  // idx -> (prev, (t, d))
    for (const auto& e : events) {
        if (e.t > tick) break;
        const std::size_t i = (std::size_t(e.y) * p.width + e.x) * p.channels + e.c;
        auto it = last.find(i);
        const std::uint64_t prev = it == last.end() ? 0 : it->second.second.first;
        last[i] = {prev, {e.t, e.d}};
    }
    Frame f(p.width, p.height, p.channels);
    for (const auto& [i, v] : last) {
        const auto [prev, td] = v;
        if (td.second == kDZero) continue;
        const double dt = td.first > prev ? double(td.first - prev) : 1.0;
        const double val = std::ldexp(1.0, td.second) * p.ref_interval / dt;
        f.data[i] = std::uint8_t(std::min(255.0, std::floor(val + 0.5)));
    }
    return f;
}

}  // namespace

TEST_CASE("canvas follows the last two events of a pixel") {
    const auto p = make_params(2, 2, 1, 30);
    Canvas cv(p);
    CHECK(cv.frame_at().data == std::vector<std::uint8_t>(4, 0));
    cv.apply(Event{0, 0, 0, 7, 255});
    CHECK(cv.frame_at().at(0, 0) == 128);
    cv.apply(Event{0, 0, 0, 7, 510});
    CHECK(cv.frame_at().at(0, 0) == 128);
    cv.apply(Event{1, 0, 0, 8, 255});
    CHECK(cv.frame_at().at(1, 0) == 255);
    cv.apply(Event{1, 0, 0, kDZero, 600});
    CHECK(cv.frame_at().at(1, 0) == 0);
    CHECK(cv.frame_at().at(0, 1) == 0);
    // A different reference interval rescales the same events.
    CHECK(cv.frame_at(510).at(0, 0) == 255);
    CHECK(cv.frame_at(51).at(0, 0) == 26);

    CHECK_THROWS_AS(cv.apply(Event{0, 0, 0, 7, 400}), TimestampRegression);
    CHECK_THROWS_AS(cv.apply(Event{2, 0, 0, 7, 900}), InvalidArgument);
    CHECK_THROWS_AS(cv.apply(Event{0, 0, 0, 21, 900}), InvalidArgument);
    // Equal timestamps are allowed.
    CHECK_NOTHROW(cv.apply(Event{0, 0, 0, 7, 510}));
}

TEST_CASE("playback frame count and tick schedule") {
    CHECK(playback_frame_count(153000, 76500, 30) == 60);
    CHECK(playback_frame_count(153001, 76500, 30) == 61);
    CHECK(playback_frame_count(0, 76500, 30) == 0);
    CHECK_THROWS_AS(playback_frame_count(10, 76500, 0), InvalidArgument);

    DecodedStream s;
    s.params = make_params(4, 4, 1, 30);
    s.events = {Event{0, 0, 0, 7, 255}, Event{0, 0, 0, 7, 510}, Event{1, 1, 0, kDZero, 7650}};
    const auto frames = play(s, 30);
    REQUIRE(frames.size() == 30);
    for (std::size_t k = 0; k < frames.size(); ++k) CHECK(frames[k].tick == (k + 1) * 255);
    CHECK(frames[0].frame.at(0, 0) == 128);
    CHECK(frames.back().frame.at(1, 1) == 0);

    // Half the input rate: every other tick.
    const auto slow = play(s, 15);
    REQUIRE(slow.size() == 15);
    CHECK(slow[0].tick == 510);
}

TEST_CASE("playback with only D_ZERO events still emits frames") {
    DecodedStream s;
    s.params = make_params(3, 3, 1, 30);
    for (std::uint16_t y = 0; y < 3; ++y)
        for (std::uint16_t x = 0; x < 3; ++x) s.events.push_back(Event{x, y, 0, kDZero, 7650});
    const auto frames = play(s, 30);
    CHECK(frames.size() == 30);
    for (const auto& f : frames) CHECK(f.frame.data == std::vector<std::uint8_t>(9, 0));
}

TEST_CASE("playback matches a naive replay on random streams") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        DecodedStream s;
        s.params = make_params(5, 4, trial % 2 ? 3 : 1, 30);
        std::uint32_t t = 0;
        for (int i = 0; i < 400; ++i) {
            t += rng() % 40;
            const int d = rng() % 10 == 0 ? kDZero : int(rng() % 12);
            s.events.push_back(Event{std::uint16_t(rng() % 5), std::uint16_t(rng() % 4),
                                     std::uint8_t(rng() % s.params.channels), std::uint8_t(d), t + 1});
        }
        std::stable_sort(s.events.begin(), s.events.end(), canonical_less);
        for (const auto& f : play(s, 30)) REQUIRE(f.frame == naive_frame(s.params, s.events, f.tick));
    }
}

TEST_CASE("golden fixtures replay to their stored reference frames") {
    for (const char* name : {"golden_gray", "golden_color"}) {
        CAPTURE(name);
        const auto stream = read_stream(load(std::string(name) + ".adder"));
        const auto ref = load(std::string(name) + ".frames");
        const auto frames = play(stream, 30);
        const std::size_t per = stream.params.pixel_count();
        REQUIRE(ref.size() == frames.size() * per);
        for (std::size_t k = 0; k < frames.size(); ++k)
            REQUIRE(std::equal(frames[k].frame.data.begin(), frames[k].frame.data.end(), ref.begin() + k * per));
    }
}
