#include <doctest.h>

#include <random>

#include "adder/protocol.hpp"
#include "schema_check.hpp"

using namespace adder;

namespace {

const schema::json& ctl_schema() {
    static const auto s = schema::load(std::string(ADDER_TEST_DATA) + "/ctl_schema.json");
    return s;
}

bool command_valid(const std::string& text) { return schema::valid_text(ctl_schema(), "command", text); }
bool server_valid(const std::string& text) { return schema::valid_text(ctl_schema(), "server", text); }

}  // namespace

TEST_CASE("documented commands parse and re-emit byte for byte") {
    const std::vector<std::string> lines{
        R"({"cmd":"set_crf","value":3})",
        R"({"cmd":"set_roi","x0":10,"y0":20,"x1":50,"y1":40})",
        R"({"cmd":"clear_roi"})",
        R"({"cmd":"toggle_features","on":true})",
        R"({"cmd":"toggle_features","on":false})",
        R"({"cmd":"open","source":"synth://square?w=64"})",
        R"({"cmd":"stop"})",
    };
    for (const auto& line : lines) {
        CAPTURE(line);
        CHECK(command_valid(line));
        CHECK(to_json(parse_control(line)) == line);
    }
    const auto m = parse_control(R"({"y1":40,"x1":50,"cmd":"set_roi","x0":10,"y0":20})");
    CHECK(m.kind == ControlKind::set_roi);
    CHECK(m.command.roi.x0 == 10);
    CHECK(m.command.roi.y1 == 40);
    CHECK(parse_control(R"({"cmd":"set_crf","value":9})").command.crf == 9);
    CHECK(parse_control(R"({"cmd":"open","source":"a.y4m"})").source == "a.y4m");
}

TEST_CASE("malformed commands are rejected, and the schema agrees") {
    const std::vector<std::string> bad{
        R"(not json)",
        R"([1,2])",
        R"({"value":3})",
        R"({"cmd":"zoom"})",
        R"({"cmd":"set_crf"})",
        R"({"cmd":"set_crf","value":10})",
        R"({"cmd":"set_crf","value":-1})",
        R"({"cmd":"set_crf","value":2.5})",
        R"({"cmd":"set_crf","value":"3"})",
        R"({"cmd":"set_crf","value":3,"extra":1})",
        R"({"cmd":"set_roi","x0":1,"y0":2,"x1":3})",
        R"({"cmd":"set_roi","x0":1,"y0":2,"x1":3,"y1":70000})",
        R"({"cmd":"toggle_features","on":1})",
        R"({"cmd":"open","source":""})",
        R"({"cmd":"open"})",
        R"({"cmd":"stop","now":true})",
        R"({"cmd":7})",
    };
    for (const auto& line : bad) {
        CAPTURE(line);
        CHECK_THROWS_AS(parse_control(line), ProtocolError);
        CHECK_FALSE(command_valid(line));
    }
    // Inverted corners are schema-shaped but still refused.
    CHECK_THROWS_AS(parse_control(R"({"cmd":"set_roi","x0":9,"y0":0,"x1":3,"y1":5})"), ProtocolError);
}

TEST_CASE("every emitted command validates against the shared schema") {
    std::mt19937 rng(21);
    for (int i = 0; i < 500; ++i) {
        ControlMessage m;
        switch (rng() % 6) {
        case 0: m = ControlMessage::from(Command::set_crf(std::uint8_t(rng() % 10))); break;
        case 1: {
            const auto a = std::uint16_t(rng()), b = std::uint16_t(rng()), c = std::uint16_t(rng()),
                       d = std::uint16_t(rng());
            m = ControlMessage::from(Command::set_roi(
                RoiRect{std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)}));
            break;
        }
        case 2: m = ControlMessage::from(Command::clear_roi()); break;
        case 3: m = ControlMessage::from(Command::toggle_features(rng() % 2)); break;
        case 4: m = ControlMessage::open("clip_" + std::to_string(rng()) + ".y4m"); break;
        default: m = ControlMessage::from(Command::stop()); break;
        }
        const auto text = to_json(m);
        REQUIRE(command_valid(text));
        const auto back = parse_control(text);
        CHECK(to_json(back) == text);
    }
}

TEST_CASE("server messages validate against the shared schema") {
    StatsSnapshot s;
    s.events_per_sec = 1234.5;
    s.transcode_fps = 29.9;
    s.compressor_queue_depth = 3;
    s.latest_boxes = {Box{1, 2, 3, 4}, Box{10, 20, 30, 40}};
    CHECK(server_valid(stats_json(s)));
    CHECK(server_valid(boxes_json({})));
    CHECK(boxes_json({Box{1, 2, 3, 4}}) == R"({"boxes":[[1,2,3,4]]})");
    CHECK(ack_json(Ack{7, 9180}) == R"({"ack":{"seq":7,"apply_by_tick":9180}})");
    CHECK(server_valid(ack_json(Ack{7, 9180})));
    CHECK(server_valid(error_json("bad thing")));
    CHECK_FALSE(server_valid(R"({"boxes":[[1,2,3]]})"));
    CHECK_FALSE(server_valid(R"({"ack":{"seq":0,"apply_by_tick":1}})"));
}

TEST_CASE("newline-delimited framing") {
    CHECK(split_lines("a\nb\r\n\n  \nc") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_lines("").empty());
    CHECK(split_lines(R"({"cmd":"stop"})" "\n") == std::vector<std::string>{R"({"cmd":"stop"})"});
}

TEST_CASE("preview binary layout") {
    Frame f(2, 2, 1);
    f.data = {0, 85, 170, 255};
    const auto bytes = encode_preview(0x0102030405060708ull, f);
    const std::vector<std::uint8_t> want{8, 7, 6, 5, 4, 3, 2, 1, 2, 0, 2, 0, 1, 0, 85, 170, 255};
    CHECK(bytes == want);
    const auto back = decode_preview(bytes);
    CHECK(back.tick == 0x0102030405060708ull);
    CHECK(back.frame == f);

    Frame wide(300, 2, 3);
    for (std::size_t i = 0; i < wide.data.size(); ++i) wide.data[i] = std::uint8_t(i * 31);
    const auto wb = encode_preview(5, wide);
    CHECK(wb[8] == 44);
    CHECK(wb[9] == 1);
    CHECK(decode_preview(wb).frame == wide);

    auto shortened = bytes;
    shortened.pop_back();
    CHECK_THROWS_AS(decode_preview(shortened), ProtocolError);
    CHECK_THROWS_AS(decode_preview(std::vector<std::uint8_t>(12, 0)), ProtocolError);
    auto two_ch = bytes;
    two_ch[12] = 2;
    CHECK_THROWS_AS(decode_preview(two_ch), ProtocolError);
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode_preview(longer), ProtocolError);
}

TEST_CASE("roi drag mapping") {
    auto m = roi_drag(50, 40, 10, 20, 1.0, 640, 360);
    REQUIRE(m);
    CHECK(to_json(*m) == R"({"cmd":"set_roi","x0":10,"y0":20,"x1":50,"y1":40})");
    CHECK_FALSE(roi_drag(100, 100, 102, 98, 1.0, 640, 360));
    CHECK(roi_drag(100, 100, 103, 100, 1.0, 640, 360));
    // Off-canvas ends are clipped to the plane.
    CHECK(to_json(*roi_drag(-5, 10, 900, 20, 1.0, 640, 360)) == R"({"cmd":"set_roi","x0":0,"y0":10,"x1":639,"y1":20})");

    // Display twice the plane size: halve and floor each coordinate.
    std::mt19937 rng(17);
    for (int i = 0; i < 50; ++i) {
        const int sx = int(rng() % 1280), sy = int(rng() % 720), ex = int(rng() % 1280), ey = int(rng() % 720);
        const auto got = roi_drag(sx, sy, ex, ey, 0.5, 640, 360);
        if (std::abs(ex - sx) < 3 && std::abs(ey - sy) < 3) {
            CHECK_FALSE(got);
            continue;
        }
        REQUIRE(got);
        const auto& r = got->command.roi;
        CHECK(r.x0 == std::min(sx, ex) / 2);
        CHECK(r.y0 == std::min(sy, ey) / 2);
        CHECK(r.x1 == std::max(sx, ex) / 2);
        CHECK(r.y1 == std::max(sy, ey) / 2);
        CHECK(command_valid(to_json(*got)));
    }
}

TEST_CASE("preview painting is a pure function of the message") {
    Frame f(2, 2, 1);
    f.data = {0, 85, 170, 255};
    const auto msg = encode_preview(3, f);
    const auto rgb = paint_preview(decode_preview(msg), std::nullopt, {});
    CHECK(rgb == std::vector<std::uint8_t>{0, 0, 0, 85, 85, 85, 170, 170, 170, 255, 255, 255});

    std::mt19937 rng(2);
    Frame c(40, 30, 3);
    for (auto& v : c.data) v = std::uint8_t(rng());
    const auto bytes = encode_preview(9, c);
    const RoiRect roi{5, 5, 20, 12};
    const std::vector<Box> boxes{{1, 1, 4, 4}, {30, 20, 60, 40}};
    const auto a = paint_preview(decode_preview(bytes), roi, boxes);
    const auto b = paint_preview(decode_preview(std::vector<std::uint8_t>(bytes)), roi, boxes);
    CHECK(a == b);
    CHECK(a[(5 * 40 + 5) * 3] == 255);
    CHECK(a[(5 * 40 + 5) * 3 + 1] == 0);
    CHECK(a[(8 * 40 + 10) * 3] == c.at(10, 8, 0));
    CHECK(a[(8 * 40 + 10) * 3 + 2] == c.at(10, 8, 2));
}
