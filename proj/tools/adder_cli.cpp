// adder: transcode, play, inspect, bench and serve ADΔER streams.
//
// Exit codes: 0 success, 1 I/O or runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

#include "adder/bench.hpp"
#include "adder/codec.hpp"
#include "adder/control_server.hpp"
#include "adder/pipeline.hpp"
#include "adder/reconstruct.hpp"
#include "adder/sources.hpp"

using namespace adder;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

std::vector<std::uint8_t> read_input(const std::string& path) {
    if (path == "-") {
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
        return bytes;
    }
    return read_file(path);
}

RoiRect parse_roi(const std::string& s) {
    int v[4];
    char tail;
    if (std::sscanf(s.c_str(), "%d,%d,%d,%d%c", &v[0], &v[1], &v[2], &v[3], &tail) != 4)
        throw UsageError("--roi expects x0,y0,x1,y1, got '" + s + "'");
    for (int x : v)
        if (x < 0 || x > 65535) throw UsageError("--roi coordinates must be in 0..65535");
    if (v[0] > v[2] || v[1] > v[3]) throw UsageError("--roi needs x0<=x1 and y0<=y1");
    return RoiRect{std::uint16_t(v[0]), std::uint16_t(v[1]), std::uint16_t(v[2]), std::uint16_t(v[3])};
}

std::pair<std::uint16_t, std::uint16_t> parse_size(const std::string& s) {
    unsigned w = 0, h = 0;
    char tail;
    if (std::sscanf(s.c_str(), "%ux%u%c", &w, &h, &tail) != 2 || w == 0 || h == 0 || w > 65535 || h > 65535)
        throw UsageError("--size expects WxH, got '" + s + "'");
    return {std::uint16_t(w), std::uint16_t(h)};
}

CodecId parse_codec(const std::string& s) {
    if (s == "raw") return CodecId::raw;
    if (s == "compressed") return CodecId::compressed;
    throw UsageError("--codec must be raw or compressed");
}

// Options shared by transcode and serve.
struct TranscodeOpts {
    int crf = 3;
    std::string codec = "compressed";
    unsigned dtm_multiple = 30;
    unsigned ref_interval = 255;
    std::string roi;
    int channels = 1;
    unsigned fps = 30;
    std::string size;
    double theta = 0.2;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--crf", crf, "rate factor, 0 (most events) to 9")->check(CLI::Range(0, 9));
        cmd->add_option("--codec", codec, "raw or compressed")->check(CLI::IsMember({"raw", "compressed"}));
        cmd->add_option("--dtm-multiple", dtm_multiple, "delta_t_max as a multiple of ref_interval")
            ->check(CLI::Range(1u, 100000u));
        cmd->add_option("--ref-interval", ref_interval, "ticks per input frame")->check(CLI::Range(1u, 1u << 20));
        cmd->add_option("--roi", roi, "x0,y0,x1,y1 region transcoded at CRF 0");
        cmd->add_option("--channels", channels, "1 (gray) or 3 (color)")->check(CLI::IsMember({1, 3}));
        cmd->add_option("--fps", fps, "frame rate for sources that carry none")->check(CLI::Range(1u, 100000u));
        cmd->add_option("--size", size, "WxH geometry for DVS CSV input without a header");
        cmd->add_option("--theta", theta, "DVS log-intensity threshold")->check(CLI::PositiveNumber);
    }

    SessionConfig session(const std::string& source) const {
        SessionConfig sc;
        sc.source = source;
        sc.crf = std::uint8_t(crf);
        sc.dtm_multiple = dtm_multiple;
        sc.ref_interval = ref_interval;
        sc.channels = std::uint8_t(channels);
        sc.fps = fps;
        sc.dvs.theta = theta;
        if (!roi.empty()) sc.roi = parse_roi(roi);
        if (!size.empty()) std::tie(sc.dvs_width, sc.dvs_height) = parse_size(size);
        return sc;
    }
};

int run_transcode(const std::string& source, const std::string& output, const TranscodeOpts& opt) {
    auto sc = opt.session(source);
    sc.output = OutputConfig{output, parse_codec(opt.codec)};
    auto session = Session::start(sc);
    session->wait();
    if (!session->error().empty()) throw std::runtime_error(session->error());
    const auto st = session->stats();
    std::cerr << "transcoded " << st.frames << (session->dvs() ? " intervals" : " frames") << ", "
              << st.events_emitted << " events, " << st.bytes_written << " bytes"
              << (output == "-" ? "" : " -> " + output) << "\n";
    return 0;
}

std::string frame_name(const std::string& dir, std::uint64_t k, std::uint8_t channels) {
    char name[64];
    std::snprintf(name, sizeof name, "/frame_%06llu.%s", (unsigned long long)k, channels == 1 ? "pgm" : "ppm");
    return dir + name;
}

int run_play(const std::string& input, const std::string& out_dir, double fps, bool live, std::uint16_t port) {
    const auto bytes = read_input(input);
    const auto stream = read_stream(bytes);
    if (live) {
        ServerConfig cfg;
        cfg.port = port;
        ControlServer server(cfg);
        server.start();
        std::cerr << "preview on ws://127.0.0.1:" << server.port() << "/preview\n";
        const auto t0 = std::chrono::steady_clock::now();
        std::uint64_t k = 0;
        play(stream, fps, [&](const PlaybackFrame& f) {
            if (g_interrupted) return;
            std::this_thread::sleep_until(t0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                   std::chrono::duration<double>(double(k++) / fps)));
            server.publish_preview(f.tick, f.frame);
        });
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
        server.stop();
        std::cerr << "played " << k << " frames\n";
        return 0;
    }
    std::filesystem::create_directories(out_dir);
    std::uint64_t k = 0;
    play(stream, fps, [&](const PlaybackFrame& f) { write_pnm(frame_name(out_dir, ++k, f.frame.channels), f.frame); });
    std::cerr << "wrote " << k << " frames to " << out_dir << "\n";
    return 0;
}

int run_serve(const std::string& source, const std::string& address, std::uint16_t port, double exit_after,
              bool features, const TranscodeOpts& opt) {
    ServerConfig cfg;
    cfg.address = address;
    cfg.port = port;
    cfg.session = opt.session("");
    cfg.session.pace_realtime = true;
    cfg.session.features_enabled = features;
    ControlServer server(cfg);
    server.start();
    std::cout << "listening on ws://" << address << ":" << server.port() << " (/ctl, /preview)" << std::endl;
    if (!source.empty()) server.open(source);
    const auto t0 = std::chrono::steady_clock::now();
    while (!g_interrupted) {
        if (exit_after > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() >= exit_after)
            break;
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ADΔER event video tools"};
    app.require_subcommand(1);

    TranscodeOpts topt;
    std::string t_source, t_output = "-";
    auto* transcode = app.add_subcommand("transcode", "transcode a video or DVS source to an .adder stream");
    transcode->add_option("source", t_source, "y4m file, PGM/PPM pattern, DVS csv, synth:// or synth-dvs:// URI")
        ->required();
    transcode->add_option("-o,--output", t_output, "output .adder file ('-' = stdout)");
    topt.add_to(transcode);

    std::string p_input, p_out = "frames";
    double p_fps = 30;
    bool p_live = false;
    std::uint16_t p_port = 0;
    auto* playc = app.add_subcommand("play", "reconstruct frames from an .adder stream");
    playc->add_option("input", p_input, ".adder file ('-' = stdin)")->required();
    playc->add_option("-o,--output-dir", p_out, "directory for frame_NNNNNN.pgm/ppm");
    playc->add_option("--fps", p_fps, "playback rate")->check(CLI::PositiveNumber);
    playc->add_flag("--live", p_live, "stream frames to /preview clients instead of writing files");
    playc->add_option("--port", p_port, "port for --live (0 = any)");

    std::string i_input = "-";
    auto* inspectc = app.add_subcommand("inspect", "print stream metadata");
    inspectc->add_option("input", i_input, ".adder file ('-' = stdin)");

    BenchConfig bcfg;
    std::string b_csv, b_sizes = "SD,HD,FHD";
    auto* benchc = app.add_subcommand("bench", "throughput matrix over resolution, channels and codec");
    benchc->add_option("--frames", bcfg.frames, "frames per clip")->check(CLI::Range(2u, 100000u));
    benchc->add_option("--repeats", bcfg.repeats, "best-of repeats per cell")->check(CLI::Range(1, 100));
    benchc->add_option("--sizes", b_sizes, "comma list of SD, HD, FHD");
    benchc->add_option("--pattern", bcfg.pattern, "synth:// pattern");
    benchc->add_option("--csv", b_csv, "also write the CSV report here");

    TranscodeOpts sopt;
    std::string s_source, s_address = "127.0.0.1";
    std::uint16_t s_port = 8765;
    double s_exit_after = 0;
    bool s_features = false;
    auto* serve = app.add_subcommand("serve", "run the /ctl and /preview WebSocket endpoint");
    serve->add_option("--source", s_source, "open this source immediately");
    serve->add_option("--address", s_address, "bind address");
    serve->add_option("--port", s_port, "port (0 = any)");
    serve->add_option("--exit-after", s_exit_after, "stop after this many seconds (0 = run until signalled)");
    serve->add_flag("--features", s_features, "start with feature detection on");
    sopt.add_to(serve);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "adder: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    try {
        if (*transcode) return run_transcode(t_source, t_output, topt);
        if (*playc) return run_play(p_input, p_out, p_fps, p_live, p_port);
        if (*inspectc) {
            std::cout << format_report(inspect(read_input(i_input)));
            return 0;
        }
        if (*benchc) {
            std::vector<BenchResolution> all = BenchConfig{}.resolutions, pick;
            std::stringstream ss(b_sizes);
            for (std::string name; std::getline(ss, name, ',');) {
                auto it = std::find_if(all.begin(), all.end(), [&](const BenchResolution& r) { return r.name == name; });
                if (it == all.end()) throw UsageError("unknown size '" + name + "' (use SD, HD, FHD)");
                pick.push_back(*it);
            }
            bcfg.resolutions = pick;
            const auto report = run_bench(bcfg);
            std::cout << bench_table(report);
            if (!b_csv.empty()) {
                std::ofstream f(b_csv);
                f << bench_csv(report);
                if (!f) throw std::runtime_error("cannot write " + b_csv);
            }
            return 0;
        }
        if (*serve) return run_serve(s_source, s_address, s_port, s_exit_after, s_features, sopt);
    } catch (const UsageError& e) {
        std::cerr << "adder: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "adder: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "adder: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
