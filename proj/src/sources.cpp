#include "adder/sources.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace adder {

namespace {

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw SourceError("bad value for " + what + ": '" + s + "'");
    return v;
}

std::uint64_t arg_or(const std::map<std::string, std::string>& args, const std::string& key,
                     std::uint64_t fallback) {
    auto it = args.find(key);
    return it == args.end() ? fallback : parse_u64(it->second, key);
}

std::uint16_t checked_dim(std::uint64_t v, const std::string& what) {
    if (v < 1 || v > 65535) throw SourceError(what + " out of range: " + std::to_string(v));
    return std::uint16_t(v);
}

std::uint8_t checked_channels(std::uint64_t v) {
    if (v != 1 && v != 3) throw SourceError("channels must be 1 or 3");
    return std::uint8_t(v);
}

std::uint8_t rgb_to_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    return std::uint8_t((77 * r + 150 * g + 29 * b + 128) >> 8);
}

Frame convert_channels(Frame f, std::uint8_t channels) {
    if (f.channels == channels) return f;
    Frame out(f.width, f.height, channels);
    const std::size_t n = std::size_t(f.width) * f.height;
    for (std::size_t i = 0; i < n; ++i) {
        if (channels == 1) {
            out.data[i] = rgb_to_luma(f.data[3 * i], f.data[3 * i + 1], f.data[3 * i + 2]);
        } else {
            out.data[3 * i] = out.data[3 * i + 1] = out.data[3 * i + 2] = f.data[i];
        }
    }
    return out;
}

std::string read_pnm_token(std::istream& in) {
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

}  // namespace

std::pair<std::string, std::map<std::string, std::string>> parse_uri_query(const std::string& uri,
                                                                          const std::string& scheme) {
    const std::string prefix = scheme + "://";
    if (uri.rfind(prefix, 0) != 0) throw SourceError("expected " + prefix + " source, got '" + uri + "'");
    const std::string rest = uri.substr(prefix.size());
    const auto q = rest.find('?');
    std::string name = rest.substr(0, q);
    std::map<std::string, std::string> args;
    if (q != std::string::npos) {
        std::istringstream ss(rest.substr(q + 1));
        std::string kv;
        while (std::getline(ss, kv, '&')) {
            if (kv.empty()) continue;
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw SourceError("malformed query term '" + kv + "'");
            args[kv.substr(0, eq)] = kv.substr(eq + 1);
        }
    }
    return {name, args};
}

// ---------------------------------------------------------------------------
// PNM

Frame read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SourceError("cannot open " + path.string());
    const std::string magic = read_pnm_token(in);
    if (magic != "P5" && magic != "P6") throw SourceError(path.string() + ": not a binary PGM/PPM");
    const auto w = parse_u64(read_pnm_token(in), "width");
    const auto h = parse_u64(read_pnm_token(in), "height");
    const auto maxval = parse_u64(read_pnm_token(in), "maxval");
    if (maxval != 255) throw SourceError(path.string() + ": only maxval 255 is supported");
    Frame f(checked_dim(w, "width"), checked_dim(h, "height"), magic == "P5" ? 1 : 3);
    in.read(reinterpret_cast<char*>(f.data.data()), std::streamsize(f.data.size()));
    if (in.gcount() != std::streamsize(f.data.size())) throw SourceError(path.string() + ": truncated");
    return f;
}

void write_pnm(const std::filesystem::path& path, const Frame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SourceError("cannot write " + path.string());
    out << (frame.channels == 1 ? "P5" : "P6") << "\n" << frame.width << " " << frame.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(frame.data.data()), std::streamsize(frame.data.size()));
    if (!out) throw SourceError("write failed: " + path.string());
}

PnmSequenceSource::PnmSequenceSource(std::string pattern, std::uint8_t channels, std::uint32_t fps)
    : pattern_(std::move(pattern)), channels_(checked_channels(channels)), fps_(fps) {
    if (pattern_.find('%') == std::string::npos) throw SourceError("PNM pattern needs a %d field: " + pattern_);
    for (int start : {0, 1}) {
        if (std::filesystem::exists(path_for(start))) {
            index_ = start;
            pending_ = convert_channels(read_pnm(path_for(start)), channels_);
            first_ = *pending_;
            ++index_;
            return;
        }
    }
    throw SourceError("no frames match " + pattern_);
}

std::string PnmSequenceSource::path_for(int index) const {
    std::vector<char> buf(pattern_.size() + 32);
    std::snprintf(buf.data(), buf.size(), pattern_.c_str(), index);
    return buf.data();
}

std::optional<Frame> PnmSequenceSource::next() {
    if (pending_) {
        auto f = std::move(pending_);
        pending_.reset();
        return f;
    }
    const auto path = path_for(index_);
    if (!std::filesystem::exists(path)) return std::nullopt;
    ++index_;
    Frame f = convert_channels(read_pnm(path), channels_);
    if (f.width != first_.width || f.height != first_.height)
        throw SourceError(path + ": frame size differs from the first frame");
    return f;
}

// ---------------------------------------------------------------------------
// Y4M

Y4mSource::Y4mSource(const std::filesystem::path& path, std::uint8_t channels)
    : in_(path, std::ios::binary), path_(path.string()), channels_(checked_channels(channels)) {
    if (!in_) throw SourceError("cannot open " + path_);
    std::string header;
    if (!std::getline(in_, header)) throw SourceError(path_ + ": empty file");
    std::istringstream ss(header);
    std::string tok;
    ss >> tok;
    if (tok != "YUV4MPEG2") throw SourceError(path_ + ": no YUV4MPEG2 signature");
    std::uint64_t w = 0, h = 0;
    std::string colorspace = "420jpeg";
    while (ss >> tok) {
        switch (tok[0]) {
        case 'W': w = parse_u64(tok.substr(1), "Y4M width"); break;
        case 'H': h = parse_u64(tok.substr(1), "Y4M height"); break;
        case 'F': {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) throw SourceError(path_ + ": bad frame rate " + tok);
            const auto num = parse_u64(tok.substr(1, colon - 1), "fps numerator");
            const auto den = parse_u64(tok.substr(colon + 1), "fps denominator");
            if (den == 0 || num == 0) throw SourceError(path_ + ": bad frame rate " + tok);
            fps_ = std::uint32_t(std::max<std::uint64_t>(1, (num + den / 2) / den));
            break;
        }
        case 'C': colorspace = tok.substr(1); break;
        case 'I':
            if (tok.size() > 1 && tok[1] != 'p' && tok[1] != '?')
                throw SourceError(path_ + ": interlaced input is not supported");
            break;
        default: break;
        }
    }
    width_ = checked_dim(w, "Y4M width");
    height_ = checked_dim(h, "Y4M height");
    if (colorspace == "mono") {
        mono_ = true;
    } else if (colorspace.rfind("420", 0) == 0) {
        chroma_shift_x_ = chroma_shift_y_ = 1;
    } else if (colorspace == "444") {
        chroma_shift_x_ = chroma_shift_y_ = 0;
    } else {
        throw SourceError(path_ + ": unsupported colorspace C" + colorspace);
    }
}

std::optional<Frame> Y4mSource::next() {
    std::string line;
    if (!std::getline(in_, line)) return std::nullopt;
    if (line.rfind("FRAME", 0) != 0) throw SourceError(path_ + ": expected FRAME marker");
    const std::size_t luma = std::size_t(width_) * height_;
    const std::size_t cw = (width_ + (1u << chroma_shift_x_) - 1) >> chroma_shift_x_;
    const std::size_t ch = (height_ + (1u << chroma_shift_y_) - 1) >> chroma_shift_y_;
    const std::size_t chroma = mono_ ? 0 : cw * ch;
    std::vector<std::uint8_t> raw(luma + 2 * chroma);
    in_.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (in_.gcount() != std::streamsize(raw.size())) throw SourceError(path_ + ": truncated frame");

    Frame f(width_, height_, channels_);
    for (std::size_t y = 0; y < height_; ++y) {
        for (std::size_t x = 0; x < width_; ++x) {
            const std::size_t i = y * width_ + x;
            if (channels_ == 1) {
                f.data[i] = raw[i];
                continue;
            }
            f.data[3 * i] = raw[i];
            if (mono_) {
                f.data[3 * i + 1] = f.data[3 * i + 2] = 128;
            } else {
                const std::size_t ci = (y >> chroma_shift_y_) * cw + (x >> chroma_shift_x_);
                f.data[3 * i + 1] = raw[luma + ci];
                f.data[3 * i + 2] = raw[luma + chroma + ci];
            }
        }
    }
    return f;
}

void write_y4m(const std::filesystem::path& path, const std::vector<Frame>& frames, std::uint32_t fps) {
    if (frames.empty()) throw SourceError("no frames to write");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SourceError("cannot write " + path.string());
    const Frame& f0 = frames.front();
    out << "YUV4MPEG2 W" << f0.width << " H" << f0.height << " F" << fps << ":1 Ip A1:1 "
        << (f0.channels == 1 ? "Cmono" : "C444") << "\n";
    const std::size_t n = std::size_t(f0.width) * f0.height;
    for (const auto& f : frames) {
        out << "FRAME\n";
        for (std::size_t c = 0; c < f.channels; ++c)
            for (std::size_t i = 0; i < n; ++i) out.put(char(f.data[i * f.channels + c]));
    }
}

// ---------------------------------------------------------------------------
// Synthetic framed clips

SynthSource::SynthSource(const std::string& uri) {
    auto [name, args] = parse_uri_query(uri, "synth");
    pattern_ = name;
    args_ = args;
    static const char* known[] = {"constant", "alternate", "gradient", "noise", "square"};
    if (std::find(std::begin(known), std::end(known), pattern_) == std::end(known))
        throw SourceError("unknown synthetic pattern '" + pattern_ + "'");
    width_ = checked_dim(arg_or(args_, "w", 64), "w");
    height_ = checked_dim(arg_or(args_, "h", 64), "h");
    channels_ = checked_channels(arg_or(args_, "channels", 1));
    fps_ = std::uint32_t(std::max<std::uint64_t>(1, arg_or(args_, "fps", 30)));
    frames_ = arg_or(args_, "frames", 120);
    rng_.seed(std::uint32_t(arg_or(args_, "seed", 7)));

    if (auto it = args_.find("black"); it != args_.end()) {
        std::istringstream ss(it->second);
        std::string part;
        std::vector<std::uint64_t> v;
        while (std::getline(ss, part, ',')) v.push_back(parse_u64(part, "black"));
        if (v.size() != 4) throw SourceError("black expects x0,y0,x1,y1");
        RoiRect r{std::uint16_t(v[0]), std::uint16_t(v[1]), std::uint16_t(v[2]), std::uint16_t(v[3])};
        StreamParams geo;
        geo.width = width_;
        geo.height = height_;
        if (!roi_fits(r, geo)) throw SourceError("black region outside plane");
        black_ = r;
    }

    if (pattern_ == "square") {
        // Static blocky texture so the ground is not featureless.
        texture_ = Frame(width_, height_, 1);
        const std::size_t bw = (width_ + 7) / 8, bh = (height_ + 7) / 8;
        std::vector<std::uint8_t> blocks(bw * bh);
        for (auto& b : blocks) b = std::uint8_t(40 + rng_() % 100);
        for (std::size_t y = 0; y < height_; ++y)
            for (std::size_t x = 0; x < width_; ++x) texture_.at(x, y) = blocks[(y / 8) * bw + x / 8];
    }
}

void SynthSource::render(Frame& f, std::uint64_t index) {
    const auto w = f.width, h = f.height;
    auto put = [&](std::size_t x, std::size_t y, std::uint8_t v) {
        for (std::size_t c = 0; c < f.channels; ++c)
            f.at(x, y, c) = c == 0 ? v : std::uint8_t((v + 37 * c) & 0xFF);
    };
    if (pattern_ == "constant") {
        const auto v = std::uint8_t(std::min<std::uint64_t>(255, arg_or(args_, "value", 128)));
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) put(x, y, v);
    } else if (pattern_ == "alternate") {
        const auto v1 = std::uint8_t(std::min<std::uint64_t>(255, arg_or(args_, "v1", 64)));
        const auto v2 = std::uint8_t(std::min<std::uint64_t>(255, arg_or(args_, "v2", 192)));
        const auto v = index % 2 == 0 ? v1 : v2;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) put(x, y, v);
    } else if (pattern_ == "gradient") {
        const auto speed = arg_or(args_, "speed", 0);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t v = (x * 255 / std::max<std::size_t>(1, w - 1) + y * 64 / h + index * speed) % 256;
                put(x, y, std::uint8_t(v));
            }
    } else if (pattern_ == "noise") {
        const auto lo = std::min<std::uint64_t>(255, arg_or(args_, "lo", 0));
        const auto hi = std::max(lo, std::min<std::uint64_t>(255, arg_or(args_, "hi", 255)));
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t c = 0; c < f.channels; ++c)
                    f.at(x, y, c) = std::uint8_t(lo + rng_() % (hi - lo + 1));
    } else {  // square
        const auto size = std::max<std::uint64_t>(1, arg_or(args_, "size", std::max(4, std::min<int>(w, h) / 4)));
        const auto speed = arg_or(args_, "speed", 1);
        const std::uint64_t span_x = w > size ? w - size : 0;
        const std::uint64_t span_y = h > size ? h - size : 0;
        auto bounce = [](std::uint64_t pos, std::uint64_t span) {
            if (span == 0) return std::uint64_t{0};
            const std::uint64_t m = pos % (2 * span);
            return m <= span ? m : 2 * span - m;
        };
        const std::uint64_t sx = bounce(index * speed, span_x);
        const std::uint64_t sy = bounce(index * speed / 2, span_y);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const bool inside = x >= sx && x < sx + size && y >= sy && y < sy + size;
                put(x, y, inside ? 230 : texture_.at(x, y));
            }
    }
    if (black_) {
        for (std::size_t y = black_->y0; y <= black_->y1; ++y)
            for (std::size_t x = black_->x0; x <= black_->x1; ++x)
                for (std::size_t c = 0; c < f.channels; ++c) f.at(x, y, c) = 0;
    }
}

std::optional<Frame> SynthSource::next() {
    if (index_ >= frames_) return std::nullopt;
    Frame f(width_, height_, channels_);
    render(f, index_++);
    return f;
}

// ---------------------------------------------------------------------------
// DVS

DvsCsvSource::DvsCsvSource(const std::filesystem::path& path, std::uint16_t width, std::uint16_t height)
    : in_(path), path_(path.string()), width_(width), height_(height) {
    if (!in_) throw SourceError("cannot open " + path_);
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.empty()) continue;
        if (line[0] != '#') {
            held_line_ = line;
            break;
        }
        std::istringstream ss(line.substr(1));
        std::string kv;
        while (ss >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) continue;
            const auto key = kv.substr(0, eq);
            if (key == "width" && width_ == 0) width_ = checked_dim(parse_u64(kv.substr(eq + 1), key), key);
            if (key == "height" && height_ == 0) height_ = checked_dim(parse_u64(kv.substr(eq + 1), key), key);
        }
    }
    if (width_ == 0 || height_ == 0)
        throw SourceError(path_ + ": unknown DVS geometry (add '# width=W height=H' or pass a size)");
}

std::optional<DvsEvent> DvsCsvSource::next() {
    std::string line;
    for (;;) {
        if (held_line_) {
            line = std::move(*held_line_);
            held_line_.reset();
        } else {
            if (!std::getline(in_, line)) return std::nullopt;
            ++line_no_;
        }
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') break;
    }
    std::istringstream ss(line);
    std::string f[4];
    for (auto& part : f)
        if (!std::getline(ss, part, ','))
            throw SourceError(path_ + ":" + std::to_string(line_no_) + ": expected t_us,x,y,p");
    DvsEvent ev;
    ev.t_us = parse_u64(f[0], "t_us");
    ev.x = std::uint16_t(parse_u64(f[1], "x"));
    ev.y = std::uint16_t(parse_u64(f[2], "y"));
    if (f[3] == "1" || f[3] == "+1") {
        ev.p = 1;
    } else if (f[3] == "-1") {
        ev.p = -1;
    } else {
        throw SourceError(path_ + ":" + std::to_string(line_no_) + ": polarity must be 1 or -1");
    }
    return ev;
}

SynthDvsSource::SynthDvsSource(const std::string& uri) {
    auto [name, args] = parse_uri_query(uri, "synth-dvs");
    if (name != "edge") throw SourceError("unknown synthetic dvs pattern '" + name + "'");
    width_ = checked_dim(arg_or(args, "w", 64), "w");
    height_ = checked_dim(arg_or(args, "h", 64), "h");
    duration_us_ = arg_or(args, "duration_us", 1'000'000);
    step_us_ = std::max<std::uint64_t>(1, arg_or(args, "step_us", 200));
    rng_.seed(std::uint32_t(arg_or(args, "seed", 7)));
}

std::optional<DvsEvent> SynthDvsSource::next() {
    // Each step the edge advances one column: the leading column brightens,
    // the trailing one darkens; one noise event per step.
    for (;;) {
        if (t_us_ > duration_us_) return std::nullopt;
        const std::uint64_t step = t_us_ / step_us_;
        const std::uint64_t phase = t_us_ % step_us_;
        const std::uint16_t col = std::uint16_t(step % width_);
        const std::uint64_t slot = phase;
        ++t_us_;
        if (slot < height_) {
            if (rng_() % 2 == 0) continue;
            return DvsEvent{step * step_us_ + slot, col, std::uint16_t(slot), 1};
        }
        if (slot < 2u * height_ && col > 0) {
            if (rng_() % 2 == 0) continue;
            return DvsEvent{step * step_us_ + slot, std::uint16_t(col - 1), std::uint16_t(slot - height_), -1};
        }
        if (slot == 2u * height_) {
            return DvsEvent{step * step_us_ + slot, std::uint16_t(rng_() % width_),
                            std::uint16_t(rng_() % height_), std::int8_t(rng_() % 2 ? 1 : -1)};
        }
        t_us_ = (step + 1) * step_us_;
    }
}

// ---------------------------------------------------------------------------

bool is_dvs_source(const std::string& source) {
    if (source.rfind("synth-dvs://", 0) == 0) return true;
    const auto ext = std::filesystem::path(source).extension().string();
    return ext == ".csv";
}

std::unique_ptr<FrameSource> open_frame_source(const std::string& source, const SourceOptions& opt) {
    if (source.rfind("synth://", 0) == 0) {
        auto [name, args] = parse_uri_query(source, "synth");
        if (!args.count("channels") && opt.channels != 1) {
            return std::make_unique<SynthSource>(source + (source.find('?') == std::string::npos ? "?" : "&") +
                                                 "channels=" + std::to_string(opt.channels));
        }
        return std::make_unique<SynthSource>(source);
    }
    if (source.find('%') != std::string::npos) return std::make_unique<PnmSequenceSource>(source, opt.channels, opt.fps);
    const auto ext = std::filesystem::path(source).extension().string();
    if (ext == ".y4m") {
        if (!std::filesystem::exists(source)) throw SourceError("no such file: " + source);
        return std::make_unique<Y4mSource>(source, opt.channels);
    }
    if (!std::filesystem::exists(source)) throw SourceError("no such file: " + source);
    throw SourceError("unrecognized framed source: " + source);
}

std::unique_ptr<DvsSource> open_dvs_source(const std::string& source, const SourceOptions& opt) {
    if (source.rfind("synth-dvs://", 0) == 0) return std::make_unique<SynthDvsSource>(source);
    if (!std::filesystem::exists(source)) throw SourceError("no such file: " + source);
    return std::make_unique<DvsCsvSource>(source, opt.dvs_width, opt.dvs_height);
}

}  // namespace adder
