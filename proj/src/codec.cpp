#include "adder/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "adder/arithmetic_coder.hpp"

namespace adder {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}
std::uint16_t get_u16(const std::uint8_t* p) { return std::uint16_t(p[0] | (p[1] << 8)); }
std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

void check_event(const Event& e, const StreamParams& p) {
    if (e.x >= p.width || e.y >= p.height || e.c >= p.channels)
        throw EventOutOfPlane("event at (" + std::to_string(e.x) + "," + std::to_string(e.y) + "," +
                              std::to_string(e.c) + ") outside " + std::to_string(p.width) + "x" +
                              std::to_string(p.height) + "x" + std::to_string(p.channels));
    if (!is_valid_decimation(e.d)) throw EventOutOfPlane("invalid decimation " + std::to_string(e.d));
}

void check_sorted(std::span<const Event> events) {
    for (std::size_t i = 1; i < events.size(); ++i)
        if (canonical_less(events[i], events[i - 1]))
            throw UnsortedEvents("events not in (t, y, x, c) order at index " + std::to_string(i));
}

void put_record(std::vector<std::uint8_t>& out, const Event& e, std::uint8_t channels) {
    put_u16(out, e.x);
    put_u16(out, e.y);
    if (channels > 1) out.push_back(e.c);
    out.push_back(e.d);
    put_u32(out, e.t);
}

// --- chunk entropy models ---------------------------------------------------

constexpr std::size_t kDSymbols = kDMax + 2;  // 0..=20 plus D_ZERO
std::size_t d_symbol(Decimation d) { return d == kDZero ? kDSymbols - 1 : d; }
Decimation symbol_d(std::size_t s) { return s == kDSymbols - 1 ? kDZero : Decimation(s); }

/// Elias-gamma style: the bit length is coded adaptively, then the bits
/// below the leading one, each under its own (length, position) context.
// Elias-gamma style: adaptive bit length, then the top mantissa bits under
// per-length contexts. The low bits are close to uniform and go out as one
// flat-probability symbol per 16 bits.
class GammaModel {
public:
    static constexpr int kModelledBits = 2;

    GammaModel() : lengths_(65), bits_(65 * kModelledBits, FrequencyModel(2)) {}

    void encode(ArithmeticEncoder& enc, std::uint64_t v) {
        const int n = std::bit_width(v);
        lengths_.encode(enc, std::size_t(n));
        int b = n - 2;
        for (int k = 0; k < kModelledBits && b >= 0; ++k, --b)
            bits_[std::size_t(n * kModelledBits + k)].encode(enc, std::size_t(v >> b) & 1u);
        for (int rest = b + 1; rest > 0;) {
            const int take = std::min(rest, 16);
            rest -= take;
            enc.encode(std::uint32_t(v >> rest) & ((1u << take) - 1), 1, 1u << take);
        }
    }

    std::uint64_t decode(ArithmeticDecoder& dec) {
        const int n = int(lengths_.decode(dec));
        if (n == 0) return 0;
        std::uint64_t v = 1;
        int b = n - 2;
        for (int k = 0; k < kModelledBits && b >= 0; ++k, --b)
            v = (v << 1) | std::uint64_t(bits_[std::size_t(n * kModelledBits + k)].decode(dec));
        for (int rest = b + 1; rest > 0;) {
            const int take = std::min(rest, 16);
            rest -= take;
            const std::uint32_t total = 1u << take;
            const std::uint32_t low = dec.target(total);
            dec.consume(low, 1, total);
            v = (v << take) | low;
        }
        return v;
    }

private:
    FrequencyModel lengths_;
    std::vector<FrequencyModel> bits_;
};

// Per-pixel event counts: small counts are one adaptive symbol, the last
// symbol escapes to a gamma code of the excess.
class CountModel {
public:
    static constexpr std::uint32_t kDirect = 23;

    void encode(ArithmeticEncoder& enc, std::uint32_t n) {
        direct_.encode(enc, std::min(n, kDirect));
        if (n >= kDirect) excess_.encode(enc, n - kDirect);
    }

    std::uint32_t decode(ArithmeticDecoder& dec) {
        const auto n = std::uint32_t(direct_.decode(dec));
        return n < kDirect ? n : std::uint32_t(kDirect + excess_.decode(dec));
    }

private:
    FrequencyModel direct_{kDirect + 1};
    GammaModel excess_;
};

enum Relation : std::size_t { kEqual = 0, kLower = 1, kHigher = 2 };

// From a pixel's third event on, d relation and delta are one symbol: with d
// unchanged a steady pixel repeats its interval up to the +-1 of floored
// crossing ticks, so the common cases cost a single coded symbol.
enum Step : std::size_t { kSame = 0, kMinusOne = 1, kPlusOne = 2, kEqualOther = 3, kStepLower = 4, kStepHigher = 5 };

struct ChunkModels {
    GammaModel gap;    // unoccupied pixels skipped before an occupied one
    CountModel count;  // events at an occupied pixel, minus one
    GammaModel delta_first;
    GammaModel delta_next;
    FrequencyModel d_first{kDSymbols};
    FrequencyModel d_lower{kDSymbols};
    FrequencyModel d_higher{kDSymbols};
    FrequencyModel second{3};  // relation of the second event's d to the first
    // context: relation of the previous event's d to its predecessor
    std::array<FrequencyModel, 3> step{FrequencyModel(6), FrequencyModel(6), FrequencyModel(6)};
};

}  // namespace

std::size_t record_size(std::uint8_t channels) { return channels > 1 ? 10 : 9; }

std::array<std::uint8_t, kHeaderSize> encode_header(const StreamParams& params, CodecId codec) {
    require_valid(params);
    std::vector<std::uint8_t> v(kMagic.begin(), kMagic.end());
    v.push_back(kFormatVersion);
    v.push_back(std::uint8_t(codec));
    put_u16(v, params.width);
    put_u16(v, params.height);
    v.push_back(params.channels);
    put_u32(v, params.tps);
    put_u32(v, params.ref_interval);
    put_u32(v, params.delta_t_max);
    std::array<std::uint8_t, kHeaderSize> out{};
    std::copy(v.begin(), v.end(), out.begin());
    return out;
}

StreamHeader decode_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kMagic.size() || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
        if (bytes.size() < kMagic.size() &&
            std::equal(bytes.begin(), bytes.end(), kMagic.begin()))
            throw Truncated(0);
        throw BadMagic();
    }
    if (bytes.size() < kHeaderSize) throw Truncated(0);
    const std::uint8_t* p = bytes.data();
    if (p[5] != kFormatVersion) throw UnsupportedVersion(p[5]);
    if (p[6] > 1) throw UnknownCodec(p[6]);
    StreamHeader h;
    h.codec = CodecId(p[6]);
    h.params.width = get_u16(p + 7);
    h.params.height = get_u16(p + 9);
    h.params.channels = p[11];
    h.params.tps = get_u32(p + 12);
    h.params.ref_interval = get_u32(p + 16);
    h.params.delta_t_max = get_u32(p + 20);
    const auto violations = validate_params(h.params);
    if (!violations.empty()) throw InvalidHeader("invalid header params: " + violations.front());
    return h;
}

CodedChunk compress_chunk(std::span<const Event> events, const StreamParams& params, std::uint32_t start_t,
                          const RowHook& between_rows) {
    require_valid(params);
    // The passes over all events yield to the hook every kHookStride events.
    constexpr std::size_t kHookStride = 8192;
    auto tick = [&](std::size_t i) {
        if (between_rows && i % kHookStride == kHookStride - 1) between_rows();
    };
    const std::size_t n_pix = params.pixel_count();
    auto pixel_of = [&](const Event& e) {
        return (std::size_t(e.y) * params.width + e.x) * params.channels + e.c;
    };
    const std::uint64_t window_end = std::uint64_t(start_t) + params.delta_t_max;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const Event& e = events[i];
        if (i > 0 && canonical_less(e, events[i - 1]))
            throw UnsortedEvents("events not in (t, y, x, c) order at index " + std::to_string(i));
        check_event(e, params);
        if (e.t < start_t || e.t >= window_end)
            throw WindowViolation("event tick " + std::to_string(e.t) + " outside window [" +
                                  std::to_string(start_t) + ", " + std::to_string(window_end) + ")");
        tick(i);
    }
    CodedChunk chunk;
    chunk.start_t = start_t;
    chunk.event_count = std::uint32_t(events.size());
    if (events.empty()) return chunk;

    // Regroup pixel-major, keeping time order within a pixel: a counting
    // sort when the plane is small next to the chunk, else a stable sort.
    std::vector<Event> grouped(events.begin(), events.end());
    if (n_pix <= 4 * events.size()) {
        std::vector<std::uint32_t> fill(n_pix + 1, 0);
        for (const auto& e : events) ++fill[pixel_of(e) + 1];
        for (std::size_t i = 0; i < n_pix; ++i) fill[i + 1] += fill[i];
        for (std::size_t i = 0; i < events.size(); ++i) {
            grouped[fill[pixel_of(events[i])]++] = events[i];
            tick(i);
        }
    } else {
        std::stable_sort(grouped.begin(), grouped.end(),
                         [&](const Event& a, const Event& b) { return pixel_of(a) < pixel_of(b); });
    }

    // Only occupied pixels are coded: the gap from the previous occupied
    // pixel, then the event count.
    ArithmeticEncoder enc;
    ChunkModels m;
    const std::size_t row = std::size_t(params.width) * params.channels;
    std::size_t next_pixel = 0;
    for (std::size_t begin = 0; begin < grouped.size();) {
        const std::size_t p = pixel_of(grouped[begin]);
        std::size_t end = begin + 1;
        while (end < grouped.size() && pixel_of(grouped[end]) == p) ++end;
        if (between_rows && p / row != next_pixel / row) between_rows();
        m.gap.encode(enc, p - next_pixel);
        m.count.encode(enc, std::uint32_t(end - begin - 1));
        next_pixel = p + 1;
        std::size_t prev_sym = 0, rel_ctx = 0;
        std::uint32_t prev_t = start_t, prev_delta = 0;
        for (std::size_t k = begin; k < end; ++k) {
            const Event& e = grouped[k];
            const std::size_t sym = d_symbol(e.d);
            const std::uint32_t delta = e.t - prev_t;
            if (k == begin) {
                m.d_first.encode(enc, sym);
                m.delta_first.encode(enc, delta);
            } else {
                const Relation rel = sym == prev_sym ? kEqual : (sym < prev_sym ? kLower : kHigher);
                if (k == begin + 1) {
                    m.second.encode(enc, rel);
                    if (rel == kLower) m.d_lower.encode(enc, sym);
                    if (rel == kHigher) m.d_higher.encode(enc, sym);
                    m.delta_next.encode(enc, delta);
                } else if (rel == kEqual) {
                    const Step st = delta == prev_delta       ? kSame
                                    : delta + 1 == prev_delta ? kMinusOne
                                    : delta == prev_delta + 1 ? kPlusOne
                                                              : kEqualOther;
                    m.step[rel_ctx].encode(enc, st);
                    if (st == kEqualOther) m.delta_next.encode(enc, delta);
                } else {
                    m.step[rel_ctx].encode(enc, rel == kLower ? kStepLower : kStepHigher);
                    if (rel == kLower) m.d_lower.encode(enc, sym);
                    else m.d_higher.encode(enc, sym);
                    m.delta_next.encode(enc, delta);
                }
                rel_ctx = rel;
            }
            prev_sym = sym;
            prev_t = e.t;
            prev_delta = delta;
        }
        begin = end;
    }
    chunk.payload = enc.finish();
    return chunk;
}

std::vector<Event> decompress_chunk(const CodedChunk& chunk, const StreamParams& params) {
    require_valid(params);
    std::vector<Event> out;
    if (chunk.event_count == 0) {
        if (!chunk.payload.empty()) throw CorruptPayload("empty chunk carries a payload");
        return out;
    }
    out.reserve(chunk.event_count);
    const std::uint64_t window_end = std::uint64_t(chunk.start_t) + params.delta_t_max;
    ArithmeticDecoder dec(chunk.payload);
    ChunkModels m;
    const std::size_t n_pix = params.pixel_count();
    std::size_t next_pixel = 0;
    while (out.size() < chunk.event_count) {
        const std::size_t p = next_pixel + m.gap.decode(dec);
        if (p >= n_pix) throw CorruptPayload("occupied pixel beyond the plane");
        next_pixel = p + 1;
        const std::uint64_t count = std::uint64_t(m.count.decode(dec)) + 1;
        if (count > chunk.event_count - out.size()) throw CorruptPayload("per-pixel counts exceed event_count");
        const auto c = std::uint8_t(p % params.channels);
        const std::size_t xy = p / params.channels;
        const auto x = std::uint16_t(xy % params.width);
        const auto y = std::uint16_t(xy / params.width);
        std::size_t prev_sym = 0, rel_ctx = 0;
        std::uint64_t prev_t = chunk.start_t;
        std::uint64_t prev_delta = 0;
        for (std::uint32_t k = 0; k < count; ++k) {
            std::size_t sym;
            std::uint64_t delta;
            if (k == 0) {
                sym = m.d_first.decode(dec);
                delta = m.delta_first.decode(dec);
            } else {
                Relation rel;
                if (k == 1) {
                    rel = Relation(m.second.decode(dec));
                    if (rel == kEqual) sym = prev_sym;
                    else if (rel == kLower) sym = m.d_lower.decode(dec);
                    else sym = m.d_higher.decode(dec);
                    delta = m.delta_next.decode(dec);
                } else {
                    const auto st = Step(m.step[rel_ctx].decode(dec));
                    rel = st == kStepLower ? kLower : st == kStepHigher ? kHigher : kEqual;
                    if (rel == kEqual) sym = prev_sym;
                    else if (rel == kLower) sym = m.d_lower.decode(dec);
                    else sym = m.d_higher.decode(dec);
                    switch (st) {
                    case kSame: delta = prev_delta; break;
                    case kMinusOne: delta = prev_delta - 1; break;
                    case kPlusOne: delta = prev_delta + 1; break;
                    default: delta = m.delta_next.decode(dec); break;
                    }
                }
                rel_ctx = rel;
            }
            if (delta >= window_end - prev_t) throw CorruptPayload("decoded tick outside chunk window");
            const std::uint64_t t = prev_t + delta;
            out.push_back(Event{x, y, c, symbol_d(sym), std::uint32_t(t)});
            prev_sym = sym;
            prev_t = t;
            prev_delta = delta;
        }
        if (dec.overrun()) throw CorruptPayload("payload exhausted");
    }
    std::stable_sort(out.begin(), out.end(), canonical_less);
    return out;
}

std::vector<std::uint8_t> write_stream(const StreamParams& params, std::span<const Event> events, CodecId codec) {
    if (codec != CodecId::raw && codec != CodecId::compressed) throw UnknownCodec(unsigned(codec));
    require_valid(params);
    check_sorted(events);
    for (const auto& e : events) check_event(e, params);

    const auto header = encode_header(params, codec);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    if (codec == CodecId::raw) {
        out.reserve(out.size() + events.size() * record_size(params.channels));
        for (const auto& e : events) put_record(out, e, params.channels);
        return out;
    }
    std::size_t i = 0;
    while (i < events.size()) {
        const std::uint32_t start = chunk_start(events[i].t, params.delta_t_max);
        std::size_t j = i;
        while (j < events.size() && chunk_start(events[j].t, params.delta_t_max) == start) ++j;
        const auto chunk = compress_chunk(events.subspan(i, j - i), params, start);
        put_u32(out, chunk.start_t);
        put_u32(out, chunk.event_count);
        put_u32(out, std::uint32_t(chunk.payload.size()));
        out.insert(out.end(), chunk.payload.begin(), chunk.payload.end());
        i = j;
    }
    return out;
}

DecodedStream read_stream(std::span<const std::uint8_t> bytes) {
    const StreamHeader h = decode_header(bytes);
    DecodedStream s;
    s.params = h.params;
    s.codec = h.codec;
    s.byte_size = bytes.size();
    std::size_t pos = kHeaderSize;
    if (h.codec == CodecId::raw) {
        const std::size_t rec = record_size(h.params.channels);
        const std::size_t n = (bytes.size() - pos) / rec;
        s.events.reserve(n);
        for (std::size_t k = 0; k < n; ++k, pos += rec) {
            const std::uint8_t* p = bytes.data() + pos;
            Event e;
            e.x = get_u16(p);
            e.y = get_u16(p + 2);
            std::size_t o = 4;
            if (h.params.channels > 1) e.c = p[o++];
            e.d = p[o++];
            e.t = get_u32(p + o);
            s.events.push_back(e);
        }
        if (pos != bytes.size()) throw Truncated(s.events.size());
        return s;
    }
    std::optional<std::uint32_t> prev_start;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < 12) throw Truncated(s.events.size());
        CodedChunk chunk;
        chunk.start_t = get_u32(bytes.data() + pos);
        chunk.event_count = get_u32(bytes.data() + pos + 4);
        const std::uint32_t len = get_u32(bytes.data() + pos + 8);
        pos += 12;
        if (bytes.size() - pos < len) throw Truncated(s.events.size());
        if (chunk.start_t % h.params.delta_t_max != 0 || (prev_start && chunk.start_t <= *prev_start))
            throw CorruptPayload("chunk windows out of order");
        prev_start = chunk.start_t;
        chunk.payload.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + len));
        pos += len;
        const auto events = decompress_chunk(chunk, h.params);
        s.events.insert(s.events.end(), events.begin(), events.end());
    }
    return s;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

// --- StreamWriter -----------------------------------------------------------

StreamWriter::StreamWriter(std::ostream& out, const StreamParams& params, CodecId codec)
    : out_(out), params_(params), codec_(codec) {
    const auto header = encode_header(params, codec);
    put(header);
}

void StreamWriter::put(std::span<const std::uint8_t> bytes) {
    out_.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out_) throw Error("stream write failed");
    bytes_ += bytes.size();
}

void StreamWriter::flush_window() {
    if (window_.empty()) return;
    const auto chunk = compress_chunk(window_, params_, window_start_, row_hook_);
    std::vector<std::uint8_t> head;
    put_u32(head, chunk.start_t);
    put_u32(head, chunk.event_count);
    put_u32(head, std::uint32_t(chunk.payload.size()));
    put(head);
    put(chunk.payload);
    window_.clear();
}

void StreamWriter::append(std::span<const Event> events) {
    if (finished_) throw Error("stream writer already finished");
    std::vector<std::uint8_t> buf;
    for (const auto& e : events) {
        check_event(e, params_);
        if (last_ && canonical_less(e, *last_)) throw UnsortedEvents("events appended out of order");
        last_ = e;
        ++events_;
        if (codec_ == CodecId::raw) {
            put_record(buf, e, params_.channels);
            continue;
        }
        const std::uint32_t start = chunk_start(e.t, params_.delta_t_max);
        if (!window_.empty() && start != window_start_) flush_window();
        window_start_ = start;
        window_.push_back(e);
    }
    if (!buf.empty()) put(buf);
}

void StreamWriter::finish() {
    if (finished_) return;
    flush_window();
    out_.flush();
    finished_ = true;
}

// --- inspect ----------------------------------------------------------------

StreamInfo inspect(std::span<const std::uint8_t> bytes) {
    const auto s = read_stream(bytes);
    StreamInfo info;
    info.params = s.params;
    info.codec = s.codec;
    info.event_count = s.events.size();
    info.duration_ticks = s.events.empty() ? 0 : s.events.back().t;
    info.duration_s = double(info.duration_ticks) / s.params.tps;
    info.events_per_sec = info.duration_s > 0 ? double(info.event_count) / info.duration_s : 0.0;
    info.file_bytes = bytes.size();
    info.raw_equivalent_bytes = kHeaderSize + info.event_count * record_size(s.params.channels);
    if (s.codec == CodecId::compressed)
        info.compression_ratio = double(info.file_bytes) / double(info.raw_equivalent_bytes);
    return info;
}

std::string format_report(const StreamInfo& info) {
    std::ostringstream os;
    os << "codec:          " << (info.codec == CodecId::raw ? "raw" : "compressed") << "\n"
       << "width:          " << info.params.width << "\n"
       << "height:         " << info.params.height << "\n"
       << "channels:       " << unsigned(info.params.channels) << "\n"
       << "tps:            " << info.params.tps << "\n"
       << "ref_interval:   " << info.params.ref_interval << "\n"
       << "delta_t_max:    " << info.params.delta_t_max << "\n"
       << "events:         " << info.event_count << "\n"
       << "duration_ticks: " << info.duration_ticks << "\n"
       << "duration_s:     " << std::fixed << std::setprecision(6) << info.duration_s << "\n"
       << "events_per_sec: " << std::setprecision(2) << info.events_per_sec << "\n"
       << "file_bytes:     " << info.file_bytes << "\n";
    if (info.compression_ratio) os << "ratio:          " << std::setprecision(4) << *info.compression_ratio << "\n";
    return os.str();
}

}  // namespace adder
