#pragma once

// `.adder` container.
//
// Header (24 bytes, little-endian):
//   magic "ADDER" | version u8 (=1) | codec u8 (0 raw, 1 compressed) |
//   width u16 | height u16 | channels u8 | tps u32 | ref_interval u32 |
//   delta_t_max u32
//
// Raw body: fixed records x u16, y u16, [c u8 when channels > 1], d u8, t u32.
// Compressed body: chunks of start_t u32, event_count u32, payload_bytes u32,
// payload. Each chunk holds the events of one delta_t_max-aligned window.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "adder/event.hpp"

namespace adder {

enum class CodecId : std::uint8_t { raw = 0, compressed = 1 };

inline constexpr std::size_t kHeaderSize = 24;
inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::array<std::uint8_t, 5> kMagic{'A', 'D', 'D', 'E', 'R'};

class CodecError : public Error {
public:
    using Error::Error;
};
class BadMagic : public CodecError {
public:
    BadMagic() : CodecError("bad magic") {}
};
class UnsupportedVersion : public CodecError {
public:
    explicit UnsupportedVersion(unsigned v) : CodecError("unsupported version " + std::to_string(v)) {}
};
class UnknownCodec : public CodecError {
public:
    explicit UnknownCodec(unsigned c) : CodecError("unknown codec id " + std::to_string(c)) {}
};
class InvalidHeader : public CodecError {
public:
    using CodecError::CodecError;
};
class Truncated : public CodecError {
public:
    explicit Truncated(std::size_t recovered)
        : CodecError("truncated stream (" + std::to_string(recovered) + " events recovered)"),
          recovered_(recovered) {}
    std::size_t recovered() const { return recovered_; }

private:
    std::size_t recovered_;
};
class CorruptPayload : public CodecError {
public:
    using CodecError::CodecError;
};
class UnsortedEvents : public CodecError {
public:
    using CodecError::CodecError;
};
class EventOutOfPlane : public CodecError {
public:
    using CodecError::CodecError;
};
class WindowViolation : public CodecError {
public:
    using CodecError::CodecError;
};

std::size_t record_size(std::uint8_t channels);

std::array<std::uint8_t, kHeaderSize> encode_header(const StreamParams& params, CodecId codec);

struct StreamHeader {
    StreamParams params;
    CodecId codec = CodecId::raw;
};
StreamHeader decode_header(std::span<const std::uint8_t> bytes);

struct CodedChunk {
    std::uint32_t start_t = 0;
    std::uint32_t event_count = 0;
    std::vector<std::uint8_t> payload;
};

/// Start of the delta_t_max-aligned window containing t.
inline std::uint32_t chunk_start(std::uint32_t t, std::uint32_t delta_t_max) {
    return t / delta_t_max * delta_t_max;
}

/// Called between pixel rows while a chunk is being coded.
using RowHook = std::function<void()>;

/// Pixel-major adaptive arithmetic coding of one window
/// [start_t, start_t + delta_t_max). Events must be canonically sorted.
CodedChunk compress_chunk(std::span<const Event> events, const StreamParams& params, std::uint32_t start_t,
                          const RowHook& between_rows = {});
std::vector<Event> decompress_chunk(const CodedChunk& chunk, const StreamParams& params);

std::vector<std::uint8_t> write_stream(const StreamParams& params, std::span<const Event> events, CodecId codec);

struct DecodedStream {
    StreamParams params;
    CodecId codec = CodecId::raw;
    std::vector<Event> events;
    std::size_t byte_size = 0;
};
DecodedStream read_stream(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Incremental writer used by the compressor worker. Events must arrive in
/// canonical order across calls.
class StreamWriter {
public:
    StreamWriter(std::ostream& out, const StreamParams& params, CodecId codec);
    void append(std::span<const Event> events);
    void finish();

    /// Lets the owner interleave other work with long chunk encodes.
    void set_row_hook(RowHook hook) { row_hook_ = std::move(hook); }

    std::uint64_t bytes_written() const { return bytes_; }
    std::uint64_t events_written() const { return events_; }

private:
    void put(std::span<const std::uint8_t> bytes);
    void flush_window();

    std::ostream& out_;
    StreamParams params_;
    CodecId codec_;
    std::vector<Event> window_;
    std::uint32_t window_start_ = 0;
    std::optional<Event> last_;
    std::uint64_t bytes_ = 0;
    std::uint64_t events_ = 0;
    bool finished_ = false;
    RowHook row_hook_;
};

struct StreamInfo {
    StreamParams params;
    CodecId codec = CodecId::raw;
    std::uint64_t event_count = 0;
    std::uint64_t duration_ticks = 0;  // last event tick; streams start at tick 0
    double duration_s = 0;
    double events_per_sec = 0;
    std::uint64_t file_bytes = 0;
    std::uint64_t raw_equivalent_bytes = 0;
    std::optional<double> compression_ratio;  // compressed / raw, codec 1 only
};

StreamInfo inspect(std::span<const std::uint8_t> bytes);
std::string format_report(const StreamInfo& info);

}  // namespace adder
