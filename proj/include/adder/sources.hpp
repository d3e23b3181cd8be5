#pragma once

// Input adapters: framed sources (Y4M, numbered PGM/PPM, synthetic clips)
// and DVS polarity-event sources (CSV, synthetic).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "adder/event.hpp"
#include "adder/frame.hpp"
#include "adder/transcoder.hpp"

namespace adder {

class SourceError : public Error {
public:
    using Error::Error;
};

class FrameSource {
public:
    virtual ~FrameSource() = default;
    virtual std::optional<Frame> next() = 0;
    virtual std::uint16_t width() const = 0;
    virtual std::uint16_t height() const = 0;
    virtual std::uint8_t channels() const = 0;
    /// Nominal input frame rate, frames per second.
    virtual std::uint32_t fps() const = 0;
};

class DvsSource {
public:
    virtual ~DvsSource() = default;
    virtual std::optional<DvsEvent> next() = 0;
    virtual std::uint16_t width() const = 0;
    virtual std::uint16_t height() const = 0;
};

/// YUV4MPEG2 reader: mono and 4:2:0 (plus 4:4:4). With channels == 3 the
/// chroma planes are upsampled (nearest) to full resolution.
class Y4mSource : public FrameSource {
public:
    Y4mSource(const std::filesystem::path& path, std::uint8_t channels);
    std::optional<Frame> next() override;
    std::uint16_t width() const override { return width_; }
    std::uint16_t height() const override { return height_; }
    std::uint8_t channels() const override { return channels_; }
    std::uint32_t fps() const override { return fps_; }

private:
    std::ifstream in_;
    std::string path_;
    std::uint16_t width_ = 0, height_ = 0;
    std::uint8_t channels_ = 1;
    std::uint32_t fps_ = 30;
    bool mono_ = false;
    int chroma_shift_x_ = 1, chroma_shift_y_ = 1;
};

/// Numbered PGM/PPM sequence given as a printf pattern, e.g. "dir/f_%04d.pgm".
/// Numbering starts at 0 or 1, whichever exists.
class PnmSequenceSource : public FrameSource {
public:
    PnmSequenceSource(std::string pattern, std::uint8_t channels, std::uint32_t fps = 30);
    std::optional<Frame> next() override;
    std::uint16_t width() const override { return first_.width; }
    std::uint16_t height() const override { return first_.height; }
    std::uint8_t channels() const override { return channels_; }
    std::uint32_t fps() const override { return fps_; }

private:
    std::string path_for(int index) const;

    std::string pattern_;
    std::uint8_t channels_;
    std::uint32_t fps_;
    int index_ = 0;
    std::optional<Frame> pending_;
    Frame first_;
};

/// Seeded synthetic clips, selected by `synth://<pattern>?key=value&...`.
///
/// Patterns: constant (value), alternate (v1, v2), gradient, noise (lo, hi),
/// square (moving bright square over a textured ground; size, speed).
/// Common keys: w, h, frames, channels, fps, seed, black=x0,y0,x1,y1 (a
/// region forced to 0 in every frame).
class SynthSource : public FrameSource {
public:
    explicit SynthSource(const std::string& uri);
    std::optional<Frame> next() override;
    std::uint16_t width() const override { return width_; }
    std::uint16_t height() const override { return height_; }
    std::uint8_t channels() const override { return channels_; }
    std::uint32_t fps() const override { return fps_; }

private:
    void render(Frame& f, std::uint64_t index);

    std::string pattern_;
    std::map<std::string, std::string> args_;
    std::uint16_t width_ = 64, height_ = 64;
    std::uint8_t channels_ = 1;
    std::uint32_t fps_ = 30;
    std::uint64_t frames_ = 120;
    std::uint64_t index_ = 0;
    std::mt19937 rng_;
    Frame texture_;
    std::optional<RoiRect> black_;
};

/// CSV lines `t_us,x,y,p` with p in {1,-1}. Blank lines and `#` comments are
/// skipped; a leading `# width=W height=H` comment supplies the geometry.
class DvsCsvSource : public DvsSource {
public:
    explicit DvsCsvSource(const std::filesystem::path& path, std::uint16_t width = 0,
                          std::uint16_t height = 0);
    std::optional<DvsEvent> next() override;
    std::uint16_t width() const override { return width_; }
    std::uint16_t height() const override { return height_; }

private:
    std::ifstream in_;
    std::string path_;
    std::uint64_t line_no_ = 0;
    std::uint16_t width_ = 0, height_ = 0;
    std::optional<std::string> held_line_;
};

/// `synth-dvs://edge?w=..&h=..&duration_us=..&step_us=..&seed=..`: a vertical
/// edge sweeping across the plane plus sparse background noise.
class SynthDvsSource : public DvsSource {
public:
    explicit SynthDvsSource(const std::string& uri);
    std::optional<DvsEvent> next() override;
    std::uint16_t width() const override { return width_; }
    std::uint16_t height() const override { return height_; }

private:
    std::uint16_t width_ = 64, height_ = 64;
    std::uint64_t duration_us_ = 1'000'000;
    std::uint64_t step_us_ = 50;
    std::uint64_t t_us_ = 0;
    std::mt19937 rng_;
};

struct SourceOptions {
    std::uint8_t channels = 1;
    std::uint32_t fps = 30;              // PNM sequences carry no rate
    std::uint16_t dvs_width = 0;         // CSV DVS geometry override
    std::uint16_t dvs_height = 0;
};

bool is_dvs_source(const std::string& source);
std::unique_ptr<FrameSource> open_frame_source(const std::string& source, const SourceOptions& opt = {});
std::unique_ptr<DvsSource> open_dvs_source(const std::string& source, const SourceOptions& opt = {});

/// Parses `scheme://name?k=v&k2=v2` into name and arguments.
std::pair<std::string, std::map<std::string, std::string>> parse_uri_query(const std::string& uri,
                                                                          const std::string& scheme);

// PNM helpers (binary P5/P6, maxval 255).
Frame read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Frame& frame);
/// Writes frames as a YUV4MPEG2 file (mono for 1 channel, 4:4:4 for 3).
void write_y4m(const std::filesystem::path& path, const std::vector<Frame>& frames, std::uint32_t fps);

}  // namespace adder
