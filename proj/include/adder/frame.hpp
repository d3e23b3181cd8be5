#pragma once

#include <cstdint>
#include <vector>

namespace adder {

/// Interleaved 8-bit image: sample (x, y, c) lives at (y * width + x) * channels + c.
struct Frame {
    std::uint16_t width = 0;
    std::uint16_t height = 0;
    std::uint8_t channels = 1;
    std::vector<std::uint8_t> data;

    Frame() = default;
    Frame(std::uint16_t w, std::uint16_t h, std::uint8_t ch, std::uint8_t fill = 0)
        : width(w), height(h), channels(ch), data(std::size_t(w) * h * ch, fill) {}

    std::size_t index(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return (y * width + x) * channels + c;
    }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return data[index(x, y, c)];
    }
    std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c = 0) {
        return data[index(x, y, c)];
    }

    /// Channel 0 as a standalone grayscale frame.
    Frame luma() const {
        if (channels == 1) return *this;
        Frame g(width, height, 1);
        for (std::size_t i = 0; i < std::size_t(width) * height; ++i) g.data[i] = data[i * channels];
        return g;
    }

    friend bool operator==(const Frame&, const Frame&) = default;
};

}  // namespace adder
