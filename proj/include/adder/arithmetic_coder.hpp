#pragma once

// Integer arithmetic coder (32-bit interval, bit-serial output with
// underflow "follow" bits) and adaptive frequency models.

#include <cstdint>
#include <span>
#include <vector>

namespace adder {

class ArithmeticEncoder {
public:
    /// Narrows the interval to [cum_low, cum_low + freq) out of total.
    /// total must not exceed kMaxTotal.
    void encode(std::uint32_t cum_low, std::uint32_t freq, std::uint32_t total);

    /// Terminates the code stream and returns the bytes.
    std::vector<std::uint8_t> finish();

    static constexpr std::uint32_t kMaxTotal = 1u << 16;

private:
    void put_bit(unsigned bit);
    void emit(unsigned bit);

    std::uint64_t low_ = 0;
    std::uint64_t high_ = 0xFFFFFFFFu;
    std::uint64_t follow_ = 0;
    std::vector<std::uint8_t> out_;
    std::uint8_t cur_ = 0;
    unsigned nbits_ = 0;
};

class ArithmeticDecoder {
public:
    explicit ArithmeticDecoder(std::span<const std::uint8_t> bytes);

    /// Cumulative count the next symbol falls on, in [0, total).
    std::uint32_t target(std::uint32_t total) const;
    void consume(std::uint32_t cum_low, std::uint32_t freq, std::uint32_t total);

    /// True once the decoder has consumed bits beyond the end of the input
    /// by more than the terminating slack.
    bool overrun() const { return pos_bits_ > bytes_.size() * 8 + 64; }

private:
    unsigned next_bit();

    std::span<const std::uint8_t> bytes_;
    std::uint64_t pos_bits_ = 0;
    std::uint64_t low_ = 0;
    std::uint64_t high_ = 0xFFFFFFFFu;
    std::uint64_t value_ = 0;
};

/// Adaptive model over symbols [0, n). Counts start at 1 per symbol, grow by
/// `increment` per coded symbol, and halve once the total reaches 2^16.
class FrequencyModel {
public:
    explicit FrequencyModel(std::size_t symbols, std::uint32_t increment = 32);

    void encode(ArithmeticEncoder& enc, std::size_t symbol);
    std::size_t decode(ArithmeticDecoder& dec);

    std::size_t symbols() const { return freq_.size(); }
    std::uint32_t total() const { return total_; }
    std::uint32_t frequency(std::size_t symbol) const { return freq_[symbol]; }

private:
    void update(std::size_t symbol);

    std::vector<std::uint32_t> freq_;
    std::uint32_t total_ = 0;
    std::uint32_t increment_;
};

}  // namespace adder
