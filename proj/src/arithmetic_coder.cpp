#include "adder/arithmetic_coder.hpp"

#include <stdexcept>

namespace adder {

namespace {
constexpr std::uint64_t kHalf = 0x80000000u;
constexpr std::uint64_t kQuarter = 0x40000000u;
constexpr std::uint64_t kThreeQuarters = 0xC0000000u;
}  // namespace

void ArithmeticEncoder::encode(std::uint32_t cum_low, std::uint32_t freq, std::uint32_t total) {
    if (freq == 0 || total == 0 || total > kMaxTotal || cum_low + freq > total)
        throw std::invalid_argument("arithmetic encoder: bad symbol interval");
    // One division per symbol; the remainder of range / total is left unused.
    const std::uint64_t unit = (high_ - low_ + 1) / total;
    high_ = low_ + unit * (cum_low + freq) - 1;
    low_ = low_ + unit * cum_low;
    for (;;) {
        if (high_ < kHalf) {
            put_bit(0);
        } else if (low_ >= kHalf) {
            put_bit(1);
            low_ -= kHalf;
            high_ -= kHalf;
        } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
            ++follow_;
            low_ -= kQuarter;
            high_ -= kQuarter;
        } else {
            break;
        }
        low_ <<= 1;
        high_ = (high_ << 1) | 1;
    }
}

void ArithmeticEncoder::emit(unsigned bit) {
    cur_ = std::uint8_t((cur_ << 1) | bit);
    if (++nbits_ == 8) {
        out_.push_back(cur_);
        cur_ = 0;
        nbits_ = 0;
    }
}

void ArithmeticEncoder::put_bit(unsigned bit) {
    emit(bit);
    for (; follow_ > 0; --follow_) emit(bit ^ 1u);
}

std::vector<std::uint8_t> ArithmeticEncoder::finish() {
    ++follow_;
    put_bit(low_ < kQuarter ? 0 : 1);
    if (nbits_ > 0) {
        out_.push_back(std::uint8_t(cur_ << (8 - nbits_)));
        cur_ = 0;
        nbits_ = 0;
    }
    return std::move(out_);
}

ArithmeticDecoder::ArithmeticDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {
    for (int i = 0; i < 32; ++i) value_ = (value_ << 1) | next_bit();
}

unsigned ArithmeticDecoder::next_bit() {
    const std::uint64_t p = pos_bits_++;
    if (p / 8 >= bytes_.size()) return 0;
    return (bytes_[p / 8] >> (7 - p % 8)) & 1u;
}

std::uint32_t ArithmeticDecoder::target(std::uint32_t total) const {
    const std::uint64_t t = (value_ - low_) / ((high_ - low_ + 1) / total);
    return std::uint32_t(t >= total ? total - 1 : t);
}

void ArithmeticDecoder::consume(std::uint32_t cum_low, std::uint32_t freq, std::uint32_t total) {
    const std::uint64_t unit = (high_ - low_ + 1) / total;
    high_ = low_ + unit * (cum_low + freq) - 1;
    low_ = low_ + unit * cum_low;
    for (;;) {
        if (high_ < kHalf) {
        } else if (low_ >= kHalf) {
            value_ -= kHalf;
            low_ -= kHalf;
            high_ -= kHalf;
        } else if (low_ >= kQuarter && high_ < kThreeQuarters) {
            value_ -= kQuarter;
            low_ -= kQuarter;
            high_ -= kQuarter;
        } else {
            break;
        }
        low_ <<= 1;
        high_ = (high_ << 1) | 1;
        value_ = (value_ << 1) | next_bit();
    }
}

FrequencyModel::FrequencyModel(std::size_t symbols, std::uint32_t increment)
    : freq_(symbols, 1), total_(std::uint32_t(symbols)), increment_(increment) {
    if (symbols == 0 || symbols > ArithmeticEncoder::kMaxTotal / 2)
        throw std::invalid_argument("frequency model: bad alphabet size");
}

void FrequencyModel::update(std::size_t symbol) {
    freq_[symbol] += increment_;
    total_ += increment_;
    if (total_ >= ArithmeticEncoder::kMaxTotal) {
        total_ = 0;
        for (auto& f : freq_) {
            f = (f + 1) / 2;
            total_ += f;
        }
    }
}

void FrequencyModel::encode(ArithmeticEncoder& enc, std::size_t symbol) {
    if (symbol >= freq_.size()) throw std::out_of_range("frequency model: symbol out of alphabet");
    std::uint32_t cum = 0;
    for (std::size_t i = 0; i < symbol; ++i) cum += freq_[i];
    enc.encode(cum, freq_[symbol], total_);
    update(symbol);
}

std::size_t FrequencyModel::decode(ArithmeticDecoder& dec) {
    const std::uint32_t t = dec.target(total_);
    std::uint32_t cum = 0;
    std::size_t s = 0;
    while (cum + freq_[s] <= t) cum += freq_[s++];
    dec.consume(cum, freq_[s], total_);
    update(s);
    return s;
}

}  // namespace adder
