#include "adder/event.hpp"

#include <sstream>

namespace adder {

StreamParams make_params(std::uint16_t width, std::uint16_t height, std::uint8_t channels,
                         std::uint32_t fps, std::uint32_t ref_interval,
                         std::uint32_t dtm_multiple, std::uint8_t crf) {
    StreamParams p;
    p.width = width;
    p.height = height;
    p.channels = channels;
    p.tps = fps * ref_interval;
    p.ref_interval = ref_interval;
    p.delta_t_max = dtm_multiple * ref_interval;
    p.crf = crf;
    return p;
}

Rational intensity_per_tick(Decimation d, std::uint64_t delta_t) {
    if (d == kDZero) throw SentinelDecimation();
    if (d > kDMax) throw InvalidArgument("decimation out of range: " + std::to_string(d));
    if (delta_t == 0) throw InvalidArgument("delta_t must be at least one tick");
    return Rational{std::uint64_t{1} << d, delta_t};
}

std::uint8_t display_value(Decimation d, std::uint64_t delta_t, std::uint32_t ref_interval) {
    if (delta_t == 0) throw InvalidArgument("delta_t must be at least one tick");
    if (d == kDZero) return 0;
    if (d > kDMax) throw InvalidArgument("decimation out of range: " + std::to_string(d));
    // 2^20 * 2^32 fits in 64 bits; 2 * that needs the extra headroom of 128.
    const unsigned __int128 num = (unsigned __int128)(std::uint64_t{1} << d) * ref_interval;
    const unsigned __int128 rounded = (2 * num + delta_t) / (2 * (unsigned __int128)delta_t);
    return rounded > 255 ? 255 : std::uint8_t(rounded);
}

std::vector<std::string> validate_params(const StreamParams& p) {
    std::vector<std::string> v;
    if (p.width < 1) v.emplace_back("width >= 1");
    if (p.height < 1) v.emplace_back("height >= 1");
    if (p.channels != 1 && p.channels != 3) v.emplace_back("channels in {1,3}");
    if (p.ref_interval < 1) v.emplace_back("ref_interval >= 1");
    if (p.delta_t_max < p.ref_interval) v.emplace_back("delta_t_max >= ref_interval");
    if (p.ref_interval >= 1 && p.delta_t_max % p.ref_interval != 0)
        v.emplace_back("delta_t_max multiple of ref_interval");
    if (p.tps < p.ref_interval || p.tps == 0) v.emplace_back("tps >= ref_interval");
    if (p.crf > 9) v.emplace_back("crf in 0..=9");
    return v;
}

void require_valid(const StreamParams& p) {
    const auto v = validate_params(p);
    if (v.empty()) return;
    std::ostringstream os;
    os << "invalid stream params:";
    for (const auto& s : v) os << " [" << s << "]";
    throw InvalidArgument(os.str());
}

}  // namespace adder
