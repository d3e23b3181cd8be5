#pragma once

// Per-pixel asynchronous integration. A pixel accumulates intensity
// continuously; an event fires the instant the accumulator reaches 2^d
// units, or when delta_t_max ticks pass without one (a "cap" event).

#include <algorithm>
#include <bit>
#include <cstdint>
#include <utility>

#include "adder/event.hpp"

namespace adder {

inline constexpr Decimation kInitialDecimation = 7;

struct PixelState {
    std::uint64_t acc = 0;     // accumulated intensity, in 1/scale units
    std::uint64_t last_t = 0;  // tick of the last fired event (0 before any)
    Decimation cur_d = kInitialDecimation;
    double running_rate = 0.0;  // smoothed intensity, units per tick
};

struct IntegrationLimits {
    std::uint64_t scale = 1;  // accumulator sub-units per intensity unit
    std::uint32_t delta_t_max = 0;
    Decimation d_max = kDMax;
};

namespace detail {

using i128 = __int128;
using u128 = unsigned __int128;

inline i128 floor_div(i128 num, std::uint64_t den) {
    const i128 d = den;
    return num >= 0 ? num / d : -((-num + d - 1) / d);
}

inline Decimation floor_log2(u128 v) {
    const auto hi = std::uint64_t(v >> 64);
    if (hi) return Decimation(127 - std::countl_zero(hi));
    return Decimation(63 - std::countl_zero(std::uint64_t(v)));
}

}  // namespace detail

/// Integrates a constant rate over ticks (now_base, now_base + span].
///
/// `rate` is in accumulator sub-units per tick (rate / scale units per tick).
/// `next_d(state)` picks the decimation after every fired event; the result
/// is raised when needed so the next crossing lands strictly after the last
/// event. `emit(d, t)` receives every event in time order.
///
/// Crossing timestamps are the floor of the exact crossing instant; the
/// accumulator keeps the exact overshoot, so for any span
/// sum(fired amounts) + acc_after == acc_before + rate * span.
template <class Policy, class Emit>
void integrate(PixelState& st, std::uint64_t rate, std::uint64_t span, std::uint64_t now_base,
               const IntegrationLimits& lim, Policy&& next_d, Emit&& emit) {
    using detail::i128;
    using detail::u128;

    if (span == 0) return;
    const std::uint64_t end = now_base + span;
    const u128 gained = u128(rate) * span;
    const u128 start_acc = st.acc;

    // Nothing crosses and no cap is due.
    if (st.last_t + lim.delta_t_max > end && start_acc + gained < (u128(lim.scale) << st.cur_d)) {
        st.acc = std::uint64_t(start_acc + gained);
        return;
    }

    u128 fired = 0;
    for (;;) {
        u128 threshold = u128(lim.scale) << st.cur_d;
        bool crossing = false;
        std::uint64_t cross_t = 0;
        if (rate > 0) {
            // need: sub-units still to gather (from now_base) before the crossing
            auto need = [&] { return i128(fired + threshold) - i128(start_acc); };
            auto crossing_tick = [&] { return i128(now_base) + detail::floor_div(need(), rate); };
            i128 tau = crossing_tick();
            while (tau <= i128(st.last_t) && st.cur_d < lim.d_max) {
                ++st.cur_d;
                threshold = u128(lim.scale) << st.cur_d;
                tau = crossing_tick();
            }
            // Only crossings the span actually reaches; events land in (now_base, end].
            if (need() <= i128(gained)) {
                cross_t = std::uint64_t(std::max({tau, i128(st.last_t) + 1, i128(now_base) + 1}));
                crossing = cross_t <= end;
            }
        }

        const std::uint64_t cap_t = st.last_t + lim.delta_t_max;
        if (crossing && cross_t <= cap_t) {
            emit(st.cur_d, cross_t);
            fired += threshold;
            st.last_t = cross_t;
            st.cur_d = next_d(std::as_const(st));
            continue;
        }
        if (cap_t <= end) {
            const std::uint64_t at = std::max(cap_t, now_base + 1);
            const u128 acc_at = start_acc + u128(rate) * (at - now_base) - fired;
            if (acc_at < lim.scale) {
                emit(kDZero, at);
            } else {
                const Decimation d = std::min(detail::floor_log2(acc_at / lim.scale), lim.d_max);
                emit(d, at);
                fired += u128(lim.scale) << d;
            }
            st.last_t = at;
            st.cur_d = next_d(std::as_const(st));
            continue;
        }
        break;
    }

    st.acc = std::uint64_t(start_acc + gained - fired);
    while (st.cur_d < lim.d_max && u128(st.acc) >= (u128(lim.scale) << st.cur_d)) ++st.cur_d;
}

}  // namespace adder
