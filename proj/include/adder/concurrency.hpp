#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace adder {

/// Multi-producer multi-consumer FIFO with a fixed capacity. push() blocks
/// while full (up to a timeout); pop() blocks until an item arrives or the
/// queue is closed and drained.
template <class T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

    /// False on timeout; the item is left untouched. Throws if closed.
    template <class Rep, class Period>
    bool push(T&& item, std::chrono::duration<Rep, Period> timeout) {
        std::unique_lock lock(mu_);
        if (!not_full_.wait_for(lock, timeout, [&] { return closed_ || items_.size() < capacity_; }))
            return false;
        if (closed_) throw std::logic_error("push to a closed queue");
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    std::size_t size() const {
        std::lock_guard lock(mu_);
        return items_.size();
    }
    std::size_t capacity() const { return capacity_; }

private:
    mutable std::mutex mu_;
    std::condition_variable not_empty_, not_full_;
    std::deque<T> items_;
    std::size_t capacity_;
    bool closed_ = false;
};

/// Depth-1 latest-wins slot. The producer never blocks; a value replaced
/// before anyone took it counts as dropped. peek() observes without
/// consuming.
template <class T>
class LatestSlot {
public:
    struct Peeked {
        std::uint64_t version = 0;
        std::shared_ptr<const T> value;
    };

    void put(std::shared_ptr<const T> v) {
        std::lock_guard lock(mu_);
        if (value_ && !taken_) ++dropped_;
        value_ = std::move(v);
        taken_ = false;
        ++version_;
    }

    std::shared_ptr<const T> take() {
        std::lock_guard lock(mu_);
        if (!value_ || taken_) return nullptr;
        taken_ = true;
        return value_;
    }

    Peeked peek() const {
        std::lock_guard lock(mu_);
        return {version_, value_};
    }

    std::uint64_t dropped() const {
        std::lock_guard lock(mu_);
        return dropped_;
    }

private:
    mutable std::mutex mu_;
    std::shared_ptr<const T> value_;
    bool taken_ = false;
    std::uint64_t version_ = 0;
    std::uint64_t dropped_ = 0;
};

}  // namespace adder
