#pragma once

// Local WebSocket endpoint: /ctl carries JSON control messages, /preview
// carries binary preview frames. One io thread; at most one live session.

#include <cstdint>
#include <memory>
#include <string>

#include "adder/frame.hpp"
#include "adder/pipeline.hpp"

namespace adder {

struct ServerConfig {
    std::string address = "127.0.0.1";
    std::uint16_t port = 0;  // 0 = pick a free port
    SessionConfig session;   // template for sessions started by "open"
    double stats_hz = 4.0;
    double preview_hz = 30.0;
};

class ControlServer {
public:
    explicit ControlServer(ServerConfig cfg);
    ~ControlServer();

    ControlServer(const ControlServer&) = delete;
    ControlServer& operator=(const ControlServer&) = delete;

    /// Binds and starts serving on a background thread. Throws if the
    /// address cannot be bound.
    void start();
    void stop();
    std::uint16_t port() const;

    /// Starts (or replaces) the live session, as the "open" command does.
    void open(const std::string& source);

    /// Sends a frame to every /preview client; used by playback, which has
    /// no live session.
    void publish_preview(std::uint64_t tick, const Frame& frame);

    std::size_t client_count() const;

    struct Impl;  // defined with the connection handlers

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace adder
