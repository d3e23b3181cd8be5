#include "adder/control_server.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>
#include <future>
#include <json.hpp>
#include <iostream>
#include <mutex>
#include <set>
#include <thread>

#include "adder/protocol.hpp"

namespace adder {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

enum class Channel { ctl, preview };

struct Outgoing {
    std::shared_ptr<const std::string> text;
    std::shared_ptr<const std::vector<std::uint8_t>> binary;
};

}  // namespace

class Connection;

struct ControlServer::Impl {
    ServerConfig cfg;
    net::io_context io;
    tcp::acceptor acceptor{io};
    net::steady_timer stats_timer{io};
    net::steady_timer preview_timer{io};
    std::thread thread;
    std::uint16_t bound_port = 0;
    bool running = false;

    // io-thread state
    std::set<std::shared_ptr<Connection>> clients;
    std::unique_ptr<Session> session;
    mutable std::mutex count_mu;
    std::size_t count = 0;

    explicit Impl(ServerConfig c) : cfg(std::move(c)) {}

    void accept();
    void schedule_stats();
    void schedule_preview();
    void broadcast(Channel ch, Outgoing msg);
    void handle_ctl(const std::shared_ptr<Connection>& from, const std::string& text);
    void open_session(const std::string& source);
    void drop(const std::shared_ptr<Connection>& c);
};

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket sock, ControlServer::Impl& srv) : ws_(std::move(sock)), srv_(srv) {}

    void run() {
        http::async_read(ws_.next_layer(), buf_, req_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
    }

    Channel channel() const { return channel_; }
    bool ready() const { return accepted_ && !closed_; }

    void send(Outgoing msg) {
        if (closed_) return;
        if (channel_ == Channel::preview) {
            // Latest-wins per client: replace a preview frame still waiting.
            if (outbox_.size() > (writing_ ? 1u : 0u)) outbox_.back() = std::move(msg);
            else outbox_.push_back(std::move(msg));
        } else {
            outbox_.push_back(std::move(msg));
        }
        if (!writing_) write_next();
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        beast::error_code ec;
        ws_.next_layer().shutdown(tcp::socket::shutdown_both, ec);
        ws_.next_layer().close(ec);
    }

private:
    void on_request(beast::error_code ec) {
        if (ec) return srv_.drop(shared_from_this());
        const std::string target(req_.target());
        if (!websocket::is_upgrade(req_) || (target != "/ctl" && target != "/preview")) {
            auto res = std::make_shared<http::response<http::string_body>>(http::status::not_found, req_.version());
            res->set(http::field::content_type, "text/plain");
            res->body() = "endpoints: /ctl and /preview (websocket)\n";
            res->prepare_payload();
            http::async_write(ws_.next_layer(), *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
                self->close();
                self->srv_.drop(self);
            });
            return;
        }
        channel_ = target == "/ctl" ? Channel::ctl : Channel::preview;
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req_, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return self->srv_.drop(self);
            self->accepted_ = true;
            self->read();
            if (!self->outbox_.empty() && !self->writing_) self->write_next();
        });
    }

    void read() {
        ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return self->srv_.drop(self);
            if (self->channel_ == Channel::ctl && self->ws_.got_text()) {
                const std::string text = beast::buffers_to_string(self->in_.data());
                self->srv_.handle_ctl(self, text);
            }
            self->in_.consume(self->in_.size());
            self->read();
        });
    }

    void write_next() {
        if (!accepted_ || outbox_.empty() || closed_) return;
        writing_ = true;
        auto& m = outbox_.front();
        auto done = [self = shared_from_this()](beast::error_code ec, std::size_t) {
            self->writing_ = false;
            if (ec) return self->srv_.drop(self);
            self->outbox_.pop_front();
            self->write_next();
        };
        if (m.text) {
            ws_.text(true);
            ws_.async_write(net::buffer(*m.text), std::move(done));
        } else {
            ws_.binary(true);
            ws_.async_write(net::buffer(*m.binary), std::move(done));
        }
    }

    websocket::stream<tcp::socket> ws_;
    ControlServer::Impl& srv_;
    beast::flat_buffer buf_;
    beast::flat_buffer in_;
    http::request<http::string_body> req_;
    Channel channel_ = Channel::ctl;
    std::deque<Outgoing> outbox_;
    bool writing_ = false;
    bool accepted_ = false;
    bool closed_ = false;
};

void ControlServer::Impl::drop(const std::shared_ptr<Connection>& c) {
    c->close();
    clients.erase(c);
    std::lock_guard lock(count_mu);
    count = clients.size();
}

void ControlServer::Impl::accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket sock) {
        if (ec) return;  // acceptor closed
        auto c = std::make_shared<Connection>(std::move(sock), *this);
        clients.insert(c);
        {
            std::lock_guard lock(count_mu);
            count = clients.size();
        }
        c->run();
        accept();
    });
}

void ControlServer::Impl::broadcast(Channel ch, Outgoing msg) {
    for (const auto& c : clients)
        if (c->ready() && c->channel() == ch) c->send(msg);
}

void ControlServer::Impl::schedule_stats() {
    stats_timer.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg.stats_hz)));
    stats_timer.async_wait([this](beast::error_code ec) {
        if (ec) return;
        if (session)
            broadcast(Channel::ctl, {std::make_shared<const std::string>(stats_json(session->stats()) + "\n"), {}});
        schedule_stats();
    });
}

void ControlServer::Impl::schedule_preview() {
    preview_timer.expires_after(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg.preview_hz)));
    preview_timer.async_wait([this](beast::error_code ec) {
        if (ec) return;
        if (session) {
            if (auto p = session->latest_preview())
                broadcast(Channel::preview,
                          {{}, std::make_shared<const std::vector<std::uint8_t>>(encode_preview(p->tick, *p->frame))});
        }
        schedule_preview();
    });
}

void ControlServer::Impl::open_session(const std::string& source) {
    if (session) session.reset();  // stops, flushes and joins the old one
    SessionConfig sc = cfg.session;
    sc.source = source;
    // Boxes arrive on the hub worker; hop onto the io thread to send them.
    sc.on_boxes = [this](const std::vector<Box>& boxes, std::uint64_t) {
        auto text = std::make_shared<const std::string>(boxes_json(boxes) + "\n");
        net::post(io, [this, text] { broadcast(Channel::ctl, {text, {}}); });
    };
    session = Session::start(std::move(sc));
}

void ControlServer::Impl::handle_ctl(const std::shared_ptr<Connection>& from, const std::string& text) {
    auto reply = [&](std::string s) { from->send({std::make_shared<const std::string>(std::move(s) + "\n"), {}}); };
    for (const auto& line : split_lines(text)) {
        try {
            const auto msg = parse_control(line);
            if (msg.kind == ControlKind::open) {
                open_session(msg.source);
                const auto& p = session->params();
                nlohmann::json j;
                j["opened"] = {{"source", msg.source}, {"width", p.width},       {"height", p.height},
                               {"channels", p.channels}, {"tps", p.tps}, {"ref_interval", p.ref_interval},
                               {"delta_t_max", p.delta_t_max}};
                reply(j.dump());
                continue;
            }
            if (!session) throw ProtocolError("no open session; send {\"cmd\":\"open\",...} first");
            reply(ack_json(session->submit(msg.command)));
        } catch (const std::exception& e) {
            reply(error_json(e.what()));
        }
    }
}

ControlServer::ControlServer(ServerConfig cfg) : impl_(std::make_unique<Impl>(std::move(cfg))) {
    if (!(impl_->cfg.stats_hz > 0) || !(impl_->cfg.preview_hz > 0))
        throw InvalidArgument("server push rates must be positive");
}

ControlServer::~ControlServer() { stop(); }

void ControlServer::start() {
    auto& s = *impl_;
    if (s.running) return;
    const tcp::endpoint ep(net::ip::make_address(s.cfg.address), s.cfg.port);
    s.acceptor.open(ep.protocol());
    s.acceptor.set_option(net::socket_base::reuse_address(true));
    s.acceptor.bind(ep);
    s.acceptor.listen();
    s.bound_port = s.acceptor.local_endpoint().port();
    s.accept();
    s.schedule_stats();
    s.schedule_preview();
    s.running = true;
    s.thread = std::thread([&s] {
        try {
            s.io.run();
        } catch (const std::exception& e) {
            std::cerr << "control server: " << e.what() << "\n";
        }
    });
}

void ControlServer::stop() {
    auto& s = *impl_;
    if (!s.running) return;
    net::post(s.io, [&s] {
        beast::error_code ec;
        s.acceptor.close(ec);
        s.stats_timer.cancel();
        s.preview_timer.cancel();
        auto clients = s.clients;
        for (const auto& c : clients) s.drop(c);
    });
    // Let the close handlers run, then end the loop.
    net::post(s.io, [&s] { s.io.stop(); });
    if (s.thread.joinable()) s.thread.join();
    s.session.reset();
    s.clients.clear();
    s.running = false;
}

std::uint16_t ControlServer::port() const { return impl_->bound_port; }

void ControlServer::open(const std::string& source) {
    auto& s = *impl_;
    if (!s.running) {
        s.open_session(source);
        return;
    }
    std::promise<void> done;
    auto fut = done.get_future();
    net::post(s.io, [&] {
        try {
            s.open_session(source);
            done.set_value();
        } catch (...) {
            done.set_exception(std::current_exception());
        }
    });
    fut.get();
}

void ControlServer::publish_preview(std::uint64_t tick, const Frame& frame) {
    auto bytes = std::make_shared<const std::vector<std::uint8_t>>(encode_preview(tick, frame));
    net::post(impl_->io, [this, bytes] { impl_->broadcast(Channel::preview, {{}, bytes}); });
}

std::size_t ControlServer::client_count() const {
    std::lock_guard lock(impl_->count_mu);
    return impl_->count;
}

}  // namespace adder
