#include "contiservo/teleop.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>
#include <sstream>

namespace contiservo {

namespace {

using nlohmann::json;

json error_reply(const std::string& reason) { return {{"type", "error"}, {"reason", reason}}; }

bool finite_number(const json& j) { return j.is_number() && std::isfinite(j.get<double>()); }

}  // namespace

TeleopSession::TeleopSession(Scenario sc)
    : sc_(std::move(sc)), base_seed_(sc_.seed), st_(init_loop(sc_))
{
    last_row_.target_px = st_.plant.target_px;
    last_row_.error_norm_px = current_error(st_, sc_).norm();
    last_row_.theta_hat = st_.estimate.theta_hat;
}

std::optional<json> TeleopSession::handle_message(const std::string& text, bool from_driver)
{
    json msg;
    try {
        msg = json::parse(text);
    } catch (const json::parse_error& e) {
        return error_reply(std::string("malformed JSON: ") + e.what());
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
        return error_reply("message must be an object with a string 'type'");
    const std::string type = msg["type"].get<std::string>();
    if (!from_driver) return error_reply("read-only viewer cannot send '" + type + "'");

    if (type == "steer") {
        if (!msg.contains("dx") || !msg.contains("dy") || !finite_number(msg["dx"]) ||
            !finite_number(msg["dy"]))
            return error_reply("steer requires finite numbers dx and dy");
        steer_ = {msg["dx"].get<double>(), msg["dy"].get<double>()};
        steer_age_ = 0;
        return std::nullopt;
    }
    if (type == "set_adaptation") {
        if (!msg.contains("on") || !msg["on"].is_boolean())
            return error_reply("set_adaptation requires boolean 'on'");
        st_.adaptation_on = msg["on"].get<bool>();
        return std::nullopt;
    }
    if (type == "set_alpha") {
        if (!msg.contains("alpha") || !finite_number(msg["alpha"]))
            return error_reply("set_alpha requires a finite 'alpha'");
        const double a = msg["alpha"].get<double>();
        if (!(a > 0.0 && a <= 1.0)) return error_reply("alpha must be in (0, 1]");
        sc_.estimator.alpha = a;
        return std::nullopt;
    }
    if (type == "set_env") {
        if (!msg.contains("name") || !msg["name"].is_string())
            return error_reply("set_env requires string 'name'");
        try {
            set_environment(sc_, msg["name"].get<std::string>());
        } catch (const std::invalid_argument& e) {
            return error_reply(e.what());
        }
        st_.plant.phi_current = sc_.disturbance.phi_at(st_.plant.t);
        return std::nullopt;
    }
    if (type == "reset") {
        ++resets_;
        sc_.seed = derive_seed(base_seed_, resets_);
        const bool adaptation = st_.adaptation_on;
        st_ = init_loop(sc_);
        st_.adaptation_on = adaptation;
        steer_ = PixelVector::Zero();
        steer_age_ = kSteerHoldTicks;
        return std::nullopt;
    }
    return error_reply("unknown message type '" + type + "'");
}

json TeleopSession::tick()
{
    const PixelVector cmd = steer_age_ < kSteerHoldTicks
                                ? clamp_norm(steer_, sc_.controller.step_cap)
                                : PixelVector::Zero();
    ++steer_age_;
    last_cmd_ = cmd;
    last_row_ = drive_step(st_, sc_, cmd);
    return state_message();
}

json TeleopSession::hello(const std::string& role) const
{
    return {{"type", "hello"},
            {"schema_version", kWireSchemaVersion},
            {"role", role},
            {"tick_rate", sc_.camera.frame_rate},
            {"width", sc_.camera.width},
            {"height", sc_.camera.height}};
}

json TeleopSession::state_message() const
{
    json features = json::array();
    for (const auto& f : feature_pixels(st_)) features.push_back({f.x(), f.y()});
    return {{"type", "state"},
            {"t", st_.plant.t},
            {"target_px", {st_.plant.target_px.x(), st_.plant.target_px.y()}},
            {"theta_hat", st_.estimate.theta_hat},
            {"gate_open", last_row_.gate_open},
            {"error_norm", current_error(st_, sc_).norm()},
            {"adaptation_on", st_.adaptation_on},
            {"alpha", sc_.estimator.alpha},
            {"env", sc_.environment},
            {"features", features}};
}

std::vector<json> replay(const Scenario& sc, const std::vector<std::pair<long, std::string>>& log,
                         long ticks)
{
    TeleopSession session(sc);
    std::vector<json> out;
    std::size_t next = 0;
    for (long t = 0; t < ticks; ++t) {
        while (next < log.size() && log[next].first <= t) session.handle_message(log[next++].second);
        out.push_back(session.tick());
    }
    return out;
}

std::pair<std::string, unsigned short> parse_bind(const std::string& bind)
{
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("bind address must be host:port");
    const std::string host = bind.substr(0, colon);
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(bind.substr(colon + 1), &used);
        if (used != bind.size() - colon - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw std::invalid_argument("invalid port in bind address '" + bind + "'");
    }
    if (port < 0 || port > 65535) throw std::invalid_argument("port out of range");
    return {host.empty() ? "0.0.0.0" : host, static_cast<unsigned short>(port)};
}

// ---------------------------------------------------------------------------

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

std::string mime_type(const std::filesystem::path& p)
{
    const auto ext = p.extension().string();
    if (ext == ".html") return "text/html";
    if (ext == ".js") return "application/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    return "application/octet-stream";
}

}  // namespace

struct TeleopServer::Impl {
    struct Peer;

    Impl(Scenario sc, std::string h, unsigned short p, std::optional<std::filesystem::path> ui)
        : session(std::move(sc)), host(std::move(h)), port(p), ui_root(std::move(ui)),
          acceptor(ioc), timer(ioc)
    {
    }

    TeleopSession session;
    std::string host;
    unsigned short port;
    std::optional<std::filesystem::path> ui_root;

    net::io_context ioc;
    tcp::acceptor acceptor;
    net::steady_timer timer;
    std::vector<std::shared_ptr<Peer>> peers;
    std::weak_ptr<Peer> driver;
    std::deque<std::pair<std::weak_ptr<Peer>, std::string>> inbox;

    struct Peer : std::enable_shared_from_this<Peer> {
        Peer(tcp::socket s, Impl& srv) : stream(std::move(s)), server(srv) {}

        beast::tcp_stream stream;
        std::optional<websocket::stream<beast::tcp_stream>> ws;
        beast::flat_buffer buffer;
        http::request<http::string_body> request;
        std::deque<std::string> outbox;
        bool writing = false;
        bool closed = false;
        Impl& server;

        void start()
        {
            http::async_read(stream, buffer, request,
                             [self = shared_from_this()](beast::error_code ec, std::size_t) {
                                 if (!ec) self->on_request();
                             });
        }

        void on_request()
        {
            if (websocket::is_upgrade(request)) {
                ws.emplace(std::move(stream));
                ws->set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
                ws->async_accept(request, [self = shared_from_this()](beast::error_code ec) {
                    if (!ec) self->server.add_peer(self);
                });
                return;
            }
            serve_file();
        }

        void serve_file()
        {
            auto res = std::make_shared<http::response<http::string_body>>();
            res->version(request.version());
            res->keep_alive(false);
            std::string target(request.target());
            if (target == "/") target = "/index.html";
            bool found = false;
            if (server.ui_root && target.find("..") == std::string::npos) {
                const auto file = *server.ui_root / target.substr(1);
                std::ifstream is(file, std::ios::binary);
                if (is) {
                    std::ostringstream ss;
                    ss << is.rdbuf();
                    res->body() = ss.str();
                    res->set(http::field::content_type, mime_type(file));
                    res->result(http::status::ok);
                    found = true;
                }
            }
            if (!found) {
                res->result(http::status::not_found);
                res->set(http::field::content_type, "text/plain");
                res->body() = "not found\n";
            }
            res->prepare_payload();
            http::async_write(stream, *res,
                              [self = shared_from_this(), res](beast::error_code, std::size_t) {
                                  beast::error_code ignored;
                                  self->stream.socket().shutdown(tcp::socket::shutdown_send,
                                                                 ignored);
                              });
        }

        void read()
        {
            ws->async_read(buffer, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->server.remove_peer(self);
                    return;
                }
                self->server.inbox.emplace_back(self, beast::buffers_to_string(self->buffer.data()));
                self->buffer.consume(self->buffer.size());
                self->read();
            });
        }

        void send(std::string text)
        {
            if (closed) return;
            outbox.push_back(std::move(text));
            if (!writing) write_next();
        }

        void write_next()
        {
            if (outbox.empty() || closed) {
                writing = false;
                return;
            }
            writing = true;
            ws->text(true);
            ws->async_write(net::buffer(outbox.front()),
                            [self = shared_from_this()](beast::error_code ec, std::size_t) {
                                self->outbox.pop_front();
                                if (ec) {
                                    self->server.remove_peer(self);
                                    return;
                                }
                                self->write_next();
                            });
        }
    };

    void add_peer(const std::shared_ptr<Peer>& p)
    {
        peers.push_back(p);
        const bool drives = driver.expired();
        if (drives) driver = p;
        p->send(session.hello(drives ? "driver" : "viewer").dump());
        p->read();
    }

    void remove_peer(const std::shared_ptr<Peer>& p)
    {
        if (p->closed) return;
        p->closed = true;
        std::erase(peers, p);
        if (driver.lock() == p || driver.expired()) {
            driver.reset();
            if (!peers.empty()) {
                driver = peers.front();
                peers.front()->send(session.hello("driver").dump());
            }
        }
    }

    void accept()
    {
        acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
            if (ec) return;  // acceptor closed
            std::make_shared<Peer>(std::move(socket), *this)->start();
            accept();
        });
    }

    void schedule(std::chrono::steady_clock::time_point deadline)
    {
        timer.expires_at(deadline);
        timer.async_wait([this, deadline](beast::error_code ec) {
            if (ec) return;
            on_tick();
            const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(1.0 / session.scenario().camera.frame_rate));
            schedule(deadline + period);
        });
    }

    void on_tick()
    {
        while (!inbox.empty()) {
            auto [who, text] = std::move(inbox.front());
            inbox.pop_front();
            const auto peer = who.lock();
            if (!peer || peer->closed) continue;
            if (auto reply = session.handle_message(text, driver.lock() == peer))
                peer->send(reply->dump());
        }
        const std::string state = session.tick().dump();
        for (const auto& p : std::vector(peers)) p->send(state);
    }
};

TeleopServer::TeleopServer(Scenario sc, std::string host, unsigned short port,
                           std::optional<std::filesystem::path> ui_root)
    : impl_(std::make_unique<Impl>(std::move(sc), std::move(host), port, std::move(ui_root)))
{
}

TeleopServer::~TeleopServer() { stop(); }

unsigned short TeleopServer::start()
{
    auto& im = *impl_;
    try {
        const tcp::endpoint ep(net::ip::make_address(im.host), im.port);
        im.acceptor.open(ep.protocol());
        im.acceptor.set_option(net::socket_base::reuse_address(true));
        im.acceptor.bind(ep);
        im.acceptor.listen();
    } catch (const boost::system::system_error& e) {
        throw std::runtime_error("cannot bind " + im.host + ":" + std::to_string(im.port) + ": " +
                                 e.what());
    }
    im.port = im.acceptor.local_endpoint().port();
    im.accept();
    im.schedule(std::chrono::steady_clock::now());
    return im.port;
}

void TeleopServer::run() { impl_->ioc.run(); }

void TeleopServer::stop() { impl_->ioc.stop(); }

}  // namespace contiservo
