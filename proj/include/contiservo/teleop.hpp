#pragma once

#include "contiservo/closed_loop.hpp"
#include "contiservo/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace contiservo {

inline constexpr int kWireSchemaVersion = 1;

/// A steer command stays in force for this many ticks unless renewed.
inline constexpr int kSteerHoldTicks = 15;

/// Authoritative teleoperation state. Messages apply at tick boundaries;
/// the latest steer wins. No I/O happens here.
class TeleopSession {
public:
    explicit TeleopSession(Scenario sc);

    /// Applies one client message. Returns an `error` reply for malformed or
    /// rejected messages; the session is left unchanged in that case.
    std::optional<nlohmann::json> handle_message(const std::string& text, bool from_driver = true);

    /// Advances one frame with the held steer command and returns the
    /// `state` broadcast.
    nlohmann::json tick();

    nlohmann::json hello(const std::string& role) const;
    nlohmann::json state_message() const;

    const Scenario& scenario() const { return sc_; }
    const LoopState& loop() const { return st_; }
    bool adaptation_on() const { return st_.adaptation_on; }
    /// Last pixel command handed to the pipeline.
    const PixelVector& last_command() const { return last_cmd_; }
    const TrialRow& last_row() const { return last_row_; }

private:
    Scenario sc_;
    std::uint64_t base_seed_;
    std::uint64_t resets_ = 0;
    LoopState st_;
    PixelVector steer_ = PixelVector::Zero();
    int steer_age_ = kSteerHoldTicks;
    PixelVector last_cmd_ = PixelVector::Zero();
    TrialRow last_row_;
};

/// Replays (tick index, message) pairs and returns every broadcast.
std::vector<nlohmann::json> replay(const Scenario& sc,
                                   const std::vector<std::pair<long, std::string>>& log,
                                   long ticks);

/// WebSocket front end: text frames carrying JSON. The first connected
/// client drives, later ones only watch. Plain HTTP GETs are answered from
/// `ui_root` when one is given.
class TeleopServer {
public:
    TeleopServer(Scenario sc, std::string host, unsigned short port,
                 std::optional<std::filesystem::path> ui_root = std::nullopt);
    ~TeleopServer();
    TeleopServer(const TeleopServer&) = delete;
    TeleopServer& operator=(const TeleopServer&) = delete;

    /// Binds and listens; throws std::runtime_error on failure. Returns the
    /// bound port (useful with port 0).
    unsigned short start();
    /// Runs the tick loop and I/O until stop() is called.
    void run();
    /// Thread-safe.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Parses "host:port".
std::pair<std::string, unsigned short> parse_bind(const std::string& bind);

}  // namespace contiservo
