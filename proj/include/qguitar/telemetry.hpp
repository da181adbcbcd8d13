// Telemetry snapshots and inbound control messages, both newline-delimited
// JSON, plus the local socket server that carries them.
#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "qguitar/engine.hpp"

namespace qguitar::session {

inline constexpr int kTelemetrySchemaVersion = 1;

std::string snapshot_to_json(const engine::TelemetrySnapshot& snapshot);
// Inverse of snapshot_to_json. Throws std::invalid_argument on bad input.
engine::TelemetrySnapshot snapshot_from_json(std::string_view line);

struct CcMessage {
    int controller = 0;
    int value = 0;
    bool operator==(const CcMessage&) const = default;
};

struct MeasureMessage {
    quantum::Basis basis = quantum::Basis::Z;
    bool operator==(const MeasureMessage&) const = default;
};

using ControlMessage = std::variant<CcMessage, MeasureMessage>;

/// {"type":"cc","controller":N,"value":V} or {"type":"measure","basis":"Z"|"X"}.
/// A "v" field, when present, must equal the schema version. Returns nothing
/// for anything else; `error` receives the reason.
std::optional<ControlMessage> parse_control_message(std::string_view line, std::string* error = nullptr);
std::string control_message_to_json(const ControlMessage& message);

// What the render context consumes: hardware MIDI events, or actions that
// bypass the mapper.
using EngineInput = std::variant<midi::MidiEvent, control::MappedAction>;

// A socket CC becomes a channel-0 ControlChange, so it takes exactly the
// hardware path through the control mapper.
EngineInput to_engine_input(const ControlMessage& message);
void dispatch(engine::Engine& engine, const EngineInput& input);

/// Latest-value slot. The lock covers only the pointer swap.
class SnapshotSlot {
public:
    void publish(engine::TelemetrySnapshot snapshot);
    std::shared_ptr<const engine::TelemetrySnapshot> latest() const;

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const engine::TelemetrySnapshot> snapshot_;
};

/// Bounded multi-producer queue. Producers never wait: a push into a full
/// queue is refused and counted. The consumer swaps the contents out.
template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    bool try_push(T item) {
        std::lock_guard lock(mutex_);
        if (items_.size() >= capacity_) {
            ++dropped_;
            return false;
        }
        items_.push_back(std::move(item));
        return true;
    }

    void drain(std::vector<T>& out) {
        out.clear();
        std::lock_guard lock(mutex_);
        out.assign(std::make_move_iterator(items_.begin()), std::make_move_iterator(items_.end()));
        items_.clear();
    }

    std::size_t dropped() const {
        std::lock_guard lock(mutex_);
        return dropped_;
    }

private:
    mutable std::mutex mutex_;
    std::deque<T> items_;
    std::size_t capacity_;
    std::size_t dropped_ = 0;
};

struct TelemetryServerStats {
    std::size_t clients = 0;
    std::size_t accepted = 0;
    std::size_t ticks = 0;
    std::size_t lines_sent = 0;
    std::size_t lines_dropped = 0;   // drop-oldest on slow clients
    std::size_t messages_received = 0;
    std::size_t messages_malformed = 0;
};

/// TCP server on 127.0.0.1. Every tick it serializes the latest snapshot once
/// and broadcasts the line to all clients; inbound lines are parsed as control
/// messages and passed to the handler. Each client has a bounded outbound
/// queue that drops its oldest lines, so a stalled reader only loses its own
/// telemetry.
class TelemetryServer {
public:
    using SnapshotSource = std::function<std::shared_ptr<const engine::TelemetrySnapshot>()>;
    using ControlHandler = std::function<void(const ControlMessage&)>;

    TelemetryServer(int port, double rate_hz, SnapshotSource source, ControlHandler handler,
                    std::size_t max_pending_lines = 64);
    ~TelemetryServer();
    TelemetryServer(const TelemetryServer&) = delete;
    TelemetryServer& operator=(const TelemetryServer&) = delete;

    // Binds and starts the I/O thread. Throws std::runtime_error if the port
    // cannot be bound.
    void start();
    void stop();

    int port() const { return port_; }
    TelemetryServerStats stats() const;

private:
    struct Client;

    void run();
    void broadcast(const std::string& line);

    int requested_port_;
    int port_ = 0;
    double rate_hz_;
    SnapshotSource source_;
    ControlHandler handler_;
    std::size_t max_pending_;

    int listen_fd_ = -1;
    int wake_pipe_[2] = {-1, -1};
    std::thread thread_;
    std::atomic<bool> running_{false};
    std::vector<std::unique_ptr<Client>> clients_;

    mutable std::mutex stats_mutex_;
    TelemetryServerStats stats_;
};

}  // namespace qguitar::session
