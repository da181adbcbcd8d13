#include "qguitar/telemetry.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <iostream>
#include <stdexcept>

#include "json.hpp"

namespace qguitar::session {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Snapshot encoding

namespace {

constexpr int kClientSendBuffer = 16 * 1024;

ordered_json measurement_json(const engine::LoggedMeasurement& m) {
    ordered_json j;
    j["time_seconds"] = m.time;
    j["basis"] = std::string(quantum::to_string(m.outcome.basis));
    j["bit"] = m.outcome.bit;
    j["pre_probability"] = m.outcome.pre_probability;
    if (m.string >= 0) {
        j["string"] = m.string;
    }
    return j;
}

}  // namespace

std::string snapshot_to_json(const engine::TelemetrySnapshot& s) {
    ordered_json j;
    j["v"] = kTelemetrySchemaVersion;
    j["type"] = "telemetry";
    j["time"] = s.time;
    j["bloch"] = {{"x", s.bloch.x}, {"y", s.bloch.y}, {"z", s.bloch.z}};
    j["bus_gains"] = {{"classical", s.classical_gain}, {"quantum", s.quantum_gain}};
    ordered_json notes = ordered_json::array();
    for (const auto& n : s.active_notes) {
        notes.push_back({{"string", n.string}, {"note", n.note}, {"bend", n.bend}});
    }
    j["active_notes"] = std::move(notes);
    j["last_measurement"] = s.last_measurement ? measurement_json(*s.last_measurement) : ordered_json(nullptr);
    return j.dump();
}

engine::TelemetrySnapshot snapshot_from_json(std::string_view line) {
    try {
        const json j = json::parse(line);
        if (j.at("v").get<int>() != kTelemetrySchemaVersion || j.at("type").get<std::string>() != "telemetry") {
            throw std::invalid_argument("not a telemetry snapshot");
        }
        engine::TelemetrySnapshot s;
        s.time = j.at("time").get<double>();
        const auto& b = j.at("bloch");
        s.bloch = {b.at("x").get<double>(), b.at("y").get<double>(), b.at("z").get<double>()};
        s.classical_gain = j.at("bus_gains").at("classical").get<double>();
        s.quantum_gain = j.at("bus_gains").at("quantum").get<double>();
        for (const auto& n : j.at("active_notes")) {
            s.active_notes.push_back({n.at("string").get<int>(), n.at("note").get<int>(), n.at("bend").get<double>()});
        }
        const auto& m = j.at("last_measurement");
        if (!m.is_null()) {
            engine::LoggedMeasurement lm;
            lm.time = m.at("time_seconds").get<double>();
            lm.outcome.basis = quantum::parse_basis(m.at("basis").get<std::string>());
            lm.outcome.bit = m.at("bit").get<int>();
            lm.outcome.pre_probability = m.at("pre_probability").get<double>();
            lm.string = m.value("string", -1);
            s.last_measurement = lm;
        }
        return s;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad telemetry line: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Control messages

std::optional<ControlMessage> parse_control_message(std::string_view line, std::string* error) {
    auto fail = [error](const std::string& why) -> std::optional<ControlMessage> {
        if (error) {
            *error = why;
        }
        return std::nullopt;
    };
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return fail("not a JSON object");
    }
    if (j.contains("v") && (!j["v"].is_number_integer() || j["v"].get<int>() != kTelemetrySchemaVersion)) {
        return fail("unsupported schema version");
    }
    if (!j.contains("type") || !j["type"].is_string()) {
        return fail("missing \"type\"");
    }
    const std::string type = j["type"].get<std::string>();
    if (type == "cc") {
        const auto c = j.find("controller");
        const auto v = j.find("value");
        if (c == j.end() || v == j.end() || !c->is_number_integer() || !v->is_number_integer()) {
            return fail("cc needs integer \"controller\" and \"value\"");
        }
        const int controller = c->get<int>();
        const int value = v->get<int>();
        if (controller < 0 || controller > 127 || value < 0 || value > 127) {
            return fail("cc fields must be 0..127");
        }
        return CcMessage{controller, value};
    }
    if (type == "measure") {
        quantum::Basis basis = quantum::Basis::Z;
        if (j.contains("basis")) {
            if (!j["basis"].is_string()) {
                return fail("\"basis\" must be \"Z\" or \"X\"");
            }
            try {
                basis = quantum::parse_basis(j["basis"].get<std::string>());
            } catch (const std::invalid_argument&) {
                return fail("\"basis\" must be \"Z\" or \"X\"");
            }
        }
        return MeasureMessage{basis};
    }
    return fail("unknown message type '" + type + "'");
}

std::string control_message_to_json(const ControlMessage& message) {
    ordered_json j;
    j["v"] = kTelemetrySchemaVersion;
    if (const auto* cc = std::get_if<CcMessage>(&message)) {
        j["type"] = "cc";
        j["controller"] = cc->controller;
        j["value"] = cc->value;
    } else {
        j["type"] = "measure";
        j["basis"] = std::string(quantum::to_string(std::get<MeasureMessage>(message).basis));
    }
    return j.dump();
}

EngineInput to_engine_input(const ControlMessage& message) {
    if (const auto* cc = std::get_if<CcMessage>(&message)) {
        return midi::MidiEvent::control_change(0, cc->controller, cc->value);
    }
    return control::MappedAction{control::TriggerMeasurement{std::get<MeasureMessage>(message).basis}};
}

void dispatch(engine::Engine& engine, const EngineInput& input) {
    if (const auto* event = std::get_if<midi::MidiEvent>(&input)) {
        engine.handle_event(*event);
    } else {
        engine.apply_action(std::get<control::MappedAction>(input));
    }
}

// ---------------------------------------------------------------------------
// Snapshot slot

void SnapshotSlot::publish(engine::TelemetrySnapshot snapshot) {
    auto next = std::make_shared<const engine::TelemetrySnapshot>(std::move(snapshot));
    std::lock_guard lock(mutex_);
    snapshot_.swap(next);
}

std::shared_ptr<const engine::TelemetrySnapshot> SnapshotSlot::latest() const {
    std::lock_guard lock(mutex_);
    return snapshot_;
}

// ---------------------------------------------------------------------------
// Server

struct TelemetryServer::Client {
    int fd = -1;
    std::string inbound;
    std::deque<std::string> outbound;
    std::size_t front_offset = 0;  // bytes of outbound.front() already sent
    bool dead = false;
};

namespace {

void set_nonblocking(int fd) {
    const int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

constexpr std::size_t kMaxInboundLine = 64 * 1024;

}  // namespace

TelemetryServer::TelemetryServer(int port, double rate_hz, SnapshotSource source, ControlHandler handler,
                                 std::size_t max_pending_lines)
    : requested_port_(port),
      rate_hz_(rate_hz),
      source_(std::move(source)),
      handler_(std::move(handler)),
      max_pending_(max_pending_lines < 1 ? 1 : max_pending_lines) {
    if (!(rate_hz_ > 0.0)) {
        throw std::invalid_argument("telemetry rate must be positive");
    }
}

TelemetryServer::~TelemetryServer() { stop(); }

void TelemetryServer::start() {
    if (running_) {
        return;
    }
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) {
        throw std::runtime_error(std::string("telemetry socket: ") + std::strerror(errno));
    }
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(requested_port_));
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 || ::listen(listen_fd_, 16) < 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("cannot bind telemetry port " + std::to_string(requested_port_) + ": " + why);
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    set_nonblocking(listen_fd_);
    if (::pipe(wake_pipe_) < 0) {
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw std::runtime_error("cannot create wake pipe");
    }
    running_ = true;
    thread_ = std::thread([this] { run(); });
}

void TelemetryServer::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    const char byte = 0;
    [[maybe_unused]] const auto n = ::write(wake_pipe_[1], &byte, 1);
    if (thread_.joinable()) {
        thread_.join();
    }
    for (auto& c : clients_) {
        ::close(c->fd);
    }
    clients_.clear();
    ::close(listen_fd_);
    ::close(wake_pipe_[0]);
    ::close(wake_pipe_[1]);
    listen_fd_ = wake_pipe_[0] = wake_pipe_[1] = -1;
}

TelemetryServerStats TelemetryServer::stats() const {
    std::lock_guard lock(stats_mutex_);
    return stats_;
}

void TelemetryServer::broadcast(const std::string& line) {
    std::size_t dropped = 0;
    for (auto& c : clients_) {
        c->outbound.push_back(line);
        // Drop-oldest, but never a line that is half written.
        while (c->outbound.size() > max_pending_) {
            auto victim = c->front_offset > 0 ? std::next(c->outbound.begin()) : c->outbound.begin();
            c->outbound.erase(victim);
            ++dropped;
        }
    }
    std::lock_guard lock(stats_mutex_);
    ++stats_.ticks;
    stats_.lines_dropped += dropped;
}

void TelemetryServer::run() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / rate_hz_));
    auto next_tick = clock::now() + period;
    std::vector<pollfd> fds;

    while (running_) {
        fds.clear();
        fds.push_back({wake_pipe_[0], POLLIN, 0});
        fds.push_back({listen_fd_, POLLIN, 0});
        for (auto& c : clients_) {
            short events = POLLIN;
            if (!c->outbound.empty()) {
                events |= POLLOUT;
            }
            fds.push_back({c->fd, events, 0});
        }

        const auto now = clock::now();
        const auto wait = next_tick > now ? std::chrono::duration_cast<std::chrono::milliseconds>(next_tick - now)
                                          : std::chrono::milliseconds(0);
        ::poll(fds.data(), fds.size(), static_cast<int>(wait.count()) + (next_tick > now ? 1 : 0));
        if (!running_ || (fds[0].revents & POLLIN)) {
            break;
        }

        if (fds[1].revents & POLLIN) {
            while (true) {
                const int fd = ::accept(listen_fd_, nullptr, nullptr);
                if (fd < 0) {
                    break;
                }
                set_nonblocking(fd);
                const int nodelay = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &nodelay, sizeof(nodelay));
                // Small kernel buffer: backlog should pile up in our queue, where it gets dropped.
                const int sndbuf = kClientSendBuffer;
                ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &sndbuf, sizeof(sndbuf));
                auto client = std::make_unique<Client>();
                client->fd = fd;
                clients_.push_back(std::move(client));
                std::lock_guard lock(stats_mutex_);
                ++stats_.accepted;
            }
        }

        // Poll results only cover clients that existed before this iteration.
        const std::size_t polled = fds.size() - 2;
        for (std::size_t i = 0; i < polled && i < clients_.size(); ++i) {
            Client& c = *clients_[i];
            const short revents = fds[i + 2].revents;
            if (revents & (POLLERR | POLLNVAL)) {
                c.dead = true;
                continue;
            }
            if (revents & (POLLIN | POLLHUP)) {
                char buf[4096];
                const ssize_t n = ::recv(c.fd, buf, sizeof(buf), 0);
                if (n <= 0) {
                    if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK)) {
                        c.dead = true;
                        continue;
                    }
                } else {
                    c.inbound.append(buf, static_cast<std::size_t>(n));
                    std::size_t nl;
                    while ((nl = c.inbound.find('\n')) != std::string::npos) {
                        std::string line = c.inbound.substr(0, nl);
                        c.inbound.erase(0, nl + 1);
                        if (!line.empty() && line.back() == '\r') {
                            line.pop_back();
                        }
                        if (line.empty()) {
                            continue;
                        }
                        std::string error;
                        const auto message = parse_control_message(line, &error);
                        if (message) {
                            handler_(*message);
                        } else {
                            std::cerr << "telemetry: ignored control message (" << error << ")\n";
                        }
                        std::lock_guard lock(stats_mutex_);
                        ++stats_.messages_received;
                        if (!message) {
                            ++stats_.messages_malformed;
                        }
                    }
                    if (c.inbound.size() > kMaxInboundLine) {
                        c.inbound.clear();
                        std::lock_guard lock(stats_mutex_);
                        ++stats_.messages_malformed;
                    }
                }
            }
        }

        if (clock::now() >= next_tick) {
            if (const auto snap = source_ ? source_() : nullptr) {
                broadcast(snapshot_to_json(*snap) + "\n");
            }
            next_tick += period;
            if (next_tick < clock::now()) {
                next_tick = clock::now() + period;
            }
        }

        std::size_t sent = 0;
        for (auto& cp : clients_) {
            Client& c = *cp;
            while (!c.dead && !c.outbound.empty()) {
                const std::string& line = c.outbound.front();
                const ssize_t n = ::send(c.fd, line.data() + c.front_offset, line.size() - c.front_offset,
                                         MSG_NOSIGNAL | MSG_DONTWAIT);
                if (n < 0) {
                    if (errno != EAGAIN && errno != EWOULDBLOCK) {
                        c.dead = true;
                    }
                    break;
                }
                c.front_offset += static_cast<std::size_t>(n);
                if (c.front_offset == line.size()) {
                    c.outbound.pop_front();
                    c.front_offset = 0;
                    ++sent;
                }
            }
        }

        std::erase_if(clients_, [](const std::unique_ptr<Client>& c) {
            if (c->dead) {
                ::close(c->fd);
            }
            return c->dead;
        });
        std::lock_guard lock(stats_mutex_);
        stats_.lines_sent += sent;
        stats_.clients = clients_.size();
    }
}

}  // namespace qguitar::session
