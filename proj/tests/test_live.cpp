// Live session and telemetry socket, exercised over real loopback sockets.
#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "doctest.h"
#include "qguitar/audio_io.hpp"
#include "qguitar/live.hpp"
#include "test_support.hpp"

using namespace qguitar;
using namespace qguitar::session;
using Clock = std::chrono::steady_clock;

namespace {

class LineClient {
public:
    explicit LineClient(int port, int rcvbuf = 0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        REQUIRE(fd_ >= 0);
        if (rcvbuf > 0) {
            ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof(rcvbuf));
        }
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        REQUIRE(::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    }
    ~LineClient() {
        if (fd_ >= 0) {
            ::close(fd_);
        }
    }

    void send_line(const std::string& line) {
        const std::string data = line + "\n";
        REQUIRE(::send(fd_, data.data(), data.size(), MSG_NOSIGNAL) == static_cast<ssize_t>(data.size()));
    }

    // Next complete line, or empty after the timeout.
    std::string read_line(std::chrono::milliseconds timeout = std::chrono::milliseconds(2000)) {
        const auto until = Clock::now() + timeout;
        while (true) {
            if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(until - Clock::now());
            if (left.count() <= 0) {
                return {};
            }
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) {
                return {};
            }
            char buf[8192];
            const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
            if (n <= 0) {
                return {};
            }
            buffer_.append(buf, static_cast<std::size_t>(n));
        }
    }

    // Reads snapshots until one satisfies `pred`.
    template <typename Pred>
    std::optional<engine::TelemetrySnapshot> wait_for(Pred pred, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000)) {
        const auto until = Clock::now() + timeout;
        while (Clock::now() < until) {
            const std::string line = read_line(std::chrono::duration_cast<std::chrono::milliseconds>(until - Clock::now()));
            if (line.empty()) {
                continue;
            }
            const auto snap = snapshot_from_json(line);
            if (pred(snap)) {
                return snap;
            }
        }
        return std::nullopt;
    }

private:
    int fd_ = -1;
    std::string buffer_;
};

SessionConfig live_config(double rate_hz = 30.0) {
    SessionConfig c;
    c.telemetry.port = 0;
    c.telemetry.rate_hz = rate_hz;
    return c;
}

// Runs a session on a background thread until stop() or the time limit.
class Running {
public:
    Running(LiveSession& s, std::optional<double> seconds = std::nullopt) : session_(s) {
        thread_ = std::thread([this, seconds] {
            const auto t0 = Clock::now();
            status_ = session_.run(stop_, seconds);
            wall_ = std::chrono::duration<double>(Clock::now() - t0).count();
        });
    }
    ~Running() { stop(); }
    void stop() {
        stop_ = true;
        if (thread_.joinable()) {
            thread_.join();
        }
    }
    void join() {
        if (thread_.joinable()) {
            thread_.join();
        }
    }
    double wall_seconds() const { return wall_; }
    int status() const { return status_; }

private:
    LiveSession& session_;
    std::atomic<bool> stop_{false};
    std::thread thread_;
    int status_ = -1;
    double wall_ = 0.0;
};

}  // namespace

TEST_CASE("telemetry arrives at the configured rate") {
    LiveSession session(live_config(30.0), nullptr);
    session.start();
    Running run(session);
    LineClient client(session.telemetry_port());
    REQUIRE_FALSE(client.read_line().empty());  // skip the connect transient

    std::vector<double> arrivals;
    const auto until = Clock::now() + std::chrono::seconds(10);
    while (Clock::now() < until) {
        const std::string line = client.read_line();
        REQUIRE_FALSE(line.empty());
        arrivals.push_back(std::chrono::duration<double, std::milli>(Clock::now().time_since_epoch()).count());
    }
    run.stop();

    std::vector<double> intervals;
    for (std::size_t i = 1; i < arrivals.size(); ++i) {
        intervals.push_back(arrivals[i] - arrivals[i - 1]);
    }
    REQUIRE(intervals.size() > 250);
    const double expected = 1000.0 / 30.0;
    const double mean = (arrivals.back() - arrivals.front()) / static_cast<double>(intervals.size());
    std::vector<double> sorted = intervals;
    std::sort(sorted.begin(), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const auto within = std::count_if(intervals.begin(), intervals.end(),
                                      [&](double d) { return std::abs(d - expected) <= 10.0; });
    MESSAGE("mean " << mean << " ms, median " << median << " ms, " << within << "/" << intervals.size()
                    << " within 10 ms");
    CHECK(std::abs(mean - expected) <= 10.0);
    CHECK(std::abs(median - expected) <= 10.0);
    CHECK(static_cast<double>(within) >= 0.95 * static_cast<double>(intervals.size()));
}

TEST_CASE("two clients receive the same stream") {
    LiveSession session(live_config(100.0), nullptr);
    session.start();
    Running run(session);
    LineClient a(session.telemetry_port());
    LineClient b(session.telemetry_port());
    a.send_line(R"({"type":"cc","controller":20,"value":0})");
    a.send_line(R"({"type":"cc","controller":20,"value":50})");

    std::vector<std::string> la;
    std::vector<std::string> lb;
    for (int i = 0; i < 150; ++i) {
        la.push_back(a.read_line());
        lb.push_back(b.read_line());
    }
    run.stop();
    CHECK(std::none_of(la.begin(), la.end(), [](const std::string& s) { return s.empty(); }));

    // The clients may have joined one tick apart; align on b's first line.
    const auto start = std::find(la.begin(), la.end(), lb.front());
    REQUIRE(start != la.end());
    const auto offset = static_cast<std::size_t>(start - la.begin());
    CHECK(offset <= 2);
    for (std::size_t i = 0; i + offset < la.size(); ++i) {
        REQUIRE(la[i + offset] == lb[i]);
    }
    CHECK(session.telemetry_stats().accepted == 2);
}

TEST_CASE("socket control moves the Bloch vector") {
    LiveSession session(live_config(60.0), nullptr);
    session.start();
    CHECK_FALSE(session.midi_connected());
    Running run(session);
    LineClient client(session.telemetry_port());

    const auto start = client.wait_for([](const auto& s) { return s.bloch.z == 1.0; });
    REQUIRE(start);
    CHECK(start->bloch.x == 0.0);

    client.send_line(R"({"type":"cc","controller":21,"value":0})");
    client.send_line(R"({"v":1,"type":"cc","controller":21,"value":32})");
    const double theta = 32.0 / 127.0 * 2.0 * std::numbers::pi;
    const auto moved = client.wait_for([&](const auto& s) { return std::abs(s.bloch.z - std::cos(theta)) < 1e-9; });
    REQUIRE(moved);
    CHECK(std::abs(moved->bloch.x - std::sin(theta)) < 1e-9);
    CHECK(std::abs(moved->bloch.y) < 1e-9);

    // Undo the rotation, then measure at |0>.
    client.send_line(R"({"type":"cc","controller":21,"value":0})");
    client.wait_for([](const auto& s) { return std::abs(s.bloch.z - 1.0) < 1e-12; });
    client.send_line(R"({"type":"measure","basis":"Z"})");
    const auto measured = client.wait_for([](const auto& s) { return s.last_measurement.has_value(); });
    REQUIRE(measured);
    CHECK(measured->last_measurement->outcome.bit == 0);
    CHECK(measured->last_measurement->outcome.basis == quantum::Basis::Z);

    // The measure foot switch over the socket: one rising edge, one outcome.
    client.send_line(R"({"type":"cc","controller":23,"value":0})");
    client.send_line(R"({"type":"cc","controller":23,"value":127})");
    client.send_line(R"({"type":"cc","controller":23,"value":127})");
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    run.stop();
    CHECK(session.stats().measurements == 2);
}

TEST_CASE("malformed control messages are counted and ignored") {
    LiveSession session(live_config(50.0), nullptr);
    session.start();
    Running run(session);
    LineClient client(session.telemetry_port());
    client.send_line("hello");
    client.send_line(R"({"type":"cc","controller":500,"value":1})");
    client.send_line(R"({"v":7,"type":"measure"})");
    client.send_line(R"({"type":"measure"})");
    const auto snap = client.wait_for([](const auto& s) { return s.last_measurement.has_value(); });
    REQUIRE(snap);
    const auto stats = session.telemetry_stats();
    CHECK(stats.messages_received == 4);
    CHECK(stats.messages_malformed == 3);
    CHECK(session.stats().measurements == 1);
}

TEST_CASE("a disconnecting client does not disturb the engine") {
    LiveSession session(live_config(100.0), nullptr);
    session.start();
    Running run(session);
    {
        LineClient gone(session.telemetry_port());
        gone.read_line();
    }
    LineClient stay(session.telemetry_port());
    const auto first = stay.wait_for([](const auto&) { return true; });
    REQUIRE(first);
    const auto later = stay.wait_for([&](const auto& s) { return s.time > first->time + 0.2; });
    CHECK(later);
}

TEST_CASE("a stalled client does not slow the render loop") {
    const double seconds = 3.0;
    auto measure_run = [&](bool stalled) {
        LiveSession session(live_config(1000.0), nullptr);
        session.start();
        std::unique_ptr<LineClient> client;
        if (stalled) {
            client = std::make_unique<LineClient>(session.telemetry_port(), 2048);
        }
        Running run(session, seconds);
        run.join();
        struct Result {
            LiveStats live;
            TelemetryServerStats telemetry;
            double wall;
        };
        return Result{session.stats(), session.telemetry_stats(), run.wall_seconds()};
    };
    const auto baseline = measure_run(false);
    const auto stalled = measure_run(true);
    MESSAGE("baseline: " << baseline.live.late_blocks << " late, wall " << baseline.wall << " s; stalled: "
                         << stalled.live.late_blocks << " late, wall " << stalled.wall << " s, dropped "
                         << stalled.telemetry.lines_dropped);

    const std::size_t blocks = static_cast<std::size_t>(std::ceil(seconds * 48000.0 / 256.0));
    CHECK(baseline.live.blocks == blocks);
    CHECK(stalled.live.blocks == blocks);
    CHECK(stalled.telemetry.lines_dropped > 0);
    CHECK(std::abs(stalled.wall - seconds) < 0.1);
    CHECK(std::abs(stalled.wall - baseline.wall) < 0.1);
    CHECK(stalled.live.late_blocks <= baseline.live.late_blocks + blocks / 20);
}

TEST_CASE("MIDI bytes from a FIFO drive the engine") {
    qtest::TempDir dir;
    const std::string fifo = dir.file("midi.fifo");
    REQUIRE(::mkfifo(fifo.c_str(), 0600) == 0);
    SessionConfig cfg = live_config(60.0);
    cfg.live.midi_input = fifo;
    cfg.live.measurement_log = dir.file("live.jsonl");
    LiveSession session(cfg, nullptr);
    session.start();
    CHECK(session.midi_connected());
    Running run(session);
    LineClient client(session.telemetry_port());

    const int wfd = ::open(fifo.c_str(), O_WRONLY);
    REQUIRE(wfd >= 0);
    const std::uint8_t bytes[] = {0x90, 52, 100, 0xB0, 20, 0, 0xF8, 20, 64, 23, 127, 23, 0};
    REQUIRE(::write(wfd, bytes, sizeof(bytes)) == static_cast<ssize_t>(sizeof(bytes)));
    const double theta = 64.0 / 127.0 * 2.0 * std::numbers::pi;
    const auto snap = client.wait_for([](const auto& s) { return s.last_measurement.has_value(); });
    ::close(wfd);
    REQUIRE(snap);
    REQUIRE(snap->active_notes.size() == 1);
    CHECK(snap->active_notes[0].string == 0);
    CHECK(snap->active_notes[0].note == 52);
    CHECK(snap->last_measurement->outcome.pre_probability ==
          doctest::Approx(snap->last_measurement->outcome.bit == 0 ? std::pow(std::cos(theta / 2), 2)
                                                                   : std::pow(std::sin(theta / 2), 2)));
    run.stop();
    const auto log = io::read_measurement_log(dir.file("live.jsonl"));
    REQUIRE(log.size() == 1);
    CHECK(log[0] == *snap->last_measurement);
}

TEST_CASE("pushed MIDI bytes take the hardware path") {
    LiveSession session(live_config(60.0), nullptr);
    session.start();
    Running run(session);
    LineClient client(session.telemetry_port());
    const std::uint8_t part1[] = {0xB0, 21};
    const std::uint8_t part2[] = {0, 21, 16};
    session.push_midi_bytes(part1);
    session.push_midi_bytes(part2);
    const auto snap = client.wait_for([](const auto& s) { return std::abs(s.bloch.z - 1.0) > 1e-6; });
    REQUIRE(snap);
    const double theta = 16.0 / 127.0 * 2.0 * std::numbers::pi;
    CHECK(snap->bloch.z == doctest::Approx(std::cos(theta)).epsilon(1e-12));
    CHECK(snap->bloch.x == doctest::Approx(std::sin(theta)).epsilon(1e-12));
}

TEST_CASE("WAV sink captures the live output") {
    qtest::TempDir dir;
    SessionConfig cfg = live_config();
    cfg.channels = 2;
    auto sink = make_audio_sink(dir.file("live.wav"), 48000, 2);
    CHECK(sink->describe() == dir.file("live.wav"));
    {
        LiveSession session(cfg, std::move(sink));
        session.start();
        const std::uint8_t note[] = {0x90, 60, 100};
        session.push_midi_bytes(note);
        std::atomic<bool> stop{false};
        CHECK(session.run(stop, 0.5) == 0);
    }
    const auto wav = io::read_wav(dir.file("live.wav"));
    CHECK(wav.channels == 2);
    CHECK(wav.interleaved.size() == 2 * 256 * 94);
    CHECK(std::any_of(wav.interleaved.begin(), wav.interleaved.end(), [](float s) { return s != 0.0f; }));
    CHECK(make_audio_sink("none", 48000, 1)->describe() == "none");
    CHECK(make_audio_sink("stdout", 48000, 1)->describe() == "stdout");
}

TEST_CASE("a busy port is reported") {
    LiveSession first(live_config(), nullptr);
    first.start();
    SessionConfig cfg = live_config();
    cfg.telemetry.port = first.telemetry_port();
    LiveSession second(cfg, nullptr);
    CHECK_THROWS_AS(second.start(), std::runtime_error);
}
