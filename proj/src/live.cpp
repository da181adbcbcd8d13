#include "qguitar/live.hpp"

#include <fcntl.h>
#include <poll.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <iostream>

namespace qguitar::session {

namespace {

constexpr std::size_t kInputQueueCapacity = 4096;

}  // namespace

bool StdoutSink::write(std::span<const float> mono) {
    frame_buffer_.clear();
    for (const float s : mono) {
        for (int c = 0; c < channels_; ++c) {
            frame_buffer_.push_back(s);
        }
    }
    std::size_t offset = 0;
    const auto* bytes = reinterpret_cast<const char*>(frame_buffer_.data());
    const std::size_t total = frame_buffer_.size() * sizeof(float);
    while (offset < total) {
        const ssize_t n = ::write(STDOUT_FILENO, bytes + offset, total - offset);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            return false;
        }
        offset += static_cast<std::size_t>(n);
    }
    return true;
}

std::unique_ptr<AudioSink> make_audio_sink(const std::string& spec, int sample_rate, int channels) {
    if (spec.empty() || spec == "none") {
        return std::make_unique<NullSink>();
    }
    if (spec == "stdout" || spec == "-") {
        return std::make_unique<StdoutSink>(channels);
    }
    return std::make_unique<WavSink>(spec, sample_rate, channels);
}

LiveSession::LiveSession(SessionConfig config, std::unique_ptr<AudioSink> sink)
    : config_(std::move(config)),
      sink_(std::move(sink)),
      engine_(config_.render),
      queue_(kInputQueueCapacity),
      server_(
          config_.telemetry.port, config_.telemetry.rate_hz, [this] { return slot_.latest(); },
          [this](const ControlMessage& message) {
              queue_.try_push(to_engine_input(message));
          }) {
    if (!sink_) {
        sink_ = std::make_unique<NullSink>();
    }
    slot_.publish(engine_.snapshot());
}

LiveSession::~LiveSession() {
    midi_running_ = false;
    if (midi_thread_.joinable()) {
        midi_thread_.join();
    }
    if (midi_fd_ >= 0) {
        ::close(midi_fd_);
    }
    server_.stop();
}

void LiveSession::start() {
    server_.start();
    if (!config_.live.measurement_log.empty()) {
        measurement_log_ = std::make_unique<std::ofstream>(config_.live.measurement_log, std::ios::trunc);
        if (!*measurement_log_) {
            throw std::runtime_error("cannot open measurement log " + config_.live.measurement_log);
        }
    }
    if (config_.live.midi_input.empty()) {
        std::cerr << "live: no MIDI input configured; virtual-pedal mode (socket control only)\n";
        return;
    }
    midi_fd_ = ::open(config_.live.midi_input.c_str(), O_RDONLY | O_NONBLOCK);
    if (midi_fd_ < 0) {
        std::cerr << "live: cannot open MIDI input " << config_.live.midi_input << " (" << std::strerror(errno)
                  << "); virtual-pedal mode (socket control only)\n";
        return;
    }
    midi_running_ = true;
    midi_thread_ = std::thread([this] { midi_reader(); });
}

void LiveSession::ingest(std::span<const std::uint8_t> bytes, midi::ParserState& state) {
    for (const auto& event : midi::parse_stream(bytes, state)) {
        queue_.try_push(event);
    }
}

void LiveSession::push_midi_bytes(std::span<const std::uint8_t> bytes) {
    std::lock_guard lock(push_mutex_);
    ingest(bytes, pushed_state_);
}

void LiveSession::midi_reader() {
    midi::ParserState state;
    std::uint8_t buf[512];
    while (midi_running_) {
        pollfd pfd{midi_fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, 50);
        if (ready <= 0) {
            continue;
        }
        const ssize_t n = ::read(midi_fd_, buf, sizeof(buf));
        if (n > 0) {
            ingest({buf, static_cast<std::size_t>(n)}, state);
        } else {
            // A FIFO without a writer reports EOF continuously.
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    }
}

int LiveSession::telemetry_port() const { return server_.port(); }

LiveStats LiveSession::stats() const {
    LiveStats s;
    s.blocks = blocks_;
    s.late_blocks = late_blocks_;
    s.max_block_ms = max_block_ms_;
    s.mean_block_ms = s.blocks ? total_block_ms_ / static_cast<double>(s.blocks) : 0.0;
    s.inputs = inputs_;
    s.inputs_dropped = queue_.dropped();
    s.measurements = measurements_;
    return s;
}

int LiveSession::run(const std::atomic<bool>& stop, std::optional<double> max_seconds) {
    using clock = std::chrono::steady_clock;
    const int bs = config_.render.block_size;
    const auto block_period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(static_cast<double>(bs) / config_.render.sample_rate));
    const std::uint64_t max_samples =
        max_seconds ? static_cast<std::uint64_t>(*max_seconds * config_.render.sample_rate) : UINT64_MAX;

    std::vector<float> block(static_cast<std::size_t>(bs));
    std::vector<EngineInput> pending;
    auto deadline = clock::now();

    while (!stop && engine_.sample_position() < max_samples) {
        const auto t0 = clock::now();
        queue_.drain(pending);
        for (const auto& input : pending) {
            try {
                dispatch(engine_, input);
            } catch (const std::exception& e) {
                std::cerr << "live: dropped input: " << e.what() << '\n';
            }
        }
        inputs_ += pending.size();

        engine_.process_block(block);

        for (const auto& m : engine_.drain_measurement_log()) {
            ++measurements_;
            if (measurement_log_) {
                *measurement_log_ << io::format_measurement(m) << '\n' << std::flush;
            }
        }
        slot_.publish(engine_.snapshot());

        const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        total_block_ms_ = total_block_ms_ + ms;
        if (ms > max_block_ms_) {
            max_block_ms_ = ms;
        }
        ++blocks_;

        if (!sink_->write(block)) {
            std::cerr << "live: audio sink " << sink_->describe() << " failed; shutting down\n";
            return 1;
        }

        deadline += block_period;
        const auto now = clock::now();
        if (now > deadline) {
            ++late_blocks_;
            if (now - deadline > 10 * block_period) {
                deadline = now;  // resynchronize after a long stall
            }
        } else {
            std::this_thread::sleep_until(deadline);
        }
    }
    return 0;
}

}  // namespace qguitar::session
