// Live session: control ingestion, the real-time render loop, and telemetry.
#pragma once

#include <atomic>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>

#include "qguitar/audio_io.hpp"
#include "qguitar/config.hpp"
#include "qguitar/telemetry.hpp"

namespace qguitar::session {

class AudioSink {
public:
    virtual ~AudioSink() = default;
    // False means the sink failed and the session should shut down.
    virtual bool write(std::span<const float> mono) = 0;
    virtual std::string describe() const = 0;
};

// Discards audio; the render loop still runs against the wall clock.
class NullSink : public AudioSink {
public:
    bool write(std::span<const float>) override { return true; }
    std::string describe() const override { return "none"; }
};

// Raw little-endian float32 frames on stdout, e.g. for `aplay -f FLOAT_LE`.
class StdoutSink : public AudioSink {
public:
    explicit StdoutSink(int channels) : channels_(channels) {}
    bool write(std::span<const float> mono) override;
    std::string describe() const override { return "stdout"; }

private:
    int channels_;
    std::vector<float> frame_buffer_;
};

class WavSink : public AudioSink {
public:
    WavSink(const std::string& path, int sample_rate, int channels) : path_(path), writer_(path, sample_rate, channels) {}
    bool write(std::span<const float> mono) override { return writer_.write(mono); }
    std::string describe() const override { return path_; }

private:
    std::string path_;
    io::WavStreamWriter writer_;
};

// "none", "stdout", or a file path.
std::unique_ptr<AudioSink> make_audio_sink(const std::string& spec, int sample_rate, int channels);

struct LiveStats {
    std::size_t blocks = 0;
    std::size_t late_blocks = 0;  // finished after their wall-clock deadline
    double max_block_ms = 0.0;    // engine time per block
    double mean_block_ms = 0.0;
    std::size_t inputs = 0;
    std::size_t inputs_dropped = 0;
    std::size_t measurements = 0;
};

/// Three contexts: ingestion (MIDI reader thread and the telemetry socket)
/// pushes into one bounded ordered queue; the render loop is the only owner
/// of the engine and drains the queue between blocks; the telemetry thread
/// reads published snapshots.
class LiveSession {
public:
    LiveSession(SessionConfig config, std::unique_ptr<AudioSink> sink);
    ~LiveSession();
    LiveSession(const LiveSession&) = delete;
    LiveSession& operator=(const LiveSession&) = delete;

    // Binds telemetry and opens the MIDI input, if one is configured. A MIDI
    // input that cannot be opened leaves the session in socket-only mode.
    void start();

    /// Runs the block loop until `stop` is set or max_seconds of audio have
    /// been rendered. Returns 0, or 1 after an audio sink failure.
    int run(const std::atomic<bool>& stop, std::optional<double> max_seconds = std::nullopt);

    // Feeds raw MIDI bytes through the same path as the input device.
    void push_midi_bytes(std::span<const std::uint8_t> bytes);

    int telemetry_port() const;
    bool midi_connected() const { return midi_fd_ >= 0; }
    LiveStats stats() const;
    TelemetryServerStats telemetry_stats() const { return server_.stats(); }
    std::shared_ptr<const engine::TelemetrySnapshot> latest_snapshot() const { return slot_.latest(); }

private:
    void midi_reader();
    void ingest(std::span<const std::uint8_t> bytes, midi::ParserState& state);

    SessionConfig config_;
    std::unique_ptr<AudioSink> sink_;
    engine::Engine engine_;
    BoundedQueue<EngineInput> queue_;
    SnapshotSlot slot_;
    TelemetryServer server_;
    std::unique_ptr<std::ofstream> measurement_log_;
    std::mutex push_mutex_;
    midi::ParserState pushed_state_;

    int midi_fd_ = -1;
    std::thread midi_thread_;
    std::atomic<bool> midi_running_{false};

    std::atomic<std::size_t> blocks_{0};
    std::atomic<std::size_t> late_blocks_{0};
    std::atomic<double> max_block_ms_{0.0};
    std::atomic<double> total_block_ms_{0.0};
    std::atomic<std::size_t> inputs_{0};
    std::atomic<std::size_t> measurements_{0};
};

}  // namespace qguitar::session
