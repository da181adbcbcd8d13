// Per-string voices, the classical and quantum buses, and offline rendering.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qguitar/control.hpp"
#include "qguitar/midi.hpp"
#include "qguitar/quantum.hpp"

namespace qguitar::engine {

inline constexpr int kStringCount = 6;

enum class Waveform { Sine, Saw, Square, Triangle };

// Which buses reach the output. Anything but Both is a reference path that
// skips the other bus entirely.
enum class BusSolo { Both, ClassicalOnly, QuantumOnly };

struct EnvelopeParams {
    double attack_s = 0.005;
    double decay_s = 0.15;
    double sustain_level = 0.7;
    double release_s = 0.25;
    // Sustainer emulation: hold the sustain level until note off. Without it
    // the sustain stage fades to silence over natural_decay_s.
    bool infinite_sustain = true;
    double natural_decay_s = 4.0;
};

enum class EnvelopeStage { Idle, Attack, Decay, Sustain, Release };

/// Linear ADSR. Every stage starts from the current level, so retriggers and
/// early releases never jump.
class EnvelopeState {
public:
    EnvelopeState() = default;
    EnvelopeState(const EnvelopeParams& params, double sample_rate);

    void trigger();
    void release();
    double next();

    EnvelopeStage stage() const { return stage_; }
    double level() const { return level_; }
    bool idle() const { return stage_ == EnvelopeStage::Idle; }

private:
    EnvelopeParams params_{};
    double sample_rate_ = 48000.0;
    EnvelopeStage stage_ = EnvelopeStage::Idle;
    double level_ = 0.0;
    double release_step_ = 0.0;
};

/// Per-sample linear ramp. A new target is always reached after exactly
/// `length` samples, whatever the distance.
class LinearRamp {
public:
    LinearRamp() = default;
    LinearRamp(double value, int length) : current_(value), target_(value), length_(length < 1 ? 1 : length) {}

    void set_target(double target);
    void jump(double value);
    double next();

    double value() const { return current_; }
    double target() const { return target_; }
    bool settled() const { return remaining_ == 0; }

private:
    double current_ = 0.0;
    double target_ = 0.0;
    double step_ = 0.0;
    int length_ = 1;
    int remaining_ = 0;
};

struct SonificationParams {
    double mix0 = 1.0;  // weight of timbre bank 0
    double mix1 = 0.0;  // 1 - mix0
    double detune_cents = 0.0;

    bool operator==(const SonificationParams&) const = default;
};

/// Z picks the blend between the two banks, the azimuth a symmetric detune.
SonificationParams sonification_targets(const quantum::BlochVector& bloch, double max_detune_cents);

// 440 * 2^((note - 69) / 12)
double note_frequency(int note);

struct Voice {
    int string_index = 0;
    int note = 0;
    int velocity = 0;
    double base_freq = 0.0;
    double bend = 0.0;  // semitones
    double phase_classical = 0.0;
    double phase_0 = 0.0;
    double phase_1 = 0.0;
    EnvelopeState envelope;
    bool active = false;
    bool held = false;  // between note on and note off

    double frequency() const;
};

struct RenderConfig {
    int sample_rate = 48000;
    int block_size = 256;
    std::uint64_t seed = 0;
    double ramp_ms = 10.0;
    double max_detune_cents = 50.0;
    double bend_range = 2.0;  // semitones at full deflection
    control::ControlMapping mapping;
    EnvelopeParams envelope;
    // channel_to_string[ch] is the string a MIDI channel drives, or -1.
    // String 0 is the low E.
    std::array<int, 16> channel_to_string{0, 1, 2, 3, 4, 5, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1};
    Waveform classical_waveform = Waveform::Saw;
    Waveform bank0_waveform = Waveform::Sine;
    Waveform bank1_waveform = Waveform::Saw;
    double voice_level = 0.25;
    double initial_classical_gain = 1.0;
    double initial_quantum_gain = 1.0;
    bool per_string_qubits = false;
    BusSolo solo = BusSolo::Both;
    double tail_seconds = 1.0;  // rendered after the last event when no duration is given

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    int ramp_samples() const;
};

struct LoggedMeasurement {
    double time = 0.0;
    quantum::MeasurementOutcome outcome;
    int string = -1;  // only set with per-string qubits

    bool operator==(const LoggedMeasurement&) const = default;
};

struct ActiveNote {
    int string = 0;
    int note = 0;
    double bend = 0.0;

    bool operator==(const ActiveNote&) const = default;
};

struct TelemetrySnapshot {
    double time = 0.0;
    quantum::BlochVector bloch;
    double classical_gain = 0.0;
    double quantum_gain = 0.0;
    std::vector<ActiveNote> active_notes;
    std::optional<LoggedMeasurement> last_measurement;

    bool operator==(const TelemetrySnapshot&) const = default;
};

/// Single-owner synthesis state machine. Events and actions are applied
/// between blocks; process_block renders exactly config().block_size samples.
class Engine {
public:
    explicit Engine(RenderConfig config);

    const RenderConfig& config() const { return config_; }

    void note_on(int channel, int note, int velocity);
    void note_off(int channel, int note);
    void pitch_bend(int channel, int value);

    // Notes and bends go to the voices, control changes through the mapper.
    void handle_event(const midi::MidiEvent& event);
    void apply_action(const control::MappedAction& action);

    void process_block(std::span<float> left, std::span<float> right);
    void process_block(std::span<float> mono);

    double time() const { return static_cast<double>(sample_position_) / config_.sample_rate; }
    std::uint64_t sample_position() const { return sample_position_; }

    const quantum::QubitState& qubit(int string = 0) const;
    quantum::BlochVector bloch(int string = 0) const;
    SonificationParams sonification(int string = 0) const;
    double bus_gain(control::Bus bus) const;
    const std::array<Voice, kStringCount>& voices() const { return voices_; }
    const control::PedalState& pedal_state() const { return pedal_state_; }

    const std::vector<LoggedMeasurement>& measurement_log() const { return log_; }
    std::vector<LoggedMeasurement> drain_measurement_log();
    std::size_t note_on_count() const { return note_on_count_; }

    TelemetrySnapshot snapshot() const;

private:
    struct QubitChannel {
        quantum::QubitState state;
        LinearRamp mix0;
        LinearRamp detune;
    };

    int qubit_index(int string) const { return config_.per_string_qubits ? string : 0; }
    int qubit_count() const { return config_.per_string_qubits ? kStringCount : 1; }
    int string_for_channel(int channel) const;
    void rotate_all(quantum::Axis axis, double angle);
    void measure_all(quantum::Basis basis);

    RenderConfig config_;
    quantum::Rng rng_;
    std::array<QubitChannel, kStringCount> qubits_;
    std::array<Voice, kStringCount> voices_{};
    std::array<double, kStringCount> string_bend_{};
    std::array<double, 3> absolute_angle_{};
    control::PedalState pedal_state_;
    LinearRamp classical_gain_;
    LinearRamp quantum_gain_;
    std::vector<LoggedMeasurement> log_;
    std::optional<LoggedMeasurement> last_measurement_;
    std::uint64_t sample_position_ = 0;
    std::size_t note_on_count_ = 0;

    // Scratch, sized to block_size.
    std::vector<double> classical_bus_;
    std::vector<double> quantum_bus_;
    std::vector<double> gain_c_;
    std::vector<double> gain_q_;
    std::array<std::vector<double>, kStringCount> mix0_;
    std::vector<double> inv_harmonic_;
};

struct RenderResult {
    int sample_rate = 48000;
    std::vector<float> samples;  // mono; stereo output duplicates it
    std::vector<LoggedMeasurement> measurements;
    std::size_t note_count = 0;
    std::size_t event_count = 0;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Renders both event lists through one engine. Events take effect at the
/// start of the block containing their time. Without a duration the render
/// runs until tail_seconds past the last event. Throws std::invalid_argument
/// on an unsorted list or a negative time.
RenderResult render_offline(const std::vector<midi::TimedEvent>& events,
                            const std::vector<midi::TimedEvent>& pedal_events, const RenderConfig& config,
                            std::optional<double> duration_seconds = std::nullopt);

}  // namespace qguitar::engine
