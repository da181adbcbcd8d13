#include "qguitar/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace qguitar::engine {

using control::Bus;

// ---------------------------------------------------------------------------
// Envelope

EnvelopeState::EnvelopeState(const EnvelopeParams& params, double sample_rate)
    : params_(params), sample_rate_(sample_rate) {}

void EnvelopeState::trigger() {
    stage_ = EnvelopeStage::Attack;
    if (params_.attack_s <= 0.0) {
        level_ = 1.0;
        stage_ = EnvelopeStage::Decay;
    }
}

void EnvelopeState::release() {
    if (stage_ == EnvelopeStage::Idle) {
        return;
    }
    if (level_ <= 0.0) {
        level_ = 0.0;
        stage_ = EnvelopeStage::Idle;
        return;
    }
    stage_ = EnvelopeStage::Release;
    release_step_ = level_ / std::max(1.0, params_.release_s * sample_rate_);
}

double EnvelopeState::next() {
    switch (stage_) {
        case EnvelopeStage::Idle:
            break;
        case EnvelopeStage::Attack:
            level_ += 1.0 / std::max(1.0, params_.attack_s * sample_rate_);
            if (level_ >= 1.0) {
                level_ = 1.0;
                stage_ = EnvelopeStage::Decay;
            }
            break;
        case EnvelopeStage::Decay:
            level_ -= (1.0 - params_.sustain_level) / std::max(1.0, params_.decay_s * sample_rate_);
            if (level_ <= params_.sustain_level) {
                level_ = params_.sustain_level;
                stage_ = EnvelopeStage::Sustain;
            }
            break;
        case EnvelopeStage::Sustain:
            if (!params_.infinite_sustain) {
                level_ -= params_.sustain_level / std::max(1.0, params_.natural_decay_s * sample_rate_);
            }
            if (level_ <= 0.0) {
                level_ = 0.0;
                stage_ = EnvelopeStage::Idle;
            }
            break;
        case EnvelopeStage::Release:
            level_ -= release_step_;
            if (level_ <= 0.0) {
                level_ = 0.0;
                stage_ = EnvelopeStage::Idle;
            }
            break;
    }
    return level_;
}

// ---------------------------------------------------------------------------
// Ramps and sonification

void LinearRamp::set_target(double target) {
    if (target == target_) {
        return;
    }
    target_ = target;
    remaining_ = length_;
    step_ = (target_ - current_) / length_;
}

void LinearRamp::jump(double value) {
    current_ = target_ = value;
    remaining_ = 0;
    step_ = 0.0;
}

double LinearRamp::next() {
    if (remaining_ > 0) {
        --remaining_;
        current_ = remaining_ == 0 ? target_ : current_ + step_;
    }
    return current_;
}

SonificationParams sonification_targets(const quantum::BlochVector& bloch, double max_detune_cents) {
    SonificationParams p;
    p.mix0 = std::clamp((bloch.z + 1.0) / 2.0, 0.0, 1.0);
    p.mix1 = 1.0 - p.mix0;
    const double azimuth = (bloch.x == 0.0 && bloch.y == 0.0) ? 0.0 : std::atan2(bloch.y, bloch.x);
    p.detune_cents = azimuth / std::numbers::pi * max_detune_cents;
    return p;
}

double note_frequency(int note) { return 440.0 * std::exp2((note - 69) / 12.0); }

double Voice::frequency() const { return base_freq * std::exp2(bend / 12.0); }

// ---------------------------------------------------------------------------
// Configuration

void RenderConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
    if (sample_rate != 44100 && sample_rate != 48000 && sample_rate != 96000) {
        fail("sample_rate must be 44100, 48000 or 96000");
    }
    if (block_size < 32 || block_size > 4096 || (block_size & (block_size - 1)) != 0) {
        fail("block_size must be a power of two in 32..4096");
    }
    if (!(ramp_ms >= 0.0) || !std::isfinite(ramp_ms)) {
        fail("ramp_ms must be non-negative");
    }
    if (!(max_detune_cents >= 0.0) || !std::isfinite(max_detune_cents)) {
        fail("max_detune_cents must be non-negative");
    }
    if (!(bend_range > 0.0) || !std::isfinite(bend_range)) {
        fail("bend_range must be positive");
    }
    const auto& e = envelope;
    if (!(e.attack_s >= 0.0) || !(e.decay_s >= 0.0) || !(e.release_s >= 0.0) || !std::isfinite(e.attack_s) ||
        !std::isfinite(e.decay_s) || !std::isfinite(e.release_s)) {
        fail("envelope times must be non-negative");
    }
    if (!(e.sustain_level >= 0.0 && e.sustain_level <= 1.0)) {
        fail("sustain_level must be in 0..1");
    }
    if (!(e.natural_decay_s > 0.0) || !std::isfinite(e.natural_decay_s)) {
        fail("natural_decay_s must be positive");
    }
    for (int s : channel_to_string) {
        if (s < -1 || s >= kStringCount) {
            fail("channel map entries must be -1 or a string index 0..5");
        }
    }
    if (!(voice_level > 0.0 && voice_level <= 1.0)) {
        fail("voice_level must be in (0, 1]");
    }
    if (!(initial_classical_gain >= 0.0 && initial_classical_gain <= 1.0) ||
        !(initial_quantum_gain >= 0.0 && initial_quantum_gain <= 1.0)) {
        fail("initial bus gains must be in 0..1");
    }
    if (!(tail_seconds >= 0.0) || !std::isfinite(tail_seconds)) {
        fail("tail_seconds must be non-negative");
    }
    mapping.validate();
}

int RenderConfig::ramp_samples() const {
    return std::max(1, static_cast<int>(std::lround(ramp_ms * sample_rate / 1000.0)));
}

// ---------------------------------------------------------------------------
// Oscillators

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

int harmonic_count(double sample_rate, double freq, std::size_t table_size) {
    if (!(freq > 0.0)) {
        return 1;
    }
    const double limit = sample_rate / 4.0 / freq;
    const auto k = static_cast<std::size_t>(std::max(1.0, std::floor(limit)));
    return static_cast<int>(std::min(k, table_size - 1));
}

// Additive band-limited waveforms; sin(kx) comes from the Chebyshev
// recurrence so each sample costs one sin/cos pair.
double oscillator(Waveform wave, double phase, int harmonics, const std::vector<double>& inv_k) {
    const double x = kTwoPi * phase;
    const double s1 = std::sin(x);
    if (wave == Waveform::Sine) {
        return s1;
    }
    const double c2 = 2.0 * std::cos(x);
    double prev = 0.0;
    double cur = s1;
    double sum = 0.0;
    switch (wave) {
        case Waveform::Saw:
            for (int k = 1; k <= harmonics; ++k) {
                sum += cur * inv_k[k];
                const double nxt = c2 * cur - prev;
                prev = cur;
                cur = nxt;
            }
            return sum * (2.0 / std::numbers::pi);
        case Waveform::Square:
            for (int k = 1; k <= harmonics; ++k) {
                if (k & 1) {
                    sum += cur * inv_k[k];
                }
                const double nxt = c2 * cur - prev;
                prev = cur;
                cur = nxt;
            }
            return sum * (4.0 / std::numbers::pi);
        case Waveform::Triangle:
            for (int k = 1; k <= harmonics; ++k) {
                if (k & 1) {
                    const double w = inv_k[k] * inv_k[k];
                    sum += ((k >> 1) & 1) ? -cur * w : cur * w;
                }
                const double nxt = c2 * cur - prev;
                prev = cur;
                cur = nxt;
            }
            return sum * (8.0 / (std::numbers::pi * std::numbers::pi));
        case Waveform::Sine:
            break;
    }
    return s1;
}

void advance_phase(double& phase, double inc) {
    phase += inc;
    if (phase >= 1.0) {
        phase -= std::floor(phase);
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Engine

Engine::Engine(RenderConfig config) : config_(std::move(config)), rng_(config_.seed) {
    config_.validate();
    const int ramp = config_.ramp_samples();
    const SonificationParams initial = sonification_targets(quantum::bloch_coordinates(quantum::new_qubit()),
                                                            config_.max_detune_cents);
    for (auto& q : qubits_) {
        q.state = quantum::new_qubit();
        q.mix0 = LinearRamp(initial.mix0, ramp);
        q.detune = LinearRamp(initial.detune_cents, ramp);
    }
    for (int s = 0; s < kStringCount; ++s) {
        voices_[s].string_index = s;
    }
    classical_gain_ = LinearRamp(config_.initial_classical_gain, ramp);
    quantum_gain_ = LinearRamp(config_.initial_quantum_gain, ramp);

    const auto n = static_cast<std::size_t>(config_.block_size);
    classical_bus_.resize(n);
    quantum_bus_.resize(n);
    gain_c_.resize(n);
    gain_q_.resize(n);
    for (auto& m : mix0_) {
        m.resize(n);
    }
    const auto table = static_cast<std::size_t>(config_.sample_rate / 4.0 / note_frequency(0)) + 2;
    inv_harmonic_.resize(table);
    inv_harmonic_[0] = 0.0;
    for (std::size_t k = 1; k < table; ++k) {
        inv_harmonic_[k] = 1.0 / static_cast<double>(k);
    }
}

int Engine::string_for_channel(int channel) const {
    if (channel < 0 || channel > 15) {
        throw std::invalid_argument("channel " + std::to_string(channel) + " outside 0..15");
    }
    return config_.channel_to_string[channel];
}

void Engine::note_on(int channel, int note, int velocity) {
    if (note < 0 || note > 127 || velocity < 0 || velocity > 127) {
        throw std::invalid_argument("note_on: note and velocity must be 0..127");
    }
    if (velocity == 0) {
        note_off(channel, note);
        return;
    }
    const int s = string_for_channel(channel);
    if (s < 0) {
        return;
    }
    Voice& v = voices_[s];
    if (!v.active) {
        v.phase_classical = v.phase_0 = v.phase_1 = 0.0;
        v.envelope = EnvelopeState(config_.envelope, config_.sample_rate);
    }
    v.note = note;
    v.velocity = velocity;
    v.base_freq = note_frequency(note);
    v.bend = string_bend_[s];
    v.envelope.trigger();
    v.active = true;
    v.held = true;
    ++note_on_count_;
}

void Engine::note_off(int channel, int note) {
    const int s = string_for_channel(channel);
    if (s < 0) {
        return;
    }
    Voice& v = voices_[s];
    if (v.active && v.held && v.note == note) {
        v.envelope.release();
        v.held = false;
        if (v.envelope.idle()) {
            v.active = false;
        }
    }
}

void Engine::pitch_bend(int channel, int value) {
    const int s = string_for_channel(channel);
    const double semis = midi::decode_pitch_bend(value, config_.bend_range);
    if (s < 0) {
        return;
    }
    string_bend_[s] = semis;
    voices_[s].bend = semis;
}

void Engine::handle_event(const midi::MidiEvent& event) {
    switch (event.kind()) {
        case midi::EventKind::NoteOn: note_on(event.channel(), event.note(), event.velocity()); break;
        case midi::EventKind::NoteOff: note_off(event.channel(), event.note()); break;
        case midi::EventKind::PitchBend: pitch_bend(event.channel(), event.value()); break;
        case midi::EventKind::ControlChange:
            for (const auto& action : control::map_event(event, config_.mapping, pedal_state_)) {
                apply_action(action);
            }
            break;
    }
}

void Engine::rotate_all(quantum::Axis axis, double angle) {
    for (int q = 0; q < qubit_count(); ++q) {
        qubits_[q].state = quantum::rotate(qubits_[q].state, axis, angle);
    }
}

void Engine::measure_all(quantum::Basis basis) {
    for (int q = 0; q < qubit_count(); ++q) {
        auto [outcome, collapsed] = quantum::measure(qubits_[q].state, basis, rng_);
        qubits_[q].state = collapsed;
        LoggedMeasurement entry{time(), outcome, config_.per_string_qubits ? q : -1};
        log_.push_back(entry);
        last_measurement_ = entry;
    }
}

void Engine::apply_action(const control::MappedAction& action) {
    std::visit(
        [this](const auto& a) {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, control::RotateBy>) {
                rotate_all(a.axis, a.angle);
            } else if constexpr (std::is_same_v<T, control::SetAbsoluteAngle>) {
                double& current = absolute_angle_[static_cast<int>(a.axis)];
                const double delta = a.angle - current;
                current = a.angle;
                if (delta != 0.0) {
                    rotate_all(a.axis, delta);
                }
            } else if constexpr (std::is_same_v<T, control::TriggerMeasurement>) {
                measure_all(a.basis);
            } else if constexpr (std::is_same_v<T, control::SetBusGain>) {
                const double g = std::clamp(a.gain, 0.0, 1.0);
                (a.bus == Bus::Classical ? classical_gain_ : quantum_gain_).set_target(g);
            } else if constexpr (std::is_same_v<T, control::SelectAxis>) {
                // The mapper already tracks the switched axis.
            }
        },
        action);
}

void Engine::process_block(std::span<float> left, std::span<float> right) {
    process_block(left);
    std::copy(left.begin(), left.end(), right.begin());
}

void Engine::process_block(std::span<float> out) {
    const int n = config_.block_size;
    if (static_cast<int>(out.size()) != n) {
        throw std::invalid_argument("process_block expects exactly block_size samples");
    }
    const double sr = config_.sample_rate;

    const bool want_classical = config_.solo != BusSolo::QuantumOnly &&
                                !(classical_gain_.settled() && classical_gain_.value() == 0.0);
    const bool want_quantum =
        config_.solo != BusSolo::ClassicalOnly && !(quantum_gain_.settled() && quantum_gain_.value() == 0.0);

    for (int i = 0; i < n; ++i) {
        gain_c_[i] = classical_gain_.next();
        gain_q_[i] = quantum_gain_.next();
    }

    std::array<double, kStringCount> detune_now{};
    std::array<bool, kStringCount> bank0_silent{};
    std::array<bool, kStringCount> bank1_silent{};
    for (int q = 0; q < qubit_count(); ++q) {
        auto& ch = qubits_[q];
        const SonificationParams target =
            sonification_targets(quantum::bloch_coordinates(ch.state), config_.max_detune_cents);
        ch.mix0.set_target(target.mix0);
        ch.detune.set_target(target.detune_cents);
        detune_now[q] = ch.detune.value();
        bank0_silent[q] = ch.mix0.settled() && ch.mix0.value() == 0.0;
        bank1_silent[q] = ch.mix0.settled() && ch.mix0.value() == 1.0;
        for (int i = 0; i < n; ++i) {
            mix0_[q][i] = ch.mix0.next();
            ch.detune.next();
        }
    }

    std::fill(classical_bus_.begin(), classical_bus_.end(), 0.0);
    std::fill(quantum_bus_.begin(), quantum_bus_.end(), 0.0);
    const std::size_t table = inv_harmonic_.size();

    for (Voice& v : voices_) {
        if (!v.active) {
            continue;
        }
        const int q = qubit_index(v.string_index);
        const double f = v.frequency();
        const double spread = std::exp2(detune_now[q] / 2400.0);
        const double f0 = f / spread;
        const double f1 = f * spread;
        const double inc_c = f / sr;
        const double inc_0 = f0 / sr;
        const double inc_1 = f1 / sr;
        const int k_c = harmonic_count(sr, f, table);
        const int k_0 = harmonic_count(sr, f0, table);
        const int k_1 = harmonic_count(sr, f1, table);
        const double amp = v.velocity / 127.0 * config_.voice_level;
        const std::vector<double>& mix0 = mix0_[q];

        for (int i = 0; i < n; ++i) {
            const double e = v.envelope.next() * amp;
            if (want_classical) {
                classical_bus_[i] += e * oscillator(config_.classical_waveform, v.phase_classical, k_c, inv_harmonic_);
            }
            if (want_quantum) {
                const double m0 = mix0[i];
                double value = 0.0;
                if (!bank0_silent[q]) {
                    value += m0 * oscillator(config_.bank0_waveform, v.phase_0, k_0, inv_harmonic_);
                }
                if (!bank1_silent[q]) {
                    value += (1.0 - m0) * oscillator(config_.bank1_waveform, v.phase_1, k_1, inv_harmonic_);
                }
                quantum_bus_[i] += e * value;
            }
            advance_phase(v.phase_classical, inc_c);
            advance_phase(v.phase_0, inc_0);
            advance_phase(v.phase_1, inc_1);
        }
        if (v.envelope.idle()) {
            v.active = false;
            v.held = false;
        }
    }

    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        if (want_classical) {
            sum += gain_c_[i] * classical_bus_[i];
        }
        if (want_quantum) {
            sum += gain_q_[i] * quantum_bus_[i];
        }
        out[i] = static_cast<float>(std::tanh(sum));
    }
    sample_position_ += static_cast<std::uint64_t>(n);
}

const quantum::QubitState& Engine::qubit(int string) const {
    if (string < 0 || string >= kStringCount) {
        throw std::out_of_range("string index outside 0..5");
    }
    return qubits_[qubit_index(string)].state;
}

quantum::BlochVector Engine::bloch(int string) const { return quantum::bloch_coordinates(qubit(string)); }

SonificationParams Engine::sonification(int string) const {
    const auto& ch = qubits_[qubit_index(string)];
    SonificationParams p;
    p.mix0 = ch.mix0.value();
    p.mix1 = 1.0 - p.mix0;
    p.detune_cents = ch.detune.value();
    return p;
}

double Engine::bus_gain(Bus bus) const {
    return bus == Bus::Classical ? classical_gain_.value() : quantum_gain_.value();
}

std::vector<LoggedMeasurement> Engine::drain_measurement_log() {
    std::vector<LoggedMeasurement> out;
    out.swap(log_);
    return out;
}

TelemetrySnapshot Engine::snapshot() const {
    TelemetrySnapshot snap;
    snap.time = time();
    snap.bloch = bloch(0);
    snap.classical_gain = classical_gain_.value();
    snap.quantum_gain = quantum_gain_.value();
    for (const Voice& v : voices_) {
        if (v.active) {
            snap.active_notes.push_back({v.string_index, v.note, v.bend});
        }
    }
    snap.last_measurement = last_measurement_;
    return snap;
}

// ---------------------------------------------------------------------------
// Offline rendering

namespace {

void require_sorted(const std::vector<midi::TimedEvent>& events, const char* name) {
    double last = 0.0;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const double t = events[i].time;
        if (!std::isfinite(t) || t < 0.0) {
            throw std::invalid_argument(std::string(name) + ": event " + std::to_string(i) + " has a negative time");
        }
        if (t < last) {
            throw std::invalid_argument(std::string(name) + ": events are not sorted by time (index " +
                                        std::to_string(i) + ")");
        }
        last = t;
    }
}

}  // namespace

RenderResult render_offline(const std::vector<midi::TimedEvent>& events,
                            const std::vector<midi::TimedEvent>& pedal_events, const RenderConfig& config,
                            std::optional<double> duration_seconds) {
    require_sorted(events, "events");
    require_sorted(pedal_events, "pedal events");
    if (duration_seconds && (!std::isfinite(*duration_seconds) || *duration_seconds < 0.0)) {
        throw std::invalid_argument("duration must be non-negative");
    }

    std::vector<midi::TimedEvent> merged;
    merged.reserve(events.size() + pedal_events.size());
    std::merge(events.begin(), events.end(), pedal_events.begin(), pedal_events.end(), std::back_inserter(merged),
               [](const midi::TimedEvent& a, const midi::TimedEvent& b) { return a.time < b.time; });

    double duration = 0.0;
    if (duration_seconds) {
        duration = *duration_seconds;
    } else if (!merged.empty()) {
        duration = merged.back().time + config.tail_seconds;
    }

    Engine engine(config);
    const int sr = config.sample_rate;
    const int bs = config.block_size;
    const auto total = static_cast<std::size_t>(std::ceil(duration * sr - 1e-9));

    RenderResult result;
    result.sample_rate = sr;
    result.samples.resize(total);
    std::vector<float> block(static_cast<std::size_t>(bs));

    // Time to sample index, tolerant of representation error at block edges.
    auto sample_of = [sr](double t) { return static_cast<std::uint64_t>(std::floor(t * sr + 1e-7)); };

    std::size_t next = 0;
    for (std::size_t start = 0; start < total; start += static_cast<std::size_t>(bs)) {
        const std::uint64_t block_end = start + static_cast<std::size_t>(bs);
        while (next < merged.size() && sample_of(merged[next].time) < block_end) {
            engine.handle_event(merged[next].event);
            ++result.event_count;
            ++next;
        }
        engine.process_block(block);
        const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(bs), total - start);
        std::copy_n(block.begin(), count, result.samples.begin() + static_cast<std::ptrdiff_t>(start));
    }
    result.measurements = engine.measurement_log();
    result.note_count = engine.note_on_count();
    return result;
}

}  // namespace qguitar::engine
