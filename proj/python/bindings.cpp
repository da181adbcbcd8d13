// Python bindings: qubit, MIDI parsing, control mapping, engine and render.
#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qguitar/audio_io.hpp"
#include "qguitar/commands.hpp"
#include "qguitar/config.hpp"
#include "qguitar/control.hpp"
#include "qguitar/engine.hpp"
#include "qguitar/midi.hpp"
#include "qguitar/quantum.hpp"
#include "qguitar/telemetry.hpp"

namespace py = pybind11;
using namespace qguitar;

namespace {

py::array_t<float> to_array(std::vector<float> samples) {
    auto* heap = new std::vector<float>(std::move(samples));
    py::capsule owner(heap, [](void* p) { delete static_cast<std::vector<float>*>(p); });
    return py::array_t<float>({static_cast<py::ssize_t>(heap->size())}, {sizeof(float)}, heap->data(), owner);
}

std::vector<std::uint8_t> to_bytes(const py::bytes& data) {
    const std::string_view view = data;
    return {view.begin(), view.end()};
}

void bind_quantum(py::module_& m) {
    py::enum_<quantum::Axis>(m, "Axis").value("X", quantum::Axis::X).value("Y", quantum::Axis::Y).value("Z", quantum::Axis::Z);
    py::enum_<quantum::Basis>(m, "Basis").value("Z", quantum::Basis::Z).value("X", quantum::Basis::X);

    py::class_<quantum::QubitState>(m, "QubitState")
        .def(py::init<>())
        .def(py::init([](std::complex<double> a, std::complex<double> b) { return quantum::QubitState{a, b}; }),
             py::arg("alpha"), py::arg("beta"))
        .def_readwrite("alpha", &quantum::QubitState::alpha)
        .def_readwrite("beta", &quantum::QubitState::beta)
        .def("norm_squared", &quantum::QubitState::norm_squared)
        .def("__repr__", [](const quantum::QubitState& s) {
            return "QubitState(alpha=" + py::repr(py::cast(s.alpha)).cast<std::string>() +
                   ", beta=" + py::repr(py::cast(s.beta)).cast<std::string>() + ")";
        });

    py::class_<quantum::BlochVector>(m, "BlochVector")
        .def(py::init<>())
        .def_readwrite("x", &quantum::BlochVector::x)
        .def_readwrite("y", &quantum::BlochVector::y)
        .def_readwrite("z", &quantum::BlochVector::z)
        .def("__iter__", [](const quantum::BlochVector& b) { return py::iter(py::make_tuple(b.x, b.y, b.z)); })
        .def(py::self == py::self)
        .def("__repr__", [](const quantum::BlochVector& b) {
            return "BlochVector(" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " + std::to_string(b.z) + ")";
        });

    py::class_<quantum::MeasurementOutcome>(m, "MeasurementOutcome")
        .def_readonly("bit", &quantum::MeasurementOutcome::bit)
        .def_readonly("basis", &quantum::MeasurementOutcome::basis)
        .def_readonly("pre_probability", &quantum::MeasurementOutcome::pre_probability)
        .def(py::self == py::self);

    py::class_<quantum::Rng>(m, "Rng")
        .def(py::init<std::uint64_t>(), py::arg("seed") = 0)
        .def("uniform", &quantum::Rng::uniform)
        .def("next_u64", &quantum::Rng::next_u64);

    m.def("new_qubit", &quantum::new_qubit);
    m.def("zero_state", &quantum::zero_state);
    m.def("one_state", &quantum::one_state);
    m.def("plus_state", &quantum::plus_state);
    m.def("minus_state", &quantum::minus_state);
    m.def("rotate", &quantum::rotate, py::arg("state"), py::arg("axis"), py::arg("angle"));
    m.def(
        "born_probabilities",
        [](const quantum::QubitState& s, quantum::Basis b) {
            const auto p = quantum::born_probabilities(s, b);
            return py::make_tuple(p.p0, p.p1);
        },
        py::arg("state"), py::arg("basis") = quantum::Basis::Z);
    m.def("measure", &quantum::measure, py::arg("state"), py::arg("basis"), py::arg("rng"),
          "Returns (outcome, collapsed state); consumes one draw from rng.");
    m.def("bloch_coordinates", &quantum::bloch_coordinates);
    m.def("fidelity", &quantum::fidelity);
}

void bind_midi(py::module_& m) {
    py::enum_<midi::EventKind>(m, "EventKind")
        .value("NoteOn", midi::EventKind::NoteOn)
        .value("NoteOff", midi::EventKind::NoteOff)
        .value("ControlChange", midi::EventKind::ControlChange)
        .value("PitchBend", midi::EventKind::PitchBend);

    py::class_<midi::MidiEvent>(m, "MidiEvent")
        .def_static("note_on", &midi::MidiEvent::note_on, py::arg("channel"), py::arg("note"), py::arg("velocity"))
        .def_static("note_off", &midi::MidiEvent::note_off, py::arg("channel"), py::arg("note"), py::arg("velocity") = 0)
        .def_static("control_change", &midi::MidiEvent::control_change, py::arg("channel"), py::arg("controller"),
                    py::arg("value"))
        .def_static("pitch_bend", &midi::MidiEvent::pitch_bend, py::arg("channel"), py::arg("value"))
        .def_property_readonly("kind", &midi::MidiEvent::kind)
        .def_property_readonly("channel", &midi::MidiEvent::channel)
        .def_property_readonly("note", &midi::MidiEvent::note)
        .def_property_readonly("velocity", &midi::MidiEvent::velocity)
        .def_property_readonly("controller", &midi::MidiEvent::controller)
        .def_property_readonly("value", &midi::MidiEvent::value)
        .def(py::self == py::self)
        .def("__repr__", &midi::MidiEvent::describe);

    py::class_<midi::TimedEvent>(m, "TimedEvent")
        .def(py::init<double, midi::MidiEvent>(), py::arg("time"), py::arg("event"))
        .def_readwrite("time", &midi::TimedEvent::time)
        .def_readwrite("event", &midi::TimedEvent::event)
        .def("__repr__", [](const midi::TimedEvent& e) {
            return "TimedEvent(" + std::to_string(e.time) + ", " + e.event.describe() + ")";
        });

    py::class_<midi::ParserDiagnostics>(m, "ParserDiagnostics")
        .def_readonly("malformed_fragments", &midi::ParserDiagnostics::malformed_fragments)
        .def_readonly("skipped_messages", &midi::ParserDiagnostics::skipped_messages)
        .def_readonly("realtime_bytes", &midi::ParserDiagnostics::realtime_bytes)
        .def(py::self == py::self);

    py::class_<midi::ParserState>(m, "ParserState")
        .def(py::init<>())
        .def_readonly("running_status", &midi::ParserState::running_status)
        .def_readonly("diagnostics", &midi::ParserState::diagnostics);

    m.def(
        "parse_stream",
        [](const py::bytes& data, midi::ParserState& state) { return midi::parse_stream(to_bytes(data), state); },
        py::arg("data"), py::arg("state"));
    m.def("encode_event", [](const midi::MidiEvent& e) {
        const auto b = midi::encode_event(e);
        return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
    });
    m.def("decode_pitch_bend", &midi::decode_pitch_bend, py::arg("value"), py::arg("range_semitones") = 2.0);
    m.def("parse_smf", [](const py::bytes& data) { return midi::parse_smf(to_bytes(data)); });
    m.def("load_smf", &midi::load_smf, py::arg("path"));

    py::register_exception<midi::SmfError>(m, "SmfError", PyExc_ValueError);
    py::register_exception<midi::SmfUnsupported>(m, "SmfUnsupported", PyExc_ValueError);
}

void bind_control(py::module_& m) {
    py::enum_<control::PedalMode>(m, "PedalMode")
        .value("Incremental", control::PedalMode::Incremental)
        .value("Absolute", control::PedalMode::Absolute);
    py::enum_<control::Taper>(m, "Taper").value("Linear", control::Taper::Linear).value("Audio", control::Taper::Audio);
    py::enum_<control::Bus>(m, "Bus").value("Classical", control::Bus::Classical).value("Quantum", control::Bus::Quantum);

    py::class_<control::RotateBy>(m, "RotateBy")
        .def(py::init<quantum::Axis, double>(), py::arg("axis"), py::arg("angle"))
        .def_readonly("axis", &control::RotateBy::axis)
        .def_readonly("angle", &control::RotateBy::angle)
        .def(py::self == py::self);
    py::class_<control::SetAbsoluteAngle>(m, "SetAbsoluteAngle")
        .def(py::init<quantum::Axis, double>(), py::arg("axis"), py::arg("angle"))
        .def_readonly("axis", &control::SetAbsoluteAngle::axis)
        .def_readonly("angle", &control::SetAbsoluteAngle::angle)
        .def(py::self == py::self);
    py::class_<control::TriggerMeasurement>(m, "TriggerMeasurement")
        .def(py::init<quantum::Basis>(), py::arg("basis") = quantum::Basis::Z)
        .def_readonly("basis", &control::TriggerMeasurement::basis)
        .def(py::self == py::self);
    py::class_<control::SetBusGain>(m, "SetBusGain")
        .def(py::init<control::Bus, double>(), py::arg("bus"), py::arg("gain"))
        .def_readonly("bus", &control::SetBusGain::bus)
        .def_readonly("gain", &control::SetBusGain::gain)
        .def(py::self == py::self);
    py::class_<control::SelectAxis>(m, "SelectAxis")
        .def(py::init<quantum::Axis>(), py::arg("axis"))
        .def_readonly("axis", &control::SelectAxis::axis)
        .def(py::self == py::self);

    py::class_<control::ControlMapping>(m, "ControlMapping")
        .def(py::init<>())
        .def_readwrite("rotation_cc", &control::ControlMapping::rotation_cc)
        .def_readwrite("switchable_cc", &control::ControlMapping::switchable_cc)
        .def_readwrite("alternate_axis", &control::ControlMapping::alternate_axis)
        .def_readwrite("axis_switch_cc", &control::ControlMapping::axis_switch_cc)
        .def_readwrite("measure_cc", &control::ControlMapping::measure_cc)
        .def_readwrite("measure_basis", &control::ControlMapping::measure_basis)
        .def_readwrite("measure_x_cc", &control::ControlMapping::measure_x_cc)
        .def_readwrite("classical_gain_cc", &control::ControlMapping::classical_gain_cc)
        .def_readwrite("quantum_gain_cc", &control::ControlMapping::quantum_gain_cc)
        .def_readwrite("mode", &control::ControlMapping::mode)
        .def_readwrite("sensitivity", &control::ControlMapping::sensitivity)
        .def_readwrite("threshold", &control::ControlMapping::threshold)
        .def_readwrite("taper", &control::ControlMapping::taper)
        .def("validate", &control::ControlMapping::validate);

    py::class_<control::PedalState>(m, "PedalState")
        .def(py::init<>())
        .def_readonly("last_value", &control::PedalState::last_value)
        .def_readonly("switchable_axis", &control::PedalState::switchable_axis)
        .def(py::self == py::self);

    m.def("map_event", &control::map_event, py::arg("event"), py::arg("mapping"), py::arg("state"));
    m.def("detect_rising_edge", &control::detect_rising_edge, py::arg("prev"), py::arg("value"), py::arg("threshold"));
    m.def("gain_from_cc", &control::gain_from_cc, py::arg("value"), py::arg("taper") = control::Taper::Audio);
}

void bind_engine(py::module_& m) {
    py::enum_<engine::Waveform>(m, "Waveform")
        .value("Sine", engine::Waveform::Sine)
        .value("Saw", engine::Waveform::Saw)
        .value("Square", engine::Waveform::Square)
        .value("Triangle", engine::Waveform::Triangle);
    py::enum_<engine::BusSolo>(m, "BusSolo")
        .value("Both", engine::BusSolo::Both)
        .value("ClassicalOnly", engine::BusSolo::ClassicalOnly)
        .value("QuantumOnly", engine::BusSolo::QuantumOnly);

    py::class_<engine::EnvelopeParams>(m, "EnvelopeParams")
        .def(py::init<>())
        .def_readwrite("attack_s", &engine::EnvelopeParams::attack_s)
        .def_readwrite("decay_s", &engine::EnvelopeParams::decay_s)
        .def_readwrite("sustain_level", &engine::EnvelopeParams::sustain_level)
        .def_readwrite("release_s", &engine::EnvelopeParams::release_s)
        .def_readwrite("infinite_sustain", &engine::EnvelopeParams::infinite_sustain)
        .def_readwrite("natural_decay_s", &engine::EnvelopeParams::natural_decay_s);

    py::class_<engine::RenderConfig>(m, "RenderConfig")
        .def(py::init<>())
        .def_readwrite("sample_rate", &engine::RenderConfig::sample_rate)
        .def_readwrite("block_size", &engine::RenderConfig::block_size)
        .def_readwrite("seed", &engine::RenderConfig::seed)
        .def_readwrite("ramp_ms", &engine::RenderConfig::ramp_ms)
        .def_readwrite("max_detune_cents", &engine::RenderConfig::max_detune_cents)
        .def_readwrite("bend_range", &engine::RenderConfig::bend_range)
        .def_readwrite("mapping", &engine::RenderConfig::mapping)
        .def_readwrite("envelope", &engine::RenderConfig::envelope)
        .def_readwrite("channel_to_string", &engine::RenderConfig::channel_to_string)
        .def_readwrite("classical_waveform", &engine::RenderConfig::classical_waveform)
        .def_readwrite("bank0_waveform", &engine::RenderConfig::bank0_waveform)
        .def_readwrite("bank1_waveform", &engine::RenderConfig::bank1_waveform)
        .def_readwrite("voice_level", &engine::RenderConfig::voice_level)
        .def_readwrite("initial_classical_gain", &engine::RenderConfig::initial_classical_gain)
        .def_readwrite("initial_quantum_gain", &engine::RenderConfig::initial_quantum_gain)
        .def_readwrite("per_string_qubits", &engine::RenderConfig::per_string_qubits)
        .def_readwrite("solo", &engine::RenderConfig::solo)
        .def_readwrite("tail_seconds", &engine::RenderConfig::tail_seconds)
        .def("validate", &engine::RenderConfig::validate)
        .def("ramp_samples", &engine::RenderConfig::ramp_samples);

    py::class_<engine::SonificationParams>(m, "SonificationParams")
        .def_readonly("mix0", &engine::SonificationParams::mix0)
        .def_readonly("mix1", &engine::SonificationParams::mix1)
        .def_readonly("detune_cents", &engine::SonificationParams::detune_cents);

    py::class_<engine::LoggedMeasurement>(m, "LoggedMeasurement")
        .def_readonly("time", &engine::LoggedMeasurement::time)
        .def_readonly("outcome", &engine::LoggedMeasurement::outcome)
        .def_readonly("string", &engine::LoggedMeasurement::string)
        .def(py::self == py::self);

    py::class_<engine::ActiveNote>(m, "ActiveNote")
        .def_readonly("string", &engine::ActiveNote::string)
        .def_readonly("note", &engine::ActiveNote::note)
        .def_readonly("bend", &engine::ActiveNote::bend);

    py::class_<engine::TelemetrySnapshot>(m, "TelemetrySnapshot")
        .def_readonly("time", &engine::TelemetrySnapshot::time)
        .def_readonly("bloch", &engine::TelemetrySnapshot::bloch)
        .def_readonly("classical_gain", &engine::TelemetrySnapshot::classical_gain)
        .def_readonly("quantum_gain", &engine::TelemetrySnapshot::quantum_gain)
        .def_readonly("active_notes", &engine::TelemetrySnapshot::active_notes)
        .def_readonly("last_measurement", &engine::TelemetrySnapshot::last_measurement)
        .def(py::self == py::self);

    m.def("sonification_targets", &engine::sonification_targets, py::arg("bloch"), py::arg("max_detune_cents") = 50.0);
    m.def("note_frequency", &engine::note_frequency);

    py::class_<engine::Engine>(m, "Engine")
        .def(py::init<engine::RenderConfig>(), py::arg("config") = engine::RenderConfig{})
        .def_property_readonly("config", &engine::Engine::config)
        .def("note_on", &engine::Engine::note_on, py::arg("channel"), py::arg("note"), py::arg("velocity"))
        .def("note_off", &engine::Engine::note_off, py::arg("channel"), py::arg("note"))
        .def("pitch_bend", &engine::Engine::pitch_bend, py::arg("channel"), py::arg("value"))
        .def("handle_event", &engine::Engine::handle_event)
        .def("apply_action", &engine::Engine::apply_action)
        .def(
            "process_block",
            [](engine::Engine& e) {
                std::vector<float> out(static_cast<std::size_t>(e.config().block_size));
                e.process_block(out);
                return to_array(std::move(out));
            },
            "Renders one block of mono samples.")
        .def_property_readonly("time", &engine::Engine::time)
        .def("qubit", &engine::Engine::qubit, py::arg("string") = 0)
        .def("bloch", &engine::Engine::bloch, py::arg("string") = 0)
        .def("sonification", &engine::Engine::sonification, py::arg("string") = 0)
        .def("bus_gain", &engine::Engine::bus_gain)
        .def_property_readonly("pedal_state", &engine::Engine::pedal_state)
        .def_property_readonly("measurement_log", &engine::Engine::measurement_log)
        .def("snapshot", &engine::Engine::snapshot);

    py::class_<engine::RenderResult>(m, "RenderResult")
        .def_readonly("sample_rate", &engine::RenderResult::sample_rate)
        .def_property_readonly("samples", [](const engine::RenderResult& r) { return to_array(r.samples); })
        .def_readonly("measurements", &engine::RenderResult::measurements)
        .def_readonly("note_count", &engine::RenderResult::note_count)
        .def_readonly("event_count", &engine::RenderResult::event_count)
        .def_property_readonly("duration", &engine::RenderResult::duration);

    m.def("render_offline", &engine::render_offline, py::arg("events"), py::arg("pedal_events"), py::arg("config"),
          py::arg("duration_seconds") = py::none(), py::call_guard<py::gil_scoped_release>());
}

void bind_session(py::module_& m) {
    py::class_<session::TelemetryConfig>(m, "TelemetryConfig")
        .def_readwrite("port", &session::TelemetryConfig::port)
        .def_readwrite("rate_hz", &session::TelemetryConfig::rate_hz);
    py::class_<session::LiveConfig>(m, "LiveConfig")
        .def_readwrite("midi_input", &session::LiveConfig::midi_input)
        .def_readwrite("audio_output", &session::LiveConfig::audio_output)
        .def_readwrite("measurement_log", &session::LiveConfig::measurement_log);
    py::class_<session::SessionConfig>(m, "SessionConfig")
        .def(py::init<>())
        .def_readwrite("render", &session::SessionConfig::render)
        .def_readwrite("channels", &session::SessionConfig::channels)
        .def_readwrite("telemetry", &session::SessionConfig::telemetry)
        .def_readwrite("live", &session::SessionConfig::live);

    py::register_exception<session::ConfigError>(m, "ConfigError", PyExc_ValueError);
    m.def("parse_session_config", &session::parse_session_config, py::arg("text"), py::arg("origin") = "config");
    m.def("load_session_config", &session::load_session_config, py::arg("path"));
    m.def("parse_seed", &session::parse_seed);

    m.def(
        "render_file",
        [](const std::string& midi_path, const std::string& config_path, const std::string& out_path,
           std::optional<std::string> pedal_path, std::optional<std::uint64_t> seed, std::optional<double> duration) {
            session::RenderRequest req{midi_path, pedal_path, config_path, seed, out_path, duration};
            const auto s = session::run_render(req);
            py::dict d;
            d["duration_seconds"] = s.duration_seconds;
            d["notes"] = s.notes;
            d["events"] = s.events;
            d["measurements"] = s.measurements.total();
            d["z_count"] = s.measurements.z.count;
            d["z_ones"] = s.measurements.z.ones;
            d["x_count"] = s.measurements.x.count;
            d["x_ones"] = s.measurements.x.ones;
            d["wav_path"] = s.wav_path;
            d["log_path"] = s.log_path;
            return d;
        },
        py::arg("midi_path"), py::arg("config_path"), py::arg("out_path"), py::arg("pedal_path") = py::none(),
        py::arg("seed") = py::none(), py::arg("duration") = py::none(),
        "Same as `qguitar render`; returns the summary as a dict.");

    m.def("snapshot_to_json", &session::snapshot_to_json);
    m.def("snapshot_from_json", [](const std::string& line) { return session::snapshot_from_json(line); });

    py::class_<session::CcMessage>(m, "CcMessage")
        .def(py::init<int, int>(), py::arg("controller"), py::arg("value"))
        .def_readonly("controller", &session::CcMessage::controller)
        .def_readonly("value", &session::CcMessage::value)
        .def(py::self == py::self);
    py::class_<session::MeasureMessage>(m, "MeasureMessage")
        .def(py::init<quantum::Basis>(), py::arg("basis") = quantum::Basis::Z)
        .def_readonly("basis", &session::MeasureMessage::basis)
        .def(py::self == py::self);
    m.def("parse_control_message", [](const std::string& line) {
        return session::parse_control_message(line);
    });
    m.def("control_message_to_json", &session::control_message_to_json);
    m.def("dispatch_control_message", [](engine::Engine& e, const session::ControlMessage& msg) {
        session::dispatch(e, session::to_engine_input(msg));
    });

    m.def("read_measurement_log", &io::read_measurement_log);
    m.def("read_wav", [](const std::string& path) {
        auto w = io::read_wav(path);
        return py::make_tuple(w.sample_rate, w.channels, to_array(std::move(w.interleaved)));
    });
    m.attr("TELEMETRY_SCHEMA_VERSION") = session::kTelemetrySchemaVersion;
}

}  // namespace

PYBIND11_MODULE(_qguitar, m) {
    m.doc() = "Quantum guitar engine: a sonified qubit steered by MIDI";
    bind_quantum(m);
    bind_midi(m);
    bind_control(m);
    bind_engine(m);
    bind_session(m);
}
