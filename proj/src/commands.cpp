#include "qguitar/commands.hpp"

#include <filesystem>
#include <iomanip>

#include "qguitar/audio_io.hpp"
#include "qguitar/config.hpp"

namespace qguitar::session {

MeasurementStats summarize_measurements(const std::vector<engine::LoggedMeasurement>& log) {
    MeasurementStats stats;
    for (const auto& m : log) {
        BasisStats& b = m.outcome.basis == quantum::Basis::Z ? stats.z : stats.x;
        ++b.count;
        b.ones += m.outcome.bit == 1 ? 1 : 0;
    }
    return stats;
}

void print_measurement_stats(std::ostream& out, const MeasurementStats& stats) {
    out << "measurements: " << stats.total() << '\n';
    auto line = [&out](const char* name, const BasisStats& b) {
        if (b.count == 0) {
            return;
        }
        out << "basis " << name << ": count " << b.count << ", outcome-1 frequency " << std::fixed
            << std::setprecision(4) << b.frequency_one() << ", outcome-0 frequency " << 1.0 - b.frequency_one()
            << std::defaultfloat << '\n';
    };
    line("Z", stats.z);
    line("X", stats.x);
}

std::string measurement_log_path(const std::string& out_path) {
    std::filesystem::path p(out_path);
    p.replace_extension(".measurements.jsonl");
    return p.string();
}

RenderSummary run_render(const RenderRequest& request) {
    SessionConfig config = load_session_config(request.config_path);
    if (request.seed) {
        config.render.seed = *request.seed;
    }
    const auto events = midi::load_smf(request.midi_path);
    std::vector<midi::TimedEvent> pedals;
    if (request.pedal_path) {
        pedals = midi::load_smf(*request.pedal_path);
    }

    const engine::RenderResult result = engine::render_offline(events, pedals, config.render, request.duration);

    RenderSummary summary;
    summary.duration_seconds = result.duration();
    summary.notes = result.note_count;
    summary.events = result.event_count;
    summary.measurements = summarize_measurements(result.measurements);
    summary.wav_path = request.out_path;
    summary.log_path = measurement_log_path(request.out_path);

    io::write_wav(summary.wav_path, result.samples, result.sample_rate, config.channels);
    io::write_measurement_log(summary.log_path, result.measurements);
    return summary;
}

void print_render_summary(std::ostream& out, const RenderSummary& summary) {
    out << "duration_seconds: " << std::fixed << std::setprecision(3) << summary.duration_seconds
        << std::defaultfloat << '\n';
    out << "notes: " << summary.notes << '\n';
    out << "events: " << summary.events << '\n';
    print_measurement_stats(out, summary.measurements);
    out << "wav: " << summary.wav_path << '\n';
    out << "log: " << summary.log_path << '\n';
}

}  // namespace qguitar::session
