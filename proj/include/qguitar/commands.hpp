// Command implementations behind the CLI: offline render and log statistics.
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qguitar/engine.hpp"

namespace qguitar::session {

// Stable process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntimeError = 1;
inline constexpr int kExitUsageError = 2;

struct RenderRequest {
    std::string midi_path;
    std::optional<std::string> pedal_path;
    std::string config_path;
    std::optional<std::uint64_t> seed;  // overrides the config's seed
    std::string out_path;
    std::optional<double> duration;
};

struct BasisStats {
    std::size_t count = 0;
    std::size_t ones = 0;

    double frequency_one() const { return count ? static_cast<double>(ones) / static_cast<double>(count) : 0.0; }
};

struct MeasurementStats {
    BasisStats z;
    BasisStats x;

    std::size_t total() const { return z.count + x.count; }
};

MeasurementStats summarize_measurements(const std::vector<engine::LoggedMeasurement>& log);
void print_measurement_stats(std::ostream& out, const MeasurementStats& stats);

struct RenderSummary {
    double duration_seconds = 0.0;
    std::size_t notes = 0;
    std::size_t events = 0;
    MeasurementStats measurements;
    std::string wav_path;
    std::string log_path;
};

// out.wav -> out.measurements.jsonl
std::string measurement_log_path(const std::string& out_path);

/// Loads config and MIDI files, renders, writes the WAV and the measurement
/// log. Throws ConfigError, midi::SmfError/SmfUnsupported or std::runtime_error.
RenderSummary run_render(const RenderRequest& request);
void print_render_summary(std::ostream& out, const RenderSummary& summary);

}  // namespace qguitar::session
