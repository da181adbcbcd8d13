// WAV (32-bit IEEE float) and measurement-log files.
#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "qguitar/engine.hpp"

namespace qguitar::io {

// Mono samples; channels == 2 duplicates each sample into both channels.
std::vector<std::uint8_t> encode_wav(std::span<const float> mono, int sample_rate, int channels);
void write_wav(const std::string& path, std::span<const float> mono, int sample_rate, int channels);

struct WavData {
    int sample_rate = 0;
    int channels = 0;
    std::vector<float> interleaved;
};

// Reads files written by write_wav (float format only).
WavData read_wav(const std::string& path);

/// Incremental WAV writer; the header sizes are patched on close().
class WavStreamWriter {
public:
    WavStreamWriter(const std::string& path, int sample_rate, int channels);
    ~WavStreamWriter();
    WavStreamWriter(const WavStreamWriter&) = delete;
    WavStreamWriter& operator=(const WavStreamWriter&) = delete;

    // Returns false once the underlying file reports an error.
    bool write(std::span<const float> mono);
    void close();

private:
    std::FILE* file_ = nullptr;
    int sample_rate_;
    int channels_;
    std::uint32_t frames_ = 0;
};

// One JSON object per line: {"time_seconds", "basis", "bit", "pre_probability"}
// plus "string" when the measurement belongs to a per-string qubit.
std::string format_measurement(const engine::LoggedMeasurement& entry);
engine::LoggedMeasurement parse_measurement(const std::string& line);

void write_measurement_log(const std::string& path, const std::vector<engine::LoggedMeasurement>& entries);
std::vector<engine::LoggedMeasurement> read_measurement_log(const std::string& path);

}  // namespace qguitar::io
