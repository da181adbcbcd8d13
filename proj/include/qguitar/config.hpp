// Session configuration: a flat `key = value` text file.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qguitar/engine.hpp"

namespace qguitar::session {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& message, std::string key, int line = 0)
        : std::runtime_error(message), key_(std::move(key)), line_(line) {}

    const std::string& key() const { return key_; }
    int line() const { return line_; }

private:
    std::string key_;
    int line_;
};

struct TelemetryConfig {
    int port = 9300;  // 0 picks a free port
    double rate_hz = 30.0;
};

struct LiveConfig {
    std::string midi_input;              // raw MIDI device or FIFO; empty = socket control only
    std::string audio_output = "none";   // none | stdout | <file>.wav
    std::string measurement_log;         // optional line-delimited log of live measurements
};

struct SessionConfig {
    engine::RenderConfig render;
    int channels = 1;
    TelemetryConfig telemetry;
    LiveConfig live;
};

// Keys that must be present in every config file.
const std::vector<std::string_view>& required_config_keys();
// Every accepted key, in documentation order.
const std::vector<std::string_view>& known_config_keys();

/// Parses and validates config text. `origin` prefixes messages (usually the
/// file name). Unknown, duplicate, missing-required and invalid keys all
/// throw ConfigError naming the key.
SessionConfig parse_session_config(std::string_view text, const std::string& origin = "config");
SessionConfig load_session_config(const std::string& path);

// Accepts decimal or 0x-prefixed hexadecimal.
std::uint64_t parse_seed(std::string_view text);

}  // namespace qguitar::session
