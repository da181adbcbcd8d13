// MIDI wire protocol: incremental byte-stream decoding, Standard MIDI File
// reading, and event encoding.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qguitar::midi {

enum class EventKind : std::uint8_t { NoteOn, NoteOff, ControlChange, PitchBend };

/// One decoded channel-voice message. Channel is the pickup's string channel.
///
/// Construct through the named factories. They enforce field ranges and turn
/// a velocity-0 NoteOn into a NoteOff.
class MidiEvent {
public:
    static MidiEvent note_on(int channel, int note, int velocity);
    static MidiEvent note_off(int channel, int note, int velocity = 0);
    static MidiEvent control_change(int channel, int controller, int value);
    static MidiEvent pitch_bend(int channel, int value);

    EventKind kind() const { return kind_; }
    int channel() const { return channel_; }

    int note() const { return data1_; }
    int velocity() const { return data2_; }
    int controller() const { return data1_; }
    int value() const { return kind_ == EventKind::PitchBend ? data1_ | (data2_ << 7) : data2_; }

    bool operator==(const MidiEvent&) const = default;

    std::string describe() const;

private:
    MidiEvent(EventKind kind, std::uint8_t channel, std::uint8_t data1, std::uint8_t data2)
        : kind_(kind), channel_(channel), data1_(data1), data2_(data2) {}

    EventKind kind_;
    std::uint8_t channel_;
    std::uint8_t data1_;
    std::uint8_t data2_;
};

struct TimedEvent {
    double time = 0.0;  // seconds
    MidiEvent event;
};

// Counters for bytes the stream parser could not use.
struct ParserDiagnostics {
    std::size_t malformed_fragments = 0;  // truncated messages and stray data bytes
    std::size_t skipped_messages = 0;     // well-formed but not decoded (sysex, program change, ...)
    std::size_t realtime_bytes = 0;

    bool operator==(const ParserDiagnostics&) const = default;
};

/// Carry-over between parse_stream calls. pending never holds more than two
/// data bytes and running_status only ever holds a channel-voice status.
struct ParserState {
    std::optional<std::uint8_t> running_status;
    std::uint8_t pending[2] = {0, 0};
    std::uint8_t pending_len = 0;
    std::uint8_t system_data_remaining = 0;
    bool in_sysex = false;
    ParserDiagnostics diagnostics;
};

/// Decodes a chunk of raw MIDI bytes. Feeding a stream in arbitrary pieces
/// yields the same events as feeding it at once.
std::vector<MidiEvent> parse_stream(std::span<const std::uint8_t> bytes, ParserState& state);

std::vector<std::uint8_t> encode_event(const MidiEvent& event);

inline constexpr int kPitchBendCenter = 8192;
inline constexpr int kPitchBendMax = 16383;

/// (value - 8192) / 8192 * range_semitones. Throws std::invalid_argument on a
/// value outside 0..16383 or a non-positive range.
double decode_pitch_bend(int value, double range_semitones = 2.0);

class SmfError : public std::runtime_error {
public:
    SmfError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class SmfUnsupported : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads a format 0 or 1 Standard MIDI File with PPQN division. Tracks are
/// merged, delta times resolved through the global tempo map (120 BPM until
/// the first tempo event), and the result sorted by time with ties kept in
/// file order. Only NoteOn/NoteOff/ControlChange/PitchBend are returned.
std::vector<TimedEvent> parse_smf(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
std::vector<TimedEvent> load_smf(const std::string& path);

// Writing, used to build fixtures and automation tracks.
struct TempoChange {
    std::uint32_t microseconds_per_quarter = 500000;
};

struct SmfTrackEvent {
    std::uint32_t tick = 0;  // absolute
    std::variant<MidiEvent, TempoChange> payload;
};

using SmfTrack = std::vector<SmfTrackEvent>;

/// Serializes tracks (each sorted by tick) as format 0 for a single track,
/// format 1 otherwise. Running status is not used.
std::vector<std::uint8_t> write_smf(const std::vector<SmfTrack>& tracks, std::uint16_t division);

}  // namespace qguitar::midi
