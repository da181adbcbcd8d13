#include "qguitar/midi.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace qguitar::midi {

namespace {

void require_range(int value, int lo, int hi, const char* what) {
    if (value < lo || value > hi) {
        throw std::invalid_argument(std::string(what) + " " + std::to_string(value) + " outside " +
                                    std::to_string(lo) + ".." + std::to_string(hi));
    }
}

int channel_data_length(std::uint8_t status) {
    const std::uint8_t type = status & 0xF0;
    return (type == 0xC0 || type == 0xD0) ? 1 : 2;
}

// Returns the decoded event for a complete channel-voice message, or nothing
// for message types the engine does not consume.
std::optional<MidiEvent> decode_channel_message(std::uint8_t status, std::uint8_t d1, std::uint8_t d2) {
    const int channel = status & 0x0F;
    switch (status & 0xF0) {
        case 0x80: return MidiEvent::note_off(channel, d1, d2);
        case 0x90: return MidiEvent::note_on(channel, d1, d2);
        case 0xB0: return MidiEvent::control_change(channel, d1, d2);
        case 0xE0: return MidiEvent::pitch_bend(channel, d1 | (d2 << 7));
        default: return std::nullopt;
    }
}

}  // namespace

MidiEvent MidiEvent::note_on(int channel, int note, int velocity) {
    require_range(channel, 0, 15, "channel");
    require_range(note, 0, 127, "note");
    require_range(velocity, 0, 127, "velocity");
    if (velocity == 0) {
        return MidiEvent(EventKind::NoteOff, channel, note, 0);
    }
    return MidiEvent(EventKind::NoteOn, channel, note, velocity);
}

MidiEvent MidiEvent::note_off(int channel, int note, int velocity) {
    require_range(channel, 0, 15, "channel");
    require_range(note, 0, 127, "note");
    require_range(velocity, 0, 127, "velocity");
    return MidiEvent(EventKind::NoteOff, channel, note, velocity);
}

MidiEvent MidiEvent::control_change(int channel, int controller, int value) {
    require_range(channel, 0, 15, "channel");
    require_range(controller, 0, 127, "controller");
    require_range(value, 0, 127, "control value");
    return MidiEvent(EventKind::ControlChange, channel, controller, value);
}

MidiEvent MidiEvent::pitch_bend(int channel, int value) {
    require_range(channel, 0, 15, "channel");
    require_range(value, 0, kPitchBendMax, "pitch bend");
    return MidiEvent(EventKind::PitchBend, channel, value & 0x7F, (value >> 7) & 0x7F);
}

std::string MidiEvent::describe() const {
    std::ostringstream out;
    switch (kind_) {
        case EventKind::NoteOn: out << "NoteOn{ch " << channel() << ", note " << note() << ", vel " << velocity(); break;
        case EventKind::NoteOff: out << "NoteOff{ch " << channel() << ", note " << note() << ", vel " << velocity(); break;
        case EventKind::ControlChange: out << "CC{ch " << channel() << ", cc " << controller() << ", value " << value(); break;
        case EventKind::PitchBend: out << "PitchBend{ch " << channel() << ", value " << value(); break;
    }
    out << '}';
    return out.str();
}

std::vector<MidiEvent> parse_stream(std::span<const std::uint8_t> bytes, ParserState& state) {
    std::vector<MidiEvent> events;
    auto& diag = state.diagnostics;

    for (const std::uint8_t b : bytes) {
        if (b >= 0xF8) {
            // Real-time bytes may appear anywhere, even inside a message.
            ++diag.realtime_bytes;
            continue;
        }

        if (b & 0x80) {
            if (state.pending_len > 0 || state.system_data_remaining > 0) {
                ++diag.malformed_fragments;
                state.pending_len = 0;
                state.system_data_remaining = 0;
            }
            if (state.in_sysex) {
                state.in_sysex = false;
                ++diag.skipped_messages;
                if (b == 0xF7) {
                    continue;
                }
            }
            if (b < 0xF0) {
                state.running_status = b;
                continue;
            }
            state.running_status.reset();
            switch (b) {
                case 0xF0: state.in_sysex = true; break;
                case 0xF1:
                case 0xF3: state.system_data_remaining = 1; break;
                case 0xF2: state.system_data_remaining = 2; break;
                case 0xF7: ++diag.malformed_fragments; break;  // EOX with no SysEx open
                default: ++diag.skipped_messages; break;       // F4, F5, F6
            }
            continue;
        }

        if (state.in_sysex) {
            continue;
        }
        if (state.system_data_remaining > 0) {
            if (--state.system_data_remaining == 0) {
                ++diag.skipped_messages;
            }
            continue;
        }
        if (!state.running_status) {
            ++diag.malformed_fragments;
            continue;
        }

        const std::uint8_t status = *state.running_status;
        state.pending[state.pending_len++] = b;
        if (state.pending_len < channel_data_length(status)) {
            continue;
        }
        const std::uint8_t d1 = state.pending[0];
        const std::uint8_t d2 = state.pending_len > 1 ? state.pending[1] : 0;
        state.pending_len = 0;
        if (auto event = decode_channel_message(status, d1, d2)) {
            events.push_back(*event);
        } else {
            ++diag.skipped_messages;
        }
    }
    return events;
}

std::vector<std::uint8_t> encode_event(const MidiEvent& event) {
    const auto ch = static_cast<std::uint8_t>(event.channel());
    switch (event.kind()) {
        case EventKind::NoteOn:
            return {static_cast<std::uint8_t>(0x90 | ch), static_cast<std::uint8_t>(event.note()),
                    static_cast<std::uint8_t>(event.velocity())};
        case EventKind::NoteOff:
            return {static_cast<std::uint8_t>(0x80 | ch), static_cast<std::uint8_t>(event.note()),
                    static_cast<std::uint8_t>(event.velocity())};
        case EventKind::ControlChange:
            return {static_cast<std::uint8_t>(0xB0 | ch), static_cast<std::uint8_t>(event.controller()),
                    static_cast<std::uint8_t>(event.value())};
        case EventKind::PitchBend: {
            const int v = event.value();
            return {static_cast<std::uint8_t>(0xE0 | ch), static_cast<std::uint8_t>(v & 0x7F),
                    static_cast<std::uint8_t>((v >> 7) & 0x7F)};
        }
    }
    return {};
}

double decode_pitch_bend(int value, double range_semitones) {
    if (value < 0 || value > kPitchBendMax) {
        throw std::invalid_argument("pitch bend value " + std::to_string(value) + " outside 0..16383");
    }
    if (!(range_semitones > 0.0) || !std::isfinite(range_semitones)) {
        throw std::invalid_argument("pitch bend range must be positive");
    }
    return static_cast<double>(value - kPitchBendCenter) / kPitchBendCenter * range_semitones;
}

// ---------------------------------------------------------------------------
// Standard MIDI File reading

namespace {

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::size_t pos, std::size_t end)
        : bytes_(bytes), pos_(pos), end_(end) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= end_; }

    std::uint8_t peek() const {
        need(1);
        return bytes_[pos_];
    }

    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }

    std::uint32_t be(int width) {
        need(static_cast<std::size_t>(width));
        std::uint32_t v = 0;
        for (int i = 0; i < width; ++i) {
            v = (v << 8) | bytes_[pos_++];
        }
        return v;
    }

    std::uint32_t vlq() {
        const std::size_t start = pos_;
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            const std::uint8_t b = u8();
            v = (v << 7) | (b & 0x7F);
            if (!(b & 0x80)) {
                return v;
            }
        }
        throw SmfError("variable-length quantity longer than 4 bytes", start);
    }

    void skip(std::size_t n) {
        need(n);
        pos_ += n;
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > end_) {
            throw SmfError("unexpected end of chunk", pos_);
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_;
    std::size_t end_;
};

struct TickEvent {
    std::uint64_t tick;
    MidiEvent event;
};

struct TickTempo {
    std::uint64_t tick;
    std::uint32_t us_per_quarter;
};

void read_track(std::span<const std::uint8_t> bytes, std::size_t begin, std::size_t end,
                std::vector<TickEvent>& events, std::vector<TickTempo>& tempos) {
    ByteReader in(bytes, begin, end);
    std::optional<std::uint8_t> running;
    std::uint64_t tick = 0;

    while (!in.done()) {
        tick += in.vlq();
        const std::size_t status_pos = in.pos();
        std::uint8_t status = in.peek();
        if (status & 0x80) {
            in.u8();
        } else if (running) {
            status = *running;
        } else {
            throw SmfError("data byte without running status", status_pos);
        }

        if (status == 0xFF) {
            running.reset();
            const std::uint8_t type = in.u8();
            const std::uint32_t len = in.vlq();
            if (type == 0x2F) {
                in.skip(len);
                return;
            }
            if (type == 0x51 && len == 3) {
                tempos.push_back({tick, in.be(3)});
            } else {
                in.skip(len);
            }
            continue;
        }
        if (status == 0xF0 || status == 0xF7) {
            running.reset();
            in.skip(in.vlq());
            continue;
        }
        if (status >= 0xF0) {
            throw SmfError("unexpected system message in track", status_pos);
        }

        running = status;
        std::uint8_t data[2] = {0, 0};
        const int len = channel_data_length(status);
        for (int i = 0; i < len; ++i) {
            const std::size_t data_pos = in.pos();
            data[i] = in.u8();
            if (data[i] & 0x80) {
                throw SmfError("status byte inside channel message", data_pos);
            }
        }
        if (auto event = decode_channel_message(status, data[0], data[1])) {
            events.push_back({tick, *event});
        }
    }
}

}  // namespace

std::vector<TimedEvent> parse_smf(std::span<const std::uint8_t> bytes) {
    ByteReader header(bytes, 0, bytes.size());
    if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "MThd")) {
        throw SmfError("missing MThd header", 0);
    }
    header.skip(4);
    const std::uint32_t header_len = header.be(4);
    if (header_len < 6) {
        throw SmfError("header chunk shorter than 6 bytes", 4);
    }
    const std::size_t data_start = header.pos();
    const std::uint16_t format = static_cast<std::uint16_t>(header.be(2));
    const std::uint16_t track_count = static_cast<std::uint16_t>(header.be(2));
    const std::uint16_t division = static_cast<std::uint16_t>(header.be(2));
    if (division & 0x8000) {
        throw SmfUnsupported("SMPTE time division is not supported");
    }
    if (division == 0) {
        throw SmfError("division of zero ticks per quarter", data_start + 4);
    }
    if (format > 1) {
        throw SmfUnsupported("SMF format " + std::to_string(format) + " is not supported");
    }
    header.skip(header_len - 6);

    std::vector<TickEvent> events;
    std::vector<TickTempo> tempos;
    std::size_t tracks_read = 0;
    std::size_t pos = header.pos();
    while (pos < bytes.size() && tracks_read < track_count) {
        if (pos + 8 > bytes.size()) {
            throw SmfError("truncated chunk header", pos);
        }
        ByteReader chunk(bytes, pos, bytes.size());
        const bool is_track = std::equal(bytes.begin() + pos, bytes.begin() + pos + 4, "MTrk");
        chunk.skip(4);
        const std::uint32_t len = chunk.be(4);
        const std::size_t body = pos + 8;
        if (body + len > bytes.size()) {
            throw SmfError("truncated chunk", pos);
        }
        if (is_track) {
            read_track(bytes, body, body + len, events, tempos);
            ++tracks_read;
        }
        pos = body + len;
    }
    if (tracks_read < track_count) {
        throw SmfError("expected " + std::to_string(track_count) + " tracks, found " + std::to_string(tracks_read),
                       pos);
    }

    std::stable_sort(tempos.begin(), tempos.end(),
                     [](const TickTempo& a, const TickTempo& b) { return a.tick < b.tick; });
    std::stable_sort(events.begin(), events.end(),
                     [](const TickEvent& a, const TickEvent& b) { return a.tick < b.tick; });

    // Tempo segments: start tick, start seconds, microseconds per quarter.
    struct Segment {
        std::uint64_t tick;
        double seconds;
        double us_per_quarter;
    };
    std::vector<Segment> segments{{0, 0.0, 500000.0}};
    for (const auto& t : tempos) {
        Segment& last = segments.back();
        const double seconds = last.seconds + static_cast<double>(t.tick - last.tick) * last.us_per_quarter /
                                                  (1e6 * division);
        if (t.tick == last.tick) {
            last.us_per_quarter = t.us_per_quarter;
        } else {
            segments.push_back({t.tick, seconds, static_cast<double>(t.us_per_quarter)});
        }
    }

    std::vector<TimedEvent> out;
    out.reserve(events.size());
    std::size_t seg = 0;
    for (const auto& e : events) {
        while (seg + 1 < segments.size() && segments[seg + 1].tick <= e.tick) {
            ++seg;
        }
        const Segment& s = segments[seg];
        const double time = s.seconds + static_cast<double>(e.tick - s.tick) * s.us_per_quarter / (1e6 * division);
        out.push_back({time, e.event});
    }
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<TimedEvent> load_smf(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return parse_smf(bytes);
}

// ---------------------------------------------------------------------------
// Standard MIDI File writing

namespace {

void put_be(std::vector<std::uint8_t>& out, std::uint32_t v, int width) {
    for (int i = width - 1; i >= 0; --i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

void put_vlq(std::vector<std::uint8_t>& out, std::uint32_t v) {
    std::uint8_t buf[5];
    int n = 0;
    buf[n++] = v & 0x7F;
    while ((v >>= 7) != 0) {
        buf[n++] = static_cast<std::uint8_t>((v & 0x7F) | 0x80);
    }
    while (n > 0) {
        out.push_back(buf[--n]);
    }
}

}  // namespace

std::vector<std::uint8_t> write_smf(const std::vector<SmfTrack>& tracks, std::uint16_t division) {
    if (division == 0 || (division & 0x8000)) {
        throw std::invalid_argument("division must be a positive tick-per-quarter count");
    }
    std::vector<std::uint8_t> out{'M', 'T', 'h', 'd'};
    put_be(out, 6, 4);
    put_be(out, tracks.size() == 1 ? 0 : 1, 2);
    put_be(out, static_cast<std::uint32_t>(tracks.size()), 2);
    put_be(out, division, 2);

    for (const auto& track : tracks) {
        std::vector<std::uint8_t> body;
        std::uint32_t last_tick = 0;
        for (const auto& item : track) {
            if (item.tick < last_tick) {
                throw std::invalid_argument("track events must be sorted by tick");
            }
            put_vlq(body, item.tick - last_tick);
            last_tick = item.tick;
            if (const auto* ev = std::get_if<MidiEvent>(&item.payload)) {
                const auto bytes = encode_event(*ev);
                body.insert(body.end(), bytes.begin(), bytes.end());
            } else {
                const auto& tempo = std::get<TempoChange>(item.payload);
                body.insert(body.end(), {0xFF, 0x51, 0x03});
                put_be(body, tempo.microseconds_per_quarter & 0xFFFFFF, 3);
            }
        }
        body.insert(body.end(), {0x00, 0xFF, 0x2F, 0x00});
        out.insert(out.end(), {'M', 'T', 'r', 'k'});
        put_be(out, static_cast<std::uint32_t>(body.size()), 4);
        out.insert(out.end(), body.begin(), body.end());
    }
    return out;
}

}  // namespace qguitar::midi
