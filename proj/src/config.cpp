#include "qguitar/config.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace qguitar::session {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
        s.remove_prefix(1);
    }
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
    }
    return s;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

long long to_int(std::string_view v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::invalid_argument("expected an integer, got '" + std::string(v) + "'");
    }
    return out;
}

int to_small_int(std::string_view v) {
    const long long x = to_int(v);
    if (x < -1000000000LL || x > 1000000000LL) {
        throw std::invalid_argument("integer out of range");
    }
    return static_cast<int>(x);
}

double to_double(std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::invalid_argument("expected a number, got '" + std::string(v) + "'");
    }
    return out;
}

bool to_bool(std::string_view v) {
    const std::string s = lower(v);
    if (s == "true" || s == "yes" || s == "on" || s == "1") {
        return true;
    }
    if (s == "false" || s == "no" || s == "off" || s == "0") {
        return false;
    }
    throw std::invalid_argument("expected true or false, got '" + std::string(v) + "'");
}

engine::Waveform to_waveform(std::string_view v) {
    const std::string s = lower(v);
    if (s == "sine") return engine::Waveform::Sine;
    if (s == "saw" || s == "sawtooth") return engine::Waveform::Saw;
    if (s == "square") return engine::Waveform::Square;
    if (s == "triangle") return engine::Waveform::Triangle;
    throw std::invalid_argument("unknown waveform '" + std::string(v) + "' (sine, saw, square, triangle)");
}

double to_ranged(std::string_view v, double lo, double hi, bool open_lo = false) {
    const double x = to_double(v);
    if (!std::isfinite(x) || x < lo || x > hi || (open_lo && x == lo)) {
        throw std::invalid_argument("must be " + std::string(open_lo ? "> " : ">= ") + std::to_string(lo) +
                                    (std::isinf(hi) ? std::string() : " and <= " + std::to_string(hi)));
    }
    return x;
}

double to_positive(std::string_view v) { return to_ranged(v, 0.0, INFINITY, true); }
double to_nonneg(std::string_view v) { return to_ranged(v, 0.0, INFINITY); }
double to_unit(std::string_view v) { return to_ranged(v, 0.0, 1.0); }

int to_cc(std::string_view v) {
    const int cc = to_small_int(v);
    if (cc < 0 || cc > 127) {
        throw std::invalid_argument("controller numbers are 0..127");
    }
    return cc;
}

// The two rotation pedals are configured by name and assembled afterwards.
struct PedalSlots {
    int a_cc = 20;
    quantum::Axis a_axis = quantum::Axis::X;
    int b_cc = 21;
    quantum::Axis b_axis = quantum::Axis::Y;
};

// Parse-time view: the config being built plus the two named rotation pedals,
// which become ControlMapping::rotation_cc once every line is read.
struct ParseContext : SessionConfig {
    PedalSlots pedals;
};

using Setter = std::function<void(ParseContext&, std::string_view)>;

struct Keys {
    std::vector<std::pair<std::string_view, Setter>> setters;
    std::vector<std::string_view> names;
};

const Keys& keys() {
    static const Keys table = [] {
        Keys k;
        auto add = [&k](std::string_view name, Setter s) {
            k.setters.emplace_back(name, std::move(s));
            k.names.push_back(name);
        };
        using C = ParseContext;
        using V = std::string_view;

        add("sample_rate", [](C& c, V v) {
            const int sr = to_small_int(v);
            if (sr != 44100 && sr != 48000 && sr != 96000) {
                throw std::invalid_argument("must be 44100, 48000 or 96000");
            }
            c.render.sample_rate = sr;
        });
        add("block_size", [](C& c, V v) {
            const int bs = to_small_int(v);
            if (bs < 32 || bs > 4096 || (bs & (bs - 1)) != 0) {
                throw std::invalid_argument("must be a power of two in 32..4096");
            }
            c.render.block_size = bs;
        });
        add("seed", [](C& c, V v) { c.render.seed = parse_seed(v); });
        add("channels", [](C& c, V v) {
            c.channels = to_small_int(v);
            if (c.channels != 1 && c.channels != 2) {
                throw std::invalid_argument("must be 1 or 2");
            }
        });
        add("ramp_ms", [](C& c, V v) { c.render.ramp_ms = to_nonneg(v); });
        add("max_detune_cents", [](C& c, V v) { c.render.max_detune_cents = to_nonneg(v); });
        add("bend_range", [](C& c, V v) { c.render.bend_range = to_positive(v); });
        add("voice_level", [](C& c, V v) { c.render.voice_level = to_ranged(v, 0.0, 1.0, true); });
        add("tail_seconds", [](C& c, V v) { c.render.tail_seconds = to_nonneg(v); });
        add("per_string_qubits", [](C& c, V v) { c.render.per_string_qubits = to_bool(v); });

        add("waveform.classical", [](C& c, V v) { c.render.classical_waveform = to_waveform(v); });
        add("waveform.bank0", [](C& c, V v) { c.render.bank0_waveform = to_waveform(v); });
        add("waveform.bank1", [](C& c, V v) { c.render.bank1_waveform = to_waveform(v); });

        add("envelope.attack_s", [](C& c, V v) { c.render.envelope.attack_s = to_nonneg(v); });
        add("envelope.decay_s", [](C& c, V v) { c.render.envelope.decay_s = to_nonneg(v); });
        add("envelope.sustain_level", [](C& c, V v) { c.render.envelope.sustain_level = to_unit(v); });
        add("envelope.release_s", [](C& c, V v) { c.render.envelope.release_s = to_nonneg(v); });
        add("envelope.infinite_sustain", [](C& c, V v) { c.render.envelope.infinite_sustain = to_bool(v); });
        add("envelope.natural_decay_s", [](C& c, V v) { c.render.envelope.natural_decay_s = to_positive(v); });

        add("gain.classical", [](C& c, V v) { c.render.initial_classical_gain = to_unit(v); });
        add("gain.quantum", [](C& c, V v) { c.render.initial_quantum_gain = to_unit(v); });

        add("strings.channels", [](C& c, V v) {
            std::array<int, 16> map;
            map.fill(-1);
            int string = 0;
            std::size_t start = 0;
            while (start <= v.size()) {
                const std::size_t comma = v.find(',', start);
                const V item = trim(v.substr(start, comma == V::npos ? V::npos : comma - start));
                if (string >= engine::kStringCount) {
                    throw std::invalid_argument("expected exactly 6 channels");
                }
                const int ch = to_small_int(item);
                if (ch < 0 || ch > 15) {
                    throw std::invalid_argument("channels are 0..15");
                }
                if (map[ch] != -1) {
                    throw std::invalid_argument("channel " + std::to_string(ch) + " assigned twice");
                }
                map[ch] = string++;
                if (comma == V::npos) {
                    break;
                }
                start = comma + 1;
            }
            if (string != engine::kStringCount) {
                throw std::invalid_argument("expected exactly 6 channels");
            }
            c.render.channel_to_string = map;
        });

        add("mapping.mode", [](C& c, V v) {
            const std::string s = lower(v);
            if (s == "incremental") {
                c.render.mapping.mode = control::PedalMode::Incremental;
            } else if (s == "absolute") {
                c.render.mapping.mode = control::PedalMode::Absolute;
            } else {
                throw std::invalid_argument("mode is incremental or absolute");
            }
        });
        add("mapping.sensitivity", [](C& c, V v) { c.render.mapping.sensitivity = to_positive(v); });
        add("mapping.threshold", [](C& c, V v) {
            const int t = to_small_int(v);
            if (t < 1 || t > 127) {
                throw std::invalid_argument("must be in 1..127");
            }
            c.render.mapping.threshold = t;
        });
        add("mapping.taper", [](C& c, V v) {
            const std::string s = lower(v);
            if (s == "linear") {
                c.render.mapping.taper = control::Taper::Linear;
            } else if (s == "audio") {
                c.render.mapping.taper = control::Taper::Audio;
            } else {
                throw std::invalid_argument("taper is linear or audio");
            }
        });
        add("mapping.pedal_a_cc", [](C& c, V v) { c.pedals.a_cc = to_cc(v); });
        add("mapping.pedal_a_axis", [](C& c, V v) { c.pedals.a_axis = quantum::parse_axis(v); });
        add("mapping.pedal_b_cc", [](C& c, V v) { c.pedals.b_cc = to_cc(v); });
        add("mapping.pedal_b_axis", [](C& c, V v) { c.pedals.b_axis = quantum::parse_axis(v); });
        add("mapping.pedal_b_alternate_axis",
            [](C& c, V v) { c.render.mapping.alternate_axis = quantum::parse_axis(v); });
        add("mapping.axis_switch_cc", [](C& c, V v) { c.render.mapping.axis_switch_cc = to_cc(v); });
        add("mapping.measure_cc", [](C& c, V v) { c.render.mapping.measure_cc = to_cc(v); });
        add("mapping.measure_basis", [](C& c, V v) { c.render.mapping.measure_basis = quantum::parse_basis(v); });
        add("mapping.measure_x_cc", [](C& c, V v) {
            if (lower(v) == "none") {
                c.render.mapping.measure_x_cc.reset();
            } else {
                c.render.mapping.measure_x_cc = to_cc(v);
            }
        });
        add("mapping.classical_gain_cc", [](C& c, V v) { c.render.mapping.classical_gain_cc = to_cc(v); });
        add("mapping.quantum_gain_cc", [](C& c, V v) { c.render.mapping.quantum_gain_cc = to_cc(v); });

        add("telemetry.port", [](C& c, V v) {
            const int port = to_small_int(v);
            if (port < 0 || port > 65535) {
                throw std::invalid_argument("port is 0..65535");
            }
            c.telemetry.port = port;
        });
        add("telemetry.rate_hz", [](C& c, V v) {
            const double rate = to_double(v);
            if (!(rate > 0.0 && rate <= 1000.0)) {
                throw std::invalid_argument("rate_hz must be in (0, 1000]");
            }
            c.telemetry.rate_hz = rate;
        });

        add("live.midi_input", [](C& c, V v) { c.live.midi_input = std::string(v); });
        add("live.audio_output", [](C& c, V v) { c.live.audio_output = std::string(v); });
        add("live.measurement_log", [](C& c, V v) { c.live.measurement_log = std::string(v); });
        return k;
    }();
    return table;
}

}  // namespace

const std::vector<std::string_view>& required_config_keys() {
    static const std::vector<std::string_view> required{"sample_rate", "block_size"};
    return required;
}

const std::vector<std::string_view>& known_config_keys() { return keys().names; }

std::uint64_t parse_seed(std::string_view text) {
    text = trim(text);
    int base = 10;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) {
        text.remove_prefix(2);
        base = 16;
    }
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed, base);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw std::invalid_argument("seed must be an unsigned 64-bit integer (decimal or 0x hex)");
    }
    return seed;
}

SessionConfig parse_session_config(std::string_view text, const std::string& origin) {
    ParseContext config;
    std::set<std::string, std::less<>> seen;
    const auto& table = keys().setters;

    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;

        line = trim(line);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (const std::size_t hash = line.find(" #"); hash != std::string_view::npos) {
            line = trim(line.substr(0, hash));
        }
        const std::size_t eq = line.find('=');
        const std::string where = origin + ":" + std::to_string(line_no);
        if (eq == std::string_view::npos) {
            throw ConfigError(where + ": expected 'key = value'", std::string(line), line_no);
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));

        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == key; });
        if (it == table.end()) {
            throw ConfigError(where + ": unknown key '" + key + "'", key, line_no);
        }
        if (!seen.insert(key).second) {
            throw ConfigError(where + ": duplicate key '" + key + "'", key, line_no);
        }
        if (value.empty() && key.rfind("live.", 0) != 0) {
            throw ConfigError(where + ": key '" + key + "' has no value", key, line_no);
        }
        try {
            it->second(config, value);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(where + ": invalid value for '" + key + "': " + e.what(), key, line_no);
        }
    }

    for (const auto key : required_config_keys()) {
        if (!seen.contains(key)) {
            throw ConfigError(origin + ": missing required key '" + std::string(key) + "'", std::string(key));
        }
    }

    auto& mapping = config.render.mapping;
    // Controller clashes are reported against a key the file actually set.
    std::vector<std::pair<std::string, int>> ccs = {{"mapping.pedal_a_cc", config.pedals.a_cc},
                                                    {"mapping.pedal_b_cc", config.pedals.b_cc},
                                                    {"mapping.axis_switch_cc", mapping.axis_switch_cc},
                                                    {"mapping.measure_cc", mapping.measure_cc},
                                                    {"mapping.classical_gain_cc", mapping.classical_gain_cc},
                                                    {"mapping.quantum_gain_cc", mapping.quantum_gain_cc}};
    if (mapping.measure_x_cc) {
        ccs.emplace_back("mapping.measure_x_cc", *mapping.measure_x_cc);
    }
    std::map<int, std::string> owner;
    for (const auto& [key, cc] : ccs) {
        const auto [it, fresh] = owner.emplace(cc, key);
        if (!fresh) {
            const std::string& blame = seen.contains(key) ? key : it->second;
            throw ConfigError(origin + ": " + it->second + " and " + key + " both use controller " +
                                  std::to_string(cc),
                              blame);
        }
    }
    if (mapping.alternate_axis == config.pedals.b_axis) {
        throw ConfigError(origin + ": mapping.pedal_b_alternate_axis must differ from mapping.pedal_b_axis",
                          "mapping.pedal_b_alternate_axis");
    }
    mapping.rotation_cc = {{config.pedals.a_cc, config.pedals.a_axis}, {config.pedals.b_cc, config.pedals.b_axis}};
    mapping.switchable_cc = config.pedals.b_cc;

    try {
        config.render.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(origin + ": " + e.what(), "");
    }
    return static_cast<SessionConfig&&>(config);
}

SessionConfig load_session_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path, "");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_session_config(buf.str(), path);
}

}  // namespace qguitar::session
