#include "qguitar/audio_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace qguitar::io {

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint32_t v, int width) {
    for (int i = 0; i < width; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

std::uint32_t get_le(const std::vector<std::uint8_t>& in, std::size_t pos, int width) {
    if (pos + static_cast<std::size_t>(width) > in.size()) {
        throw std::runtime_error("truncated WAV file");
    }
    std::uint32_t v = 0;
    for (int i = width - 1; i >= 0; --i) {
        v = (v << 8) | in[pos + static_cast<std::size_t>(i)];
    }
    return v;
}

constexpr std::uint32_t kHeaderBytes = 58;  // RIFF + fmt(18) + fact + data headers

std::vector<std::uint8_t> header(int sample_rate, int channels, std::uint32_t frames) {
    const std::uint32_t data_bytes = frames * static_cast<std::uint32_t>(channels) * 4;
    std::vector<std::uint8_t> out;
    out.reserve(kHeaderBytes);
    put_tag(out, "RIFF");
    put_le(out, kHeaderBytes - 8 + data_bytes, 4);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_le(out, 18, 4);
    put_le(out, 3, 2);  // WAVE_FORMAT_IEEE_FLOAT
    put_le(out, static_cast<std::uint32_t>(channels), 2);
    put_le(out, static_cast<std::uint32_t>(sample_rate), 4);
    put_le(out, static_cast<std::uint32_t>(sample_rate * channels * 4), 4);
    put_le(out, static_cast<std::uint32_t>(channels * 4), 2);
    put_le(out, 32, 2);
    put_le(out, 0, 2);
    put_tag(out, "fact");
    put_le(out, 4, 4);
    put_le(out, frames, 4);
    put_tag(out, "data");
    put_le(out, data_bytes, 4);
    return out;
}

void append_samples(std::vector<std::uint8_t>& out, std::span<const float> mono, int channels) {
    for (const float s : mono) {
        const auto bits = std::bit_cast<std::uint32_t>(s);
        for (int c = 0; c < channels; ++c) {
            put_le(out, bits, 4);
        }
    }
}

void check_channels(int channels) {
    if (channels != 1 && channels != 2) {
        throw std::invalid_argument("WAV output supports 1 or 2 channels");
    }
}

}  // namespace

std::vector<std::uint8_t> encode_wav(std::span<const float> mono, int sample_rate, int channels) {
    check_channels(channels);
    auto out = header(sample_rate, channels, static_cast<std::uint32_t>(mono.size()));
    out.reserve(out.size() + mono.size() * static_cast<std::size_t>(channels) * 4);
    append_samples(out, mono, channels);
    return out;
}

void write_wav(const std::string& path, std::span<const float> mono, int sample_rate, int channels) {
    const auto bytes = encode_wav(mono, sample_rate, channels);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("failed writing " + path);
    }
}

WavData read_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error(path + ": not a RIFF/WAVE file");
    }
    WavData wav;
    int format = 0;
    int bits = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::string tag(reinterpret_cast<const char*>(bytes.data() + pos), 4);
        const std::uint32_t len = get_le(bytes, pos + 4, 4);
        const std::size_t body = pos + 8;
        if (tag == "fmt ") {
            format = static_cast<int>(get_le(bytes, body, 2));
            wav.channels = static_cast<int>(get_le(bytes, body + 2, 2));
            wav.sample_rate = static_cast<int>(get_le(bytes, body + 4, 4));
            bits = static_cast<int>(get_le(bytes, body + 14, 2));
        } else if (tag == "data") {
            if (format != 3 || bits != 32) {
                throw std::runtime_error(path + ": only 32-bit float WAV is supported");
            }
            const std::size_t count = std::min<std::size_t>(len, bytes.size() - body) / 4;
            wav.interleaved.resize(count);
            for (std::size_t i = 0; i < count; ++i) {
                wav.interleaved[i] = std::bit_cast<float>(get_le(bytes, body + 4 * i, 4));
            }
            return wav;
        }
        pos = body + len + (len & 1);
    }
    throw std::runtime_error(path + ": no data chunk");
}

WavStreamWriter::WavStreamWriter(const std::string& path, int sample_rate, int channels)
    : sample_rate_(sample_rate), channels_(channels) {
    check_channels(channels);
    file_ = std::fopen(path.c_str(), "wb");
    if (!file_) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    const auto h = header(sample_rate_, channels_, 0);
    std::fwrite(h.data(), 1, h.size(), file_);
}

WavStreamWriter::~WavStreamWriter() { close(); }

bool WavStreamWriter::write(std::span<const float> mono) {
    if (!file_) {
        return false;
    }
    std::vector<std::uint8_t> buf;
    buf.reserve(mono.size() * static_cast<std::size_t>(channels_) * 4);
    append_samples(buf, mono, channels_);
    if (std::fwrite(buf.data(), 1, buf.size(), file_) != buf.size()) {
        return false;
    }
    frames_ += static_cast<std::uint32_t>(mono.size());
    return true;
}

void WavStreamWriter::close() {
    if (!file_) {
        return;
    }
    const auto h = header(sample_rate_, channels_, frames_);
    std::fseek(file_, 0, SEEK_SET);
    std::fwrite(h.data(), 1, h.size(), file_);
    std::fclose(file_);
    file_ = nullptr;
}

// ---------------------------------------------------------------------------
// Measurement log

std::string format_measurement(const engine::LoggedMeasurement& entry) {
    nlohmann::ordered_json j;
    j["time_seconds"] = entry.time;
    j["basis"] = std::string(quantum::to_string(entry.outcome.basis));
    j["bit"] = entry.outcome.bit;
    j["pre_probability"] = entry.outcome.pre_probability;
    if (entry.string >= 0) {
        j["string"] = entry.string;
    }
    return j.dump();
}

engine::LoggedMeasurement parse_measurement(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    engine::LoggedMeasurement entry;
    entry.time = j.at("time_seconds").get<double>();
    entry.outcome.basis = quantum::parse_basis(j.at("basis").get<std::string>());
    entry.outcome.bit = j.at("bit").get<int>();
    entry.outcome.pre_probability = j.at("pre_probability").get<double>();
    if (entry.outcome.bit != 0 && entry.outcome.bit != 1) {
        throw std::invalid_argument("measurement bit must be 0 or 1");
    }
    entry.string = j.value("string", -1);
    return entry;
}

void write_measurement_log(const std::string& path, const std::vector<engine::LoggedMeasurement>& entries) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    for (const auto& e : entries) {
        out << format_measurement(e) << '\n';
    }
    if (!out) {
        throw std::runtime_error("failed writing " + path);
    }
}

std::vector<engine::LoggedMeasurement> read_measurement_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    std::vector<engine::LoggedMeasurement> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(parse_measurement(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace qguitar::io
