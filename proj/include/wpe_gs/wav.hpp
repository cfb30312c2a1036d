#pragma once

// Minimal RIFF/WAVE reader (16-bit PCM, 32-bit float) and 16-bit PCM writer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "wpe_gs/core.hpp"

namespace wpe_gs {

struct WavData {
    double sample_rate = 0.0;
    std::vector<std::vector<double>> channels;
};

namespace detail {

inline std::uint32_t read_u32(const unsigned char* p)
{
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | p[1] << 8); }

inline void put_u32(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& out, std::uint16_t v)
{
    out.push_back(char(v & 0xff));
    out.push_back(char(v >> 8));
}

}  // namespace detail

inline WavData read_wav(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open WAV file: " + path);
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw InputError("not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::size_t size = detail::read_u32(chunk + 4);
        const std::size_t body = pos + 8;
        if (body + size > bytes.size()) throw InputError("truncated WAV chunk in " + path);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (size < 16) throw InputError("malformed fmt chunk in " + path);
            format = detail::read_u16(chunk + 8);
            channels = detail::read_u16(chunk + 10);
            rate = detail::read_u32(chunk + 12);
            bits = detail::read_u16(chunk + 22);
            if (format == 0xFFFE && size >= 26) format = detail::read_u16(chunk + 32);  // extensible subformat
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_size = size;
        }
        pos = body + size + (size & 1);
    }
    if (channels == 0 || data == nullptr) throw InputError("WAV file lacks fmt or data chunk: " + path);

    const bool pcm16 = format == 1 && bits == 16;
    const bool float32 = format == 3 && bits == 32;
    if (!pcm16 && !float32) throw InputError("unsupported WAV sample format (need 16-bit PCM or 32-bit float): " + path);

    const std::size_t width = bits / 8;
    const std::size_t frames = data_size / (width * channels);
    WavData out;
    out.sample_rate = rate;
    out.channels.assign(channels, std::vector<double>(frames));
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < channels; ++c) {
            const unsigned char* s = data + (t * channels + c) * width;
            if (pcm16) {
                out.channels[c][t] = double(std::int16_t(detail::read_u16(s))) / 32768.0;
            } else {
                float v;
                std::uint32_t raw = detail::read_u32(s);
                std::memcpy(&v, &raw, sizeof v);
                out.channels[c][t] = double(v);
            }
        }
    }
    return out;
}

inline void write_wav(const std::string& path, const std::vector<std::vector<double>>& channels, double sample_rate)
{
    require(!channels.empty(), "write_wav: no channels");
    const std::size_t frames = channels.front().size();
    for (const auto& c : channels) require(c.size() == frames, "write_wav: channel length mismatch");

    const auto n_ch = std::uint16_t(channels.size());
    const auto rate = std::uint32_t(std::lround(sample_rate));
    const std::uint32_t data_size = std::uint32_t(frames * n_ch * 2);
    std::string out;
    out.reserve(44 + data_size);
    out += "RIFF";
    detail::put_u32(out, 36 + data_size);
    out += "WAVEfmt ";
    detail::put_u32(out, 16);
    detail::put_u16(out, 1);
    detail::put_u16(out, n_ch);
    detail::put_u32(out, rate);
    detail::put_u32(out, rate * n_ch * 2);
    detail::put_u16(out, std::uint16_t(n_ch * 2));
    detail::put_u16(out, 16);
    out += "data";
    detail::put_u32(out, data_size);
    for (std::size_t t = 0; t < frames; ++t) {
        for (const auto& c : channels) {
            const double scaled = std::round(c[t] * 32768.0);
            const auto v = std::int16_t(std::clamp(scaled, -32768.0, 32767.0));
            detail::put_u16(out, std::uint16_t(v));
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write WAV file: " + path);
    f.write(out.data(), std::streamsize(out.size()));
}

struct LoadedAudio {
    std::vector<std::vector<double>> channels;
    std::vector<std::string> warnings;
};

// Concatenates the channels of all files in order. Sample rates must match
// `sample_rate`; lengths may differ by at most `max_trim` samples, in which
// case every channel is trimmed to the shortest.
inline LoadedAudio load_wav(const std::vector<std::string>& paths, double sample_rate, std::size_t max_trim)
{
    if (paths.empty()) throw InputError("load_wav: no input files");
    LoadedAudio out;
    for (const auto& path : paths) {
        auto wav = read_wav(path);
        if (wav.sample_rate != sample_rate)
            throw InputError("sample rate of " + path + " (" + std::to_string(wav.sample_rate) +
                             " Hz) differs from the configured rate; resampling is not supported");
        for (auto& c : wav.channels) out.channels.push_back(std::move(c));
    }
    std::size_t shortest = out.channels.front().size(), longest = shortest;
    for (const auto& c : out.channels) {
        shortest = std::min(shortest, c.size());
        longest = std::max(longest, c.size());
    }
    if (longest - shortest > max_trim) throw InputError("load_wav: channel lengths differ by more than one frame");
    if (longest != shortest) {
        out.warnings.push_back("trimming channels to " + std::to_string(shortest) + " samples");
        for (auto& c : out.channels) c.resize(shortest);
    }
    return out;
}

}  // namespace wpe_gs
