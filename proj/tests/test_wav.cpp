#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "wpe_gs/wav.hpp"

using namespace wpe_gs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() : path(fs::temp_directory_path() / ("wpe_gs_wav_" + std::to_string(std::rand())))
    {
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void le(std::string& s, std::uint64_t v, int bytes)
{
    for (int i = 0; i < bytes; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

// Hand-assembled WAV with an optional leading LIST chunk.
std::string wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate, std::uint16_t bits,
                      const std::string& samples, bool extensible = false, bool list_chunk = false)
{
    std::string fmt;
    le(fmt, extensible ? 0xFFFE : format, 2);
    le(fmt, channels, 2);
    le(fmt, rate, 4);
    le(fmt, rate * channels * bits / 8, 4);
    le(fmt, channels * bits / 8, 2);
    le(fmt, bits, 2);
    if (extensible) {
        le(fmt, 22, 2);
        le(fmt, bits, 2);
        le(fmt, 0, 4);
        le(fmt, format, 2);  // first two bytes of the subformat GUID
        fmt += std::string("\x00\x00\x00\x00\x10\x00\x80\x00\x00\xAA\x00\x38\x9B\x71", 14);
    }
    std::string body = "WAVE";
    if (list_chunk) {
        body += "LIST";
        le(body, 5, 4);
        body += std::string("abcde\0", 6);  // odd size plus pad byte
    }
    body += "fmt ";
    le(body, fmt.size(), 4);
    body += fmt;
    body += "data";
    le(body, samples.size(), 4);
    body += samples;
    std::string out = "RIFF";
    le(out, body.size(), 4);
    return out + body;
}

void save(const std::string& path, const std::string& bytes)
{
    std::ofstream(path, std::ios::binary).write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("16-bit round trip", "[wav]")
{
    TempDir dir;
    const std::vector<std::vector<double>> ch{{0.0, 0.5, -0.5, -1.0, 1000.0 / 32768.0},
                                              {0.25, -0.25, 1.0 / 32768.0, 0.0, 2.0}};
    write_wav(dir.file("a.wav"), ch, 16000.0);
    const auto w = read_wav(dir.file("a.wav"));
    REQUIRE(w.sample_rate == 16000.0);
    REQUIRE(w.channels.size() == 2);
    REQUIRE(w.channels[0] == ch[0]);
    REQUIRE(w.channels[1][4] == 32767.0 / 32768.0);  // clamped
    for (std::size_t t = 0; t < 4; ++t) REQUIRE(w.channels[1][t] == ch[1][t]);
    REQUIRE(fs::file_size(dir.file("a.wav")) == 44 + 2 * 2 * 5);
}

TEST_CASE("hand-built files", "[wav]")
{
    TempDir dir;

    SECTION("PCM16 with an extra chunk")
    {
        std::string s;
        le(s, std::uint16_t(-16384), 2);
        le(s, 8192, 2);
        save(dir.file("p.wav"), wav_bytes(1, 1, 8000, 16, s, false, true));
        const auto w = read_wav(dir.file("p.wav"));
        REQUIRE(w.sample_rate == 8000.0);
        REQUIRE(w.channels[0] == std::vector<double>{-0.5, 0.25});
    }

    SECTION("full-scale square wave")
    {
        std::string s;
        for (int i = 0; i < 8; ++i) le(s, std::uint16_t(i % 2 ? 32767 : -32767), 2);
        save(dir.file("sq.wav"), wav_bytes(1, 2, 16000, 16, s));
        const auto w = read_wav(dir.file("sq.wav"));
        REQUIRE(w.channels.size() == 2);
        for (double v : w.channels[0]) REQUIRE(v == -32767.0 / 32768.0);
        for (double v : w.channels[1]) REQUIRE(v == 32767.0 / 32768.0);
    }

    SECTION("float32 interleaved")
    {
        std::string s;
        for (float v : {0.1f, -0.2f, 0.3f, -0.4f}) le(s, std::bit_cast<std::uint32_t>(v), 4);
        save(dir.file("f.wav"), wav_bytes(3, 2, 16000, 32, s));
        const auto w = read_wav(dir.file("f.wav"));
        REQUIRE(w.channels[0] == std::vector<double>{double(0.1f), double(0.3f)});
        REQUIRE(w.channels[1] == std::vector<double>{double(-0.2f), double(-0.4f)});
    }

    SECTION("extensible PCM")
    {
        std::string s;
        le(s, 16384, 2);
        save(dir.file("e.wav"), wav_bytes(1, 1, 16000, 16, s, true));
        REQUIRE(read_wav(dir.file("e.wav")).channels[0] == std::vector<double>{0.5});
    }

    SECTION("unsupported and malformed")
    {
        save(dir.file("u8.wav"), wav_bytes(1, 1, 16000, 8, std::string(4, '\x80')));
        REQUIRE_THROWS_AS(read_wav(dir.file("u8.wav")), InputError);
        save(dir.file("junk.wav"), "hello world, not a wav file at all......");
        REQUIRE_THROWS_AS(read_wav(dir.file("junk.wav")), InputError);
        auto truncated = wav_bytes(1, 1, 16000, 16, std::string(100, '\0'));
        truncated.resize(truncated.size() - 50);
        save(dir.file("t.wav"), truncated);
        REQUIRE_THROWS_AS(read_wav(dir.file("t.wav")), InputError);
        REQUIRE_THROWS_AS(read_wav(dir.file("missing.wav")), InputError);
    }
}

TEST_CASE("loading multichannel input", "[wav]")
{
    TempDir dir;
    write_wav(dir.file("a.wav"), {{0.1, 0.2, 0.3, 0.4}, {0.5, 0.6, 0.7, 0.8}}, 16000.0);
    write_wav(dir.file("b.wav"), {{0.0, 0.1, 0.2}}, 16000.0);
    write_wav(dir.file("c.wav"), {{0.0}}, 16000.0);
    write_wav(dir.file("r.wav"), {{0.0, 0.1, 0.2, 0.3}}, 48000.0);

    const auto both = load_wav({dir.file("a.wav"), dir.file("b.wav")}, 16000.0, 2);
    REQUIRE(both.channels.size() == 3);
    for (const auto& c : both.channels) REQUIRE(c.size() == 3);
    REQUIRE(both.warnings.size() == 1);
    REQUIRE(load_wav({dir.file("a.wav")}, 16000.0, 0).warnings.empty());

    REQUIRE_THROWS_AS(load_wav({dir.file("a.wav"), dir.file("c.wav")}, 16000.0, 2), InputError);
    REQUIRE_THROWS_AS(load_wav({dir.file("a.wav"), dir.file("r.wav")}, 16000.0, 2), InputError);
    REQUIRE_THROWS_AS(load_wav({}, 16000.0, 2), InputError);
}
