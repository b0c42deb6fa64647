#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "soundedit/media.hpp"
#include "support/testing.hpp"

using namespace soundedit;

namespace {

std::string temp_path(const std::string& name) {
    return std::string("/tmp/soundedit_test_") + name;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>());
}

void write_le32(std::vector<unsigned char>& b, uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

void write_le16(std::vector<unsigned char>& b, uint16_t v) {
    for (int i = 0; i < 2; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

}  // namespace

TEST_CASE("image validation catches contract violations") {
    Image ok(8, 8, 0.5);
    CHECK_NOTHROW(ok.validate());

    Image small(4, 12, 0.5);
    CHECK_THROWS_AS(small.validate(), ShapeError);

    Image bad_range(8, 8, 0.5);
    bad_range.at(3, 3, 1) = 1.5;
    CHECK_THROWS_AS(bad_range.validate(), NumericError);

    Image nonfinite(8, 8, 0.5);
    nonfinite.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(nonfinite.validate(), NumericError);

    Image truncated(8, 8, 0.5);
    truncated.pixels.pop_back();
    CHECK_THROWS_AS(truncated.validate(), ShapeError);
}

TEST_CASE("image tensor round trip and clamping") {
    Image img(8, 10, 0.0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 10; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = (y * 10.0 + x) / 100.0 + c * 0.003;

    Tensor t = img.to_tensor();
    CHECK(t.rows() == 80);
    CHECK(t.cols() == 3);
    CHECK(t.at(3 * 10 + 7, 2) == doctest::Approx(img.at(3, 7, 2)));

    Image back = Image::from_tensor(t, 8, 10);
    CHECK(back.max_abs_diff(img) == doctest::Approx(0.0));

    Tensor wild = t;
    wild.at(0, 0) = -0.4;
    wild.at(1, 1) = 1.7;
    Image clamped = Image::from_tensor(wild, 8, 10);
    CHECK(clamped.at(0, 0, 0) == doctest::Approx(0.0));
    CHECK(clamped.at(0, 1, 1) == doctest::Approx(1.0));
}

TEST_CASE("audio validation and gain application") {
    AudioClip clip;
    clip.samples = {0.5, -0.25, 0.8};
    clip.sample_rate = 16000;
    CHECK_NOTHROW(clip.validate());
    CHECK(clip.duration_seconds() == doctest::Approx(3.0 / 16000.0));

    clip.gain = 2.0;
    auto g = clip.gained_samples();
    CHECK(g[0] == doctest::Approx(1.0));   // 1.0 after clamp
    CHECK(g[1] == doctest::Approx(-0.5));
    CHECK(g[2] == doctest::Approx(1.0));

    clip.gain = 0.5;
    g = clip.gained_samples();
    CHECK(g[0] == doctest::Approx(0.25));

    AudioClip empty;
    empty.samples = {};
    CHECK_THROWS_AS(empty.validate(), ShapeError);

    AudioClip bad_gain = clip;
    bad_gain.gain = -1.0;
    CHECK_THROWS_AS(bad_gain.validate(), NumericError);
}

TEST_CASE("make_tone matches the analytic sinusoid") {
    AudioClip tone = make_tone(440.0, 0.3, 100, 16000, 0.25);
    REQUIRE(tone.samples.size() == 100);
    for (int i = 0; i < 100; ++i) {
        double expected = 0.3 * std::sin(2.0 * M_PI * 440.0 * i / 16000.0 + 0.25);
        CHECK(tone.samples[static_cast<size_t>(i)] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("png write/read round trip is quantization-exact and byte-deterministic") {
    Image img(12, 9, 0.0);
    RandomStream rng(404);
    for (double& p : img.pixels) p = rng.uniform();

    std::string p1 = temp_path("rt1.png"), p2 = temp_path("rt2.png");
    write_png(img, p1);
    write_png(img, p2);
    CHECK(read_bytes(p1) == read_bytes(p2));

    Image back = read_png(p1);
    CHECK(back.height == 12);
    CHECK(back.width == 9);
    // round-trip error is bounded by half a quantization step
    CHECK(back.max_abs_diff(img) <= 0.5 / 255.0 + 1e-12);

    // values already on the 8-bit grid survive exactly
    Image grid(8, 8, 0.0);
    for (size_t i = 0; i < grid.pixels.size(); ++i) grid.pixels[i] = (i % 256) / 255.0;
    write_png(grid, p1);
    CHECK(read_png(p1).max_abs_diff(grid) == doctest::Approx(0.0));

    std::remove(p1.c_str());
    std::remove(p2.c_str());
    CHECK_THROWS_AS(read_png(temp_path("missing.png")), IoError);
}

TEST_CASE("wav write/read round trip preserves samples to 16-bit precision") {
    AudioClip tone = make_tone(440.0, 0.9, 2048, 22050);
    tone.gain = 3.0;  // gain is runtime metadata; files store raw samples

    std::string path = temp_path("rt.wav");
    write_wav(tone, path);
    AudioClip back = read_wav(path);
    CHECK(back.sample_rate == 22050);
    CHECK(back.gain == doctest::Approx(1.0));
    REQUIRE(back.samples.size() == tone.samples.size());
    double max_err = 0.0;
    for (size_t i = 0; i < back.samples.size(); ++i)
        max_err = std::max(max_err, std::fabs(back.samples[i] - tone.samples[i]));
    CHECK(max_err <= 1.0 / 32767.0);
    std::remove(path.c_str());
}

TEST_CASE("wav reader averages multi-channel input to mono") {
    // hand-built stereo PCM16 file: left channel 0.5, right channel -0.25
    std::vector<unsigned char> b;
    int n_frames = 16;
    uint32_t data_bytes = static_cast<uint32_t>(n_frames * 2 * 2);
    b.insert(b.end(), {'R', 'I', 'F', 'F'});
    write_le32(b, 36 + data_bytes);
    b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    write_le32(b, 16);
    write_le16(b, 1);      // PCM
    write_le16(b, 2);      // stereo
    write_le32(b, 8000);   // sample rate
    write_le32(b, 8000 * 4);
    write_le16(b, 4);      // block align
    write_le16(b, 16);     // bits
    b.insert(b.end(), {'d', 'a', 't', 'a'});
    write_le32(b, data_bytes);
    int16_t left = static_cast<int16_t>(std::lround(0.5 * 32767.0));
    int16_t right = static_cast<int16_t>(std::lround(-0.25 * 32767.0));
    for (int i = 0; i < n_frames; ++i) {
        write_le16(b, static_cast<uint16_t>(left));
        write_le16(b, static_cast<uint16_t>(right));
    }

    std::string path = temp_path("stereo.wav");
    {
        std::ofstream f(path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
    }
    AudioClip clip = read_wav(path);
    CHECK(clip.sample_rate == 8000);
    REQUIRE(clip.samples.size() == static_cast<size_t>(n_frames));
    CHECK(clip.samples[0] == doctest::Approx(0.125).epsilon(1e-3));

    // truncating the payload must be detected
    std::vector<unsigned char> cut(b.begin(), b.end() - 8);
    {
        std::ofstream f(path, std::ios::binary);
        f.write(reinterpret_cast<const char*>(cut.data()), static_cast<std::streamsize>(cut.size()));
    }
    CHECK_THROWS_AS(read_wav(path), IoError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(read_wav(temp_path("missing.wav")), IoError);
}
