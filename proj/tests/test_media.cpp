#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "av360/image.hpp"
#include "av360/media.hpp"
#include "av360/rng.hpp"
#include "av360/wav.hpp"

using namespace av360::media;
using av360::Rng;

namespace {

constexpr double kPi = 3.14159265358979323846;

AudioTrack mono_track(std::vector<double> samples, double rate = 16000.0) {
  AudioTrack t;
  t.sample_rate = rate;
  t.channels.push_back(std::move(samples));
  return t;
}

AudioTrack constant_track(double value, double seconds, double rate = 16000.0) {
  return mono_track(std::vector<double>(static_cast<std::size_t>(seconds * rate), value),
                    rate);
}

AudioTrack sine_track(double amp, double freq, double seconds, double rate = 16000.0) {
  std::vector<double> s(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = amp * std::sin(2.0 * kPi * freq * i / rate);
  return mono_track(std::move(s), rate);
}

// independent reference MFCC pipeline: naive DFT, directly built filterbank
std::vector<std::array<double, 13>> reference_mfcc(const AudioTrack& t) {
  const std::size_t n = t.frames();
  std::vector<double> mono(n, 0.0);
  for (const auto& ch : t.channels)
    for (std::size_t i = 0; i < n; ++i) mono[i] += ch[i] / t.channels.size();

  const std::size_t flen = std::lround(0.025 * t.sample_rate);
  const std::size_t hop = std::lround(0.010 * t.sample_rate);
  std::size_t nfft = 1;
  while (nfft < flen) nfft <<= 1;
  const std::size_t nb = nfft / 2 + 1;

  const double mel_max = 2595.0 * std::log10(1.0 + (t.sample_rate / 2.0) / 700.0);
  auto edge = [&](int j) {
    return 700.0 * (std::pow(10.0, mel_max * j / 41.0 / 2595.0) - 1.0);
  };

  const std::size_t nframes = 1 + (n - flen) / hop;
  std::vector<std::array<double, 13>> out(nframes);
  for (std::size_t fi = 0; fi < nframes; ++fi) {
    std::vector<double> power(nb);
    for (std::size_t k = 0; k < nb; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t s = 0; s < flen; ++s) {
        const double ang = 2.0 * kPi * k * s / static_cast<double>(nfft);
        re += mono[fi * hop + s] * std::cos(ang);
        im -= mono[fi * hop + s] * std::sin(ang);
      }
      power[k] = (re * re + im * im) / static_cast<double>(nfft);
    }
    std::array<double, 40> loge{};
    for (int j = 0; j < 40; ++j) {
      const double lo = edge(j), mid = edge(j + 1), hi = edge(j + 2);
      double e = 0.0;
      for (std::size_t k = 0; k < nb; ++k) {
        const double f = k * t.sample_rate / static_cast<double>(nfft);
        double w = 0.0;
        if (f > lo && f < mid) w = (f - lo) / (mid - lo);
        else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
        e += w * power[k];
      }
      loge[j] = std::log(std::max(e, 1e-10));
    }
    for (int i = 0; i < 13; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 40; ++j) acc += loge[j] * std::cos(kPi * i * (j + 0.5) / 40.0);
      out[fi][i] = acc;
    }
  }
  return out;
}

FrameImage solid_frame(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  FrameImage f;
  f.width = w;
  f.height = h;
  f.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t p = 0; p < static_cast<std::size_t>(w) * h; ++p) {
    f.rgb[p * 3] = r;
    f.rgb[p * 3 + 1] = g;
    f.rgb[p * 3 + 2] = b;
  }
  return f;
}

// smooth pseudo-photo: a few random low-frequency waves
FrameImage smooth_photo(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  const double ax = rng.uniform(0.5, 3.0), ay = rng.uniform(0.5, 3.0);
  const double bx = rng.uniform(0.5, 5.0), by = rng.uniform(0.5, 5.0);
  const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
  FrameImage f;
  f.width = w;
  f.height = h;
  f.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = static_cast<double>(x) / w, v = static_cast<double>(y) / h;
      const double g1 = std::sin(2 * kPi * (ax * u + ay * v) + p1);
      const double g2 = std::cos(2 * kPi * (bx * u - by * v) + p2);
      const auto val = static_cast<std::uint8_t>(128 + 55 * g1 + 45 * g2);
      const std::size_t p = (static_cast<std::size_t>(y) * w + x) * 3;
      f.rgb[p] = val;
      f.rgb[p + 1] = static_cast<std::uint8_t>(255 - val);
      f.rgb[p + 2] = static_cast<std::uint8_t>((val * 3) % 251);
    }
  return f;
}

int hamming(std::uint64_t a, std::uint64_t b) {
  return __builtin_popcountll(a ^ b);
}

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "av360_media_test";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("rms_envelope of constant and silent tracks") {
  const auto env = rms_envelope(constant_track(0.25, 4.0));
  REQUIRE(env.size() == 8);
  for (double v : env) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  const auto zeros = rms_envelope(constant_track(0.0, 2.0));
  for (double v : zeros) CHECK(v == 0.0);
}

TEST_CASE("rms_envelope of a sine is amplitude over sqrt(2)") {
  const auto env = rms_envelope(sine_track(0.6, 440.0, 3.0));
  for (double v : env) CHECK(std::abs(v - 0.6 / std::sqrt(2.0)) < 1e-3);
}

TEST_CASE("rms_envelope rejects empty input") {
  AudioTrack empty;
  empty.sample_rate = 16000.0;
  empty.channels.emplace_back();
  CHECK_THROWS_AS(rms_envelope(empty), std::invalid_argument);
}

TEST_CASE("extract_peak_clips: constant audio yields no clips") {
  CHECK(extract_peak_clips(constant_track(0.5, 30.0)).empty());
}

TEST_CASE("extract_peak_clips: one burst yields one centered clip") {
  auto track = constant_track(0.0, 20.0);
  const std::size_t rate = 16000;
  for (std::size_t i = 10 * rate; i < std::size_t(10.5 * rate); ++i)
    track.channels[0][i] = 0.8;
  const auto clips = extract_peak_clips(track);
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].start == doctest::Approx(7.75));  // burst window center 10.25
  CHECK(clips[0].duration == doctest::Approx(5.0));
}

TEST_CASE("extract_peak_clips: overlapping candidates keep the louder") {
  auto track = constant_track(0.0, 25.0);
  const std::size_t rate = 16000;
  for (std::size_t i = 10 * rate; i < std::size_t(10.5 * rate); ++i)
    track.channels[0][i] = 0.8;
  for (std::size_t i = 12 * rate; i < std::size_t(12.5 * rate); ++i)
    track.channels[0][i] = 0.6;
  const auto clips = extract_peak_clips(track);
  REQUIRE(clips.size() == 1);
  CHECK(clips[0].start == doctest::Approx(7.75));
}

TEST_CASE("extract_peak_clips: intervals are disjoint and inside the track") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto track = constant_track(0.0, 40.0, 8000.0);
    for (int burst = 0; burst < 8; ++burst) {
      const std::size_t at = rng.uniform_index(39 * 8000);
      const double amp = rng.uniform(0.2, 1.0);
      for (std::size_t i = at; i < at + 4000; ++i) track.channels[0][i] = amp;
    }
    const auto clips = extract_peak_clips(track);
    for (std::size_t i = 0; i < clips.size(); ++i) {
      CHECK(clips[i].start >= 0.0);
      CHECK(clips[i].start + clips[i].duration <= 40.0 + 1e-9);
      if (i > 0)
        CHECK(clips[i].start >= clips[i - 1].start + clips[i - 1].duration - 1e-9);
    }
  }
}

TEST_CASE("peak decision set is invariant to positive gain") {
  Rng rng(32);
  auto track = constant_track(0.0, 30.0, 8000.0);
  for (int burst = 0; burst < 5; ++burst) {
    const std::size_t at = rng.uniform_index(29 * 8000);
    const double amp = rng.uniform(0.2, 1.0);
    for (std::size_t i = at; i < at + 3000; ++i) track.channels[0][i] += amp;
  }
  const auto base = extract_peak_clips(track);
  for (double c : {2.0, 0.5, 1.7}) {
    auto scaled = track;
    for (double& s : scaled.channels[0]) s *= c;
    const auto clips = extract_peak_clips(scaled);
    REQUIRE(clips.size() == base.size());
    for (std::size_t i = 0; i < clips.size(); ++i)
      CHECK(clips[i].start == doctest::Approx(base[i].start).epsilon(1e-12));
  }

  // the envelope itself scales linearly (exact for powers of two)
  auto doubled = track;
  for (double& s : doubled.channels[0]) s *= 2.0;
  const auto e1 = rms_envelope(track);
  const auto e2 = rms_envelope(doubled);
  for (std::size_t i = 0; i < e1.size(); ++i) CHECK(e2[i] == 2.0 * e1[i]);
}

TEST_CASE("mel_coefficients is deterministic and matches the reference") {
  const AudioTrack tone = sine_track(0.5, 1000.0, 0.5);
  const auto a = mel_coefficients(tone);
  const auto b = mel_coefficients(tone);
  REQUIRE(a.size() == b.size());
  for (std::size_t f = 0; f < a.size(); ++f)
    for (int i = 0; i < 13; ++i) CHECK(a[f][i] == b[f][i]);

  const auto ref = reference_mfcc(tone);
  REQUIRE(a.size() == ref.size());
  for (std::size_t f = 0; f < a.size(); ++f)
    for (int i = 0; i < 13; ++i) CHECK(std::abs(a[f][i] - ref[f][i]) < 1e-6);
}

TEST_CASE("mel_coefficients of silence: every frame identical") {
  const auto m = mel_coefficients(constant_track(0.0, 1.0));
  REQUIRE(m.size() > 1);
  for (std::size_t f = 1; f < m.size(); ++f)
    for (int i = 0; i < 13; ++i) CHECK(m[f][i] == m[0][i]);
}

TEST_CASE("mel_coefficients input validation") {
  CHECK_THROWS_AS(mel_coefficients(constant_track(0.1, 1.0, 4000.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(mel_coefficients(mono_track(std::vector<double>(10, 0.0))),
                  std::invalid_argument);
}

TEST_CASE("mel_distance basics") {
  const auto m = mel_coefficients(sine_track(0.5, 700.0, 0.3));
  CHECK(mel_distance(m, m) == doctest::Approx(0.0));

  const auto n = mel_coefficients(sine_track(0.3, 2500.0, 0.3));
  CHECK(mel_distance(m, n) == doctest::Approx(mel_distance(n, m)));

  // constructed averages (0,...) vs (3,4,0,...)
  std::vector<std::array<double, 13>> a(2), b(2);
  a[0].fill(0.0);
  a[1].fill(0.0);
  b[0].fill(0.0);
  b[1].fill(0.0);
  b[0][0] = 2.0;
  b[1][0] = 4.0;  // mean 3
  b[0][1] = 4.0;
  b[1][1] = 4.0;  // mean 4
  CHECK(mel_distance(a, b) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("histogram_skewness of symmetric and degenerate frames") {
  FrameImage uniform;
  uniform.width = 256;
  uniform.height = 16;
  uniform.rgb.resize(256 * 16 * 3);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 256; ++x)
      for (int c = 0; c < 3; ++c)
        uniform.rgb[(static_cast<std::size_t>(y) * 256 + x) * 3 + c] =
            static_cast<std::uint8_t>(x);
  for (double s : histogram_skewness(uniform)) CHECK(std::abs(s) < 0.01);

  for (double s : histogram_skewness(solid_frame(32, 32, 120, 7, 250)))
    CHECK(s == 0.0);
}

TEST_CASE("histogram_skewness of a two-point distribution is 8/3") {
  // 90% of pixels at 0, 10% at 255
  FrameImage f = solid_frame(100, 10, 0, 0, 0);
  for (int p = 0; p < 100; ++p)
    for (int c = 0; c < 3; ++c) f.rgb[static_cast<std::size_t>(p) * 3 + c] = 255;
  for (double s : histogram_skewness(f))
    CHECK(s == doctest::Approx(8.0 / 3.0).epsilon(1e-6));
}

TEST_CASE("histogram_skewness is invariant under frame flips") {
  const FrameImage f = smooth_photo(64, 48, 99);
  FrameImage hflip = f, vflip = f;
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      for (int c = 0; c < 3; ++c) {
        hflip.rgb[(static_cast<std::size_t>(y) * f.width + (f.width - 1 - x)) * 3 + c] =
            f.rgb[(static_cast<std::size_t>(y) * f.width + x) * 3 + c];
        vflip.rgb[(static_cast<std::size_t>(f.height - 1 - y) * f.width + x) * 3 + c] =
            f.rgb[(static_cast<std::size_t>(y) * f.width + x) * 3 + c];
      }
  const auto s0 = histogram_skewness(f);
  const auto s1 = histogram_skewness(hflip);
  const auto s2 = histogram_skewness(vflip);
  for (int c = 0; c < 3; ++c) {
    CHECK(s0[c] == doctest::Approx(s1[c]).epsilon(1e-12));
    CHECK(s0[c] == doctest::Approx(s2[c]).epsilon(1e-12));
  }
}

TEST_CASE("is_synthetic_frame flags heavy skew") {
  FrameImage f = solid_frame(100, 10, 0, 0, 0);
  for (int p = 0; p < 20; ++p)
    for (int c = 0; c < 3; ++c) f.rgb[static_cast<std::size_t>(p) * 3 + c] = 255;
  CHECK(is_synthetic_frame(f));  // two-point 2%/98% split skews hard
  CHECK_FALSE(is_synthetic_frame(smooth_photo(64, 48, 7)));
}

TEST_CASE("dct_phash64 determinism and uniform-frame bits") {
  const FrameImage f = smooth_photo(80, 60, 5);
  CHECK(dct_phash64(f) == dct_phash64(f));

  // uniform frame: all non-DC coefficients are zero, strict > keeps bits clear
  const std::uint64_t h = dct_phash64(solid_frame(64, 64, 200, 200, 200));
  CHECK((h & ~1ull) == 0);
}

TEST_CASE("dct_phash64 is stable under single-pixel corruption") {
  Rng rng(41);
  for (int photo = 0; photo < 20; ++photo) {
    FrameImage f = smooth_photo(1024, 1024, 500 + photo);
    const std::uint64_t original = dct_phash64(f);
    FrameImage corrupted = f;
    const std::size_t pixel = rng.uniform_index(1024 * 1024);
    for (int c = 0; c < 3; ++c)
      corrupted.rgb[pixel * 3 + c] =
          static_cast<std::uint8_t>(rng.uniform_index(256));
    CHECK(hamming(original, dct_phash64(corrupted)) <= 4);
  }
}

TEST_CASE("dct_phash64 is invariant to exact brightness scaling") {
  Rng rng(42);
  FrameImage f;
  f.width = 96;
  f.height = 72;
  f.rgb.resize(static_cast<std::size_t>(96) * 72 * 3);
  for (auto& b : f.rgb)
    b = static_cast<std::uint8_t>(40 * rng.uniform_index(7));  // multiples of 40
  FrameImage half = f, quarter = f;
  for (std::size_t i = 0; i < f.rgb.size(); ++i) {
    half.rgb[i] = static_cast<std::uint8_t>(f.rgb[i] / 2);
    quarter.rgb[i] = static_cast<std::uint8_t>(f.rgb[i] / 4);
  }
  CHECK(dct_phash64(half) == dct_phash64(f));
  CHECK(dct_phash64(quarter) == dct_phash64(f));
}

TEST_CASE("is_static_clip counts distinct hashes") {
  CHECK(is_static_clip({7, 7, 7, 7}));
  CHECK_FALSE(is_static_clip({1, 2, 3}));
  CHECK(is_static_clip({1, 2, 1, 2}));
  CHECK_THROWS_AS(is_static_clip({}), std::invalid_argument);
}

TEST_CASE("WAV round-trip") {
  const auto dir = temp_dir();
  Rng rng(51);
  AudioTrack t;
  t.sample_rate = 16000.0;
  t.channels.resize(2);
  for (int i = 0; i < 16000; ++i) {
    t.channels[0].push_back(rng.uniform(-0.9, 0.9));
    t.channels[1].push_back(rng.uniform(-0.9, 0.9));
  }

  const std::string f32 = (dir / "f32.wav").string();
  write_wav(f32, t, WavFormat::Float32);
  const AudioTrack rf = read_wav(f32);
  CHECK(rf.sample_rate == 16000.0);
  REQUIRE(rf.channels.size() == 2);
  REQUIRE(rf.frames() == t.frames());
  for (std::size_t i = 0; i < t.frames(); ++i)
    CHECK(rf.channels[0][i] ==
          doctest::Approx(t.channels[0][i]).epsilon(1e-7));

  const std::string p16 = (dir / "p16.wav").string();
  write_wav(p16, t, WavFormat::Pcm16);
  const AudioTrack rp = read_wav(p16);
  for (std::size_t i = 0; i < t.frames(); ++i)
    CHECK(std::abs(rp.channels[1][i] - t.channels[1][i]) < 1.0 / 32768.0);
}

TEST_CASE("WAV reader rejects malformed files") {
  const auto dir = temp_dir();
  const std::string path = (dir / "bad.wav").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("definitely not a wav", f);
  std::fclose(f);
  CHECK_THROWS_AS(read_wav(path), std::runtime_error);
}

TEST_CASE("PPM and PNG round-trips and frame dispatch") {
  const auto dir = temp_dir();
  const FrameImage f = smooth_photo(33, 21, 8);

  const std::string ppm = (dir / "frame.ppm").string();
  write_ppm(ppm, f);
  const FrameImage rp = read_ppm(ppm);
  CHECK(rp.width == f.width);
  CHECK(rp.height == f.height);
  CHECK(rp.rgb == f.rgb);

  const std::string png = (dir / "frame.png").string();
  write_png(png, f);
  const FrameImage rg = read_png(png);
  CHECK(rg.width == f.width);
  CHECK(rg.rgb == f.rgb);

  CHECK(load_frame(ppm).rgb == f.rgb);
  CHECK(load_frame(png).rgb == f.rgb);
  CHECK_THROWS_AS(load_frame((dir / "missing.ppm").string()), std::runtime_error);
}
