#include "av360/media.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>

namespace av360::media {

namespace {

constexpr double kLogEnergyFloor = 1e-10;

std::vector<double> channel_mean(const AudioTrack& track) {
  const std::size_t n = track.frames();
  std::vector<double> mono(n, 0.0);
  for (const auto& ch : track.channels)
    for (std::size_t i = 0; i < n; ++i) mono[i] += ch[i];
  const double inv = 1.0 / static_cast<double>(track.channels.size());
  for (double& s : mono) s *= inv;
  return mono;
}

// iterative radix-2 FFT; n must be a power of two
void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * 3.141592653589793238462643383279502884 /
                       static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

void validate(const AudioTrack& track) {
  if (track.channels.empty() || track.channels.size() > 2)
    throw std::invalid_argument("audio track must have 1 or 2 channels");
  if (!(track.sample_rate > 0.0))
    throw std::invalid_argument("audio sample rate must be positive");
  for (const auto& ch : track.channels)
    if (ch.size() != track.channels[0].size())
      throw std::invalid_argument("audio channels must have equal lengths");
}

std::vector<double> rms_envelope(const AudioTrack& track, double window) {
  validate(track);
  if (track.frames() == 0) throw std::invalid_argument("empty audio track");
  if (!(window > 0.0)) throw std::invalid_argument("window must be positive");

  const std::vector<double> mono = channel_mean(track);
  const std::size_t win = static_cast<std::size_t>(window * track.sample_rate);
  if (win == 0) throw std::invalid_argument("window shorter than one sample");

  const std::size_t count = mono.size() / win;
  std::vector<double> env(count);
  for (std::size_t i = 0; i < count; ++i) {
    double acc = 0.0;
    for (std::size_t k = i * win; k < (i + 1) * win; ++k) acc += mono[k] * mono[k];
    env[i] = std::sqrt(acc / static_cast<double>(win));
  }
  return env;
}

std::vector<ClipInterval> extract_peak_clips(const AudioTrack& track,
                                             double clip_len,
                                             const PeakClipParams& params) {
  validate(track);
  if (!(clip_len > 0.0)) throw std::invalid_argument("clip_len must be positive");
  const double duration = track.duration();
  if (duration < clip_len)
    throw std::invalid_argument("track shorter than one clip");

  const std::vector<double> env = rms_envelope(track, params.window);
  const std::size_t n = env.size();
  if (n == 0) return {};

  const double mean_all = std::accumulate(env.begin(), env.end(), 0.0) /
                          static_cast<double>(n);
  double var = 0.0;
  for (double r : env) var += (r - mean_all) * (r - mean_all);
  const double sd = std::sqrt(var / static_cast<double>(n));

  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    int cnt = 0;
    for (int d = -params.neighborhood; d <= params.neighborhood; ++d) {
      if (d == 0) continue;
      const long long j = static_cast<long long>(i) + d;
      if (j < 0 || j >= static_cast<long long>(n)) continue;
      acc += env[static_cast<std::size_t>(j)];
      ++cnt;
    }
    if (cnt == 0) continue;
    if (env[i] > acc / cnt + sd) peaks.push_back(i);
  }

  // louder peaks claim their span first
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](std::size_t a, std::size_t b) { return env[a] > env[b]; });

  std::vector<ClipInterval> accepted;
  for (std::size_t i : peaks) {
    const double center = (static_cast<double>(i) + 0.5) * params.window;
    double start = center - clip_len / 2.0;
    start = std::clamp(start, 0.0, duration - clip_len);
    const bool overlaps =
        std::any_of(accepted.begin(), accepted.end(), [&](const ClipInterval& c) {
          return start < c.start + c.duration && c.start < start + clip_len;
        });
    if (!overlaps) accepted.push_back({start, clip_len});
  }
  std::sort(accepted.begin(), accepted.end(),
            [](const ClipInterval& a, const ClipInterval& b) { return a.start < b.start; });
  return accepted;
}

std::vector<std::array<double, 13>> mel_coefficients(const AudioTrack& track) {
  validate(track);
  if (track.sample_rate < 8000.0)
    throw std::invalid_argument("mel_coefficients requires sample_rate >= 8 kHz");

  const std::vector<double> mono = channel_mean(track);
  const std::size_t frame_len =
      static_cast<std::size_t>(std::lround(0.025 * track.sample_rate));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(0.010 * track.sample_rate));
  if (mono.size() < frame_len)
    throw std::invalid_argument("track shorter than one 25 ms frame");

  std::size_t nfft = 1;
  while (nfft < frame_len) nfft <<= 1;
  const std::size_t nbins = nfft / 2 + 1;

  // 40 triangular filters, equally spaced on the mel scale over [0, rate/2]
  constexpr int kBands = 40;
  const double mel_max = hz_to_mel(track.sample_rate / 2.0);
  std::array<double, kBands + 2> edges{};
  for (int j = 0; j < kBands + 2; ++j)
    edges[j] = mel_to_hz(mel_max * j / (kBands + 1));
  std::vector<std::array<double, kBands>> bank(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    const double f = static_cast<double>(k) * track.sample_rate /
                     static_cast<double>(nfft);
    for (int j = 0; j < kBands; ++j) {
      const double lo = edges[j], mid = edges[j + 1], hi = edges[j + 2];
      double w = 0.0;
      if (f > lo && f < mid) w = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) w = (hi - f) / (hi - mid);
      bank[k][j] = w;
    }
  }

  const std::size_t nframes = 1 + (mono.size() - frame_len) / hop;
  std::vector<std::array<double, 13>> out(nframes);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t fi = 0; fi < nframes; ++fi) {
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (std::size_t k = 0; k < frame_len; ++k) buf[k] = mono[fi * hop + k];
    fft(buf);

    std::array<double, kBands> energy{};
    for (std::size_t k = 0; k < nbins; ++k) {
      const double p = std::norm(buf[k]) / static_cast<double>(nfft);
      for (int j = 0; j < kBands; ++j) energy[j] += bank[k][j] * p;
    }
    std::array<double, kBands> loge{};
    for (int j = 0; j < kBands; ++j)
      loge[j] = std::log(std::max(energy[j], kLogEnergyFloor));

    for (int i = 0; i < 13; ++i) {
      double acc = 0.0;
      for (int j = 0; j < kBands; ++j)
        acc += loge[j] * std::cos(3.141592653589793238462643383279502884 * i *
                                  (j + 0.5) / kBands);
      out[fi][i] = acc;
    }
  }
  return out;
}

double mel_distance(const std::vector<std::array<double, 13>>& a,
                    const std::vector<std::array<double, 13>>& b) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("mel_distance: empty coefficient matrix");
  std::array<double, 13> ma{}, mb{};
  for (const auto& row : a)
    for (int i = 0; i < 13; ++i) ma[i] += row[i];
  for (const auto& row : b)
    for (int i = 0; i < 13; ++i) mb[i] += row[i];
  double d2 = 0.0;
  for (int i = 0; i < 13; ++i) {
    const double d = ma[i] / a.size() - mb[i] / b.size();
    d2 += d * d;
  }
  return std::sqrt(d2);
}

std::array<double, 3> histogram_skewness(const FrameImage& frame) {
  if (frame.width <= 0 || frame.height <= 0 ||
      frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3)
    throw std::invalid_argument("empty or inconsistent frame");

  const std::size_t npix = static_cast<std::size_t>(frame.width) * frame.height;
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (std::size_t p = 0; p < npix; ++p) mean += frame.rgb[p * 3 + c];
    mean /= static_cast<double>(npix);
    double m2 = 0.0, m3 = 0.0;
    for (std::size_t p = 0; p < npix; ++p) {
      const double d = frame.rgb[p * 3 + c] - mean;
      m2 += d * d;
      m3 += d * d * d;
    }
    m2 /= static_cast<double>(npix);
    m3 /= static_cast<double>(npix);
    const double sd = std::sqrt(m2);
    out[c] = sd < 1e-9 ? 0.0 : m3 / (sd * sd * sd);
  }
  return out;
}

bool is_synthetic_frame(const FrameImage& frame, double threshold) {
  const auto skew = histogram_skewness(frame);
  return std::any_of(skew.begin(), skew.end(),
                     [&](double s) { return std::abs(s) > threshold; });
}

std::uint64_t dct_phash64(const FrameImage& frame) {
  if (frame.width <= 0 || frame.height <= 0 ||
      frame.rgb.size() != static_cast<std::size_t>(frame.width) * frame.height * 3)
    throw std::invalid_argument("empty or inconsistent frame");

  const int w = frame.width, h = frame.height;
  auto gray_at = [&](int x, int y) {
    const std::size_t p = (static_cast<std::size_t>(y) * w + x) * 3;
    return (299.0 * frame.rgb[p] + 587.0 * frame.rgb[p + 1] +
            114.0 * frame.rgb[p + 2]) /
           1000.0;
  };

  // bilinear resample at 32x32 pixel centers
  constexpr int kSize = 32;
  std::array<double, kSize * kSize> small{};
  for (int dy = 0; dy < kSize; ++dy) {
    for (int dx = 0; dx < kSize; ++dx) {
      const double sx = std::clamp((dx + 0.5) * w / kSize - 0.5, 0.0, w - 1.0);
      const double sy = std::clamp((dy + 0.5) * h / kSize - 0.5, 0.0, h - 1.0);
      const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      small[dy * kSize + dx] =
          (1 - fx) * (1 - fy) * gray_at(x0, y0) + fx * (1 - fy) * gray_at(x1, y0) +
          (1 - fx) * fy * gray_at(x0, y1) + fx * fy * gray_at(x1, y1);
    }
  }

  // orthonormal 2-D DCT-II, keeping only the top-left 8x8 block
  constexpr double kPi = 3.141592653589793238462643383279502884;
  std::array<double, 64> coef{};
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x)
          acc += small[y * kSize + x] *
                 std::cos(kPi * (2 * y + 1) * u / (2.0 * kSize)) *
                 std::cos(kPi * (2 * x + 1) * v / (2.0 * kSize));
      const double au = u == 0 ? std::sqrt(1.0 / kSize) : std::sqrt(2.0 / kSize);
      const double av = v == 0 ? std::sqrt(1.0 / kSize) : std::sqrt(2.0 / kSize);
      double c = au * av * acc;
      if (std::abs(c) < 1e-9) c = 0.0;  // flush summation noise so flat
      coef[u * 8 + v] = c;              // frames threshold exactly at zero
    }
  }

  std::array<double, 63> rest{};
  std::copy(coef.begin() + 1, coef.end(), rest.begin());
  std::nth_element(rest.begin(), rest.begin() + 31, rest.end());
  const double median = rest[31];

  std::uint64_t hash = 0;
  for (int k = 0; k < 64; ++k)
    if (coef[k] > median) hash |= (1ull << k);
  return hash;
}

bool is_static_clip(const std::vector<std::uint64_t>& hashes) {
  if (hashes.empty()) throw std::invalid_argument("empty hash sequence");
  std::vector<std::uint64_t> uniq(hashes);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  return uniq.size() < 3;
}

}  // namespace av360::media
