#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace av360::media {

struct AudioTrack {
  std::vector<std::vector<double>> channels;  // 1 or 2, equal lengths
  double sample_rate = 0.0;                   // Hz

  std::size_t frames() const { return channels.empty() ? 0 : channels[0].size(); }
  double duration() const { return sample_rate > 0 ? frames() / sample_rate : 0.0; }
};

// throws std::invalid_argument on channel count/length or rate violations
void validate(const AudioTrack& track);

struct ClipInterval {
  double start = 0.0;     // seconds
  double duration = 5.0;  // seconds
};

struct FrameImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

// Non-overlapping window RMS over the channel mean. Output length is
// floor(track duration / window).
std::vector<double> rms_envelope(const AudioTrack& track, double window = 0.5);

struct PeakClipParams {
  double window = 0.5;       // RMS window, seconds
  int neighborhood = 2;      // windows on each side used for the local mean
};

// Slices clips around RMS peaks: window i is a peak when its RMS exceeds the
// mean of the surrounding windows by more than the standard deviation of the
// whole envelope (strictly). Overlapping candidates are resolved greedily by
// descending RMS. Results are sorted by start time and pairwise disjoint.
std::vector<ClipInterval> extract_peak_clips(const AudioTrack& track,
                                             double clip_len = 5.0,
                                             const PeakClipParams& params = {});

// Mel-frequency coefficients: 25 ms frames, 10 ms hop, 40 triangular mel
// bands, log energies, type-II cosine transform keeping 13 coefficients.
// Returns frames x 13.
std::vector<std::array<double, 13>> mel_coefficients(const AudioTrack& track);

// Euclidean distance between the time-averaged coefficient vectors.
double mel_distance(const std::vector<std::array<double, 13>>& a,
                    const std::vector<std::array<double, 13>>& b);

// Third standardized moment of the intensity distribution, per channel
// (R, G, B). Zero when the channel is constant (std < 1e-9).
std::array<double, 3> histogram_skewness(const FrameImage& frame);

// A frame is considered synthetic when any channel's |skewness| exceeds the
// threshold.
bool is_synthetic_frame(const FrameImage& frame, double threshold = 2.0);

// 64-bit DCT perceptual hash: grayscale, bilinear resize to 32x32,
// orthonormal 2-D DCT-II, top-left 8x8 block thresholded against the median
// of the 63 non-DC coefficients. Bit k (row-major, DC at bit 0) is set when
// coefficient k is strictly above the median.
std::uint64_t dct_phash64(const FrameImage& frame);

// true iff the clip has fewer than three distinct hash values
bool is_static_clip(const std::vector<std::uint64_t>& hashes);

}  // namespace av360::media
