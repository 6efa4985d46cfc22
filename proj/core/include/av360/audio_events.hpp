#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace av360::audio {

// Per-frame top-k label identifiers from an external tagger (or the
// synthetic generator). Every frame carries exactly k distinct labels.
struct FrameLabels {
  std::vector<std::vector<int>> topk;
  double hop = 0.0;  // seconds between frames
  int k = 3;
};

void validate(const FrameLabels& labels);

// A maximal run of frames sharing the same top-k label set.
struct AudioEvent {
  double start = 0.0;        // seconds
  double duration = 0.0;     // seconds
  std::vector<int> labels;   // sorted, distinct, size k
  std::vector<double> feat_left;
  std::vector<double> feat_right;
  double skewness = 0.0;     // [-1, 1]
  std::size_t first_frame = 0;
  std::size_t frame_count = 0;
};

// First-order ambisonic signal; stereo embeds as a left-right dipole with
// two silent channels.
struct BFormat {
  std::vector<double> w, x, y, z;
};

// Splits frames into maximal runs whose top-k sets are equal as unordered
// sets. Events tile the track.
std::vector<AudioEvent> segment_events(const FrameLabels& labels);

// Element-wise maximum of each event's frame features, per channel.
// frame_feats_* are frames x dim, one row per label frame.
void pool_event_features(const std::vector<std::vector<double>>& frame_feats_left,
                         const std::vector<std::vector<double>>& frame_feats_right,
                         std::vector<AudioEvent>& events);

BFormat stereo_to_bformat(std::span<const double> left,
                          std::span<const double> right);

// Left/right energy ratio in dB, clamped to [-20, 20]; positive means
// left-dominant. Equals a monotone function of the first-order directional
// coefficient energy under the stereo B-format embedding.
double sh_skewness(std::span<const double> left, std::span<const double> right);

// linear map from [-20, 20] onto [-1, 1]
double normalize_skewness(double s);

// First-order truncation: per-sample coefficients (c_0^0, c_1^-1, c_1^0,
// c_1^1) are the B-format channels (w, y, z, x) under SN3D normalization.
struct ShCoefficients {
  std::vector<double> c00, c1m1, c10, c1p1;
};

ShCoefficients sh_coefficients(const BFormat& b);

}  // namespace av360::audio
