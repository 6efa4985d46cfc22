#include "av360/audio_events.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace av360::audio {

namespace {

constexpr double kSilenceEps = 1e-8;
constexpr double kSqrtHalf = 0.70710678118654752440084436210485;

double rms(std::span<const double> x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

}  // namespace

void validate(const FrameLabels& labels) {
  if (labels.topk.empty()) throw std::invalid_argument("no label frames");
  if (!(labels.hop > 0.0)) throw std::invalid_argument("frame hop must be positive");
  for (const auto& frame : labels.topk) {
    if (static_cast<int>(frame.size()) != labels.k)
      throw std::invalid_argument("every frame must carry exactly k labels");
    std::vector<int> s(frame);
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end())
      throw std::invalid_argument("frame labels must be distinct");
  }
}

std::vector<AudioEvent> segment_events(const FrameLabels& labels) {
  validate(labels);
  const std::size_t n = labels.topk.size();

  std::vector<std::vector<int>> sorted(n);
  for (std::size_t i = 0; i < n; ++i) {
    sorted[i] = labels.topk[i];
    std::sort(sorted[i].begin(), sorted[i].end());
  }

  std::vector<AudioEvent> events;
  std::size_t run_start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || sorted[i] != sorted[run_start]) {
      AudioEvent ev;
      ev.first_frame = run_start;
      ev.frame_count = i - run_start;
      ev.start = static_cast<double>(run_start) * labels.hop;
      ev.duration = static_cast<double>(ev.frame_count) * labels.hop;
      ev.labels = sorted[run_start];
      events.push_back(std::move(ev));
      run_start = i;
    }
  }
  return events;
}

void pool_event_features(const std::vector<std::vector<double>>& frame_feats_left,
                         const std::vector<std::vector<double>>& frame_feats_right,
                         std::vector<AudioEvent>& events) {
  if (frame_feats_left.size() != frame_feats_right.size())
    throw std::invalid_argument("channel feature frame counts differ");

  auto pool = [&](const std::vector<std::vector<double>>& feats,
                  const AudioEvent& ev) {
    if (ev.frame_count == 0 ||
        ev.first_frame + ev.frame_count > feats.size())
      throw std::invalid_argument("event frame range outside feature matrix");
    std::vector<double> out = feats[ev.first_frame];
    for (std::size_t f = ev.first_frame + 1; f < ev.first_frame + ev.frame_count; ++f) {
      const auto& row = feats[f];
      if (row.size() != out.size())
        throw std::invalid_argument("ragged feature matrix");
      for (std::size_t d = 0; d < out.size(); ++d)
        out[d] = std::max(out[d], row[d]);
    }
    return out;
  };

  for (AudioEvent& ev : events) {
    ev.feat_left = pool(frame_feats_left, ev);
    ev.feat_right = pool(frame_feats_right, ev);
  }
}

BFormat stereo_to_bformat(std::span<const double> left,
                          std::span<const double> right) {
  if (left.size() != right.size())
    throw std::invalid_argument("stereo channels must have equal lengths");
  BFormat b;
  const std::size_t n = left.size();
  b.w.resize(n);
  b.y.resize(n);
  b.x.assign(n, 0.0);
  b.z.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    b.w[i] = (left[i] + right[i]) * kSqrtHalf;
    b.y[i] = (left[i] - right[i]) * kSqrtHalf;
  }
  return b;
}

double sh_skewness(std::span<const double> left, std::span<const double> right) {
  if (left.empty() || left.size() != right.size())
    throw std::invalid_argument("stereo channels must be non-empty and equal length");
  // log difference with a floor guard: swapping channels negates the value
  // exactly, and a common gain cancels to the last bit
  const double s = 20.0 * (std::log10(std::max(rms(left), kSilenceEps)) -
                           std::log10(std::max(rms(right), kSilenceEps)));
  return std::clamp(s, -20.0, 20.0);
}

double normalize_skewness(double s) { return s / 20.0; }

ShCoefficients sh_coefficients(const BFormat& b) {
  if (b.w.empty()) throw std::invalid_argument("empty B-format signal");
  if (b.x.size() != b.w.size() || b.y.size() != b.w.size() || b.z.size() != b.w.size())
    throw std::invalid_argument("B-format channels must have equal lengths");
  return {b.w, b.y, b.z, b.x};
}

}  // namespace av360::audio
