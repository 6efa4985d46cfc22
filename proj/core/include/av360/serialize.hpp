#pragma once

#include <string>
#include <vector>

#include "av360/media.hpp"
#include "av360/qa.hpp"
#include "av360/sphere.hpp"

namespace av360::io {

// Boxes on the wire: JSON objects {theta, phi, w_theta, h_phi, confidence},
// angles always radians.
std::string box_to_json(const geom::SphericalBox& box);
geom::SphericalBox box_from_json(const std::string& text);

std::vector<geom::SphericalBox> read_boxes_jsonl(const std::string& path);
void write_boxes_jsonl(const std::string& path,
                       const std::vector<geom::SphericalBox>& boxes);

// Clip intervals as JSON lines {start, duration}.
void write_clips_jsonl(const std::string& path,
                       const std::vector<media::ClipInterval>& clips);
std::vector<media::ClipInterval> read_clips_jsonl(const std::string& path);

// Events as JSON lines {start, duration, labels, skewness}.
void write_events_jsonl(const std::string& path,
                        const std::vector<audio::AudioEvent>& events);
std::vector<audio::AudioEvent> read_events_jsonl(const std::string& path);

// Row-major float32 matrix with a small header (magic, dims).
void write_f32mat(const std::string& path,
                  const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> read_f32mat(const std::string& path);

// Dataset directory layout: scenes.jsonl, qa_train.jsonl, qa_val.jsonl,
// qa_test.jsonl, answers.json, vocab.json, params.json.
void save_dataset(const qa::Dataset& data, const std::string& dir);
qa::Dataset load_dataset(const std::string& dir);

// FNV-1a digest of a file's bytes, hex-encoded; used in run manifests.
std::string file_digest(const std::string& path);

}  // namespace av360::io
