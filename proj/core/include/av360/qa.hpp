#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "av360/audio_events.hpp"
#include "av360/model.hpp"
#include "av360/sphere.hpp"

namespace av360::qa {

// Closed word lists the synthetic benchmark draws from.
struct Lexicon {
  std::vector<std::string> categories;
  std::vector<std::string> colors;
  std::vector<std::string> sounds;
  static Lexicon standard();
};

// Whitespace tokenizer over the synthetic vocabulary; id 0 is <unk>.
struct Vocabulary {
  std::vector<std::string> words;
  std::map<std::string, std::size_t> index;

  static Vocabulary build(const Lexicon& lex);
  std::size_t id(const std::string& word) const;
  std::vector<std::size_t> tokenize(const std::string& text) const;
};

struct SceneObject {
  int category = 0;
  int color = 0;
  geom::SphericalBox box;
  bool sounding = false;
  int sound = -1;           // sound category id when sounding
  double loudness = 0.0;
  double sound_start = 0.0;
  double sound_duration = 0.0;
};

struct SceneParams {
  double clip_len = 5.0;
  double audio_rate = 8000.0;
  std::size_t min_objects = 3;
  std::size_t max_objects = 8;
  double sounding_prob = 0.5;
  double label_hop = 0.25;   // seconds per label frame
  std::size_t noise_dim = 4;
  double noise_scale = 0.1;
};

struct Scene {
  std::uint64_t seed = 0;
  double clip_len = 5.0;
  std::vector<SceneObject> objects;
  std::vector<audio::AudioEvent> events;             // derived from labels + audio
  std::vector<std::vector<double>> region_features;  // one per object
  std::vector<int> event_object;                     // sounding object per event
};

// Deterministic in seed. Object elevations are cos-weighted (equator-heavy);
// sounding objects get stereo-panned audio whose skewness sign matches the
// sign of sin(theta) of their azimuth.
Scene generate_scene(std::uint64_t seed, const SceneParams& params = {});

enum class TaskType { SS, AV };
const char* to_string(TaskType t);

struct QASample {
  std::vector<std::size_t> question_tokens;
  std::string question_text;
  std::string answer_text;
  std::size_t answer_id = 0;  // assigned once the answer table exists
  TaskType type = TaskType::SS;
  geom::SphericalBox grounding_box;
  bool has_grounding = false;
  std::uint64_t scene_seed = 0;
  int template_id = 0;
  // spatial-pair bookkeeping for the generation/oracle consistency check
  int obj_target = -1;
  int obj_reference = -1;
  std::string relation;
};

struct QagParams {
  std::size_t spatial_pairs = 3;        // ordered pairs sampled per scene
  double attribute_fraction = 0.25;     // "what is <rel> the X" variant share
  std::size_t av_per_scene = 3;
  double non_sounding_fraction = 0.25;  // within-scene "none" questions
  geom::RelationThresholds thresholds;
};

std::vector<QASample> generate_spatial_qa(const Scene& scene, const Vocabulary& vocab,
                                          const Lexicon& lex, const QagParams& params);
std::vector<QASample> generate_av_qa(const Scene& scene, const Vocabulary& vocab,
                                     const Lexicon& lex, const QagParams& params);

// Adds fraction * |samples| questions whose sound or object description does
// not occur in their scene, answered "none".
std::vector<QASample> augment_counterexamples(std::vector<QASample> samples,
                                              const std::vector<Scene>& scenes,
                                              const Vocabulary& vocab,
                                              const Lexicon& lex, double fraction,
                                              std::uint64_t seed);

// Frequency-ranked closed answer vocabulary (ties lexicographic) covering at
// least the requested share of training answers; <unk> occupies the last slot.
struct AnswerTable {
  std::vector<std::string> answers;
  std::map<std::string, std::size_t> index;

  static AnswerTable build(const std::vector<QASample>& train, double coverage = 0.93);
  std::size_t unk_id() const { return answers.size() - 1; }
  std::size_t id(const std::string& answer) const;
};

struct DatasetParams {
  std::size_t num_scenes = 100;
  std::uint64_t seed = 0;
  SceneParams scene;
  QagParams qag;
  double counterexample_fraction = 0.2;
  double answer_coverage = 0.93;
};

struct Dataset {
  DatasetParams params;
  Lexicon lexicon;
  Vocabulary vocab;
  std::vector<Scene> scenes;
  std::vector<QASample> train, val, test;
  AnswerTable answers;

  const Scene* scene_by_seed(std::uint64_t seed) const;
};

// Scenes split 80/7/13 by a hash of the scene seed; QA generation, the
// counterexample augmentation, and the answer table are all deterministic
// in params.seed.
Dataset generate_dataset(const DatasetParams& params);

// Bridges a QA sample onto the model input contract. Region codes are taken
// at the central frame time; grounding comes from grounding_target in the
// requested mode (zeros when the sample has no grounding).
model::ModelSample to_model_sample(const Scene& scene, const QASample& sample,
                                   geom::SpatialMode mode);

struct PredictorOutput {
  std::size_t answer_id = 0;
  std::optional<std::array<double, 5>> grounding;
};
using Predictor = std::function<PredictorOutput(const QASample&)>;

struct EvalMetrics {
  double accuracy_all = 0.0;
  double accuracy_ss = 0.0;
  double accuracy_av = 0.0;
  std::optional<double> grounding_mse;
  std::size_t count = 0, count_ss = 0, count_av = 0;
};

// Exact-label accuracy (a sample whose answer maps to <unk> is never
// correct) and raw grounding MSE in the supplied spatial mode.
EvalMetrics evaluate(const Predictor& predictor, const std::vector<QASample>& samples,
                     const AnswerTable& table, const Dataset& data,
                     geom::SpatialMode mode);

// Always answers the most frequent training answer.
Predictor prior_baseline(const std::vector<QASample>& train);
// Most frequent training answer conditioned on the question's template id.
Predictor qtype_prior_baseline(const std::vector<QASample>& train);
// Wraps a trained model as a predictor.
Predictor model_predictor(model::TrimodalTransformer& model, const Dataset& data);

}  // namespace av360::qa
