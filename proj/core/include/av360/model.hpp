#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "av360/audio_events.hpp"
#include "av360/nn.hpp"
#include "av360/sphere.hpp"
#include "av360/tensor.hpp"

namespace av360::model {

using ad::Var;

struct ModelConfig {
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t layers_lang = 3;
  std::size_t layers_audio = 2;
  std::size_t layers_vis = 2;
  std::size_t layers_cross = 2;  // cross-modal stages per modality
  std::size_t vocab = 512;
  std::size_t answer_table = 64;
  geom::SpatialMode spatial_mode = geom::SpatialMode::Quaternion;
  double dropout = 0.1;
  std::size_t max_lang_len = 32;
  std::size_t max_regions = 35;
  std::size_t vis_feat_dim = 18;
  std::size_t audio_feat_dim = 15;
  // readout for the decoder: index-0 symbol row (default) or output mean
  bool mean_readout = false;

  static ModelConfig paper_preset();
  static ModelConfig desk_preset();
};

ModelConfig load_model_config(const std::string& path);
void save_model_config(const ModelConfig& cfg, const std::string& path);

// One region proposal: the detector feature b_i plus the spatial code c_i
// in the model's active spatial mode (t included).
struct VisualRegion {
  std::vector<double> feature;
  std::vector<double> spatial_code;
};

// Everything one forward pass consumes.
struct ModelSample {
  std::vector<VisualRegion> regions;
  std::vector<audio::AudioEvent> events;
  double clip_len = 5.0;
  std::vector<std::size_t> tokens;
  std::size_t answer_id = 0;
  std::array<double, 5> grounding{};
};

// Boolean masks over positions 1..N per modality; the index-0 symbol rows
// are never maskable.
struct MaskPlan {
  std::vector<bool> visual, audio, language;
  double p = 0.15;
};

MaskPlan sample_mask_plan(std::size_t n_visual, std::size_t n_audio,
                          std::size_t n_language, double p, Rng& rng);

// Regression / classification targets recorded for masked positions.
struct MaskedTargets {
  std::vector<std::size_t> lang_positions;  // row indices (1-based rows)
  std::vector<std::size_t> lang_token_ids;
  std::vector<std::size_t> vis_positions;
  std::vector<std::vector<double>> vis_codes;
  std::vector<std::size_t> audio_positions;
  std::vector<std::array<double, 3>> audio_targets;  // skewness, start, duration
};

struct EncodedTriple {
  Var lang, audio, visual;
};

struct DecodeResult {
  Var answer_logits;  // [1 x answer_table]
  Var grounding;      // [1 x 5]
};

struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> components;
};

// Three-modality transformer: per-modality input builders with aggregate
// index-0 symbols, unimodal self-attention stacks, a two-stage cross-modal
// encoder where each modality queries another as context, and two decoder
// MLPs over the concatenated aggregate rows.
class TrimodalTransformer {
 public:
  TrimodalTransformer(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // input builders; row 0 = mean of rows 1.. at build time
  Var build_visual_inputs(const std::vector<VisualRegion>& regions);
  Var build_audio_inputs(const std::vector<audio::AudioEvent>& events);
  Var build_language_inputs(const std::vector<std::size_t>& token_ids);

  // replaces masked rows with the per-modality learned mask vector and
  // records prediction targets from the sample
  struct MaskedInputs {
    Var visual, audio, language;
    MaskedTargets targets;
  };
  MaskedInputs apply_masks(const Var& visual, const Var& audio, const Var& language,
                           const MaskPlan& plan, const ModelSample& sample);

  EncodedTriple unimodal_encode(const Var& lang, const Var& audio, const Var& visual,
                                bool training);
  EncodedTriple crossmodal_encode(const EncodedTriple& uni, bool training);
  DecodeResult decode(const EncodedTriple& cross);

  // convenience full passes
  DecodeResult forward(const ModelSample& sample, bool training);

  // total pretraining loss: masked token CE + masked spatial smooth-L1 +
  // masked skewness/timestamp smooth-L1 + answer CE + grounding smooth-L1
  // (weighted), each reduced as a mean over its masked positions
  Var pretrain_loss(const ModelSample& sample, const MaskPlan& plan,
                    double grounding_weight, LossBreakdown* breakdown = nullptr);
  // answer CE + weighted grounding only
  Var finetune_loss(const ModelSample& sample, double grounding_weight,
                    LossBreakdown* breakdown = nullptr);

  struct Prediction {
    std::size_t answer_id = 0;
    std::array<double, 5> grounding{};
  };
  Prediction predict(const ModelSample& sample);

  void save(const std::string& prefix) const;
  void load(const std::string& prefix);

 private:
  Var encode_stack(const Var& x, const std::string& modality, std::size_t depth,
                   bool training);
  Var readout(const Var& encoded) const;
  double active_dropout(bool training) const {
    return training ? cfg_.dropout : 0.0;
  }

  ModelConfig cfg_;
  nn::ParamStore params_;
  Rng dropout_rng_;
  std::map<std::string, nn::EncoderLayerParams> layers_;
  std::map<std::string, nn::MlpParams> mlps_;
};

enum class Phase { Pretrain, Finetune };

const char* to_string(Phase p);

struct TrainParams {
  std::size_t batch_size = 32;
  std::size_t grad_accum = 4;
  double lr = 1e-4;
  std::size_t epochs = 3;
  double warmup = 0.1;
  double weight_decay = 0.01;
  double grounding_weight = 0.2;
  double mask_p = 0.15;
  std::uint64_t seed = 0;

  static TrainParams paper_pretrain();  // batch 32, accum 4, lr 1e-4, 3 epochs
  static TrainParams paper_finetune();  // batch 32, accum 4, lr 5e-5, 7 epochs
  static TrainParams desk_pretrain();
  static TrainParams desk_finetune();
};

struct TrainLogEntry {
  std::size_t step = 0;
  Phase phase = Phase::Pretrain;
  double lr = 0.0;
  double loss = 0.0;
  std::map<std::string, double> components;
};

// Seeded, deterministic training loop with gradient accumulation. Aborts
// with a diagnostic when the loss turns non-finite. Appends one JSON line
// per optimizer step to log_out when given.
std::vector<TrainLogEntry> train(TrimodalTransformer& model,
                                 const std::vector<ModelSample>& dataset,
                                 const TrainParams& params, Phase phase,
                                 std::ostream* log_out = nullptr);

}  // namespace av360::model
