#include "av360/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace av360::model {

using nlohmann::json;
using namespace ad;

ModelConfig ModelConfig::paper_preset() {
  ModelConfig c;
  c.d = 768;
  c.heads = 12;
  c.layers_lang = 9;
  c.layers_audio = 5;
  c.layers_vis = 5;
  c.layers_cross = 2;
  c.vocab = 30522;
  c.answer_table = 2020;
  c.spatial_mode = geom::SpatialMode::Quaternion;
  c.dropout = 0.1;
  c.max_lang_len = 64;
  c.max_regions = 35;
  c.vis_feat_dim = 2048;
  c.audio_feat_dim = 2048;
  return c;
}

ModelConfig ModelConfig::desk_preset() {
  ModelConfig c;
  c.d = 64;
  c.heads = 4;
  c.layers_lang = 3;
  c.layers_audio = 2;
  c.layers_vis = 2;
  c.layers_cross = 2;
  c.vocab = 512;
  c.answer_table = 64;
  c.spatial_mode = geom::SpatialMode::Quaternion;
  c.dropout = 0.1;
  c.max_lang_len = 32;
  c.max_regions = 35;
  c.vis_feat_dim = 18;
  c.audio_feat_dim = 15;
  return c;
}

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"d", c.d},
              {"heads", c.heads},
              {"layers_lang", c.layers_lang},
              {"layers_audio", c.layers_audio},
              {"layers_vis", c.layers_vis},
              {"layers_cross", c.layers_cross},
              {"vocab", c.vocab},
              {"answer_table", c.answer_table},
              {"spatial_mode", geom::to_string(c.spatial_mode)},
              {"dropout", c.dropout},
              {"max_lang_len", c.max_lang_len},
              {"max_regions", c.max_regions},
              {"vis_feat_dim", c.vis_feat_dim},
              {"audio_feat_dim", c.audio_feat_dim},
              {"mean_readout", c.mean_readout}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d = j.at("d");
  c.heads = j.at("heads");
  c.layers_lang = j.at("layers_lang");
  c.layers_audio = j.at("layers_audio");
  c.layers_vis = j.at("layers_vis");
  c.layers_cross = j.at("layers_cross");
  c.vocab = j.at("vocab");
  c.answer_table = j.at("answer_table");
  c.spatial_mode = geom::spatial_mode_from_string(j.at("spatial_mode"));
  c.dropout = j.at("dropout");
  c.max_lang_len = j.at("max_lang_len");
  c.max_regions = j.at("max_regions");
  c.vis_feat_dim = j.at("vis_feat_dim");
  c.audio_feat_dim = j.at("audio_feat_dim");
  c.mean_readout = j.value("mean_readout", false);
  return c;
}

}  // namespace

ModelConfig load_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open model config: " + path);
  return config_from_json(json::parse(f));
}

void save_model_config(const ModelConfig& cfg, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write model config: " + path);
  f << config_to_json(cfg).dump(2) << "\n";
}

MaskPlan sample_mask_plan(std::size_t n_visual, std::size_t n_audio,
                          std::size_t n_language, double p, Rng& rng) {
  MaskPlan plan;
  plan.p = p;
  plan.visual.resize(n_visual);
  plan.audio.resize(n_audio);
  plan.language.resize(n_language);
  for (std::size_t i = 0; i < n_visual; ++i) plan.visual[i] = rng.bernoulli(p);
  for (std::size_t i = 0; i < n_audio; ++i) plan.audio[i] = rng.bernoulli(p);
  for (std::size_t i = 0; i < n_language; ++i) plan.language[i] = rng.bernoulli(p);
  return plan;
}

TrimodalTransformer::TrimodalTransformer(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), dropout_rng_(derive_seed(seed, "dropout")) {
  if (cfg_.d == 0 || cfg_.heads == 0 || cfg_.d % cfg_.heads != 0)
    throw std::invalid_argument("model width must be divisible by heads");
  Rng init(derive_seed(seed, "init"));
  constexpr double kStd = 0.02;
  const std::size_t d = cfg_.d;
  const std::size_t code_dim = geom::spatial_embedding_dim(cfg_.spatial_mode);

  auto weight = [&](const std::string& name, std::size_t r, std::size_t c) {
    params_.add(name, nn::trunc_normal_init(r, c, kStd, init));
  };
  auto vec = [&](const std::string& name, std::size_t n, double fill = 0.0) {
    params_.add(name, ad::Tensor(1, n, fill));
  };

  weight("f_b.w", cfg_.vis_feat_dim, d);
  vec("f_b.b", d);
  weight("f_c.w", code_dim, d);
  vec("f_c.b", d);
  weight("f_a0.w", cfg_.audio_feat_dim, d);
  vec("f_a0.b", d);
  weight("f_a1.w", cfg_.audio_feat_dim, d);
  vec("f_a1.b", d);

  weight("lang.tok_emb", cfg_.vocab, d);
  weight("lang.pos_emb", cfg_.max_lang_len, d);

  weight("mask.vis", 1, d);
  weight("mask.audio", 1, d);
  weight("mask.lang", 1, d);

  for (const char* m : {"lang", "audio", "vis"}) {
    vec(std::string("in_ln.") + m + ".g", d, 1.0);
    vec(std::string("in_ln.") + m + ".b", d);
  }

  auto stack = [&](const std::string& name, std::size_t depth) {
    for (std::size_t i = 0; i < depth; ++i) {
      const std::string key = name + "." + std::to_string(i);
      layers_.emplace(key, nn::make_encoder_layer(params_, key, d, init));
    }
  };
  stack("uni.lang", cfg_.layers_lang);
  stack("uni.audio", cfg_.layers_audio);
  stack("uni.vis", cfg_.layers_vis);
  stack("cross.lang", cfg_.layers_cross);
  stack("cross.audio", cfg_.layers_cross);
  stack("cross.vis", cfg_.layers_cross);

  mlps_.emplace("head.answer",
                nn::make_mlp(params_, "head.answer", {3 * d, d, d, cfg_.answer_table}, init));
  mlps_.emplace("head.ground", nn::make_mlp(params_, "head.ground", {3 * d, d, d, 5}, init));
  mlps_.emplace("head.lang", nn::make_mlp(params_, "head.lang", {d, d, cfg_.vocab}, init));
  mlps_.emplace("head.vis", nn::make_mlp(params_, "head.vis", {d, d, code_dim}, init));
  mlps_.emplace("head.audio", nn::make_mlp(params_, "head.audio", {d, d, 3}, init));
}

namespace {

// rows 1..N stacked under the mean row 0
Var with_aggregate_row(const Var& rows) {
  return concat_rows({mean_rows(rows), rows});
}

}  // namespace

Var TrimodalTransformer::build_visual_inputs(const std::vector<VisualRegion>& regions) {
  if (regions.empty())
    throw std::invalid_argument("build_visual_inputs: empty region set");
  if (regions.size() > cfg_.max_regions)
    throw std::invalid_argument(
        "build_visual_inputs: too many regions; run spherical_nms first");
  const std::size_t code_dim = geom::spatial_embedding_dim(cfg_.spatial_mode);

  Tensor feats(regions.size(), cfg_.vis_feat_dim);
  Tensor codes(regions.size(), code_dim);
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].feature.size() != cfg_.vis_feat_dim)
      throw std::invalid_argument("visual feature width mismatch");
    if (regions[i].spatial_code.size() != code_dim)
      throw std::invalid_argument("spatial code width mismatch");
    std::copy(regions[i].feature.begin(), regions[i].feature.end(),
              feats.data.begin() + i * cfg_.vis_feat_dim);
    std::copy(regions[i].spatial_code.begin(), regions[i].spatial_code.end(),
              codes.data.begin() + i * code_dim);
  }
  Var b = add_rowvec(matmul(make_constant(std::move(feats)), params_.get("f_b.w")),
                     params_.get("f_b.b"));
  Var c = add_rowvec(matmul(make_constant(std::move(codes)), params_.get("f_c.w")),
                     params_.get("f_c.b"));
  return with_aggregate_row(add(b, c));
}

Var TrimodalTransformer::build_audio_inputs(const std::vector<audio::AudioEvent>& events) {
  if (events.empty()) throw std::invalid_argument("build_audio_inputs: no events");
  Tensor left(events.size(), cfg_.audio_feat_dim);
  Tensor right(events.size(), cfg_.audio_feat_dim);
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].feat_left.size() != cfg_.audio_feat_dim ||
        events[i].feat_right.size() != cfg_.audio_feat_dim)
      throw std::invalid_argument("audio feature width mismatch");
    std::copy(events[i].feat_left.begin(), events[i].feat_left.end(),
              left.data.begin() + i * cfg_.audio_feat_dim);
    std::copy(events[i].feat_right.begin(), events[i].feat_right.end(),
              right.data.begin() + i * cfg_.audio_feat_dim);
  }
  Var l = add_rowvec(matmul(make_constant(std::move(left)), params_.get("f_a0.w")),
                     params_.get("f_a0.b"));
  Var r = add_rowvec(matmul(make_constant(std::move(right)), params_.get("f_a1.w")),
                     params_.get("f_a1.b"));
  return with_aggregate_row(add(l, r));
}

Var TrimodalTransformer::build_language_inputs(const std::vector<std::size_t>& token_ids) {
  if (token_ids.empty())
    throw std::invalid_argument("build_language_inputs: empty token sequence");
  if (token_ids.size() > cfg_.max_lang_len)
    throw std::invalid_argument("build_language_inputs: sequence exceeds maximum length");
  // unknown ids fall back to the reserved UNK slot (id 0)
  std::vector<std::size_t> ids(token_ids);
  for (std::size_t& id : ids)
    if (id >= cfg_.vocab) id = 0;
  std::vector<std::size_t> positions(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) positions[i] = i;

  Var tok = gather_rows(params_.get("lang.tok_emb"), ids);
  Var pos = gather_rows(params_.get("lang.pos_emb"), positions);
  return with_aggregate_row(add(tok, pos));
}

TrimodalTransformer::MaskedInputs TrimodalTransformer::apply_masks(
    const Var& visual, const Var& audio, const Var& language, const MaskPlan& plan,
    const ModelSample& sample) {
  auto masked_rows = [&](const Var& x, const std::vector<bool>& flags,
                         const char* mask_name) {
    if (flags.size() + 1 != x->value.rows())
      throw std::invalid_argument("mask plan length mismatch");
    if (std::none_of(flags.begin(), flags.end(), [](bool b) { return b; })) return x;
    std::vector<double> on(flags.size() + 1, 0.0);
    std::vector<double> off(flags.size() + 1, 1.0);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      on[i + 1] = flags[i] ? 1.0 : 0.0;
      off[i + 1] = flags[i] ? 0.0 : 1.0;
    }
    return add(mul_colvec(x, off), outer_const(on, params_.get(mask_name)));
  };

  MaskedInputs out;
  out.visual = masked_rows(visual, plan.visual, "mask.vis");
  out.audio = masked_rows(audio, plan.audio, "mask.audio");
  out.language = masked_rows(language, plan.language, "mask.lang");

  const double clip = sample.clip_len > 0.0 ? sample.clip_len : 1.0;
  for (std::size_t i = 0; i < plan.visual.size(); ++i)
    if (plan.visual[i]) {
      out.targets.vis_positions.push_back(i + 1);
      out.targets.vis_codes.push_back(sample.regions.at(i).spatial_code);
    }
  for (std::size_t i = 0; i < plan.audio.size(); ++i)
    if (plan.audio[i]) {
      const audio::AudioEvent& ev = sample.events.at(i);
      out.targets.audio_positions.push_back(i + 1);
      out.targets.audio_targets.push_back(
          {ev.skewness, ev.start / clip, ev.duration / clip});
    }
  for (std::size_t i = 0; i < plan.language.size(); ++i)
    if (plan.language[i]) {
      std::size_t id = sample.tokens.at(i);
      if (id >= cfg_.vocab) id = 0;
      out.targets.lang_positions.push_back(i + 1);
      out.targets.lang_token_ids.push_back(id);
    }
  return out;
}

Var TrimodalTransformer::encode_stack(const Var& x, const std::string& modality,
                                      std::size_t depth, bool training) {
  Var h = layer_norm(x, params_.get("in_ln." + modality + ".g"),
                     params_.get("in_ln." + modality + ".b"));
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& layer = layers_.at("uni." + modality + "." + std::to_string(i));
    h = nn::encoder_layer(h, h, layer, cfg_.heads, active_dropout(training),
                          dropout_rng_);
  }
  return h;
}

EncodedTriple TrimodalTransformer::unimodal_encode(const Var& lang, const Var& audio,
                                                   const Var& visual, bool training) {
  EncodedTriple out;
  out.lang = encode_stack(lang, "lang", cfg_.layers_lang, training);
  out.audio = encode_stack(audio, "audio", cfg_.layers_audio, training);
  out.visual = encode_stack(visual, "vis", cfg_.layers_vis, training);
  return out;
}

EncodedTriple TrimodalTransformer::crossmodal_encode(const EncodedTriple& uni,
                                                     bool training) {
  const double p = active_dropout(training);
  Var l = uni.lang, a = uni.audio, v = uni.visual;
  // each stage: language queries audio, audio queries visual, visual
  // queries language; stage outputs become the next stage's contexts
  for (std::size_t s = 0; s < cfg_.layers_cross; ++s) {
    const std::string idx = std::to_string(s);
    Var l2 = nn::encoder_layer(l, a, layers_.at("cross.lang." + idx), cfg_.heads, p,
                               dropout_rng_);
    Var a2 = nn::encoder_layer(a, v, layers_.at("cross.audio." + idx), cfg_.heads, p,
                               dropout_rng_);
    Var v2 = nn::encoder_layer(v, l, layers_.at("cross.vis." + idx), cfg_.heads, p,
                               dropout_rng_);
    l = l2;
    a = a2;
    v = v2;
  }
  return {l, a, v};
}

Var TrimodalTransformer::readout(const Var& encoded) const {
  if (cfg_.mean_readout) return mean_rows(encoded);
  return slice_rows(encoded, 0, 1);
}

DecodeResult TrimodalTransformer::decode(const EncodedTriple& cross) {
  Var agg = concat_cols({readout(cross.visual), readout(cross.audio),
                         readout(cross.lang)});
  return {nn::mlp_forward(agg, mlps_.at("head.answer")),
          nn::mlp_forward(agg, mlps_.at("head.ground"))};
}

DecodeResult TrimodalTransformer::forward(const ModelSample& sample, bool training) {
  Var v = build_visual_inputs(sample.regions);
  Var a = build_audio_inputs(sample.events);
  Var l = build_language_inputs(sample.tokens);
  EncodedTriple uni = unimodal_encode(l, a, v, training);
  return decode(crossmodal_encode(uni, training));
}

Var TrimodalTransformer::pretrain_loss(const ModelSample& sample, const MaskPlan& plan,
                                       double grounding_weight,
                                       LossBreakdown* breakdown) {
  Var v = build_visual_inputs(sample.regions);
  Var a = build_audio_inputs(sample.events);
  Var l = build_language_inputs(sample.tokens);
  MaskedInputs masked = apply_masks(v, a, l, plan, sample);
  EncodedTriple uni = unimodal_encode(masked.language, masked.audio, masked.visual,
                                      /*training=*/true);
  EncodedTriple cross = crossmodal_encode(uni, /*training=*/true);
  DecodeResult dec = decode(cross);

  std::vector<std::pair<double, Var>> terms;
  auto note = [&](const char* name, double w, const Var& term) {
    terms.emplace_back(w, term);
    if (breakdown) breakdown->components[name] = term->value.data[0];
  };

  const MaskedTargets& t = masked.targets;
  if (!t.lang_positions.empty()) {
    Var logits = nn::mlp_forward(gather_rows(cross.lang, t.lang_positions),
                                 mlps_.at("head.lang"));
    note("masked_lang", 1.0, cross_entropy(logits, t.lang_token_ids));
  }
  if (!t.vis_positions.empty()) {
    Tensor target(t.vis_codes.size(), t.vis_codes[0].size());
    for (std::size_t i = 0; i < t.vis_codes.size(); ++i)
      std::copy(t.vis_codes[i].begin(), t.vis_codes[i].end(),
                target.data.begin() + i * t.vis_codes[0].size());
    Var pred = nn::mlp_forward(gather_rows(cross.visual, t.vis_positions),
                               mlps_.at("head.vis"));
    note("masked_spatial", 1.0, smooth_l1(pred, make_constant(std::move(target))));
  }
  if (!t.audio_positions.empty()) {
    Tensor target(t.audio_targets.size(), 3);
    for (std::size_t i = 0; i < t.audio_targets.size(); ++i)
      std::copy(t.audio_targets[i].begin(), t.audio_targets[i].end(),
                target.data.begin() + i * 3);
    Var pred = nn::mlp_forward(gather_rows(cross.audio, t.audio_positions),
                               mlps_.at("head.audio"));
    note("masked_skewness", 1.0, smooth_l1(pred, make_constant(std::move(target))));
  }

  note("qa", 1.0, cross_entropy(dec.answer_logits, {sample.answer_id}));
  Tensor ground(1, 5);
  std::copy(sample.grounding.begin(), sample.grounding.end(), ground.data.begin());
  note("grounding", grounding_weight,
       smooth_l1(dec.grounding, make_constant(std::move(ground))));

  Var total = weighted_sum(terms);
  if (breakdown) breakdown->total = total->value.data[0];
  return total;
}

Var TrimodalTransformer::finetune_loss(const ModelSample& sample,
                                       double grounding_weight,
                                       LossBreakdown* breakdown) {
  DecodeResult dec = forward(sample, /*training=*/true);
  std::vector<std::pair<double, Var>> terms;
  Var qa = cross_entropy(dec.answer_logits, {sample.answer_id});
  Tensor ground(1, 5);
  std::copy(sample.grounding.begin(), sample.grounding.end(), ground.data.begin());
  Var g = smooth_l1(dec.grounding, make_constant(std::move(ground)));
  terms.emplace_back(1.0, qa);
  terms.emplace_back(grounding_weight, g);
  if (breakdown) {
    breakdown->components["qa"] = qa->value.data[0];
    breakdown->components["grounding"] = g->value.data[0];
  }
  Var total = weighted_sum(terms);
  if (breakdown) breakdown->total = total->value.data[0];
  return total;
}

TrimodalTransformer::Prediction TrimodalTransformer::predict(const ModelSample& sample) {
  DecodeResult dec = forward(sample, /*training=*/false);
  Prediction out;
  const auto& logits = dec.answer_logits->value.data;
  out.answer_id = static_cast<std::size_t>(
      std::max_element(logits.begin(), logits.end()) - logits.begin());
  for (int i = 0; i < 5; ++i) out.grounding[i] = dec.grounding->value.data[i];
  return out;
}

void TrimodalTransformer::save(const std::string& prefix) const {
  nn::save_checkpoint(params_, prefix);
  save_model_config(cfg_, prefix + ".config.json");
}

void TrimodalTransformer::load(const std::string& prefix) {
  nn::load_checkpoint(params_, prefix);
}

const char* to_string(Phase p) {
  return p == Phase::Pretrain ? "pretrain" : "finetune";
}

TrainParams TrainParams::paper_pretrain() {
  TrainParams p;
  p.batch_size = 32;
  p.grad_accum = 4;
  p.lr = 1e-4;
  p.epochs = 3;
  return p;
}

TrainParams TrainParams::paper_finetune() {
  TrainParams p;
  p.batch_size = 32;
  p.grad_accum = 4;
  p.lr = 5e-5;
  p.epochs = 7;
  return p;
}

TrainParams TrainParams::desk_pretrain() {
  TrainParams p;
  p.batch_size = 8;
  p.grad_accum = 1;
  p.lr = 1e-3;
  p.epochs = 1;
  return p;
}

TrainParams TrainParams::desk_finetune() {
  TrainParams p;
  p.batch_size = 8;
  p.grad_accum = 1;
  p.lr = 5e-4;
  p.epochs = 2;
  return p;
}

}  // namespace av360::model
