#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "av360/model.hpp"
#include "av360/nn.hpp"
#include "av360/rng.hpp"

using namespace av360::model;
using namespace av360;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.layers_lang = 1;
  c.layers_audio = 1;
  c.layers_vis = 1;
  c.layers_cross = 2;
  c.vocab = 30;
  c.answer_table = 8;
  c.dropout = 0.1;
  c.max_lang_len = 12;
  c.max_regions = 35;
  c.vis_feat_dim = 6;
  c.audio_feat_dim = 5;
  return c;
}

audio::AudioEvent event(double start, double dur, double skew,
                        std::vector<double> fl, std::vector<double> fr) {
  audio::AudioEvent ev;
  ev.start = start;
  ev.duration = dur;
  ev.skewness = skew;
  ev.labels = {1, 2, 3};
  ev.feat_left = std::move(fl);
  ev.feat_right = std::move(fr);
  return ev;
}

ModelSample tiny_sample(Rng& rng, const ModelConfig& cfg) {
  ModelSample s;
  s.clip_len = 5.0;
  for (int i = 0; i < 3; ++i) {
    VisualRegion r;
    for (std::size_t d = 0; d < cfg.vis_feat_dim; ++d)
      r.feature.push_back(rng.uniform(-1.0, 1.0));
    geom::SphericalBox box{rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0),
                           rng.uniform(0.3, 1.0), rng.uniform(0.2, 0.7), 0.9};
    r.spatial_code = geom::spatial_embedding(box, 2.5, cfg.spatial_mode);
    s.regions.push_back(std::move(r));
  }
  for (int i = 0; i < 2; ++i) {
    std::vector<double> fl, fr;
    for (std::size_t d = 0; d < cfg.audio_feat_dim; ++d) {
      fl.push_back(rng.uniform(0.0, 1.0));
      fr.push_back(rng.uniform(0.0, 1.0));
    }
    s.events.push_back(
        event(2.5 * i, 2.5, rng.uniform(-1.0, 1.0), std::move(fl), std::move(fr)));
  }
  s.tokens = {3, 7, 1, 12};
  s.answer_id = 2;
  s.grounding = {0.5, -0.2, 0.1, 0.3, 0.2};
  return s;
}

}  // namespace

TEST_CASE("presets carry the published and desk hyperparameters") {
  const ModelConfig paper = ModelConfig::paper_preset();
  CHECK(paper.d == 768);
  CHECK(paper.heads == 12);
  CHECK(paper.layers_lang == 9);
  CHECK(paper.layers_audio == 5);
  CHECK(paper.layers_vis == 5);
  CHECK(paper.layers_cross == 2);
  CHECK(paper.answer_table == 2020);
  CHECK(paper.spatial_mode == geom::SpatialMode::Quaternion);
  CHECK(paper.dropout == 0.1);
  CHECK(paper.max_regions == 35);

  const ModelConfig desk = ModelConfig::desk_preset();
  CHECK(desk.d == 64);
  CHECK(desk.heads == 4);
  CHECK(desk.layers_lang == 3);
  CHECK(desk.layers_audio == 2);
  CHECK(desk.layers_vis == 2);
  CHECK(desk.vocab <= 512);
  CHECK(desk.answer_table <= 64);

  const TrainParams pp = TrainParams::paper_pretrain();
  CHECK(pp.batch_size == 32);
  CHECK(pp.grad_accum == 4);
  CHECK(pp.lr == 1e-4);
  CHECK(pp.epochs == 3);
  const TrainParams pf = TrainParams::paper_finetune();
  CHECK(pf.lr == 5e-5);
  CHECK(pf.epochs == 7);
  CHECK(pp.grounding_weight == 0.2);
  CHECK(pp.mask_p == 0.15);
}

TEST_CASE("model config round-trips through JSON") {
  const std::string path = "/tmp/av360_model_cfg.json";
  ModelConfig c = tiny_config();
  c.spatial_mode = geom::SpatialMode::UnitSphere;
  c.mean_readout = true;
  save_model_config(c, path);
  const ModelConfig r = load_model_config(path);
  CHECK(r.d == c.d);
  CHECK(r.spatial_mode == c.spatial_mode);
  CHECK(r.mean_readout == c.mean_readout);
  CHECK(r.vis_feat_dim == c.vis_feat_dim);
}

TEST_CASE("build_visual_inputs: aggregate row is the mean of the rest") {
  const ModelConfig cfg = tiny_config();
  TrimodalTransformer model(cfg, 1);
  Rng rng(90);
  ModelSample s = tiny_sample(rng, cfg);

  // single region: row 0 equals row 1
  const ad::Var one = model.build_visual_inputs({s.regions[0]});
  REQUIRE(one->value.rows() == 2);
  for (std::size_t j = 0; j < cfg.d; ++j)
    CHECK(one->value.at(0, j) == doctest::Approx(one->value.at(1, j)).epsilon(1e-12));

  // zero features and codes: every row is the summed biases
  VisualRegion zero;
  zero.feature.assign(cfg.vis_feat_dim, 0.0);
  zero.spatial_code.assign(geom::spatial_embedding_dim(cfg.spatial_mode), 0.0);
  const ad::Var z = model.build_visual_inputs({zero, zero});
  const auto fb = model.params().get("f_b.b");
  const auto fc = model.params().get("f_c.b");
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t j = 0; j < cfg.d; ++j)
      CHECK(z->value.at(r, j) ==
            doctest::Approx(fb->value.data[j] + fc->value.data[j]).epsilon(1e-12));

  // permuting regions permutes rows and keeps row 0
  const ad::Var abc = model.build_visual_inputs(s.regions);
  std::vector<VisualRegion> perm = {s.regions[2], s.regions[0], s.regions[1]};
  const ad::Var bca = model.build_visual_inputs(perm);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    CHECK(abc->value.at(0, j) == doctest::Approx(bca->value.at(0, j)).epsilon(1e-9));
    CHECK(abc->value.at(3, j) == doctest::Approx(bca->value.at(1, j)).epsilon(1e-12));
  }

  CHECK_THROWS_AS(model.build_visual_inputs({}), std::invalid_argument);
  std::vector<VisualRegion> too_many(36, s.regions[0]);
  CHECK_THROWS_AS(model.build_visual_inputs(too_many), std::invalid_argument);
}

TEST_CASE("build_audio_inputs mirrors the visual builder") {
  const ModelConfig cfg = tiny_config();
  TrimodalTransformer model(cfg, 2);
  Rng rng(91);
  ModelSample s = tiny_sample(rng, cfg);

  const ad::Var one = model.build_audio_inputs({s.events[0]});
  REQUIRE(one->value.rows() == 2);
  for (std::size_t j = 0; j < cfg.d; ++j)
    CHECK(one->value.at(0, j) == doctest::Approx(one->value.at(1, j)).epsilon(1e-12));

  const ad::Var both = model.build_audio_inputs(s.events);
  std::vector<audio::AudioEvent> perm = {s.events[1], s.events[0]};
  const ad::Var swapped = model.build_audio_inputs(perm);
  for (std::size_t j = 0; j < cfg.d; ++j) {
    CHECK(both->value.at(0, j) ==
          doctest::Approx(swapped->value.at(0, j)).epsilon(1e-9));
    CHECK(both->value.at(1, j) ==
          doctest::Approx(swapped->value.at(2, j)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(model.build_audio_inputs({}), std::invalid_argument);
}

TEST_CASE("build_language_inputs: positions, UNK, length cap") {
  const ModelConfig cfg = tiny_config();
  TrimodalTransformer model(cfg, 3);

  const ad::Var single = model.build_language_inputs({5});
  REQUIRE(single->value.rows() == 2);
  for (std::size_t j = 0; j < cfg.d; ++j)
    CHECK(single->value.at(0, j) ==
          doctest::Approx(single->value.at(1, j)).epsilon(1e-12));

  // same token at different positions gives different rows
  const ad::Var rep = model.build_language_inputs({5, 5});
  bool differs = false;
  for (std::size_t j = 0; j < cfg.d; ++j)
    if (rep->value.at(1, j) != rep->value.at(2, j)) differs = true;
  CHECK(differs);

  // unknown ids collapse onto the reserved UNK embedding
  const ad::Var unk_a = model.build_language_inputs({cfg.vocab + 7});
  const ad::Var unk_b = model.build_language_inputs({0});
  for (std::size_t j = 0; j < cfg.d; ++j)
    CHECK(unk_a->value.at(1, j) == unk_b->value.at(1, j));

  CHECK_THROWS_AS(model.build_language_inputs({}), std::invalid_argument);
  CHECK_THROWS_AS(
      model.build_language_inputs(std::vector<std::size_t>(cfg.max_lang_len + 1, 1)),
      std::invalid_argument);
}

TEST_CASE("unimodal_encode: depth zero is layer norm only; shapes preserved") {
  ModelConfig cfg = tiny_config();
  cfg.layers_lang = 0;
  cfg.layers_audio = 0;
  cfg.layers_vis = 0;
  TrimodalTransformer model(cfg, 4);
  Rng rng(92);
  const ModelSample s = tiny_sample(rng, cfg);

  const ad::Var v = model.build_visual_inputs(s.regions);
  const ad::Var a = model.build_audio_inputs(s.events);
  const ad::Var l = model.build_language_inputs(s.tokens);
  const EncodedTriple uni = model.unimodal_encode(l, a, v, false);

  CHECK(uni.visual->value.shape == v->value.shape);
  CHECK(uni.audio->value.shape == a->value.shape);
  CHECK(uni.lang->value.shape == l->value.shape);

  // depth 0 = input layer norm alone (identity gain, zero bias at init)
  const std::size_t d = cfg.d;
  for (std::size_t r = 0; r < v->value.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += uni.visual->value.at(r, j);
    mean /= static_cast<double>(d);
    CHECK(std::abs(mean) < 1e-9);
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = uni.visual->value.at(r, j) - mean;
      var += dv * dv;
    }
    CHECK(var / d == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("forward is deterministic with dropout off and seeds fixed") {
  const ModelConfig cfg = tiny_config();
  Rng rng(93);
  const ModelSample s = tiny_sample(rng, cfg);

  TrimodalTransformer m1(cfg, 42);
  TrimodalTransformer m2(cfg, 42);
  const DecodeResult r1 = m1.forward(s, false);
  const DecodeResult r2 = m2.forward(s, false);
  CHECK(r1.answer_logits->value.data == r2.answer_logits->value.data);
  CHECK(r1.grounding->value.data == r2.grounding->value.data);

  // duplicated forward on the same instance is also bit-identical
  const DecodeResult r3 = m1.forward(s, false);
  CHECK(r1.answer_logits->value.data == r3.answer_logits->value.data);
}

TEST_CASE("crossmodal_encode: context permutation leaves the primary output") {
  const ModelConfig cfg = tiny_config();
  TrimodalTransformer model(cfg, 5);
  Rng rng(94);
  ModelSample s = tiny_sample(rng, cfg);

  const ad::Var l = model.build_language_inputs(s.tokens);
  const ad::Var a = model.build_audio_inputs(s.events);

  // permute the visual regions: audio and language cross outputs must not
  // change in value (visual is their context via the two-stage wiring)
  const ad::Var v1 = model.build_visual_inputs(s.regions);
  std::vector<VisualRegion> perm = {s.regions[1], s.regions[2], s.regions[0]};
  const ad::Var v2 = model.build_visual_inputs(perm);

  const EncodedTriple uni1 = model.unimodal_encode(l, a, v1, false);
  const EncodedTriple uni2 = model.unimodal_encode(l, a, v2, false);
  const EncodedTriple c1 = model.crossmodal_encode(uni1, false);
  const EncodedTriple c2 = model.crossmodal_encode(uni2, false);

  CHECK(c1.lang->value.shape == uni1.lang->value.shape);
  CHECK(c1.audio->value.shape == uni1.audio->value.shape);
  CHECK(c1.visual->value.shape == uni1.visual->value.shape);

  for (std::size_t i = 0; i < c1.audio->value.numel(); ++i)
    CHECK(c1.audio->value.data[i] ==
          doctest::Approx(c2.audio->value.data[i]).epsilon(1e-9));
  for (std::size_t i = 0; i < c1.lang->value.numel(); ++i)
    CHECK(c1.lang->value.data[i] ==
          doctest::Approx(c2.lang->value.data[i]).epsilon(1e-9));
}

TEST_CASE("decode: answer width follows the table; grounding is 5-D in all modes") {
  for (const auto mode : {geom::SpatialMode::Quaternion, geom::SpatialMode::Cartesian,
                          geom::SpatialMode::Spherical, geom::SpatialMode::UnitSphere}) {
    ModelConfig cfg = tiny_config();
    cfg.spatial_mode = mode;
    TrimodalTransformer model(cfg, 6);
    Rng rng(95);
    const ModelSample s = tiny_sample(rng, cfg);
    const DecodeResult dec = model.forward(s, false);
    CHECK(dec.answer_logits->value.cols() == cfg.answer_table);
    CHECK(dec.grounding->value.cols() == 5);
  }
}

TEST_CASE("decoder head at published width emits the 2020-way answer table") {
  av360::nn::ParamStore store;
  Rng rng(96);
  const ModelConfig paper = ModelConfig::paper_preset();
  const auto head = av360::nn::make_mlp(
      store, "head.answer", {3 * paper.d, paper.d, paper.d, paper.answer_table}, rng);
  ad::Tensor in(1, 3 * paper.d, 0.01);
  const ad::Var out = av360::nn::mlp_forward(ad::make_constant(in), head);
  CHECK(out->value.cols() == 2020);
}

TEST_CASE("sample_mask_plan hits the requested rate and spares the aggregate row") {
  Rng rng(97);
  const MaskPlan plan = sample_mask_plan(10000, 0, 0, 0.15, rng);
  std::size_t masked = 0;
  for (bool b : plan.visual) masked += b;
  CHECK(static_cast<double>(masked) / 10000.0 == doctest::Approx(0.15).epsilon(0.07));
  CHECK(std::abs(static_cast<double>(masked) / 10000.0 - 0.15) < 0.01);
}

TEST_CASE("apply_masks: p = 0 identity, p = 1 masks every non-aggregate row") {
  const ModelConfig cfg = tiny_config();
  TrimodalTransformer model(cfg, 7);
  Rng rng(98);
  const ModelSample s = tiny_sample(rng, cfg);

  const ad::Var v = model.build_visual_inputs(s.regions);
  const ad::Var a = model.build_audio_inputs(s.events);
  const ad::Var l = model.build_language_inputs(s.tokens);

  MaskPlan none;
  none.visual.assign(s.regions.size(), false);
  none.audio.assign(s.events.size(), false);
  none.language.assign(s.tokens.size(), false);
  const auto clean = model.apply_masks(v, a, l, none, s);
  CHECK(clean.visual.get() == v.get());
  CHECK(clean.targets.lang_positions.empty());
  CHECK(clean.targets.vis_positions.empty());
  CHECK(clean.targets.audio_positions.empty());

  MaskPlan all;
  all.visual.assign(s.regions.size(), true);
  all.audio.assign(s.events.size(), true);
  all.language.assign(s.tokens.size(), true);
  const auto masked = model.apply_masks(v, a, l, all, s);
  const auto mask_vec = model.params().get("mask.vis");
  for (std::size_t r = 1; r < masked.visual->value.rows(); ++r)
    for (std::size_t j = 0; j < cfg.d; ++j)
      CHECK(masked.visual->value.at(r, j) ==
            doctest::Approx(mask_vec->value.data[j]).epsilon(1e-12));
  // aggregate row untouched
  for (std::size_t j = 0; j < cfg.d; ++j)
    CHECK(masked.visual->value.at(0, j) == v->value.at(0, j));
  CHECK(masked.targets.vis_positions.size() == s.regions.size());
  CHECK(masked.targets.audio_positions.size() == s.events.size());
  CHECK(masked.targets.lang_positions.size() == s.tokens.size());
  // audio targets carry (skewness, start, duration) normalized by clip length
  CHECK(masked.targets.audio_targets[1][0] == doctest::Approx(s.events[1].skewness));
  CHECK(masked.targets.audio_targets[1][1] == doctest::Approx(0.5));
  CHECK(masked.targets.audio_targets[1][2] == doctest::Approx(0.5));
}

TEST_CASE("pretrain_loss composition") {
  const ModelConfig cfg = tiny_config();
  TrimodalTransformer model(cfg, 8);
  Rng rng(99);
  ModelSample s = tiny_sample(rng, cfg);

  // certain-correct answer head: zero every answer-head parameter, then bias
  // the last layer toward the true answer
  for (const char* name : {"head.answer.w0", "head.answer.w1", "head.answer.w2",
                           "head.answer.b0", "head.answer.b1"}) {
    auto p = model.params().get(name);
    std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
  }
  auto b2 = model.params().get("head.answer.b2");
  std::fill(b2->value.data.begin(), b2->value.data.end(), -200.0);
  b2->value.data[s.answer_id] = 200.0;

  MaskPlan none;
  none.visual.assign(s.regions.size(), false);
  none.audio.assign(s.events.size(), false);
  none.language.assign(s.tokens.size(), false);

  LossBreakdown parts;
  const ad::Var loss = model.pretrain_loss(s, none, 0.2, &parts);
  CHECK(parts.components.count("masked_lang") == 0);
  CHECK(parts.components.count("masked_spatial") == 0);
  CHECK(parts.components.count("masked_skewness") == 0);
  CHECK(parts.components.at("qa") == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(loss->value.data[0] ==
        doctest::Approx(0.2 * parts.components.at("grounding")).epsilon(1e-9));

  // uniform answer logits contribute ln(answer table size)
  std::fill(b2->value.data.begin(), b2->value.data.end(), 0.0);
  LossBreakdown parts2;
  model.pretrain_loss(s, none, 0.2, &parts2);
  CHECK(parts2.components.at("qa") ==
        doctest::Approx(std::log(static_cast<double>(cfg.answer_table))).epsilon(1e-9));

  // with masks on, all components appear and are non-negative
  MaskPlan all;
  all.visual.assign(s.regions.size(), true);
  all.audio.assign(s.events.size(), true);
  all.language.assign(s.tokens.size(), true);
  LossBreakdown parts3;
  model.pretrain_loss(s, all, 0.2, &parts3);
  for (const char* key :
       {"masked_lang", "masked_spatial", "masked_skewness", "qa", "grounding"})
    CHECK(parts3.components.at(key) >= 0.0);
}

TEST_CASE("end-to-end gradient matches finite differences on sampled parameters") {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.0;
  TrimodalTransformer model(cfg, 9);
  Rng rng(100);
  const ModelSample s = tiny_sample(rng, cfg);
  MaskPlan plan = sample_mask_plan(s.regions.size(), s.events.size(), s.tokens.size(),
                                   0.4, rng);

  model.params().zero_grad();
  ad::backward(model.pretrain_loss(s, plan, 0.2));

  // compare AD grads against central differences on random coordinates
  Rng pick(101);
  std::vector<std::string> names;
  for (const auto& [name, v] : model.params().items()) names.push_back(name);
  const double eps = 1e-5;
  for (int k = 0; k < 6; ++k) {
    const std::string& name = names[pick.uniform_index(names.size())];
    auto p = model.params().get(name);
    const std::size_t i = pick.uniform_index(p->value.numel());
    const double saved = p->value.data[i];
    const double g_ad = p->grad.empty() ? 0.0 : p->grad[i];

    p->value.data[i] = saved + eps;
    const double fp = model.pretrain_loss(s, plan, 0.2)->value.data[0];
    p->value.data[i] = saved - eps;
    const double fm = model.pretrain_loss(s, plan, 0.2)->value.data[0];
    p->value.data[i] = saved;

    const double g_fd = (fp - fm) / (2.0 * eps);
    CHECK(std::abs(g_ad - g_fd) / std::max(1.0, std::abs(g_fd)) < 1e-3);
  }
}

TEST_CASE("training: same seed gives bit-identical checkpoints") {
  ModelConfig cfg = tiny_config();
  Rng rng(102);
  std::vector<ModelSample> data;
  for (int i = 0; i < 6; ++i) data.push_back(tiny_sample(rng, cfg));

  TrainParams params = TrainParams::desk_pretrain();
  params.epochs = 2;
  params.batch_size = 3;
  params.seed = 7;

  auto run = [&](const std::string& prefix) {
    TrimodalTransformer model(cfg, 11);
    train(model, data, params, Phase::Pretrain);
    model.save(prefix);
  };
  run("/tmp/av360_train_a");
  run("/tmp/av360_train_b");

  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(slurp("/tmp/av360_train_a.bin") == slurp("/tmp/av360_train_b.bin"));
  CHECK(slurp("/tmp/av360_train_a.json") == slurp("/tmp/av360_train_b.json"));
}

TEST_CASE("training aborts with a diagnostic on divergence") {
  ModelConfig cfg = tiny_config();
  Rng rng(103);
  ModelSample bad = tiny_sample(rng, cfg);
  bad.grounding[0] = std::numeric_limits<double>::infinity();

  TrimodalTransformer model(cfg, 12);
  TrainParams params = TrainParams::desk_finetune();
  params.epochs = 1;
  CHECK_THROWS_WITH_AS(train(model, {bad}, params, Phase::Finetune),
                       doctest::Contains("diverged"), std::runtime_error);
}

TEST_CASE("checkpoint save -> load -> forward reproduces logits bit-exactly") {
  const ModelConfig cfg = tiny_config();
  Rng rng(104);
  const ModelSample s = tiny_sample(rng, cfg);

  TrimodalTransformer model(cfg, 13);
  // a couple of training steps so parameters move off their init
  std::vector<ModelSample> data = {s, tiny_sample(rng, cfg)};
  TrainParams params = TrainParams::desk_finetune();
  params.epochs = 1;
  train(model, data, params, Phase::Finetune);

  const DecodeResult before = model.forward(s, false);
  model.save("/tmp/av360_roundtrip");

  TrimodalTransformer restored(cfg, 999);  // different seed: weights overwritten
  restored.load("/tmp/av360_roundtrip");
  const DecodeResult after = restored.forward(s, false);
  CHECK(before.answer_logits->value.data == after.answer_logits->value.data);
  CHECK(before.grounding->value.data == after.grounding->value.data);
}

TEST_CASE("spatial mode changes only the code width contract") {
  Rng rng(105);
  for (const auto mode : {geom::SpatialMode::Quaternion, geom::SpatialMode::Cartesian,
                          geom::SpatialMode::Spherical, geom::SpatialMode::UnitSphere}) {
    ModelConfig cfg = tiny_config();
    cfg.spatial_mode = mode;
    TrimodalTransformer model(cfg, 20);
    const auto fc = model.params().get("f_c.w");
    CHECK(fc->value.rows() == geom::spatial_embedding_dim(mode));
    const ModelSample s = tiny_sample(rng, cfg);
    const DecodeResult dec = model.forward(s, false);
    CHECK(dec.answer_logits->value.cols() == cfg.answer_table);
    CHECK(dec.grounding->value.cols() == 5);
  }
}
