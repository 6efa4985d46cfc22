#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "av360/image.hpp"
#include "av360/media.hpp"
#include "av360/model.hpp"
#include "av360/nn.hpp"
#include "av360/qa.hpp"
#include "av360/rng.hpp"
#include "av360/serialize.hpp"
#include "av360/sphere.hpp"
#include "av360/tensor.hpp"
#include "av360/wav.hpp"

namespace av360::cli {

using nlohmann::json;

namespace {

constexpr double kDegToRad = geom::kPi / 180.0;

void write_manifest(const std::string& path, const std::string& command,
                    std::uint64_t seed, const json& config,
                    const std::vector<std::string>& outputs) {
  json digests = json::object();
  for (const std::string& p : outputs)
    digests[p] = io::file_digest(p);
  json manifest{{"command", command},
                {"seed", seed},
                {"config", config},
                {"outputs", digests}};
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  f << manifest.dump(2) << "\n";
}

template <typename Fn>
void for_each_jsonl_record(const std::string& path, Fn&& fn) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": bad record: " + e.what());
    }
    try {
      fn(j);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

geom::SphericalBox parse_box(const json& j) {
  geom::SphericalBox b;
  b.theta = j.at("theta");
  b.phi = j.at("phi");
  b.w_theta = j.at("w_theta");
  b.h_phi = j.at("h_phi");
  b.confidence = j.value("confidence", 1.0);
  geom::validate(b);
  return b;
}

json box_json(const geom::SphericalBox& b) {
  return json{{"theta", b.theta},
              {"phi", b.phi},
              {"w_theta", b.w_theta},
              {"h_phi", b.h_phi},
              {"confidence", b.confidence}};
}

// ---------------------------------------------------------------- calibrate

int cmd_calibrate(const std::string& in, const std::string& out_path,
                  double persp_theta, double persp_phi, bool degrees,
                  const std::string& manifest, std::ostream&) {
  if (degrees) {
    persp_theta *= kDegToRad;
    persp_phi *= kDegToRad;
  }
  const geom::Perspective persp{persp_theta, persp_phi};
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write output: " + out_path);

  for_each_jsonl_record(in, [&](const json& j) {
    if (j.contains("min") && j.contains("max")) {
      const std::array<double, 2> lo = j.at("min");
      const std::array<double, 2> hi = j.at("max");
      const auto box =
          geom::nfov_box_to_spherical(lo, hi, persp, j.value("confidence", 1.0));
      out << box_json(box).dump() << "\n";
    } else {
      const geom::UnitVec v =
          geom::calibrate_point(j.at("x"), j.at("y"), persp);
      out << json{{"x", v.x}, {"y", v.y}, {"z", v.z}}.dump() << "\n";
    }
  });
  out.close();
  write_manifest(manifest.empty() ? out_path + ".manifest.json" : manifest,
                 "calibrate", 0,
                 json{{"persp_theta", persp_theta}, {"persp_phi", persp_phi}},
                 {out_path});
  return 0;
}

// ----------------------------------------------------------------------- nms

int cmd_nms(const std::string& in, const std::string& out_path, double tau,
            std::size_t max_keep, const std::string& manifest) {
  std::vector<geom::SphericalBox> boxes;
  for_each_jsonl_record(in, [&](const json& j) { boxes.push_back(parse_box(j)); });
  const auto kept = geom::spherical_nms(boxes, tau, max_keep);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write output: " + out_path);
  for (const auto& b : kept) out << box_json(b).dump() << "\n";
  out.close();
  write_manifest(manifest.empty() ? out_path + ".manifest.json" : manifest, "nms", 0,
                 json{{"tau", tau}, {"max_keep", max_keep}}, {out_path});
  return 0;
}

// ------------------------------------------------------------------ relation

int cmd_relation(const std::string& in, const std::string& out_path,
                 const std::string& manifest) {
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write output: " + out_path);
  for_each_jsonl_record(in, [&](const json& j) {
    const auto rel =
        geom::classify_relation(parse_box(j.at("a")), parse_box(j.at("b")));
    out << json{{"relation", geom::to_string(rel)}}.dump() << "\n";
  });
  out.close();
  write_manifest(manifest.empty() ? out_path + ".manifest.json" : manifest,
                 "relation", 0, json::object(), {out_path});
  return 0;
}

// --------------------------------------------------------------------- clips

int cmd_clips(const std::string& audio_path, const std::string& frames_dir,
              const std::string& out_path, double clip_len, double mel_threshold,
              double skew_threshold, const std::string& manifest, std::ostream& log) {
  const media::AudioTrack track = media::read_wav(audio_path);
  const auto candidates = media::extract_peak_clips(track, clip_len);

  auto clip_track = [&](const media::ClipInterval& c) {
    media::AudioTrack t;
    t.sample_rate = track.sample_rate;
    const auto s0 = static_cast<std::size_t>(c.start * track.sample_rate);
    const auto s1 = std::min(track.frames(),
                             static_cast<std::size_t>((c.start + c.duration) *
                                                      track.sample_rate));
    for (const auto& ch : track.channels)
      t.channels.emplace_back(ch.begin() + s0, ch.begin() + s1);
    return t;
  };

  auto clip_frames = [&](const media::ClipInterval& c) {
    std::vector<media::FrameImage> frames;
    if (frames_dir.empty()) return frames;
    const int first = static_cast<int>(std::floor(c.start));
    const int last = static_cast<int>(std::ceil(c.start + c.duration));
    for (int sec = first; sec <= last; ++sec) {
      char name[32];
      std::snprintf(name, sizeof(name), "%03d", sec);
      for (const char* ext : {".ppm", ".png"}) {
        const auto p = std::filesystem::path(frames_dir) / (std::string(name) + ext);
        if (std::filesystem::exists(p)) {
          frames.push_back(media::load_frame(p.string()));
          break;
        }
      }
    }
    return frames;
  };

  std::vector<media::ClipInterval> accepted;
  std::vector<std::vector<std::array<double, 13>>> accepted_mel;
  std::size_t dropped_mel = 0, dropped_static = 0, dropped_synthetic = 0;
  for (const auto& c : candidates) {
    const auto mel = media::mel_coefficients(clip_track(c));
    bool duplicate = false;
    for (const auto& prev : accepted_mel)
      if (media::mel_distance(mel, prev) < mel_threshold) {
        duplicate = true;
        break;
      }
    if (duplicate) {
      ++dropped_mel;
      continue;
    }

    const auto frames = clip_frames(c);
    if (!frames.empty()) {
      std::vector<std::uint64_t> hashes;
      bool synthetic = false;
      for (const auto& f : frames) {
        hashes.push_back(media::dct_phash64(f));
        synthetic = synthetic || media::is_synthetic_frame(f, skew_threshold);
      }
      if (synthetic) {
        ++dropped_synthetic;
        continue;
      }
      if (media::is_static_clip(hashes)) {
        ++dropped_static;
        continue;
      }
    }
    accepted.push_back(c);
    accepted_mel.push_back(mel);
  }

  io::write_clips_jsonl(out_path, accepted);
  log << "clips: " << candidates.size() << " candidates, " << accepted.size()
      << " kept (" << dropped_mel << " duplicate, " << dropped_static << " static, "
      << dropped_synthetic << " synthetic)\n";
  write_manifest(manifest.empty() ? out_path + ".manifest.json" : manifest, "clips", 0,
                 json{{"clip_len", clip_len},
                      {"mel_dedup_threshold", mel_threshold},
                      {"skew_threshold", skew_threshold}},
                 {out_path});
  return 0;
}

// ------------------------------------------------------------------ skewness

int cmd_skewness(const std::string& audio_path, const std::string& out_path,
                 const std::string& manifest) {
  const media::AudioTrack track = media::read_wav(audio_path);
  if (track.channels.size() != 2)
    throw std::runtime_error(audio_path + ": skewness needs a stereo track");
  const double db = audio::sh_skewness(track.channels[0], track.channels[1]);
  json j{{"skewness_db", db}, {"normalized", audio::normalize_skewness(db)}};
  std::ofstream f(out_path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write output: " + out_path);
  f << j.dump(2) << "\n";
  f.close();
  write_manifest(manifest.empty() ? out_path + ".manifest.json" : manifest,
                 "skewness", 0, json::object(), {out_path});
  return 0;
}

// ----------------------------------------------------------------------- gen

int cmd_gen(std::uint64_t seed, std::size_t scenes, const std::string& out_dir,
            double clip_len, double audio_rate, double counterexample_fraction,
            double coverage, std::ostream& log) {
  qa::DatasetParams params;
  params.num_scenes = scenes;
  params.seed = seed;
  params.scene.clip_len = clip_len;
  params.scene.audio_rate = audio_rate;
  params.counterexample_fraction = counterexample_fraction;
  params.answer_coverage = coverage;

  const qa::Dataset data = qa::generate_dataset(params);
  io::save_dataset(data, out_dir);
  log << "gen: " << data.scenes.size() << " scenes, " << data.train.size()
      << " train / " << data.val.size() << " val / " << data.test.size()
      << " test samples, " << data.answers.answers.size() << " answers\n";

  std::vector<std::string> outputs;
  for (const char* name : {"scenes.jsonl", "qa_train.jsonl", "qa_val.jsonl",
                           "qa_test.jsonl", "answers.json", "vocab.json",
                           "params.json"})
    outputs.push_back(out_dir + "/" + name);
  write_manifest(out_dir + "/manifest.json", "gen", seed,
                 json{{"scenes", scenes},
                      {"clip_len", clip_len},
                      {"audio_rate", audio_rate},
                      {"counterexample_fraction", counterexample_fraction},
                      {"coverage", coverage}},
                 outputs);
  return 0;
}

// ------------------------------------------------------------ train & eval

model::ModelConfig resolve_config(const std::string& preset,
                                  const std::string& config_path,
                                  const std::string& spatial_mode,
                                  const qa::Dataset& data) {
  model::ModelConfig cfg;
  if (!config_path.empty())
    cfg = model::load_model_config(config_path);
  else if (preset == "paper")
    cfg = model::ModelConfig::paper_preset();
  else
    cfg = model::ModelConfig::desk_preset();

  if (!spatial_mode.empty())
    cfg.spatial_mode = geom::spatial_mode_from_string(spatial_mode);

  if (config_path.empty()) {
    // size the desk preset to the dataset at hand
    const qa::Lexicon& lex = data.lexicon;
    cfg.vocab = std::max<std::size_t>(data.vocab.words.size(), 1);
    cfg.answer_table = data.answers.answers.size();
    cfg.vis_feat_dim = lex.categories.size() + lex.colors.size() +
                       data.params.scene.noise_dim;
    cfg.audio_feat_dim = lex.sounds.size() + 1 + data.params.scene.noise_dim;
  }
  return cfg;
}

model::TrainParams resolve_train_params(const std::string& preset,
                                        model::Phase phase, std::uint64_t seed,
                                        std::optional<std::size_t> epochs,
                                        std::optional<std::size_t> batch,
                                        std::optional<std::size_t> accum,
                                        std::optional<double> lr) {
  model::TrainParams p;
  if (preset == "paper")
    p = phase == model::Phase::Pretrain ? model::TrainParams::paper_pretrain()
                                        : model::TrainParams::paper_finetune();
  else
    p = phase == model::Phase::Pretrain ? model::TrainParams::desk_pretrain()
                                        : model::TrainParams::desk_finetune();
  p.seed = seed;
  if (epochs) p.epochs = *epochs;
  if (batch) p.batch_size = *batch;
  if (accum) p.grad_accum = *accum;
  if (lr) p.lr = *lr;
  return p;
}

std::vector<model::ModelSample> split_to_samples(const qa::Dataset& data,
                                                 const std::vector<qa::QASample>& split,
                                                 geom::SpatialMode mode) {
  std::vector<model::ModelSample> out;
  out.reserve(split.size());
  for (const qa::QASample& s : split) {
    const qa::Scene* scene = data.scene_by_seed(s.scene_seed);
    if (scene == nullptr)
      throw std::runtime_error("QA sample references unknown scene seed " +
                               std::to_string(s.scene_seed));
    out.push_back(qa::to_model_sample(*scene, s, mode));
  }
  return out;
}

int cmd_train(model::Phase phase, const std::string& data_dir,
              const std::string& ckpt_in, const std::string& out_prefix,
              const std::string& preset, const std::string& config_path,
              const std::string& spatial_mode, std::uint64_t seed,
              std::optional<std::size_t> epochs, std::optional<std::size_t> batch,
              std::optional<std::size_t> accum, std::optional<double> lr,
              std::ostream& log) {
  const qa::Dataset data = io::load_dataset(data_dir);
  const model::ModelConfig cfg =
      resolve_config(preset, config_path, spatial_mode, data);
  model::TrimodalTransformer net(cfg, derive_seed(seed, "model"));
  if (!ckpt_in.empty()) net.load(ckpt_in);

  const model::TrainParams params =
      resolve_train_params(preset, phase, seed, epochs, batch, accum, lr);
  const auto samples = split_to_samples(data, data.train, cfg.spatial_mode);

  std::ofstream log_file(out_prefix + ".log.jsonl", std::ios::trunc);
  const auto entries = model::train(net, samples, params, phase, &log_file);
  log_file.close();
  net.save(out_prefix);
  log << model::to_string(phase) << ": " << entries.size() << " optimizer steps, "
      << "final loss " << (entries.empty() ? 0.0 : entries.back().loss) << "\n";

  write_manifest(out_prefix + ".manifest.json", model::to_string(phase), seed,
                 json{{"data", data_dir},
                      {"preset", preset},
                      {"spatial_mode", geom::to_string(cfg.spatial_mode)},
                      {"epochs", params.epochs},
                      {"batch_size", params.batch_size},
                      {"grad_accum", params.grad_accum},
                      {"lr", params.lr}},
                 {out_prefix + ".json", out_prefix + ".bin",
                  out_prefix + ".log.jsonl"});
  return 0;
}

json metrics_row(const qa::EvalMetrics& m) {
  json row{{"ss", m.accuracy_ss}, {"av", m.accuracy_av}, {"all", m.accuracy_all}};
  if (m.grounding_mse)
    row["ground_mse"] = *m.grounding_mse;
  else
    row["ground_mse"] = nullptr;
  return row;
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt,
             const std::string& report_path, const std::string& split_name,
             const std::string& config_path, const std::string& spatial_mode,
             std::ostream& log) {
  const qa::Dataset data = io::load_dataset(data_dir);
  const std::vector<qa::QASample>& split =
      split_name == "train" ? data.train : split_name == "val" ? data.val : data.test;
  if (split.empty()) throw std::runtime_error("empty evaluation split: " + split_name);

  json rows = json::object();
  rows["prior"] = metrics_row(qa::evaluate(qa::prior_baseline(data.train), split,
                                           data.answers, data,
                                           geom::SpatialMode::Quaternion));
  rows["qtype_prior"] = metrics_row(
      qa::evaluate(qa::qtype_prior_baseline(data.train), split, data.answers, data,
                   geom::SpatialMode::Quaternion));

  std::string mode_str = "quaternion";
  if (!ckpt.empty()) {
    model::ModelConfig cfg = config_path.empty()
                                 ? model::load_model_config(ckpt + ".config.json")
                                 : model::load_model_config(config_path);
    if (!spatial_mode.empty())
      cfg.spatial_mode = geom::spatial_mode_from_string(spatial_mode);
    model::TrimodalTransformer net(cfg, 0);
    net.load(ckpt);
    rows["model"] = metrics_row(qa::evaluate(qa::model_predictor(net, data), split,
                                             data.answers, data, cfg.spatial_mode));
    mode_str = geom::to_string(cfg.spatial_mode);
  }

  json report{{"split", split_name}, {"spatial_mode", mode_str},
              {"columns", {"ground_mse", "ss", "av", "all"}},
              {"rows", rows}};
  std::ofstream f(report_path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write report: " + report_path);
  f << report.dump(2) << "\n";
  f.close();
  log << "eval[" << split_name << "]: all=" << rows["qtype_prior"]["all"]
      << " (q-type prior)";
  if (rows.contains("model")) log << ", all=" << rows["model"]["all"] << " (model)";
  log << "\n";

  write_manifest(report_path + ".manifest.json", "eval", 0,
                 json{{"data", data_dir}, {"split", split_name}, {"ckpt", ckpt}},
                 {report_path});
  return 0;
}

// ----------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::string& preset, const std::string& out_path,
                  std::ostream& log) {
  using namespace ad;
  Rng rng(424242);
  auto rand_tensor = [&](std::size_t r, std::size_t c, double s = 0.8) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.uniform(-s, s);
    return t;
  };
  auto sum_all = [](const Var& v) {
    Tensor onesr(1, v->value.rows(), 1.0);
    Tensor ones(v->value.cols(), 1, 1.0);
    return matmul(matmul(make_constant(onesr), v), make_constant(ones));
  };

  json results = json::object();
  double primitive_max = 0.0;
  auto record = [&](const std::string& name, double err) {
    results[name] = err;
    primitive_max = std::max(primitive_max, err);
  };

  const Tensor x0 = rand_tensor(4, 8);
  const Tensor other = rand_tensor(4, 8, 0.5);
  const Tensor w = rand_tensor(8, 6, 0.5);
  record("matmul", finite_diff_check(
                       [&](const Var& x) { return sum_all(matmul(x, make_constant(w))); },
                       x0));
  record("transpose", finite_diff_check(
                          [&](const Var& x) { return sum_all(transpose(x)); }, x0));
  record("add", finite_diff_check([&](const Var& x) {
           return sum_all(add(x, make_constant(other)));
         }, x0));
  record("mul", finite_diff_check([&](const Var& x) {
           return sum_all(mul(x, make_constant(other)));
         }, x0));
  record("gelu",
         finite_diff_check([&](const Var& x) { return sum_all(gelu(x)); }, x0));
  const Tensor gain = rand_tensor(1, 8, 0.5);
  const Tensor bias = rand_tensor(1, 8, 0.5);
  record("layer_norm", finite_diff_check([&](const Var& x) {
           return sum_all(layer_norm(x, make_constant(gain), make_constant(bias)));
         }, x0));
  record("softmax", finite_diff_check([&](const Var& x) {
           return sum_all(mul(softmax(x), make_constant(other)));
         }, x0));
  record("cross_entropy", finite_diff_check([&](const Var& x) {
           return cross_entropy(x, {1, 7, 0, 3});
         }, x0));
  record("smooth_l1", finite_diff_check([&](const Var& x) {
           return smooth_l1(x, make_constant(other));
         }, x0));
  record("mean_rows", finite_diff_check(
                          [&](const Var& x) { return sum_all(mean_rows(x)); }, x0));
  record("gather_rows", finite_diff_check([&](const Var& x) {
           return sum_all(gather_rows(x, {1, 1, 3, 0}));
         }, x0));

  // one full cross-modal encoder layer (query and context streams differ)
  {
    nn::ParamStore store;
    Rng init(77);
    const auto layer = nn::make_encoder_layer(store, "enc", 16, init);
    const Tensor kv = rand_tensor(5, 16);
    const Tensor q = rand_tensor(3, 16);
    Rng noop(0);
    record("encoder_layer_query", finite_diff_check([&](const Var& x) {
             return sum_all(nn::encoder_layer(x, make_constant(kv), layer, 4, 0.0, noop));
           }, q));
    record("encoder_layer_weight", finite_diff_check([&](const Var& wv) {
             auto p = layer;
             p.wv = wv;
             return sum_all(nn::encoder_layer(make_constant(q), make_constant(kv), p,
                                              4, 0.0, noop));
           }, layer.wv->value));
  }

  // end-to-end loss gradient on the desk-preset model, 20 sampled parameters
  double end_to_end_max = 0.0;
  {
    model::ModelConfig cfg = preset == "paper" ? model::ModelConfig::paper_preset()
                                               : model::ModelConfig::desk_preset();
    cfg.dropout = 0.0;
    model::TrimodalTransformer net(cfg, 31337);

    model::ModelSample sample;
    sample.clip_len = 5.0;
    for (int i = 0; i < 4; ++i) {
      model::VisualRegion r;
      for (std::size_t d = 0; d < cfg.vis_feat_dim; ++d)
        r.feature.push_back(rng.uniform(-1.0, 1.0));
      geom::SphericalBox box{rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0),
                             rng.uniform(0.3, 1.0), rng.uniform(0.2, 0.7), 0.9};
      r.spatial_code = geom::spatial_embedding(box, 2.5, cfg.spatial_mode);
      sample.regions.push_back(std::move(r));
    }
    for (int i = 0; i < 3; ++i) {
      audio::AudioEvent ev;
      ev.start = i * 5.0 / 3.0;
      ev.duration = 5.0 / 3.0;
      ev.labels = {i, 90, 91};
      ev.skewness = rng.uniform(-1.0, 1.0);
      for (std::size_t d = 0; d < cfg.audio_feat_dim; ++d) {
        ev.feat_left.push_back(rng.uniform(0.0, 1.0));
        ev.feat_right.push_back(rng.uniform(0.0, 1.0));
      }
      sample.events.push_back(std::move(ev));
    }
    for (int i = 0; i < 8; ++i) sample.tokens.push_back(rng.uniform_index(cfg.vocab));
    sample.answer_id = rng.uniform_index(cfg.answer_table);
    for (int i = 0; i < 5; ++i) sample.grounding[i] = rng.uniform(-0.5, 0.5);

    Rng mask_rng(5150);
    const model::MaskPlan plan = model::sample_mask_plan(
        sample.regions.size(), sample.events.size(), sample.tokens.size(), 0.4,
        mask_rng);

    net.params().zero_grad();
    backward(net.pretrain_loss(sample, plan, 0.2));

    std::vector<std::string> names;
    for (const auto& [name, v] : net.params().items()) names.push_back(name);
    Rng pick(99);
    const double eps = 1e-5;
    for (int k = 0; k < 20; ++k) {
      const std::string& name = names[pick.uniform_index(names.size())];
      auto p = net.params().get(name);
      const std::size_t i = pick.uniform_index(p->value.numel());
      const double saved = p->value.data[i];
      const double g_ad = p->grad.empty() ? 0.0 : p->grad[i];
      p->value.data[i] = saved + eps;
      const double fp = net.pretrain_loss(sample, plan, 0.2)->value.data[0];
      p->value.data[i] = saved - eps;
      const double fm = net.pretrain_loss(sample, plan, 0.2)->value.data[0];
      p->value.data[i] = saved;
      const double g_fd = (fp - fm) / (2.0 * eps);
      end_to_end_max = std::max(
          end_to_end_max, std::abs(g_ad - g_fd) / std::max(1.0, std::abs(g_fd)));
    }
    results["end_to_end_20_params"] = end_to_end_max;
  }

  const bool ok = primitive_max < 1e-4 && end_to_end_max < 1e-3;
  json report{{"preset", preset},
              {"max_primitive_rel_error", primitive_max},
              {"max_end_to_end_rel_error", end_to_end_max},
              {"pass", ok},
              {"checks", results}};
  log << "gradcheck: max primitive rel error " << primitive_max
      << ", end-to-end " << end_to_end_max << (ok ? " [ok]" : " [FAIL]") << "\n";
  if (!out_path.empty()) {
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write report: " + out_path);
    f << report.dump(2) << "\n";
    f.close();
    write_manifest(out_path + ".manifest.json", "gradcheck", 0,
                   json{{"preset", preset}}, {out_path});
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"panoramic audio-visual reasoning toolkit"};
  app.require_subcommand(1);

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate",
                                       "project NFoV points or boxes onto the sphere");
  std::string cal_in, cal_out, cal_manifest;
  double cal_theta = 0.0, cal_phi = 0.0;
  bool cal_degrees = false;
  calibrate->add_option("--in", cal_in)->required();
  calibrate->add_option("--out", cal_out)->required();
  calibrate->add_option("--persp-theta", cal_theta);
  calibrate->add_option("--persp-phi", cal_phi);
  calibrate->add_flag("--degrees", cal_degrees, "interpret angles as degrees");
  calibrate->add_option("--manifest", cal_manifest);

  // nms
  auto* nms = app.add_subcommand("nms", "spherical non-maximum suppression");
  std::string nms_in, nms_out, nms_manifest;
  double nms_tau = 0.65;
  std::size_t nms_keep = 35;
  nms->add_option("--in", nms_in)->required();
  nms->add_option("--out", nms_out)->required();
  nms->add_option("--tau", nms_tau)->envname("AV360_TAU");
  nms->add_option("--max-keep", nms_keep)->envname("AV360_MAX_KEEP");
  nms->add_option("--manifest", nms_manifest);

  // relation
  auto* relation = app.add_subcommand("relation", "classify spatial relations");
  std::string rel_in, rel_out, rel_manifest;
  relation->add_option("--in", rel_in)->required();
  relation->add_option("--out", rel_out)->required();
  relation->add_option("--manifest", rel_manifest);

  // clips
  auto* clips = app.add_subcommand("clips", "extract and filter peak clips");
  std::string clips_audio, clips_frames, clips_out, clips_manifest;
  double clips_len = 5.0, clips_mel = 1.0, clips_skew = 2.0;
  clips->add_option("--audio", clips_audio)->required();
  clips->add_option("--frames", clips_frames);
  clips->add_option("--out", clips_out)->required();
  clips->add_option("--clip-len", clips_len);
  clips->add_option("--mel-dedup-threshold", clips_mel)->envname("AV360_MEL_DEDUP");
  clips->add_option("--skew-threshold", clips_skew)->envname("AV360_SKEW_THRESHOLD");
  clips->add_option("--manifest", clips_manifest);

  // skewness
  auto* skew = app.add_subcommand("skewness", "stereo spatial skewness");
  std::string skew_audio, skew_out, skew_manifest;
  skew->add_option("--audio", skew_audio)->required();
  skew->add_option("--out", skew_out)->required();
  skew->add_option("--manifest", skew_manifest);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::uint64_t gen_seed = 0;
  std::size_t gen_scenes = 100;
  std::string gen_out;
  double gen_clip = 5.0, gen_rate = 8000.0, gen_counter = 0.2, gen_cov = 0.93;
  gen->add_option("--seed", gen_seed)->envname("AV360_SEED");
  gen->add_option("--scenes", gen_scenes);
  gen->add_option("--out", gen_out)->required();
  gen->add_option("--clip-len", gen_clip);
  gen->add_option("--audio-rate", gen_rate);
  gen->add_option("--counterexample-fraction", gen_counter);
  gen->add_option("--coverage", gen_cov);

  // pretrain / finetune
  std::string tr_data, tr_ckpt, tr_out, tr_preset = "desk", tr_config, tr_mode;
  std::uint64_t tr_seed = 0;
  std::optional<std::size_t> tr_epochs, tr_batch, tr_accum;
  std::optional<double> tr_lr;
  auto add_train_opts = [&](CLI::App* cmd, bool needs_ckpt) {
    cmd->add_option("--data", tr_data)->required();
    if (needs_ckpt) cmd->add_option("--ckpt", tr_ckpt)->required();
    cmd->add_option("--out", tr_out)->required();
    cmd->add_option("--preset", tr_preset)
        ->check(CLI::IsMember({"desk", "paper"}))
        ->envname("AV360_PRESET");
    cmd->add_option("--config", tr_config);
    cmd->add_option("--spatial-mode", tr_mode)
        ->check(CLI::IsMember({"quaternion", "cartesian", "spherical", "unit-sphere"}));
    cmd->add_option("--seed", tr_seed)->envname("AV360_SEED");
    cmd->add_option_function<std::size_t>("--epochs",
                                          [&](std::size_t v) { tr_epochs = v; });
    cmd->add_option_function<std::size_t>("--batch",
                                          [&](std::size_t v) { tr_batch = v; });
    cmd->add_option_function<std::size_t>("--accum",
                                          [&](std::size_t v) { tr_accum = v; });
    cmd->add_option_function<double>("--lr", [&](double v) { tr_lr = v; });
  };
  auto* pretrain = app.add_subcommand("pretrain", "masked pretraining");
  add_train_opts(pretrain, false);
  auto* finetune = app.add_subcommand("finetune", "answer/grounding fine-tuning");
  add_train_opts(finetune, true);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate baselines and a checkpoint");
  std::string ev_data, ev_ckpt, ev_report, ev_split = "test", ev_config, ev_mode;
  eval->add_option("--data", ev_data)->required();
  eval->add_option("--ckpt", ev_ckpt);
  eval->add_option("--report", ev_report)->required();
  eval->add_option("--split", ev_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_option("--config", ev_config);
  eval->add_option("--spatial-mode", ev_mode);

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference suite");
  std::string gc_preset = "desk", gc_out;
  gradcheck->add_option("--preset", gc_preset)->check(CLI::IsMember({"desk", "paper"}));
  gradcheck->add_option("--out", gc_out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (calibrate->parsed())
      return cmd_calibrate(cal_in, cal_out, cal_theta, cal_phi, cal_degrees,
                           cal_manifest, out);
    if (nms->parsed()) return cmd_nms(nms_in, nms_out, nms_tau, nms_keep, nms_manifest);
    if (relation->parsed()) return cmd_relation(rel_in, rel_out, rel_manifest);
    if (clips->parsed())
      return cmd_clips(clips_audio, clips_frames, clips_out, clips_len, clips_mel,
                       clips_skew, clips_manifest, out);
    if (skew->parsed()) return cmd_skewness(skew_audio, skew_out, skew_manifest);
    if (gen->parsed())
      return cmd_gen(gen_seed, gen_scenes, gen_out, gen_clip, gen_rate, gen_counter,
                     gen_cov, out);
    if (pretrain->parsed())
      return cmd_train(model::Phase::Pretrain, tr_data, "", tr_out, tr_preset,
                       tr_config, tr_mode, tr_seed, tr_epochs, tr_batch, tr_accum,
                       tr_lr, out);
    if (finetune->parsed())
      return cmd_train(model::Phase::Finetune, tr_data, tr_ckpt, tr_out, tr_preset,
                       tr_config, tr_mode, tr_seed, tr_epochs, tr_batch, tr_accum,
                       tr_lr, out);
    if (eval->parsed())
      return cmd_eval(ev_data, ev_ckpt, ev_report, ev_split, ev_config, ev_mode, out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_preset, gc_out, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace av360::cli
