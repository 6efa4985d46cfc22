#include "av360/qa.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace av360::qa {

namespace {

constexpr int kFillerLabelA = 100;  // steady background tags so every frame
constexpr int kFillerLabelB = 101;  // carries exactly three distinct labels

std::string object_phrase(const Lexicon& lex, const SceneObject& obj) {
  return lex.colors.at(obj.color) + " " + lex.categories.at(obj.category);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

}  // namespace

Lexicon Lexicon::standard() {
  Lexicon lex;
  lex.categories = {"dog", "car", "guitar", "phone", "fan", "bird", "drum", "clock"};
  lex.colors = {"red", "blue", "green", "yellow", "black", "white"};
  lex.sounds = {"barking", "honking", "strumming", "ringing",  "humming",
                "chirping", "drumming", "ticking", "whistling", "buzzing"};
  return lex;
}

Vocabulary Vocabulary::build(const Lexicon& lex) {
  Vocabulary v;
  std::vector<std::string> words = {
      "<unk>", "where", "is",   "the",  "in",       "relation", "to",
      "what",  "who",   "making", "which", "sound",  "none",     "above",
      "below", "left",  "right", "next", "opposite", "of"};
  for (const auto& w : lex.categories) words.push_back(w);
  for (const auto& w : lex.colors) words.push_back(w);
  for (const auto& w : lex.sounds) words.push_back(w);
  for (const auto& w : words) {
    if (v.index.count(w)) continue;
    v.index.emplace(w, v.words.size());
    v.words.push_back(w);
  }
  return v;
}

std::size_t Vocabulary::id(const std::string& word) const {
  auto it = index.find(word);
  return it == index.end() ? 0 : it->second;
}

std::vector<std::size_t> Vocabulary::tokenize(const std::string& text) const {
  std::vector<std::size_t> ids;
  std::istringstream ss(text);
  std::string w;
  while (ss >> w) ids.push_back(id(w));
  return ids;
}

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  const Lexicon lex = Lexicon::standard();
  Rng rng(derive_seed(seed, "scene"));

  Scene sc;
  sc.seed = seed;
  sc.clip_len = params.clip_len;

  const std::size_t n =
      params.min_objects +
      rng.uniform_index(params.max_objects - params.min_objects + 1);

  std::set<std::pair<int, int>> used;
  for (std::size_t i = 0; i < n; ++i) {
    SceneObject obj;
    do {
      obj.category = static_cast<int>(rng.uniform_index(lex.categories.size()));
      obj.color = static_cast<int>(rng.uniform_index(lex.colors.size()));
    } while (!used.insert({obj.category, obj.color}).second);

    obj.box.theta = geom::wrap_pi(rng.uniform(-geom::kPi, geom::kPi));
    obj.box.phi = std::asin(rng.uniform(-1.0, 1.0));  // density ~ cos(phi)
    obj.box.w_theta = rng.uniform(0.25, 1.2);
    obj.box.h_phi = rng.uniform(0.2, 0.8);
    obj.box.confidence = rng.uniform(0.5, 1.0);
    obj.sounding = rng.bernoulli(params.sounding_prob);
    obj.loudness = rng.uniform(0.4, 1.0);
    sc.objects.push_back(obj);
  }
  if (std::none_of(sc.objects.begin(), sc.objects.end(),
                   [](const SceneObject& o) { return o.sounding; }))
    sc.objects[0].sounding = true;

  // distinct sound categories per scene
  std::vector<std::size_t> sound_ids(lex.sounds.size());
  for (std::size_t i = 0; i < sound_ids.size(); ++i) sound_ids[i] = i;
  shuffle(sound_ids, rng);
  std::vector<std::size_t> sounding;
  for (std::size_t i = 0; i < sc.objects.size(); ++i)
    if (sc.objects[i].sounding) sounding.push_back(i);
  for (std::size_t k = 0; k < sounding.size(); ++k)
    sc.objects[sounding[k]].sound = static_cast<int>(sound_ids[k]);

  // sound slots aligned to the label frame grid
  const std::size_t nframes =
      static_cast<std::size_t>(std::lround(params.clip_len / params.label_hop));
  const std::size_t m = sounding.size();
  std::vector<std::size_t> slot_first(m), slot_frames(m);
  {
    const std::size_t q = nframes / m;
    std::size_t at = 0;
    for (std::size_t k = 0; k < m; ++k) {
      slot_first[k] = at;
      slot_frames[k] = k + 1 == m ? nframes - at : q;
      at += slot_frames[k];
      SceneObject& obj = sc.objects[sounding[k]];
      obj.sound_start = slot_first[k] * params.label_hop;
      obj.sound_duration = slot_frames[k] * params.label_hop;
    }
  }

  // stereo synthesis: each sounding object contributes a panned tone over
  // its slot; pan follows sin(theta), so left dominates east of the seam
  const std::size_t nsamp =
      static_cast<std::size_t>(std::lround(params.clip_len * params.audio_rate));
  std::vector<double> left(nsamp, 0.0), right(nsamp, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const SceneObject& obj = sc.objects[sounding[k]];
    const double pan = std::sin(obj.box.theta);
    const double gl = (1.0 + pan) / 2.0, gr = (1.0 - pan) / 2.0;
    const double freq = 180.0 + 60.0 * (obj.sound + 1);
    const std::size_t s0 =
        static_cast<std::size_t>(std::lround(obj.sound_start * params.audio_rate));
    const std::size_t s1 = static_cast<std::size_t>(
        std::lround((obj.sound_start + obj.sound_duration) * params.audio_rate));
    for (std::size_t s = s0; s < std::min(s1, nsamp); ++s) {
      const double tone =
          obj.loudness *
          std::sin(2.0 * geom::kPi * freq * static_cast<double>(s) / params.audio_rate);
      left[s] += gl * tone;
      right[s] += gr * tone;
    }
  }
  for (std::size_t s = 0; s < nsamp; ++s) {
    const double noise = 0.002 * (rng.uniform() - 0.5);
    left[s] += noise;
    right[s] += noise;
  }

  // frame labels and per-channel frame features
  audio::FrameLabels labels;
  labels.hop = params.label_hop;
  labels.k = 3;
  labels.topk.resize(nframes);
  const std::size_t feat_dim = lex.sounds.size() + 1 + params.noise_dim;
  std::vector<std::vector<double>> feats_l(nframes), feats_r(nframes);
  for (std::size_t f = 0; f < nframes; ++f) {
    std::size_t active = m - 1;
    for (std::size_t k = 0; k < m; ++k)
      if (f >= slot_first[k] && f < slot_first[k] + slot_frames[k]) {
        active = k;
        break;
      }
    const SceneObject& obj = sc.objects[sounding[active]];
    labels.topk[f] = {obj.sound, kFillerLabelA, kFillerLabelB};

    const double pan = std::sin(obj.box.theta);
    const double gl = (1.0 + pan) / 2.0, gr = (1.0 - pan) / 2.0;
    std::vector<double> fl(feat_dim, 0.0), fr(feat_dim, 0.0);
    fl[obj.sound] = obj.loudness * gl;
    fr[obj.sound] = obj.loudness * gr;
    fl[lex.sounds.size()] = obj.loudness * gl;
    fr[lex.sounds.size()] = obj.loudness * gr;
    for (std::size_t d = 0; d < params.noise_dim; ++d) {
      fl[lex.sounds.size() + 1 + d] = params.noise_scale * (rng.uniform() - 0.5);
      fr[lex.sounds.size() + 1 + d] = params.noise_scale * (rng.uniform() - 0.5);
    }
    feats_l[f] = std::move(fl);
    feats_r[f] = std::move(fr);
  }

  sc.events = audio::segment_events(labels);
  audio::pool_event_features(feats_l, feats_r, sc.events);
  for (audio::AudioEvent& ev : sc.events) {
    const std::size_t s0 =
        static_cast<std::size_t>(std::lround(ev.start * params.audio_rate));
    const std::size_t s1 = std::min(
        nsamp, static_cast<std::size_t>(
                   std::lround((ev.start + ev.duration) * params.audio_rate)));
    const std::span<const double> l(left.data() + s0, s1 - s0);
    const std::span<const double> r(right.data() + s0, s1 - s0);
    ev.skewness = audio::normalize_skewness(audio::sh_skewness(l, r));

    int owner = -1;
    for (std::size_t k = 0; k < m; ++k)
      if (ev.first_frame >= slot_first[k] &&
          ev.first_frame < slot_first[k] + slot_frames[k]) {
        owner = static_cast<int>(sounding[k]);
        break;
      }
    sc.event_object.push_back(owner);
  }

  // region features: category one-hot, color one-hot, seeded noise
  for (const SceneObject& obj : sc.objects) {
    std::vector<double> f(lex.categories.size() + lex.colors.size() + params.noise_dim,
                          0.0);
    f[obj.category] = 1.0;
    f[lex.categories.size() + obj.color] = 1.0;
    for (std::size_t d = 0; d < params.noise_dim; ++d)
      f[lex.categories.size() + lex.colors.size() + d] =
          params.noise_scale * (rng.uniform() - 0.5);
    sc.region_features.push_back(std::move(f));
  }
  return sc;
}

const char* to_string(TaskType t) { return t == TaskType::SS ? "SS" : "AV"; }

std::vector<QASample> generate_spatial_qa(const Scene& scene, const Vocabulary& vocab,
                                          const Lexicon& lex, const QagParams& params) {
  if (scene.objects.size() < 2)
    throw std::invalid_argument("spatial QA needs at least two objects");
  Rng rng(derive_seed(scene.seed, "ss"));

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    for (std::size_t j = 0; j < scene.objects.size(); ++j)
      if (i != j) pairs.emplace_back(i, j);
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order, rng);

  std::vector<QASample> out;
  for (std::size_t oi = 0; oi < order.size() && out.size() < params.spatial_pairs;
       ++oi) {
    const auto [target, ref] = pairs[order[oi]];
    const SceneObject& a = scene.objects[target];
    const SceneObject& b = scene.objects[ref];
    geom::SpatialRelation rel;
    try {
      rel = geom::classify_relation(b.box, a.box, params.thresholds);
    } catch (const std::invalid_argument&) {
      continue;  // coincident centers
    }

    QASample s;
    s.type = TaskType::SS;
    s.scene_seed = scene.seed;
    s.obj_target = static_cast<int>(target);
    s.obj_reference = static_cast<int>(ref);
    s.relation = geom::to_string(rel);
    s.grounding_box = a.box;
    s.has_grounding = true;
    if (rng.uniform() < params.attribute_fraction) {
      s.template_id = 2;
      s.question_text =
          "what is " + s.relation + " the " + object_phrase(lex, b);
      s.answer_text = object_phrase(lex, a);
    } else {
      s.template_id = 1;
      s.question_text = "where is the " + object_phrase(lex, a) +
                        " in relation to the " + object_phrase(lex, b);
      s.answer_text = s.relation;
    }
    s.question_tokens = vocab.tokenize(s.question_text);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<QASample> generate_av_qa(const Scene& scene, const Vocabulary& vocab,
                                     const Lexicon& lex, const QagParams& params) {
  std::vector<std::size_t> sounding, silent;
  for (std::size_t i = 0; i < scene.objects.size(); ++i)
    (scene.objects[i].sounding ? sounding : silent).push_back(i);
  if (sounding.empty())
    throw std::invalid_argument("AV QA needs at least one sounding object");
  Rng rng(derive_seed(scene.seed, "av"));

  std::vector<QASample> out;
  for (std::size_t k = 0; k < params.av_per_scene; ++k) {
    QASample s;
    s.type = TaskType::AV;
    s.scene_seed = scene.seed;
    if (!silent.empty() && rng.uniform() < params.non_sounding_fraction) {
      // within-scene counterexample: a silent object queried for its sound
      const SceneObject& obj = scene.objects[silent[rng.uniform_index(silent.size())]];
      s.template_id = 4;
      s.question_text = "which sound is the " + object_phrase(lex, obj) + " making";
      s.answer_text = "none";
      s.grounding_box = obj.box;
      s.has_grounding = true;
    } else {
      const std::size_t oi = sounding[rng.uniform_index(sounding.size())];
      const SceneObject& obj = scene.objects[oi];
      s.obj_target = static_cast<int>(oi);
      s.grounding_box = obj.box;
      s.has_grounding = true;
      if (rng.bernoulli(0.5)) {
        s.template_id = 3;
        s.question_text = "who is making the " + lex.sounds.at(obj.sound);
        s.answer_text = object_phrase(lex, obj);
      } else {
        s.template_id = 4;
        s.question_text = "which sound is the " + object_phrase(lex, obj) + " making";
        s.answer_text = lex.sounds.at(obj.sound);
      }
    }
    s.question_tokens = vocab.tokenize(s.question_text);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<QASample> augment_counterexamples(std::vector<QASample> samples,
                                              const std::vector<Scene>& scenes,
                                              const Vocabulary& vocab,
                                              const Lexicon& lex, double fraction,
                                              std::uint64_t seed) {
  if (fraction <= 0.0 || scenes.empty()) return samples;
  Rng rng(derive_seed(seed, "counterex"));
  const std::size_t n_add = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(samples.size())));

  for (std::size_t k = 0; k < n_add; ++k) {
    const Scene& scene = scenes[rng.uniform_index(scenes.size())];
    std::set<int> present_sounds;
    std::set<std::pair<int, int>> present_objects;
    for (const SceneObject& o : scene.objects) {
      if (o.sounding) present_sounds.insert(o.sound);
      present_objects.insert({o.category, o.color});
    }

    QASample s;
    s.type = TaskType::AV;
    s.scene_seed = scene.seed;
    s.answer_text = "none";
    s.has_grounding = false;
    if (rng.bernoulli(0.5)) {
      std::vector<int> absent;
      for (int i = 0; i < static_cast<int>(lex.sounds.size()); ++i)
        if (!present_sounds.count(i)) absent.push_back(i);
      const int sound = absent.at(rng.uniform_index(absent.size()));
      s.template_id = 3;
      s.question_text = "who is making the " + lex.sounds.at(sound);
    } else {
      int cat, col;
      do {
        cat = static_cast<int>(rng.uniform_index(lex.categories.size()));
        col = static_cast<int>(rng.uniform_index(lex.colors.size()));
      } while (present_objects.count({cat, col}));
      s.template_id = 4;
      s.question_text = "which sound is the " + lex.colors.at(col) + " " +
                        lex.categories.at(cat) + " making";
    }
    s.question_tokens = vocab.tokenize(s.question_text);
    samples.push_back(std::move(s));
  }
  return samples;
}

AnswerTable AnswerTable::build(const std::vector<QASample>& train, double coverage) {
  if (train.empty()) throw std::invalid_argument("answer table needs train samples");
  std::map<std::string, std::size_t> freq;
  for (const QASample& s : train) ++freq[s.answer_text];

  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  AnswerTable table;
  const double total = static_cast<double>(train.size());
  double covered = 0.0;
  for (const auto& [answer, count] : ranked) {
    if (covered >= coverage * total && !table.answers.empty()) break;
    table.index.emplace(answer, table.answers.size());
    table.answers.push_back(answer);
    covered += static_cast<double>(count);
  }
  table.answers.push_back("<unk>");
  return table;
}

std::size_t AnswerTable::id(const std::string& answer) const {
  auto it = index.find(answer);
  return it == index.end() ? unk_id() : it->second;
}

const Scene* Dataset::scene_by_seed(std::uint64_t seed) const {
  auto it = std::lower_bound(
      scenes.begin(), scenes.end(), seed,
      [](const Scene& s, std::uint64_t v) { return s.seed < v; });
  if (it == scenes.end() || it->seed != seed) return nullptr;
  return &*it;
}

Dataset generate_dataset(const DatasetParams& params) {
  Dataset data;
  data.params = params;
  data.lexicon = Lexicon::standard();
  data.vocab = Vocabulary::build(data.lexicon);

  for (std::size_t i = 0; i < params.num_scenes; ++i) {
    const std::uint64_t scene_seed =
        derive_seed(params.seed, "scene." + std::to_string(i));
    data.scenes.push_back(generate_scene(scene_seed, params.scene));
  }
  std::sort(data.scenes.begin(), data.scenes.end(),
            [](const Scene& a, const Scene& b) { return a.seed < b.seed; });

  std::vector<Scene> train_scenes, val_scenes, test_scenes;
  for (const Scene& sc : data.scenes) {
    const std::uint64_t bucket = derive_seed(sc.seed, "split") % 100;
    auto& split = bucket < 80 ? data.train : bucket < 87 ? data.val : data.test;
    auto& split_scenes =
        bucket < 80 ? train_scenes : bucket < 87 ? val_scenes : test_scenes;
    split_scenes.push_back(sc);
    for (auto& s : generate_spatial_qa(sc, data.vocab, data.lexicon, params.qag))
      split.push_back(std::move(s));
    for (auto& s : generate_av_qa(sc, data.vocab, data.lexicon, params.qag))
      split.push_back(std::move(s));
  }

  data.train = augment_counterexamples(std::move(data.train), train_scenes,
                                       data.vocab, data.lexicon,
                                       params.counterexample_fraction,
                                       derive_seed(params.seed, "augment.train"));
  data.val = augment_counterexamples(std::move(data.val), val_scenes, data.vocab,
                                     data.lexicon, params.counterexample_fraction,
                                     derive_seed(params.seed, "augment.val"));
  data.test = augment_counterexamples(std::move(data.test), test_scenes, data.vocab,
                                      data.lexicon, params.counterexample_fraction,
                                      derive_seed(params.seed, "augment.test"));

  data.answers = AnswerTable::build(data.train, params.answer_coverage);
  for (auto* split : {&data.train, &data.val, &data.test})
    for (QASample& s : *split) s.answer_id = data.answers.id(s.answer_text);
  return data;
}

model::ModelSample to_model_sample(const Scene& scene, const QASample& sample,
                                   geom::SpatialMode mode) {
  model::ModelSample ms;
  ms.clip_len = scene.clip_len;
  const double t_center = scene.clip_len / 2.0;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    model::VisualRegion r;
    r.feature = scene.region_features.at(i);
    r.spatial_code = geom::spatial_embedding(scene.objects[i].box, t_center, mode);
    ms.regions.push_back(std::move(r));
  }
  ms.events = scene.events;
  ms.tokens = sample.question_tokens;
  ms.answer_id = sample.answer_id;
  if (sample.has_grounding)
    ms.grounding = geom::grounding_target(sample.grounding_box, mode);
  else
    ms.grounding = {0.0, 0.0, 0.0, 0.0, 0.0};
  return ms;
}

EvalMetrics evaluate(const Predictor& predictor, const std::vector<QASample>& samples,
                     const AnswerTable& table, const Dataset& data,
                     geom::SpatialMode mode) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
  (void)data;
  EvalMetrics m;
  std::size_t correct = 0, correct_ss = 0, correct_av = 0;
  double mse_sum = 0.0;
  std::size_t mse_count = 0;

  for (const QASample& s : samples) {
    const PredictorOutput pred = predictor(s);
    const bool ok = pred.answer_id == s.answer_id && s.answer_id != table.unk_id();
    ++m.count;
    correct += ok;
    if (s.type == TaskType::SS) {
      ++m.count_ss;
      correct_ss += ok;
    } else {
      ++m.count_av;
      correct_av += ok;
    }
    if (pred.grounding && s.has_grounding) {
      const std::array<double, 5> target = geom::grounding_target(s.grounding_box, mode);
      double acc = 0.0;
      for (int i = 0; i < 5; ++i) {
        const double d = (*pred.grounding)[i] - target[i];
        acc += d * d;
      }
      mse_sum += acc / 5.0;
      ++mse_count;
    }
  }
  m.accuracy_all = 100.0 * correct / static_cast<double>(m.count);
  m.accuracy_ss =
      m.count_ss ? 100.0 * correct_ss / static_cast<double>(m.count_ss) : 0.0;
  m.accuracy_av =
      m.count_av ? 100.0 * correct_av / static_cast<double>(m.count_av) : 0.0;
  if (mse_count > 0) m.grounding_mse = mse_sum / static_cast<double>(mse_count);
  return m;
}

Predictor prior_baseline(const std::vector<QASample>& train) {
  if (train.empty()) throw std::invalid_argument("prior baseline needs train samples");
  std::map<std::size_t, std::size_t> counts;
  for (const QASample& s : train) ++counts[s.answer_id];
  std::size_t best = 0, best_count = 0;
  for (const auto& [id, c] : counts)
    if (c > best_count) {
      best = id;
      best_count = c;
    }
  return [best](const QASample&) { return PredictorOutput{best, std::nullopt}; };
}

Predictor qtype_prior_baseline(const std::vector<QASample>& train) {
  if (train.empty())
    throw std::invalid_argument("q-type prior baseline needs train samples");
  std::map<int, std::map<std::size_t, std::size_t>> counts;
  std::map<std::size_t, std::size_t> global;
  for (const QASample& s : train) {
    ++counts[s.template_id][s.answer_id];
    ++global[s.answer_id];
  }
  auto majority = [](const std::map<std::size_t, std::size_t>& c) {
    std::size_t best = 0, best_count = 0;
    for (const auto& [id, n] : c)
      if (n > best_count) {
        best = id;
        best_count = n;
      }
    return best;
  };
  std::map<int, std::size_t> per_template;
  for (const auto& [tid, c] : counts) per_template[tid] = majority(c);
  const std::size_t fallback = majority(global);
  return [per_template, fallback](const QASample& s) {
    auto it = per_template.find(s.template_id);
    return PredictorOutput{it == per_template.end() ? fallback : it->second,
                           std::nullopt};
  };
}

Predictor model_predictor(model::TrimodalTransformer& model, const Dataset& data) {
  return [&model, &data](const QASample& s) {
    const Scene* scene = data.scene_by_seed(s.scene_seed);
    if (scene == nullptr)
      throw std::runtime_error("unknown scene seed in QA sample: " +
                               std::to_string(s.scene_seed));
    const model::ModelSample ms =
        to_model_sample(*scene, s, model.config().spatial_mode);
    const auto pred = model.predict(ms);
    return PredictorOutput{pred.answer_id, pred.grounding};
  };
}

}  // namespace av360::qa
