#include "av360/serialize.hpp"

#include <json.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "av360/rng.hpp"

namespace av360::io {

using nlohmann::json;

namespace {

json box_json(const geom::SphericalBox& b) {
  return json{{"theta", b.theta},
              {"phi", b.phi},
              {"w_theta", b.w_theta},
              {"h_phi", b.h_phi},
              {"confidence", b.confidence}};
}

geom::SphericalBox box_from(const json& j) {
  geom::SphericalBox b;
  b.theta = j.at("theta");
  b.phi = j.at("phi");
  b.w_theta = j.at("w_theta");
  b.h_phi = j.at("h_phi");
  b.confidence = j.value("confidence", 1.0);
  return b;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write file: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open file: " + path);
  return f;
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream f = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": bad record: " + e.what());
    }
  }
}

json event_json(const audio::AudioEvent& ev) {
  return json{{"start", ev.start},
              {"duration", ev.duration},
              {"labels", ev.labels},
              {"skewness", ev.skewness},
              {"feat_left", ev.feat_left},
              {"feat_right", ev.feat_right},
              {"first_frame", ev.first_frame},
              {"frame_count", ev.frame_count}};
}

audio::AudioEvent event_from(const json& j) {
  audio::AudioEvent ev;
  ev.start = j.at("start");
  ev.duration = j.at("duration");
  ev.labels = j.at("labels").get<std::vector<int>>();
  ev.skewness = j.value("skewness", 0.0);
  if (j.contains("feat_left"))
    ev.feat_left = j.at("feat_left").get<std::vector<double>>();
  if (j.contains("feat_right"))
    ev.feat_right = j.at("feat_right").get<std::vector<double>>();
  ev.first_frame = j.value("first_frame", std::size_t{0});
  ev.frame_count = j.value("frame_count", std::size_t{0});
  return ev;
}

json qa_json(const qa::QASample& s) {
  json j{{"question_tokens", s.question_tokens},
         {"question", s.question_text},
         {"answer", s.answer_text},
         {"answer_id", s.answer_id},
         {"type", qa::to_string(s.type)},
         {"scene_seed", s.scene_seed},
         {"template_id", s.template_id},
         {"has_grounding", s.has_grounding}};
  if (s.has_grounding) j["grounding_box"] = box_json(s.grounding_box);
  if (s.obj_target >= 0) j["obj_target"] = s.obj_target;
  if (s.obj_reference >= 0) j["obj_reference"] = s.obj_reference;
  if (!s.relation.empty()) j["relation"] = s.relation;
  return j;
}

qa::QASample qa_from(const json& j) {
  qa::QASample s;
  s.question_tokens = j.at("question_tokens").get<std::vector<std::size_t>>();
  s.question_text = j.at("question");
  s.answer_text = j.at("answer");
  s.answer_id = j.at("answer_id");
  s.type = j.at("type") == "SS" ? qa::TaskType::SS : qa::TaskType::AV;
  s.scene_seed = j.at("scene_seed");
  s.template_id = j.at("template_id");
  s.has_grounding = j.at("has_grounding");
  if (s.has_grounding) s.grounding_box = box_from(j.at("grounding_box"));
  s.obj_target = j.value("obj_target", -1);
  s.obj_reference = j.value("obj_reference", -1);
  s.relation = j.value("relation", "");
  return s;
}

json scene_json(const qa::Scene& sc) {
  json objects = json::array();
  for (const qa::SceneObject& o : sc.objects)
    objects.push_back(json{{"category", o.category},
                           {"color", o.color},
                           {"box", box_json(o.box)},
                           {"sounding", o.sounding},
                           {"sound", o.sound},
                           {"loudness", o.loudness},
                           {"sound_start", o.sound_start},
                           {"sound_duration", o.sound_duration}});
  json events = json::array();
  for (const audio::AudioEvent& ev : sc.events) events.push_back(event_json(ev));
  return json{{"seed", sc.seed},
              {"clip_len", sc.clip_len},
              {"objects", std::move(objects)},
              {"events", std::move(events)},
              {"region_features", sc.region_features},
              {"event_object", sc.event_object}};
}

qa::Scene scene_from(const json& j) {
  qa::Scene sc;
  sc.seed = j.at("seed");
  sc.clip_len = j.at("clip_len");
  for (const json& jo : j.at("objects")) {
    qa::SceneObject o;
    o.category = jo.at("category");
    o.color = jo.at("color");
    o.box = box_from(jo.at("box"));
    o.sounding = jo.at("sounding");
    o.sound = jo.at("sound");
    o.loudness = jo.at("loudness");
    o.sound_start = jo.value("sound_start", 0.0);
    o.sound_duration = jo.value("sound_duration", 0.0);
    sc.objects.push_back(o);
  }
  for (const json& je : j.at("events")) sc.events.push_back(event_from(je));
  sc.region_features =
      j.at("region_features").get<std::vector<std::vector<double>>>();
  sc.event_object = j.at("event_object").get<std::vector<int>>();
  return sc;
}

}  // namespace

std::string box_to_json(const geom::SphericalBox& box) {
  return box_json(box).dump();
}

geom::SphericalBox box_from_json(const std::string& text) {
  return box_from(json::parse(text));
}

std::vector<geom::SphericalBox> read_boxes_jsonl(const std::string& path) {
  std::vector<geom::SphericalBox> out;
  for_each_jsonl(path, [&](const json& j) { out.push_back(box_from(j)); });
  return out;
}

void write_boxes_jsonl(const std::string& path,
                       const std::vector<geom::SphericalBox>& boxes) {
  std::ofstream f = open_out(path);
  for (const auto& b : boxes) f << box_json(b).dump() << "\n";
}

void write_clips_jsonl(const std::string& path,
                       const std::vector<media::ClipInterval>& clips) {
  std::ofstream f = open_out(path);
  for (const auto& c : clips)
    f << json{{"start", c.start}, {"duration", c.duration}}.dump() << "\n";
}

std::vector<media::ClipInterval> read_clips_jsonl(const std::string& path) {
  std::vector<media::ClipInterval> out;
  for_each_jsonl(path, [&](const json& j) {
    out.push_back({j.at("start"), j.at("duration")});
  });
  return out;
}

void write_events_jsonl(const std::string& path,
                        const std::vector<audio::AudioEvent>& events) {
  std::ofstream f = open_out(path);
  for (const auto& ev : events) f << event_json(ev).dump() << "\n";
}

std::vector<audio::AudioEvent> read_events_jsonl(const std::string& path) {
  std::vector<audio::AudioEvent> out;
  for_each_jsonl(path, [&](const json& j) { out.push_back(event_from(j)); });
  return out;
}

void write_f32mat(const std::string& path,
                  const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows[0].size();
  for (const auto& row : rows)
    if (row.size() != c) throw std::invalid_argument("write_f32mat: ragged rows");

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write matrix file: " + path);
  auto put_u32 = [&](std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                 static_cast<char>((v >> 16) & 0xFF),
                 static_cast<char>((v >> 24) & 0xFF)};
    f.write(b, 4);
  };
  f.write("F32M", 4);
  put_u32(2);  // ndim
  put_u32(static_cast<std::uint32_t>(r));
  put_u32(static_cast<std::uint32_t>(c));
  for (const auto& row : rows)
    for (double d : row) {
      const float v = static_cast<float>(d);
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(u);
    }
}

std::vector<std::vector<double>> read_f32mat(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open matrix file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "F32M", 4) != 0)
    throw std::runtime_error("not an F32M matrix file: " + path);
  auto get_u32 = [&]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    if (f.gcount() != 4) throw std::runtime_error("truncated matrix file: " + path);
    return static_cast<std::uint32_t>(b[0]) | (b[1] << 8) | (b[2] << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
  };
  if (get_u32() != 2) throw std::runtime_error("only 2-D matrices supported: " + path);
  const std::uint32_t r = get_u32(), c = get_u32();
  std::vector<std::vector<double>> rows(r, std::vector<double>(c));
  for (auto& row : rows)
    for (double& d : row) {
      const std::uint32_t u = get_u32();
      float v;
      std::memcpy(&v, &u, 4);
      d = static_cast<double>(v);
    }
  return rows;
}

void save_dataset(const qa::Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f = open_out(dir + "/scenes.jsonl");
    for (const qa::Scene& sc : data.scenes) f << scene_json(sc).dump() << "\n";
  }
  const std::pair<const char*, const std::vector<qa::QASample>*> splits[] = {
      {"qa_train.jsonl", &data.train},
      {"qa_val.jsonl", &data.val},
      {"qa_test.jsonl", &data.test}};
  for (const auto& [name, samples] : splits) {
    std::ofstream f = open_out(dir + "/" + name);
    for (const qa::QASample& s : *samples) f << qa_json(s).dump() << "\n";
  }
  {
    std::ofstream f = open_out(dir + "/answers.json");
    f << json{{"answers", data.answers.answers}}.dump(2) << "\n";
  }
  {
    std::ofstream f = open_out(dir + "/vocab.json");
    f << json{{"words", data.vocab.words}}.dump(2) << "\n";
  }
  {
    std::ofstream f = open_out(dir + "/params.json");
    f << json{{"num_scenes", data.params.num_scenes},
              {"seed", data.params.seed},
              {"clip_len", data.params.scene.clip_len},
              {"audio_rate", data.params.scene.audio_rate},
              {"counterexample_fraction", data.params.counterexample_fraction},
              {"answer_coverage", data.params.answer_coverage}}
             .dump(2)
      << "\n";
  }
}

qa::Dataset load_dataset(const std::string& dir) {
  qa::Dataset data;
  data.lexicon = qa::Lexicon::standard();
  for_each_jsonl(dir + "/scenes.jsonl",
                 [&](const json& j) { data.scenes.push_back(scene_from(j)); });
  for_each_jsonl(dir + "/qa_train.jsonl",
                 [&](const json& j) { data.train.push_back(qa_from(j)); });
  for_each_jsonl(dir + "/qa_val.jsonl",
                 [&](const json& j) { data.val.push_back(qa_from(j)); });
  for_each_jsonl(dir + "/qa_test.jsonl",
                 [&](const json& j) { data.test.push_back(qa_from(j)); });
  {
    std::ifstream f = open_in(dir + "/answers.json");
    json j = json::parse(f);
    data.answers.answers = j.at("answers").get<std::vector<std::string>>();
    for (std::size_t i = 0; i + 1 < data.answers.answers.size(); ++i)
      data.answers.index.emplace(data.answers.answers[i], i);
  }
  {
    std::ifstream f = open_in(dir + "/vocab.json");
    json j = json::parse(f);
    data.vocab.words = j.at("words").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < data.vocab.words.size(); ++i)
      data.vocab.index.emplace(data.vocab.words[i], i);
  }
  {
    std::ifstream f = open_in(dir + "/params.json");
    json j = json::parse(f);
    data.params.num_scenes = j.at("num_scenes");
    data.params.seed = j.at("seed");
    data.params.scene.clip_len = j.at("clip_len");
    data.params.scene.audio_rate = j.at("audio_rate");
    data.params.counterexample_fraction = j.at("counterexample_fraction");
    data.params.answer_coverage = j.at("answer_coverage");
  }
  return data;
}

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file for digest: " + path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  char buf[1 << 16];
  while (f) {
    f.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001B3ull;
    }
  }
  std::ostringstream ss;
  ss << std::hex;
  for (int i = 15; i >= 0; --i) ss << ((h >> (i * 4)) & 0xF);
  return ss.str();
}

}  // namespace av360::io
