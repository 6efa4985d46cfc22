#include "av360/nn.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace av360::nn {

using nlohmann::json;

void quantize_f32(Tensor& t) {
  for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
}

Tensor trunc_normal_init(std::size_t rows, std::size_t cols, double std_dev,
                         Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.truncated_normal(std_dev);
  return t;
}

Var ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name))
    throw std::invalid_argument("parameter already registered: " + name);
  quantize_f32(init);
  Var v = ad::make_leaf(std::move(init), true);
  params_.emplace(name, v);
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : params_) {
    v->grad.assign(v->value.numel(), 0.0);
    v->backward_done = false;
  }
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v->value.numel();
  return n;
}

EncoderLayerParams make_encoder_layer(ParamStore& store, const std::string& prefix,
                                      std::size_t d, Rng& rng) {
  constexpr double kStd = 0.02;
  auto w = [&](const std::string& suffix, std::size_t r, std::size_t c) {
    return store.add(prefix + suffix, trunc_normal_init(r, c, kStd, rng));
  };
  auto b = [&](const std::string& suffix, std::size_t n, double fill = 0.0) {
    return store.add(prefix + suffix, Tensor(1, n, fill));
  };
  EncoderLayerParams p;
  p.wq = w(".wq", d, d);
  p.bq = b(".bq", d);
  p.wk = w(".wk", d, d);
  p.bk = b(".bk", d);
  p.wv = w(".wv", d, d);
  p.bv = b(".bv", d);
  p.wo = w(".wo", d, d);
  p.bo = b(".bo", d);
  p.ln1_g = b(".ln1.g", d, 1.0);
  p.ln1_b = b(".ln1.b", d);
  p.ff_w1 = w(".ff.w1", d, 4 * d);
  p.ff_b1 = b(".ff.b1", 4 * d);
  p.ff_w2 = w(".ff.w2", 4 * d, d);
  p.ff_b2 = b(".ff.b2", d);
  p.ln2_g = b(".ln2.g", d, 1.0);
  p.ln2_b = b(".ln2.b", d);
  return p;
}

Var encoder_layer(const Var& query_src, const Var& kv_src,
                  const EncoderLayerParams& p, std::size_t heads,
                  double dropout_p, Rng& rng) {
  const std::size_t d = query_src->value.cols();
  if (kv_src->value.cols() != d)
    throw std::invalid_argument("encoder_layer: query/context width mismatch");
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("encoder_layer: width not divisible by heads");
  const std::size_t dh = d / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  using namespace ad;
  Var q = add_rowvec(matmul(query_src, p.wq), p.bq);
  Var k = add_rowvec(matmul(kv_src, p.wk), p.bk);
  Var v = add_rowvec(matmul(kv_src, p.wv), p.bv);

  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = slice_cols(v, h * dh, (h + 1) * dh);
    Var att = softmax(scale(matmul(qh, transpose(kh)), att_scale));
    head_outs.push_back(matmul(att, vh));
  }
  Var attn = add_rowvec(matmul(concat_cols(head_outs), p.wo), p.bo);
  attn = dropout(attn, dropout_p, rng);
  Var x1 = layer_norm(add(query_src, attn), p.ln1_g, p.ln1_b);

  Var ff = add_rowvec(matmul(gelu(add_rowvec(matmul(x1, p.ff_w1), p.ff_b1)), p.ff_w2),
                      p.ff_b2);
  ff = dropout(ff, dropout_p, rng);
  return layer_norm(add(x1, ff), p.ln2_g, p.ln2_b);
}

MlpParams make_mlp(ParamStore& store, const std::string& prefix,
                   const std::vector<std::size_t>& dims, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least 2 dims");
  constexpr double kStd = 0.02;
  MlpParams p;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    p.weights.push_back(store.add(prefix + ".w" + std::to_string(i),
                                  trunc_normal_init(dims[i], dims[i + 1], kStd, rng)));
    p.biases.push_back(
        store.add(prefix + ".b" + std::to_string(i), Tensor(1, dims[i + 1])));
  }
  return p;
}

Var mlp_forward(const Var& x, const MlpParams& p) {
  using namespace ad;
  Var h = x;
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    h = add_rowvec(matmul(h, p.weights[i]), p.biases[i]);
    if (i + 1 < p.weights.size()) h = gelu(h);
  }
  return h;
}

void AdamW::step(ParamStore& params, double lr) {
  // validate first so a rejected step leaves everything untouched
  for (const auto& [name, v] : params.items()) {
    for (double g : v->grad)
      if (std::isnan(g))
        throw std::runtime_error("NaN gradient in parameter " + name +
                                 "; step rejected");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));

  for (auto& [name, v] : params.items()) {
    const std::size_t n = v->value.numel();
    Moments& mo = moments_[name];
    if (mo.m.size() != n) {
      mo.m.assign(n, 0.0);
      mo.v.assign(n, 0.0);
    }
    const bool has_grad = v->grad.size() == n;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = has_grad ? v->grad[i] : 0.0;
      mo.m[i] = beta1 * mo.m[i] + (1.0 - beta1) * g;
      mo.v[i] = beta2 * mo.v[i] + (1.0 - beta2) * g * g;
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      double p = v->value.data[i];
      p -= lr * weight_decay_ * p;  // decoupled decay
      p -= lr * mhat / (std::sqrt(vhat) + eps);
      v->value.data[i] = static_cast<double>(static_cast<float>(p));
    }
  }
}

void AdamW::reset() {
  moments_.clear();
  t_ = 0;
}

double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr,
                   double warmup) {
  if (total_steps == 0) return 0.0;
  const double s = static_cast<double>(step);
  const double t = static_cast<double>(total_steps);
  const double w = warmup * t;
  if (s <= w) return w > 0.0 ? base_lr * s / w : base_lr;
  return base_lr * (t - s) / (t - w);
}

void save_checkpoint(const ParamStore& params, const std::string& prefix) {
  json manifest;
  manifest["format"] = "av360-checkpoint";
  manifest["dtype"] = "float32";
  json entries = json::object();

  std::string payload;
  std::size_t offset = 0;
  for (const auto& [name, v] : params.items()) {
    entries[name] = {{"shape", v->value.shape}, {"offset", offset},
                     {"count", v->value.numel()}};
    for (double d : v->value.data) {
      const float f = static_cast<float>(d);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      payload.push_back(static_cast<char>(u & 0xFF));
      payload.push_back(static_cast<char>((u >> 8) & 0xFF));
      payload.push_back(static_cast<char>((u >> 16) & 0xFF));
      payload.push_back(static_cast<char>((u >> 24) & 0xFF));
    }
    offset += v->value.numel();
  }
  manifest["params"] = std::move(entries);

  std::ofstream mf(prefix + ".json", std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write checkpoint manifest: " + prefix);
  mf << manifest.dump(2) << "\n";
  std::ofstream bf(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!bf) throw std::runtime_error("cannot write checkpoint payload: " + prefix);
  bf.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

void load_checkpoint(ParamStore& params, const std::string& prefix) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("cannot open checkpoint manifest: " + prefix);
  json manifest = json::parse(mf);
  if (manifest.value("dtype", "") != "float32")
    throw std::runtime_error("unsupported checkpoint dtype in " + prefix);

  std::ifstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open checkpoint payload: " + prefix);
  std::string payload((std::istreambuf_iterator<char>(bf)),
                      std::istreambuf_iterator<char>());

  for (const auto& [name, entry] : manifest.at("params").items()) {
    const std::vector<std::size_t> shape = entry.at("shape");
    const std::size_t offset = entry.at("offset");
    const std::size_t count = entry.at("count");
    if ((offset + count) * 4 > payload.size())
      throw std::runtime_error("checkpoint payload truncated: " + prefix);

    Tensor t;
    t.shape = shape;
    t.data.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto* p =
          reinterpret_cast<const unsigned char*>(payload.data() + (offset + i) * 4);
      std::uint32_t u = p[0] | (p[1] << 8) | (p[2] << 16) |
                        (static_cast<std::uint32_t>(p[3]) << 24);
      float f;
      std::memcpy(&f, &u, 4);
      t.data[i] = static_cast<double>(f);
    }

    if (params.contains(name)) {
      Var v = params.get(name);
      if (v->value.shape != t.shape)
        throw std::runtime_error("checkpoint shape mismatch for " + name);
      v->value = std::move(t);
    } else {
      params.add(name, std::move(t));
    }
  }
}

}  // namespace av360::nn
