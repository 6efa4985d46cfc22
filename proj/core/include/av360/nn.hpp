#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "av360/rng.hpp"
#include "av360/tensor.hpp"

namespace av360::nn {

using ad::Tensor;
using ad::Var;

// Rounds every entry to the nearest float32 value. Parameters are kept at
// float32 precision in memory so the float32 checkpoint payload is lossless.
void quantize_f32(Tensor& t);

Tensor trunc_normal_init(std::size_t rows, std::size_t cols, double std_dev,
                         Rng& rng);

// Named leaf parameters. Iteration order is the name order, which keeps
// optimizer sweeps and checkpoints deterministic.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool contains(const std::string& name) const;
  void zero_grad();
  std::size_t total_elements() const;
  const std::map<std::string, Var>& items() const { return params_; }
  std::map<std::string, Var>& items() { return params_; }

 private:
  std::map<std::string, Var> params_;
};

struct EncoderLayerParams {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
  Var ln1_g, ln1_b;
  Var ff_w1, ff_b1, ff_w2, ff_b2;
  Var ln2_g, ln2_b;
};

// Registers one encoder layer's parameters under prefix. Feed-forward hidden
// width is 4*d with GELU activation.
EncoderLayerParams make_encoder_layer(ParamStore& store, const std::string& prefix,
                                      std::size_t d, Rng& rng);

// Multi-head scaled dot-product attention with queries from query_src and
// keys/values from kv_src, followed by residual + layer norm and a two-layer
// feed-forward with residual + layer norm (post-norm ordering).
Var encoder_layer(const Var& query_src, const Var& kv_src,
                  const EncoderLayerParams& p, std::size_t heads,
                  double dropout_p, Rng& rng);

struct MlpParams {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

// dims = {in, hidden..., out}; GELU between layers, none after the last.
MlpParams make_mlp(ParamStore& store, const std::string& prefix,
                   const std::vector<std::size_t>& dims, Rng& rng);
Var mlp_forward(const Var& x, const MlpParams& p);

// Adaptive moment optimizer with decoupled weight decay. step() sweeps the
// store in name order; a NaN gradient anywhere rejects the whole step.
class AdamW {
 public:
  explicit AdamW(double weight_decay = 0.01) : weight_decay_(weight_decay) {}

  void step(ParamStore& params, double lr);
  void reset();

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> moments_;
  std::int64_t t_ = 0;
  double weight_decay_;
};

// Linear warmup over the first warmup fraction of training, then linear
// decay to zero.
double lr_schedule(std::size_t step, std::size_t total_steps, double base_lr,
                   double warmup = 0.1);

// Checkpoint = <prefix>.json manifest + <prefix>.bin float32 little-endian
// payload. Bit-stable across runs given the same seed.
void save_checkpoint(const ParamStore& params, const std::string& prefix);
void load_checkpoint(ParamStore& params, const std::string& prefix);

}  // namespace av360::nn
