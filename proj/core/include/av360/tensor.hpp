#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "av360/rng.hpp"

namespace av360::ad {

// Dense row-major tensor. The engine works on 2-D shapes [rows x cols];
// scalars are [1 x 1] and row vectors [1 x n].
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape{rows, cols}, data(rows * cols, fill) {}

  std::size_t numel() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }
  static Tensor row(const std::vector<double>& v) {
    Tensor t(1, v.size());
    t.data = v;
    return t;
  }
};

class Node;
using Var = std::shared_ptr<Node>;

// One recorded operation (or leaf). backward_fn reads this node's grad and
// accumulates into the inputs' grads.
class Node {
 public:
  Tensor value;
  std::vector<double> grad;  // allocated on demand, numel() entries
  bool requires_grad = false;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;
  bool backward_done = false;

  void ensure_grad() {
    if (grad.size() != value.numel()) grad.assign(value.numel(), 0.0);
  }
};

// Topologically ordered record of the operations reachable from a root;
// every gradient consumer appears after its producer in reverse order.
struct Graph {
  std::vector<Node*> order;
  static Graph record(const Var& root);
};

Var make_leaf(Tensor t, bool requires_grad = true);
Var make_constant(Tensor t);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
// [m x n] + broadcast row [1 x n]
Var add_rowvec(const Var& a, const Var& row);
// scales row i of a by col[i]; col is a plain constant
Var mul_colvec(const Var& a, const std::vector<double>& col);
// col (constant, length m) outer row (Var, [1 x n]) -> [m x n]
Var outer_const(const std::vector<double>& col, const Var& row);
Var gelu(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-12);
// row-wise max-subtracted softmax
Var softmax(const Var& x);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, std::size_t r0, std::size_t r1);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, std::size_t c0, std::size_t c1);
// picks rows of a table; duplicate ids accumulate gradient
Var gather_rows(const Var& table, const std::vector<std::size_t>& ids);
// [m x n] -> [1 x n] column means
Var mean_rows(const Var& a);
// inverted-scaling Bernoulli mask; p = 0 is the identity
Var dropout(const Var& a, double p, Rng& rng);
// mean negative log-softmax at the target indices
Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets);
// mean over elements of 0.5 e^2 (|e| < 1) else |e| - 0.5
Var smooth_l1(const Var& pred, const Var& target);
// weighted sum of scalar Vars
Var weighted_sum(const std::vector<std::pair<double, Var>>& terms);

// Reverse accumulation from a scalar loss. Throws if the loss is not scalar
// or if called twice on the same root without rebuilding the graph.
void backward(const Var& loss);

// Central-difference check of f's gradient at x. Returns
// max_i |g_ad - g_fd| / max(1, |g_fd|).
double finite_diff_check(const std::function<Var(const Var&)>& f,
                         const Tensor& x, double eps = 1e-5);

}  // namespace av360::ad
