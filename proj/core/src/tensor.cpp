#include "av360/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace av360::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

ECMap cmap(const Tensor& t) {
  return ECMap(t.data.data(), static_cast<Eigen::Index>(t.rows()),
               static_cast<Eigen::Index>(t.cols()));
}
ECMap cmap_grad(const Node& n) {
  return ECMap(n.grad.data(), static_cast<Eigen::Index>(n.value.rows()),
               static_cast<Eigen::Index>(n.value.cols()));
}
EMap map_grad(Node& n) {
  n.ensure_grad();
  return EMap(n.grad.data(), static_cast<Eigen::Index>(n.value.rows()),
              static_cast<Eigen::Index>(n.value.cols()));
}

Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->inputs = std::move(inputs);
  node->requires_grad = false;
  for (const Var& in : node->inputs)
    if (in->requires_grad) node->requires_grad = true;
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return node;
}

void check_2d(const Var& v, const char* who) {
  if (v->value.shape.size() != 2)
    throw std::invalid_argument(std::string(who) + ": tensor must be 2-D");
}

constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;

}  // namespace

Graph Graph::record(const Var& root) {
  Graph g;
  std::unordered_set<Node*> visited;
  // iterative post-order DFS; input order makes the traversal deterministic
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next].get();
      ++next;
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      g.order.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

Var make_leaf(Tensor t, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(t);
  node->requires_grad = requires_grad;
  return node;
}

Var make_constant(Tensor t) { return make_leaf(std::move(t), false); }

Var matmul(const Var& a, const Var& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a->value.cols() != b->value.rows())
    throw std::invalid_argument("matmul: inner dimensions differ");
  Tensor out(a->value.rows(), b->value.cols());
  EMap(out.data.data(), out.rows(), out.cols()) = cmap(a->value) * cmap(b->value);
  return make_op(std::move(out), {a, b}, [](Node& n) {
    const Var& a = n.inputs[0];
    const Var& b = n.inputs[1];
    auto g = cmap_grad(n);
    if (a->requires_grad) map_grad(*a) += g * cmap(b->value).transpose();
    if (b->requires_grad) map_grad(*b) += cmap(a->value).transpose() * g;
  });
}

Var transpose(const Var& a) {
  check_2d(a, "transpose");
  Tensor out(a->value.cols(), a->value.rows());
  EMap(out.data.data(), out.rows(), out.cols()) = cmap(a->value).transpose();
  return make_op(std::move(out), {a}, [](Node& n) {
    map_grad(*n.inputs[0]) += cmap_grad(n).transpose();
  });
}

Var add(const Var& a, const Var& b) {
  if (a->value.shape != b->value.shape)
    throw std::invalid_argument("add: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    for (int k = 0; k < 2; ++k) {
      Var& in = n.inputs[k];
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) in->grad[i] += n.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  if (a->value.shape != b->value.shape)
    throw std::invalid_argument("sub: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b->value.data[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    Var& a = n.inputs[0];
    Var& b = n.inputs[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  if (a->value.shape != b->value.shape)
    throw std::invalid_argument("mul: shape mismatch");
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
  return make_op(std::move(out), {a, b}, [](Node& n) {
    Var& a = n.inputs[0];
    Var& b = n.inputs[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        a->grad[i] += n.grad[i] * b->value.data[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i)
        b->grad[i] += n.grad[i] * a->value.data[i];
    }
  });
}

Var scale(const Var& a, double c) {
  Tensor out = a->value;
  for (double& v : out.data) v *= c;
  return make_op(std::move(out), {a}, [c](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += c * n.grad[i];
  });
}

Var add_rowvec(const Var& a, const Var& row) {
  check_2d(a, "add_rowvec");
  if (row->value.numel() != a->value.cols())
    throw std::invalid_argument("add_rowvec: width mismatch");
  Tensor out = a->value;
  const std::size_t m = out.rows(), c = out.cols();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] += row->value.data[j];
  return make_op(std::move(out), {a, row}, [](Node& n) {
    Var& a = n.inputs[0];
    Var& row = n.inputs[1];
    const std::size_t m = n.value.rows(), c = n.value.cols();
    if (a->requires_grad) {
      a->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    }
    if (row->requires_grad) {
      row->ensure_grad();
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < c; ++j) row->grad[j] += n.grad[r * c + j];
    }
  });
}

Var mul_colvec(const Var& a, const std::vector<double>& col) {
  check_2d(a, "mul_colvec");
  if (col.size() != a->value.rows())
    throw std::invalid_argument("mul_colvec: height mismatch");
  Tensor out = a->value;
  const std::size_t c = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] *= col[r];
  return make_op(std::move(out), {a}, [col](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    const std::size_t c = n.value.cols();
    for (std::size_t r = 0; r < n.value.rows(); ++r)
      for (std::size_t j = 0; j < c; ++j)
        a->grad[r * c + j] += n.grad[r * c + j] * col[r];
  });
}

Var outer_const(const std::vector<double>& col, const Var& row) {
  if (row->value.rows() != 1)
    throw std::invalid_argument("outer_const: row operand must be [1 x n]");
  const std::size_t m = col.size(), c = row->value.cols();
  Tensor out(m, c);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] = col[r] * row->value.data[j];
  return make_op(std::move(out), {row}, [col](Node& n) {
    Var& row = n.inputs[0];
    row->ensure_grad();
    const std::size_t c = n.value.cols();
    for (std::size_t r = 0; r < col.size(); ++r)
      for (std::size_t j = 0; j < c; ++j)
        row->grad[j] += n.grad[r * c + j] * col[r];
  });
}

Var gelu(const Var& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return make_op(std::move(out), {a}, [](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double x = a->value.data[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      a->grad[i] += n.grad[i] * (cdf + x * pdf);
    }
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  check_2d(x, "layer_norm");
  const std::size_t m = x->value.rows(), d = x->value.cols();
  if (gain->value.numel() != d || bias->value.numel() != d)
    throw std::invalid_argument("layer_norm: gain/bias width mismatch");

  Tensor out(m, d);
  for (std::size_t r = 0; r < m; ++r) {
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x->value.data[r * d + j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dv = x->value.data[r * d + j] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (x->value.data[r * d + j] - mean) * inv;
      out.data[r * d + j] = gain->value.data[j] * xh + bias->value.data[j];
    }
  }
  return make_op(std::move(out), {x, gain, bias}, [eps](Node& n) {
    Var& x = n.inputs[0];
    Var& gain = n.inputs[1];
    Var& bias = n.inputs[2];
    const std::size_t m = n.value.rows(), d = n.value.cols();
    if (x->requires_grad) x->ensure_grad();
    if (gain->requires_grad) gain->ensure_grad();
    if (bias->requires_grad) bias->ensure_grad();
    std::vector<double> xh(d);
    for (std::size_t r = 0; r < m; ++r) {
      double mean = 0.0;
      for (std::size_t j = 0; j < d; ++j) mean += x->value.data[r * d + j];
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double dv = x->value.data[r * d + j] - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j)
        xh[j] = (x->value.data[r * d + j] - mean) * inv;

      if (gain->requires_grad)
        for (std::size_t j = 0; j < d; ++j)
          gain->grad[j] += n.grad[r * d + j] * xh[j];
      if (bias->requires_grad)
        for (std::size_t j = 0; j < d; ++j) bias->grad[j] += n.grad[r * d + j];

      if (x->requires_grad) {
        // dxh = g * gain; dx = inv * (dxh - mean(dxh) - xh * mean(dxh * xh))
        double mean_dxh = 0.0, mean_dxh_xh = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = n.grad[r * d + j] * gain->value.data[j];
          mean_dxh += dxh;
          mean_dxh_xh += dxh * xh[j];
        }
        mean_dxh /= static_cast<double>(d);
        mean_dxh_xh /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dxh = n.grad[r * d + j] * gain->value.data[j];
          x->grad[r * d + j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
        }
      }
    }
  });
}

Var softmax(const Var& x) {
  check_2d(x, "softmax");
  const std::size_t m = x->value.rows(), d = x->value.cols();
  Tensor out(m, d);
  for (std::size_t r = 0; r < m; ++r) {
    double mx = x->value.data[r * d];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x->value.data[r * d + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = std::exp(x->value.data[r * d + j] - mx);
      out.data[r * d + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < d; ++j) out.data[r * d + j] /= sum;
  }
  return make_op(std::move(out), {x}, [](Node& n) {
    Var& x = n.inputs[0];
    x->ensure_grad();
    const std::size_t m = n.value.rows(), d = n.value.cols();
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        dot += n.grad[r * d + j] * n.value.data[r * d + j];
      for (std::size_t j = 0; j < d; ++j)
        x->grad[r * d + j] +=
            n.value.data[r * d + j] * (n.grad[r * d + j] - dot);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const std::size_t c = parts[0]->value.cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    check_2d(p, "concat_rows");
    if (p->value.cols() != c)
      throw std::invalid_argument("concat_rows: width mismatch");
    m += p->value.rows();
  }
  Tensor out(m, c);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p->value.data.begin(), p->value.data.end(), out.data.begin() + off);
    off += p->value.numel();
  }
  return make_op(std::move(out), parts, [](Node& n) {
    std::size_t off = 0;
    for (Var& in : n.inputs) {
      if (in->requires_grad) {
        in->ensure_grad();
        for (std::size_t i = 0; i < in->value.numel(); ++i)
          in->grad[i] += n.grad[off + i];
      }
      off += in->value.numel();
    }
  });
}

Var slice_rows(const Var& a, std::size_t r0, std::size_t r1) {
  check_2d(a, "slice_rows");
  if (r0 >= r1 || r1 > a->value.rows())
    throw std::invalid_argument("slice_rows: bad range");
  const std::size_t c = a->value.cols();
  Tensor out(r1 - r0, c);
  std::copy(a->value.data.begin() + r0 * c, a->value.data.begin() + r1 * c,
            out.data.begin());
  return make_op(std::move(out), {a}, [r0, c](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      a->grad[r0 * c + i] += n.grad[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const std::size_t m = parts[0]->value.rows();
  std::size_t c = 0;
  for (const Var& p : parts) {
    check_2d(p, "concat_cols");
    if (p->value.rows() != m)
      throw std::invalid_argument("concat_cols: height mismatch");
    c += p->value.cols();
  }
  Tensor out(m, c);
  std::size_t coff = 0;
  for (const Var& p : parts) {
    const std::size_t pc = p->value.cols();
    for (std::size_t r = 0; r < m; ++r)
      std::copy(p->value.data.begin() + r * pc, p->value.data.begin() + (r + 1) * pc,
                out.data.begin() + r * c + coff);
    coff += pc;
  }
  return make_op(std::move(out), parts, [](Node& n) {
    const std::size_t c = n.value.cols(), m = n.value.rows();
    std::size_t coff = 0;
    for (Var& in : n.inputs) {
      const std::size_t pc = in->value.cols();
      if (in->requires_grad) {
        in->ensure_grad();
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t j = 0; j < pc; ++j)
            in->grad[r * pc + j] += n.grad[r * c + coff + j];
      }
      coff += pc;
    }
  });
}

Var slice_cols(const Var& a, std::size_t c0, std::size_t c1) {
  check_2d(a, "slice_cols");
  if (c0 >= c1 || c1 > a->value.cols())
    throw std::invalid_argument("slice_cols: bad range");
  const std::size_t m = a->value.rows(), c = a->value.cols(), w = c1 - c0;
  Tensor out(m, w);
  for (std::size_t r = 0; r < m; ++r)
    std::copy(a->value.data.begin() + r * c + c0, a->value.data.begin() + r * c + c1,
              out.data.begin() + r * w);
  return make_op(std::move(out), {a}, [c0](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    const std::size_t m = n.value.rows(), w = n.value.cols(), c = a->value.cols();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < w; ++j)
        a->grad[r * c + c0 + j] += n.grad[r * w + j];
  });
}

Var gather_rows(const Var& table, const std::vector<std::size_t>& ids) {
  check_2d(table, "gather_rows");
  const std::size_t c = table->value.cols();
  for (std::size_t id : ids)
    if (id >= table->value.rows())
      throw std::out_of_range("gather_rows: id out of range");
  Tensor out(ids.size(), c);
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy(table->value.data.begin() + ids[r] * c,
              table->value.data.begin() + (ids[r] + 1) * c, out.data.begin() + r * c);
  return make_op(std::move(out), {table}, [ids, c](Node& n) {
    Var& t = n.inputs[0];
    t->ensure_grad();
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (std::size_t j = 0; j < c; ++j)
        t->grad[ids[r] * c + j] += n.grad[r * c + j];
  });
}

Var mean_rows(const Var& a) {
  check_2d(a, "mean_rows");
  const std::size_t m = a->value.rows(), c = a->value.cols();
  if (m == 0) throw std::invalid_argument("mean_rows: empty input");
  Tensor out(1, c);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[j] += a->value.data[r * c + j];
  for (double& v : out.data) v /= static_cast<double>(m);
  return make_op(std::move(out), {a}, [](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    const std::size_t m = a->value.rows(), c = a->value.cols();
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t j = 0; j < c; ++j) a->grad[r * c + j] += n.grad[j] * inv;
  });
}

Var dropout(const Var& a, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p outside [0, 1)");
  if (p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a->value.numel());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : keep_scale;
  Tensor out = a->value;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= mask[i];
  return make_op(std::move(out), {a}, [mask = std::move(mask)](Node& n) {
    Var& a = n.inputs[0];
    a->ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      a->grad[i] += n.grad[i] * mask[i];
  });
}

Var cross_entropy(const Var& logits, const std::vector<std::size_t>& targets) {
  check_2d(logits, "cross_entropy");
  const std::size_t n = logits->value.rows(), c = logits->value.cols();
  if (targets.size() != n)
    throw std::invalid_argument("cross_entropy: one target per row required");
  for (std::size_t t : targets)
    if (t >= c) throw std::out_of_range("cross_entropy: target index out of range");

  // softmax probabilities are reused by the backward pass
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double mx = logits->value.data[r * c];
    for (std::size_t j = 1; j < c; ++j)
      mx = std::max(mx, logits->value.data[r * c + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(logits->value.data[r * c + j] - mx);
      (*probs)[r * c + j] = e;
      sum += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] /= sum;
    loss -= std::log(std::max((*probs)[r * c + targets[r]], 1e-300));
  }
  loss /= static_cast<double>(n);

  return make_op(Tensor::scalar(loss), {logits},
                 [probs, targets, c](Node& n) {
                   Var& logits = n.inputs[0];
                   logits->ensure_grad();
                   const std::size_t rows = targets.size();
                   const double g = n.grad[0] / static_cast<double>(rows);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < c; ++j) {
                       const double y = j == targets[r] ? 1.0 : 0.0;
                       logits->grad[r * c + j] += g * ((*probs)[r * c + j] - y);
                     }
                 });
}

Var smooth_l1(const Var& pred, const Var& target) {
  if (pred->value.shape != target->value.shape)
    throw std::invalid_argument("smooth_l1: shape mismatch");
  const std::size_t n = pred->value.numel();
  if (n == 0) throw std::invalid_argument("smooth_l1: empty input");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = pred->value.data[i] - target->value.data[i];
    loss += std::abs(e) < 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
  }
  loss /= static_cast<double>(n);
  return make_op(Tensor::scalar(loss), {pred, target}, [](Node& n) {
    Var& pred = n.inputs[0];
    Var& target = n.inputs[1];
    const std::size_t count = pred->value.numel();
    const double g = n.grad[0] / static_cast<double>(count);
    for (int k = 0; k < 2; ++k) {
      Var& in = n.inputs[k];
      if (!in->requires_grad) continue;
      in->ensure_grad();
      const double sign = k == 0 ? 1.0 : -1.0;
      for (std::size_t i = 0; i < count; ++i) {
        const double e = pred->value.data[i] - target->value.data[i];
        const double de = std::abs(e) < 1.0 ? e : (e > 0 ? 1.0 : -1.0);
        in->grad[i] += sign * g * de;
      }
    }
  });
}

Var weighted_sum(const std::vector<std::pair<double, Var>>& terms) {
  if (terms.empty()) throw std::invalid_argument("weighted_sum: no terms");
  double acc = 0.0;
  std::vector<Var> inputs;
  std::vector<double> weights;
  for (const auto& [w, v] : terms) {
    if (v->value.numel() != 1)
      throw std::invalid_argument("weighted_sum: terms must be scalars");
    acc += w * v->value.data[0];
    inputs.push_back(v);
    weights.push_back(w);
  }
  return make_op(Tensor::scalar(acc), std::move(inputs),
                 [weights](Node& n) {
                   for (std::size_t k = 0; k < n.inputs.size(); ++k) {
                     Var& in = n.inputs[k];
                     if (!in->requires_grad) continue;
                     in->ensure_grad();
                     in->grad[0] += weights[k] * n.grad[0];
                   }
                 });
}

void backward(const Var& loss) {
  if (loss->value.numel() != 1)
    throw std::invalid_argument("backward: loss must be scalar");
  if (loss->backward_done)
    throw std::logic_error("backward: already run on this graph; rebuild it first");
  loss->backward_done = true;

  Graph graph = Graph::record(loss);
  loss->ensure_grad();
  loss->grad[0] = 1.0;
  for (auto it = graph.order.rbegin(); it != graph.order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

double finite_diff_check(const std::function<Var(const Var&)>& f,
                         const Tensor& x, double eps) {
  Var leaf = make_leaf(x, true);
  Var loss = f(leaf);
  if (loss->value.numel() != 1)
    throw std::invalid_argument("finite_diff_check: f must be scalar-valued");
  backward(loss);
  const std::vector<double> g_ad = leaf->grad;

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor xp = x, xm = x;
    xp.data[i] += eps;
    xm.data[i] -= eps;
    const double fp = f(make_leaf(xp, false))->value.data[0];
    const double fm = f(make_leaf(xm, false))->value.data[0];
    const double g_fd = (fp - fm) / (2.0 * eps);
    const double err = std::abs(g_ad[i] - g_fd) / std::max(1.0, std::abs(g_fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace av360::ad
