// Minimal reverse-mode autodiff on dense row-major tensors.
//
// The op set is a fixed whitelist: matmul, add (plus row broadcast),
// elementwise tanh/relu/mul, softmax, log-softmax, layer norm, embedding
// gather, concatenation (rows/cols), masked fill, cross-entropy, and the
// Gumbel perturbation pieces (constant noise + scale + softmax +
// straight-through). Everything is 1-D or 2-D; batches are loops.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace nast {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline void check_shapes_equal(const std::vector<int>& a, const std::vector<int>& b,
                               const char* where) {
  if (a != b) {
    throw ShapeError(std::string(where) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

template <typename Real>
struct TensorNode {
  std::vector<int> shape;
  std::vector<Real> v;
  std::vector<Real> g;  // same size as v when requires_grad
  bool requires_grad = false;
  std::string name;  // set for parameters

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_op;

  size_t size() const { return v.size(); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  Real& at(int i, int j) { return v[static_cast<size_t>(i) * cols() + j]; }
  Real at(int i, int j) const { return v[static_cast<size_t>(i) * cols() + j]; }
  Real& gat(int i, int j) { return g[static_cast<size_t>(i) * cols() + j]; }

  void zero_grad() { std::fill(g.begin(), g.end(), Real(0)); }
};

template <typename Real>
using Tensor = std::shared_ptr<TensorNode<Real>>;

template <typename Real>
Tensor<Real> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<TensorNode<Real>>();
  size_t n = 1;
  for (int e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    n *= static_cast<size_t>(e);
  }
  t->shape = std::move(shape);
  t->v.assign(n, Real(0));
  t->requires_grad = requires_grad;
  if (requires_grad) t->g.assign(n, Real(0));
  return t;
}

template <typename Real>
Tensor<Real> constant(std::vector<int> shape, std::vector<Real> values) {
  auto t = make_tensor<Real>(std::move(shape));
  if (values.size() != t->size())
    throw ShapeError("constant: value count does not match shape " + shape_str(t->shape));
  t->v = std::move(values);
  return t;
}

template <typename Real>
Tensor<Real> scalar_const(Real x) {
  return constant<Real>({1}, {x});
}

namespace detail {

template <typename Real>
Tensor<Real> make_result(std::vector<int> shape, std::vector<Tensor<Real>> parents) {
  auto t = make_tensor<Real>(std::move(shape));
  for (auto& p : parents)
    if (p->requires_grad) t->requires_grad = true;
  if (t->requires_grad) t->g.assign(t->size(), Real(0));
  t->parents = std::move(parents);
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Whitelisted ops
// ---------------------------------------------------------------------------

template <typename Real>
Tensor<Real> add(Tensor<Real> a, Tensor<Real> b) {
  check_shapes_equal(a->shape, b->shape, "add");
  auto r = detail::make_result<Real>(a->shape, {a, b});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = a->v[i] + b->v[i];
  r->backward_op = [](TensorNode<Real>& n) {
    for (int k = 0; k < 2; ++k) {
      auto& p = n.parents[k];
      if (!p->requires_grad) continue;
      for (size_t i = 0; i < n.size(); ++i) p->g[i] += n.g[i];
    }
  };
  return r;
}

template <typename Real>
Tensor<Real> sub(Tensor<Real> a, Tensor<Real> b) {
  check_shapes_equal(a->shape, b->shape, "sub");
  auto r = detail::make_result<Real>(a->shape, {a, b});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = a->v[i] - b->v[i];
  r->backward_op = [](TensorNode<Real>& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    for (size_t i = 0; i < n.size(); ++i) {
      if (a->requires_grad) a->g[i] += n.g[i];
      if (b->requires_grad) b->g[i] -= n.g[i];
    }
  };
  return r;
}

template <typename Real>
Tensor<Real> mul(Tensor<Real> a, Tensor<Real> b) {
  check_shapes_equal(a->shape, b->shape, "mul");
  auto r = detail::make_result<Real>(a->shape, {a, b});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = a->v[i] * b->v[i];
  r->backward_op = [](TensorNode<Real>& n) {
    auto& a = n.parents[0];
    auto& b = n.parents[1];
    for (size_t i = 0; i < n.size(); ++i) {
      if (a->requires_grad) a->g[i] += n.g[i] * b->v[i];
      if (b->requires_grad) b->g[i] += n.g[i] * a->v[i];
    }
  };
  return r;
}

template <typename Real>
Tensor<Real> scale(Tensor<Real> a, Real c) {
  auto r = detail::make_result<Real>(a->shape, {a});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = a->v[i] * c;
  r->backward_op = [c](TensorNode<Real>& n) {
    auto& a = n.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n.size(); ++i) a->g[i] += n.g[i] * c;
  };
  return r;
}

// a: [m,n], b: [n] (or [1,n]) added to every row
template <typename Real>
Tensor<Real> add_rowvec(Tensor<Real> a, Tensor<Real> b) {
  int m = a->rows(), n = a->cols();
  if (static_cast<int>(b->size()) != n)
    throw ShapeError("add_rowvec: " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto r = detail::make_result<Real>(a->shape, {a, b});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) r->at(i, j) = a->at(i, j) + b->v[j];
  r->backward_op = [m, n](TensorNode<Real>& n_) {
    auto& a = n_.parents[0];
    auto& b = n_.parents[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        Real gr = n_.g[static_cast<size_t>(i) * n + j];
        if (a->requires_grad) a->g[static_cast<size_t>(i) * n + j] += gr;
        if (b->requires_grad) b->g[j] += gr;
      }
  };
  return r;
}

template <typename Real>
Tensor<Real> matmul(Tensor<Real> a, Tensor<Real> b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
  int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  auto r = detail::make_result<Real>({m, n}, {a, b});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      Real av = a->at(i, p);
      if (av == Real(0)) continue;
      for (int j = 0; j < n; ++j) r->at(i, j) += av * b->at(p, j);
    }
  r->backward_op = [m, k, n](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    auto& b = nd.parents[1];
    if (a->requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          Real gr = nd.g[static_cast<size_t>(i) * n + j];
          if (gr == Real(0)) continue;
          for (int p = 0; p < k; ++p) a->gat(i, p) += gr * b->at(p, j);
        }
    }
    if (b->requires_grad) {
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          Real av = a->at(i, p);
          if (av == Real(0)) continue;
          for (int j = 0; j < n; ++j)
            b->gat(p, j) += av * nd.g[static_cast<size_t>(i) * n + j];
        }
    }
  };
  return r;
}

template <typename Real>
Tensor<Real> transpose(Tensor<Real> a) {
  if (a->shape.size() != 2) throw ShapeError("transpose: need rank 2, got " + shape_str(a->shape));
  int m = a->shape[0], n = a->shape[1];
  auto r = detail::make_result<Real>({n, m}, {a});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) r->at(j, i) = a->at(i, j);
  r->backward_op = [m, n](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) a->gat(i, j) += nd.g[static_cast<size_t>(j) * m + i];
  };
  return r;
}

template <typename Real>
Tensor<Real> tanh_t(Tensor<Real> a) {
  auto r = detail::make_result<Real>(a->shape, {a});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = std::tanh(a->v[i]);
  r->backward_op = [](TensorNode<Real>& n) {
    auto& a = n.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n.size(); ++i) a->g[i] += n.g[i] * (Real(1) - n.v[i] * n.v[i]);
  };
  return r;
}

template <typename Real>
Tensor<Real> relu_t(Tensor<Real> a) {
  auto r = detail::make_result<Real>(a->shape, {a});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = a->v[i] > Real(0) ? a->v[i] : Real(0);
  r->backward_op = [](TensorNode<Real>& n) {
    auto& a = n.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < n.size(); ++i)
      if (a->v[i] > Real(0)) a->g[i] += n.g[i];
  };
  return r;
}

template <typename Real>
Tensor<Real> softmax_rows(Tensor<Real> a) {
  int m = a->rows(), n = a->cols();
  auto r = detail::make_result<Real>(a->shape, {a});
  for (int i = 0; i < m; ++i) {
    Real mx = a->at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a->at(i, j));
    Real z = 0;
    for (int j = 0; j < n; ++j) {
      r->at(i, j) = std::exp(a->at(i, j) - mx);
      z += r->at(i, j);
    }
    for (int j = 0; j < n; ++j) r->at(i, j) /= z;
  }
  r->backward_op = [m, n](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      Real dot = 0;
      for (int j = 0; j < n; ++j)
        dot += nd.g[static_cast<size_t>(i) * n + j] * nd.v[static_cast<size_t>(i) * n + j];
      for (int j = 0; j < n; ++j) {
        size_t k = static_cast<size_t>(i) * n + j;
        a->g[k] += nd.v[k] * (nd.g[k] - dot);
      }
    }
  };
  return r;
}

template <typename Real>
Tensor<Real> log_softmax_rows(Tensor<Real> a) {
  int m = a->rows(), n = a->cols();
  auto r = detail::make_result<Real>(a->shape, {a});
  for (int i = 0; i < m; ++i) {
    Real mx = a->at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a->at(i, j));
    Real z = 0;
    for (int j = 0; j < n; ++j) z += std::exp(a->at(i, j) - mx);
    Real lz = mx + std::log(z);
    for (int j = 0; j < n; ++j) r->at(i, j) = a->at(i, j) - lz;
  }
  r->backward_op = [m, n](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i) {
      Real gsum = 0;
      for (int j = 0; j < n; ++j) gsum += nd.g[static_cast<size_t>(i) * n + j];
      for (int j = 0; j < n; ++j) {
        size_t k = static_cast<size_t>(i) * n + j;
        a->g[k] += nd.g[k] - std::exp(nd.v[k]) * gsum;
      }
    }
  };
  return r;
}

// Per-row layer normalization with learned gain/bias vectors of size [n].
template <typename Real>
Tensor<Real> layer_norm_rows(Tensor<Real> a, Tensor<Real> gain, Tensor<Real> bias,
                             Real eps = Real(1e-5)) {
  int m = a->rows(), n = a->cols();
  if (static_cast<int>(gain->size()) != n || static_cast<int>(bias->size()) != n)
    throw ShapeError("layer_norm_rows: gain/bias size vs " + shape_str(a->shape));
  auto r = detail::make_result<Real>(a->shape, {a, gain, bias});
  auto mu = std::make_shared<std::vector<Real>>(m);
  auto inv_sigma = std::make_shared<std::vector<Real>>(m);
  for (int i = 0; i < m; ++i) {
    Real s = 0;
    for (int j = 0; j < n; ++j) s += a->at(i, j);
    Real mean = s / n;
    Real var = 0;
    for (int j = 0; j < n; ++j) {
      Real d = a->at(i, j) - mean;
      var += d * d;
    }
    var /= n;
    Real is = Real(1) / std::sqrt(var + eps);
    (*mu)[i] = mean;
    (*inv_sigma)[i] = is;
    for (int j = 0; j < n; ++j)
      r->at(i, j) = (a->at(i, j) - mean) * is * gain->v[j] + bias->v[j];
  }
  r->backward_op = [m, n, mu, inv_sigma](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    auto& gain = nd.parents[1];
    auto& bias = nd.parents[2];
    for (int i = 0; i < m; ++i) {
      Real is = (*inv_sigma)[i];
      Real mean = (*mu)[i];
      Real sum_dyh = 0, sum_dyh_xhat = 0;
      for (int j = 0; j < n; ++j) {
        size_t k = static_cast<size_t>(i) * n + j;
        Real xhat = (a->v[k] - mean) * is;
        Real dyh = nd.g[k] * gain->v[j];
        sum_dyh += dyh;
        sum_dyh_xhat += dyh * xhat;
        if (gain->requires_grad) gain->g[j] += nd.g[k] * xhat;
        if (bias->requires_grad) bias->g[j] += nd.g[k];
      }
      if (a->requires_grad) {
        for (int j = 0; j < n; ++j) {
          size_t k = static_cast<size_t>(i) * n + j;
          Real xhat = (a->v[k] - mean) * is;
          Real dyh = nd.g[k] * gain->v[j];
          a->g[k] += is * (dyh - sum_dyh / n - xhat * sum_dyh_xhat / n);
        }
      }
    }
  };
  return r;
}

// Gather rows of `table` ([V, d]) by index; the embedding lookup.
template <typename Real>
Tensor<Real> embed_rows(Tensor<Real> table, const std::vector<int>& ids) {
  int V = table->rows(), d = table->cols();
  for (int id : ids)
    if (id < 0 || id >= V)
      throw ShapeError("embed_rows: index " + std::to_string(id) + " out of range for " +
                       shape_str(table->shape));
  auto r = detail::make_result<Real>({static_cast<int>(ids.size()), d}, {table});
  for (size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j) r->at(static_cast<int>(i), j) = table->at(ids[i], j);
  auto ids_copy = ids;
  r->backward_op = [ids_copy, d](TensorNode<Real>& nd) {
    auto& table = nd.parents[0];
    if (!table->requires_grad) return;
    for (size_t i = 0; i < ids_copy.size(); ++i)
      for (int j = 0; j < d; ++j)
        table->gat(ids_copy[i], j) += nd.g[i * d + j];
  };
  return r;
}

// Differentiable row gather from an activation matrix.
template <typename Real>
Tensor<Real> select_rows(Tensor<Real> a, const std::vector<int>& rows) {
  return embed_rows(a, rows);
}

template <typename Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input");
  int n = parts[0]->cols();
  int m = 0;
  for (auto& p : parts) {
    if (p->cols() != n)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0]->shape) + " vs " +
                       shape_str(p->shape));
    m += p->rows();
  }
  auto r = detail::make_result<Real>({m, n}, parts);
  size_t off = 0;
  for (auto& p : parts) {
    std::copy(p->v.begin(), p->v.end(), r->v.begin() + off);
    off += p->size();
  }
  r->backward_op = [](TensorNode<Real>& nd) {
    size_t off = 0;
    for (auto& p : nd.parents) {
      if (p->requires_grad)
        for (size_t i = 0; i < p->size(); ++i) p->g[i] += nd.g[off + i];
      off += p->size();
    }
  };
  return r;
}

template <typename Real>
Tensor<Real> slice_cols(Tensor<Real> a, int c0, int c1) {
  int m = a->rows(), n = a->cols();
  if (c0 < 0 || c1 > n || c0 >= c1)
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") of " + shape_str(a->shape));
  int w = c1 - c0;
  auto r = detail::make_result<Real>({m, w}, {a});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j) r->at(i, j) = a->at(i, c0 + j);
  r->backward_op = [m, w, c0](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) a->gat(i, c0 + j) += nd.g[static_cast<size_t>(i) * w + j];
  };
  return r;
}

template <typename Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input");
  int m = parts[0]->rows();
  int n = 0;
  for (auto& p : parts) {
    if (p->rows() != m)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0]->shape) + " vs " +
                       shape_str(p->shape));
    n += p->cols();
  }
  auto r = detail::make_result<Real>({m, n}, parts);
  int coff = 0;
  for (auto& p : parts) {
    int w = p->cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j) r->at(i, coff + j) = p->at(i, j);
    coff += w;
  }
  r->backward_op = [m, n](TensorNode<Real>& nd) {
    int coff = 0;
    for (auto& p : nd.parents) {
      int w = p->cols();
      if (p->requires_grad)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < w; ++j)
            p->gat(i, j) += nd.g[static_cast<size_t>(i) * n + coff + j];
      coff += w;
    }
  };
  return r;
}

// Fills positions where mask != 0 with `value` (mask is a constant pattern).
template <typename Real>
Tensor<Real> masked_fill(Tensor<Real> a, const std::vector<uint8_t>& mask, Real value) {
  if (mask.size() != a->size())
    throw ShapeError("masked_fill: mask size " + std::to_string(mask.size()) + " vs " +
                     shape_str(a->shape));
  auto r = detail::make_result<Real>(a->shape, {a});
  for (size_t i = 0; i < r->size(); ++i) r->v[i] = mask[i] ? value : a->v[i];
  auto mask_copy = mask;
  r->backward_op = [mask_copy](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < nd.size(); ++i)
      if (!mask_copy[i]) a->g[i] += nd.g[i];
  };
  return r;
}

// Sum over rows of -log softmax(logits)[target]; returns a scalar.
template <typename Real>
Tensor<Real> cross_entropy_rows(Tensor<Real> logits, const std::vector<int>& targets) {
  int m = logits->rows(), n = logits->cols();
  if (static_cast<int>(targets.size()) != m)
    throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) +
                     " targets vs " + shape_str(logits->shape));
  auto r = detail::make_result<Real>({1}, {logits});
  auto probs = std::make_shared<std::vector<Real>>(logits->size());
  Real total = 0;
  for (int i = 0; i < m; ++i) {
    if (targets[i] < 0 || targets[i] >= n)
      throw ShapeError("cross_entropy_rows: target " + std::to_string(targets[i]) +
                       " out of range " + std::to_string(n));
    Real mx = logits->at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, logits->at(i, j));
    Real z = 0;
    for (int j = 0; j < n; ++j) z += std::exp(logits->at(i, j) - mx);
    Real lz = mx + std::log(z);
    for (int j = 0; j < n; ++j)
      (*probs)[static_cast<size_t>(i) * n + j] = std::exp(logits->at(i, j) - lz);
    total += lz - logits->at(i, targets[i]);
  }
  r->v[0] = total;
  auto tcopy = targets;
  r->backward_op = [m, n, probs, tcopy](TensorNode<Real>& nd) {
    auto& logits = nd.parents[0];
    if (!logits->requires_grad) return;
    Real gr = nd.g[0];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        size_t k = static_cast<size_t>(i) * n + j;
        logits->g[k] += gr * ((*probs)[k] - (j == tcopy[i] ? Real(1) : Real(0)));
      }
  };
  return r;
}

template <typename Real>
Tensor<Real> sum_all(Tensor<Real> a) {
  auto r = detail::make_result<Real>({1}, {a});
  Real s = 0;
  for (Real x : a->v) s += x;
  r->v[0] = s;
  r->backward_op = [](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < a->size(); ++i) a->g[i] += nd.g[0];
  };
  return r;
}

template <typename Real>
Tensor<Real> mean_all(Tensor<Real> a) {
  return scale(sum_all(a), Real(1) / static_cast<Real>(a->size()));
}

// Picks a single entry as a scalar.
template <typename Real>
Tensor<Real> pick(Tensor<Real> a, int index) {
  if (index < 0 || index >= static_cast<int>(a->size()))
    throw ShapeError("pick: index " + std::to_string(index) + " out of " + shape_str(a->shape));
  auto r = detail::make_result<Real>({1}, {a});
  r->v[0] = a->v[index];
  r->backward_op = [index](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (a->requires_grad) a->g[index] += nd.g[0];
  };
  return r;
}

// Values are copied; gradient does not flow past this node.
template <typename Real>
Tensor<Real> stop_grad(Tensor<Real> a) {
  auto r = make_tensor<Real>(a->shape);
  r->v = a->v;
  return r;
}

// Straight-through: forward emits the per-row argmax one-hot, backward is the
// identity into the relaxed distribution.
template <typename Real>
Tensor<Real> straight_through_hard(Tensor<Real> relaxed) {
  int m = relaxed->rows(), n = relaxed->cols();
  auto r = detail::make_result<Real>(relaxed->shape, {relaxed});
  for (int i = 0; i < m; ++i) {
    int best = 0;
    for (int j = 1; j < n; ++j)
      if (relaxed->at(i, j) > relaxed->at(i, best)) best = j;
    r->at(i, best) = Real(1);
  }
  r->backward_op = [](TensorNode<Real>& nd) {
    auto& a = nd.parents[0];
    if (!a->requires_grad) return;
    for (size_t i = 0; i < nd.size(); ++i) a->g[i] += nd.g[i];
  };
  return r;
}

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

template <typename Real>
void topo_sort(const Tensor<Real>& root, std::vector<TensorNode<Real>*>& order) {
  std::unordered_set<TensorNode<Real>*> visited;
  std::vector<std::pair<Tensor<Real>, size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      auto child = node->parents[idx++];
      if (child->requires_grad && !visited.count(child.get())) {
        visited.insert(child.get());
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node.get());
      stack.pop_back();
    }
  }
}

// Reverse-mode accumulation from a scalar root. Gradients accumulate into the
// `g` buffers of all requires_grad ancestors; call zero_grad on parameters
// between steps.
template <typename Real>
void backward(Tensor<Real> root) {
  if (root->size() != 1)
    throw ShapeError("backward: root must be scalar, got " + shape_str(root->shape));
  if (!root->requires_grad) return;
  std::vector<TensorNode<Real>*> order;
  topo_sort(root, order);
  for (auto* n : order)
    if (!n->parents.empty()) n->zero_grad();
  root->g[0] = Real(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->backward_op) n->backward_op(*n);
  }
}

template <typename Real>
Real value_of(const Tensor<Real>& t) {
  if (t->size() != 1)
    throw ShapeError("value_of: not a scalar: " + shape_str(t->shape));
  return t->v[0];
}

// ---------------------------------------------------------------------------
// Parameters and the gradient-check oracle
// ---------------------------------------------------------------------------

template <typename Real>
struct ParamStore {
  std::map<std::string, Tensor<Real>> params;

  Tensor<Real> add(const std::string& name, std::vector<int> shape) {
    auto t = make_tensor<Real>(std::move(shape), /*requires_grad=*/true);
    t->name = name;
    if (!params.emplace(name, t).second)
      throw std::runtime_error("duplicate parameter name: " + name);
    return t;
  }

  Tensor<Real> get(const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw std::runtime_error("unknown parameter: " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [k, p] : params) p->zero_grad();
  }

  size_t total_size() const {
    size_t n = 0;
    for (auto& [k, p] : params) n += p->size();
    return n;
  }

  template <typename Other>
  void copy_values_from(const ParamStore<Other>& src) {
    for (auto& [k, p] : params) {
      auto s = src.get(k);
      check_shapes_equal(p->shape, s->shape, "copy_values_from");
      for (size_t i = 0; i < p->size(); ++i) p->v[i] = static_cast<Real>(s->v[i]);
    }
  }
};

template <typename Real>
void init_uniform(Tensor<Real> t, Real lo, Real hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& x : t->v) x = static_cast<Real>(d(rng));
}

template <typename Real>
void init_xavier(Tensor<Real> t, std::mt19937_64& rng) {
  double fan = 0;
  for (int e : t->shape) fan += e;
  double lim = std::sqrt(6.0 / std::max(1.0, fan));
  init_uniform(t, Real(-lim), Real(lim), rng);
}

// Evaluates a scalar expression and returns (value, per-parameter gradients).
template <typename Real>
std::pair<Real, std::map<std::string, std::vector<Real>>> evaluate_with_gradients(
    Tensor<Real> root, ParamStore<Real>& ps) {
  if (root->size() != 1)
    throw ShapeError("evaluate_with_gradients: non-scalar root " + shape_str(root->shape));
  ps.zero_grad();
  backward(root);
  std::map<std::string, std::vector<Real>> grads;
  for (auto& [k, p] : ps.params) grads[k] = p->g;
  return {root->v[0], grads};
}

// Central-difference gradient oracle. The expression is rebuilt by `build`
// (a functor templated on the scalar type) from a parameter store; finite
// differences are evaluated in double regardless of Real, so the oracle
// stays independent of float32 rounding in the engine under test.
//
// Returns max over parameter entries of |analytic - fd|, normalized by the
// infinity norm of the finite-difference gradient. Per-entry normalization
// would amplify cancellation noise on near-zero entries into spurious O(1)
// relative errors while a genuinely wrong gradient also corrupts entries of
// typical magnitude, which this measure catches.
template <typename Real, typename Builder>
double finite_difference_check(ParamStore<Real>& ps, Builder&& build, double epsilon) {
  if (!(epsilon > 0)) throw std::invalid_argument("finite_difference_check: epsilon must be > 0");

  ps.zero_grad();
  auto root = build.template operator()<Real>(ps);
  Real base = value_of(root);
  {
    auto again = build.template operator()<Real>(ps);
    if (value_of(again) != base)
      throw std::runtime_error("finite_difference_check: expression is non-deterministic");
  }
  backward(root);

  ParamStore<double> mirror;
  for (auto& [k, p] : ps.params) mirror.add(k, p->shape);
  mirror.copy_values_from(ps);

  double max_abs_diff = 0, fd_inf = 0;
  for (auto& [k, p] : ps.params) {
    auto mp = mirror.get(k);
    for (size_t i = 0; i < p->size(); ++i) {
      double saved = mp->v[i];
      mp->v[i] = saved + epsilon;
      double fplus = value_of(build.template operator()<double>(mirror));
      mp->v[i] = saved - epsilon;
      double fminus = value_of(build.template operator()<double>(mirror));
      mp->v[i] = saved;
      double fd = (fplus - fminus) / (2 * epsilon);
      fd_inf = std::max(fd_inf, std::abs(fd));
      max_abs_diff = std::max(max_abs_diff, std::abs(static_cast<double>(p->g[i]) - fd));
    }
  }
  return max_abs_diff / std::max(fd_inf, 1e-8);
}

}  // namespace nast
