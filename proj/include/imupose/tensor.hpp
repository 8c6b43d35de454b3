#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace imupose {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// Gradient buffers keyed by node. Buffers are only ever touched through
// keyed lookups in a deterministic traversal order, so accumulation is
// bit-reproducible.
struct GradMap {
  std::unordered_map<const TensorNode*, std::vector<double>> buf;

  std::vector<double>& accum(const TensorNode* n);
  // Like accum, but reports whether this is the node's first contribution so
  // full-extent writers can overwrite instead of read-modify-write.
  std::pair<std::vector<double>*, bool> accum_fresh(const TensorNode* n);
  const std::vector<double>* find(const TensorNode* n) const {
    auto it = buf.find(n);
    return it == buf.end() ? nullptr : &it->second;
  }
};

// One vertex of the reverse-mode tape. `parents` lists only the
// grad-requiring inputs (that is what the topological walk follows);
// the backward closure captures whatever forward values it needs.
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<double>> value;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(const std::vector<double>& gout, GradMap& grads)> backward;
};

inline std::vector<double>& GradMap::accum(const TensorNode* n) {
  auto it = buf.find(n);
  if (it == buf.end()) {
    it = buf.emplace(n, std::vector<double>(numel(n->shape), 0.0)).first;
  }
  return it->second;
}

inline std::pair<std::vector<double>*, bool> GradMap::accum_fresh(const TensorNode* n) {
  auto it = buf.find(n);
  if (it != buf.end()) return {&it->second, false};
  it = buf.emplace(n, std::vector<double>(numel(n->shape), 0.0)).first;
  return {&it->second, true};
}

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("Tensor::from: shape " + shape_str(shape) + " does not match data size " +
                                  std::to_string(data.size()));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::make_shared<std::vector<double>>(std::move(data));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->value = std::make_shared<std::vector<double>>(numel(shape), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v, bool requires_grad = false) { return full({1}, v, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int64_t size() const { return numel(node_->shape); }
  int64_t dim(int i) const {
    int r = rank();
    if (i < 0) i += r;
    return node_->shape[static_cast<size_t>(i)];
  }
  double* data() { return node_->value->data(); }
  const double* data() const { return node_->value->data(); }
  std::vector<double>& values() { return *node_->value; }
  const std::vector<double>& values() const { return *node_->value; }
  double item() const {
    if (size() != 1) throw std::invalid_argument("Tensor::item: tensor is not scalar, shape " + shape_str(shape()));
    return (*node_->value)[0];
  }
  bool requires_grad() const { return node_->requires_grad; }
  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Fresh output node for an op result.
inline Tensor make_result(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value = std::make_shared<std::vector<double>>(static_cast<size_t>(numel(shape)));
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

inline void attach_parents(const Tensor& out, std::initializer_list<Tensor> inputs) {
  for (const auto& t : inputs)
    if (t.requires_grad()) out.node()->parents.push_back(t.node());
}

// ---------------------------------------------------------------------------
// Backward engine: iterative topological sort from a scalar root, then one
// reverse sweep. Returns gradient buffers for every reached grad-requiring
// node (leaves included).
// ---------------------------------------------------------------------------
inline GradMap backward(const Tensor& root) {
  if (root.size() != 1) throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root.shape()));
  if (!root.requires_grad())
    throw std::invalid_argument("backward: root does not require grad (no parameters on its path)");

  std::vector<const TensorNode*> topo;
  std::unordered_set<const TensorNode*> visited;
  // Iterative post-order DFS.
  std::vector<std::pair<const TensorNode*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      const TensorNode* p = node->parents[next_child++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  GradMap grads;
  grads.accum(root.node().get())[0] = 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const TensorNode* n = *it;
    if (!n->backward) continue;
    const std::vector<double>* g = grads.find(n);
    if (!g) continue;
    n->backward(*g, grads);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Broadcasting machinery (numpy alignment rules, rank capped at 6).
// ---------------------------------------------------------------------------
namespace detail {

constexpr int kMaxRank = 6;

struct BcastPlan {
  int rank = 0;
  int64_t odims[kMaxRank] = {1, 1, 1, 1, 1, 1};
  int64_t astr[kMaxRank] = {0, 0, 0, 0, 0, 0};
  int64_t bstr[kMaxRank] = {0, 0, 0, 0, 0, 0};
  Shape oshape;
};

inline BcastPlan broadcast_plan(const Shape& a, const Shape& b) {
  BcastPlan p;
  p.rank = static_cast<int>(std::max(a.size(), b.size()));
  if (p.rank > kMaxRank) throw std::invalid_argument("broadcast: rank above " + std::to_string(kMaxRank));
  p.oshape.resize(p.rank);
  int64_t adim[kMaxRank], bdim[kMaxRank];
  for (int i = 0; i < p.rank; ++i) {
    int ai = static_cast<int>(a.size()) - p.rank + i;
    int bi = static_cast<int>(b.size()) - p.rank + i;
    adim[i] = ai >= 0 ? a[ai] : 1;
    bdim[i] = bi >= 0 ? b[bi] : 1;
    if (adim[i] != bdim[i] && adim[i] != 1 && bdim[i] != 1)
      throw std::invalid_argument("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    p.odims[i] = std::max(adim[i], bdim[i]);
    p.oshape[i] = p.odims[i];
  }
  int64_t as = 1, bs = 1;
  for (int i = p.rank - 1; i >= 0; --i) {
    p.astr[i] = (adim[i] == 1) ? 0 : as;
    p.bstr[i] = (bdim[i] == 1) ? 0 : bs;
    as *= adim[i];
    bs *= bdim[i];
  }
  return p;
}

// Apply fn(out_index, a_index, b_index) over the broadcast iteration space.
template <typename Fn>
inline void bcast_for_each(const BcastPlan& p, Fn&& fn) {
  int64_t dims[kMaxRank], astr[kMaxRank], bstr[kMaxRank];
  // Left-pad to exactly kMaxRank unit dims so the loop nest is fixed.
  for (int i = 0; i < kMaxRank; ++i) {
    int j = i - (kMaxRank - p.rank);
    dims[i] = j >= 0 ? p.odims[j] : 1;
    astr[i] = j >= 0 ? p.astr[j] : 0;
    bstr[i] = j >= 0 ? p.bstr[j] : 0;
  }
  int64_t o = 0;
  for (int64_t i0 = 0; i0 < dims[0]; ++i0)
    for (int64_t i1 = 0; i1 < dims[1]; ++i1)
      for (int64_t i2 = 0; i2 < dims[2]; ++i2)
        for (int64_t i3 = 0; i3 < dims[3]; ++i3)
          for (int64_t i4 = 0; i4 < dims[4]; ++i4) {
            int64_t abase = i0 * astr[0] + i1 * astr[1] + i2 * astr[2] + i3 * astr[3] + i4 * astr[4];
            int64_t bbase = i0 * bstr[0] + i1 * bstr[1] + i2 * bstr[2] + i3 * bstr[3] + i4 * bstr[4];
            const int64_t n = dims[5];
            const int64_t as = astr[5], bs = bstr[5];
            for (int64_t i5 = 0; i5 < n; ++i5, ++o) fn(o, abase + i5 * as, bbase + i5 * bs);
          }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting.
// ---------------------------------------------------------------------------
namespace detail {

template <typename FwdFn, typename BwdA, typename BwdB>
inline Tensor binary_op(const Tensor& a, const Tensor& b, FwdFn fwd, BwdA ga, BwdB gb) {
  if (a.shape() == b.shape()) {  // flat fast path: no broadcast index arithmetic
    Tensor out = make_result(a.shape(), a.requires_grad() || b.requires_grad());
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) op[i] = fwd(ap[i], bp[i]);
    if (out.requires_grad()) {
      attach_parents(out, {a, b});
      auto an = a.node();
      auto bn = b.node();
      out.node()->backward = [an, bn, n, ga, gb](const std::vector<double>& g, GradMap& m) {
        const double* ap = an->value->data();
        const double* bp = bn->value->data();
        if (an->requires_grad) {
          auto [da, fresh] = m.accum_fresh(an.get());
          double* dp = da->data();
          if (fresh) {
            for (int64_t i = 0; i < n; ++i) dp[i] = g[i] * ga(ap[i], bp[i]);
          } else {
            for (int64_t i = 0; i < n; ++i) dp[i] += g[i] * ga(ap[i], bp[i]);
          }
        }
        if (bn->requires_grad) {
          auto [db, fresh] = m.accum_fresh(bn.get());
          double* dp = db->data();
          if (fresh) {
            for (int64_t i = 0; i < n; ++i) dp[i] = g[i] * gb(ap[i], bp[i]);
          } else {
            for (int64_t i = 0; i < n; ++i) dp[i] += g[i] * gb(ap[i], bp[i]);
          }
        }
      };
    }
    return out;
  }
  BcastPlan plan = broadcast_plan(a.shape(), b.shape());
  Tensor out = make_result(plan.oshape, a.requires_grad() || b.requires_grad());
  const double* ap = a.data();
  const double* bp = b.data();
  double* op = out.data();
  bcast_for_each(plan, [&](int64_t o, int64_t ai, int64_t bi) { op[o] = fwd(ap[ai], bp[bi]); });
  if (out.requires_grad()) {
    attach_parents(out, {a, b});
    auto an = a.node();
    auto bn = b.node();
    auto ov = out.node()->value;
    out.node()->backward = [an, bn, ov, plan, ga, gb](const std::vector<double>& g, GradMap& m) {
      const double* ap = an->value->data();
      const double* bp = bn->value->data();
      if (an->requires_grad) {
        std::vector<double>& da = m.accum(an.get());
        bcast_for_each(plan, [&](int64_t o, int64_t ai, int64_t bi) { da[ai] += g[o] * ga(ap[ai], bp[bi]); });
      }
      if (bn->requires_grad) {
        std::vector<double>& db = m.accum(bn.get());
        bcast_for_each(plan, [&](int64_t o, int64_t ai, int64_t bi) { db[bi] += g[o] * gb(ap[ai], bp[bi]); });
      }
    };
  }
  return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops.
// ---------------------------------------------------------------------------
namespace detail {

template <typename FwdFn, typename BwdFn>
inline Tensor unary_op(const Tensor& a, FwdFn fwd, BwdFn bwd) {
  Tensor out = make_result(a.shape(), a.requires_grad());
  const double* ap = a.data();
  double* op = out.data();
  const int64_t n = a.size();
  for (int64_t i = 0; i < n; ++i) op[i] = fwd(ap[i]);
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    auto ov = out.node()->value;
    out.node()->backward = [an, ov, bwd](const std::vector<double>& g, GradMap& m) {
      auto [da, fresh] = m.accum_fresh(an.get());
      double* dp = da->data();
      const double* ap = an->value->data();
      const double* yp = ov->data();
      if (fresh) {
        for (size_t i = 0; i < g.size(); ++i) dp[i] = g[i] * bwd(ap[i], yp[i]);
      } else {
        for (size_t i = 0; i < g.size(); ++i) dp[i] += g[i] * bwd(ap[i], yp[i]);
      }
    };
  }
  return out;
}

}  // namespace detail

inline Tensor neg(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor smul(const Tensor& a, double c) {
  return detail::unary_op(a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

inline Tensor sadd(const Tensor& a, double c) {
  return detail::unary_op(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

inline Tensor exp_t(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log_t(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt_t(const Tensor& a) {
  return detail::unary_op(a, [](double x) { return std::sqrt(x); },
                          [](double, double y) { return 0.5 / y; });
}

// Numerically safe softplus with the standard sigmoid derivative.
inline Tensor softplus(const Tensor& a) {
  return detail::unary_op(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

// Exact (erf-based) GELU; smooth everywhere, which keeps central finite
// differences meaningful.
inline Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return detail::unary_op(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

// ---------------------------------------------------------------------------
// Shape ops.
// ---------------------------------------------------------------------------

// Zero-copy view with a new shape (same element count, row-major layout).
inline Tensor reshape(const Tensor& a, Shape shape) {
  // A single -1 extent is inferred.
  int64_t known = 1;
  int infer = -1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw std::invalid_argument("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || a.size() % known != 0)
      throw std::invalid_argument("reshape: cannot infer extent for " + shape_str(a.shape()));
    shape[infer] = a.size() / known;
  }
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = a.node()->value;  // shared buffer
  n->requires_grad = a.requires_grad();
  Tensor out(std::move(n));
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an](const std::vector<double>& g, GradMap& m) {
      auto [da, fresh] = m.accum_fresh(an.get());
      double* dp = da->data();
      if (fresh) {
        std::copy(g.begin(), g.end(), dp);
      } else {
        for (size_t i = 0; i < g.size(); ++i) dp[i] += g[i];
      }
    };
  }
  return out;
}

inline Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const int r = a.rank();
  if (static_cast<int>(axes.size()) != r) throw std::invalid_argument("permute: axes rank mismatch");
  std::vector<bool> seen(r, false);
  Shape oshape(r);
  for (int i = 0; i < r; ++i) {
    if (axes[i] < 0 || axes[i] >= r || seen[axes[i]]) throw std::invalid_argument("permute: invalid axes");
    seen[axes[i]] = true;
    oshape[i] = a.shape()[axes[i]];
  }
  std::vector<int64_t> astrides(r, 1);
  for (int i = r - 2; i >= 0; --i) astrides[i] = astrides[i + 1] * a.shape()[i + 1];
  std::vector<int64_t> gather(r);  // stride in a for each output axis
  for (int i = 0; i < r; ++i) gather[i] = astrides[axes[i]];

  Tensor out = make_result(oshape, a.requires_grad());
  const double* ap = a.data();
  double* op = out.data();
  std::vector<int64_t> idx(r, 0);
  const int64_t n = a.size();
  int64_t ai = 0;
  for (int64_t o = 0; o < n; ++o) {
    op[o] = ap[ai];
    for (int d = r - 1; d >= 0; --d) {
      idx[d]++;
      ai += gather[d];
      if (idx[d] < oshape[d]) break;
      ai -= gather[d] * oshape[d];
      idx[d] = 0;
    }
  }
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an, gather, oshape, r](const std::vector<double>& g, GradMap& m) {
      auto [dav, fresh] = m.accum_fresh(an.get());
      double* da = dav->data();
      std::vector<int64_t> idx(r, 0);
      int64_t ai = 0;
      for (size_t o = 0; o < g.size(); ++o) {
        if (fresh)  // the scatter covers every parent element exactly once
          da[ai] = g[o];
        else
          da[ai] += g[o];
        for (int d = r - 1; d >= 0; --d) {
          idx[d]++;
          ai += gather[d];
          if (idx[d] < oshape[d]) break;
          ai -= gather[d] * oshape[d];
          idx[d] = 0;
        }
      }
    };
  }
  return out;
}

inline Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("slice: bad axis");
  if (start < 0 || len < 0 || start + len > a.shape()[axis])
    throw std::invalid_argument("slice: range out of bounds for " + shape_str(a.shape()));
  Shape oshape = a.shape();
  oshape[axis] = len;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];
  const int64_t adim = a.shape()[axis];

  Tensor out = make_result(oshape, a.requires_grad());
  const double* ap = a.data();
  double* op = out.data();
  for (int64_t i = 0; i < outer; ++i)
    std::copy_n(ap + (i * adim + start) * inner, len * inner, op + i * len * inner);
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an, outer, inner, adim, start, len](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& da = m.accum(an.get());
      for (int64_t i = 0; i < outer; ++i) {
        const double* gp = g.data() + i * len * inner;
        double* dp = da.data() + (i * adim + start) * inner;
        for (int64_t j = 0; j < len * inner; ++j) dp[j] += gp[j];
      }
    };
  }
  return out;
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  Shape oshape = parts[0].shape();
  int64_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rank() != r) throw std::invalid_argument("concat: rank mismatch");
    for (int i = 0; i < r; ++i)
      if (i != axis && p.shape()[i] != oshape[i])
        throw std::invalid_argument("concat: shape mismatch " + shape_str(p.shape()));
    total += p.shape()[axis];
    rg = rg || p.requires_grad();
  }
  oshape[axis] = total;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= oshape[i];
  for (int i = axis + 1; i < r; ++i) inner *= oshape[i];

  Tensor out = make_result(oshape, rg);
  double* op = out.data();
  int64_t offset = 0;
  for (const auto& p : parts) {
    const int64_t pdim = p.shape()[axis];
    const double* pp = p.data();
    for (int64_t i = 0; i < outer; ++i)
      std::copy_n(pp + i * pdim * inner, pdim * inner, op + (i * total + offset) * inner);
    offset += pdim;
  }
  if (rg) {
    std::vector<NodePtr> nodes;
    std::vector<int64_t> dims;
    for (const auto& p : parts) {
      nodes.push_back(p.node());
      dims.push_back(p.shape()[axis]);
      if (p.requires_grad()) out.node()->parents.push_back(p.node());
    }
    out.node()->backward = [nodes, dims, outer, inner, total](const std::vector<double>& g, GradMap& m) {
      int64_t offset = 0;
      for (size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k]->requires_grad) {
          auto [dpv, fresh] = m.accum_fresh(nodes[k].get());
          for (int64_t i = 0; i < outer; ++i) {
            const double* gp = g.data() + (i * total + offset) * inner;
            double* d = dpv->data() + i * dims[k] * inner;
            if (fresh) {
              std::copy_n(gp, dims[k] * inner, d);
            } else {
              for (int64_t j = 0; j < dims[k] * inner; ++j) d[j] += gp[j];
            }
          }
        }
        offset += dims[k];
      }
    };
  }
  return out;
}

// Cyclic roll along an axis; shift > 0 moves content toward higher indices.
inline Tensor roll(const Tensor& a, int64_t shift, int axis) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("roll: bad axis");
  const int64_t d = a.shape()[axis];
  int64_t s = ((shift % d) + d) % d;
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];

  Tensor out = make_result(a.shape(), a.requires_grad());
  const double* ap = a.data();
  double* op = out.data();
  for (int64_t i = 0; i < outer; ++i)
    for (int64_t j = 0; j < d; ++j)
      std::copy_n(ap + (i * d + j) * inner, inner, op + (i * d + (j + s) % d) * inner);
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an, outer, inner, d, s](const std::vector<double>& g, GradMap& m) {
      auto [dav, fresh] = m.accum_fresh(an.get());
      for (int64_t i = 0; i < outer; ++i)
        for (int64_t j = 0; j < d; ++j) {
          const double* gp = g.data() + (i * d + (j + s) % d) * inner;
          double* dp = dav->data() + (i * d + j) * inner;
          if (fresh) {
            std::copy_n(gp, inner, dp);
          } else {
            for (int64_t k = 0; k < inner; ++k) dp[k] += gp[k];
          }
        }
    };
  }
  return out;
}

// Row gather from a 2-D table (embedding lookup). Backward scatter-adds.
inline Tensor rows(const Tensor& table, const std::vector<int64_t>& idx) {
  if (table.rank() != 2) throw std::invalid_argument("rows: table must be 2-D");
  const int64_t nrows = table.dim(0), d = table.dim(1);
  for (int64_t i : idx)
    if (i < 0 || i >= nrows) throw std::invalid_argument("rows: index " + std::to_string(i) + " out of range");
  Tensor out = make_result({static_cast<int64_t>(idx.size()), d}, table.requires_grad());
  const double* tp = table.data();
  double* op = out.data();
  for (size_t k = 0; k < idx.size(); ++k) std::copy_n(tp + idx[k] * d, d, op + static_cast<int64_t>(k) * d);
  if (out.requires_grad()) {
    attach_parents(out, {table});
    auto tn = table.node();
    out.node()->backward = [tn, idx, d](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& dt = m.accum(tn.get());
      for (size_t k = 0; k < idx.size(); ++k) {
        const double* gp = g.data() + static_cast<int64_t>(k) * d;
        double* dp = dt.data() + idx[k] * d;
        for (int64_t j = 0; j < d; ++j) dp[j] += gp[j];
      }
    };
  }
  return out;
}

// Main diagonal of a square matrix.
inline Tensor take_diag(const Tensor& a) {
  if (a.rank() != 2 || a.dim(0) != a.dim(1)) throw std::invalid_argument("take_diag: need square matrix");
  const int64_t n = a.dim(0);
  Tensor out = make_result({n}, a.requires_grad());
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i * n + i];
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an, n](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& da = m.accum(an.get());
      for (int64_t i = 0; i < n; ++i) da[i * n + i] += g[i];
    };
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions.
// ---------------------------------------------------------------------------
inline Tensor sum_all(const Tensor& a) {
  Tensor out = make_result({1}, a.requires_grad());
  double acc = 0.0;
  const double* ap = a.data();
  for (int64_t i = 0; i < a.size(); ++i) acc += ap[i];
  out.data()[0] = acc;
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& da = m.accum(an.get());
      for (auto& v : da) v += g[0];
    };
  }
  return out;
}

inline Tensor mean_all(const Tensor& a) { return smul(sum_all(a), 1.0 / static_cast<double>(a.size())); }

inline Tensor sum_axis(const Tensor& a, int axis, bool keepdim = false) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw std::invalid_argument("sum_axis: bad axis");
  int64_t outer = 1, inner = 1;
  const int64_t d = a.shape()[axis];
  for (int i = 0; i < axis; ++i) outer *= a.shape()[i];
  for (int i = axis + 1; i < r; ++i) inner *= a.shape()[i];
  Shape oshape;
  for (int i = 0; i < r; ++i) {
    if (i == axis) {
      if (keepdim) oshape.push_back(1);
    } else {
      oshape.push_back(a.shape()[i]);
    }
  }
  if (oshape.empty()) oshape.push_back(1);

  Tensor out = make_result(oshape, a.requires_grad());
  const double* ap = a.data();
  double* op = out.data();
  std::fill_n(op, outer * inner, 0.0);
  for (int64_t i = 0; i < outer; ++i)
    for (int64_t j = 0; j < d; ++j) {
      const double* src = ap + (i * d + j) * inner;
      double* dst = op + i * inner;
      for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
    }
  if (out.requires_grad()) {
    attach_parents(out, {a});
    auto an = a.node();
    out.node()->backward = [an, outer, inner, d](const std::vector<double>& g, GradMap& m) {
      std::vector<double>& da = m.accum(an.get());
      for (int64_t i = 0; i < outer; ++i)
        for (int64_t j = 0; j < d; ++j) {
          double* dst = da.data() + (i * d + j) * inner;
          const double* src = g.data() + i * inner;
          for (int64_t k = 0; k < inner; ++k) dst[k] += src[k];
        }
    };
  }
  return out;
}

inline Tensor mean_axis(const Tensor& a, int axis, bool keepdim = false) {
  int ax = axis < 0 ? axis + a.rank() : axis;
  return smul(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

// Sum of squared entries as a scalar; the workhorse of the L2 losses.
inline Tensor sum_squares(const Tensor& a) { return sum_all(mul(a, a)); }

}  // namespace imupose
