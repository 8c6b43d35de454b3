#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "imupose/rng.hpp"
#include "imupose/tensor.hpp"

namespace imupose {

// All learnable tensors of a model, addressable by path ("ugsa.pq",
// "htt.stage1.block0.ff.w1", ...). Registration order is fixed by the model
// constructor, which makes parameter iteration — and hence optimizer updates,
// checkpoint layout, and gradient-probe selection — deterministic.
class ParamStore {
 public:
  // Affine weight [fan_in, fan_out], uniform in +-sqrt(6/(fan_in+fan_out)).
  Tensor weight(const std::string& path, int64_t fan_in, int64_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> v(fan_in * fan_out);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return put(path, Tensor::from({fan_in, fan_out}, std::move(v), true));
  }

  // Embedding table [rows, dim]. One row is active per lookup, so each row is
  // initialized like a fan_in=1 map onto dim outputs.
  Tensor embedding(const std::string& path, int64_t rows, int64_t dim, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(1 + dim));
    std::vector<double> v(rows * dim);
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return put(path, Tensor::from({rows, dim}, std::move(v), true));
  }

  Tensor zeros(const std::string& path, Shape shape) { return put(path, Tensor::zeros(std::move(shape), true)); }

  Tensor ones(const std::string& path, Shape shape) { return put(path, Tensor::full(std::move(shape), 1.0, true)); }

  Tensor scalar(const std::string& path, double value) { return put(path, Tensor::from({1}, {value}, true)); }

  bool has(const std::string& path) const { return by_path_.count(path) > 0; }

  const Tensor& get(const std::string& path) const {
    auto it = by_path_.find(path);
    if (it == by_path_.end()) throw std::out_of_range("ParamStore: no parameter at path '" + path + "'");
    return it->second;
  }

  const std::vector<std::string>& paths() const { return order_; }
  size_t count() const { return order_.size(); }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& p : order_) n += by_path_.at(p).size();
    return n;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& p : order_) fn(p, by_path_.at(p));
  }

 private:
  Tensor put(const std::string& path, Tensor t) {
    if (has(path)) throw std::invalid_argument("ParamStore: duplicate path '" + path + "'");
    order_.push_back(path);
    by_path_.emplace(path, t);
    return t;
  }

  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> by_path_;
};

// Spec'd verification entry point: compare reverse-mode gradients of
// loss_fn() against central differences at probe_count coordinates chosen
// round-robin across parameter tensors (uniform random offset within each).
inline double finite_diff_grad_check(const std::function<Tensor()>& loss_fn, const ParamStore& params,
                                     int64_t probe_count, double eps, Rng& rng) {
  if (probe_count == 0) return 0.0;
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) throw std::domain_error("finite_diff_grad_check: non-finite loss");
  GradMap grads = backward(loss);

  double max_rel = 0.0;
  const auto& paths = params.paths();
  for (int64_t p = 0; p < probe_count; ++p) {
    Tensor leaf = params.get(paths[p % paths.size()]);
    const int64_t i = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(leaf.size())));
    const std::vector<double>* g = grads.find(leaf.node().get());
    const double g_ad = g ? (*g)[i] : 0.0;
    double* slot = leaf.data() + i;
    const double orig = *slot;
    *slot = orig + eps;
    const double fp = loss_fn().item();
    *slot = orig - eps;
    const double fm = loss_fn().item();
    *slot = orig;
    const double g_fd = (fp - fm) / (2.0 * eps);
    max_rel = std::max(max_rel, std::abs(g_ad - g_fd) / std::max(1e-8, std::abs(g_ad) + std::abs(g_fd)));
  }
  return max_rel;
}

}  // namespace imupose
