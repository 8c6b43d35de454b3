#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "imupose/tensor.hpp"

namespace imupose {

// Relative error between an analytic and a finite-difference gradient entry.
inline double grad_rel_err(double g_ad, double g_fd) {
  return std::abs(g_ad - g_fd) / std::max(1e-8, std::abs(g_ad) + std::abs(g_fd));
}

// Central difference of a scalar-valued function wrt one storage slot.
// The slot is restored exactly afterwards.
template <typename Fn>
inline double central_diff(Fn&& fn, double* slot, double eps = 1e-5) {
  const double orig = *slot;
  *slot = orig + eps;
  const double fp = fn();
  *slot = orig - eps;
  const double fm = fn();
  *slot = orig;
  return (fp - fm) / (2.0 * eps);
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked = 0;
};

// Compare the tape gradient of `loss_fn()` against central differences for
// every entry of every tensor in `leaves`. `loss_fn` must rebuild the graph
// from the leaves' current storage each call.
inline GradCheckReport check_gradients(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& leaves,
                                       double eps = 1e-5) {
  Tensor loss = loss_fn();
  GradMap grads = backward(loss);
  GradCheckReport rep;
  auto eval = [&]() { return loss_fn().item(); };
  for (const Tensor& leaf : leaves) {
    const std::vector<double>* g = grads.find(leaf.node().get());
    Tensor mut = leaf;
    for (int64_t i = 0; i < leaf.size(); ++i) {
      const double g_ad = g ? (*g)[i] : 0.0;
      const double g_fd = central_diff(eval, mut.data() + i, eps);
      rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(g_ad, g_fd));
      rep.checked++;
    }
  }
  return rep;
}

// Same comparison but restricted to explicit (tensor, flat index) probes,
// for models too large to sweep exhaustively.
inline GradCheckReport check_gradients_at(const std::function<Tensor()>& loss_fn,
                                          const std::vector<std::pair<Tensor, int64_t>>& probes, double eps = 1e-5) {
  Tensor loss = loss_fn();
  GradMap grads = backward(loss);
  GradCheckReport rep;
  auto eval = [&]() { return loss_fn().item(); };
  for (const auto& [leaf, i] : probes) {
    const std::vector<double>* g = grads.find(leaf.node().get());
    const double g_ad = g ? (*g)[i] : 0.0;
    Tensor mut = leaf;
    const double g_fd = central_diff(eval, mut.data() + i, eps);
    rep.max_rel_err = std::max(rep.max_rel_err, grad_rel_err(g_ad, g_fd));
    rep.checked++;
  }
  return rep;
}

}  // namespace imupose
