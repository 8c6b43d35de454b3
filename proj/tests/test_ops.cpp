#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "imupose/gradcheck.hpp"
#include "imupose/ops.hpp"
#include "imupose/rng.hpp"

using namespace imupose;
using Catch::Matchers::WithinAbs;

namespace {

Tensor randn(Shape shape, Rng& rng, bool rg = true) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), rg);
}

// Textbook attention computed with plain loops; the oracle for the kernel.
std::vector<double> attention_oracle(const std::vector<double>& q, const std::vector<double>& k,
                                     const std::vector<double>& v, int64_t n, int64_t m, int64_t d, double scale,
                                     const std::vector<double>* divisors, const std::vector<double>* mask) {
  std::vector<double> out(n * d, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> score(m);
    for (int64_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (int64_t c = 0; c < d; ++c) dot += q[i * d + c] * k[j * d + c];
      score[j] = dot / (scale * (divisors ? (*divisors)[j] : 1.0));
      if (mask) score[j] += (*mask)[i * m + j];
    }
    double mx = *std::max_element(score.begin(), score.end());
    double z = 0.0;
    for (auto& s : score) {
      s = std::exp(s - mx);
      z += s;
    }
    for (int64_t j = 0; j < m; ++j)
      for (int64_t c = 0; c < d; ++c) out[i * d + c] += score[j] / z * v[j * d + c];
  }
  return out;
}

}  // namespace

TEST_CASE("matmul matches loop oracle and finite differences") {
  Rng rng(21);
  Tensor a = randn({3, 4}, rng);
  Tensor b = randn({4, 5}, rng);
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{3, 5});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += a.data()[i * 4 + k] * b.data()[k * 5 + j];
      REQUIRE_THAT(c.data()[i * 5 + j], WithinAbs(acc, 1e-13));
    }
  REQUIRE_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), std::invalid_argument);

  auto loss = [&]() { return sum_squares(matmul(a, b)); };
  REQUIRE(check_gradients(loss, {a, b}).max_rel_err < 1e-7);
}

TEST_CASE("bmm and bmm_nt agree with per-slice matmul") {
  Rng rng(22);
  Tensor a = randn({2, 3, 3, 4}, rng);
  Tensor b = randn({2, 3, 4, 5}, rng);
  Tensor c = bmm(a, b);
  REQUIRE(c.shape() == Shape{2, 3, 3, 5});
  for (int s = 0; s < 6; ++s) {
    Tensor as = Tensor::from({3, 4}, {a.data() + s * 12, a.data() + (s + 1) * 12});
    Tensor bs = Tensor::from({4, 5}, {b.data() + s * 20, b.data() + (s + 1) * 20});
    Tensor cs = matmul(as, bs);
    for (int i = 0; i < 15; ++i) REQUIRE(c.data()[s * 15 + i] == cs.data()[i]);
  }

  Tensor bt = randn({2, 3, 5, 4}, rng);
  Tensor cnt = bmm_nt(a, bt);
  REQUIRE(cnt.shape() == Shape{2, 3, 3, 5});
  for (int s = 0; s < 6; ++s)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += a.data()[s * 12 + i * 4 + k] * bt.data()[s * 20 + j * 4 + k];
        REQUIRE_THAT(cnt.data()[s * 15 + i * 5 + j], WithinAbs(acc, 1e-13));
      }

  auto l1 = [&]() { return sum_squares(bmm(a, b)); };
  REQUIRE(check_gradients(l1, {a, b}).max_rel_err < 1e-6);
  auto l2 = [&]() { return sum_squares(bmm_nt(a, bt)); };
  REQUIRE(check_gradients(l2, {a, bt}).max_rel_err < 1e-6);
}

TEST_CASE("softmax hand-checked values") {
  Tensor u = softmax(Tensor::from({3}, {0, 0, 0}), 0);
  for (int i = 0; i < 3; ++i) REQUIRE_THAT(u.data()[i], WithinAbs(1.0 / 3.0, 1e-15));

  Tensor v = softmax(Tensor::from({3}, {std::log(2.0), std::log(1.0), std::log(1.0)}), 0);
  REQUIRE_THAT(v.data()[0], WithinAbs(0.5, 1e-14));
  REQUIRE_THAT(v.data()[1], WithinAbs(0.25, 1e-14));
  REQUIRE_THAT(v.data()[2], WithinAbs(0.25, 1e-14));

  // max-subtraction keeps huge logits finite
  Tensor w = softmax(Tensor::from({2}, {1000.0, 0.0}), 0);
  REQUIRE(w.data()[0] == 1.0);
  REQUIRE(w.data()[1] == 0.0);  // e^-1000 underflows to exactly zero
  REQUIRE(std::isfinite(w.data()[0]));
}

TEST_CASE("softmax rows sum to one and reject non-finite input") {
  Rng rng(23);
  Tensor x = randn({4, 7}, rng, false);
  Tensor y = softmax(x, 1);
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 7; ++j) {
      REQUIRE(y.data()[i * 7 + j] >= 0.0);
      s += y.data()[i * 7 + j];
    }
    REQUIRE_THAT(s, WithinAbs(1.0, 1e-12));
  }
  Tensor bad = Tensor::from({3}, {1.0, std::nan(""), 2.0});
  REQUIRE_THROWS_WITH(softmax(bad, 0), Catch::Matchers::ContainsSubstring("index 1"));
}

TEST_CASE("softmax and log_softmax gradients") {
  Rng rng(24);
  Tensor x = randn({3, 5}, rng);
  Tensor w = randn({3, 5}, rng, false);
  auto l1 = [&]() { return sum_all(mul(softmax(x, 1), w)); };
  REQUIRE(check_gradients(l1, {x}).max_rel_err < 1e-6);
  auto l2 = [&]() { return sum_all(mul(log_softmax(x, 1), w)); };
  REQUIRE(check_gradients(l2, {x}).max_rel_err < 1e-6);
  // log_softmax == log(softmax)
  Tensor ls = log_softmax(x, 1);
  Tensor s = softmax(x, 1);
  for (int64_t i = 0; i < x.size(); ++i) REQUIRE_THAT(ls.data()[i], WithinAbs(std::log(s.data()[i]), 1e-12));
}

TEST_CASE("layer_norm hand-checked values") {
  Tensor gain1 = Tensor::from({3}, {1, 1, 1});
  Tensor bias0 = Tensor::from({3}, {0, 0, 0});

  // constant slice: zero variance guarded by eps
  Tensor c = layer_norm(Tensor::from({3}, {5, 5, 5}), gain1, bias0);
  for (int i = 0; i < 3; ++i) REQUIRE(c.data()[i] == 0.0);

  // mean 0, variance ~1 after normalization
  Tensor n = layer_norm(Tensor::from({3}, {1, 2, 3}), gain1, bias0);
  double mean = (n.data()[0] + n.data()[1] + n.data()[2]) / 3.0;
  double var = 0.0;
  for (int i = 0; i < 3; ++i) var += (n.data()[i] - mean) * (n.data()[i] - mean);
  var /= 3.0;
  REQUIRE_THAT(mean, WithinAbs(0.0, 1e-10));
  REQUIRE_THAT(var, WithinAbs(1.0, 1e-4));  // eps shifts variance slightly below 1

  // affine dominance
  Tensor a = layer_norm(Tensor::from({3}, {1, 2, 3}), Tensor::from({3}, {0, 0, 0}), Tensor::from({3}, {7, 7, 7}));
  for (int i = 0; i < 3; ++i) REQUIRE(a.data()[i] == 7.0);

  REQUIRE_THROWS_AS(layer_norm(Tensor::from({4}, {1, 2, 3, 4}), gain1, bias0), std::invalid_argument);
}

TEST_CASE("layer_norm normalizes each row of a batch within 1e-10") {
  Rng rng(25);
  Tensor x = randn({6, 16}, rng, false);
  for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = x.data()[i] * 3.0 + 2.0;
  Tensor g = Tensor::full({16}, 1.0);
  Tensor b = Tensor::zeros({16});
  Tensor y = layer_norm(x, g, b);
  for (int i = 0; i < 6; ++i) {
    double mean = 0.0;
    for (int j = 0; j < 16; ++j) mean += y.data()[i * 16 + j];
    mean /= 16.0;
    REQUIRE_THAT(mean, WithinAbs(0.0, 1e-10));
  }
}

TEST_CASE("layer_norm gradients for input, gain, and bias") {
  Rng rng(26);
  Tensor x = randn({4, 6}, rng);
  Tensor g = randn({6}, rng);
  Tensor b = randn({6}, rng);
  Tensor w = randn({4, 6}, rng, false);
  auto loss = [&]() { return sum_all(mul(layer_norm(x, g, b), w)); };
  REQUIRE(check_gradients(loss, {x, g, b}).max_rel_err < 1e-6);
}

TEST_CASE("single-key attention returns V exactly") {
  Rng rng(27);
  Tensor q = randn({1, 8}, rng, false);
  Tensor k = randn({1, 8}, rng, false);
  Tensor v = randn({1, 8}, rng, false);
  Tensor out = scaled_dot_attention(q, k, v, std::sqrt(8.0));
  for (int i = 0; i < 8; ++i) REQUIRE(out.data()[i] == v.data()[i]);
}

TEST_CASE("attention matches loop oracle with and without divisors") {
  Rng rng(28);
  const int64_t n = 5, m = 7, d = 8;
  Tensor q = randn({n, d}, rng, false);
  Tensor k = randn({m, d}, rng, false);
  Tensor v = randn({m, d}, rng, false);
  const double scale = std::sqrt(static_cast<double>(d));

  Tensor plain = scaled_dot_attention(q, k, v, scale);
  auto want = attention_oracle(q.values(), k.values(), v.values(), n, m, d, scale, nullptr, nullptr);
  for (int64_t i = 0; i < n * d; ++i) REQUIRE_THAT(plain.data()[i], WithinAbs(want[i], 1e-12));

  std::vector<double> divs(m);
  for (auto& x : divs) x = 0.5 + rng.uniform01() * 2.0;
  Tensor dt = Tensor::from({m}, std::vector<double>(divs));
  Tensor weighted = scaled_dot_attention(q, k, v, scale, dt);
  want = attention_oracle(q.values(), k.values(), v.values(), n, m, d, scale, &divs, nullptr);
  for (int64_t i = 0; i < n * d; ++i) REQUIRE_THAT(weighted.data()[i], WithinAbs(want[i], 1e-12));

  REQUIRE_THROWS_WITH(scaled_dot_attention(q, k, v, scale, Tensor::from({m}, {1, 1, 0, 1, 1, 1, 1})),
                      Catch::Matchers::ContainsSubstring("non-positive"));
}

TEST_CASE("masked-out key gets vanishing weight") {
  Rng rng(29);
  const int64_t n = 3, m = 4, d = 6;
  Tensor q = randn({n, d}, rng, false);
  Tensor k = randn({m, d}, rng, false);
  std::vector<double> mask(n * m, 0.0);
  for (int64_t i = 0; i < n; ++i) mask[i * m + 2] = -1e9;
  Tensor mt = Tensor::from({n, m}, std::move(mask));
  Tensor w = attention_weights(q, k, std::sqrt(static_cast<double>(d)), Tensor(), mt);
  for (int64_t i = 0; i < n; ++i) REQUIRE(w.data()[i * m + 2] < 1e-30);
}

TEST_CASE("attention gradients flow to all inputs") {
  Rng rng(30);
  const int64_t n = 3, m = 4, d = 5;
  Tensor q = randn({n, d}, rng);
  Tensor k = randn({m, d}, rng);
  Tensor v = randn({m, d}, rng);
  Tensor divs = Tensor::from({m}, {1.1, 0.9, 1.3, 0.7}, true);
  auto loss = [&]() { return sum_squares(scaled_dot_attention(q, k, v, std::sqrt(5.0), divs)); };
  REQUIRE(check_gradients(loss, {q, k, v, divs}).max_rel_err < 1e-6);
}

TEST_CASE("linear applies affine over the last axis") {
  Rng rng(31);
  Tensor x = randn({2, 3, 4}, rng);
  Tensor w = randn({4, 5}, rng);
  Tensor b = randn({5}, rng);
  Tensor y = linear(x, w, b);
  REQUIRE(y.shape() == Shape{2, 3, 5});
  for (int r = 0; r < 6; ++r)
    for (int j = 0; j < 5; ++j) {
      double acc = b.data()[j];
      for (int c = 0; c < 4; ++c) acc += x.data()[r * 4 + c] * w.data()[c * 5 + j];
      REQUIRE_THAT(y.data()[r * 5 + j], WithinAbs(acc, 1e-13));
    }
  auto loss = [&]() { return sum_squares(linear(x, w, b)); };
  REQUIRE(check_gradients(loss, {x, w, b}).max_rel_err < 1e-7);
}

TEST_CASE("l2_normalize_rows yields unit rows and clean gradients") {
  Rng rng(32);
  Tensor x = randn({4, 6}, rng);
  Tensor y = l2_normalize_rows(x);
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    for (int j = 0; j < 6; ++j) s += y.data()[i * 6 + j] * y.data()[i * 6 + j];
    REQUIRE_THAT(s, WithinAbs(1.0, 1e-10));
  }
  Tensor w = randn({4, 6}, rng, false);
  auto loss = [&]() { return sum_all(mul(l2_normalize_rows(x), w)); };
  REQUIRE(check_gradients(loss, {x}).max_rel_err < 1e-6);
}

TEST_CASE("quadratic gradcheck sanity") {
  Rng rng(33);
  Tensor th = randn({10}, rng);
  auto loss = [&]() { return sum_squares(th); };
  auto rep = check_gradients(loss, {th});
  REQUIRE(rep.max_rel_err < 1e-9);
  REQUIRE(check_gradients_at(loss, {}).checked == 0);
  REQUIRE(check_gradients_at(loss, {}).max_rel_err == 0.0);
}
