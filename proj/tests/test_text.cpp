#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "imupose/datagen.hpp"
#include "imupose/text_encoder.hpp"
#include "imupose/transformer.hpp"

using namespace imupose;

namespace {

TextLabel seq_label(const std::string& text, int64_t a, int64_t b) {
  return {text, a, b, TextLabel::Level::kSequence};
}
TextLabel frame_label(const std::string& text, int64_t a, int64_t b) {
  return {text, a, b, TextLabel::Level::kFrame};
}

std::vector<std::string> texts_of(const std::vector<TextLabel>& ls) {
  std::vector<std::string> out;
  for (const auto& l : ls) out.push_back(l.text);
  return out;
}

}  // namespace

TEST_CASE("sinusoidal encoding hits the defining identities") {
  Tensor p = sinusoidal_encoding({0, 1, 7, 79}, 192);
  REQUIRE(p.shape() == Shape{4, 192});
  // position 0: all sin components exactly 0, all cos components exactly 1
  for (int64_t k = 0; k < 192; k += 2) {
    REQUIRE(p.values()[k] == 0.0);
    REQUIRE(p.values()[k + 1] == 1.0);
  }
  // every row has squared norm d/2
  for (int64_t i = 0; i < 4; ++i) {
    double sq = 0.0;
    for (int64_t k = 0; k < 192; ++k) sq += p.values()[i * 192 + k] * p.values()[i * 192 + k];
    REQUIRE(std::fabs(sq - 96.0) < 1e-10);
  }
  // neighboring positions must be distinguishable
  double diff = 0.0;
  for (int64_t k = 0; k < 192; ++k) diff = std::max(diff, std::fabs(p.values()[k] - p.values()[192 + k]));
  REQUIRE(diff > 0.1);
}

TEST_CASE("single-head attention matches the unbatched primitive") {
  Rng rng(3);
  ParamStore ps;
  register_attention(ps, "a", 4, rng);
  std::vector<double> xv(3 * 4);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from({1, 3, 4}, xv, false);

  Tensor got = multi_head_attention(x, x, ps, "a", 1);

  Tensor q = linear(x, ps.get("a.wq"), ps.get("a.bq"));
  Tensor k = linear(x, ps.get("a.wk"));
  Tensor v = linear(x, ps.get("a.wv"), ps.get("a.bv"));
  Tensor want = linear(scaled_dot_attention(q, k, v, 2.0), ps.get("a.wo"), ps.get("a.bo"));

  REQUIRE(got.shape() == want.shape());
  for (int64_t i = 0; i < got.size(); ++i) REQUIRE(got.values()[i] == Catch::Approx(want.values()[i]).margin(1e-13));
}

TEST_CASE("multi-head attention equals per-head slicing") {
  Rng rng(4);
  const int64_t d = 8, heads = 2, n = 5;
  ParamStore ps;
  register_attention(ps, "a", d, rng);
  std::vector<double> xv(2 * n * d);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from({2, n, d}, xv, false);

  Tensor got = multi_head_attention(x, x, ps, "a", heads);

  Tensor q = linear(x, ps.get("a.wq"), ps.get("a.bq"));
  Tensor k = linear(x, ps.get("a.wk"));
  Tensor v = linear(x, ps.get("a.wv"), ps.get("a.bv"));
  std::vector<Tensor> per_head;
  for (int64_t h = 0; h < heads; ++h) {
    Tensor qs = slice(q, 2, h * d / heads, d / heads);
    Tensor ks = slice(k, 2, h * d / heads, d / heads);
    Tensor vs = slice(v, 2, h * d / heads, d / heads);
    per_head.push_back(scaled_dot_attention(qs, ks, vs, std::sqrt(static_cast<double>(d / heads))));
  }
  Tensor want = linear(concat(per_head, 2), ps.get("a.wo"), ps.get("a.bo"));
  for (int64_t i = 0; i < got.size(); ++i) REQUIRE(got.values()[i] == Catch::Approx(want.values()[i]).margin(1e-12));
}

TEST_CASE("attention mask suppresses masked keys") {
  Rng rng(5);
  ParamStore ps;
  register_attention(ps, "a", 4, rng);
  std::vector<double> xv(4 * 4);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from({1, 4, 4}, xv, false);
  // forbid attending to the last token from anywhere
  std::vector<double> mv(4 * 4, 0.0);
  for (int64_t j = 0; j < 4; ++j) mv[j * 4 + 3] = -1e9;
  Tensor mask = Tensor::from({1, 1, 4, 4}, mv, false);

  Tensor masked = multi_head_attention(x, x, ps, "a", 2, mask);
  // same result as attention over only the first 3 tokens as keys/values
  Tensor x3 = slice(x, 1, 0, 3);
  Tensor q = linear(x, ps.get("a.wq"), ps.get("a.bq"));
  Tensor k = linear(x3, ps.get("a.wk"));
  Tensor v = linear(x3, ps.get("a.wv"), ps.get("a.bv"));
  std::vector<Tensor> per_head;
  for (int64_t h = 0; h < 2; ++h) {
    per_head.push_back(scaled_dot_attention(slice(q, 2, h * 2, 2), slice(k, 2, h * 2, 2), slice(v, 2, h * 2, 2),
                                            std::sqrt(2.0)));
  }
  Tensor want = linear(concat(per_head, 2), ps.get("a.wo"), ps.get("a.bo"));
  for (int64_t i = 0; i < masked.size(); ++i)
    REQUIRE(masked.values()[i] == Catch::Approx(want.values()[i]).margin(1e-10));
}

TEST_CASE("zero-initialized output projections make the block an identity") {
  Rng rng(6);
  ParamStore ps;
  register_transformer_block(ps, "blk", 8, rng, /*zero_out_proj=*/true);
  std::vector<double> xv(2 * 3 * 8);
  for (auto& v : xv) v = rng.uniform(-2.0, 2.0);
  Tensor x = Tensor::from({2, 3, 8}, xv, false);
  Tensor y = transformer_block(x, ps, "blk", 2);
  for (int64_t i = 0; i < x.size(); ++i) REQUIRE(y.values()[i] == x.values()[i]);  // bitwise

  // cross-attention variant with a distinct kv stream is also the identity
  ParamStore ps2;
  Rng rng2(7);
  register_transformer_block(ps2, "x", 8, rng2, true, /*cross=*/true);
  std::vector<double> kvv(2 * 5 * 8);
  for (auto& v : kvv) v = rng2.uniform(-2.0, 2.0);
  Tensor kv = Tensor::from({2, 5, 8}, kvv, false);
  Tensor yc = transformer_cross_block(x, kv, ps2, "x", 2);
  for (int64_t i = 0; i < x.size(); ++i) REQUIRE(yc.values()[i] == x.values()[i]);
}

TEST_CASE("self-attention block is permutation-equivariant") {
  Rng rng(8);
  ParamStore ps;
  register_transformer_block(ps, "blk", 6, rng);
  std::vector<double> xv(1 * 4 * 6);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from({1, 4, 6}, xv, false);
  // reverse the token order
  std::vector<double> rv(xv.size());
  for (int64_t n = 0; n < 4; ++n)
    for (int64_t k = 0; k < 6; ++k) rv[n * 6 + k] = xv[(3 - n) * 6 + k];
  Tensor xr = Tensor::from({1, 4, 6}, rv, false);

  Tensor y = transformer_block(x, ps, "blk", 2);
  Tensor yr = transformer_block(xr, ps, "blk", 2);
  for (int64_t n = 0; n < 4; ++n)
    for (int64_t k = 0; k < 6; ++k)
      REQUIRE(y.values()[n * 6 + k] == Catch::Approx(yr.values()[(3 - n) * 6 + k]).margin(1e-11));
}

TEST_CASE("transformer block gradients agree with finite differences") {
  Rng rng(9);
  ParamStore ps;
  register_transformer_block(ps, "blk", 8, rng);
  std::vector<double> xv(1 * 4 * 8);
  for (auto& v : xv) v = rng.uniform(-1.0, 1.0);
  Tensor x = Tensor::from({1, 4, 8}, xv, false);
  auto loss = [&]() { return sum_squares(transformer_block(x, ps, "blk", 2)); };
  Rng probe_rng(10);
  REQUIRE(finite_diff_grad_check(loss, ps, 64, 1e-5, probe_rng) < 1e-4);
}

TEST_CASE("vocabulary normalizes, dedups, and maps unknowns to UNK") {
  Vocabulary v = Vocabulary::from_phrases({"Walk Forward", "  walk forward ", "Sit Down", "rest"});
  REQUIRE(v.phrases == std::vector<std::string>{"walk forward", "sit down", "rest"});
  REQUIRE(v.rows() == 4);
  REQUIRE(v.unk_row() == 3);
  REQUIRE(v.lookup(" WALK FORWARD ") == 0);
  REQUIRE(v.lookup("sit down") == 1);
  REQUIRE(v.lookup("cartwheel") == 3);
  REQUIRE(v.lookup("") == 3);
}

TEST_CASE("select_labels keeps few sequence labels wholesale") {
  std::vector<TextLabel> labels = {seq_label("a", 0, 99), seq_label("b", 0, 99), seq_label("c", 0, 99),
                                   frame_label("x", 10, 20)};
  auto sel = select_labels(labels, 0, 80);
  REQUIRE(texts_of(sel) == std::vector<std::string>{"a", "b", "c", "x"});
  REQUIRE(sel[0].level == TextLabel::Level::kSequence);
  REQUIRE(sel[3].level == TextLabel::Level::kFrame);
}

TEST_CASE("select_labels collapses only consecutive duplicate frame labels") {
  std::vector<TextLabel> labels = {frame_label("walk", 0, 9), frame_label("walk", 10, 19),
                                   frame_label("turn", 20, 29), frame_label("walk", 30, 39)};
  auto sel = select_labels(labels, 0, 80);
  REQUIRE(texts_of(sel) == std::vector<std::string>{"walk", "turn", "walk"});
  // and frame labels outside the window are dropped entirely
  auto sel2 = select_labels({frame_label("early", 0, 9), frame_label("in", 90, 130)}, 80, 80);
  REQUIRE(texts_of(sel2) == std::vector<std::string>{"in"});
}

TEST_CASE("select_labels ranks many sequence labels by window overlap") {
  // 18 sequence labels with strictly increasing overlap with window [40, 120)
  std::vector<TextLabel> labels;
  for (int64_t i = 0; i < 18; ++i) labels.push_back(seq_label("s" + std::to_string(i), 0, 40 + i * 4));
  auto sel = select_labels(labels, 40, 80);
  REQUIRE(sel.size() == 6);  // ceil(18/3)

  // brute-force oracle: rank by (overlap desc, start asc)
  auto overlap = [&](const TextLabel& l) {
    return std::max<int64_t>(0, std::min<int64_t>(l.end_frame, 119) - std::max<int64_t>(l.start_frame, 40) + 1);
  };
  std::vector<size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (overlap(labels[a]) != overlap(labels[b])) return overlap(labels[a]) > overlap(labels[b]);
    return labels[a].start_frame < labels[b].start_frame;
  });
  std::vector<std::string> want;
  for (size_t i = 0; i < 6; ++i) want.push_back(labels[idx[i]].text);
  std::sort(want.begin(), want.end());
  std::vector<std::string> got = texts_of(sel);
  std::sort(got.begin(), got.end());
  REQUIRE(got == want);
}

TEST_CASE("select_labels enforces the token cap") {
  std::vector<TextLabel> labels;
  for (int64_t i = 0; i < 40; ++i)
    labels.push_back(frame_label("f" + std::to_string(i), i * 2, i * 2 + 1));
  auto sel = select_labels(labels, 0, 80);
  REQUIRE(static_cast<int64_t>(sel.size()) == kMaxTextTokens);
}

TEST_CASE("assembled tokens follow the additive composition") {
  Rng rng(11);
  Vocabulary vocab = Vocabulary::from_phrases({"walk forward", "rest"});
  ParamStore ps;
  register_text_encoder(ps, vocab, rng);

  // same phrase in both groups: token difference is exactly P_diff + G_diff
  std::vector<TextLabel> sel = {seq_label("rest", 0, 199), frame_label("rest", 47, 60)};
  Tensor toks = assemble_text_tokens(sel, 40, 80, vocab, ps);
  REQUIRE(toks.shape() == Shape{2, kTextDim});
  Tensor p = sinusoidal_encoding({0, 7}, kTextDim);  // seq rank 0; frame index 47-40
  const auto& g = ps.get("text.groups").values();    // zero-initialized
  for (int64_t k = 0; k < kTextDim; ++k) {
    const double diff = toks.values()[k] - toks.values()[kTextDim + k];
    const double want = (p.values()[k] - p.values()[kTextDim + k]) + (g[k] - g[kTextDim + k]);
    REQUIRE(diff == Catch::Approx(want).margin(1e-12));
  }

  // frame positions clamp into the window
  Tensor early = assemble_text_tokens({frame_label("rest", 3, 10)}, 40, 80, vocab, ps);
  Tensor at0 = assemble_text_tokens({frame_label("rest", 40, 50)}, 40, 80, vocab, ps);
  for (int64_t k = 0; k < kTextDim; ++k) REQUIRE(early.values()[k] == at0.values()[k]);

  // unknown phrases share the UNK row
  Tensor unk1 = assemble_text_tokens({frame_label("zzz", 40, 50)}, 40, 80, vocab, ps);
  Tensor unk2 = assemble_text_tokens({frame_label("qqq", 40, 50)}, 40, 80, vocab, ps);
  for (int64_t k = 0; k < kTextDim; ++k) REQUIRE(unk1.values()[k] == unk2.values()[k]);

  // permuting two frame labels permutes rows without changing values
  std::vector<TextLabel> ab = {frame_label("walk forward", 41, 50), frame_label("rest", 55, 60)};
  std::vector<TextLabel> ba = {ab[1], ab[0]};
  Tensor tab = assemble_text_tokens(ab, 40, 80, vocab, ps);
  Tensor tba = assemble_text_tokens(ba, 40, 80, vocab, ps);
  for (int64_t k = 0; k < kTextDim; ++k) {
    REQUIRE(tab.values()[k] == tba.values()[kTextDim + k]);
    REQUIRE(tab.values()[kTextDim + k] == tba.values()[k]);
  }
}

TEST_CASE("encode_text produces CLS plus one token per label") {
  Rng rng(12);
  Vocabulary vocab = Vocabulary::from_phrases(vocabulary_phrases());
  ParamStore ps;
  register_text_encoder(ps, vocab, rng);

  Tensor empty = encode_text({}, 0, 80, vocab, ps);
  REQUIRE(empty.shape() == Shape{1, kTextDim});
  for (int64_t i = 0; i < empty.size(); ++i) REQUIRE(std::isfinite(empty.values()[i]));

  std::vector<TextLabel> sel = {seq_label("walk forward", 0, 199), frame_label("step left", 10, 30),
                                frame_label("step right", 31, 60)};
  Tensor out = encode_text(sel, 0, 80, vocab, ps);
  REQUIRE(out.shape() == Shape{4, kTextDim});
  Tensor again = encode_text(sel, 0, 80, vocab, ps);
  for (int64_t i = 0; i < out.size(); ++i) REQUIRE(out.values()[i] == again.values()[i]);
}

TEST_CASE("text encoder gradients pass finite differences") {
  Rng rng(13);
  Vocabulary vocab = Vocabulary::from_phrases({"walk forward", "rest", "step left"});
  ParamStore ps;
  register_text_encoder(ps, vocab, rng);
  std::vector<TextLabel> sel = {seq_label("rest", 0, 99), frame_label("step left", 12, 30),
                                frame_label("walk forward", 31, 44)};
  auto loss = [&]() { return sum_squares(encode_text(sel, 0, 80, vocab, ps)); };
  Rng probe_rng(14);
  REQUIRE(finite_diff_grad_check(loss, ps, 80, 1e-5, probe_rng) < 1e-4);
}
