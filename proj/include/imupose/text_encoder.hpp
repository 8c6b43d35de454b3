#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "imupose/dataset.hpp"
#include "imupose/transformer.hpp"

namespace imupose {

inline constexpr int64_t kTextDim = 192;
inline constexpr int64_t kTextHeads = 4;
inline constexpr int64_t kTextLayers = 2;
inline constexpr int64_t kSeqLabelThreshold = 15;  // M in the selection rule
inline constexpr int64_t kMaxTextTokens = 24;      // hard cap after selection

// Closed-set phrase vocabulary. Lookup is exact match on the normalized
// (lowercased, trimmed) phrase; anything else maps to the trailing UNK row.
struct Vocabulary {
  std::vector<std::string> phrases;  // normalized, distinct; UNK row is implicit

  static std::string normalize(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    std::string out = s.substr(a, b - a);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
  }

  static Vocabulary from_phrases(const std::vector<std::string>& raw) {
    Vocabulary v;
    for (const std::string& s : raw) {
      std::string n = normalize(s);
      if (std::find(v.phrases.begin(), v.phrases.end(), n) == v.phrases.end()) v.phrases.push_back(std::move(n));
    }
    return v;
  }

  int64_t rows() const { return static_cast<int64_t>(phrases.size()) + 1; }
  int64_t unk_row() const { return static_cast<int64_t>(phrases.size()); }

  int64_t lookup(const std::string& s) const {
    const std::string n = normalize(s);
    auto it = std::find(phrases.begin(), phrases.end(), n);
    return it == phrases.end() ? unk_row() : static_cast<int64_t>(it - phrases.begin());
  }
};

namespace detail {

inline int64_t label_overlap(const TextLabel& l, int64_t t0, int64_t T) {
  return std::max<int64_t>(0, std::min(l.end_frame, t0 + T - 1) - std::max(l.start_frame, t0) + 1);
}

}  // namespace detail

// Label selection for one window [t0, t0+T):
//   - frame-level labels overlapping the window, in start order, with runs of
//     the same phrase collapsed (only consecutive duplicates merge);
//   - sequence-level labels: all of them when there are fewer than M,
//     otherwise the ceil(count/3) with greatest window overlap (ties to the
//     earlier start), returned in temporal order;
//   - output is sequence-level then frame-level, truncated to kMaxTextTokens
//     by dropping the smallest-overlap entries.
inline std::vector<TextLabel> select_labels(const std::vector<TextLabel>& labels, int64_t t0, int64_t T,
                                            int64_t M = kSeqLabelThreshold) {
  using detail::label_overlap;
  std::vector<TextLabel> seq, frame;
  for (const TextLabel& l : labels) {
    if (l.level == TextLabel::Level::kFrame) {
      if (label_overlap(l, t0, T) > 0) frame.push_back(l);
    } else {
      seq.push_back(l);
    }
  }

  std::stable_sort(frame.begin(), frame.end(),
                   [](const TextLabel& a, const TextLabel& b) { return a.start_frame < b.start_frame; });
  std::vector<TextLabel> frame_dedup;
  for (const TextLabel& l : frame)
    if (frame_dedup.empty() || frame_dedup.back().text != l.text) frame_dedup.push_back(l);

  if (static_cast<int64_t>(seq.size()) >= M) {
    const int64_t keep = (static_cast<int64_t>(seq.size()) + 2) / 3;  // ceil(count/3)
    std::vector<size_t> idx(seq.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      const int64_t oa = label_overlap(seq[a], t0, T), ob = label_overlap(seq[b], t0, T);
      if (oa != ob) return oa > ob;
      return seq[a].start_frame < seq[b].start_frame;
    });
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());  // restore temporal (original) order
    std::vector<TextLabel> kept;
    for (size_t i : idx) kept.push_back(seq[i]);
    seq = std::move(kept);
  }
  std::stable_sort(seq.begin(), seq.end(),
                   [](const TextLabel& a, const TextLabel& b) { return a.start_frame < b.start_frame; });

  std::vector<TextLabel> out = std::move(seq);
  out.insert(out.end(), frame_dedup.begin(), frame_dedup.end());
  while (static_cast<int64_t>(out.size()) > kMaxTextTokens) {
    size_t worst = 0;
    for (size_t i = 1; i < out.size(); ++i) {
      const int64_t oi = label_overlap(out[i], t0, T), ow = label_overlap(out[worst], t0, T);
      if (oi < ow || (oi == ow && out[i].start_frame >= out[worst].start_frame)) worst = i;
    }
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  return out;
}

inline void register_text_encoder(ParamStore& ps, const Vocabulary& vocab, Rng& rng) {
  ps.embedding("text.embedding", vocab.rows(), kTextDim, rng);
  ps.zeros("text.groups", {2, kTextDim});  // row 0 = sequence level, row 1 = frame level
  ps.zeros("text.cls", {1, kTextDim});
  for (int64_t l = 0; l < kTextLayers; ++l) register_transformer_block(ps, "text.layer" + std::to_string(l), kTextDim, rng);
}

// Temporal position index per selected label: frame-level positions are the
// label start relative to the window (clamped into [0, T)); sequence-level
// positions are the label's temporal rank among selected sequence labels.
// Shared by token assembly here and by the fusion key positions.
inline std::vector<int64_t> text_position_indices(const std::vector<TextLabel>& selected, int64_t t0, int64_t T) {
  std::vector<int64_t> positions(selected.size());
  int64_t seq_rank = 0;
  for (size_t i = 0; i < selected.size(); ++i) {
    const TextLabel& l = selected[i];
    positions[i] = l.level == TextLabel::Level::kSequence ? seq_rank++
                                                          : std::clamp<int64_t>(l.start_frame - t0, 0, T - 1);
  }
  return positions;
}

// Pre-transformer token assembly (Eq. 1): token_i = embedding + sinusoidal
// positional encoding + group embedding.
inline Tensor assemble_text_tokens(const std::vector<TextLabel>& selected, int64_t t0, int64_t T,
                                   const Vocabulary& vocab, const ParamStore& ps) {
  const int64_t n = static_cast<int64_t>(selected.size());
  std::vector<int64_t> vocab_rows(n), group_rows(n);
  for (int64_t i = 0; i < n; ++i) {
    vocab_rows[i] = vocab.lookup(selected[i].text);
    group_rows[i] = selected[i].level == TextLabel::Level::kSequence ? 0 : 1;
  }
  Tensor emb = rows(ps.get("text.embedding"), vocab_rows);
  Tensor grp = rows(ps.get("text.groups"), group_rows);
  return add(add(emb, sinusoidal_encoding(text_position_indices(selected, t0, T), kTextDim)), grp);
}

// Full text path: [CLS] ++ assembled tokens -> 2 pre-norm layers.
// Output: (N+1) x 192 with the [CLS] row first.
inline Tensor encode_text(const std::vector<TextLabel>& selected, int64_t t0, int64_t T, const Vocabulary& vocab,
                          const ParamStore& ps) {
  Tensor tokens = ps.get("text.cls");
  if (!selected.empty()) tokens = concat({tokens, assemble_text_tokens(selected, t0, T, vocab, ps)}, 0);
  Tensor x = reshape(tokens, {1, tokens.dim(0), kTextDim});
  for (int64_t l = 0; l < kTextLayers; ++l) x = transformer_block(x, ps, "text.layer" + std::to_string(l), kTextHeads);
  return reshape(x, {tokens.dim(0), kTextDim});
}

}  // namespace imupose
