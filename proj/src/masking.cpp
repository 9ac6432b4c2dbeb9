#include "vlr/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace vlr {

VisualMaskPlan VisualMaskPlan::all_visible(int n_patches) {
  VisualMaskPlan plan;
  plan.n_patches = n_patches;
  plan.visible.resize(static_cast<size_t>(n_patches));
  std::iota(plan.visible.begin(), plan.visible.end(), 0);
  return plan;
}

VisualMaskPlan sample_visual_mask(int n_patches, double r_v, Rng& rng) {
  if (n_patches < 1) throw UsageError("need at least one patch");
  const int n_masked = static_cast<int>(std::lround(r_v * n_patches));

  std::vector<int> idx(static_cast<size_t>(n_patches));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);

  VisualMaskPlan plan;
  plan.n_patches = n_patches;
  plan.masked.assign(idx.begin(), idx.begin() + n_masked);
  plan.visible.assign(idx.begin() + n_masked, idx.end());
  std::sort(plan.masked.begin(), plan.masked.end());
  std::sort(plan.visible.begin(), plan.visible.end());
  return plan;
}

TokenSeq sample_linguistic_mask(const TokenSeq& seq, double r_l, Rng& rng) {
  TokenSeq out = seq;
  out.masked.assign(out.ids.size(), 0);
  const int l = static_cast<int>(seq.len());
  if (r_l <= 0.0 || l == 0) return out;
  const int n_masked =
      std::min(l, std::max(1, static_cast<int>(std::lround(r_l * l))));
  std::vector<int> idx(static_cast<size_t>(l));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  for (int i = 0; i < n_masked; ++i) out.masked[static_cast<size_t>(idx[i])] = 1;
  return out;
}

Permutation Permutation::identity(int l) {
  Permutation p;
  p.order.resize(static_cast<size_t>(l));
  std::iota(p.order.begin(), p.order.end(), 1);
  return p;
}

Permutation Permutation::reverse(int l) {
  Permutation p = identity(l);
  std::reverse(p.order.begin(), p.order.end());
  return p;
}

AttentionMask build_permuted_mask(const Permutation& perm, int l_c) {
  const int l = perm.length();
  if (l_c != l + 1)
    throw ShapeMismatch("permuted mask expects l_c = L + 1");
  // rank[p] = index of position p in generation order
  std::vector<int> rank(static_cast<size_t>(l) + 1, 0);
  for (int i = 0; i < l; ++i) rank[static_cast<size_t>(perm.order[i])] = i;

  AttentionMask m(l_c, l_c, false);
  for (int r = 0; r < m.n_q; ++r) {
    const int pos = r + 1;  // row r queries position r+1; pos L+1 is EOS
    m.set(r, 0, true);
    for (int c = 1; c < m.n_c; ++c) {
      const bool precedes = pos > l || rank[static_cast<size_t>(c)] <
                                           rank[static_cast<size_t>(pos)];
      m.set(r, c, precedes);
    }
  }
  return m;
}

AttentionMask build_masked_char_mask(const std::vector<int>& masked_positions,
                                     int l_q, int l_c) {
  for (int p : masked_positions)
    if (p < 1 || p >= l_c)
      throw ShapeMismatch("masked position outside character columns");
  AttentionMask m(l_q, l_c, true);
  for (int p : masked_positions)
    for (int q = 0; q < l_q; ++q) m.set(q, p, false);
  return m;
}

AttentionMask merge_and(const AttentionMask& a, const AttentionMask& b) {
  if (a.n_q != b.n_q || a.n_c != b.n_c)
    throw ShapeMismatch("attention mask shapes differ");
  AttentionMask m(a.n_q, a.n_c, false);
  for (size_t i = 0; i < m.allow.size(); ++i)
    m.allow[i] = a.allow[i] & b.allow[i];
  return m;
}

AttentionMask build_cloze_mask(int l_q, int l_c) {
  if (l_q != l_c) throw ShapeMismatch("cloze mask expects l_q = l_c");
  AttentionMask m(l_q, l_c, true);
  for (int r = 0; r < l_q; ++r) {
    const int own = r + 1;  // own character column of the row's position
    if (own < l_c) m.set(r, own, false);
  }
  return m;
}

std::vector<Permutation> sample_permutations(int l, int k, Rng& rng) {
  if (k < 1) throw UsageError("need at least one permutation");
  double factorial = 1.0;
  for (int i = 2; i <= l && factorial <= 1e9; ++i) factorial *= i;
  const int distinct_cap =
      factorial > 1e9 ? k : std::min<int>(k, static_cast<int>(factorial));

  std::vector<Permutation> out;
  std::set<std::vector<int>> seen;
  auto push = [&](Permutation p) {
    if (seen.insert(p.order).second) out.push_back(std::move(p));
  };
  push(Permutation::identity(l));
  if (k >= 2) push(Permutation::reverse(l));
  while (static_cast<int>(out.size()) < distinct_cap) {
    Permutation p = Permutation::identity(l);
    rng.shuffle(p.order);
    push(std::move(p));
  }
  return out;
}

}  // namespace vlr
