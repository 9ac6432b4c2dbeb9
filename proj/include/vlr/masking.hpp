#pragma once

#include <vector>

#include "vlr/charset.hpp"
#include "vlr/common.hpp"

namespace vlr {

// Partition of patch indices into visible/masked sets.
struct VisualMaskPlan {
  int n_patches = 0;
  std::vector<int> masked;   // sorted
  std::vector<int> visible;  // sorted

  static VisualMaskPlan all_visible(int n_patches);
};

// Exactly round(r_v * n_patches) indices masked, uniformly without
// replacement. r_v = 0 yields an empty masked set.
VisualMaskPlan sample_visual_mask(int n_patches, double r_v, Rng& rng);

// Flags exactly max(1, round(r_l * L)) positions when r_l > 0 (minimum one so
// the loss denominator is always defined); ids are left untouched, the
// MASK_L swap happens at embedding time.
TokenSeq sample_linguistic_mask(const TokenSeq& seq, double r_l, Rng& rng);

// Boolean allow/deny matrix over (query row, context column).
//
// Convention shared by every mask builder and the decoder:
//   - context columns: 0 is BOS, column c >= 1 is the character at position c;
//   - query rows: row r (0-based) queries position r+1; when the matrix is
//     square with n_q = L+1, the last row is the EOS prediction slot, which
//     is ordered after every character position.
struct AttentionMask {
  int n_q = 0, n_c = 0;
  std::vector<uint8_t> allow;

  AttentionMask() = default;
  AttentionMask(int q, int c, bool value = false)
      : n_q(q), n_c(c), allow(static_cast<size_t>(q) * c, value ? 1 : 0) {}

  bool at(int q, int c) const {
    return allow[static_cast<size_t>(q) * n_c + c] != 0;
  }
  void set(int q, int c, bool v) {
    allow[static_cast<size_t>(q) * n_c + c] = v ? 1 : 0;
  }
};

// Generation order over character positions 1..L. BOS is not part of the
// permutation; it is always visible context.
struct Permutation {
  std::vector<int> order;

  int length() const { return static_cast<int>(order.size()); }
  static Permutation identity(int l);
  static Permutation reverse(int l);
};

// Square (L+1)x(L+1) mask: a query may attend BOS plus every character that
// strictly precedes its position in the permutation order. The EOS slot row
// attends everything.
AttentionMask build_permuted_mask(const Permutation& perm, int l_c);

// Column blanking: allow[q][c] = false iff c is a masked character position,
// for every query row. No masked positions gives the all-true matrix.
AttentionMask build_masked_char_mask(const std::vector<int>& masked_positions,
                                     int l_q, int l_c);

// Elementwise conjunction.
AttentionMask merge_and(const AttentionMask& a, const AttentionMask& b);

// Square mask where each query row sees everything except its own character
// column; BOS stays visible everywhere.
AttentionMask build_cloze_mask(int l_q, int l_c);

// First is the identity, second (when k >= 2) the reverse, the rest uniform
// without duplicates. Returns min(k, L!) permutations.
std::vector<Permutation> sample_permutations(int l, int k, Rng& rng);

}  // namespace vlr
