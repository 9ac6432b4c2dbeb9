#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vlr/charset.hpp"
#include "vlr/masking.hpp"
#include "vlr/synth.hpp"
#include "vlr/tape.hpp"

namespace vlr {

struct ConfigMismatch : Error {
  explicit ConfigMismatch(const std::string& msg) : Error(msg) {}
};

// All architecture hyperparameters. Defaults are the reference settings
// scaled to a single machine; patch geometry, ratios, loss weights and
// decoder depth keep their reference values.
struct ModelConfig {
  int d_model = 64;
  int n_heads = 4;
  int enc_depth = 3;
  int dec_depth = 4;  // N_d
  int p_h = 4, p_w = 8;
  int img_h = 32, img_w = 128, img_c = 1;
  int max_label_len = 25;
  std::string charset_chars = "abcdefghijklmnopqrstuvwxyz0123456789";
  double r_v = 0.75, r_l = 0.2;
  double lambda_v = 1.0, lambda_l = 1.0;
  int perm_count = 6;
  int ffn_mult = 4;
  int head_hidden = 0;  // 0 = use d_model
  bool share_heads = true;

  int charset_size() const { return static_cast<int>(charset_chars.size()); }
  int vocab_size() const { return charset_size() + 4; }
  int n_patches() const { return (img_h / p_h) * (img_w / p_w); }
  int patch_dim() const { return p_h * p_w * img_c; }
  int head_hidden_dim() const { return head_hidden > 0 ? head_hidden : d_model; }
  int query_len() const { return max_label_len + 1; }

  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  bool operator==(const ModelConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Named parameter tensors.
// ---------------------------------------------------------------------------
template <typename T>
struct ParamStore {
  std::vector<std::string> names;
  std::vector<Tensor<T>> values;
  std::vector<size_t> offsets;  // into a flat buffer of size total()
  std::unordered_map<std::string, int> index;

  Tensor<T>& add(const std::string& name, std::vector<int> shape) {
    index.emplace(name, static_cast<int>(names.size()));
    names.push_back(name);
    offsets.push_back(total_);
    values.emplace_back(std::move(shape));
    total_ += values.back().numel();
    return values.back();
  }
  int find(const std::string& name) const {
    auto it = index.find(name);
    return it == index.end() ? -1 : it->second;
  }
  Tensor<T>& at(const std::string& name) {
    const int i = find(name);
    if (i < 0) throw Error("unknown parameter: " + name);
    return values[static_cast<size_t>(i)];
  }
  const Tensor<T>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  size_t total() const { return total_; }

 private:
  size_t total_ = 0;
};

namespace detail {

template <typename T>
void fill_trunc_normal(Tensor<T>& t, double stddev, Rng& rng) {
  for (auto& v : t.data) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    v = static_cast<T>(z * stddev);
  }
}

template <typename T>
void add_attn_block_params(ParamStore<T>& ps, const std::string& pfx, int d,
                           int ffn, Rng& rng) {
  const double stddev = 0.02;
  ps.add(pfx + ".ln1.g", {d}).fill(T{1});
  ps.add(pfx + ".ln1.b", {d});
  for (const char* w : {"wq", "wk", "wv", "wo"})
    fill_trunc_normal(ps.add(pfx + ".attn." + w, {d, d}), stddev, rng);
  for (const char* b : {"bq", "bk", "bv", "bo"})
    ps.add(pfx + ".attn." + b, {d});
  ps.add(pfx + ".ln2.g", {d}).fill(T{1});
  ps.add(pfx + ".ln2.b", {d});
  fill_trunc_normal(ps.add(pfx + ".ffn.w1", {ffn, d}), stddev, rng);
  ps.add(pfx + ".ffn.b1", {ffn});
  fill_trunc_normal(ps.add(pfx + ".ffn.w2", {d, ffn}), stddev, rng);
  ps.add(pfx + ".ffn.b2", {d});
}

template <typename T>
void add_head_params(ParamStore<T>& ps, const std::string& pfx, int d,
                     int hidden, int out, Rng& rng) {
  const double stddev = 0.02;
  fill_trunc_normal(ps.add(pfx + ".w1", {hidden, d}), stddev, rng);
  ps.add(pfx + ".b1", {hidden});
  fill_trunc_normal(ps.add(pfx + ".w2", {out, hidden}), stddev, rng);
  ps.add(pfx + ".b2", {out});
}

}  // namespace detail

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParamStore<T> ps;
  const int d = cfg.d_model;
  const int ffn = cfg.ffn_mult * d;
  const double stddev = 0.02;

  detail::fill_trunc_normal(ps.add("enc.proj.w", {d, cfg.patch_dim()}), stddev,
                            rng);
  ps.add("enc.proj.b", {d});
  detail::fill_trunc_normal(ps.add("enc.pos", {cfg.n_patches(), d}), stddev,
                            rng);
  detail::fill_trunc_normal(ps.add("enc.mask_token", {d}), stddev, rng);
  for (int i = 0; i < cfg.enc_depth; ++i)
    detail::add_attn_block_params(ps, "enc.b" + std::to_string(i), d, ffn, rng);
  ps.add("enc.out_ln.g", {d}).fill(T{1});
  ps.add("enc.out_ln.b", {d});

  detail::fill_trunc_normal(ps.add("text.emb", {cfg.vocab_size(), d}), stddev,
                            rng);
  detail::fill_trunc_normal(ps.add("text.pos", {cfg.query_len(), d}), stddev,
                            rng);
  detail::fill_trunc_normal(ps.add("dec.query", {cfg.query_len(), d}), stddev,
                            rng);

  for (int i = 0; i < cfg.dec_depth; ++i) {
    const std::string l = "dec.l" + std::to_string(i);
    detail::add_attn_block_params(ps, l + ".v_sa", d, ffn, rng);
    detail::add_attn_block_params(ps, l + ".q_l", d, ffn, rng);
    detail::add_attn_block_params(ps, l + ".v_q", d, ffn, rng);
    detail::add_attn_block_params(ps, l + ".q_v", d, ffn, rng);
  }

  const int hidden = cfg.head_hidden_dim();
  if (cfg.share_heads) {
    detail::add_head_params(ps, "head.v", d, hidden, cfg.patch_dim(), rng);
    detail::add_head_params(ps, "head.l", d, hidden, cfg.vocab_size(), rng);
  } else {
    for (int i = 0; i < cfg.dec_depth; ++i) {
      detail::add_head_params(ps, "head.v.l" + std::to_string(i), d, hidden,
                              cfg.patch_dim(), rng);
      detail::add_head_params(ps, "head.l.l" + std::to_string(i), d, hidden,
                              cfg.vocab_size(), rng);
    }
  }
  return ps;
}

// Binds every parameter tensor into a tape as leaves up front, so callers
// may rewind the tape to any point after binding without invalidating
// parameter vars. `grad_buf` (size ParamStore::total()) may be null for
// inference.
template <typename T>
class BoundParams {
 public:
  BoundParams(Tape<T>& tape, const ParamStore<T>& ps, T* grad_buf = nullptr)
      : ps_(&ps) {
    vars_.reserve(ps.values.size());
    for (size_t i = 0; i < ps.values.size(); ++i)
      vars_.push_back(tape.param(
          &ps.values[i], grad_buf ? grad_buf + ps.offsets[i] : nullptr));
  }

  typename Tape<T>::Var operator[](const std::string& name) const {
    const int i = ps_->find(name);
    if (i < 0) throw Error("unknown parameter: " + name);
    return vars_[static_cast<size_t>(i)];
  }

 private:
  const ParamStore<T>* ps_;
  std::vector<typename Tape<T>::Var> vars_;
};

// ---------------------------------------------------------------------------
// Network pieces
// ---------------------------------------------------------------------------

// Pre-norm transformer block around one attention application: the wiring of
// the four decoder attentions is fixed by the layer functions below, this
// adds the normalization/FFN scaffolding that makes them trainable.
template <typename T>
typename Tape<T>::Var attn_block(Tape<T>& tape, const BoundParams<T>& p,
                                 const std::string& pfx, int n_heads,
                                 typename Tape<T>::Var x,
                                 typename Tape<T>::Var kv,
                                 const AttentionMask* mask) {
  using Var = typename Tape<T>::Var;
  const Var xn = tape.layer_norm(x, p[pfx + ".ln1.g"], p[pfx + ".ln1.b"]);
  const Var kv_in = (kv == x) ? xn : kv;
  const Var q = tape.linear(xn, p[pfx + ".attn.wq"], p[pfx + ".attn.bq"]);
  const Var k = tape.linear(kv_in, p[pfx + ".attn.wk"], p[pfx + ".attn.bk"]);
  const Var v = tape.linear(kv_in, p[pfx + ".attn.wv"], p[pfx + ".attn.bv"]);
  const Var att = tape.mha(q, k, v, n_heads, mask);
  const Var proj = tape.linear(att, p[pfx + ".attn.wo"], p[pfx + ".attn.bo"]);
  const Var x1 = tape.add(x, proj);
  const Var x2 = tape.layer_norm(x1, p[pfx + ".ln2.g"], p[pfx + ".ln2.b"]);
  const Var h = tape.gelu(tape.linear(x2, p[pfx + ".ffn.w1"], p[pfx + ".ffn.b1"]));
  const Var f = tape.linear(h, p[pfx + ".ffn.w2"], p[pfx + ".ffn.b2"]);
  return tape.add(x1, f);
}

// Visible patches go through the ViT stack; masked rows are filled with the
// shared learnable mask token plus their positional embedding afterwards, so
// the encoder never touches masked pixel content.
template <typename T>
typename Tape<T>::Var encode_image(Tape<T>& tape, const BoundParams<T>& p,
                                   const ModelConfig& cfg,
                                   const PatchGrid& grid,
                                   const VisualMaskPlan& plan) {
  using Var = typename Tape<T>::Var;
  if (plan.n_patches != grid.n_patches())
    throw ShapeMismatch("mask plan patch count != grid patch count");
  if (grid.patch_dim() != cfg.patch_dim() ||
      grid.n_patches() != cfg.n_patches())
    throw ShapeMismatch("patch grid does not match the model config");

  const int n_vis = static_cast<int>(plan.visible.size());
  Tensor<T> vis({n_vis, cfg.patch_dim()});
  for (int i = 0; i < n_vis; ++i) {
    const float* src = grid.patches.row(plan.visible[static_cast<size_t>(i)]);
    T* dst = vis.row(i);
    for (int j = 0; j < cfg.patch_dim(); ++j) dst[j] = static_cast<T>(src[j]);
  }

  Var x = tape.linear(tape.input(std::move(vis)), p["enc.proj.w"],
                      p["enc.proj.b"]);
  x = tape.add(x, tape.gather_rows(p["enc.pos"], plan.visible));
  for (int i = 0; i < cfg.enc_depth; ++i)
    x = attn_block(tape, p, "enc.b" + std::to_string(i), cfg.n_heads, x, x,
                   nullptr);
  x = tape.layer_norm(x, p["enc.out_ln.g"], p["enc.out_ln.b"]);

  const int n_masked = static_cast<int>(plan.masked.size());
  Var filled = tape.add(tape.broadcast_row(p["enc.mask_token"], n_masked),
                        tape.gather_rows(p["enc.pos"], plan.masked));
  return tape.assemble_rows(x, plan.visible, filled, plan.masked,
                            plan.n_patches);
}

// Context assembly [BOS, t_1..t_L]; masked positions embed the MASK_L id.
// One embedding table plus positions, no encoder blocks.
template <typename T>
typename Tape<T>::Var embed_text(Tape<T>& tape, const BoundParams<T>& p,
                                 const ModelConfig& cfg, const TokenSeq& seq) {
  if (static_cast<int>(seq.len()) > cfg.max_label_len)
    throw ShapeMismatch("token sequence longer than max_label_len");
  const Charset cs(cfg.charset_chars);
  std::vector<int> ids;
  ids.reserve(seq.len() + 1);
  ids.push_back(cs.bos());
  for (size_t i = 0; i < seq.len(); ++i)
    ids.push_back(seq.masked[i] ? cs.mask_l() : seq.ids[i]);
  auto emb = tape.gather_rows(p["text.emb"], ids);
  auto pos = tape.slice_rows(p["text.pos"], 0, static_cast<int>(ids.size()));
  return tape.add(emb, pos);
}

template <typename T>
struct MvldLayerOut {
  typename Tape<T>::Var h_v, h_q, f_v, f_q;
};

// One decoder layer: visual self-attention, masked query-language
// cross-attention, then the two cross-modal update attentions.
template <typename T>
MvldLayerOut<T> mvld_layer(Tape<T>& tape, const BoundParams<T>& p,
                           const ModelConfig& cfg, int layer,
                           typename Tape<T>::Var f_v_prev,
                           typename Tape<T>::Var f_q_prev,
                           typename Tape<T>::Var f_l,
                           const AttentionMask& m_ql) {
  const std::string l = "dec.l" + std::to_string(layer);
  MvldLayerOut<T> out;
  out.h_v = attn_block(tape, p, l + ".v_sa", cfg.n_heads, f_v_prev, f_v_prev,
                       nullptr);
  out.h_q =
      attn_block(tape, p, l + ".q_l", cfg.n_heads, f_q_prev, f_l, &m_ql);
  out.f_v = attn_block(tape, p, l + ".v_q", cfg.n_heads, out.h_v, out.h_q,
                       nullptr);
  out.f_q = attn_block(tape, p, l + ".q_v", cfg.n_heads, out.h_q, out.h_v,
                       nullptr);
  return out;
}

template <typename T>
typename Tape<T>::Var visual_head(Tape<T>& tape, const BoundParams<T>& p,
                                  const ModelConfig& cfg, int layer,
                                  typename Tape<T>::Var f_v) {
  const std::string pfx =
      cfg.share_heads ? "head.v" : "head.v.l" + std::to_string(layer);
  auto h = tape.gelu(tape.linear(f_v, p[pfx + ".w1"], p[pfx + ".b1"]));
  return tape.linear(h, p[pfx + ".w2"], p[pfx + ".b2"]);
}

template <typename T>
typename Tape<T>::Var linguistic_head(Tape<T>& tape, const BoundParams<T>& p,
                                      const ModelConfig& cfg, int layer,
                                      typename Tape<T>::Var f_q) {
  const std::string pfx =
      cfg.share_heads ? "head.l" : "head.l.l" + std::to_string(layer);
  auto h = tape.gelu(tape.linear(f_q, p[pfx + ".w1"], p[pfx + ".b1"]));
  return tape.linear(h, p[pfx + ".w2"], p[pfx + ".b2"]);
}

// Per-layer decoder states and reconstructions.
template <typename T>
struct DecoderTrace {
  struct Layer {
    typename Tape<T>::Var h_v, h_q, f_v, f_q;
    typename Tape<T>::Var v = -1;  // reconstructed patches, N x D
    typename Tape<T>::Var l = -1;  // logits, L_q x vocab
  };
  typename Tape<T>::Var f_v0, f_q0, f_l;
  std::vector<Layer> layers;
};

struct ForwardOptions {
  bool with_visual_head = true;
};

// Full pass: encoder, text embedding, N_d decoder layers, heads per layer.
// The query stream starts from the first len(seq)+1 learned query tokens
// (characters plus the EOS slot).
template <typename T>
DecoderTrace<T> forward(Tape<T>& tape, const BoundParams<T>& p,
                        const ModelConfig& cfg, const PatchGrid& grid,
                        const VisualMaskPlan& plan, const TokenSeq& seq,
                        const AttentionMask& m_ql,
                        const ForwardOptions& opts = {}) {
  const int l_q = static_cast<int>(seq.len()) + 1;
  if (m_ql.n_q != l_q || m_ql.n_c != l_q)
    throw ShapeMismatch("query-text mask must be (L+1) x (L+1)");

  DecoderTrace<T> trace;
  trace.f_v0 = encode_image(tape, p, cfg, grid, plan);
  trace.f_l = embed_text(tape, p, cfg, seq);
  trace.f_q0 = tape.slice_rows(p["dec.query"], 0, l_q);

  auto f_v = trace.f_v0;
  auto f_q = trace.f_q0;
  for (int n = 0; n < cfg.dec_depth; ++n) {
    auto lo = mvld_layer(tape, p, cfg, n, f_v, f_q, trace.f_l, m_ql);
    typename DecoderTrace<T>::Layer layer;
    layer.h_v = lo.h_v;
    layer.h_q = lo.h_q;
    layer.f_v = lo.f_v;
    layer.f_q = lo.f_q;
    if (opts.with_visual_head)
      layer.v = visual_head(tape, p, cfg, n, lo.f_v);
    layer.l = linguistic_head(tape, p, cfg, n, lo.f_q);
    trace.layers.push_back(layer);
    f_v = lo.f_v;
    f_q = lo.f_q;
  }
  return trace;
}

}  // namespace vlr
