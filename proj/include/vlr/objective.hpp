#pragma once

#include <vector>

#include "vlr/model.hpp"

namespace vlr {

struct EmptyTargetSet : Error {
  EmptyTargetSet() : Error("linguistic loss needs a nonempty target set") {}
};

// Scalar summary of one loss evaluation. total = lambda_v*L_v + lambda_l*L_l,
// and each L is the mean of its per-layer terms.
struct LossReport {
  double l_v = 0.0;
  double l_l = 0.0;
  double total = 0.0;
  std::vector<double> per_layer_v;
  std::vector<double> per_layer_l;
  long long masked_pixels = 0;  // |M_v| counted in pixels
  int target_tokens = 0;        // |M_l| (or all positions in phase 2)
};

template <typename T>
struct VisualLossResult {
  typename Tape<T>::Var node = -1;  // -1 when the masked set is empty
  double value = 0.0;
  std::vector<double> per_layer;
  long long masked_pixels = 0;
};

// Squared error over pixels of masked patches only, normalized by the masked
// pixel count and averaged over layers. Targets are the normalized
// ground-truth pixels.
template <typename T>
VisualLossResult<T> visual_loss(
    Tape<T>& tape, const std::vector<typename Tape<T>::Var>& v_layers,
    const Tensor<T>& target_pixels, const VisualMaskPlan& plan) {
  VisualLossResult<T> res;
  const int n_layers = static_cast<int>(v_layers.size());
  if (n_layers == 0) throw ShapeMismatch("visual loss needs layer outputs");
  if (plan.masked.empty()) return res;  // defined as 0 and flagged

  const int d = tape.val(v_layers[0]).cols();
  res.masked_pixels = static_cast<long long>(plan.masked.size()) * d;

  std::vector<std::pair<typename Tape<T>::Var, T>> terms;
  for (auto v : v_layers) {
    if (!tape.val(v).same_shape(target_pixels))
      throw ShapeMismatch("visual head output shape != target pixels");
    auto sse = tape.sse_rows(v, target_pixels, plan.masked);
    res.per_layer.push_back(static_cast<double>(tape.val(sse).data[0]) /
                            static_cast<double>(res.masked_pixels));
    terms.emplace_back(sse, static_cast<T>(1.0 / (static_cast<double>(
                                                      res.masked_pixels) *
                                                  n_layers)));
  }
  res.node = tape.weighted_sum(terms);
  res.value = static_cast<double>(tape.val(res.node).data[0]);
  return res;
}

template <typename T>
struct LinguisticLossResult {
  typename Tape<T>::Var node = -1;
  double value = 0.0;
  std::vector<double> per_layer;
  int target_tokens = 0;
};

// Softmax cross-entropy at the selected query rows, normalized by the target
// count and averaged over layers. `targets` has one id per query row
// (characters then EOS); `target_set` holds 1-based positions, where L+1 is
// the EOS slot.
template <typename T>
LinguisticLossResult<T> linguistic_loss(
    Tape<T>& tape, const std::vector<typename Tape<T>::Var>& l_layers,
    const std::vector<int>& targets, const std::vector<int>& target_set) {
  if (target_set.empty()) throw EmptyTargetSet();
  const int n_layers = static_cast<int>(l_layers.size());
  if (n_layers == 0) throw ShapeMismatch("linguistic loss needs layer outputs");
  const int n_rows = tape.val(l_layers[0]).rows();
  if (static_cast<int>(targets.size()) != n_rows)
    throw ShapeMismatch("one target per query row expected");

  std::vector<int> row_targets(static_cast<size_t>(n_rows), -1);
  for (int pos : target_set) {
    if (pos < 1 || pos > n_rows)
      throw ShapeMismatch("target position outside query rows");
    row_targets[static_cast<size_t>(pos - 1)] =
        targets[static_cast<size_t>(pos - 1)];
  }

  LinguisticLossResult<T> res;
  res.target_tokens = static_cast<int>(target_set.size());
  std::vector<std::pair<typename Tape<T>::Var, T>> terms;
  for (auto l : l_layers) {
    auto ce = tape.ce_rows(l, row_targets);
    res.per_layer.push_back(static_cast<double>(tape.val(ce).data[0]) /
                            res.target_tokens);
    terms.emplace_back(
        ce, static_cast<T>(1.0 / (static_cast<double>(res.target_tokens) *
                                  n_layers)));
  }
  res.node = tape.weighted_sum(terms);
  res.value = static_cast<double>(tape.val(res.node).data[0]);
  return res;
}

inline double total_loss(double l_v, double l_l, double lambda_v,
                         double lambda_l) {
  return lambda_v * l_v + lambda_l * l_l;
}

// Weighted sum as a tape node. A zero weight drops its term from the graph
// entirely, so the corresponding head receives exactly zero gradient.
template <typename T>
typename Tape<T>::Var total_loss_node(Tape<T>& tape,
                                      const VisualLossResult<T>& v,
                                      const LinguisticLossResult<T>& l,
                                      double lambda_v, double lambda_l) {
  std::vector<std::pair<typename Tape<T>::Var, T>> terms;
  if (lambda_v > 0.0 && v.node >= 0)
    terms.emplace_back(v.node, static_cast<T>(lambda_v));
  if (lambda_l > 0.0 && l.node >= 0)
    terms.emplace_back(l.node, static_cast<T>(lambda_l));
  return tape.weighted_sum(terms);
}

template <typename T>
LossReport make_report(const VisualLossResult<T>& v,
                       const LinguisticLossResult<T>& l, double lambda_v,
                       double lambda_l) {
  LossReport r;
  r.l_v = v.value;
  r.l_l = l.value;
  r.total = total_loss(r.l_v, r.l_l, lambda_v, lambda_l);
  r.per_layer_v = v.per_layer;
  r.per_layer_l = l.per_layer;
  r.masked_pixels = v.masked_pixels;
  r.target_tokens = l.target_tokens;
  return r;
}

// Convenience wrappers over a DecoderTrace.
template <typename T>
VisualLossResult<T> visual_loss(Tape<T>& tape, const DecoderTrace<T>& trace,
                                const Tensor<T>& target_pixels,
                                const VisualMaskPlan& plan) {
  std::vector<typename Tape<T>::Var> vs;
  for (const auto& layer : trace.layers) {
    if (layer.v < 0) throw ShapeMismatch("trace has no visual head outputs");
    vs.push_back(layer.v);
  }
  return visual_loss(tape, vs, target_pixels, plan);
}

template <typename T>
LinguisticLossResult<T> linguistic_loss(Tape<T>& tape,
                                        const DecoderTrace<T>& trace,
                                        const std::vector<int>& targets,
                                        const std::vector<int>& target_set) {
  std::vector<typename Tape<T>::Var> ls;
  for (const auto& layer : trace.layers) ls.push_back(layer.l);
  return linguistic_loss(tape, ls, targets, target_set);
}

}  // namespace vlr
