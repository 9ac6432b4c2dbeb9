#pragma once

#include <map>
#include <string>
#include <vector>

#include "vlr/model.hpp"
#include "vlr/synth.hpp"

namespace vlr {

struct UntrainedParams : Error {
  explicit UntrainedParams(const std::string& path)
      : Error("no trained checkpoint at " + path) {}
};
struct CountMismatch : Error {
  CountMismatch(size_t a, size_t b)
      : Error("prediction/reference counts differ: " + std::to_string(a) +
              " vs " + std::to_string(b)) {}
};

struct Prediction {
  std::string text;
  std::vector<int> token_ids;
  std::vector<double> confidences;  // per kept position, max softmax prob
  bool refined = false;
};

// Autoregressive greedy decoding in reading order: iteration t uses query
// tokens 1..t, context [BOS, y_1..y_{t-1}] under the causal mask, full visual
// input, and stops at EOS or max_label_len. Argmax is restricted to
// character ids and EOS with lowest-index tie-break.
//
// `step_logits`, when given, receives the final-layer logits row used at
// each step (consumed by the AR-consistency checks).
Prediction greedy_decode(const TextImage& img, const ParamStore<float>& params,
                         const ModelConfig& cfg,
                         std::vector<std::vector<float>>* step_logits = nullptr);

// One cloze-mask pass over the draft: context is [BOS, draft chars], every
// row re-decoded by argmax; the decoded length may shrink or grow by one if
// EOS moves.
Prediction refine(const TextImage& img, const Prediction& draft,
                  const ParamStore<float>& params, const ModelConfig& cfg);

// Fraction of exact, case-insensitive matches.
double word_accuracy(const std::vector<std::string>& predictions,
                     const std::vector<std::string>& references);

struct PreviewPanels {
  TextImage composite;      // 3 stacked H x W panels: truth, masked, recon
  double masked_mse = 0.0;  // over masked-patch pixels, unclipped prediction
};

// Ground truth / masked / reconstruction panels from the final decoder
// layer's visual head; visible patches are copied through.
PreviewPanels reconstruct_preview(const TextImage& img,
                                  const VisualMaskPlan& plan,
                                  const TokenSeq& seq,
                                  const ParamStore<float>& params,
                                  const ModelConfig& cfg);

struct EvalRecord {
  std::string file;
  std::string reference;
  std::string prediction;
  bool correct = false;
  double mean_confidence = 0.0;
  unsigned tags = 0;
};

struct EvalReport {
  std::vector<EvalRecord> records;
  double overall = 0.0;
  // tag name -> (correct, total); a sample counts toward every tag it carries
  std::map<std::string, std::pair<int, int>> per_tag;
};

EvalReport evaluate(const Dataset& data, const ParamStore<float>& params,
                    const ModelConfig& cfg, bool with_refine = true);

std::string format_eval_table(const EvalReport& report);
void write_eval_records(const std::string& path, const EvalReport& report);

}  // namespace vlr
