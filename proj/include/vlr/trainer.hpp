#pragma once

#include <functional>
#include <string>

#include "vlr/model.hpp"
#include "vlr/objective.hpp"
#include "vlr/synth.hpp"

namespace vlr {

struct VersionMismatch : Error {
  explicit VersionMismatch(const std::string& msg) : Error(msg) {}
};
struct DivergenceDetected : Error {
  explicit DivergenceDetected(long long step)
      : Error("non-finite loss at step " + std::to_string(step)) {}
};

struct PhaseConfig {
  enum class Kind { mvlr, finetune };
  Kind kind = Kind::mvlr;
  int epochs = 20;
  double lr_init = 7e-4;
  int batch_size = 64;
  // effective per-phase settings
  double r_v_eff = 0.75, r_l_eff = 0.2;
  double lambda_v_eff = 1.0, lambda_l_eff = 1.0;
  int permutations_per_batch = 1;
};

// mvlr keeps the config's masking ratios and loss weights with one
// permutation per batch; finetune zeroes r_v, r_l and lambda_v and averages
// the loss over the config's permutation count.
PhaseConfig make_phase(PhaseConfig::Kind kind, const ModelConfig& cfg,
                       int epochs, double lr_init, int batch_size);

// One-cycle policy: linear warmup from lr_init/25 to lr_init over the first
// 10% of steps, then cosine decay to lr_init/1000.
double lr_schedule(long long step, long long total_steps, double lr_init);

struct TrainState {
  ModelConfig cfg;
  ParamStore<float> params;
  std::vector<float> adam_m, adam_v;
  long long step = 0;  // global optimizer steps across phases
  Rng rng;
  double best_metric = 0.0;
  // phase progress, so an interrupted phase resumes bit-exactly: all
  // epoch/batch randomness is derived from (phase_seed, epoch, batch)
  uint64_t phase_seed = 0;
  long long phase_step = 0;
  int phase_active = 0;          // 0 none, 1 mvlr, 2 finetune
  uint32_t phases_completed = 0;  // bit 0 mvlr, bit 1 finetune
};

TrainState init_train_state(const ModelConfig& cfg, uint64_t seed);

struct StepLog {
  long long step;
  const char* phase;
  double lr, l_v, l_l, total;
  double wall_ms;
};

struct TrainOptions {
  int threads = 0;  // 0 = hardware concurrency
  double weight_decay = 0.01;
  std::function<void(const StepLog&)> log;
  // called after every optimizer step; returning true stops the phase early
  std::function<bool(const TrainState&)> should_stop;
};

// Runs one training phase over the dataset: per batch it samples masks and
// permutations per the phase rules, builds the merged query-text mask,
// accumulates per-sample gradients (slot-deterministic across worker
// threads), and applies one AdamW step.
void run_phase(const Dataset& data, const PhaseConfig& phase, TrainState& state,
               const TrainOptions& opts = {});

// Binary container: "VLRD" magic, format version, serialized ModelConfig,
// named parameter tensors, then optimizer moments / step / rng state. Writes
// a human-readable sidecar at <path>.txt listing parameter names and shapes.
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path,
                           const ModelConfig* expected = nullptr);

}  // namespace vlr
