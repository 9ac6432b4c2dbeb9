#include "vlr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

namespace vlr {

PhaseConfig make_phase(PhaseConfig::Kind kind, const ModelConfig& cfg,
                       int epochs, double lr_init, int batch_size) {
  PhaseConfig p;
  p.kind = kind;
  p.epochs = epochs;
  p.lr_init = lr_init;
  p.batch_size = batch_size;
  if (kind == PhaseConfig::Kind::mvlr) {
    p.r_v_eff = cfg.r_v;
    p.r_l_eff = cfg.r_l;
    p.lambda_v_eff = cfg.lambda_v;
    p.lambda_l_eff = cfg.lambda_l;
    p.permutations_per_batch = 1;
  } else {
    p.r_v_eff = 0.0;
    p.r_l_eff = 0.0;
    p.lambda_v_eff = 0.0;
    p.lambda_l_eff = cfg.lambda_l;
    p.permutations_per_batch = cfg.perm_count;
  }
  return p;
}

double lr_schedule(long long step, long long total_steps, double lr_init) {
  if (total_steps < 1) total_steps = 1;
  step = std::clamp<long long>(step, 0, total_steps);
  const long long warmup = std::max<long long>(1, total_steps / 10);
  const double start = lr_init / 25.0;
  if (step <= warmup)
    return start + (lr_init - start) * static_cast<double>(step) /
                       static_cast<double>(warmup);
  const double floor = lr_init / 1000.0;
  const double tau = static_cast<double>(step - warmup) /
                     static_cast<double>(std::max<long long>(1, total_steps - warmup));
  return floor + (lr_init - floor) * 0.5 * (1.0 + std::cos(3.141592653589793 * tau));
}

TrainState init_train_state(const ModelConfig& cfg, uint64_t seed) {
  TrainState st;
  st.cfg = cfg;
  st.params = init_params<float>(cfg, seed);
  st.adam_m.assign(st.params.total(), 0.0f);
  st.adam_v.assign(st.params.total(), 0.0f);
  st.rng.reseed(seed ^ 0x7261696e65722dull);
  return st;
}

namespace {

constexpr int kSlots = 8;  // gradient accumulation slots; reduction is done
                           // in slot order so any thread count <= kSlots
                           // yields bitwise identical results

struct SampleView {
  PatchGrid grid;
  TokenSeq tokens;
};

struct SampleLoss {
  double l_v = 0.0, l_l = 0.0, total = 0.0;
};

// One training sample: sample masks, build the merged mask(s), run the
// forward pass(es), build the phase loss and backpropagate into `grad`.
SampleLoss train_sample(const SampleView& sv, const ModelConfig& cfg,
                        const PhaseConfig& phase, const ParamStore<float>& ps,
                        float* grad, Rng& rng, bool batch_identity_perm,
                        uint64_t batch_perm_seed) {
  Tape<float> tape(true);
  BoundParams<float> bound(tape, ps, grad);

  const int l = static_cast<int>(sv.tokens.len());
  const int n = sv.grid.n_patches();
  const Charset cs(cfg.charset_chars);

  const VisualMaskPlan plan =
      phase.r_v_eff > 0.0 ? sample_visual_mask(n, phase.r_v_eff, rng)
                          : VisualMaskPlan::all_visible(n);
  const TokenSeq seq = phase.r_l_eff > 0.0
                           ? sample_linguistic_mask(sv.tokens, phase.r_l_eff, rng)
                           : sv.tokens;

  // token targets per query row: characters then EOS
  std::vector<int> targets = seq.ids;
  targets.push_back(cs.eos());

  std::vector<Permutation> perms;
  if (phase.kind == PhaseConfig::Kind::mvlr) {
    if (batch_identity_perm || l <= 1) {
      perms.push_back(Permutation::identity(l));
    } else {
      Rng perm_rng(batch_perm_seed);
      Permutation p = Permutation::identity(l);
      perm_rng.shuffle(p.order);
      perms.push_back(std::move(p));
    }
  } else {
    perms = sample_permutations(l, phase.permutations_per_batch, rng);
  }

  const AttentionMask char_mask =
      build_masked_char_mask(seq.masked_positions(), l + 1, l + 1);

  ForwardOptions fo;
  fo.with_visual_head = phase.lambda_v_eff > 0.0;

  Tensor<float> target_pixels;
  if (fo.with_visual_head) target_pixels = sv.grid.patches;

  std::vector<int> target_set;
  if (phase.kind == PhaseConfig::Kind::mvlr) {
    target_set = seq.masked_positions();
  } else {
    target_set.resize(static_cast<size_t>(l) + 1);
    std::iota(target_set.begin(), target_set.end(), 1);
  }

  SampleLoss out;
  std::vector<std::pair<Tape<float>::Var, float>> total_terms;
  const float perm_w = 1.0f / static_cast<float>(perms.size());
  for (const auto& perm : perms) {
    const AttentionMask m_ql =
        merge_and(build_permuted_mask(perm, l + 1), char_mask);
    const DecoderTrace<float> trace =
        forward(tape, bound, cfg, sv.grid, plan, seq, m_ql, fo);

    if (fo.with_visual_head) {
      auto vl = visual_loss(tape, trace, target_pixels, plan);
      if (vl.node >= 0) {
        total_terms.emplace_back(
            vl.node, static_cast<float>(phase.lambda_v_eff) * perm_w);
        out.l_v += vl.value * perm_w;
      }
    }
    auto ll = linguistic_loss(tape, trace, targets, target_set);
    total_terms.emplace_back(ll.node,
                             static_cast<float>(phase.lambda_l_eff) * perm_w);
    out.l_l += ll.value * perm_w;
  }
  const auto total = tape.weighted_sum(total_terms);
  out.total = static_cast<double>(tape.val(total).data[0]);
  tape.backward(total);
  return out;
}

}  // namespace

void run_phase(const Dataset& data, const PhaseConfig& phase, TrainState& state,
               const TrainOptions& opts) {
  if (data.items.empty()) throw UsageError("training dataset is empty");
  state.cfg.validate();
  const ModelConfig& cfg = state.cfg;
  const Charset cs(cfg.charset_chars);

  // precompute patch grids and token ids once
  std::vector<SampleView> views;
  views.reserve(data.items.size());
  for (const auto& item : data.items) {
    if (item.h != cfg.img_h || item.w != cfg.img_w || item.c != cfg.img_c)
      throw ConfigMismatch("dataset image geometry does not match the config");
    SampleView sv;
    sv.grid = patchify(item, cfg.p_h, cfg.p_w);
    sv.tokens = encode(item.label, cs, static_cast<size_t>(cfg.max_label_len));
    if (sv.tokens.len() == 0)
      throw UsageError("empty label in training data");
    views.push_back(std::move(sv));
  }

  const int n = static_cast<int>(views.size());
  const long long steps_per_epoch = (n + phase.batch_size - 1) / phase.batch_size;
  const long long total_steps = steps_per_epoch * phase.epochs;

  int n_threads = opts.threads > 0
                      ? opts.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::clamp(n_threads, 1, kSlots);

  const size_t psize = state.params.total();
  std::vector<std::vector<float>> slot_grads(kSlots);
  for (auto& g : slot_grads) g.assign(psize, 0.0f);
  std::vector<SampleLoss> slot_loss(kSlots);

  std::vector<int> order(static_cast<size_t>(n));

  const int phase_code = phase.kind == PhaseConfig::Kind::mvlr ? 1 : 2;
  const char* phase_name =
      phase.kind == PhaseConfig::Kind::mvlr ? "mvlr" : "finetune";
  if (state.phase_step == 0) {
    state.phase_seed = state.rng.u64();
    state.phase_active = phase_code;
  } else if (state.phase_active != phase_code) {
    throw ConfigMismatch("checkpoint is mid-way through a different phase");
  }

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long cur_epoch = -1;

  for (long long pos = state.phase_step; pos < total_steps; ++pos) {
    const long long epoch = pos / steps_per_epoch;
    const long long b = pos % steps_per_epoch;
    if (epoch != cur_epoch) {
      std::iota(order.begin(), order.end(), 0);
      Rng erng(mix_seed(state.phase_seed, static_cast<uint64_t>(epoch)));
      erng.shuffle(order);
      cur_epoch = epoch;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const long long bstart = b * phase.batch_size;
    const int bsz =
        static_cast<int>(std::min<long long>(phase.batch_size, n - bstart));

    Rng brng(mix_seed(state.phase_seed, static_cast<uint64_t>(epoch),
                      static_cast<uint64_t>(b) + 1));
    const uint64_t batch_seed = brng.u64();
    const bool batch_identity = brng.uniform() < 0.5;
    const uint64_t batch_perm_seed = brng.u64();

    for (int s = 0; s < kSlots; ++s) {
      std::memset(slot_grads[static_cast<size_t>(s)].data(), 0,
                  psize * sizeof(float));
      slot_loss[static_cast<size_t>(s)] = {};
    }

    // thread t owns slots t, t+n_threads, ...; samples are processed in
    // ascending batch position within each slot, and slots are reduced in
    // index order, so any thread count gives bitwise identical gradients
    auto worker = [&](int tid) {
      for (int slot = tid; slot < kSlots; slot += n_threads) {
        for (int i = slot; i < bsz; i += kSlots) {
          const int sample = order[static_cast<size_t>(bstart + i)];
          Rng srng(batch_seed ^ static_cast<uint64_t>(i));
          const SampleLoss sl = train_sample(
              views[static_cast<size_t>(sample)], cfg, phase, state.params,
              slot_grads[static_cast<size_t>(slot)].data(), srng,
              batch_identity, batch_perm_seed);
          auto& acc = slot_loss[static_cast<size_t>(slot)];
          acc.l_v += sl.l_v;
          acc.l_l += sl.l_l;
          acc.total += sl.total;
        }
      }
    };
    if (n_threads == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
      for (auto& t : pool) t.join();
    }

    float* g0 = slot_grads[0].data();
    for (int s = 1; s < kSlots; ++s) {
      const float* gs = slot_grads[static_cast<size_t>(s)].data();
      for (size_t i = 0; i < psize; ++i) g0[i] += gs[i];
    }
    SampleLoss batch_loss;
    for (int s = 0; s < kSlots; ++s) {
      batch_loss.l_v += slot_loss[static_cast<size_t>(s)].l_v;
      batch_loss.l_l += slot_loss[static_cast<size_t>(s)].l_l;
      batch_loss.total += slot_loss[static_cast<size_t>(s)].total;
    }
    batch_loss.l_v /= bsz;
    batch_loss.l_l /= bsz;
    batch_loss.total /= bsz;
    if (!std::isfinite(batch_loss.total)) throw DivergenceDetected(state.step);

    const double lr = lr_schedule(pos, total_steps, phase.lr_init);
    const double t = static_cast<double>(state.step) + 1.0;
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    const float inv_b = 1.0f / static_cast<float>(bsz);
    for (size_t p = 0; p < state.params.values.size(); ++p) {
      Tensor<float>& theta = state.params.values[p];
      const size_t off = state.params.offsets[p];
      for (size_t i = 0; i < theta.data.size(); ++i) {
        const double g = static_cast<double>(g0[off + i]) * inv_b;
        double m = state.adam_m[off + i];
        double v = state.adam_v[off + i];
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        state.adam_m[off + i] = static_cast<float>(m);
        state.adam_v[off + i] = static_cast<float>(v);
        theta.data[i] = static_cast<float>(
            theta.data[i] - lr * ((m / bc1) / (std::sqrt(v / bc2) + eps) +
                                  opts.weight_decay * theta.data[i]));
      }
    }

    ++state.step;
    state.phase_step = pos + 1;

    if (opts.log) {
      const auto t1 = std::chrono::steady_clock::now();
      StepLog rec{state.step,
                  phase_name,
                  lr,
                  batch_loss.l_v,
                  batch_loss.l_l,
                  batch_loss.total,
                  std::chrono::duration<double, std::milli>(t1 - t0).count()};
      opts.log(rec);
    }
    if (opts.should_stop && opts.should_stop(state) && pos + 1 < total_steps)
      return;
  }
  state.phase_step = 0;
  state.phase_active = 0;
  state.phases_completed |= (phase.kind == PhaseConfig::Kind::mvlr ? 1u : 2u);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'V', 'L', 'R', 'D'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

void write_string(std::ofstream& f, const std::string& s) {
  write_pod(f, static_cast<uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_string(std::ifstream& f) {
  const auto n = read_pod<uint32_t>(f);
  std::string s(n, '\0');
  f.read(s.data(), n);
  return s;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, 4);
  write_pod(f, kVersion);
  write_string(f, state.cfg.to_text());
  write_pod(f, static_cast<uint32_t>(state.params.values.size()));
  for (size_t i = 0; i < state.params.values.size(); ++i) {
    write_string(f, state.params.names[i]);
    const Tensor<float>& t = state.params.values[i];
    write_pod(f, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod(f, static_cast<uint32_t>(d));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  write_pod(f, state.step);
  write_pod(f, state.phase_seed);
  write_pod(f, state.phase_step);
  write_pod(f, static_cast<int32_t>(state.phase_active));
  write_pod(f, state.phases_completed);
  f.write(reinterpret_cast<const char*>(state.adam_m.data()),
          static_cast<std::streamsize>(state.adam_m.size() * sizeof(float)));
  f.write(reinterpret_cast<const char*>(state.adam_v.data()),
          static_cast<std::streamsize>(state.adam_v.size() * sizeof(float)));
  const Rng::State rs = state.rng.state();
  for (uint64_t w : rs.s) write_pod(f, w);
  write_pod(f, static_cast<uint8_t>(rs.has_gauss ? 1 : 0));
  write_pod(f, rs.gauss);
  write_pod(f, state.best_metric);
  if (!f) throw IoError("short checkpoint write: " + path);

  std::ofstream side(path + ".txt");
  side << "format VLRD v" << kVersion << "\n";
  side << "step " << state.step << "\n";
  size_t total = 0;
  for (size_t i = 0; i < state.params.values.size(); ++i) {
    side << state.params.names[i];
    for (int d : state.params.values[i].shape) side << " " << d;
    side << "\n";
    total += state.params.values[i].numel();
  }
  side << "total_parameters " << total << "\n";
}

TrainState load_checkpoint(const std::string& path,
                           const ModelConfig* expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw VersionMismatch("not a VLRD checkpoint: " + path);
  const auto version = read_pod<uint32_t>(f);
  if (version != kVersion)
    throw VersionMismatch("unsupported checkpoint version " +
                          std::to_string(version));

  TrainState st;
  st.cfg = ModelConfig::from_text(read_string(f));
  st.cfg.validate();
  if (expected && !(st.cfg == *expected))
    throw ConfigMismatch("checkpoint config does not match the expected one");

  // allocate tensors with the canonical layout, then overwrite from file
  st.params = init_params<float>(st.cfg, 0);
  const auto n_params = read_pod<uint32_t>(f);
  if (n_params != st.params.values.size())
    throw ConfigMismatch("checkpoint parameter count mismatch");
  for (size_t i = 0; i < n_params; ++i) {
    const std::string name = read_string(f);
    if (name != st.params.names[i])
      throw ConfigMismatch("unexpected parameter " + name);
    const auto ndim = read_pod<uint32_t>(f);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(f));
    Tensor<float>& t = st.params.values[i];
    if (shape != t.shape) throw ConfigMismatch("shape mismatch for " + name);
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  st.step = read_pod<long long>(f);
  st.phase_seed = read_pod<uint64_t>(f);
  st.phase_step = read_pod<long long>(f);
  st.phase_active = read_pod<int32_t>(f);
  st.phases_completed = read_pod<uint32_t>(f);
  st.adam_m.resize(st.params.total());
  st.adam_v.resize(st.params.total());
  f.read(reinterpret_cast<char*>(st.adam_m.data()),
         static_cast<std::streamsize>(st.adam_m.size() * sizeof(float)));
  f.read(reinterpret_cast<char*>(st.adam_v.data()),
         static_cast<std::streamsize>(st.adam_v.size() * sizeof(float)));
  Rng::State rs;
  for (auto& w : rs.s) w = read_pod<uint64_t>(f);
  rs.has_gauss = read_pod<uint8_t>(f) != 0;
  rs.gauss = read_pod<double>(f);
  st.rng.set_state(rs);
  st.best_metric = read_pod<double>(f);
  if (!f) throw IoError("truncated checkpoint: " + path);
  return st;
}

}  // namespace vlr
