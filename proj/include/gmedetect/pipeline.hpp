// pipeline.hpp
// Dataset assembly (generation + labeling + featurization + container I/O),
// stratified splitting, the training loop, evaluation with false-positive /
// false-negative accounting, repeated experiments and the white-noise sweep.
//
// Labels: -1 = genuinely entangled, +1 = not detected; class index 0 maps to
// -1 and 1 to +1. FP = non-entangled predicted entangled, FN = entangled
// predicted non-entangled.

#pragma once

#include <cmath>
#include <deque>
#include <future>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "gmedetect/featurize.hpp"
#include "gmedetect/gmn_oracle.hpp"
#include "gmedetect/nn.hpp"
#include "gmedetect/sdp_gmn.hpp"
#include "gmedetect/statekit.hpp"

namespace gme {

enum class FeatureKind : uint8_t { Dense = 0, GhzDiagonal = 1 };
enum class Labeler { Analytic, Sdp };

inline const char* feature_kind_name(FeatureKind k) {
  return k == FeatureKind::Dense ? "dense" : "ghz_diagonal";
}

struct Sample {
  std::vector<double> features;
  int8_t label = +1;
  bool marginal = false;
  uint64_t source_seed = 0;
};

struct Dataset {
  FeatureKind kind = FeatureKind::GhzDiagonal;
  int n_qubits = 0;
  int64_t feature_length = 0;
  std::vector<Sample> samples;
  uint64_t provenance_hash = 0;

  int64_t count_label(int8_t label) const {
    int64_t c = 0;
    for (const auto& s : samples)
      if (s.label == label) ++c;
    return c;
  }
};

struct GenStats {
  int64_t attempts = 0;
  int64_t excluded_ambiguous = 0;  // SDP value too close to the threshold
  int64_t sdp_failures = 0;        // nonconvergent solves, resampled
  int64_t surplus_discarded = 0;   // label quota already full
};

// ---------------------------------------------------------------------------
// GMED container. Layout (all little-endian): magic "GMED", version u32,
// feature_kind u8, n_qubits u16, sample_count u64, feature_length u64, then
// per sample {label i8, marginal u8, features f64[feature_length]}.

inline std::string write_dataset(const Dataset& ds) {
  ByteWriter w;
  w.magic("GMED");
  w.u32(1);
  w.u8(static_cast<uint8_t>(ds.kind));
  w.u16(static_cast<uint16_t>(ds.n_qubits));
  w.u64(ds.samples.size());
  w.u64(static_cast<uint64_t>(ds.feature_length));
  for (const auto& s : ds.samples) {
    if (static_cast<int64_t>(s.features.size()) != ds.feature_length)
      throw DataError("dataset: inconsistent feature length");
    w.i8(s.label);
    w.u8(s.marginal ? 1 : 0);
    w.f64s(s.features.data(), s.features.size());
  }
  return w.data();
}

inline Dataset read_dataset(const std::string& bytes) {
  ByteReader r(bytes);
  r.expect_magic("GMED", "dataset");
  if (r.u32() != 1) throw DataError("dataset: unsupported version");
  Dataset ds;
  ds.kind = static_cast<FeatureKind>(r.u8());
  if (ds.kind != FeatureKind::Dense && ds.kind != FeatureKind::GhzDiagonal)
    throw DataError("dataset: unknown feature kind");
  ds.n_qubits = r.u16();
  const uint64_t count = r.u64();
  ds.feature_length = static_cast<int64_t>(r.u64());
  if (ds.feature_length <= 0) throw DataError("dataset: bad feature length");
  ds.samples.resize(count);
  for (auto& s : ds.samples) {
    s.label = r.i8();
    if (s.label != -1 && s.label != +1) throw DataError("dataset: bad label");
    s.marginal = r.u8() != 0;
    s.features.resize(static_cast<std::size_t>(ds.feature_length));
    r.f64s(s.features.data(), s.features.size());
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset building.

struct BuildOptions {
  double sdp_tol = kSdpDefaultTol;
  int threads = 0;  // 0 = hardware concurrency, capped by GME_DETECT_THREADS
  std::vector<GhzDiagonalSpec>* collect_specs = nullptr;
  std::vector<Eigen::MatrixXcd>* collect_states = nullptr;
  GenStats* stats = nullptr;
};

namespace pipeline_detail {

inline int resolve_threads(int requested) {
  int n = requested > 0 ? requested
                        : static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (int cap = env_thread_cap(); cap > 0) n = std::min(n, cap);
  return n;
}

inline uint64_t config_hash(const std::string& text) { return fnv1a64(text); }

// SDP label with an ambiguity band: the optimum lies in [value, value+gap],
// so a sample is kept only when the whole interval sits on one side of the
// label threshold.
struct SdpLabel {
  int label = 0;  // 0 = ambiguous
  bool marginal = false;
  double value = 0.0;
};

inline SdpLabel sdp_label(const WitnessSolution& sol) {
  SdpLabel out;
  out.value = sol.gmn_value;
  const double hi = sol.gmn_value + std::max(sol.duality_gap, 0.0);
  if (sol.gmn_value > kLabelThreshold)
    out.label = -1;
  else if (hi <= kLabelThreshold) {
    out.label = +1;
    out.marginal = sol.gmn_value > 0.0;
  }
  return out;
}

}  // namespace pipeline_detail

inline Dataset build_dataset(FeatureKind kind, int n, int64_t count_per_label,
                             Labeler labeler, uint64_t master_seed,
                             const BuildOptions& opt = {}) {
  if (count_per_label < 1) throw DataError("build_dataset: need count >= 1");
  if (labeler == Labeler::Analytic && kind != FeatureKind::GhzDiagonal)
    throw DataError("build_dataset: analytic labeler requires ghz_diagonal kind");
  if (labeler == Labeler::Sdp && n > kSdpMaxQubits)
    throw CapacityError("build_dataset: sdp labeler capped at n <= " +
                        std::to_string(kSdpMaxQubits));
  if (kind == FeatureKind::Dense && n > kMaxDenseQubits)
    throw CapacityError("build_dataset: dense features capped at n <= " +
                        std::to_string(kMaxDenseQubits));
  if (n < 2) throw DataError("build_dataset: need n >= 2");

  Dataset ds;
  ds.kind = kind;
  ds.n_qubits = n;
  ds.feature_length = kind == FeatureKind::Dense ? dense_feature_length(n)
                                                 : ghz_feature_length(n);
  {
    std::ostringstream cfg;
    cfg << "gen|" << feature_kind_name(kind) << "|n=" << n << "|per_label="
        << count_per_label << "|labeler="
        << (labeler == Labeler::Analytic ? "analytic" : "sdp")
        << "|seed=" << master_seed;
    ds.provenance_hash = pipeline_detail::config_hash(cfg.str());
  }

  GenStats local_stats;
  GenStats& stats = opt.stats ? *opt.stats : local_stats;

  int64_t want_neg = count_per_label, want_pos = count_per_label;

  if (labeler == Labeler::Analytic) {
    // Constructive generation: the target label is guaranteed.
    for (int64_t i = 0; want_neg > 0 || want_pos > 0; ++i) {
      const int target = (i % 2 == 0) ? -1 : +1;
      ++stats.attempts;
      if ((target == -1 && want_neg == 0) || (target == +1 && want_pos == 0)) {
        continue;  // quota for this parity already filled
      }
      const uint64_t seed = derive_seed(master_seed, static_cast<uint64_t>(i));
      GhzDiagonalSpec spec = random_ghz_diagonal(n, target, seed);
      auto result = gmn_analytic(spec);
      Sample s;
      s.features = featurize_ghz_diagonal(spec).values;
      s.label = static_cast<int8_t>(result.label);
      s.marginal = result.marginal;
      s.source_seed = seed;
      ds.samples.push_back(std::move(s));
      if (opt.collect_specs) opt.collect_specs->push_back(spec);
      if (opt.collect_states && n <= kMaxDenseQubits)
        opt.collect_states->push_back(to_density_matrix(spec).matrix());
      (result.label == -1 ? want_neg : want_pos) -= 1;
    }
    return ds;
  }

  // SDP labeling: states are generated per attempt index, solved (in
  // parallel, consumed in attempt order so the result is deterministic), and
  // kept while their label's quota is open. Ambiguous values near the label
  // threshold and nonconvergent solves are excluded and resampled.
  struct Attempt {
    uint64_t seed = 0;
    GhzDiagonalSpec spec;   // ghz kind
    Eigen::MatrixXcd state; // dense kind
    pipeline_detail::SdpLabel label;
    bool failed = false;
  };

  auto make_state = [&](int64_t index) {
    Attempt a;
    a.seed = derive_seed(master_seed, static_cast<uint64_t>(index));
    if (kind == FeatureKind::GhzDiagonal) {
      const int target = (index % 2 == 0) ? -1 : +1;
      a.spec = random_ghz_diagonal(n, target, a.seed);
      a.state = to_density_matrix(a.spec).matrix();
    } else {
      Rng rng(a.seed);
      const int rank = 1 + static_cast<int>(rng.below(uint64_t(1) << n));
      a.state = random_density_matrix(n, rank, derive_seed(a.seed, 1)).matrix();
    }
    return a;
  };

  auto solve_attempt = [&](Attempt a) {
    try {
      auto sol = gmn_sdp(DensityMatrix(a.state), opt.sdp_tol);
      a.label = pipeline_detail::sdp_label(sol);
    } catch (const NumericalError&) {
      a.failed = true;
    }
    return a;
  };

  const int threads = pipeline_detail::resolve_threads(opt.threads);
  const int64_t max_attempts = 400 * 2 * count_per_label;
  std::deque<std::future<Attempt>> inflight;
  int64_t next_index = 0;

  auto launch = [&]() {
    if (next_index >= max_attempts) return false;
    Attempt a = make_state(next_index++);
    inflight.push_back(std::async(std::launch::async, solve_attempt, std::move(a)));
    return true;
  };

  while (static_cast<int>(inflight.size()) < threads && launch()) {
  }
  while ((want_neg > 0 || want_pos > 0) && !inflight.empty()) {
    Attempt a = inflight.front().get();
    inflight.pop_front();
    ++stats.attempts;
    if (want_neg > 0 || want_pos > 0) launch();

    if (a.failed) {
      ++stats.sdp_failures;
      continue;
    }
    if (a.label.label == 0) {
      ++stats.excluded_ambiguous;
      continue;
    }
    int64_t& quota = a.label.label == -1 ? want_neg : want_pos;
    if (quota == 0) {
      ++stats.surplus_discarded;
      continue;
    }
    Sample s;
    if (kind == FeatureKind::GhzDiagonal)
      s.features = featurize_ghz_diagonal(a.spec).values;
    else
      s.features = featurize_dense(DensityMatrix(a.state)).values;
    s.label = static_cast<int8_t>(a.label.label);
    s.marginal = a.label.marginal;
    s.source_seed = a.seed;
    ds.samples.push_back(std::move(s));
    if (opt.collect_specs && kind == FeatureKind::GhzDiagonal)
      opt.collect_specs->push_back(a.spec);
    if (opt.collect_states) opt.collect_states->push_back(a.state);
    quota -= 1;
  }
  if (want_neg > 0 || want_pos > 0)
    throw DataError("build_dataset: attempt budget exhausted before quotas");
  return ds;
}

// Noisy GHZ-diagonal dataset: noise is applied in spec space before
// labeling. At small p no entangled state survives the mixing, so the
// attempt budget can run out; that is reported as a degenerate grid point
// rather than an error.
struct NoisyBuild {
  Dataset dataset;
  bool degenerate = false;
  GenStats stats;
};

inline NoisyBuild build_noisy_ghz_dataset(int n, double p,
                                          int64_t count_per_label,
                                          uint64_t master_seed,
                                          int64_t attempt_factor = 400) {
  if (!(p >= 0.0 && p <= 1.0))
    throw DataError("build_noisy_ghz_dataset: p must be in [0,1]");
  NoisyBuild out;
  Dataset& ds = out.dataset;
  ds.kind = FeatureKind::GhzDiagonal;
  ds.n_qubits = n;
  ds.feature_length = ghz_feature_length(n);
  {
    std::ostringstream cfg;
    cfg << "noise|n=" << n << "|p=" << p << "|per_label=" << count_per_label
        << "|seed=" << master_seed;
    ds.provenance_hash = pipeline_detail::config_hash(cfg.str());
  }
  int64_t want_neg = count_per_label, want_pos = count_per_label;
  const int64_t max_attempts = attempt_factor * 2 * count_per_label;
  for (int64_t i = 0; (want_neg > 0 || want_pos > 0) && i < max_attempts; ++i) {
    ++out.stats.attempts;
    const uint64_t seed = derive_seed(master_seed, static_cast<uint64_t>(i));
    const int base_target = (i % 2 == 0) ? -1 : +1;
    GhzDiagonalSpec noisy =
        add_white_noise(random_ghz_diagonal(n, base_target, seed), p);
    auto result = gmn_analytic(noisy);
    int64_t& quota = result.label == -1 ? want_neg : want_pos;
    if (quota == 0) {
      ++out.stats.surplus_discarded;
      continue;
    }
    Sample s;
    s.features = featurize_ghz_diagonal(noisy).values;
    s.label = static_cast<int8_t>(result.label);
    s.marginal = result.marginal;
    s.source_seed = seed;
    ds.samples.push_back(std::move(s));
    quota -= 1;
  }
  out.degenerate = want_neg > 0 || want_pos > 0;
  return out;
}

// ---------------------------------------------------------------------------
// Stratified split: per-class shuffle, train_fraction of each class to the
// training set.

struct SplitResult {
  Dataset train;
  Dataset test;
};

inline SplitResult split(const Dataset& ds, double train_fraction,
                         uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("split: fraction must be in (0,1)");
  SplitResult out;
  out.train.kind = out.test.kind = ds.kind;
  out.train.n_qubits = out.test.n_qubits = ds.n_qubits;
  out.train.feature_length = out.test.feature_length = ds.feature_length;
  out.train.provenance_hash = out.test.provenance_hash = ds.provenance_hash;

  Rng rng(seed);
  for (int8_t label : {int8_t(-1), int8_t(+1)}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (ds.samples[i].label == label) idx.push_back(i);
    if (idx.empty()) continue;
    const auto take =
        static_cast<std::size_t>(std::llround(train_fraction * double(idx.size())));
    if (take == 0 || take >= idx.size())
      throw DataError("split: class too small to stratify");
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      const std::size_t j = rng.below(i + 1);
      std::swap(idx[i], idx[j]);
    }
    for (std::size_t i = 0; i < idx.size(); ++i)
      (i < take ? out.train : out.test).samples.push_back(ds.samples[idx[i]]);
  }
  if (out.train.samples.empty() || out.test.samples.empty())
    throw DataError("split: empty partition");
  return out;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  int max_epochs = 0;  // 0 = kind default (200 dense, 50 ghz-diagonal)
  double learning_rate = 0.001;
  double l2 = 1e-4;
  int batch_size = 128;
  bool shuffle_each_epoch = true;
  uint64_t seed = 0;
  bool se_enabled = true;
  int se_reduction = 4;
};

inline int resolve_epochs(const TrainConfig& cfg, FeatureKind kind) {
  if (cfg.max_epochs > 0) return cfg.max_epochs;
  return kind == FeatureKind::Dense ? 200 : 50;
}

struct EpochStat {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainResult {
  nn::Model model;
  NormStats stats;
  std::vector<EpochStat> history;
  bool diverged = false;
  int diverged_epoch = -1;
};

namespace pipeline_detail {

struct FeatureView {
  const std::vector<Sample>* samples;
  std::size_t size() const { return samples->size(); }
  auto begin() const { return Iter{samples, 0}; }
  auto end() const { return Iter{samples, samples->size()}; }
  struct Iter {
    const std::vector<Sample>* samples;
    std::size_t i;
    const std::vector<double>& operator*() const { return (*samples)[i].features; }
    Iter& operator++() { ++i; return *this; }
    bool operator!=(const Iter& o) const { return i != o.i; }
  };
};

inline int class_of(int8_t label) { return label == -1 ? 0 : 1; }

}  // namespace pipeline_detail

inline TrainResult train(const Dataset& trainset, const TrainConfig& cfg) {
  if (trainset.samples.empty()) throw DataError("train: empty training set");
  const int epochs = resolve_epochs(cfg, trainset.kind);
  const auto L = trainset.feature_length;

  TrainResult out;
  out.stats = compute_norm_stats(pipeline_detail::FeatureView{&trainset.samples});
  out.model = nn::build_model(L, cfg.se_enabled, cfg.seed, cfg.se_reduction);

  // Normalize once up front.
  const std::size_t count = trainset.samples.size();
  Eigen::MatrixXd features(count * static_cast<std::size_t>(L), 1);
  std::vector<int> classes(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& s = trainset.samples[i];
    for (int64_t j = 0; j < L; ++j)
      features(Eigen::Index(i) * L + j, 0) =
          (s.features[static_cast<std::size_t>(j)] - out.stats.mean[j]) /
          out.stats.scale[j];
    classes[i] = pipeline_detail::class_of(s.label);
  }

  nn::AdamState adam;
  nn::AdamConfig adam_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.l2};

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5u));

  for (int epoch = 0; epoch < epochs; ++epoch) {
    if (cfg.shuffle_each_epoch) {
      for (std::size_t i = count - 1; i > 0; --i) {
        const std::size_t j = shuffle_rng.below(i + 1);
        std::swap(order[i], order[j]);
      }
    }
    double epoch_loss = 0.0;
    int64_t epoch_correct = 0;

    std::size_t pos = 0;
    while (pos < count) {
      std::size_t bsz = std::min<std::size_t>(cfg.batch_size, count - pos);
      // A trailing singleton cannot batch-normalize; fold it into the
      // previous batch instead.
      if (count - pos - bsz == 1) bsz += 1;
      Eigen::MatrixXd batch(bsz * static_cast<std::size_t>(L), 1);
      std::vector<int> batch_classes(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        const std::size_t src = order[pos + b];
        batch.middleRows(Eigen::Index(b) * L, L) =
            features.middleRows(Eigen::Index(src) * L, L);
        batch_classes[b] = classes[src];
      }
      pos += bsz;

      out.model.zero_grads();
      auto logits = out.model.forward_logits(
          nn::Value::seq(std::move(batch), static_cast<int>(bsz),
                         static_cast<int>(L), 1),
          true);
      auto ce = nn::softmax_cross_entropy(logits, batch_classes);
      if (!std::isfinite(ce.loss)) {
        out.diverged = true;
        out.diverged_epoch = epoch;
        return out;
      }
      out.model.backward(ce.dlogits, static_cast<int>(bsz));
      nn::adam_step(out.model.params(), adam, adam_cfg);

      epoch_loss += ce.loss * double(bsz);
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const int pred = logits(i, 0) >= logits(i, 1) ? 0 : 1;
        if (pred == batch_classes[static_cast<std::size_t>(i)]) ++epoch_correct;
      }
    }
    out.history.push_back(
        {epoch_loss / double(count), double(epoch_correct) / double(count)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation.

struct EvalReport {
  int64_t test_size = 0;
  int64_t correct = 0;
  int64_t fn_count = 0;  // entangled predicted non-entangled
  int64_t fp_count = 0;  // non-entangled predicted entangled
  int64_t entangled_total = 0;
  int64_t nondetected_total = 0;
  double accuracy = 0.0;
};

// Shared tally used by evaluate() and by randomized accounting checks.
inline EvalReport tally_predictions(const std::vector<int8_t>& truth,
                                    const std::vector<int8_t>& predicted) {
  if (truth.size() != predicted.size())
    throw DataError("tally: size mismatch");
  EvalReport r;
  r.test_size = static_cast<int64_t>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == -1)
      ++r.entangled_total;
    else
      ++r.nondetected_total;
    if (truth[i] == predicted[i])
      ++r.correct;
    else if (truth[i] == -1)
      ++r.fn_count;
    else
      ++r.fp_count;
  }
  r.accuracy = r.test_size ? double(r.correct) / double(r.test_size) : 0.0;
  return r;
}

inline EvalReport evaluate(nn::Model& model, const NormStats& stats,
                           const Dataset& testset) {
  if (testset.samples.empty()) throw DataError("evaluate: empty test set");
  const auto L = testset.feature_length;
  if (static_cast<int64_t>(stats.mean.size()) != L)
    throw DataError("evaluate: feature length does not match the model stats");

  std::vector<int8_t> truth, predicted;
  truth.reserve(testset.samples.size());
  predicted.reserve(testset.samples.size());

  const std::size_t chunk = 256;
  for (std::size_t base = 0; base < testset.samples.size(); base += chunk) {
    const std::size_t bsz = std::min(chunk, testset.samples.size() - base);
    Eigen::MatrixXd batch(bsz * static_cast<std::size_t>(L), 1);
    for (std::size_t b = 0; b < bsz; ++b) {
      const auto& s = testset.samples[base + b];
      for (int64_t j = 0; j < L; ++j)
        batch(Eigen::Index(b) * L + j, 0) =
            (s.features[static_cast<std::size_t>(j)] - stats.mean[j]) /
            stats.scale[j];
      truth.push_back(s.label);
    }
    auto probs = model.predict_proba(nn::Value::seq(
        std::move(batch), static_cast<int>(bsz), static_cast<int>(L), 1));
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
      predicted.push_back(probs(i, 0) >= probs(i, 1) ? int8_t(-1) : int8_t(+1));
  }
  return tally_predictions(truth, predicted);
}

// ---------------------------------------------------------------------------
// Repeated experiments: split and initialization are both re-derived from
// each run seed.

struct RunReport {
  uint64_t run_seed = 0;
  EvalReport eval;
  double final_train_loss = 0.0;
  double final_train_accuracy = 0.0;
};

struct ArmSummary {
  bool se_enabled = false;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // sample standard deviation over runs
  std::vector<RunReport> runs;
};

inline ArmSummary summarize_runs(bool se_enabled,
                                 std::vector<RunReport> runs) {
  ArmSummary s;
  s.se_enabled = se_enabled;
  s.runs = std::move(runs);
  const double n = double(s.runs.size());
  for (const auto& r : s.runs) s.mean_accuracy += r.eval.accuracy;
  s.mean_accuracy /= n;
  if (s.runs.size() > 1) {
    double acc = 0.0;
    for (const auto& r : s.runs) {
      const double d = r.eval.accuracy - s.mean_accuracy;
      acc += d * d;
    }
    s.std_accuracy = std::sqrt(acc / (n - 1.0));
  }
  return s;
}

struct RepeatReport {
  std::vector<ArmSummary> arms;
};

inline RepeatReport repeat_experiment(const Dataset& full,
                                      const TrainConfig& base,
                                      const std::vector<uint64_t>& run_seeds,
                                      bool cnn_arm, bool se_arm,
                                      double train_fraction = 0.7) {
  if (run_seeds.size() < 1) throw DataError("repeat_experiment: need seeds");
  RepeatReport report;
  std::vector<bool> arms;
  if (cnn_arm) arms.push_back(false);
  if (se_arm) arms.push_back(true);
  for (bool se : arms) {
    std::vector<RunReport> runs;
    for (uint64_t seed : run_seeds) {
      auto parts = split(full, train_fraction, seed);
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.se_enabled = se;
      auto trained = train(parts.train, cfg);
      if (trained.diverged)
        throw NumericalError("repeat_experiment: training diverged");
      RunReport rr;
      rr.run_seed = seed;
      rr.eval = evaluate(trained.model, trained.stats, parts.test);
      rr.final_train_loss = trained.history.back().loss;
      rr.final_train_accuracy = trained.history.back().accuracy;
      runs.push_back(std::move(rr));
    }
    report.arms.push_back(summarize_runs(se, std::move(runs)));
  }
  return report;
}

inline std::vector<uint64_t> derive_run_seeds(uint64_t master, int repeats) {
  std::vector<uint64_t> seeds;
  seeds.reserve(repeats);
  for (int i = 0; i < repeats; ++i)
    seeds.push_back(derive_seed(master, 0x9000 + static_cast<uint64_t>(i)));
  return seeds;
}

// ---------------------------------------------------------------------------
// White-noise sweep: per grid point, build a noisy dataset, run both arms
// over the repeats, and report accuracy with across-seed error bars.
// Degenerate points (unfillable label quotas) skip training.

struct NoisePoint {
  double p = 0.0;
  bool degenerate = false;
  int64_t attempts = 0;
  std::vector<ArmSummary> arms;
};

inline std::vector<NoisePoint> noise_sweep(int n,
                                           const std::vector<double>& p_grid,
                                           int64_t count_per_label,
                                           const TrainConfig& base, int repeats,
                                           uint64_t master_seed,
                                           bool cnn_arm = true,
                                           bool se_arm = true) {
  if (repeats < 1) throw DataError("noise_sweep: need repeats >= 1");
  std::vector<NoisePoint> out;
  for (std::size_t gi = 0; gi < p_grid.size(); ++gi) {
    const double p = p_grid[gi];
    NoisePoint point;
    point.p = p;
    auto build = build_noisy_ghz_dataset(
        n, p, count_per_label, derive_seed(master_seed, 0x7000 + gi));
    point.attempts = build.stats.attempts;
    point.degenerate = build.degenerate;
    if (!build.degenerate) {
      auto seeds = derive_run_seeds(derive_seed(master_seed, 0x8000 + gi), repeats);
      auto rep = repeat_experiment(build.dataset, base, seeds, cnn_arm, se_arm);
      point.arms = std::move(rep.arms);
    }
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace gme
