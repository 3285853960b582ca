#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdfssl/data.hpp"
#include "sdfssl/importance.hpp"
#include "sdfssl/meta_ema.hpp"
#include "sdfssl/metrics.hpp"
#include "sdfssl/nnet.hpp"
#include "sdfssl/pseudo_weight.hpp"

namespace sdfssl {

// Two-stage pipeline: supervised warm-up of the teacher, then the
// semi-supervised loop (importance -> pseudo-label assessment -> student step
// -> meta-adaptive EMA), plus the ablation harness and evaluation.

struct PhaseConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 0.02;
  std::vector<int> decay_epochs;  // lr *= 0.1 entering each listed epoch (1-based)

  void validate(const std::string& name) const;
};

struct NetworkConfig {
  std::vector<int> hidden{32, 32};
  Activation hidden_act = Activation::tanh;
  FeatureConfig features;
};

enum class WeightingMode { none, fixed, adaptive };

struct WeightingConfig {
  WeightParams params;
  ConsistencyKind consistency = ConsistencyKind::l1;
  WeightingMode mode = WeightingMode::adaptive;
  double fixed_value = 0.2;
};

struct ImportanceConfig {
  int n_batches = 20;  // toy default; the paper-scale preset raises it to 100
  int batch_size = 8;
};

struct EmaRunConfig {
  EmaConfig ema;  // total_steps is filled from semi.epochs at run time
  bool enabled = true;
  bool per_step = false;        // apply the EMA after every student step
  bool raw_importance = false;  // feed unnormalized omega into the update
  int controller_hidden = 16;
  bool adapt_controller = false;  // finite-difference controller refinement
  int adapt_every = 5;
  double adapt_fd_step = 1e-3;
  double adapt_lr = 1e-2;
};

struct RunConfig {
  std::string dataset_path = "dataset.sdfd";
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  GenConfig gen;  // used by the gen-data command; seed mirrors `seed`
  NetworkConfig network;
  PhaseConfig warmup{200, 64, 0.05, {150, 190}};
  PhaseConfig semi{100, 64, 0.02, {75, 95}};
  WeightingConfig weighting;
  EmaRunConfig ema;
  ImportanceConfig importance;
  std::vector<std::string> loss_terms{"sdf_l1"};
  int eval_every = 1;  // full-metric cadence in logs (last epoch always)
  int ablation_epochs = 25;
  std::string dump_importance;  // optional CSV path

  void validate() const;
};

RunConfig default_run_config();
RunConfig load_run_config(const std::string& path);
void apply_preset(RunConfig& cfg, const std::string& preset);  // "toy" | "paper-scale"

// ---------------------------------------------------------------------------
// Run log
// ---------------------------------------------------------------------------

struct RunLogRow {
  int epoch = 0;
  std::string phase;
  double lr = std::numeric_limits<double>::quiet_NaN();
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_loss_teacher = std::numeric_limits<double>::quiet_NaN();
  double val_loss_student = std::numeric_limits<double>::quiet_NaN();
  double mean_w_pseudo = std::numeric_limits<double>::quiet_NaN();
  double min_w_pseudo = std::numeric_limits<double>::quiet_NaN();
  double max_w_pseudo = std::numeric_limits<double>::quiet_NaN();
  double m_base = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double m_effective = std::numeric_limits<double>::quiet_NaN();
  std::optional<bool> reset_flag;
  std::optional<MetricsReport> metrics;
};

void write_runlog(const std::string& path, const std::vector<RunLogRow>& rows);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum class Split { val, test };

// Per-sample predictor factory; the network factory ignores the sample, the
// oracle factory wraps its analytic shape.
using PredictorFactory = std::function<Predictor(const Sample&)>;

PredictorFactory network_predictor_factory(const ParamVector& params, const NetworkSpec& spec,
                                           const FeatureConfig& feat);
PredictorFactory oracle_predictor_factory();

struct EvalRow {
  std::size_t sample_index = 0;
  MetricsReport metrics;
  bool empty_surface = false;
};

struct EvalResult {
  std::vector<EvalRow> rows;
  MetricsReport mean;
};

// Runs the predictor over the occupancy grid of each sample, extracts the
// isocontour, and scores it against the analytic ground truth. Samples whose
// prediction has no surface get worst-case metric values.
EvalResult evaluate_dataset(const PredictorFactory& factory, const Dataset& ds,
                            std::span<const std::size_t> indices, int grid_res);

void write_metrics_csv(const std::string& path, const EvalResult& result);

// Deterministic split: first 10% (rounded, >=1) of the labeled samples by
// index order, skipped when only one labeled sample exists. `test` is the
// unlabeled remainder of the dataset.
std::vector<std::size_t> validation_indices(const Dataset& ds);
std::vector<std::size_t> warmup_train_indices(const Dataset& ds);
std::vector<std::size_t> split_indices(const Dataset& ds, Split split);

// ---------------------------------------------------------------------------
// Training entry points (each writes its artifacts under cfg.output_dir)
// ---------------------------------------------------------------------------

struct WarmupResult {
  Checkpoint teacher;
  std::vector<RunLogRow> log;
};

WarmupResult warmup_train(const RunConfig& cfg, const Dataset& ds);

struct AblationConfig {
  std::string name;
  bool ema_enabled = true;
  bool ema_dynamic = true;
  double ema_fixed_m = 0.996;
  bool importance_reg = true;
  WeightingMode weighting = WeightingMode::adaptive;
  double fixed_weight = 0.2;
};

// The six ablation rows (component matrix of the ablation study).
const std::vector<AblationConfig>& ablation_table();
const AblationConfig& ablation_by_name(const std::string& name);

using EpochObserver =
    std::function<void(int epoch, const ParamVector& teacher, const ParamVector& student)>;

struct SemiOptions {
  std::optional<AblationConfig> variant;  // overrides EMA/weighting components
  std::optional<int> epochs_override;
  std::string runlog_path;  // defaults to <output_dir>/runlog.csv
  std::string ckpt_dir;     // defaults to <output_dir>
  EpochObserver observer;   // called after each epoch's EMA update
};

struct SemiResult {
  Checkpoint best;           // deployed model: teacher, or the student when EMA is off
  Checkpoint student_final;
  int best_epoch = 0;
  MetricsReport best_metrics;
  std::vector<RunLogRow> log;
};

SemiResult semi_train(const RunConfig& cfg, const Dataset& ds, const Checkpoint& warmup,
                      const SemiOptions& options = {});

struct AblationRow {
  AblationConfig config;
  int best_epoch = 0;
  MetricsReport metrics;
};

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const Dataset& ds,
                                      const Checkpoint& warmup,
                                      const std::vector<AblationConfig>& suite,
                                      const std::string& csv_path);

// Mean supervised SDF-L1 loss over the given samples (clean images).
double mean_l1_loss(const ParamVector& params, const NetworkSpec& spec, const Dataset& ds,
                    std::span<const std::size_t> indices, const FeatureConfig& feat);

std::vector<double> predict_points(const ParamVector& params, const NetworkSpec& spec,
                                   const Image& img, std::span<const Vec2> pts,
                                   const FeatureConfig& feat);

NetworkSpec build_network_spec(const RunConfig& cfg);

}  // namespace sdfssl
