#include "sdfssl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace sdfssl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kTagWarmup = 0x7761726dULL;
constexpr std::uint64_t kTagSemi = 0x73656d69ULL;
constexpr std::uint64_t kTagShuffle = 0x73687566ULL;
constexpr std::uint64_t kTagCycle = 0x6379636cULL;
constexpr std::uint64_t kTagImportance = 0x696d7074ULL;
constexpr std::uint64_t kTagAssess = 0x61737373ULL;

double nan_d() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void PhaseConfig::validate(const std::string& name) const {
  if (epochs < 0) throw ConfigError(name + ".epochs must be >= 0");
  if (batch_size < 1) throw ConfigError(name + ".batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError(name + ".lr must be positive");
  int prev = 0;
  for (int d : decay_epochs) {
    if (d <= prev) throw ConfigError(name + ".decay_epochs must be strictly increasing");
    if (d < 1 || d > std::max(epochs, 1))
      throw ConfigError(name + ".decay_epochs must lie within [1, epochs]");
    prev = d;
  }
}

void RunConfig::validate() const {
  warmup.validate("warmup");
  semi.validate("semi");
  ema.ema.validate();
  if (network.hidden.empty()) throw ConfigError("network.hidden must list at least one layer");
  for (int hdim : network.hidden)
    if (hdim < 1) throw ConfigError("network.hidden sizes must be >= 1");
  if (importance.n_batches < 1) throw ConfigError("importance.n_batches must be >= 1");
  if (importance.batch_size < 1) throw ConfigError("importance.batch_size must be >= 1");
  if (weighting.mode == WeightingMode::fixed &&
      (weighting.fixed_value < 0.0 || weighting.fixed_value > 1.0))
    throw ConfigError("fixed pseudo-label weight must be in [0, 1]");
  if (loss_terms.empty()) throw ConfigError("at least one loss term is required");
  for (const std::string& t : loss_terms)
    if (t != "sdf_l1" && t != "grad_penalty") throw ConfigError("unknown loss term: " + t);
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (ablation_epochs < 1) throw ConfigError("ablation_epochs must be >= 1");
}

RunConfig default_run_config() { return RunConfig{}; }

void apply_preset(RunConfig& cfg, const std::string& preset) {
  if (preset == "toy" || preset.empty()) return;  // defaults are the toy scale
  if (preset == "paper-scale") {
    cfg.warmup.epochs = 400;
    cfg.warmup.batch_size = 128;
    cfg.warmup.decay_epochs = {350, 390};
    cfg.semi.epochs = 200;
    cfg.semi.batch_size = 160;
    cfg.semi.decay_epochs = {170, 190};
    cfg.importance.n_batches = 100;
    return;
  }
  throw ConfigError("unknown preset: " + preset);
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_phase(const json& j, PhaseConfig& phase) {
  read_if(j, "epochs", phase.epochs);
  read_if(j, "batch_size", phase.batch_size);
  read_if(j, "lr", phase.lr);
  read_if(j, "decay_epochs", phase.decay_epochs);
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j = json::parse(in);
  RunConfig cfg;
  if (j.contains("preset")) apply_preset(cfg, j.at("preset").get<std::string>());
  read_if(j, "dataset", cfg.dataset_path);
  read_if(j, "output_dir", cfg.output_dir);
  read_if(j, "seed", cfg.seed);
  if (j.contains("gen")) {
    const json& g = j.at("gen");
    read_if(g, "n", cfg.gen.n);
    read_if(g, "labeled_fraction", cfg.gen.labeled_fraction);
    read_if(g, "h", cfg.gen.h);
    read_if(g, "w", cfg.gen.w);
    read_if(g, "grid", cfg.gen.grid);
    read_if(g, "queries", cfg.gen.queries);
  }
  if (j.contains("network")) {
    const json& n = j.at("network");
    read_if(n, "hidden", cfg.network.hidden);
    if (n.contains("activation"))
      cfg.network.hidden_act = activation_from_string(n.at("activation").get<std::string>());
    read_if(n, "pool", cfg.network.features.pool);
  }
  if (j.contains("warmup")) parse_phase(j.at("warmup"), cfg.warmup);
  if (j.contains("semi")) parse_phase(j.at("semi"), cfg.semi);
  if (j.contains("weighting")) {
    const json& w = j.at("weighting");
    read_if(w, "alpha", cfg.weighting.params.alpha);
    read_if(w, "beta", cfg.weighting.params.beta);
    read_if(w, "lambda", cfg.weighting.params.lambda);
    if (w.contains("w_max") && !w.at("w_max").is_null())
      cfg.weighting.params.w_max = w.at("w_max").get<double>();
    if (w.contains("consistency"))
      cfg.weighting.consistency = consistency_from_string(w.at("consistency").get<std::string>());
    if (w.contains("mode")) {
      const std::string m = w.at("mode").get<std::string>();
      if (m == "none") cfg.weighting.mode = WeightingMode::none;
      else if (m == "fixed") cfg.weighting.mode = WeightingMode::fixed;
      else if (m == "adaptive") cfg.weighting.mode = WeightingMode::adaptive;
      else throw ConfigError("unknown weighting mode: " + m);
    }
    read_if(w, "fixed_value", cfg.weighting.fixed_value);
  }
  if (j.contains("ema")) {
    const json& e = j.at("ema");
    read_if(e, "m0", cfg.ema.ema.m0);
    read_if(e, "m_min", cfg.ema.ema.m_min);
    read_if(e, "m_max", cfg.ema.ema.m_max);
    read_if(e, "eta", cfg.ema.ema.eta);
    read_if(e, "delta", cfg.ema.ema.delta);
    read_if(e, "reset_greater", cfg.ema.ema.reset_greater);
    if (e.contains("reset_enabled") && !e.at("reset_enabled").get<bool>())
      cfg.ema.ema.delta = -std::numeric_limits<double>::infinity();
    read_if(e, "enabled", cfg.ema.enabled);
    read_if(e, "use_dynamic", cfg.ema.ema.use_dynamic);
    read_if(e, "use_importance", cfg.ema.ema.use_importance);
    read_if(e, "per_step", cfg.ema.per_step);
    read_if(e, "raw_importance", cfg.ema.raw_importance);
    read_if(e, "controller_hidden", cfg.ema.controller_hidden);
    read_if(e, "adapt_controller", cfg.ema.adapt_controller);
    read_if(e, "adapt_every", cfg.ema.adapt_every);
    read_if(e, "adapt_fd_step", cfg.ema.adapt_fd_step);
    read_if(e, "adapt_lr", cfg.ema.adapt_lr);
  }
  if (j.contains("importance")) {
    const json& imp = j.at("importance");
    read_if(imp, "n_batches", cfg.importance.n_batches);
    read_if(imp, "batch_size", cfg.importance.batch_size);
  }
  read_if(j, "loss_terms", cfg.loss_terms);
  read_if(j, "eval_every", cfg.eval_every);
  read_if(j, "ablation_epochs", cfg.ablation_epochs);
  read_if(j, "dump_importance", cfg.dump_importance);
  cfg.gen.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

NetworkSpec build_network_spec(const RunConfig& cfg) {
  std::vector<int> sizes;
  sizes.push_back(feature_dim(cfg.network.features));
  for (int hdim : cfg.network.hidden) sizes.push_back(hdim);
  sizes.push_back(1);
  return make_mlp_spec(std::move(sizes), cfg.network.hidden_act, Activation::identity,
                       derive_seed(cfg.seed, {0x6e657477ULL}));
}

// ---------------------------------------------------------------------------
// Run log CSV
// ---------------------------------------------------------------------------

void write_runlog(const std::string& path, const std::vector<RunLogRow>& rows) {
  CsvWriter csv(path);
  csv.raw_line("# sdfssl-runlog-v1");
  csv.raw_line(
      "epoch,phase,lr,train_loss,val_loss_teacher,val_loss_student,mean_w_pseudo,min_w_pseudo,"
      "max_w_pseudo,m_base,gamma,m_effective,reset_flag,chamfer_x100,iou_pct,fscore_pct,nc");
  for (const RunLogRow& r : rows) {
    std::vector<std::string> cells;
    cells.push_back(std::to_string(r.epoch));
    cells.push_back(r.phase);
    for (double v : {r.lr, r.train_loss, r.val_loss_teacher, r.val_loss_student, r.mean_w_pseudo,
                     r.min_w_pseudo, r.max_w_pseudo, r.m_base, r.gamma, r.m_effective})
      cells.push_back(fmt_g(v));
    cells.push_back(r.reset_flag ? (*r.reset_flag ? "1" : "0") : "nan");
    if (r.metrics) {
      cells.push_back(fmt_g(r.metrics->chamfer_x100));
      cells.push_back(fmt_g(r.metrics->iou_pct));
      cells.push_back(fmt_g(r.metrics->fscore_pct));
      cells.push_back(fmt_g(r.metrics->normal_consistency));
    } else {
      for (int i = 0; i < 4; ++i) cells.push_back("nan");
    }
    csv.row(cells);
  }
}

// ---------------------------------------------------------------------------
// Splits and prediction helpers
// ---------------------------------------------------------------------------

std::vector<std::size_t> validation_indices(const Dataset& ds) {
  const std::vector<std::size_t> lab = ds.labeled_indices();
  if (lab.size() < 2) return {};
  const std::size_t n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(lab.size()))));
  return {lab.begin(), lab.begin() + static_cast<std::ptrdiff_t>(std::min(n_val, lab.size() - 1))};
}

std::vector<std::size_t> warmup_train_indices(const Dataset& ds) {
  const std::vector<std::size_t> lab = ds.labeled_indices();
  const std::vector<std::size_t> val = validation_indices(ds);
  return {lab.begin() + static_cast<std::ptrdiff_t>(val.size()), lab.end()};
}

std::vector<std::size_t> split_indices(const Dataset& ds, Split split) {
  return split == Split::val ? validation_indices(ds) : ds.unlabeled_indices();
}

std::vector<double> predict_points(const ParamVector& params, const NetworkSpec& spec,
                                   const Image& img, std::span<const Vec2> pts,
                                   const FeatureConfig& feat) {
  std::vector<double> rows;
  encode_query_rows(img, pts, feat, rows);
  std::vector<double> out(pts.size());
  forward_batch(params, spec, rows, pts.size(), out);
  return out;
}

PredictorFactory network_predictor_factory(const ParamVector& params, const NetworkSpec& spec,
                                           const FeatureConfig& feat) {
  return [&params, &spec, feat](const Sample&) -> Predictor {
    return [&params, &spec, feat](const Image& img, std::span<const Vec2> pts) {
      return predict_points(params, spec, img, pts, feat);
    };
  };
}

PredictorFactory oracle_predictor_factory() {
  return [](const Sample& sample) -> Predictor {
    if (!sample.shape) throw PreconditionError("oracle predictor needs the sample shape");
    const Shape shape = *sample.shape;
    return [shape](const Image&, std::span<const Vec2> pts) {
      std::vector<double> out(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i) out[i] = analytic_sdf(shape, pts[i]);
      return out;
    };
  };
}

double mean_l1_loss(const ParamVector& params, const NetworkSpec& spec, const Dataset& ds,
                    std::span<const std::size_t> indices, const FeatureConfig& feat) {
  if (indices.empty()) throw PreconditionError("mean_l1_loss needs at least one sample");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t idx : indices) {
    const Sample& s = ds.samples[idx];
    const std::vector<double>& gt = s.gt_sdf_for_training();
    const std::vector<double> pred = predict_points(params, spec, s.image, s.query_points, feat);
    for (std::size_t q = 0; q < pred.size(); ++q) acc += std::abs(pred[q] - gt[q]);
    count += pred.size();
  }
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

std::vector<Vec2> grid_points(int res) {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(res) * res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) pts.push_back({(x + 0.5) / res, (y + 0.5) / res});
  return pts;
}

SdfGrid analytic_grid(const Shape& shape, int res) {
  SdfGrid g;
  g.res = res;
  g.values.resize(static_cast<std::size_t>(res) * res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x)
      g.values[static_cast<std::size_t>(y) * res + x] =
          analytic_sdf(shape, {(x + 0.5) / res, (y + 0.5) / res});
  return g;
}

}  // namespace

EvalResult evaluate_dataset(const PredictorFactory& factory, const Dataset& ds,
                            std::span<const std::size_t> indices, int grid_res) {
  if (indices.empty()) throw PreconditionError("evaluate_dataset needs at least one sample");
  const std::vector<Vec2> pts = grid_points(grid_res);
  EvalResult result;
  double sum_cd = 0, sum_iou = 0, sum_f = 0, sum_nc = 0;
  for (std::size_t idx : indices) {
    const Sample& s = ds.samples[idx];
    if (!s.shape || s.occupancy.empty())
      throw PreconditionError("evaluation needs ground truth for sample " + std::to_string(idx));
    const Predictor predictor = factory(s);
    const std::vector<double> values = predictor(s.image, pts);

    SdfGrid pred;
    pred.res = grid_res;
    pred.values = values;

    EvalRow row;
    row.sample_index = idx;
    try {
      const SurfaceSamples pred_surface = extract_isocontour(pred);
      const SdfGrid gt_grid = analytic_grid(*s.shape, grid_res);
      const SurfaceSamples gt_surface = extract_isocontour(gt_grid);
      row.metrics.chamfer_x100 = chamfer_l1(pred_surface, gt_surface);
      if (grid_res == ds.header.grid) {
        row.metrics.iou_pct = iou(pred, s.occupancy, grid_res);
      } else {
        std::vector<std::uint8_t> occ(gt_grid.values.size());
        for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = gt_grid.values[i] < 0.0 ? 1 : 0;
        row.metrics.iou_pct = iou(pred, occ, grid_res);
      }
      row.metrics.fscore_pct =
          fscore(pred_surface, gt_surface, 0.01 * bbox_diagonal(gt_surface));
      row.metrics.normal_consistency = normal_consistency(pred_surface, gt_surface);
    } catch (const EmptySurfaceError&) {
      row.metrics = worst_case_metrics();
      row.empty_surface = true;
    }
    sum_cd += row.metrics.chamfer_x100;
    sum_iou += row.metrics.iou_pct;
    sum_f += row.metrics.fscore_pct;
    sum_nc += row.metrics.normal_consistency;
    result.rows.push_back(row);
  }
  const double inv = 1.0 / static_cast<double>(result.rows.size());
  result.mean = {sum_cd * inv, sum_iou * inv, sum_f * inv, sum_nc * inv};
  return result;
}

void write_metrics_csv(const std::string& path, const EvalResult& result) {
  CsvWriter csv(path);
  csv.raw_line("# sdfssl-metrics-v1");
  csv.raw_line("sample,chamfer_x100,iou_pct,fscore_pct,nc,empty_surface");
  for (const EvalRow& r : result.rows)
    csv.row({std::to_string(r.sample_index), fmt_g(r.metrics.chamfer_x100),
             fmt_g(r.metrics.iou_pct), fmt_g(r.metrics.fscore_pct),
             fmt_g(r.metrics.normal_consistency), r.empty_surface ? "1" : "0"});
  csv.row({"mean", fmt_g(result.mean.chamfer_x100), fmt_g(result.mean.iou_pct),
           fmt_g(result.mean.fscore_pct), fmt_g(result.mean.normal_consistency), ""});
}

// ---------------------------------------------------------------------------
// Shared training machinery
// ---------------------------------------------------------------------------

namespace {

double scheduled_lr(const PhaseConfig& phase, int epoch /*1-based*/) {
  double lr = phase.lr;
  for (int d : phase.decay_epochs)
    if (epoch >= d) lr *= 0.1;
  return lr;
}

struct TermSpec {
  std::string key;
  LossKind kind;
};

std::vector<TermSpec> parse_loss_terms(const std::vector<std::string>& names) {
  std::vector<TermSpec> terms;
  for (const std::string& name : names) {
    if (name == "sdf_l1") terms.push_back({name, LossKind::l1});
    else if (name == "grad_penalty") terms.push_back({name, LossKind::grad_penalty});
    else throw ConfigError("unknown loss term: " + name);
  }
  return terms;
}

// Clean-image feature prefixes are immutable per run; cache them.
struct CleanFeat {
  std::vector<double> prefix;  // pooled [+ moments]
  double cx = 0.5, cy = 0.5;   // deviation centroid for the relative dims
};

struct TrainContext {
  const RunConfig& cfg;
  const Dataset& ds;
  NetworkSpec spec;
  FeatureConfig feat;
  std::vector<TermSpec> terms;
  std::vector<CleanFeat> clean_feat;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> train_lab_idx;
  std::vector<std::size_t> unlab_idx;

  TrainContext(const RunConfig& cfg_, const Dataset& ds_)
      : cfg(cfg_), ds(ds_), spec(build_network_spec(cfg_)), feat(cfg_.network.features),
        terms(parse_loss_terms(cfg_.loss_terms)) {
    clean_feat.resize(ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      clean_feat[i] = make_feat(ds.samples[i].image);
    val_idx = validation_indices(ds);
    train_lab_idx = warmup_train_indices(ds);
    unlab_idx = ds.unlabeled_indices();
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(feature_dim(feat)); }

  CleanFeat make_feat(const Image& img) const {
    CleanFeat f;
    f.prefix = pooled_features(img, feat);
    if (feat.moments) {
      const std::array<double, 6> mom = image_moments(img);
      f.prefix.insert(f.prefix.end(), mom.begin(), mom.end());
      f.cx = mom[1];
      f.cy = mom[2];
    }
    return f;
  }

  void append_rows(const CleanFeat& f, std::span<const Vec2> pts,
                   std::vector<double>& rows) const {
    for (const Vec2& p : pts) {
      rows.insert(rows.end(), f.prefix.begin(), f.prefix.end());
      rows.push_back(p.x);
      rows.push_back(p.y);
      if (feat.moments) {
        const double dx = p.x - f.cx;
        const double dy = p.y - f.cy;
        rows.push_back(dx);
        rows.push_back(dy);
        rows.push_back(std::sqrt(dx * dx + dy * dy));
      }
    }
  }
};

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
}

// Cycles through a pool, reshuffling on wrap, so small labeled pools keep
// feeding every batch.
class PoolCycler {
 public:
  PoolCycler(std::vector<std::size_t> pool, Rng rng) : pool_(std::move(pool)), rng_(rng) {
    if (!pool_.empty()) shuffle_indices(pool_, rng_);
  }

  std::size_t next() {
    if (pos_ >= pool_.size()) {
      shuffle_indices(pool_, rng_);
      pos_ = 0;
    }
    return pool_[pos_++];
  }

  bool empty() const { return pool_.empty(); }

 private:
  std::vector<std::size_t> pool_;
  Rng rng_;
  std::size_t pos_ = 0;
};

struct BatchLoss {
  double loss = 0.0;
  std::vector<LossTerm> sup_terms;
  std::vector<LossTerm> unsup_terms;
};

}  // namespace

// ---------------------------------------------------------------------------
// Warm-up
// ---------------------------------------------------------------------------

WarmupResult warmup_train(const RunConfig& cfg, const Dataset& ds) {
  cfg.validate();
  TrainContext ctx(cfg, ds);
  if (ctx.train_lab_idx.empty())
    throw ConfigError("warmup_train needs at least one labeled training sample");

  fs::create_directories(cfg.output_dir);
  ParamVector params = init_network(ctx.spec);
  std::vector<RunLogRow> log;

  const LossSpec l1{LossKind::l1};
  for (int epoch = 1; epoch <= cfg.warmup.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.warmup, epoch);
    Rng shuffle_rng(derive_seed(cfg.seed, {kTagWarmup, kTagShuffle, static_cast<std::uint64_t>(epoch)}));
    std::vector<std::size_t> order = ctx.train_lab_idx;
    shuffle_indices(order, shuffle_rng);

    double train_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.warmup.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.warmup.batch_size));
      Batch batch;
      batch.input_dim = ctx.input_dim();
      for (std::size_t k = start; k < stop; ++k) {
        const Sample& s = ds.samples[order[k]];
        ctx.append_rows(ctx.clean_feat[order[k]], s.query_points, batch.inputs);
        const std::vector<double>& gt = s.gt_sdf_for_training();
        batch.targets.insert(batch.targets.end(), gt.begin(), gt.end());
      }
      double batch_loss = 0.0;
      Gradient total;
      total.values.assign(params.total_len(), 0.0);
      for (const TermSpec& term : ctx.terms) {
        LossSpec spec_term = l1;
        spec_term.kind = term.kind;
        LossGrad lg;
        try {
          lg = forward_backward(params, ctx.spec, batch, spec_term);
        } catch (const Error& e) {
          throw NumericError("warmup epoch " + std::to_string(epoch) + ": " + e.what(),
                             static_cast<std::size_t>(batches));
        }
        batch_loss += lg.loss;
        for (std::size_t i = 0; i < total.values.size(); ++i)
          total.values[i] += lg.grad.values[i];
      }
      params = sgd_step(params, total, lr);
      train_loss += batch_loss;
      ++batches;
    }

    RunLogRow row;
    row.epoch = epoch;
    row.phase = "warmup";
    row.lr = lr;
    row.train_loss = batches > 0 ? train_loss / batches : nan_d();
    if (!ctx.val_idx.empty())
      row.val_loss_teacher = mean_l1_loss(params, ctx.spec, ds, ctx.val_idx, ctx.feat);
    if (!ctx.val_idx.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.warmup.epochs)) {
      const EvalResult ev =
          evaluate_dataset(network_predictor_factory(params, ctx.spec, ctx.feat), ds, ctx.val_idx,
                           ds.header.grid);
      row.metrics = ev.mean;
    }
    log.push_back(std::move(row));
  }

  WarmupResult result;
  result.teacher.spec = ctx.spec;
  result.teacher.params = std::move(params);
  result.teacher.meta = {"warmup", cfg.warmup.epochs, cfg.seed};
  result.log = log;
  save_checkpoint((fs::path(cfg.output_dir) / "teacher_warmup.ckpt").string(), result.teacher);
  write_runlog((fs::path(cfg.output_dir) / "runlog.csv").string(), log);
  return result;
}

// ---------------------------------------------------------------------------
// Semi-supervised stage
// ---------------------------------------------------------------------------

namespace {

struct EffectiveComponents {
  bool ema_enabled;
  bool ema_dynamic;
  double ema_fixed_m;
  bool importance_reg;
  WeightingMode weighting;
  double fixed_weight;
};

EffectiveComponents components_for(const RunConfig& cfg, const SemiOptions& options) {
  if (options.variant) {
    const AblationConfig& a = *options.variant;
    return {a.ema_enabled, a.ema_dynamic, a.ema_fixed_m, a.importance_reg, a.weighting,
            a.fixed_weight};
  }
  return {cfg.ema.enabled, cfg.ema.ema.use_dynamic, cfg.ema.ema.m0, cfg.ema.ema.use_importance,
          cfg.weighting.mode, cfg.weighting.fixed_value};
}

}  // namespace

SemiResult semi_train(const RunConfig& cfg, const Dataset& ds, const Checkpoint& warmup,
                      const SemiOptions& options) {
  cfg.validate();
  TrainContext ctx(cfg, ds);
  const EffectiveComponents comp = components_for(cfg, options);
  const int total_epochs = options.epochs_override.value_or(cfg.semi.epochs);
  if (total_epochs < 0) throw ConfigError("semi epochs must be >= 0");
  if (ctx.val_idx.empty())
    throw ConfigError("semi_train needs a validation split (at least 2 labeled samples)");
  if (warmup.params.total_len() != param_count(ctx.spec))
    throw ConfigError("warm-up checkpoint does not match the configured network");

  const std::string out_dir = options.ckpt_dir.empty() ? cfg.output_dir : options.ckpt_dir;
  fs::create_directories(out_dir);
  const std::string runlog_path =
      options.runlog_path.empty() ? (fs::path(out_dir) / "runlog.csv").string()
                                  : options.runlog_path;

  EmaConfig ema_cfg = cfg.ema.ema;
  ema_cfg.total_steps = std::max(total_epochs, 1);
  ema_cfg.validate();

  ParamVector teacher = warmup.params;
  ParamVector student = warmup.params;  // student starts as a copy of the teacher
  MetaControllerState controller =
      init_controller(cfg.ema.controller_hidden, derive_seed(cfg.seed, {0x6374726cULL}));

  const WeightParams wparams = cfg.weighting.params;
  const double lambda = wparams.lambda;
  const AugmentorPair augmentors = default_augmentors();

  // Evaluate/track the deployed model: the teacher under EMA, otherwise the
  // continuously trained student.
  auto tracked = [&]() -> const ParamVector& { return comp.ema_enabled ? teacher : student; };

  std::vector<RunLogRow> log;
  auto eval_tracked = [&]() {
    return evaluate_dataset(network_predictor_factory(tracked(), ctx.spec, ctx.feat), ds,
                            ctx.val_idx, ds.header.grid)
        .mean;
  };

  {
    RunLogRow init_row;
    init_row.epoch = 0;
    init_row.phase = "init";
    init_row.val_loss_teacher = mean_l1_loss(teacher, ctx.spec, ds, ctx.val_idx, ctx.feat);
    init_row.val_loss_student = init_row.val_loss_teacher;
    init_row.metrics = eval_tracked();
    log.push_back(std::move(init_row));
  }

  SemiResult result;
  result.best.spec = ctx.spec;
  result.best.meta = {"semi", 0, cfg.seed};
  result.student_final.spec = ctx.spec;
  double best_cd = std::numeric_limits<double>::infinity();
  ParamVector best_params = teacher;
  MetricsReport best_metrics = *log.front().metrics;
  int best_epoch = 0;

  const bool want_importance = comp.ema_enabled && comp.importance_reg && !ctx.unlab_idx.empty();
  const bool use_unlabeled = comp.weighting != WeightingMode::none && !ctx.unlab_idx.empty();

  for (int epoch = 1; epoch <= total_epochs; ++epoch) {
    const std::uint64_t eu = static_cast<std::uint64_t>(epoch);
    const double lr = scheduled_lr(cfg.semi, epoch);

    // (1) per-parameter importance of the current teacher
    ImportanceMap omega;
    if (want_importance || (!cfg.dump_importance.empty() && !ctx.unlab_idx.empty())) {
      Rng imp_rng(derive_seed(cfg.seed, {kTagSemi, kTagImportance, eu}));
      try {
        omega = estimate_importance(teacher, ctx.spec, ds, ctx.unlab_idx,
                                    cfg.importance.n_batches, cfg.importance.batch_size, ctx.feat,
                                    {}, imp_rng);
      } catch (const NumericError& e) {
        throw NumericError("semi epoch " + std::to_string(epoch) + ": " + e.what(),
                           e.batch_index);
      }
      if (!cfg.dump_importance.empty()) dump_importance_csv(cfg.dump_importance, omega, teacher);
      if (!cfg.ema.raw_importance) omega = normalize_importance(omega);
    }

    // (2) student updates over mixed batches
    Rng shuffle_rng(derive_seed(cfg.seed, {kTagSemi, kTagShuffle, eu}));
    PoolCycler labeled_cycler(ctx.train_lab_idx,
                              Rng(derive_seed(cfg.seed, {kTagSemi, kTagCycle, eu})));

    std::vector<std::size_t> unlab_order = use_unlabeled ? ctx.unlab_idx : std::vector<std::size_t>{};
    shuffle_indices(unlab_order, shuffle_rng);

    const std::size_t total_train = ctx.train_lab_idx.size() + unlab_order.size();
    std::size_t lab_per_batch, unlab_per_batch, n_batches;
    if (use_unlabeled) {
      const double lab_ratio =
          static_cast<double>(ctx.train_lab_idx.size()) / static_cast<double>(total_train);
      lab_per_batch = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(cfg.semi.batch_size * lab_ratio)));
      lab_per_batch = std::min<std::size_t>(lab_per_batch, static_cast<std::size_t>(cfg.semi.batch_size) - 1);
      unlab_per_batch = static_cast<std::size_t>(cfg.semi.batch_size) - lab_per_batch;
      n_batches = (unlab_order.size() + unlab_per_batch - 1) / unlab_per_batch;
    } else {
      lab_per_batch = static_cast<std::size_t>(cfg.semi.batch_size);
      unlab_per_batch = 0;
      n_batches = (ctx.train_lab_idx.size() + lab_per_batch - 1) / lab_per_batch;
    }

    double train_loss = 0.0;
    double w_sum = 0.0, w_min = std::numeric_limits<double>::infinity(), w_max = 0.0;
    std::size_t w_count = 0;

    double m_step = ema_cfg.m0;  // per-step mode reuses the previous epoch's stats
    if (cfg.ema.per_step && comp.ema_enabled && comp.ema_dynamic) {
      const double l_t = mean_l1_loss(teacher, ctx.spec, ds, ctx.val_idx, ctx.feat);
      const double l_s = mean_l1_loss(student, ctx.spec, ds, ctx.val_idx, ctx.feat);
      const double mb = base_momentum(epoch - 1, ema_cfg.total_steps, ema_cfg.m0);
      const double g = controller_gamma(
          {l_t - l_s, l_t, static_cast<double>(epoch - 1) / ema_cfg.total_steps}, controller);
      m_step = maybe_reset(l_s, l_t, ema_cfg, effective_momentum(g, mb, ema_cfg));
    }

    for (std::size_t b = 0; b < n_batches; ++b) {
      Batch sup;
      sup.input_dim = ctx.input_dim();
      for (std::size_t k = 0; k < lab_per_batch; ++k) {
        if (labeled_cycler.empty()) break;
        const std::size_t idx = labeled_cycler.next();
        const Sample& s = ds.samples[idx];
        ctx.append_rows(ctx.clean_feat[idx], s.query_points, sup.inputs);
        const std::vector<double>& gt = s.gt_sdf_for_training();
        sup.targets.insert(sup.targets.end(), gt.begin(), gt.end());
      }

      Batch unsup;
      unsup.input_dim = ctx.input_dim();
      std::vector<double> batch_weights;
      if (use_unlabeled) {
        const std::size_t u0 = b * unlab_per_batch;
        const std::size_t u1 = std::min(unlab_order.size(), u0 + unlab_per_batch);
        for (std::size_t u = u0; u < u1; ++u) {
          const std::size_t idx = unlab_order[u];
          const Sample& s = ds.samples[idx];
          Rng arng(derive_seed(cfg.seed, {kTagSemi, kTagAssess, eu, idx}));

          double w;
          Image strong_img;
          std::vector<double> pseudo;
          if (comp.weighting == WeightingMode::adaptive) {
            const Predictor teacher_pred = [&](const Image& img, std::span<const Vec2> pts) {
              return predict_points(teacher, ctx.spec, img, pts, ctx.feat);
            };
            SampleAssessment sa =
                assess_sample(teacher_pred, s, arng, wparams, augmentors, cfg.weighting.consistency);
            w = sa.assessment.weight;
            strong_img = std::move(sa.strong_image);
            pseudo = std::move(sa.pseudo_labels);
          } else {
            // fixed weighting: pseudo-labels still come from the weak view
            const Image weak_img = augmentors.weak(s.image, arng);
            strong_img = augmentors.strong(s.image, arng);
            pseudo = predict_points(teacher, ctx.spec, weak_img, s.query_points, ctx.feat);
            w = comp.fixed_weight;
          }

          // the student trains on the strongly augmented view against f_w
          ctx.append_rows(ctx.make_feat(strong_img), s.query_points, unsup.inputs);
          unsup.targets.insert(unsup.targets.end(), pseudo.begin(), pseudo.end());
          for (std::size_t q = 0; q < s.query_points.size(); ++q)
            unsup.row_weights.push_back(w);
          batch_weights.push_back(w);
          w_sum += w;
          w_min = std::min(w_min, w);
          w_max = std::max(w_max, w);
          ++w_count;
        }
      }

      const double w_bar =
          batch_weights.empty()
              ? 0.0
              : std::accumulate(batch_weights.begin(), batch_weights.end(), 0.0) /
                    static_cast<double>(batch_weights.size());

      Gradient total;
      total.values.assign(student.total_len(), 0.0);
      std::vector<LossTerm> sup_terms, unsup_terms;
      for (const TermSpec& term : ctx.terms) {
        const LossSpec spec_term{term.kind};
        LossGrad sup_lg;
        try {
          sup_lg = forward_backward(student, ctx.spec, sup, spec_term);
        } catch (const Error& e) {
          throw NumericError("semi epoch " + std::to_string(epoch) + ": " + e.what(), b);
        }
        sup_terms.push_back({term.key, sup_lg.loss});

        double unsup_value = 0.0;
        if (!unsup.inputs.empty() && w_bar > 0.0) {
          LossGrad unsup_lg;
          try {
            unsup_lg = forward_backward(student, ctx.spec, unsup, spec_term);
          } catch (const Error& e) {
            throw NumericError("semi epoch " + std::to_string(epoch) + ": " + e.what(), b);
          }
          // row weights already fold the per-sample w into loss and gradient
          unsup_value = unsup_lg.loss / w_bar;
          for (std::size_t i = 0; i < total.values.size(); ++i)
            total.values[i] += lambda * unsup_lg.grad.values[i];
        }
        unsup_terms.push_back({term.key, unsup_value});

        for (std::size_t i = 0; i < total.values.size(); ++i)
          total.values[i] += (1.0 - lambda * w_bar) * sup_lg.grad.values[i];
      }
      train_loss += blended_loss(sup_terms, unsup_terms, w_bar, lambda);
      student = sgd_step(student, total, lr);

      if (cfg.ema.per_step && comp.ema_enabled) {
        const double m_use = comp.ema_dynamic ? m_step : comp.ema_fixed_m;
        teacher = (want_importance && omega.n_batches > 0)
                      ? ema_update_regularized(teacher, student, m_use, omega, ema_cfg.eta)
                      : ema_update_fixed(teacher, student, m_use);
      }
    }
    train_loss /= static_cast<double>(std::max<std::size_t>(n_batches, 1));

    // (3) meta-adaptive EMA on the validation statistics
    const double loss_teacher = mean_l1_loss(teacher, ctx.spec, ds, ctx.val_idx, ctx.feat);
    const double loss_student = mean_l1_loss(student, ctx.spec, ds, ctx.val_idx, ctx.feat);

    RunLogRow row;
    row.epoch = epoch;
    row.phase = "semi";
    row.lr = lr;
    row.train_loss = train_loss;
    if (w_count > 0) {
      row.mean_w_pseudo = w_sum / static_cast<double>(w_count);
      row.min_w_pseudo = w_min;
      row.max_w_pseudo = w_max;
    }

    if (comp.ema_enabled && !cfg.ema.per_step) {
      double m_final;
      if (comp.ema_dynamic) {
        const int t = epoch - 1;  // schedule index over the semi stage
        const double m_base = base_momentum(t, ema_cfg.total_steps, ema_cfg.m0);
        const EmaInputs inputs{loss_teacher - loss_student, loss_teacher,
                               static_cast<double>(t) / ema_cfg.total_steps};

        if (cfg.ema.adapt_controller && epoch % std::max(cfg.ema.adapt_every, 1) == 0) {
          auto objective = [&](const MetaControllerState& c) {
            const double g = controller_gamma(inputs, c);
            const double m_try =
                maybe_reset(loss_student, loss_teacher, ema_cfg,
                            effective_momentum(g, m_base, ema_cfg));
            const ParamVector trial =
                (want_importance && omega.n_batches > 0)
                    ? ema_update_regularized(teacher, student, m_try, omega, ema_cfg.eta)
                    : ema_update_fixed(teacher, student, m_try);
            return mean_l1_loss(trial, ctx.spec, ds, ctx.val_idx, ctx.feat);
          };
          adapt_controller(controller, objective, cfg.ema.adapt_fd_step, cfg.ema.adapt_lr);
        }

        const double gamma = controller_gamma(inputs, controller);
        const double m_eff = effective_momentum(gamma, m_base, ema_cfg);
        m_final = maybe_reset(loss_student, loss_teacher, ema_cfg, m_eff);
        row.m_base = m_base;
        row.gamma = gamma;
        row.m_effective = m_final;
        row.reset_flag = m_final != m_eff;
      } else {
        m_final = comp.ema_fixed_m;
        row.m_effective = m_final;
        row.reset_flag = false;
      }
      teacher = (want_importance && omega.n_batches > 0)
                    ? ema_update_regularized(teacher, student, m_final, omega, ema_cfg.eta)
                    : ema_update_fixed(teacher, student, m_final);
    }

    row.val_loss_teacher = comp.ema_enabled
                               ? mean_l1_loss(teacher, ctx.spec, ds, ctx.val_idx, ctx.feat)
                               : loss_teacher;
    row.val_loss_student = loss_student;

    // (4) evaluate and track the best deployed model by validation Chamfer
    const MetricsReport metrics = eval_tracked();
    row.metrics = metrics;
    log.push_back(std::move(row));
    if (metrics.chamfer_x100 < best_cd) {
      best_cd = metrics.chamfer_x100;
      best_params = tracked();
      best_metrics = metrics;
      best_epoch = epoch;
    }
    if (options.observer) options.observer(epoch, teacher, student);
  }

  if (total_epochs == 0) {
    // no semi epochs: the warm-up teacher is returned unchanged
    best_params = teacher;
    best_metrics = *log.front().metrics;
    best_epoch = 0;
  }

  result.best.params = std::move(best_params);
  result.best.meta = {"semi", best_epoch, cfg.seed};
  result.best_epoch = best_epoch;
  result.best_metrics = best_metrics;
  result.student_final.params = std::move(student);
  result.student_final.meta = {"semi", total_epochs, cfg.seed};
  result.log = std::move(log);

  save_checkpoint((fs::path(out_dir) / "teacher_best.ckpt").string(), result.best);
  save_checkpoint((fs::path(out_dir) / "student_final.ckpt").string(), result.student_final);
  write_runlog(runlog_path, result.log);
  return result;
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

const std::vector<AblationConfig>& ablation_table() {
  static const std::vector<AblationConfig> table = {
      {"Baseline", false, false, 0.996, false, WeightingMode::none, 0.0},
      {"EMA-fixed-1", true, false, 0.996, false, WeightingMode::fixed, 0.5},
      {"EMA-fixed-2", true, false, 0.996, false, WeightingMode::fixed, 0.2},
      {"ImpEMA-fixed", true, false, 0.996, true, WeightingMode::fixed, 0.2},
      {"Dyn-ImpEMA-fixed", true, true, 0.996, true, WeightingMode::fixed, 0.2},
      {"Dyn-ImpEMA-adaptive", true, true, 0.996, true, WeightingMode::adaptive, 0.2},
  };
  return table;
}

const AblationConfig& ablation_by_name(const std::string& name) {
  for (const AblationConfig& a : ablation_table())
    if (a.name == name) return a;
  throw ConfigError("unknown ablation configuration: " + name);
}

namespace {

std::string weighting_label(const AblationConfig& a) {
  switch (a.weighting) {
    case WeightingMode::none: return "none";
    case WeightingMode::adaptive: return "adaptive";
    case WeightingMode::fixed: return "fixed-" + fmt_g(a.fixed_weight);
  }
  return "?";
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& cfg, const Dataset& ds,
                                      const Checkpoint& warmup,
                                      const std::vector<AblationConfig>& suite,
                                      const std::string& csv_path) {
  std::vector<AblationRow> rows;
  for (const AblationConfig& variant : suite) {
    SemiOptions options;
    options.variant = variant;
    options.epochs_override = cfg.ablation_epochs;
    const fs::path dir = fs::path(cfg.output_dir) / ("ablation_" + variant.name);
    fs::create_directories(dir);
    options.ckpt_dir = dir.string();

    RunConfig row_cfg = cfg;
    // keep the lr decay valid within the short budget
    std::vector<int> decay;
    for (int d : row_cfg.semi.decay_epochs)
      if (d <= cfg.ablation_epochs) decay.push_back(d);
    row_cfg.semi.decay_epochs = decay;

    const SemiResult res = semi_train(row_cfg, ds, warmup, options);
    rows.push_back({variant, res.best_epoch, res.best_metrics});
  }

  CsvWriter csv(csv_path);
  csv.raw_line("# sdfssl-ablation-v1");
  csv.raw_line("name,ema,ema_mode,importance_reg,weighting,best_epoch,chamfer_x100,iou_pct,fscore_pct,nc");
  for (const AblationRow& r : rows) {
    const AblationConfig& a = r.config;
    csv.row({a.name, a.ema_enabled ? "yes" : "no",
             a.ema_enabled ? (a.ema_dynamic ? "dynamic" : "fixed-" + fmt_g(a.ema_fixed_m)) : "none",
             a.importance_reg ? "yes" : "no", weighting_label(a), std::to_string(r.best_epoch),
             fmt_g(r.metrics.chamfer_x100), fmt_g(r.metrics.iou_pct), fmt_g(r.metrics.fscore_pct),
             fmt_g(r.metrics.normal_consistency)});
  }
  return rows;
}

}  // namespace sdfssl
