// sdfssl command-line driver: gen-data | warmup | semi | ablate | eval

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sdfssl/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdfssl;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string output_dir;
  std::string dump_importance;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration")->required();
  cmd->add_option("--preset", args.preset, "toy | paper-scale");
  cmd->add_option("--seed", args.seed, "override the run seed");
  cmd->add_option("--epochs", args.epochs, "override the epoch count of this phase");
  cmd->add_option("--output-dir", args.output_dir, "override the output directory");
  cmd->add_option("--dump-importance", args.dump_importance,
                  "write the importance map to this CSV each time it is estimated");
}

RunConfig resolve_config(const CommonArgs& args, const char* phase) {
  RunConfig cfg = load_run_config(args.config_path);
  if (!args.preset.empty()) apply_preset(cfg, args.preset);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.gen.seed = *args.seed;
  }
  if (args.epochs) {
    if (std::string(phase) == "warmup") cfg.warmup.epochs = *args.epochs;
    else if (std::string(phase) == "semi") cfg.semi.epochs = *args.epochs;
    else if (std::string(phase) == "ablate") cfg.ablation_epochs = *args.epochs;
  }
  if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
  if (!args.dump_importance.empty()) cfg.dump_importance = args.dump_importance;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-supervised SDF teacher-student training harness"};
  app.require_subcommand(1);

  CommonArgs gen_args, warm_args, semi_args, abl_args, eval_args;
  bool strip_gt = false;
  std::string gen_out;
  std::string teacher_path;
  std::string ckpt_path;
  std::string split_name = "val";

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, gen_args);
  gen->add_option("--out", gen_out, "dataset output path (default: cfg.dataset)");
  gen->add_flag("--strip-unlabeled-gt", strip_gt,
                "physically remove ground truth from unlabeled samples");

  CLI::App* warm = app.add_subcommand("warmup", "supervised warm-up of the teacher");
  add_common(warm, warm_args);

  CLI::App* semi = app.add_subcommand("semi", "semi-supervised teacher-student stage");
  add_common(semi, semi_args);
  semi->add_option("--teacher", teacher_path,
                   "warm-up checkpoint (default: <output_dir>/teacher_warmup.ckpt)");

  CLI::App* abl = app.add_subcommand("ablate", "run the six-row ablation suite");
  add_common(abl, abl_args);
  abl->add_option("--teacher", teacher_path,
                  "warm-up checkpoint (default: <output_dir>/teacher_warmup.ckpt)");

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  add_common(ev, eval_args);
  ev->add_option("--ckpt", ckpt_path, "checkpoint to evaluate")->required();
  ev->add_option("--split", split_name, "val | test");

  CLI11_PARSE(app, argc, argv);

  std::string phase = "?";
  try {
    if (*gen) {
      phase = "gen-data";
      RunConfig cfg = resolve_config(gen_args, phase.c_str());
      const Dataset ds = gen_dataset(cfg.gen);
      const std::string out = gen_out.empty() ? cfg.dataset_path : gen_out;
      save_dataset(out, ds, strip_gt);
      std::cout << "wrote " << ds.samples.size() << " samples ("
                << ds.labeled_indices().size() << " labeled) to " << out << "\n";
    } else if (*warm) {
      phase = "warmup";
      RunConfig cfg = resolve_config(warm_args, phase.c_str());
      const Dataset ds = load_dataset(cfg.dataset_path);
      const WarmupResult res = warmup_train(cfg, ds);
      std::cout << "warm-up done: " << cfg.warmup.epochs << " epochs, checkpoint at "
                << (fs::path(cfg.output_dir) / "teacher_warmup.ckpt").string() << "\n";
      if (!res.log.empty() && res.log.back().metrics)
        std::cout << "final val chamfer_x100 = " << fmt_g(res.log.back().metrics->chamfer_x100)
                  << "\n";
    } else if (*semi) {
      phase = "semi";
      RunConfig cfg = resolve_config(semi_args, phase.c_str());
      const Dataset ds = load_dataset(cfg.dataset_path);
      const std::string tpath = teacher_path.empty()
                                    ? (fs::path(cfg.output_dir) / "teacher_warmup.ckpt").string()
                                    : teacher_path;
      const Checkpoint warmup = load_checkpoint(tpath);
      const SemiResult res = semi_train(cfg, ds, warmup);
      std::cout << "semi stage done: best epoch " << res.best_epoch << ", val chamfer_x100 = "
                << fmt_g(res.best_metrics.chamfer_x100) << ", iou_pct = "
                << fmt_g(res.best_metrics.iou_pct) << "\n";
    } else if (*abl) {
      phase = "ablate";
      RunConfig cfg = resolve_config(abl_args, phase.c_str());
      const Dataset ds = load_dataset(cfg.dataset_path);
      const std::string tpath = teacher_path.empty()
                                    ? (fs::path(cfg.output_dir) / "teacher_warmup.ckpt").string()
                                    : teacher_path;
      const Checkpoint warmup = load_checkpoint(tpath);
      const std::string csv = (fs::path(cfg.output_dir) / "ablation.csv").string();
      const auto rows = run_ablation(cfg, ds, warmup, ablation_table(), csv);
      std::cout << "ablation done, " << rows.size() << " rows written to " << csv << "\n";
      for (const AblationRow& r : rows)
        std::cout << "  " << r.config.name << ": chamfer_x100 = " << fmt_g(r.metrics.chamfer_x100)
                  << ", iou_pct = " << fmt_g(r.metrics.iou_pct) << "\n";
    } else if (*ev) {
      phase = "eval";
      RunConfig cfg = resolve_config(eval_args, phase.c_str());
      const Dataset ds = load_dataset(cfg.dataset_path);
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const Split split = split_name == "test" ? Split::test : Split::val;
      const auto indices = split_indices(ds, split);
      const EvalResult res = evaluate_dataset(
          network_predictor_factory(ckpt.params, ckpt.spec, cfg.network.features), ds, indices,
          ds.header.grid);
      fs::create_directories(cfg.output_dir);
      const std::string out =
          (fs::path(cfg.output_dir) / ("metrics_" + split_name + ".csv")).string();
      write_metrics_csv(out, res);
      std::cout << "evaluated " << res.rows.size() << " samples; mean chamfer_x100 = "
                << fmt_g(res.mean.chamfer_x100) << ", iou_pct = " << fmt_g(res.mean.iou_pct)
                << " -> " << out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error [" << phase << "]: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
