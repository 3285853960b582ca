// Drives the installed CLI binary end to end on a micro config. The binary
// path arrives as argv[1] (wired up by CMake).

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string g_cli;

int run(const std::string& args) {
  const std::string cmd = g_cli + " " + args + " >> cli_smoke/log.txt 2>&1";
  return std::system(cmd.c_str());
}

}  // namespace

TEST_CASE("cli: full pipeline on a micro config") {
  fs::remove_all("cli_smoke");
  fs::create_directories("cli_smoke");
  {
    std::ofstream cfg("cli_smoke/run.json");
    cfg << R"({
      "dataset": "cli_smoke/data.sdfd",
      "output_dir": "cli_smoke/out",
      "seed": 4,
      "gen": {"n": 30, "labeled_fraction": 0.3, "h": 16, "w": 16, "grid": 16, "queries": 6},
      "network": {"hidden": [8], "pool": 2},
      "warmup": {"epochs": 4, "batch_size": 8, "lr": 0.05, "decay_epochs": [3]},
      "semi": {"epochs": 2, "batch_size": 16, "lr": 0.02, "decay_epochs": []},
      "importance": {"n_batches": 2, "batch_size": 2},
      "eval_every": 2,
      "ablation_epochs": 1
    })";
  }

  REQUIRE(run("gen-data --config cli_smoke/run.json") == 0);
  CHECK(fs::exists("cli_smoke/data.sdfd"));

  REQUIRE(run("warmup --config cli_smoke/run.json") == 0);
  CHECK(fs::exists("cli_smoke/out/teacher_warmup.ckpt"));
  CHECK(fs::exists("cli_smoke/out/runlog.csv"));

  REQUIRE(run("semi --config cli_smoke/run.json "
              "--dump-importance cli_smoke/out/omega.csv") == 0);
  CHECK(fs::exists("cli_smoke/out/teacher_best.ckpt"));
  CHECK(fs::exists("cli_smoke/out/student_final.ckpt"));
  CHECK(fs::exists("cli_smoke/out/omega.csv"));

  REQUIRE(run("eval --config cli_smoke/run.json --ckpt cli_smoke/out/teacher_best.ckpt "
              "--split val") == 0);
  CHECK(fs::exists("cli_smoke/out/metrics_val.csv"));
  REQUIRE(run("eval --config cli_smoke/run.json --ckpt cli_smoke/out/teacher_best.ckpt "
              "--split test") == 0);
  CHECK(fs::exists("cli_smoke/out/metrics_test.csv"));

  REQUIRE(run("ablate --config cli_smoke/run.json") == 0);
  CHECK(fs::exists("cli_smoke/out/ablation.csv"));

  // a stripped dataset still trains but cannot be evaluated on the test split
  REQUIRE(run("gen-data --config cli_smoke/run.json --strip-unlabeled-gt "
              "--out cli_smoke/blind.sdfd") == 0);
  {
    std::ofstream cfg("cli_smoke/blind.json");
    cfg << R"({
      "dataset": "cli_smoke/blind.sdfd",
      "output_dir": "cli_smoke/blind_out",
      "seed": 4,
      "gen": {"n": 30, "labeled_fraction": 0.3, "h": 16, "w": 16, "grid": 16, "queries": 6},
      "network": {"hidden": [8], "pool": 2},
      "warmup": {"epochs": 2, "batch_size": 8, "lr": 0.05, "decay_epochs": []},
      "semi": {"epochs": 1, "batch_size": 16, "lr": 0.02, "decay_epochs": []},
      "importance": {"n_batches": 2, "batch_size": 2}
    })";
  }
  REQUIRE(run("warmup --config cli_smoke/blind.json") == 0);
  REQUIRE(run("semi --config cli_smoke/blind.json") == 0);
  CHECK(run("eval --config cli_smoke/blind.json --ckpt cli_smoke/blind_out/teacher_best.ckpt "
            "--split test") != 0);

  // errors exit nonzero
  CHECK(run("warmup --config cli_smoke/does_not_exist.json") != 0);
  CHECK(run("eval --config cli_smoke/run.json --ckpt cli_smoke/missing.ckpt --split val") != 0);
  CHECK(run("gen-data") != 0);  // missing required --config

  fs::remove_all("cli_smoke");
}

int main(int argc, char** argv) {
  if (argc > 1) g_cli = argv[1];
  if (g_cli.empty()) {
    std::fprintf(stderr, "usage: test_cli <path-to-sdfssl-binary>\n");
    return 2;
  }
  doctest::Context ctx;
  return ctx.run();
}
