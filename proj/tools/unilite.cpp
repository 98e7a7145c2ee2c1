// Command-line front end: train, ablate, analyze, bench env, bench replay-placement.
#include <iostream>

#include <CLI11.hpp>

#include "unilite/cli/commands.hpp"

namespace {

void add_common(CLI::App* cmd, unilite::cli::CommonArgs& a, bool with_variant) {
  cmd->add_option("--task", a.task, "task preset (pointmass, pendulum)");
  cmd->add_option("--algo", a.algo, "ppo, appo, sac or flashsac");
  cmd->add_option("--config", a.config_path, "JSON config file layered over the preset");
  cmd->add_option("--set", a.sets, "dotted key=value override, repeatable");
  cmd->add_option("--seed", a.seed, "seed override");
  cmd->add_option("--out", a.out, "output directory");
  if (with_variant) cmd->add_option("--variant", a.variant, "replay path variant (C, B, A, baseline)");
  cmd->add_flag("--deterministic", a.deterministic, "round-robin role scheduling");
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = unilite::cli;
  CLI::App app{"unilite: desk-scale RL training and replay-path analysis"};
  app.require_subcommand(1);

  cli::CommonArgs train_args;
  auto* train = app.add_subcommand("train", "run one training job");
  add_common(train, train_args, true);

  cli::CommonArgs ablate_args;
  std::string variants, seeds;
  auto* ablate = app.add_subcommand("ablate", "run the replay-path ablation matrix");
  add_common(ablate, ablate_args, false);
  ablate->add_option("--variants", variants, "comma list, default C,B,A,baseline");
  ablate->add_option("--seeds", seeds, "comma list, default 1,2,3");

  std::string trace_path;
  std::optional<std::string> analyze_out;
  auto* analyze = app.add_subcommand("analyze", "attribute an existing trace.json");
  analyze->add_option("trace", trace_path, "trace file")->required();
  analyze->add_option("--out", analyze_out, "directory for analysis.txt and cycles.csv");

  cli::CommonArgs bench_args;
  std::string bench_what, sizes;
  int steps = 200;
  auto* bench = app.add_subcommand("bench", "microbenchmarks");
  bench->add_option("what", bench_what, "env or replay-placement")->required();
  add_common(bench, bench_args, true);
  bench->add_option("--sizes", sizes, "env counts for bench env, default 64,256,1024");
  bench->add_option("--steps", steps, "steps (env) or learner ticks (replay-placement)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitConfig;
  }

  if (*train) return cli::cmd_train(train_args, std::cout, std::cerr);
  if (*ablate) return cli::cmd_ablate(ablate_args, variants, seeds, std::cout, std::cerr);
  if (*analyze) return cli::cmd_analyze(trace_path, analyze_out, std::cout, std::cerr);
  return cli::cmd_bench(bench_what, bench_args, sizes, steps, std::cout, std::cerr);
}
