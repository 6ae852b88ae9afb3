#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "adacap/cli.hpp"

namespace {

using adacap::cli::KeyValue;

// --set key=value accumulates raw strings; parse them after CLI11 runs so
// malformed pairs report as usage errors.
std::vector<KeyValue> to_overrides(const std::vector<std::string>& raw) {
  std::vector<KeyValue> out;
  out.reserve(raw.size());
  for (const auto& s : raw) out.push_back(adacap::cli::parse_override(s));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adacap: train, evaluate, and compare domain-adapted caption models"};
  app.require_subcommand(1);

  // synth ---------------------------------------------------------------
  adacap::cli::SynthArgs synth_args;
  std::vector<std::string> synth_sets;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-domain corpus");
  synth->add_option("--spec", synth_args.spec_path, "Spec file (key = value lines)");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--set", synth_sets, "Override a spec key (key=value, repeatable)");

  // train ---------------------------------------------------------------
  adacap::cli::TrainArgs train_args;
  std::vector<std::string> train_sets;
  std::string train_strategy, train_seed;
  auto* train = app.add_subcommand("train", "Train one strategy and write a checkpoint");
  train->add_option("--config", train_args.config_path, "Config file (key = value lines)");
  train->add_option("--data", train_args.data_dir, "Dataset directory")->required();
  train->add_option("--out", train_args.out_dir, "Output directory")->required();
  train->add_option("--set", train_sets, "Override a config key (key=value, repeatable)");
  train->add_option("--strategy", train_strategy,
                    "srconly|tgtonly|all|finetune|dual|proposed");
  train->add_option("--seed", train_seed, "Training seed");

  // compare -------------------------------------------------------------
  adacap::cli::CompareArgs compare_args;
  std::vector<std::string> compare_sets;
  std::string compare_seeds, compare_strategies, compare_sizes, compare_jobs;
  auto* compare =
      app.add_subcommand("compare", "Run strategies over seeds and tabulate target-test metrics");
  compare->add_option("--config", compare_args.config_path, "Config file");
  compare->add_option("--data", compare_args.data_dir, "Dataset directory")->required();
  compare->add_option("--out", compare_args.out_dir, "Output directory")->required();
  compare->add_option("--set", compare_sets, "Override a config key (key=value, repeatable)");
  compare->add_option("--seeds", compare_seeds, "Number of seeds (first = config seed)");
  compare->add_option("--strategies", compare_strategies, "Comma-separated strategy list");
  compare->add_option("--target-sizes", compare_sizes,
                      "Comma-separated target train sizes to sweep");
  compare->add_option("--jobs", compare_jobs, "Parallel training runs");

  // generate ------------------------------------------------------------
  adacap::cli::GenerateArgs gen_args;
  auto* generate = app.add_subcommand("generate", "Beam-search captions for context vectors");
  generate->add_option("--checkpoint", gen_args.checkpoint_path, "Checkpoint file")->required();
  generate->add_option("--vocab", gen_args.vocab_path, "Vocabulary file")->required();
  generate->add_option("--input", gen_args.input_path,
                       "JSONL contexts ([floats] or {\"ctx\":[...]}); '-' = stdin")
      ->required();
  generate->add_option("--beam", gen_args.beam_width, "Beam width (default 5)");
  generate->add_option("--max-len", gen_args.max_len, "Maximum caption length");
  generate->add_option("--domain", gen_args.domain, "source|target head (default target)");

  // select --------------------------------------------------------------
  adacap::cli::SelectArgs select_args;
  auto* select = app.add_subcommand("select", "Pick the most probable choice per question");
  select->add_option("--checkpoint", select_args.checkpoint_path, "Checkpoint file")->required();
  select->add_option("--vocab", select_args.vocab_path, "Vocabulary file")->required();
  select->add_option("--questions", select_args.questions_path,
                     "JSONL questions ({ctx, choices, answer})")
      ->required();
  select->add_option("--domain", select_args.domain, "source|target head (default target)");

  // eval ----------------------------------------------------------------
  adacap::cli::EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", eval_args.checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--data", eval_args.data_dir, "Dataset directory")->required();
  eval->add_option("--domain", eval_args.domain, "source|target (default target)");
  eval->add_option("--split", eval_args.split, "train|dev|test (default test)");
  eval->add_option("--beam", eval_args.beam_width, "Beam width (default 5)");
  eval->add_option("--max-len", eval_args.max_len, "Maximum caption length");
  eval->add_flag("--json", eval_args.as_json, "Emit the report as JSON");
  eval->add_option("--jobs", eval_args.jobs, "Decoding threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage errors exit 1; --help exits 0
  }

  try {
    if (*synth) {
      synth_args.overrides = to_overrides(synth_sets);
      return adacap::cli::cmd_synth(synth_args, std::cout, std::cerr);
    }
    if (*train) {
      train_args.overrides = to_overrides(train_sets);
      if (!train_strategy.empty()) train_args.overrides.push_back({"strategy", train_strategy});
      if (!train_seed.empty()) train_args.overrides.push_back({"seed", train_seed});
      return adacap::cli::cmd_train(train_args, std::cout, std::cerr);
    }
    if (*compare) {
      compare_args.overrides = to_overrides(compare_sets);
      if (!compare_seeds.empty()) compare_args.overrides.push_back({"seeds", compare_seeds});
      if (!compare_strategies.empty())
        compare_args.overrides.push_back({"strategies", compare_strategies});
      if (!compare_sizes.empty())
        compare_args.overrides.push_back({"target_sizes", compare_sizes});
      if (!compare_jobs.empty()) compare_args.overrides.push_back({"jobs", compare_jobs});
      return adacap::cli::cmd_compare(compare_args, std::cout, std::cerr);
    }
    if (*generate) return adacap::cli::cmd_generate(gen_args, std::cin, std::cout, std::cerr);
    if (*select) return adacap::cli::cmd_select(select_args, std::cout, std::cerr);
    if (*eval) return adacap::cli::cmd_eval(eval_args, std::cout, std::cerr);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
