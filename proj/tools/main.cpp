#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "commands.hpp"
#include "grex/error.hpp"

namespace {

void echo_config(CLI::App* sub, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) return;  // the command itself reports unwritable outputs
  std::ofstream file(out / "run_config.txt");
  if (file) file << sub->config_to_str(true, false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grex: train small GNNs and explain their predictions edge by edge"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; explicit flags win");

  grex::cli::GenDataOptions gen;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "generate a dataset directory");
  gen_cmd->add_option("--dataset", gen.dataset, "ba-shapes|rings")
      ->required()
      ->check(CLI::IsMember({"ba-shapes", "rings"}));
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->envname("GREX_SEED");
  gen_cmd->add_option("--num-graphs", gen.num_graphs, "graph count (rings)")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--out", gen.out, "output directory")->required();

  grex::cli::TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  train_cmd->add_option("--model", train.model, "gcn|ggnn")
      ->required()
      ->check(CLI::IsMember({"gcn", "ggnn"}));
  train_cmd->add_option("--epochs", train.epochs, "full-batch epochs");
  train_cmd->add_option("--lr", train.lr, "learning rate");
  train_cmd->add_option("--hidden", train.hidden, "hidden/state width");
  train_cmd->add_option("--depth", train.depth, "GCN layers / GGNN steps");
  train_cmd->add_option("--train-fraction", train.train_fraction, "train split fraction");
  train_cmd->add_option("--seed", train.seed, "training seed")->envname("GREX_SEED");
  train_cmd->add_option("--out", train.out, "output directory")->required();

  grex::cli::ExplainOptions explain;
  CLI::App* explain_cmd = app.add_subcommand("explain", "explain one prediction");
  explain_cmd->add_option("--checkpoint", explain.checkpoint, "model checkpoint file")
      ->required();
  explain_cmd->add_option("--data", explain.data, "dataset directory")->required();
  explain_cmd->add_option("--method", explain.method,
                          "lime|saliency|gradcam|removal|random")
      ->required();
  explain_cmd->add_option("--target", explain.target,
                          "node id (node tasks) or graph index (graph tasks)")
      ->required();
  explain_cmd->add_option("--target-class", explain.target_class,
                          "class to explain; default: the predicted class");
  explain_cmd->add_option("--p", explain.p, "lime: perturbation probability");
  explain_cmd->add_option("--m", explain.m, "lime: sample count (0 = auto)");
  explain_cmd->add_option("--sigma", explain.sigma, "lime: kernel width (0 = auto)");
  explain_cmd->add_option("--lambda", explain.lambda, "lime: L1 penalty");
  explain_cmd->add_flag("--binary-perturb", explain.binary_perturbation,
                        "lime: zero perturbed edges instead of drawing weights");
  explain_cmd->add_option("--seed", explain.seed, "method seed")->envname("GREX_SEED");
  explain_cmd->add_option("--jobs", explain.jobs, "worker threads");
  explain_cmd->add_option("--out", explain.out, "output directory")->required();

  grex::cli::EvaluateOptions evaluate;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "run the explanation benchmark");
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint, "model checkpoint file")
      ->required();
  eval_cmd->add_option("--data", evaluate.data, "dataset directory")->required();
  eval_cmd->add_option("--methods", evaluate.methods, "comma-separated method list")
      ->required()
      ->delimiter(',');
  eval_cmd->add_option("--metric", evaluate.metric, "recall|auc")
      ->check(CLI::IsMember({"recall", "auc"}));
  eval_cmd->add_option("--k", evaluate.k, "recall cut-off");
  eval_cmd->add_option("--removal-steps", evaluate.removal_steps, "AUC curve length");
  eval_cmd->add_option("--seeds", evaluate.seeds, "comma-separated seeds")->delimiter(',');
  eval_cmd->add_option("--max-targets", evaluate.max_targets, "target sample cap");
  eval_cmd->add_option("--lime-m", evaluate.lime_m, "lime sample count (0 = auto)");
  eval_cmd->add_option("--jobs", evaluate.jobs, "worker threads");
  eval_cmd->add_flag("--timings", evaluate.timings,
                     "write measured wall times into report.csv (non-reproducible)");
  eval_cmd->add_option("--out", evaluate.out, "output directory")->required();

  grex::cli::ExportDotOptions dot;
  CLI::App* dot_cmd = app.add_subcommand("export-dot", "render an explanation as DOT");
  dot_cmd->add_option("--explanation", dot.explanation, "explanation JSON file")
      ->required();
  dot_cmd->add_option("--data", dot.data, "dataset directory")->required();
  dot_cmd->add_option("--top-k", dot.top_k, "edges to highlight");
  dot_cmd->add_option("--out", dot.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    std::cerr << "error[E_USAGE]: " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen_cmd->parsed()) {
      echo_config(gen_cmd, gen.out);
      grex::cli::cmd_gen_data(gen);
    } else if (train_cmd->parsed()) {
      echo_config(train_cmd, train.out);
      grex::cli::cmd_train(train);
    } else if (explain_cmd->parsed()) {
      echo_config(explain_cmd, explain.out);
      grex::cli::cmd_explain(explain);
    } else if (eval_cmd->parsed()) {
      echo_config(eval_cmd, evaluate.out);
      grex::cli::cmd_evaluate(evaluate);
    } else if (dot_cmd->parsed()) {
      echo_config(dot_cmd, dot.out);
      grex::cli::cmd_export_dot(dot);
    }
  } catch (const grex::Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << '\n';
    return e.code() == "E_USAGE" ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error[E_INTERNAL]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
