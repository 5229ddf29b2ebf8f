#include "fluidsformer/commands.hpp"
#include "fluidsformer/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace cli = fluidsformer::cli;

int main(int argc, char **argv) {
  CLI::App app{"Keyframe fluid interpolation: simulate, train, interpolate, branch"};
  app.require_subcommand(1);

  cli::SimulateOptions sim;
  auto *simulate = app.add_subcommand("simulate", "Run one smoke scenario");
  simulate->add_option("--config", sim.config, "Scene config JSON")->required();
  simulate->add_option("--seed", sim.seed, "Noise seed")->required();
  simulate->add_option("--out", sim.out, "Output directory")->required();

  cli::DatasetOptions ds;
  auto *dataset = app.add_subcommand("dataset", "Generate a randomized scenario set");
  dataset->add_option("--config", ds.config, "Base scene config JSON")->required();
  dataset->add_option("--count", ds.count, "Number of scenarios")->required();
  dataset->add_option("--out", ds.out, "Output directory")->required();

  cli::TrainOptions tr;
  auto *train = app.add_subcommand("train", "Fit a model to a dataset");
  train->add_option("--data", tr.data, "Dataset directory")->required();
  train->add_option("--train-config", tr.train_config, "Training config JSON")->required();
  train->add_option("--loss-config", tr.loss_config, "Loss config JSON")->required();
  train->add_option("--out", tr.out, "Checkpoint path")->required();

  cli::InterpOptions ip;
  auto *interp = app.add_subcommand("interp", "Interpolate substeps between keyframes");
  interp->add_option("--ckpt", ip.ckpt, "Checkpoint")->required();
  interp->add_option("--keyframes", ip.keyframes, "Keyframe FGS")->required();
  interp->add_option("--substeps", ip.substeps, "Substeps per interval")->required();
  interp->add_option("--out", ip.out, "Output FGS")->required();

  cli::VariantsOptions va;
  auto *variants = app.add_subcommand("variants", "Build a variant tree");
  variants->add_option("--ckpt", va.ckpt, "Checkpoint")->required();
  variants->add_option("--keyframes", va.keyframes, "Keyframe FGS")->required();
  variants->add_option("--substeps", va.substeps, "Substeps per interval")->required();
  variants->add_option("--k", va.k, "Top-k candidates per substep")->required();
  variants->add_option("--groups", va.groups, "Beam groups")->required();
  variants->add_option("--beam", va.beam, "Beam width per group")->required();
  variants->add_option("--diversity", va.diversity, "Diversity penalty")->required();
  variants->add_option("--seed", va.seed, "Seed")->required();
  variants->add_option("--out", va.out, "Output directory")->required();

  cli::CombineOptions co;
  auto *combine = app.add_subcommand("combine", "Boolean-combine two sequences");
  combine->add_option("--a", co.a, "First FGS")->required();
  combine->add_option("--b", co.b, "Second FGS")->required();
  combine->add_option("--op", co.op, "add, subtract or intersect")
      ->required()
      ->check(CLI::IsMember({"add", "subtract", "intersect"}));
  combine->add_option("--out", co.out, "Output FGS")->required();

  cli::EvalOptions ev;
  auto *eval = app.add_subcommand("eval", "Compare a prediction with ground truth");
  eval->add_option("--pred", ev.pred, "Predicted FGS")->required();
  eval->add_option("--truth", ev.truth, "Ground-truth FGS")->required();
  eval->add_option("--report", ev.report, "Report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    std::cerr << cli::error_line("usage", e.what()) << '\n';
    return 2;
  }

  try {
    if (*simulate) cli::run_simulate(sim);
    else if (*dataset) cli::run_dataset(ds);
    else if (*train) cli::run_train(tr);
    else if (*interp) cli::run_interp(ip);
    else if (*variants) cli::run_variants(va);
    else if (*combine) cli::run_combine(co);
    else if (*eval) cli::run_eval(ev);
  } catch (const fluidsformer::Error &e) {
    std::cerr << cli::error_line(e.code(), e.what()) << '\n';
    return 1;
  } catch (const std::exception &e) {
    std::cerr << cli::error_line("internal", e.what()) << '\n';
    return 1;
  }
  return 0;
}
