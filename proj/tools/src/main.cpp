#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "diunet/io_util.hpp"

namespace {

void add_overrides(CLI::App* cmd, diunet::cli::Overrides& o, std::string& config) {
  cmd->add_option("--config", config, "INI run configuration");
  cmd->add_option("--depth", o.depth, "Contracting levels");
  cmd->add_option("--base-filters", o.base_filters, "Filters per branch at the top level");
  cmd->add_option("--variant", o.variant, "dilated or baseline");
  cmd->add_option("--epochs", o.epochs);
  cmd->add_option("--batch", o.batch);
  cmd->add_option("--lr", o.lr, "Initial learning rate");
  cmd->add_option("--gamma", o.gamma, "Learning-rate decay per 10 epochs");
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--folds", o.folds);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace diunet::cli;
  CLI::App app{"Dilated Inception U-Net segmentation toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic phantom dataset");
  generate->add_option("--count", gen.count);
  generate->add_option("--size", gen.size);
  generate->add_option("--seed", gen.seed);
  generate->add_option("--noise", gen.noise);
  generate->add_option("--out", gen.out)->required();

  PreprocessArgs pre;
  auto* preprocess = app.add_subcommand("preprocess", "Crop, resize, filter and window slices");
  preprocess->add_option("--data", pre.data)->required();
  preprocess->add_option("--out", pre.out)->required();
  preprocess->add_option("--target", pre.target, "Output height and width");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train one model");
  add_overrides(train, tr.overrides, tr.config);
  train->add_option("--data", tr.data)->required();
  train->add_option("--out-model", tr.out_model)->required();
  train->add_option("--history-csv", tr.history_csv);
  train->add_option("--fold", tr.fold, "Train on the k-fold split with this validation fold");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Per-image sub-region Dice of a model");
  evaluate->add_option("--model", ev.model)->required();
  evaluate->add_option("--data", ev.data)->required();
  evaluate->add_option("--report-csv", ev.report_csv);
  evaluate->add_option("--threshold", ev.threshold);

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Write predicted masks and a Dice CSV");
  segment->add_option("--model", seg.model)->required();
  segment->add_option("--data", seg.data)->required();
  segment->add_option("--out-dir", seg.out_dir)->required();
  segment->add_option("--threshold", seg.threshold);

  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "Compare two sets of fold reports");
  stats->add_option("--reports-a", st.reports_a)->required();
  stats->add_option("--reports-b", st.reports_b)->required();
  stats->add_option("--out", st.out, "Decision table CSV");
  stats->add_option("--alpha", st.alpha);

  GradcheckArgs gc;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the gradients");
  gradcheck->add_option("--depth", gc.depth);
  gradcheck->add_option("--base-filters", gc.base_filters);
  gradcheck->add_option("--size", gc.size);
  gradcheck->add_option("--batch", gc.batch);
  gradcheck->add_option("--coords", gc.coordinates, "Coordinates per parameter tensor");
  gradcheck->add_option("--step", gc.step);
  gradcheck->add_option("--tolerance", gc.tolerance);
  gradcheck->add_option("--seed", gc.seed);
  gradcheck->add_option("--variant", gc.variant);

  ParamcountArgs pc;
  auto* paramcount = app.add_subcommand("paramcount", "Parameter counts of both variants");
  add_overrides(paramcount, pc.overrides, pc.config);
  paramcount->add_option("--preset", pc.preset, "desk or paper");
  paramcount->add_option("--size", pc.size, "Input height and width");

  ReproArgs rp;
  auto* repro = app.add_subcommand("repro", "Full desk-scale experiment");
  add_overrides(repro, rp.overrides, rp.config);
  repro->add_option("--out-dir", rp.out_dir);
  repro->add_option("--count", rp.count, "Number of phantoms");
  repro->add_flag("--quiet", rp.quiet, "No progress output");

  CLI11_PARSE(app, argc, argv);
  diunet::tune_allocator_for_training();
  try {
    if (*generate) return cmd_generate(gen);
    if (*preprocess) return cmd_preprocess(pre);
    if (*train) return cmd_train(tr);
    if (*evaluate) return cmd_evaluate(ev);
    if (*segment) return cmd_segment(seg);
    if (*stats) return cmd_stats(st);
    if (*gradcheck) return cmd_gradcheck(gc);
    if (*paramcount) return cmd_paramcount(pc);
    if (*repro) return cmd_repro(rp);
  } catch (const std::exception& e) {
    std::cerr << "diunet: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
