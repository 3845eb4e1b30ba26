#include "commands.hpp"

#include <chrono>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>

#include "diunet/dataset.hpp"
#include "diunet/gradcheck.hpp"
#include "diunet/io_util.hpp"
#include "diunet/model_io.hpp"
#include "diunet/pipeline.hpp"
#include "diunet/preprocess.hpp"
#include "diunet/stats.hpp"
#include "diunet/train.hpp"

namespace diunet::cli {

namespace {

ProgressFn stderr_progress() {
  static std::mutex mu;
  return [](const std::string& msg) {
    std::lock_guard lock(mu);
    std::cerr << msg << '\n';
  };
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

void check_model_matches(const ModelConfig& c, const Dataset& d) {
  if (static_cast<std::size_t>(c.height) != d.height ||
      static_cast<std::size_t>(c.width) != d.width ||
      static_cast<std::size_t>(c.channels) != d.channels) {
    throw DimensionError("model expects " + std::to_string(c.height) + "x" +
                         std::to_string(c.width) + "x" + std::to_string(c.channels) +
                         " images but the data is " + std::to_string(d.height) + "x" +
                         std::to_string(d.width) + "x" + std::to_string(d.channels));
  }
}

}  // namespace

void Overrides::apply(RunConfig& cfg) const {
  if (depth) cfg.depth = *depth;
  if (base_filters) cfg.base_filters = *base_filters;
  if (variant) cfg.variant = parse_variant(*variant);
  if (epochs) cfg.train.epochs = *epochs;
  if (batch) cfg.train.batch_size = *batch;
  if (lr) cfg.train.base_lr = *lr;
  if (gamma) cfg.train.gamma = *gamma;
  if (seed) cfg.train.seed = *seed;
  if (folds) cfg.train.folds = *folds;
}

RunConfig load_config(const std::string& path, const Overrides& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  overrides.apply(cfg);
  cfg.validate();
  return cfg;
}

int cmd_generate(const GenerateArgs& args) {
  PhantomSpec spec;
  spec.count = args.count;
  spec.size = args.size;
  spec.seed = args.seed;
  spec.noise = args.noise;
  const Dataset d = generate_phantoms(spec);
  write_dataset(args.out, d);
  std::cout << "wrote " << d.samples.size() << " phantoms (" << d.height << "x" << d.width
            << "x" << d.channels << ") to " << args.out.string() << '\n';
  return 0;
}

int cmd_preprocess(const PreprocessArgs& args) {
  const Dataset in = read_dataset(args.data);
  const Dataset out = preprocess_dataset(in, args.target);
  write_dataset(args.out, out);
  std::cout << "kept " << out.samples.size() << " of " << in.samples.size()
            << " slices, resized to " << args.target << "x" << args.target << '\n';
  return 0;
}

int cmd_train(const TrainArgs& args) {
  const RunConfig cfg = load_config(args.config, args.overrides);
  const Dataset data = read_dataset(args.data);
  const ModelConfig mc = cfg.model_config(data.height, data.width, data.channels);

  Fold split;
  std::uint64_t seed = cfg.train.seed;
  if (args.fold < 0) {
    split.train.resize(data.samples.size());
    std::iota(split.train.begin(), split.train.end(), std::size_t{0});
  } else {
    const auto folds = kfold_split(data.samples.size(),
                                   static_cast<std::size_t>(cfg.train.folds), cfg.train.seed);
    if (static_cast<std::size_t>(args.fold) >= folds.size()) {
      throw std::invalid_argument("--fold must be below k = " + std::to_string(folds.size()));
    }
    split = folds[static_cast<std::size_t>(args.fold)];
    seed += static_cast<std::uint64_t>(args.fold);
  }
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  Model<float> model(mc, seed);
  const auto history = train_model(model, data, split, tc, stderr_progress());
  save_model(args.out_model, model);
  if (!args.history_csv.empty()) write_file_atomic(args.history_csv, history_csv(history));
  std::cout << "trained " << to_string(mc.variant) << " model on " << split.train.size()
            << " samples; final loss " << history.back().train_loss << '\n';
  return 0;
}

int cmd_evaluate(const EvaluateArgs& args) {
  Model<float> model = load_model(args.model);
  const Dataset data = read_dataset(args.data);
  check_model_matches(model.config(), data);
  std::vector<std::size_t> ids(data.samples.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  const auto dice = evaluate_model(model, data, ids, args.threshold);
  std::vector<ImageDiceRow> rows;
  std::vector<double> wt, tc, et;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    rows.push_back({data.samples[i].meta.patient_id, -1, dice[i]});
    wt.push_back(dice[i].wt);
    tc.push_back(dice[i].tc);
    et.push_back(dice[i].et);
  }
  if (!args.report_csv.empty()) write_file_atomic(args.report_csv, image_dice_csv(rows));
  std::cout << std::fixed << std::setprecision(4) << "median Dice over " << rows.size()
            << " images: WT " << median(wt) << "  TC " << median(tc) << "  ET " << median(et)
            << '\n';
  return 0;
}

int cmd_segment(const SegmentArgs& args) {
  Model<float> model = load_model(args.model);
  const Dataset data = read_dataset(args.data);
  check_model_matches(model.config(), data);
  const SegmentSummary s = segment(
      data,
      [&](std::span<const std::size_t> ids) { return predict_batched(model, data, ids); },
      args.out_dir, args.threshold);
  std::cout << "wrote " << s.masks_written << " masks and dice.csv for " << s.rows.size()
            << " samples to " << args.out_dir.string() << '\n';
  return 0;
}

int cmd_stats(const StatsArgs& args) {
  const auto a = parse_fold_reports_csv(read_text(args.reports_a));
  const auto b = parse_fold_reports_csv(read_text(args.reports_b));
  const auto rows = compare_models(a, b, args.alpha);
  if (!args.out.empty()) write_file_atomic(args.out, comparison_csv(rows));
  std::cout << comparison_summary(rows, "A", "B");
  return 0;
}

int cmd_gradcheck(const GradcheckArgs& args) {
  ModelConfig mc;
  mc.depth = args.depth;
  mc.base_filters = args.base_filters;
  mc.height = mc.width = args.size;
  mc.variant = parse_variant(args.variant);
  Model<double> model(mc, args.seed);

  PhantomSpec spec;
  spec.size = static_cast<std::size_t>(args.size);
  spec.count = static_cast<std::size_t>(args.batch);
  spec.seed = args.seed;
  const Dataset data = generate_phantoms(spec);
  std::vector<std::size_t> ids(data.samples.size());
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Tensor<double> images = gather_images(data, ids).cast<double>();
  const Tensor<double> targets = gather_targets(data, ids).cast<double>();
  const ChannelStats st = channel_stats(data, ids);
  for (std::size_t c = 0; c < data.channels; ++c) {
    model.input_mean()[c] = st.mean[c];
    model.input_std()[c] = st.std[c];
  }
  images = model.normalize_input(images);

  GradcheckOptions opt;
  opt.coordinates = args.coordinates;
  opt.step = args.step;
  opt.tolerance = args.tolerance;
  opt.seed = args.seed;
  const GradcheckReport report = gradcheck_model(model, images, targets, opt);

  std::cout << std::left << std::setw(28) << "layer" << std::right << std::setw(8) << "coords"
            << std::setw(14) << "max_rel_err" << "  status\n";
  for (const auto& l : report.layers) {
    std::cout << std::left << std::setw(28) << l.layer << std::right << std::setw(8)
              << l.coordinates << std::setw(14) << std::scientific << std::setprecision(3)
              << l.max_rel_error << std::defaultfloat << "  " << (l.pass ? "ok" : "FAIL") << '\n';
  }
  std::cout << "max relative error " << std::scientific << report.max_rel_error
            << " (tolerance " << report.tolerance << "): " << (report.pass ? "pass" : "FAIL")
            << '\n';
  return report.pass ? 0 : 1;
}

int cmd_paramcount(const ParamcountArgs& args) {
  ModelConfig mc;
  if (args.preset == "paper") {
    mc = ModelConfig::paper_scale();
  } else if (args.preset == "desk" || args.preset.empty()) {
    const RunConfig cfg = load_config(args.config, args.overrides);
    mc = cfg.model_config(cfg.target, cfg.target, 4);
  } else {
    throw std::invalid_argument("unknown preset '" + args.preset + "' (expected desk or paper)");
  }
  if (args.preset == "paper") {
    if (args.overrides.depth) mc.depth = *args.overrides.depth;
    if (args.overrides.base_filters) mc.base_filters = *args.overrides.base_filters;
  }
  if (args.size > 0) mc.height = mc.width = args.size;
  mc.validate();
  std::cout << "depth " << mc.depth << ", base_filters " << mc.base_filters << ", input "
            << mc.height << "x" << mc.width << "x" << mc.channels << "\n"
            << paramcount_table(mc);
  return 0;
}

int cmd_repro(const ReproArgs& args) {
  RunConfig cfg = load_config(args.config, args.overrides);
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.count) cfg.phantoms.count = *args.count;
  const auto start = std::chrono::steady_clock::now();
  const ReproResult r =
      run_repro(cfg, worker_count(), args.quiet ? ProgressFn{} : stderr_progress());
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  std::cout << comparison_summary(r.comparison, "baseline", "dilated");
  std::cout << "parameters: dilated " << r.params.dilated << ", baseline " << r.params.baseline
            << '\n';
  for (const auto& f : r.files) std::cout << "wrote " << f.string() << '\n';
  std::cout << std::fixed << std::setprecision(1) << "elapsed " << minutes << " min\n";
  return 0;
}

}  // namespace diunet::cli
