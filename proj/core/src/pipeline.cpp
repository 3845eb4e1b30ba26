#include "diunet/pipeline.hpp"

#include <sstream>
#include <stdexcept>

#include "diunet/io_util.hpp"
#include "diunet/metrics.hpp"
#include "diunet/preprocess.hpp"

namespace diunet {

namespace {

std::string num(double v) { return format_double(v); }

void history_rows(std::ostringstream& out, std::span<const EpochRecord> history,
                  const std::string& prefix) {
  for (const auto& r : history) {
    out << prefix << r.epoch << ',' << num(r.train_loss) << ',' << num(r.dice_label1) << ','
        << num(r.dice_label2) << ',' << num(r.dice_label4) << ',' << num(r.lr) << '\n';
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("line " + std::to_string(line) + ": '" + text +
                                "' is not a number");
  }
}

}  // namespace

std::string history_csv(std::span<const EpochRecord> history) {
  std::ostringstream out;
  out << "epoch,train_loss,dice_label1,dice_label2,dice_label4,lr\n";
  history_rows(out, history, "");
  return out.str();
}

std::string fold_histories_csv(std::span<const FoldResult> folds) {
  std::ostringstream out;
  out << "fold,epoch,train_loss,dice_label1,dice_label2,dice_label4,lr\n";
  for (const auto& f : folds) history_rows(out, f.history, std::to_string(f.report.fold) + ",");
  return out.str();
}

std::string fold_reports_csv(std::span<const FoldReport> reports) {
  std::ostringstream out;
  out << "fold,images,wt_dice,tc_dice,et_dice\n";
  for (const auto& r : reports) {
    out << r.fold << ',' << r.images << ',' << num(r.wt) << ',' << num(r.tc) << ','
        << num(r.et) << '\n';
  }
  return out.str();
}

std::vector<FoldReport> parse_fold_reports_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("fold report CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "fold,images,wt_dice,tc_dice,et_dice") {
    throw std::invalid_argument("fold report CSV has header '" + line +
                                "', expected fold,images,wt_dice,tc_dice,et_dice");
  }
  std::vector<FoldReport> out;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != 5) {
      throw std::invalid_argument("line " + std::to_string(n) + ": expected 5 fields, got " +
                                  std::to_string(cells.size()));
    }
    FoldReport r;
    r.fold = static_cast<std::size_t>(parse_number(cells[0], n));
    r.images = static_cast<std::size_t>(parse_number(cells[1], n));
    r.wt = parse_number(cells[2], n);
    r.tc = parse_number(cells[3], n);
    r.et = parse_number(cells[4], n);
    for (double v : {r.wt, r.tc, r.et}) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument("line " + std::to_string(n) + ": Dice outside [0, 1]");
      }
    }
    out.push_back(r);
  }
  return out;
}

std::string image_dice_csv(std::span<const ImageDiceRow> rows) {
  std::ostringstream out;
  out << "sample_id,fold,wt_dice,tc_dice,et_dice\n";
  for (const auto& r : rows) {
    out << r.sample_id << ',' << r.fold << ',' << num(r.dice.wt) << ',' << num(r.dice.tc) << ','
        << num(r.dice.et) << '\n';
  }
  return out.str();
}

std::vector<ImageDiceRow> fold_image_rows(const Dataset& data, std::span<const FoldResult> folds) {
  std::vector<ImageDiceRow> rows;
  for (const auto& f : folds) {
    for (std::size_t i = 0; i < f.validation_ids.size(); ++i) {
      rows.push_back({data.samples.at(f.validation_ids[i]).meta.patient_id,
                      static_cast<int>(f.report.fold), f.per_image.at(i)});
    }
  }
  return rows;
}

std::string comparison_csv(std::span<const ComparisonRow> rows) {
  std::ostringstream out;
  out << "region,median_a,median_b,mean_a,mean_b,shapiro_w_a,shapiro_p_a,shapiro_w_b,"
         "shapiro_p_b,normal_a,normal_b,test,statistic,p_value,significant\n";
  for (const auto& r : rows) {
    out << r.region << ',' << num(r.median_a) << ',' << num(r.median_b) << ',' << num(r.mean_a)
        << ',' << num(r.mean_b) << ',' << num(r.shapiro_w_a) << ',' << num(r.shapiro_p_a) << ','
        << num(r.shapiro_w_b) << ',' << num(r.shapiro_p_b) << ',' << r.normal_a << ','
        << r.normal_b << ',' << r.test << ',' << num(r.statistic) << ',' << num(r.p_value) << ','
        << r.significant << '\n';
  }
  return out.str();
}

std::string comparison_summary(std::span<const ComparisonRow> rows, const std::string& name_a,
                               const std::string& name_b) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  for (const auto& r : rows) {
    out.precision(4);
    out << r.region << ": median " << name_a << ' ' << r.median_a << ", " << name_b << ' '
        << r.median_b << "; Shapiro-Wilk p " << r.shapiro_p_a << " / " << r.shapiro_p_b
        << "; Wilcoxon p " << r.p_value << (r.significant ? " (significant)" : " (n.s.)") << '\n';
  }
  return out.str();
}

double ParamCount::reduction_percent() const {
  return 100.0 * (1.0 - static_cast<double>(dilated) / static_cast<double>(baseline));
}

ParamCount param_count(ModelConfig config) {
  ParamCount pc;
  auto dil = build_diunet<float>(config, 0);
  auto base = build_baseline_inception_unet<float>(config, 0);
  pc.dilated = count_params(dil);
  pc.baseline = count_params(base);
  return pc;
}

std::string paramcount_table(const ModelConfig& config) {
  const ParamCount pc = param_count(config);
  std::ostringstream out;
  out << "variant,parameters\n"
      << "dilated," << pc.dilated << '\n'
      << "baseline," << pc.baseline << '\n';
  out.setf(std::ios::fixed);
  out.precision(1);
  out << "reduction," << pc.reduction_percent() << "%\n";
  return out.str();
}

SegmentSummary segment(const Dataset& data, const Predictor& predict,
                       const std::filesystem::path& out_dir, double threshold) {
  data.validate();
  std::filesystem::create_directories(out_dir);
  SegmentSummary summary;
  const std::size_t pixels = data.height * data.width;
  constexpr std::size_t kBatch = 16;
  std::vector<std::size_t> ids;
  for (std::size_t begin = 0; begin < data.samples.size(); begin += kBatch) {
    ids.clear();
    for (std::size_t i = begin; i < std::min(data.samples.size(), begin + kBatch); ++i)
      ids.push_back(i);
    const Tensor<float> probs = predict(ids);
    const Shape expect{ids.size(), data.height, data.width, 3};
    if (probs.shape() != expect) {
      throw DimensionError("predictor returned " + shape_string(probs.shape()) + ", expected " +
                           shape_string(expect));
    }
    const Mask masks = binarize(probs, threshold);
    for (std::size_t b = 0; b < ids.size(); ++b) {
      const SegmentationSample& s = data.samples[ids[b]];
      Mask channels(Shape{data.height, data.width, 3});
      std::copy(masks.raw() + b * pixels * 3, masks.raw() + (b + 1) * pixels * 3,
                channels.raw());
      const SubRegionMasks pred = compose_from_channels(channels);
      const std::pair<const char*, const Mask*> outputs[] = {
          {"wt", &pred.wt}, {"tc", &pred.tc}, {"et", &pred.et}};
      for (const auto& [suffix, mask] : outputs) {
        std::vector<std::uint8_t> gray(pixels);
        for (std::size_t p = 0; p < pixels; ++p) gray[p] = (*mask)[p] ? 255 : 0;
        write_file_atomic(out_dir / (s.meta.patient_id + "_" + suffix + ".pgm"),
                          encode_pgm(data.height, data.width, gray));
        ++summary.masks_written;
      }
      summary.rows.push_back(
          {s.meta.patient_id, -1, subregion_dice(pred, compose_subregions(s.labels))});
    }
  }
  write_file_atomic(out_dir / "dice.csv", image_dice_csv(summary.rows));
  return summary;
}

ReproResult run_repro(const RunConfig& config, unsigned threads, const ProgressFn& progress) {
  config.validate();
  auto stage = [&](const char* name, auto&& fn) {
    if (progress) progress(std::string("stage ") + name);
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(name) + ": " + e.what());
    }
  };

  ReproResult result;
  PhantomSpec spec = config.phantoms;
  spec.seed = config.train.seed;
  const Dataset raw = stage("generate", [&] { return generate_phantoms(spec); });
  result.data = stage("preprocess", [&] { return preprocess_dataset(raw, config.target); });
  const ModelConfig dil = stage("model", [&] {
    RunConfig c = config;
    c.variant = Variant::Dilated;
    return c.model_config(result.data.height, result.data.width, result.data.channels);
  });
  ModelConfig base = dil;
  base.variant = Variant::Baseline;

  result.dilated = stage("cross-validate dilated",
                         [&] { return cross_validate(result.data, dil, config.train, threads, progress); });
  result.baseline = stage("cross-validate baseline",
                          [&] { return cross_validate(result.data, base, config.train, threads, progress); });

  std::vector<FoldReport> ra, rb;
  for (const auto& f : result.baseline) ra.push_back(f.report);
  for (const auto& f : result.dilated) rb.push_back(f.report);
  result.comparison = stage("stats", [&] { return compare_models(ra, rb); });
  result.params = param_count(dil);

  stage("write", [&] {
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);
    auto emit = [&](const char* name, const std::string& text) {
      write_file_atomic(dir / name, text);
      result.files.push_back(dir / name);
    };
    emit("folds_dilated.csv", fold_reports_csv(rb));
    emit("folds_baseline.csv", fold_reports_csv(ra));
    emit("images_dilated.csv", image_dice_csv(fold_image_rows(result.data, result.dilated)));
    emit("images_baseline.csv", image_dice_csv(fold_image_rows(result.data, result.baseline)));
    emit("history_dilated.csv", fold_histories_csv(result.dilated));
    emit("history_baseline.csv", fold_histories_csv(result.baseline));
    emit("comparison.csv", comparison_csv(result.comparison));
    emit("paramcount.csv", paramcount_table(dil));
    return 0;
  });
  return result;
}

}  // namespace diunet
