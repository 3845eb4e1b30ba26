#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "diunet/dataset.hpp"
#include "diunet/model.hpp"
#include "diunet/run_config.hpp"
#include "diunet/stats.hpp"
#include "diunet/train.hpp"

namespace diunet {

// CSV writers: header row, ',' separator, '.' decimal point, shortest
// round-trip number formatting, '\n' line endings.

/// epoch,train_loss,dice_label1,dice_label2,dice_label4,lr
std::string history_csv(std::span<const EpochRecord> history);
/// fold,epoch,train_loss,dice_label1,dice_label2,dice_label4,lr
std::string fold_histories_csv(std::span<const FoldResult> folds);
/// fold,images,wt_dice,tc_dice,et_dice
std::string fold_reports_csv(std::span<const FoldReport> reports);
std::vector<FoldReport> parse_fold_reports_csv(const std::string& text);
/// sample_id,fold,wt_dice,tc_dice,et_dice (fold is -1 outside cross-validation)
struct ImageDiceRow {
  std::string sample_id;
  int fold = -1;
  SubRegionDice dice;
};
std::string image_dice_csv(std::span<const ImageDiceRow> rows);
std::vector<ImageDiceRow> fold_image_rows(const Dataset& data, std::span<const FoldResult> folds);
/// region,median_a,median_b,mean_a,mean_b,shapiro_w_a,shapiro_p_a,
/// shapiro_w_b,shapiro_p_b,normal_a,normal_b,test,statistic,p_value,significant
std::string comparison_csv(std::span<const ComparisonRow> rows);
std::string comparison_summary(std::span<const ComparisonRow> rows, const std::string& name_a,
                               const std::string& name_b);

struct ParamCount {
  std::size_t dilated = 0;
  std::size_t baseline = 0;
  /// 100 * (1 - dilated / baseline)
  double reduction_percent() const;
};
ParamCount param_count(ModelConfig config);
/// variant,parameters rows plus the reduction line, for printing.
std::string paramcount_table(const ModelConfig& config);

/// Maps sample indices to (B, N, M, 3) probabilities.
using Predictor = std::function<Tensor<float>(std::span<const std::size_t> ids)>;

struct SegmentSummary {
  std::vector<ImageDiceRow> rows;
  std::size_t masks_written = 0;
};

/// Writes `<id>_wt.pgm`, `<id>_tc.pgm` and `<id>_et.pgm` (0/255) for every
/// sample plus `dice.csv`, each file atomically.
SegmentSummary segment(const Dataset& data, const Predictor& predict,
                       const std::filesystem::path& out_dir, double threshold = kDefaultThreshold);

struct ReproResult {
  Dataset data;  // preprocessed
  std::vector<FoldResult> dilated;
  std::vector<FoldResult> baseline;
  std::vector<ComparisonRow> comparison;
  ParamCount params;
  std::vector<std::filesystem::path> files;
};

/// generate -> preprocess -> k-fold cross-validation of both variants ->
/// statistical comparison; writes every CSV into config.output_dir. The
/// result depends only on the config (seed included), not on `threads`.
ReproResult run_repro(const RunConfig& config, unsigned threads,
                      const ProgressFn& progress = {});

}  // namespace diunet
