#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "diunet/io_util.hpp"
#include "diunet/pipeline.hpp"
#include "diunet/preprocess.hpp"
#include "diunet/run_config.hpp"

using namespace diunet;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

Dataset small_data() {
  PhantomSpec s;
  s.count = 5;
  s.size = 24;
  return generate_phantoms(s);
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.depth = 2;
  c.base_filters = 2;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.train.folds = 3;
  c.phantoms.count = 12;
  c.phantoms.size = 24;
  c.target = 16;
  c.output_dir = out;
  return c;
}

}  // namespace

TEST(Segment, OraclePredictorScoresOne) {
  const Dataset d = small_data();
  const Predictor oracle = [&](std::span<const std::size_t> ids) {
    const std::vector<std::size_t> v(ids.begin(), ids.end());
    Tensor<float> out(Shape{ids.size(), d.height, d.width, 3});
    const std::size_t per = d.height * d.width * 3;
    for (std::size_t b = 0; b < v.size(); ++b) {
      const auto t = structure_targets<float>(d.samples[v[b]].labels);
      std::copy(t.raw(), t.raw() + per, out.raw() + b * per);
    }
    return out;
  };
  const auto dir = fresh_dir("diunet_segment_test");
  const auto summary = segment(d, oracle, dir);
  EXPECT_EQ(summary.masks_written, 15u);
  ASSERT_EQ(summary.rows.size(), 5u);
  for (const auto& r : summary.rows) {
    EXPECT_NEAR(r.dice.wt, 1.0, 1e-9);
    EXPECT_NEAR(r.dice.tc, 1.0, 1e-9);
    EXPECT_NEAR(r.dice.et, 1.0, 1e-9);
    EXPECT_EQ(r.fold, -1);
  }
  const auto pgm = read_file(dir / "phantom-0_wt.pgm");
  const std::string header = "P5\n24 24\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 24 * 24);
  std::size_t on = 0;
  for (std::size_t i = header.size(); i < pgm.size(); ++i) {
    EXPECT_TRUE(pgm[i] == 0 || pgm[i] == 255);
    on += pgm[i] == 255;
  }
  EXPECT_GT(on, 0u);
  std::istringstream csv(slurp(dir / "dice.csv"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(csv, line)) ++lines;
  EXPECT_EQ(lines, 6u);
  fs::remove_all(dir);
}

TEST(Segment, RejectsWrongPredictorShape) {
  const Dataset d = small_data();
  const Predictor bad = [&](std::span<const std::size_t> ids) {
    return Tensor<float>(Shape{ids.size(), d.height, d.width, 2});
  };
  EXPECT_THROW(segment(d, bad, fresh_dir("diunet_segment_bad")), DimensionError);
}

TEST(ParamCountReport, DilatedSmaller) {
  const auto pc = param_count(ModelConfig::paper_scale());
  EXPECT_LT(pc.dilated, pc.baseline);
  EXPECT_NEAR(pc.reduction_percent(), 100.0 * (1.0 - double(pc.dilated) / pc.baseline), 1e-12);
  const auto table = paramcount_table(ModelConfig::desk_scale());
  EXPECT_NE(table.find("dilated"), std::string::npos);
  EXPECT_NE(table.find("baseline"), std::string::npos);
}

TEST(Repro, TinyRunIsDeterministic) {
  const auto a = fresh_dir("diunet_repro_a"), b = fresh_dir("diunet_repro_b");
  const auto ra = run_repro(tiny_run(a), 1);
  const auto rb = run_repro(tiny_run(b), 2);
  ASSERT_EQ(ra.comparison.size(), 3u);
  ASSERT_EQ(ra.dilated.size(), 3u);
  ASSERT_FALSE(ra.files.empty());
  for (const auto& f : ra.files) {
    const auto name = f.filename();
    ASSERT_TRUE(fs::exists(b / name)) << name;
    EXPECT_EQ(slurp(f), slurp(b / name)) << name;
  }
  const auto reports = parse_fold_reports_csv(slurp(a / "folds_dilated.csv"));
  ASSERT_EQ(reports.size(), 3u);
  for (std::size_t f = 0; f < 3; ++f) EXPECT_EQ(reports[f].images, ra.dilated[f].report.images);
  (void)rb;
  fs::remove_all(a);
  fs::remove_all(b);
}
