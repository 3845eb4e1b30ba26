#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "diunet/metrics.hpp"
#include "diunet/tensor.hpp"

namespace diunet {

enum class Grade : std::uint8_t { HGG = 0, LGG = 1 };

struct SampleMeta {
  std::string patient_id;
  std::uint32_t slice_index = 0;
  Grade grade = Grade::HGG;

  bool operator==(const SampleMeta&) const = default;
};

/// One 2-D slice: (N, M, D) image with modalities ordered T2, T1, T1C,
/// FLAIR, and the (N, M) intra-tumoral label map.
struct SegmentationSample {
  Tensor<float> image;
  LabelMap labels;
  SampleMeta meta;

  bool operator==(const SegmentationSample&) const = default;
};

struct Dataset {
  std::size_t height = 0;    // N
  std::size_t width = 0;     // M
  std::size_t channels = 0;  // D
  std::vector<SegmentationSample> samples;

  /// Throws if any sample disagrees with the header extents.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

inline constexpr std::uint16_t kDatasetFormatVersion = 1;

/// Container layout, all little-endian:
///   "DIUD" u16 version, u32 count, u32 N, u32 M, u32 D
///   per sample: f32[N*M*D] image, u8[N*M] labels,
///               u32 id length + id bytes, u32 slice index, u8 grade
std::vector<std::uint8_t> encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

/// Synthetic multi-modal slice generator: a brain ellipse on a zero
/// background containing three concentric, co-rotated tumour ellipses
/// (edema label 2 outside, necrotic core label 1, enhancing label 4 inside).
struct PhantomSpec {
  std::size_t size = 64;
  std::size_t count = 200;
  std::uint64_t seed = 42;
  double noise = 0.05;  // std-dev as a fraction of the [0, 1] intensity range
  double edema_axis_min = 0.16;  // semi-axis range as a fraction of `size`
  double edema_axis_max = 0.23;
  double core_scale = 0.7;       // core axes relative to edema
  double enhancing_scale = 0.6;  // enhancing axes relative to core
  double lgg_fraction = 75.0 / 285.0;
};

struct Ellipse {
  double cy = 0, cx = 0;  // centre (row, column)
  double ry = 1, rx = 1;  // semi-axes
  double angle = 0;       // radians

  bool contains(double y, double x) const;
  double area() const;
};

struct PhantomGeometry {
  Ellipse brain;
  Ellipse edema;
  Ellipse core;
  Ellipse enhancing;
  Grade grade = Grade::HGG;
  std::array<double, 4> gain{1, 1, 1, 1};
};

/// Geometry of sample `index`; depends only on (spec.seed, index).
PhantomGeometry phantom_geometry(const PhantomSpec& spec, std::size_t index);
SegmentationSample render_phantom(const PhantomSpec& spec, std::size_t index);
Dataset generate_phantoms(const PhantomSpec& spec);

/// Mean intensity of each tissue class per modality (T2, T1, T1C, FLAIR).
/// Rows: healthy tissue, edema, necrotic core, enhancing.
extern const double kPhantomIntensity[4][4];

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle of [0, n) cut into k contiguous subsets whose sizes differ
/// by at most one (the first n % k are larger). Fold i validates on subset i
/// and trains on the rest; both id lists are sorted.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// Stateless 64-bit mixer used to derive independent RNG streams.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace diunet
