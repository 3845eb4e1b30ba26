#include "diunet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "diunet/io_util.hpp"
#include "diunet/layers.hpp"

namespace diunet {

const double kPhantomIntensity[4][4] = {
    // T2    T1    T1C   FLAIR
    {0.40, 0.60, 0.60, 0.35},  // healthy tissue
    {0.80, 0.45, 0.50, 0.85},  // edema (label 2)
    {0.90, 0.25, 0.30, 0.55},  // necrotic / non-enhancing core (label 1)
    {0.60, 0.50, 0.95, 0.75},  // enhancing tumour (label 4)
};

void Dataset::validate() const {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.image.shape() != Shape{height, width, channels} ||
        s.labels.shape() != Shape{height, width}) {
      throw DimensionError("sample " + std::to_string(i) + " has image " +
                           shape_string(s.image.shape()) + " and labels " +
                           shape_string(s.labels.shape()) + "; dataset is " +
                           std::to_string(height) + "x" + std::to_string(width) + "x" +
                           std::to_string(channels));
    }
  }
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  dataset.validate();
  ByteWriter w;
  w.put_magic("DIUD");
  w.put(kDatasetFormatVersion);
  w.put(static_cast<std::uint32_t>(dataset.samples.size()));
  w.put(static_cast<std::uint32_t>(dataset.height));
  w.put(static_cast<std::uint32_t>(dataset.width));
  w.put(static_cast<std::uint32_t>(dataset.channels));
  for (const auto& s : dataset.samples) {
    w.put_span(s.image.data());
    w.put_span(s.labels.data());
    w.put_string(s.meta.patient_id);
    w.put(s.meta.slice_index);
    w.put(static_cast<std::uint8_t>(s.meta.grade));
  }
  return w.bytes();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("DIUD");
  const auto version = r.get<std::uint16_t>();
  if (version != kDatasetFormatVersion) {
    throw FormatError("unsupported dataset format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Dataset d;
  d.height = r.get<std::uint32_t>();
  d.width = r.get<std::uint32_t>();
  d.channels = r.get<std::uint32_t>();
  const std::size_t pixels = d.height * d.width;
  if (count > 0 && pixels * (d.channels * 4 + 1) * count > r.remaining()) {
    throw FormatError("dataset header promises more data than the file holds");
  }
  d.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    SegmentationSample s;
    s.image = Tensor<float>(Shape{d.height, d.width, d.channels});
    r.get_span(s.image.data());
    s.labels = LabelMap(Shape{d.height, d.width});
    r.get_span(s.labels.data());
    s.meta.patient_id = r.get_string();
    s.meta.slice_index = r.get<std::uint32_t>();
    const auto grade = r.get<std::uint8_t>();
    if (grade > 1) throw FormatError("invalid grade byte " + std::to_string(grade));
    s.meta.grade = static_cast<Grade>(grade);
    d.samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last sample");
  return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file_atomic(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_dataset(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

bool Ellipse::contains(double y, double x) const {
  const double dy = y - cy;
  const double dx = x - cx;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double u = dy * c + dx * s;
  const double v = -dy * s + dx * c;
  return (u * u) / (ry * ry) + (v * v) / (rx * rx) <= 1.0;
}

double Ellipse::area() const { return std::numbers::pi * ry * rx; }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

Ellipse scaled(const Ellipse& e, double factor) {
  Ellipse out = e;
  out.ry *= factor;
  out.rx *= factor;
  return out;
}

bool ellipse_inside(const Ellipse& inner, const Ellipse& outer) {
  constexpr int kProbes = 48;
  const double c = std::cos(inner.angle);
  const double s = std::sin(inner.angle);
  for (int i = 0; i < kProbes; ++i) {
    const double t = 2.0 * std::numbers::pi * i / kProbes;
    const double u = inner.ry * 1.1 * std::cos(t);
    const double v = inner.rx * 1.1 * std::sin(t);
    const double y = inner.cy + u * c - v * s;
    const double x = inner.cx + u * s + v * c;
    if (!outer.contains(y, x)) return false;
  }
  return true;
}

}  // namespace

PhantomGeometry phantom_geometry(const PhantomSpec& spec, std::size_t index) {
  if (spec.size < 8) throw std::invalid_argument("phantom size must be at least 8");
  Rng rng(mix_seed(spec.seed, index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double n = static_cast<double>(spec.size);

  PhantomGeometry g;
  g.brain.cy = n / 2 + uniform(-0.05, 0.05) * n;
  g.brain.cx = n / 2 + uniform(-0.05, 0.05) * n;
  g.brain.ry = uniform(0.36, 0.44) * n;
  g.brain.rx = uniform(0.30, 0.40) * n;
  g.brain.angle = uniform(-0.3, 0.3);

  g.grade = unit(rng) < spec.lgg_fraction ? Grade::LGG : Grade::HGG;
  for (double& gain : g.gain) gain = uniform(0.9, 1.1);

  const double axis_lo = spec.edema_axis_min * n;
  const double axis_hi = spec.edema_axis_max * n;
  Ellipse edema;
  for (int attempt = 0;; ++attempt) {
    edema.ry = uniform(axis_lo, axis_hi);
    edema.rx = uniform(axis_lo, axis_hi);
    edema.angle = uniform(0.0, std::numbers::pi);
    edema.cy = g.brain.cy + uniform(-0.5, 0.5) * g.brain.ry;
    edema.cx = g.brain.cx + uniform(-0.5, 0.5) * g.brain.rx;
    if (ellipse_inside(edema, g.brain)) break;
    if (attempt > 200) {
      edema.cy = g.brain.cy;
      edema.cx = g.brain.cx;
      edema.ry = edema.rx = 0.5 * std::min(g.brain.ry, g.brain.rx);
      break;
    }
  }
  g.edema = edema;
  g.core = scaled(edema, spec.core_scale);
  const double enh = g.grade == Grade::LGG ? 0.85 * spec.enhancing_scale : spec.enhancing_scale;
  g.enhancing = scaled(g.core, enh);
  return g;
}

SegmentationSample render_phantom(const PhantomSpec& spec, std::size_t index) {
  const PhantomGeometry g = phantom_geometry(spec, index);
  const std::size_t n = spec.size;
  Rng rng(mix_seed(spec.seed ^ 0x5bd1e995ULL, index));
  std::normal_distribution<double> noise(0.0, spec.noise);

  SegmentationSample s;
  s.image = Tensor<float>(Shape{n, n, 4});
  s.labels = LabelMap(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double y = static_cast<double>(i) + 0.5;
      const double x = static_cast<double>(j) + 0.5;
      if (!g.brain.contains(y, x)) continue;
      int tissue = 0;
      std::uint8_t label = 0;
      if (g.enhancing.contains(y, x)) {
        tissue = 3;
        label = 4;
      } else if (g.core.contains(y, x)) {
        tissue = 2;
        label = 1;
      } else if (g.edema.contains(y, x)) {
        tissue = 1;
        label = 2;
      }
      s.labels.at(i, j) = label;
      for (std::size_t m = 0; m < 4; ++m) {
        const double v = kPhantomIntensity[tissue][m] * g.gain[m] + noise(rng);
        s.image.at(i, j, m) = static_cast<float>(std::max(v, 0.01));
      }
    }
  }
  s.meta.patient_id = "phantom-" + std::to_string(index);
  s.meta.slice_index = static_cast<std::uint32_t>(index);
  s.meta.grade = g.grade;
  return s;
}

Dataset generate_phantoms(const PhantomSpec& spec) {
  Dataset d;
  d.height = d.width = spec.size;
  d.channels = 4;
  d.samples.resize(spec.count);
  parallel_for(spec.count, worker_count(),
               [&](std::size_t i) { d.samples[i] = render_phantom(spec, i); });
  return d;
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("k-fold split needs k >= 2");
  if (n < k) {
    throw std::invalid_argument("cannot split " + std::to_string(n) + " samples into " +
                                std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x6b666f6c64ULL));
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Fold> folds(k);
  std::size_t begin = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n / k + (f < n % k ? 1 : 0);
    folds[f].validation.assign(order.begin() + static_cast<long>(begin),
                               order.begin() + static_cast<long>(begin + len));
    begin += len;
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    for (std::size_t g = 0; g < k; ++g) {
      if (g == f) continue;
      folds[f].train.insert(folds[f].train.end(), folds[g].validation.begin(),
                            folds[g].validation.end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

}  // namespace diunet
