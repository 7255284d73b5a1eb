#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pcorrupt/error.hpp"
#include "pcorrupt/model.hpp"
#include "pcorrupt/rng.hpp"

namespace pcorrupt {

enum class DatasetKind { two_moons, spiral, xor_blobs, idx_pair, csv };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::two_moons: return "two-moons";
    case DatasetKind::spiral: return "spiral";
    case DatasetKind::xor_blobs: return "xor";
    case DatasetKind::idx_pair: return "idx-pair";
    case DatasetKind::csv: return "csv";
  }
  return "csv";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "two-moons" || s == "synthetic:two-moons") return DatasetKind::two_moons;
  if (s == "spiral" || s == "synthetic:spiral") return DatasetKind::spiral;
  if (s == "xor" || s == "synthetic:xor") return DatasetKind::xor_blobs;
  if (s == "idx-pair" || s == "idx") return DatasetKind::idx_pair;
  if (s == "csv") return DatasetKind::csv;
  throw ValidationError("unknown dataset kind '" + std::string(s) + "'");
}

// idx-pair: paths = {images, labels}. csv: paths = {file}.
// `points` and `noise` apply to the synthetic kinds only.
struct DatasetSource {
  DatasetKind kind = DatasetKind::two_moons;
  std::vector<std::string> paths;
  std::uint64_t seed = 0;
  double split_fraction = 0.8;
  std::size_t points = 1000;
  double noise = 0.1;

  void validate() const {
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ValidationError("split_fraction must lie in (0, 1)");
    if (kind == DatasetKind::idx_pair && paths.size() != 2)
      throw ValidationError("idx-pair needs an images path and a labels path");
    if (kind == DatasetKind::csv && paths.size() != 1) throw ValidationError("csv needs exactly one path");
    if ((kind == DatasetKind::two_moons || kind == DatasetKind::spiral || kind == DatasetKind::xor_blobs) &&
        points < 2)
      throw ValidationError("synthetic datasets need at least 2 points");
    if (!(noise >= 0.0)) throw ValidationError("noise must be >= 0");
  }
};

template <class Real>
struct Dataset {
  Batch<Real> train;
  Batch<Real> eval;
};

namespace detail {

template <class Real>
Batch<Real> labelled_batch(const std::vector<double>& xs, std::size_t width, std::vector<int> labels) {
  Batch<Real> b;
  std::vector<Real> v(xs.begin(), xs.end());
  b.inputs = Tensor<Real>({labels.size(), width}, std::move(v));
  b.labels = std::move(labels);
  return b;
}

}  // namespace detail

// Synthetic generators. Point i belongs to class i % 2 and draws its
// coordinates from CounterRng(seed) in index order, then adds N(0, noise^2)
// to every coordinate.
//   two-moons: t ~ U(0, pi); class 0 at (cos t, sin t),
//              class 1 at (1 - cos t, 1/2 - sin t)
//   spiral:    t ~ U(0, 1); r = t, theta = 2 pi t + pi * class,
//              point (r cos theta, r sin theta)
//   xor:       (x, y) ~ U(-1, 1)^2, class = [x * y < 0]
template <class Real>
Batch<Real> make_synthetic(DatasetKind kind, std::size_t points, double noise, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> xs(points * 2);
  std::vector<int> labels(points);
  for (std::size_t i = 0; i < points; ++i) {
    int label = static_cast<int>(i % 2);
    double x = 0.0, y = 0.0;
    switch (kind) {
      case DatasetKind::two_moons: {
        const double t = rng.uniform(0.0, std::numbers::pi);
        if (label == 0) {
          x = std::cos(t);
          y = std::sin(t);
        } else {
          x = 1.0 - std::cos(t);
          y = 0.5 - std::sin(t);
        }
        break;
      }
      case DatasetKind::spiral: {
        const double t = rng.uniform();
        const double theta = 2.0 * std::numbers::pi * t + std::numbers::pi * label;
        x = t * std::cos(theta);
        y = t * std::sin(theta);
        break;
      }
      case DatasetKind::xor_blobs: {
        x = rng.uniform(-1.0, 1.0);
        y = rng.uniform(-1.0, 1.0);
        label = (x * y < 0.0) ? 1 : 0;
        break;
      }
      default: throw ValidationError("not a synthetic dataset kind");
    }
    xs[2 * i] = x + noise * rng.gaussian();
    xs[2 * i + 1] = y + noise * rng.gaussian();
    labels[i] = label;
  }
  return detail::labelled_batch<Real>(xs, 2, std::move(labels));
}

// Deterministic split: a seeded permutation, first round(fraction * N) rows
// go to train.
template <class Real>
Dataset<Real> split_dataset(const Batch<Real>& all, double fraction, std::uint64_t seed) {
  const std::size_t n = all.size();
  auto order = CounterRng(seed).split(0x5eed).permutation(n);
  auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::span<const std::size_t> rows(order);
  return {select_rows(all, rows.first(n_train)), select_rows(all, rows.subspan(n_train))};
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

namespace detail {

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size()) throw FormatError(path + ": unexpected end of file at byte offset " + std::to_string(off));
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

// IDX pair: images with magic 0x00000803 (N, rows, cols, unsigned bytes) and
// labels with magic 0x00000801 (N unsigned bytes). Pixels are scaled by 1/255
// and each image is flattened to rows * cols inputs.
template <class Real>
Batch<Real> load_idx_pair(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file_bytes(images_path);
  const auto lab = read_file_bytes(labels_path);
  const auto img_magic = detail::read_be32(img, 0, images_path);
  if (img_magic != 0x00000803)
    throw FormatError(images_path + ": bad magic at byte offset 0 (expected 0x00000803)");
  const auto lab_magic = detail::read_be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801)
    throw FormatError(labels_path + ": bad magic at byte offset 0 (expected 0x00000801)");
  const std::size_t n = detail::read_be32(img, 4, images_path);
  const std::size_t rows = detail::read_be32(img, 8, images_path);
  const std::size_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n_labels = detail::read_be32(lab, 4, labels_path);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(images_path + ": zero dimension in header at byte offset 4");
  if (n_labels != n)
    throw FormatError(labels_path + ": label count " + std::to_string(n_labels) + " at byte offset 4 does not match " +
                      std::to_string(n) + " images");
  const std::size_t need = 16 + n * rows * cols;
  if (img.size() != need)
    throw FormatError(images_path + ": expected " + std::to_string(need) + " bytes, payload ends at byte offset " +
                      std::to_string(img.size()));
  if (lab.size() != 8 + n)
    throw FormatError(labels_path + ": expected " + std::to_string(8 + n) + " bytes, payload ends at byte offset " +
                      std::to_string(lab.size()));
  std::vector<double> xs(n * rows * cols);
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(img[16 + i]) / 255.0;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = lab[8 + i];
  return detail::labelled_batch<Real>(xs, rows * cols, std::move(labels));
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

// CSV with a header row; the last column is the target. If every target is a
// non-negative integer the batch is a classification batch, otherwise the
// targets form an [N, 1] regression tensor. Rows and columns in errors are
// 1-based and count the header as row 1.
template <class Real>
Batch<Real> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file, expected a header row");
  const std::size_t cols = detail::split_csv_line(line).size();
  if (cols < 2) throw FormatError(path + ": need at least one feature column and a target column");
  std::vector<double> xs, ys;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != cols)
      throw FormatError(path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " columns, header has " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      const auto cell = detail::trim(cells[c]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw FormatError(path + ": non-numeric cell '" + std::string(cell) + "' at row " + std::to_string(row) +
                          ", column " + std::to_string(c + 1));
      (c + 1 == cols ? ys : xs).push_back(v);
    }
  }
  if (ys.empty()) throw FormatError(path + ": no data rows");
  bool integral = true;
  for (double y : ys) integral = integral && y >= 0.0 && y == std::floor(y) && y < 1e9;
  if (integral) {
    std::vector<int> labels(ys.begin(), ys.end());
    return detail::labelled_batch<Real>(xs, cols - 1, std::move(labels));
  }
  Batch<Real> b;
  b.inputs = Tensor<Real>({ys.size(), cols - 1}, std::vector<Real>(xs.begin(), xs.end()));
  b.targets = Tensor<Real>({ys.size(), 1}, std::vector<Real>(ys.begin(), ys.end()));
  return b;
}

template <class Real>
Dataset<Real> load_dataset(const DatasetSource& src) {
  src.validate();
  Batch<Real> all;
  switch (src.kind) {
    case DatasetKind::idx_pair: all = load_idx_pair<Real>(src.paths[0], src.paths[1]); break;
    case DatasetKind::csv: all = load_csv<Real>(src.paths[0]); break;
    default: all = make_synthetic<Real>(src.kind, src.points, src.noise, src.seed); break;
  }
  if (all.size() < 2) throw FormatError("dataset needs at least 2 rows to split");
  return split_dataset(all, src.split_fraction, src.seed);
}

}  // namespace pcorrupt
