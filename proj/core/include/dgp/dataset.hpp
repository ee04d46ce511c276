#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgp/tensor.hpp"

namespace dgp {

/// Per-column standardisation statistics.
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Column means and standard deviations; a zero std is clamped to 1 so that
/// constant columns map to 0.
ColumnStats compute_stats(const Tensor& m);
Tensor standardise(const Tensor& m, const ColumnStats& stats);
Tensor unstandardise(const Tensor& m, const ColumnStats& stats);
/// Variances in standardised units back to original units.
Tensor unstandardise_variance(const Tensor& v, const ColumnStats& stats);

struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<std::string> target_names;
  Tensor x;  // N x D, standardised when x_stats is set
  Tensor y;  // N x P, standardised when y_stats is set
  std::optional<ColumnStats> x_stats;
  std::optional<ColumnStats> y_stats;

  std::size_t size() const noexcept { return x.rows(); }
  std::size_t input_dim() const noexcept { return x.cols(); }
  std::size_t output_dim() const noexcept { return y.cols(); }

  /// Targets in original units.
  Tensor raw_targets() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Reads a headed CSV of numeric cells. Columns named in `target_columns`
/// become Y, all others X. With `normalise`, X and Y are standardised and
/// their statistics kept for de-normalising predictions.
Dataset load_csv(const std::filesystem::path& path,
                 std::span<const std::string> target_columns, bool normalise);

/// Reads a CSV against a known schema: the feature columns are required, the
/// target columns are optional (Y is N x 0 when any is missing), and the given
/// statistics are applied instead of being recomputed.
Dataset load_csv_with_schema(const std::filesystem::path& path,
                             std::span<const std::string> feature_names,
                             std::span<const std::string> target_names,
                             const std::optional<ColumnStats>& x_stats,
                             const std::optional<ColumnStats>& y_stats);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomically(const std::filesystem::path& path,
                           const std::string& text);

}  // namespace dgp
