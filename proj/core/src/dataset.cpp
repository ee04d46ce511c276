#include "dgp/dataset.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dgp/errors.hpp"

namespace dgp {
namespace {

struct RawCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

RawCsv read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  RawCsv csv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (csv.header.empty()) {
      csv.header = split(line);
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != csv.header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(line_no) +
                      " has " + std::to_string(cells.size()) + " cells, expected " +
                      std::to_string(csv.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const char* begin = cells[c].c_str();
      char* end = nullptr;
      errno = 0;
      row[c] = std::strtod(begin, &end);
      if (cells[c].empty() || end != begin + cells[c].size() || errno == ERANGE ||
          !std::isfinite(row[c])) {
        throw DataError(path.string() + ": non-numeric cell '" + cells[c] +
                        "' at row " + std::to_string(line_no) + ", column '" +
                        csv.header[c] + "'");
      }
    }
    csv.rows.push_back(std::move(row));
  }
  if (csv.header.empty()) throw DataError(path.string() + ": missing header row");
  if (csv.rows.empty()) throw DataError(path.string() + ": empty dataset");
  return csv;
}

std::size_t column_index(const RawCsv& csv, const std::string& name,
                         const std::filesystem::path& path) {
  auto it = std::find(csv.header.begin(), csv.header.end(), name);
  if (it == csv.header.end()) {
    throw DataError(path.string() + ": no column named '" + name + "'");
  }
  return static_cast<std::size_t>(it - csv.header.begin());
}

Tensor gather_columns(const RawCsv& csv, const std::vector<std::size_t>& cols) {
  Tensor t(Shape{csv.rows.size(), cols.size()});
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) t(r, c) = csv.rows[r][cols[c]];
  }
  return t;
}

}  // namespace

ColumnStats compute_stats(const Tensor& m) {
  ColumnStats stats;
  const std::size_t n = m.rows();
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += m(r, c);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) ss += (m(r, c) - mean) * (m(r, c) - mean);
    double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) sd = 1.0;
    stats.mean.push_back(mean);
    stats.std.push_back(sd);
  }
  return stats;
}

Tensor standardise(const Tensor& m, const ColumnStats& stats) {
  if (stats.mean.size() != m.cols()) {
    throw ShapeError("standardise: statistics for " +
                     std::to_string(stats.mean.size()) + " columns, data has " +
                     std::to_string(m.cols()));
  }
  Tensor out(m.shape());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out(r, c) = (m(r, c) - stats.mean[c]) / stats.std[c];
    }
  }
  return out;
}

Tensor unstandardise(const Tensor& m, const ColumnStats& stats) {
  Tensor out(m.shape());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      out(r, c) = m(r, c) * stats.std[c] + stats.mean[c];
    }
  }
  return out;
}

Tensor unstandardise_variance(const Tensor& v, const ColumnStats& stats) {
  Tensor out(v.shape());
  for (std::size_t r = 0; r < v.rows(); ++r) {
    for (std::size_t c = 0; c < v.cols(); ++c) {
      out(r, c) = v(r, c) * stats.std[c] * stats.std[c];
    }
  }
  return out;
}

Tensor Dataset::raw_targets() const {
  return y_stats ? unstandardise(y, *y_stats) : y;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out = *this;
  out.x = Tensor(Shape{rows.size(), x.cols()});
  out.y = Tensor(Shape{rows.size(), y.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) out.x(i, c) = x(rows[i], c);
    for (std::size_t c = 0; c < y.cols(); ++c) out.y(i, c) = y(rows[i], c);
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path,
                 std::span<const std::string> target_columns, bool normalise) {
  const RawCsv csv = read_csv(path);
  if (target_columns.empty()) throw DataError("no target columns given");
  std::vector<std::size_t> target_idx;
  for (const auto& name : target_columns) {
    target_idx.push_back(column_index(csv, name, path));
  }
  std::vector<std::size_t> feature_idx;
  Dataset data;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (std::find(target_idx.begin(), target_idx.end(), c) == target_idx.end()) {
      feature_idx.push_back(c);
      data.feature_names.push_back(csv.header[c]);
    }
  }
  if (feature_idx.empty()) throw DataError(path.string() + ": no feature columns");
  data.target_names.assign(target_columns.begin(), target_columns.end());
  data.x = gather_columns(csv, feature_idx);
  data.y = gather_columns(csv, target_idx);
  if (normalise) {
    data.x_stats = compute_stats(data.x);
    data.y_stats = compute_stats(data.y);
    data.x = standardise(data.x, *data.x_stats);
    data.y = standardise(data.y, *data.y_stats);
  }
  return data;
}

Dataset load_csv_with_schema(const std::filesystem::path& path,
                             std::span<const std::string> feature_names,
                             std::span<const std::string> target_names,
                             const std::optional<ColumnStats>& x_stats,
                             const std::optional<ColumnStats>& y_stats) {
  const RawCsv csv = read_csv(path);
  Dataset data;
  std::vector<std::size_t> feature_idx;
  for (const auto& name : feature_names) {
    feature_idx.push_back(column_index(csv, name, path));
  }
  data.feature_names.assign(feature_names.begin(), feature_names.end());
  data.x = gather_columns(csv, feature_idx);
  if (x_stats) data.x = standardise(data.x, *x_stats);
  data.x_stats = x_stats;

  const bool has_targets =
      !target_names.empty() &&
      std::all_of(target_names.begin(), target_names.end(), [&](const auto& n) {
        return std::find(csv.header.begin(), csv.header.end(), n) != csv.header.end();
      });
  data.target_names.assign(target_names.begin(), target_names.end());
  data.y_stats = y_stats;
  if (has_targets) {
    std::vector<std::size_t> target_idx;
    for (const auto& name : target_names) {
      target_idx.push_back(column_index(csv, name, path));
    }
    data.y = gather_columns(csv, target_idx);
    if (y_stats) data.y = standardise(data.y, *y_stats);
  } else {
    data.y = Tensor(Shape{csv.rows.size(), 0});
  }
  return data;
}

void write_file_atomically(const std::filesystem::path& path,
                           const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw DataError("failed writing '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dgp
