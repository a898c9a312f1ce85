#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "corrimpact/error.hpp"

namespace corrimpact {

struct MetricColumn {
  std::string name;
  std::vector<double> values;
};

struct DatasetSummary {
  std::size_t n_modules = 0;
  std::size_t n_metrics = 0;
  std::size_t n_defective = 0;
  double defect_ratio = 0.0;
  double epv = 0.0;  // events per variable
};

/// A table of software metrics with a binary defect label (1 = defective).
///
/// Validated on construction and immutable afterwards. Column order is kept
/// exactly as given because metric ordering is an experimental variable.
class Dataset {
 public:
  Dataset(std::string name, std::vector<MetricColumn> metrics, std::vector<std::uint8_t> label)
      : name_(std::move(name)), metrics_(std::move(metrics)), label_(std::move(label)) {
    validate();
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t n_rows() const noexcept { return label_.size(); }
  std::size_t n_metrics() const noexcept { return metrics_.size(); }
  std::span<const MetricColumn> metrics() const noexcept { return metrics_; }
  std::span<const std::uint8_t> label() const noexcept { return label_; }

  std::vector<std::string> metric_names() const {
    std::vector<std::string> names;
    names.reserve(metrics_.size());
    for (const auto& m : metrics_) names.push_back(m.name);
    return names;
  }

  std::optional<std::size_t> index_of(std::string_view metric) const {
    if (auto it = index_.find(std::string(metric)); it != index_.end()) return it->second;
    return std::nullopt;
  }

  const MetricColumn& metric(std::string_view name) const {
    if (auto i = index_of(name)) return metrics_[*i];
    throw data_error("unknown metric '" + std::string(name) + "' in dataset '" + name_ + "'");
  }

  // Columns restricted to `names`, in the order given.
  Dataset select(std::span<const std::string> names) const {
    std::vector<MetricColumn> cols;
    cols.reserve(names.size());
    for (const auto& n : names) cols.push_back(metric(n));
    return Dataset(name_, std::move(cols), label_);
  }

  // Rows picked by index (repetition allowed, as in bootstrap samples).
  Dataset rows(std::span<const std::size_t> idx) const {
    std::vector<MetricColumn> cols;
    cols.reserve(metrics_.size());
    for (const auto& m : metrics_) {
      MetricColumn c{m.name, {}};
      c.values.reserve(idx.size());
      for (auto i : idx) c.values.push_back(m.values.at(i));
      cols.push_back(std::move(c));
    }
    std::vector<std::uint8_t> lab;
    lab.reserve(idx.size());
    for (auto i : idx) lab.push_back(label_.at(i));
    return Dataset(name_, std::move(cols), std::move(lab));
  }

  Dataset renamed(std::string name) const { return Dataset(std::move(name), metrics_, label_); }

  bool operator==(const Dataset& other) const {
    if (name_ != other.name_ || label_ != other.label_ || metrics_.size() != other.metrics_.size()) return false;
    for (std::size_t j = 0; j < metrics_.size(); ++j) {
      if (metrics_[j].name != other.metrics_[j].name || metrics_[j].values != other.metrics_[j].values) return false;
    }
    return true;
  }

 private:
  void validate() {
    const std::size_t n = label_.size();
    std::size_t ones = 0;
    for (auto y : label_) {
      if (y > 1) throw data_error("label values must be 0 or 1");
      ones += y;
    }
    if (ones == 0 || ones == n) throw data_error("single-class label: dataset '" + name_ + "' needs both defective and clean rows");
    for (std::size_t j = 0; j < metrics_.size(); ++j) {
      const auto& m = metrics_[j];
      if (m.name.empty()) throw data_error("metric at column " + std::to_string(j) + " has an empty name");
      if (m.values.size() != n) {
        throw data_error("metric '" + m.name + "' has " + std::to_string(m.values.size()) + " values, expected " +
                         std::to_string(n));
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(m.values[i])) {
          throw data_error("metric '" + m.name + "' has a non-finite value at row " + std::to_string(i));
        }
      }
      if (!index_.emplace(m.name, j).second) throw data_error("duplicate metric name '" + m.name + "'");
    }
  }

  std::string name_;
  std::vector<MetricColumn> metrics_;
  std::vector<std::uint8_t> label_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline DatasetSummary summarize(const Dataset& d) {
  DatasetSummary s;
  s.n_modules = d.n_rows();
  s.n_metrics = d.n_metrics();
  for (auto y : d.label()) s.n_defective += y;
  s.defect_ratio = static_cast<double>(s.n_defective) / static_cast<double>(s.n_modules);
  s.epv = s.n_metrics == 0 ? 0.0 : static_cast<double>(s.n_defective) / static_cast<double>(s.n_metrics);
  return s;
}

inline const std::set<std::string>& default_positive_labels() {
  static const std::set<std::string> labels{"1", "true", "TRUE", "yes", "buggy"};
  return labels;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string_view unquote(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses a comma-separated table whose first row is the header. Every column
/// other than `label_column` must be numeric; the label cell maps to 1 iff its
/// text is in `positive_labels`.
inline Dataset read_csv(std::istream& in, std::string name, const std::string& label_column,
                        const std::set<std::string>& positive_labels = default_positive_labels()) {
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty CSV: no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // UTF-8 BOM
  const auto header = detail::split_commas(line);
  std::vector<std::string> names;
  names.reserve(header.size());
  for (auto h : header) names.emplace_back(detail::unquote(h));

  std::optional<std::size_t> label_idx;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (names[j] == label_column) {
      if (label_idx) throw data_error("label column '" + label_column + "' appears more than once");
      label_idx = j;
    }
  }
  if (!label_idx) throw data_error("missing label column '" + label_column + "'");

  std::vector<MetricColumn> cols;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (j != *label_idx) cols.push_back({names[j], {}});
  }
  std::vector<std::uint8_t> label;

  std::size_t row = 0;  // data row, 1-based in messages
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_commas(line);
    if (cells.size() != names.size()) {
      throw data_error("row " + std::to_string(row) + ": expected " + std::to_string(names.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    std::size_t c = 0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j == *label_idx) {
        label.push_back(positive_labels.contains(std::string(detail::unquote(cells[j]))) ? 1 : 0);
        continue;
      }
      auto v = detail::parse_double(cells[j]);
      if (!v) {
        const auto cell = detail::trim(cells[j]);
        const std::string where = "row " + std::to_string(row) + ", column '" + names[j] + "': ";
        if (cell.empty() || cell == "NA") throw data_error(where + "missing value; datasets must be complete");
        throw data_error(where + "non-numeric value '" + std::string(cell) + "'");
      }
      cols[c++].values.push_back(*v);
    }
  }
  if (row == 0) throw data_error("CSV has a header but no data rows");
  return Dataset(std::move(name), std::move(cols), std::move(label));
}

inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        const std::set<std::string>& positive_labels = default_positive_labels()) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path + "'");
  std::string stem = path;
  if (auto slash = stem.find_last_of("/\\"); slash != std::string::npos) stem = stem.substr(slash + 1);
  if (auto dot = stem.rfind('.'); dot != std::string::npos && dot > 0) stem = stem.substr(0, dot);
  return read_csv(in, stem, label_column, positive_labels);
}

inline void write_csv(std::ostream& out, const Dataset& d, const std::string& label_column = "bug") {
  for (const auto& m : d.metrics()) out << m.name << ',';
  out << label_column << '\n';
  const auto label = d.label();
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    for (const auto& m : d.metrics()) out << detail::format_double(m.values[i]) << ',';
    out << static_cast<int>(label[i]) << '\n';
  }
}

}  // namespace corrimpact
