#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corrimpact/dataset.hpp"
#include "corrimpact/error.hpp"

// Plot-ready views of reports: tidy CSV files plus a small static SVG each.
namespace corrimpact {

namespace plot_detail {

using ojson = nlohmann::ordered_json;

inline std::string fmt(double x) { return std::isfinite(x) ? detail::format_double(x) : std::string(); }

inline std::string value_csv(const ojson& v) { return v.is_number() ? fmt(v.get<double>()) : std::string(); }

inline std::string safe_name(std::string s) {
  for (auto& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return s;
}

inline std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#17becf"};
  return colors[i % 9];
}

class Svg {
 public:
  Svg(double w, double h) : w_(w), h_(h) {}
  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0) {
    s_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\"" << color
       << "\" stroke-width=\"" << width << "\"/>\n";
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    s_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\"" << fill
       << "\" stroke=\"#ffffff\"/>\n";
  }
  void circle(double x, double y, double r, const std::string& fill) {
    s_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << fill << "\" fill-opacity=\"0.5\"/>\n";
  }
  void text(double x, double y, const std::string& t, const char* anchor = "start", int size = 11) {
    s_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"" << size
       << "\" text-anchor=\"" << anchor << "\">" << esc(t) << "</text>\n";
  }
  std::string str() const {
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\" viewBox=\"0 0 " << w_
      << ' ' << h_ << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
      << s_.str() << "</svg>\n";
    return o.str();
  }

 private:
  double w_, h_;
  std::ostringstream s_;
};

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write '" + p.string() + "'");
  out << s;
}

// Line chart of y against x, one series per name.
inline std::string line_chart(const std::string& title, const std::vector<std::string>& names,
                              const std::vector<std::vector<std::pair<double, double>>>& series, const std::string& ylabel) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 0;
  for (const auto& s : series)
    for (auto [x, y] : s) {
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (y1 - y0 < 1e-12) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  Svg svg(W, H);
  svg.text(W / 2, 20, title, "middle", 13);
  svg.line(L, py(0), W - R, py(0), "#999999");
  svg.line(L, T, L, H - B, "#000000");
  svg.text(L - 6, py(y1) + 4, fmt(y1), "end");
  svg.text(L - 6, py(y0) + 4, fmt(y0), "end");
  for (double x = x0; x <= x1 + 1e-9; x += 1.0) svg.text(px(x), H - B + 16, fmt(x), "middle");
  svg.text(W / 2, H - 10, "k", "middle");
  svg.text(12, T - 10, ylabel);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto* c = palette(i);
    for (std::size_t j = 0; j + 1 < series[i].size(); ++j)
      svg.line(px(series[i][j].first), py(series[i][j].second), px(series[i][j + 1].first), py(series[i][j + 1].second), c, 2);
    svg.rect(W - R + 10, T + 18.0 * static_cast<double>(i), 10, 10, c);
    svg.text(W - R + 26, T + 18.0 * static_cast<double>(i) + 9, names[i]);
  }
  return svg.str();
}

inline std::string heatmap(const std::string& title, const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& cells) {
  const double cell = 44, L = 100, T = 40;
  const double n = static_cast<double>(names.size());
  Svg svg(L + cell * n + 20, T + cell * n + 90);
  svg.text(L, 20, title, "start", 13);
  for (std::size_t i = 0; i < names.size(); ++i) {
    svg.text(L - 6, T + cell * (static_cast<double>(i) + 0.6), names[i], "end");
    svg.text(L + cell * (static_cast<double>(i) + 0.5), T + cell * n + 16, names[i], "middle", 9);
    for (std::size_t j = 0; j < names.size(); ++j) {
      const double v = cells[i][j];
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
      std::ostringstream color;
      color << "rgb(" << shade << ',' << shade << ",255)";
      svg.rect(L + cell * static_cast<double>(j), T + cell * static_cast<double>(i), cell, cell, color.str());
      svg.text(L + cell * (static_cast<double>(j) + 0.5), T + cell * (static_cast<double>(i) + 0.6),
               std::to_string(static_cast<int>(std::lround(100.0 * v))) + "%", "middle", 10);
    }
  }
  return svg.str();
}

// One column of points per group, with a bar at the mean.
inline std::string strip_chart(const std::string& title, const std::vector<std::string>& names,
                               const std::vector<std::vector<double>>& values, const std::string& ylabel) {
  const double W = 120.0 * static_cast<double>(std::max<std::size_t>(names.size(), 3)) + 80, H = 400, L = 60, T = 40, B = 50;
  double y0 = -1, y1 = 1;
  for (const auto& v : values)
    for (double x : v)
      if (std::isfinite(x)) {
        y0 = std::min(y0, x);
        y1 = std::max(y1, x);
      }
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  Svg svg(W, H);
  svg.text(W / 2, 20, title, "middle", 13);
  svg.line(L, py(0), W - 20, py(0), "#999999");
  svg.line(L, T, L, H - B, "#000000");
  svg.text(L - 6, py(y1) + 4, fmt(y1), "end");
  svg.text(L - 6, py(y0) + 4, fmt(y0), "end");
  svg.text(12, T - 10, ylabel);
  const double step = (W - L - 20) / static_cast<double>(names.size());
  for (std::size_t g = 0; g < names.size(); ++g) {
    const double cx = L + step * (static_cast<double>(g) + 0.5);
    double sum = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < values[g].size(); ++i) {
      const double v = values[g][i];
      if (!std::isfinite(v)) continue;
      const double jitter = (static_cast<double>((i * 37) % 21) - 10.0) * step / 60.0;
      svg.circle(cx + jitter, py(v), 2.5, palette(g));
      sum += v;
      ++k;
    }
    if (k) svg.line(cx - step / 4, py(sum / static_cast<double>(k)), cx + step / 4, py(sum / static_cast<double>(k)), "#000000", 2);
    svg.text(cx, H - B + 16, names[g], "middle");
  }
  return svg.str();
}

inline std::vector<std::string> export_dilution(const ojson& body, const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& res : body.at("results")) {
    const auto& r = res.at("result");
    const std::string base = safe_name(res.at("dataset").get<std::string>()) + ".dilution";
    std::ostringstream csv;
    csv << "k,technique,relative_difference\n";
    std::vector<std::string> names;
    for (const auto& t : r.at("techniques")) names.push_back(t.get<std::string>());
    std::vector<std::vector<std::pair<double, double>>> series(names.size());
    for (const auto& step : r.at("steps")) {
      const auto k = step.at("k").get<std::size_t>();
      for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& v = step.at("relative_difference").at(names[i]);
        csv << k << ',' << names[i] << ',' << value_csv(v) << '\n';
        if (v.is_number()) series[i].emplace_back(static_cast<double>(k), v.get<double>());
      }
    }
    write_text(dir / (base + ".csv"), csv.str());
    write_text(dir / (base + ".svg"),
               line_chart("Importance of " + r.at("target").get<std::string>() + " as correlated metrics are added", names,
                          series, "relative difference"));
    files.push_back((dir / (base + ".csv")).string());
    files.push_back((dir / (base + ".svg")).string());
  }
  return files;
}

inline std::vector<std::string> export_rq3(const ojson& body, const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const char* variant : {"nonmitigated", "mitigated"}) {
    for (const auto& m : body.at(variant)) {
      std::vector<std::string> names;
      for (const auto& t : m.at("techniques")) names.push_back(t.get<std::string>());
      const auto cells = m.at("cells").get<std::vector<std::vector<double>>>();
      const std::string base = std::string("rq3.") + variant + ".top" + std::to_string(m.at("k").get<std::size_t>());
      std::ostringstream csv;
      csv << "technique";
      for (const auto& n : names) csv << ',' << n;
      csv << '\n';
      for (std::size_t i = 0; i < names.size(); ++i) {
        csv << names[i];
        for (double v : cells[i]) csv << ',' << fmt(v);
        csv << '\n';
      }
      write_text(dir / (base + ".csv"), csv.str());
      write_text(dir / (base + ".svg"), heatmap(std::string("Top-") + std::to_string(m.at("k").get<std::size_t>()) +
                                                    " agreement (" + variant + ")",
                                                names, cells));
      files.push_back((dir / (base + ".csv")).string());
      files.push_back((dir / (base + ".svg")).string());
    }
  }
  return files;
}

inline std::vector<std::string> export_rq4(const ojson& body, const std::filesystem::path& dir) {
  std::vector<std::string> files;
  for (const auto& res : body.at("results")) {
    for (const auto& l : res.at("result").at("learners")) {
      const std::string base = safe_name(res.at("dataset").get<std::string>()) + ".rq4." + l.at("learner").get<std::string>();
      std::vector<std::string> names;
      std::vector<std::vector<double>> diffs;
      std::vector<double> ratios;
      for (const auto& m : l.at("comparison")) {
        names.push_back(m.at("measure").get<std::string>());
        std::vector<double> d;
        for (const auto& v : m.at("differences_pp")) d.push_back(v.is_number() ? v.get<double>() : NAN);
        diffs.push_back(std::move(d));
        const auto& r = m.at("stability_ratio");
        ratios.push_back(r.is_number() ? r.get<double>() : NAN);
      }
      std::ostringstream csv;
      csv << "iteration";
      for (const auto& n : names) csv << ',' << n << "_difference_pp";
      csv << '\n';
      const std::size_t iters = diffs.empty() ? 0 : diffs.front().size();
      for (std::size_t i = 0; i < iters; ++i) {
        csv << i;
        for (const auto& d : diffs) csv << ',' << fmt(d[i]);
        csv << '\n';
      }
      std::ostringstream stab;
      stab << "measure,stability_ratio\n";
      for (std::size_t i = 0; i < names.size(); ++i) stab << names[i] << ',' << fmt(ratios[i]) << '\n';
      write_text(dir / (base + ".csv"), csv.str());
      write_text(dir / (base + ".stability.csv"), stab.str());
      write_text(dir / (base + ".svg"),
                 strip_chart("Non-mitigated minus mitigated (" + l.at("learner").get<std::string>() + ")", names, diffs,
                             "percentage points"));
      for (const char* ext : {".csv", ".stability.csv", ".svg"}) files.push_back((dir / (base + ext)).string());
    }
  }
  return files;
}

}  // namespace plot_detail

/// Writes plot data for a dilution, rq3 or rq4 report into `dir` and returns the
/// paths written. Other report kinds are rejected.
inline std::vector<std::string> export_plot_data(const nlohmann::ordered_json& report, const std::filesystem::path& dir) {
  if (!report.is_object() || !report.contains("kind") || !report.contains("body"))
    throw data_error("not a corrimpact report: missing 'kind' or 'body'");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (!std::filesystem::is_directory(dir)) throw data_error("cannot create output directory '" + dir.string() + "'");
  const auto kind = report.at("kind").get<std::string>();
  try {
    if (kind == "dilution") return plot_detail::export_dilution(report.at("body"), dir);
    if (kind == "rq3") return plot_detail::export_rq3(report.at("body"), dir);
    if (kind == "rq4") return plot_detail::export_rq4(report.at("body"), dir);
  } catch (const nlohmann::json::exception& e) {
    throw data_error("malformed " + kind + " report: " + e.what());
  }
  throw data_error("report kind '" + kind + "' has no plot export (supported: dilution, rq3, rq4)");
}

}  // namespace corrimpact
