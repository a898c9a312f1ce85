#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corrimpact/dataset.hpp"
#include "corrimpact/detail/parallel.hpp"
#include "corrimpact/detail/rng.hpp"
#include "corrimpact/error.hpp"
#include "corrimpact/evaluation.hpp"
#include "corrimpact/experiments.hpp"
#include "corrimpact/forest.hpp"
#include "corrimpact/glm.hpp"
#include "corrimpact/mitigation.hpp"
#include "corrimpact/plot.hpp"
#include "corrimpact/rank_stats.hpp"
#include "corrimpact/report.hpp"
#include "corrimpact/synthetic.hpp"

#ifndef CORRIMPACT_VERSION
#define CORRIMPACT_VERSION "dev"
#endif

namespace corrimpact::cli {

namespace fs = std::filesystem;

/// Writes via a temporary sibling file and a rename, so readers never see a partial file.
inline void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  if (!fs::exists(dir)) throw data_error("output directory '" + dir.string() + "' does not exist");
  fs::path tmp = path;
  tmp += ".tmp" + std::to_string(detail::fnv1a64(path.string()) & 0xFFFF);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out.flush()) throw data_error("failed writing '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw data_error("cannot move report into place at '" + path.string() + "': " + ec.message());
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << x;
  return s.str();
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto& part : detail::split_commas(s)) {
    auto t = detail::trim(part);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// State shared by every subcommand.
struct Context {
  std::string command_line;
  std::string label = "bug";
  std::string positive;
  unsigned threads = 0;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  json inputs = json::array();
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;

  std::set<std::string> positive_labels() const {
    if (positive.empty()) return default_positive_labels();
    const auto v = split_list(positive);
    return {v.begin(), v.end()};
  }

  std::uint64_t resolved_seed() {
    if (!seed) {
      std::random_device rd;
      seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
      *err << "seed: " << *seed << "\n";
    }
    return *seed;
  }

  Dataset load(const fs::path& path) {
    const auto bytes = read_file(path);
    inputs.push_back({{"path", path.string()}, {"bytes", bytes.size()}, {"fnv1a64", hex64(detail::fnv1a64(bytes))}});
    std::istringstream in(bytes);
    return read_csv(in, path.stem().string(), label, positive_labels());
  }

  // A CSV file, or every *.csv inside a directory in name order.
  std::vector<Dataset> load_many(const fs::path& path) {
    if (!fs::exists(path)) throw data_error("input '" + path.string() + "' does not exist");
    if (!fs::is_directory(path)) return {load(path)};
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw data_error("directory '" + path.string() + "' contains no .csv files");
    std::vector<Dataset> out;
    for (const auto& f : files) out.push_back(load(f));
    return out;
  }

  Dataset load_one(const fs::path& path) {
    if (fs::is_directory(path)) throw usage_error("'" + path.string() + "' is a directory; this command takes one CSV file");
    return load(path);
  }

  json envelope(const std::string& kind, json config, json body) {
    json manifest{{"tool", "corrimpact"},
                  {"version", CORRIMPACT_VERSION},
                  {"command", command_line},
                  {"config", std::move(config)},
                  {"seed", seed ? json(*seed) : json(nullptr)},
                  {"inputs", inputs},
                  {"timestamp", utc_timestamp()}};
    return {{"schema_version", report_schema_version}, {"kind", kind}, {"manifest", manifest}, {"body", std::move(body)}};
  }

  void emit(const std::string& out_path, const std::string& content) {
    if (out_path.empty() || out_path == "-") {
      *out << content;
    } else {
      write_atomic(out_path, content);
    }
  }
};

inline std::string table_csv(const ImportanceTable& t) {
  std::ostringstream s;
  s << "metric,score,percentage,df,p_value,sd\n";
  for (const auto& r : t.rows) {
    s << r.metric << ',' << detail::format_double(r.score) << ',' << detail::format_double(100.0 * r.share) << ',';
    if (learner_of(t.technique) == Learner::logit) s << r.df;
    s << ',';
    if (r.p_value) s << detail::format_double(*r.p_value);
    s << ',';
    if (r.sd) s << detail::format_double(*r.sd);
    s << '\n';
  }
  return s.str();
}

inline std::vector<std::string> resolve_spec(const std::string& spec, const Dataset& d) {
  return spec.empty() ? d.metric_names() : split_list(spec);
}

inline std::vector<Technique> resolve_techniques(const std::string& list) {
  if (list.empty()) return {all_techniques.begin(), all_techniques.end()};
  std::vector<Technique> out;
  for (const auto& id : split_list(list)) {
    const auto t = parse_technique(id);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

inline json techniques_json(const std::vector<Technique>& ts) {
  json a = json::array();
  for (auto t : ts) a.push_back(technique_id(t));
  return a;
}

inline json mitigation_config(const MitigationOptions& m) {
  return {{"rho_threshold", m.rho_threshold}, {"vif_threshold", m.vif_threshold}, {"priority", m.priority}};
}

/// Parses `args` (without the program name) and runs the selected subcommand.
/// Returns 0 on success, 1 on usage errors, 2 on data or validation errors.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  for (const auto& a : args) ctx.command_line += (ctx.command_line.empty() ? "" : " ") + a;

  CLI::App app{"Correlated-metric analysis for defect models: mitigation, interpretation and validation"};
  app.name("corrimpact");
  app.set_version_flag("--version", std::string(CORRIMPACT_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.add_option("--label", ctx.label, "Name of the label column")->capture_default_str();
  app.add_option("--positive", ctx.positive, "Comma-separated label values meaning defective (default 1,true,TRUE,yes,buggy)");
  app.add_option("--threads", ctx.threads, "Worker threads (0 = CORRIMPACT_THREADS or hardware concurrency)");
  app.add_option("--format", ctx.format, "Output format for tables")->check(CLI::IsMember({"json", "csv"}));

  std::string input, out_path, spec, technique_list_arg, learner = "logit";
  std::uint64_t seed_value = 0;
  std::size_t trees = 100, boot = 100;
  MitigationOptions mopt;
  std::string priority;

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", seed_value, "Master seed (generated and printed when omitted)");
  };
  auto seed_given = [&](CLI::App* sub) { return sub->count("--seed") > 0; };

  // inspect
  auto* inspect = app.add_subcommand("inspect", "Summarize a dataset (rows, metrics, defect ratio, EPV)");
  std::string corr_csv;
  inspect->add_option("--input", input, "Dataset CSV")->required();
  inspect->add_option("--corr-csv", corr_csv, "Also write the Spearman correlation matrix as CSV");

  // mitigate
  auto* mit = app.add_subcommand("mitigate", "Remove correlated metrics (VarClus, then VIF)");
  std::string mitigated_csv;
  mit->add_option("--input", input, "Dataset CSV")->required();
  mit->add_option("--rho", mopt.rho_threshold, "Spearman |rho| clustering threshold")->capture_default_str();
  mit->add_option("--vif", mopt.vif_threshold, "VIF removal threshold")->capture_default_str();
  mit->add_option("--priority", priority, "Comma-separated metric preference for cluster representatives");
  mit->add_option("--report", out_path, "Write the mitigation report JSON here (default stdout)");
  mit->add_option("--out-csv", mitigated_csv, "Write the mitigated dataset as CSV");

  // fit
  auto* fit = app.add_subcommand("fit", "Fit one learner on the whole dataset and describe the model");
  fit->add_option("--input", input, "Dataset CSV")->required();
  fit->add_option("--learner", learner, "logit or forest")->capture_default_str();
  fit->add_option("--spec", spec, "Comma-separated ordered metrics (default: all, file order)");
  fit->add_option("--trees", trees, "Trees per forest")->capture_default_str();
  fit->add_option("--out", out_path, "Output path (default stdout)");
  add_seed(fit);

  // interpret
  auto* interp = app.add_subcommand("interpret", "Compute one importance table");
  interp->add_option("--input", input, "Dataset CSV")->required();
  interp->add_option("--learner", learner, "logit or forest")->capture_default_str();
  interp->add_option("--technique", technique_list_arg, "Technique identifier")->required();
  interp->add_option("--spec", spec, "Comma-separated ordered metrics (default: all, file order)");
  interp->add_option("--trees", trees, "Trees per forest")->capture_default_str();
  interp->add_option("--out", out_path, "Output path (default stdout)");
  add_seed(interp);

  // validate
  auto* val = app.add_subcommand("validate", "Out-of-sample bootstrap evaluation (AUC, F-measure, MCC)");
  val->add_option("--input", input, "Dataset CSV")->required();
  val->add_option("--learner", learner, "logit or forest")->capture_default_str();
  val->add_option("--spec", spec, "Comma-separated ordered metrics (default: all, file order)");
  val->add_option("--boot", boot, "Bootstrap iterations")->capture_default_str();
  val->add_option("--trees", trees, "Trees per forest")->capture_default_str();
  val->add_option("--out", out_path, "Output path (default stdout)");
  add_seed(val);

  // experiment
  auto* exp = app.add_subcommand("experiment", "Run an analysis protocol over one dataset or a directory of datasets");
  std::string kind, target, pool, metrics_arg, ks_arg = "1,3";
  exp->add_option("kind", kind, "rq1, rq2, rq3, rq4, prevalence, dilution or orderswap")
      ->required()
      ->check(CLI::IsMember({"rq1", "rq2", "rq3", "rq4", "prevalence", "dilution", "orderswap"}));
  exp->add_option("--input", input, "Dataset CSV or directory of CSVs")->required();
  exp->add_option("--out", out_path, "Report path (default stdout)");
  exp->add_option("--boot", boot, "Bootstrap iterations (at least 10 for rankings)")->capture_default_str();
  exp->add_option("--trees", trees, "Trees per forest")->capture_default_str();
  exp->add_option("--techniques", technique_list_arg, "Comma-separated technique subset (default: all nine)");
  exp->add_option("--rho", mopt.rho_threshold, "Spearman |rho| clustering threshold")->capture_default_str();
  exp->add_option("--vif", mopt.vif_threshold, "VIF removal threshold")->capture_default_str();
  exp->add_option("--priority", priority, "Comma-separated metric preference for cluster representatives");
  exp->add_option("--target", target, "dilution/orderswap: metric whose importance is tracked");
  exp->add_option("--pool", pool, "dilution: comma-separated correlated metrics, prepended in this order");
  exp->add_option("--metrics", metrics_arg, "orderswap: comma-separated metrics including the target");
  exp->add_option("--k", ks_arg, "rq3: comma-separated top-k values")->capture_default_str();
  add_seed(exp);

  // synthesize
  auto* syn = app.add_subcommand("synthesize", "Generate a dataset of latent-factor metric clusters");
  std::string config_path, meta_path;
  syn->add_option("--config", config_path, "Synthetic configuration JSON")->required();
  syn->add_option("--out", out_path, "Dataset CSV path (default stdout)");
  syn->add_option("--report", meta_path, "Write generation metadata JSON here");
  add_seed(syn);

  // export
  auto* exp_plot = app.add_subcommand("export", "Turn a dilution, rq3 or rq4 report into plot-ready CSV and SVG");
  std::string report_path, out_dir;
  exp_plot->add_option("--report", report_path, "Report JSON")->required();
  exp_plot->add_option("--out-dir", out_dir, "Directory for the CSV and SVG files")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << CORRIMPACT_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (ctx.threads == 0) ctx.threads = default_threads();
    mopt.priority = split_list(priority);
    auto resolve_seed = [&](CLI::App* sub) {
      if (seed_given(sub)) ctx.seed = seed_value;
      return ctx.resolved_seed();
    };

    if (*inspect) {
      const auto d = ctx.load_one(input);
      const auto s = summarize(d);
      if (!corr_csv.empty()) {
        const auto c = spearman_matrix(d);
        std::ostringstream csv;
        csv << "metric";
        for (const auto& m : c.metric_names) csv << ',' << m;
        csv << '\n';
        for (std::size_t i = 0; i < c.size(); ++i) {
          csv << c.metric_names[i];
          for (std::size_t j = 0; j < c.size(); ++j) csv << ',' << detail::format_double(c.at(i, j));
          csv << '\n';
        }
        write_atomic(corr_csv, csv.str());
      }
      if (ctx.format == "csv") {
        out << "name,n_modules,n_metrics,n_defective,defect_ratio,epv\n"
            << d.name() << ',' << s.n_modules << ',' << s.n_metrics << ',' << s.n_defective << ','
            << detail::format_double(s.defect_ratio) << ',' << detail::format_double(s.epv) << '\n';
      } else {
        auto j = to_json(s, d.name());
        j["metrics"] = d.metric_names();
        out << ctx.envelope("inspect", json::object(), j).dump(2) << "\n";
      }
      return 0;
    }

    if (*mit) {
      const auto d = ctx.load_one(input);
      const auto r = mitigate(d, mopt);
      if (!mitigated_csv.empty()) {
        std::ostringstream csv;
        write_csv(csv, r.data, ctx.label);
        write_atomic(mitigated_csv, csv.str());
      }
      const auto doc = ctx.envelope("mitigate", mitigation_config(mopt), to_json(r.report));
      ctx.emit(out_path, doc.dump(2) + "\n");
      return 0;
    }

    if (*fit) {
      const auto d = ctx.load_one(input);
      const auto l = parse_learner(learner);
      const ModelSpec ms{resolve_spec(spec, d)};
      ms.validate(d);
      json body, config{{"learner", learner}, {"spec", ms.metrics}};
      if (l == Learner::logit) {
        const auto m = fit_logit(d, ms);
        body = to_json(m);
        body["training_auc"] = auc(predict_prob(m, d), d.label());
      } else {
        ForestConfig fc;
        fc.n_trees = trees;
        fc.seed = resolve_seed(fit);
        fc.threads = ctx.threads;
        const auto f = fit_forest(d, ms, fc);
        body = to_json(f);
        body["training_auc"] = auc(predict_prob_forest(f, d), d.label());
        config["trees"] = trees;
      }
      ctx.emit(out_path, ctx.envelope("fit", config, body).dump(2) + "\n");
      return 0;
    }

    if (*interp) {
      const auto d = ctx.load_one(input);
      const auto l = parse_learner(learner);
      const auto t = parse_technique(technique_list_arg);
      if (learner_of(t) != l) {
        throw usage_error("technique '" + std::string(technique_id(t)) + "' belongs to learner '" +
                          std::string(learner_id(learner_of(t))) + "', not '" + learner + "'");
      }
      const ModelSpec ms{resolve_spec(spec, d)};
      ms.validate(d);
      ExperimentOptions opt;
      opt.forest.n_trees = trees;
      opt.threads = ctx.threads;
      json config{{"learner", learner}, {"technique", technique_id(t)}, {"spec", ms.metrics}};
      std::uint64_t seed = 0;
      if (l == Learner::forest) {
        seed = resolve_seed(interp);
        config["trees"] = trees;
      }
      const auto table = importance_tables(d.select(ms.metrics), ms, {t}, seed, opt, ctx.threads).at(t);
      if (ctx.format == "csv") {
        ctx.emit(out_path, table_csv(table));
      } else {
        ctx.emit(out_path, ctx.envelope("interpret", config, to_json(table)).dump(2) + "\n");
      }
      return 0;
    }

    if (*val) {
      const auto d = ctx.load_one(input);
      const auto l = parse_learner(learner);
      const ModelSpec ms{resolve_spec(spec, d)};
      BootstrapOptions bo;
      bo.n_boot = boot;
      bo.seed = resolve_seed(val);
      bo.forest.n_trees = trees;
      bo.threads = ctx.threads;
      const auto ev = bootstrap_evaluate(d, ms, l, bo);
      json config{{"learner", learner}, {"spec", ms.metrics}, {"boot", boot}, {"trees", trees}};
      ctx.emit(out_path, ctx.envelope("validate", config, to_json(ev)).dump(2) + "\n");
      return 0;
    }

    if (*exp) {
      ExperimentOptions opt;
      opt.n_boot = boot;
      opt.seed = resolve_seed(exp);
      opt.forest.n_trees = trees;
      opt.mitigation = mopt;
      opt.threads = ctx.threads;
      opt.techniques = resolve_techniques(technique_list_arg);
      if (kind == "dilution" && technique_list_arg.empty()) opt.techniques = default_dilution_techniques();
      if (kind == "orderswap" && technique_list_arg.empty()) opt.techniques = {Technique::type1, Technique::gini};
      json config{{"kind", kind},
                  {"boot", boot},
                  {"trees", trees},
                  {"techniques", techniques_json(opt.techniques)},
                  {"mitigation", mitigation_config(mopt)}};
      const auto datasets = ctx.load_many(input);

      json body;
      if (kind == "rq3") {
        std::vector<std::size_t> ks;
        for (const auto& k : split_list(ks_arg)) {
          std::size_t v = 0;
          const auto [p, ec] = std::from_chars(k.data(), k.data() + k.size(), v);
          if (ec != std::errc{} || p != k.data() + k.size() || v == 0) throw usage_error("--k: '" + k + "' is not a positive integer");
          ks.push_back(v);
        }
        config["k"] = ks;
        body = to_json(rq3(datasets, opt, ks));
      } else {
        json results = json::array();
        for (const auto& d : datasets) {
          json r;
          if (kind == "prevalence") {
            r = to_json(prevalence_analysis(d, mopt.rho_threshold));
          } else if (kind == "rq1") {
            r = to_json(rq1(d, opt));
          } else if (kind == "rq2") {
            const auto m = mitigate(d, mopt);
            r = to_json(rq2(m.data, opt));
            r["mitigation"] = to_json(m.report);
          } else if (kind == "rq4") {
            r = to_json(rq4(d, opt));
          } else if (kind == "dilution") {
            const auto m = mitigate(d, mopt);
            auto [t, p] = default_dilution_target(d, m.report);
            if (!target.empty()) t = target;
            if (!pool.empty()) p = split_list(pool);
            r = to_json(dilution_analysis(d, m.report.surviving, t, p, opt));
          } else {  // orderswap
            std::string t = target;
            std::vector<std::string> ms = split_list(metrics_arg);
            if (t.empty()) {
              const auto m = mitigate(d, mopt);
              t = default_dilution_target(d, m.report).first;
            }
            if (ms.empty()) {
              // the target plus its four most correlated partners
              std::vector<std::pair<double, std::string>> by_rho;
              const auto& tv = d.metric(t).values;
              for (const auto& name : d.metric_names())
                if (name != t) by_rho.emplace_back(-std::abs(spearman(d.metric(name).values, tv).rho), name);
              std::stable_sort(by_rho.begin(), by_rho.end(),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
              ms.push_back(t);
              for (std::size_t i = 0; i < by_rho.size() && i < 4; ++i) ms.push_back(by_rho[i].second);
            }
            r = to_json(order_swap_analysis(d, ms, t, opt));
          }
          results.push_back({{"dataset", d.name()}, {"result", r}});
        }
        body = {{"results", results}};
      }
      ctx.emit(out_path, ctx.envelope(kind, config, body).dump(2) + "\n");
      return 0;
    }

    if (*syn) {
      json cj;
      try {
        cj = json::parse(read_file(config_path));
      } catch (const json::parse_error& e) {
        throw usage_error("config '" + config_path + "' is not valid JSON: " + e.what());
      }
      ctx.inputs.push_back({{"path", config_path}, {"fnv1a64", hex64(detail::fnv1a64(cj.dump()))}});
      const auto cfg = synthetic_config_from_json(cj);
      const auto s = synthesize(cfg, resolve_seed(syn));
      std::ostringstream csv;
      write_csv(csv, s.data, ctx.label);
      ctx.emit(out_path, csv.str());
      if (!meta_path.empty()) {
        auto body = to_json(s);
        body["summary"] = to_json(summarize(s.data), s.data.name());
        write_atomic(meta_path, ctx.envelope("synthesize", to_json(cfg), body).dump(2) + "\n");
      }
      return 0;
    }

    if (*exp_plot) {
      json report;
      try {
        report = json::parse(read_file(report_path));
      } catch (const json::parse_error& e) {
        throw data_error("report '" + report_path + "' is not valid JSON: " + e.what());
      }
      for (const auto& f : export_plot_data(report, out_dir)) out << f << "\n";
      return 0;
    }
  } catch (const usage_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const data_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace corrimpact::cli
