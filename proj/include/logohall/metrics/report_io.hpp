#pragma once

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "logohall/metrics/metrics.hpp"

namespace logohall {

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline std::optional<double> opt_double(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

inline std::string pct(const std::optional<double>& v, int digits = 2) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, 100.0 * *v);
  return buf;
}

inline std::string csv_num(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

}  // namespace detail

inline nlohmann::json bucket_rows_to_json(const std::vector<BucketRow>& rows) {
  auto out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"label", r.label},
                   {"n", r.n},
                   {"correct", r.correct},
                   {"accuracy", detail::opt_json(r.accuracy)},
                   {"share", detail::opt_json(r.share)}});
  return out;
}

inline std::vector<BucketRow> bucket_rows_from_json(const nlohmann::json& j) {
  std::vector<BucketRow> out;
  for (const auto& r : j)
    out.push_back({r.at("label").get<std::string>(), r.value("n", std::size_t{0}), r.value("correct", std::size_t{0}),
                   detail::opt_double(r, "accuracy"), detail::opt_double(r, "share")});
  return out;
}

inline nlohmann::json perturbation_report_to_json(const PerturbationReport& p) {
  auto rows = nlohmann::json::array();
  for (const auto& r : p.rows)
    rows.push_back({{"kind", r.kind},
                    {"n", r.n},
                    {"correct", r.correct},
                    {"errors", r.errors},
                    {"accuracy", detail::opt_json(r.accuracy)},
                    {"error_share", r.error_share}});
  return {{"rows", rows}, {"total", detail::opt_json(p.total)}, {"total_errors", p.total_errors}};
}

inline nlohmann::json calibration_to_json(const CalibrationReport& c) {
  auto bins = nlohmann::json::array();
  for (const auto& b : c.bins)
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_prob", detail::opt_json(b.mean_prob)},
                    {"rate", detail::opt_json(b.rate)}});
  return {{"edges", c.edges}, {"bins", bins}, {"ece", c.ece}, {"brier", c.brier}, {"n", c.n}};
}

inline nlohmann::json metrics_report_to_json(const MetricsReport& r) {
  nlohmann::json j{{"model_id", r.model_id},
                   {"condition", r.condition},
                   {"acc_text", detail::opt_json(r.acc_text)},
                   {"hall", detail::opt_json(r.hall)},
                   {"no_hall", detail::opt_json(r.no_hall)},
                   {"n_text", r.n_text},
                   {"n_symbol", r.n_symbol},
                   {"text_ids", r.text_ids},
                   {"symbol_ids", r.symbol_ids},
                   {"categories", bucket_rows_to_json(r.categories)},
                   {"colors", bucket_rows_to_json(r.colors)},
                   {"shapes", bucket_rows_to_json(r.shapes)}};
  if (r.perturbations) j["perturbations"] = perturbation_report_to_json(*r.perturbations);
  if (r.calibration) j["calibration"] = calibration_to_json(*r.calibration);
  return j;
}

// Reads the fields needed for comparisons; bucket and calibration detail is
// optional in hand-written report files.
inline MetricsReport metrics_report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  try {
    r.model_id = j.value("model_id", "");
    r.condition = j.value("condition", "base");
    r.acc_text = detail::opt_double(j, "acc_text");
    r.hall = detail::opt_double(j, "hall");
    r.no_hall = detail::opt_double(j, "no_hall");
    if (r.hall && !r.no_hall) r.no_hall = 1.0 - *r.hall;
    if (!r.hall && r.no_hall) r.hall = 1.0 - *r.no_hall;
    r.n_text = j.value("n_text", std::size_t{0});
    r.n_symbol = j.value("n_symbol", std::size_t{0});
    if (j.contains("text_ids")) r.text_ids = j["text_ids"].get<std::vector<std::string>>();
    if (j.contains("symbol_ids")) r.symbol_ids = j["symbol_ids"].get<std::vector<std::string>>();
    if (j.contains("categories")) r.categories = bucket_rows_from_json(j["categories"]);
    if (j.contains("colors")) r.colors = bucket_rows_from_json(j["colors"]);
    if (j.contains("shapes")) r.shapes = bucket_rows_from_json(j["shapes"]);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics report: ") + e.what());
  }
  auto unit = [](const std::optional<double>& v) { return !v || (*v >= 0.0 && *v <= 1.0); };
  if (!unit(r.acc_text) || !unit(r.hall)) throw ConfigError("metrics report: fraction outside [0,1]");
  return r;
}

inline std::string bucket_rows_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "model_id,family,bucket,n,correct,accuracy,share\n";
  for (const auto& r : reports) {
    auto emit = [&](const char* family, const std::vector<BucketRow>& rows) {
      for (const auto& b : rows)
        out << r.model_id << ',' << family << ',' << b.label << ',' << b.n << ',' << b.correct << ','
            << detail::csv_num(b.accuracy) << ',' << detail::csv_num(b.share) << '\n';
    };
    emit("category", r.categories);
    emit("color", r.colors);
    emit("shape", r.shapes);
  }
  return out.str();
}

inline std::string perturbation_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "model_id,kind,n,correct,errors,accuracy,error_share\n";
  for (const auto& r : reports) {
    if (!r.perturbations) continue;
    for (const auto& p : r.perturbations->rows)
      out << r.model_id << ',' << p.kind << ',' << p.n << ',' << p.correct << ',' << p.errors << ','
          << detail::csv_num(p.accuracy) << ',' << detail::csv_num(p.error_share) << '\n';
    out << r.model_id << ",Total,,,," << detail::csv_num(r.perturbations->total) << ",\n";
  }
  return out.str();
}

// Models as columns; category rows give accuracy, color and shape rows give
// accuracy followed by the distribution share in small type.
inline std::string table1_markdown(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "| Type |";
  for (const auto& r : reports) out << ' ' << r.model_id << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < reports.size(); ++i) out << "---:|";
  out << '\n';
  auto section = [&](const char* title, auto rows_of, bool with_share) {
    out << "| *" << title << "* |";
    for (std::size_t i = 0; i < reports.size(); ++i) out << " |";
    out << '\n';
    if (reports.empty()) return;
    const auto& first = rows_of(reports.front());
    for (std::size_t k = 0; k < first.size(); ++k) {
      out << "| " << first[k].label << " |";
      for (const auto& r : reports) {
        const auto& rows = rows_of(r);
        if (k >= rows.size()) {
          out << " n/a |";
          continue;
        }
        out << ' ' << detail::pct(rows[k].accuracy);
        if (with_share) out << " <sub>" << detail::pct(rows[k].share, 3) << "%</sub>";
        out << " |";
      }
      out << '\n';
    }
  };
  section("Accuracy (%)", [](const MetricsReport& r) -> const std::vector<BucketRow>& { return r.categories; }, false);
  section("Accuracy + Distribution (%)", [](const MetricsReport& r) -> const std::vector<BucketRow>& { return r.colors; },
          true);
  section("Accuracy + Distribution (%)", [](const MetricsReport& r) -> const std::vector<BucketRow>& { return r.shapes; },
          true);
  out << "\nPureSymbol accuracy is the no-hallucination rate (1 - Hall). Color and shape rows cover pure-symbol "
         "logos; their distribution is each bucket's share of correctly handled logos within the model.\n";
  return out.str();
}

inline std::string perturbation_markdown(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "| Model |";
  for (auto k : kAllPerturbations) out << ' ' << to_string(k) << " |";
  out << " Total |\n|---|";
  for (std::size_t i = 0; i <= kAllPerturbations.size(); ++i) out << "---:|";
  out << '\n';
  for (const auto& r : reports) {
    if (!r.perturbations) continue;
    out << "| " << r.model_id << " |";
    for (const auto& p : r.perturbations->rows) out << ' ' << detail::pct(p.accuracy, 1) << "% |";
    out << ' ' << detail::pct(r.perturbations->total) << "% |\n";
  }
  out << "\nAccuracy is exact match on text logos and the no-hallucination rate on pure-symbol logos. Total is the "
         "unweighted mean of the nine per-kind values.\n";
  return out.str();
}

// Plot-ready series: reliability bins and perturbation error shares.
inline nlohmann::json plot_data(const std::vector<MetricsReport>& reports) {
  nlohmann::json out{{"models", nlohmann::json::array()}};
  for (const auto& r : reports) {
    nlohmann::json m{{"model_id", r.model_id}, {"condition", r.condition}};
    if (r.calibration) m["reliability"] = calibration_to_json(*r.calibration);
    if (r.perturbations) {
      nlohmann::json shares = nlohmann::json::object();
      for (const auto& p : r.perturbations->rows) shares[p.kind] = p.error_share;
      m["error_shares"] = shares;
    }
    nlohmann::json color = nlohmann::json::object(), shape = nlohmann::json::object();
    for (const auto& b : r.colors) color[b.label] = detail::opt_json(b.share);
    for (const auto& b : r.shapes) shape[b.label] = detail::opt_json(b.share);
    m["color_shares"] = color;
    m["shape_shares"] = shape;
    out["models"].push_back(m);
  }
  return out;
}

}  // namespace logohall
