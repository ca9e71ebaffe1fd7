#pragma once

#include "lcgp/errors.hpp"
#include "lcgp/evaluation.hpp"
#include "lcgp/fitting.hpp"
#include "lcgp/gp_core.hpp"
#include "lcgp/priors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cfenv>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace lcgp {

// ---------------------------------------------------------------------------
// Formatting / parsing helpers

//! 17 significant digits: enough for an exact double round-trip.
inline std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv(std::string_view line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::string_view what, std::size_t line)
{
  const std::string tmp(trim(s));
  if (tmp.empty())
    throw ParseError("empty " + std::string(what), line);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size())
    throw ParseError("cannot parse " + std::string(what) + " '" + tmp + "'", line);
  return v;
}

inline long parse_positive_int(std::string_view s, std::string_view what, std::size_t line)
{
  s = trim(s);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 1)
    throw ParseError(std::string(what) + " must be a positive integer (got '" + std::string(s) + "')",
                     line);
  return v;
}

inline std::ifstream open_in(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw IoError("cannot open '" + path + "' for writing");
  return out;
}

//! 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Log-spaced protocol sizes

enum class SpacingMode
{
  InclusiveEndpoints, //!< min * r^k, k = 0..count-1, r = (max/min)^(1/(count-1))
  ExclusiveStart      //!< min * r^k, k = 1..count,   r = (max/min)^(1/count)
};

//! Geometric size grid rounded to the nearest integer (ties to even).
//! Neighbours that coincide after rounding are merged; a message is appended
//! to `warnings` for each merge.
inline std::vector<long> log_spaced_sizes(long min_size,
                                          long max_size,
                                          int count,
                                          SpacingMode mode,
                                          std::vector<std::string>* warnings = nullptr)
{
  if (min_size < 1 || !(min_size < max_size))
    throw DomainError("log_spaced_sizes needs 1 <= min_size < max_size");
  if (count < 2)
    throw DomainError("log_spaced_sizes needs count >= 2");
  const double lo = static_cast<double>(min_size);
  const double ratio = static_cast<double>(max_size) / lo;
  const int first = mode == SpacingMode::InclusiveEndpoints ? 0 : 1;
  const int steps = mode == SpacingMode::InclusiveEndpoints ? count - 1 : count;
  const int last = first + count - 1;

  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  std::vector<long> out;
  for (int k = first; k <= last; ++k) {
    long v;
    if (k == 0)
      v = min_size;
    else if (k == steps)
      v = max_size;
    else
      v = static_cast<long>(std::nearbyint(lo * std::pow(ratio, static_cast<double>(k) / steps)));
    if (!out.empty() && v <= out.back()) {
      if (warnings)
        warnings->push_back("log_spaced_sizes: size " + std::to_string(v) +
                            " duplicates its neighbour after rounding; dropped");
      continue;
    }
    out.push_back(v);
  }
  std::fesetround(saved);
  return out;
}

// ---------------------------------------------------------------------------
// Measurement tables

struct MeasurementRow
{
  long size = 0;
  std::string seed;
  double accuracy = 0.0;
  std::string split; //!< pilot, short_range, long_range, coverage, or empty

  bool operator==(const MeasurementRow&) const = default;
};

struct MeasurementTable
{
  std::vector<MeasurementRow> rows;
  bool has_split = false;

  void validate() const
  {
    std::set<std::pair<long, std::string>> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.size < 1)
        throw InvalidParams("row " + std::to_string(i + 1) + ": size must be positive");
      if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0))
        throw InvalidParams("row " + std::to_string(i + 1) + ": accuracy " +
                            format_double(r.accuracy) + " outside [0,1]");
      if (!seen.emplace(r.size, r.seed).second)
        throw InvalidParams("duplicate (size, seed) pair (" + std::to_string(r.size) + ", " +
                            r.seed + ")");
    }
  }

  //! Rows whose split tag equals `split`.
  MeasurementTable filter_split(std::string_view split) const
  {
    MeasurementTable out;
    out.has_split = has_split;
    for (const auto& r : rows)
      if (r.split == split)
        out.rows.push_back(r);
    return out;
  }

  std::vector<std::string> splits() const
  {
    std::set<std::string> s;
    for (const auto& r : rows)
      s.insert(r.split);
    return { s.begin(), s.end() };
  }
};

//! Delimited text with a header row naming size, seed, accuracy and
//! optionally split, in any order. Blank lines and lines starting with '#'
//! are skipped.
inline MeasurementTable parse_measurements(std::istream& in)
{
  MeasurementTable t;
  std::string line;
  std::size_t lineno = 0;
  int col_size = -1, col_seed = -1, col_acc = -1, col_split = -1;
  std::size_t n_cols = 0;
  std::set<std::pair<long, std::string>> seen;

  while (std::getline(in, line)) {
    ++lineno;
    const auto tl = detail::trim(line);
    if (tl.empty() || tl.front() == '#')
      continue;
    auto cells = detail::split_csv(tl);
    if (col_size < 0) {
      n_cols = cells.size();
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& name = cells[c];
        int* slot = name == "size"     ? &col_size
                    : name == "seed"   ? &col_seed
                    : name == "accuracy" ? &col_acc
                    : name == "split"  ? &col_split
                                       : nullptr;
        if (!slot)
          throw ParseError("unknown column '" + name + "'", lineno);
        if (*slot >= 0)
          throw ParseError("duplicate column '" + name + "'", lineno);
        *slot = static_cast<int>(c);
      }
      if (col_size < 0 || col_seed < 0 || col_acc < 0)
        throw ParseError("header must name columns size, seed and accuracy", lineno);
      t.has_split = col_split >= 0;
      continue;
    }
    if (cells.size() != n_cols)
      throw ParseError("expected " + std::to_string(n_cols) + " fields, found " +
                         std::to_string(cells.size()),
                       lineno);
    MeasurementRow r;
    r.size = detail::parse_positive_int(cells[static_cast<std::size_t>(col_size)], "size", lineno);
    r.seed = cells[static_cast<std::size_t>(col_seed)];
    if (r.seed.empty())
      throw ParseError("empty seed", lineno);
    r.accuracy = detail::parse_double(cells[static_cast<std::size_t>(col_acc)], "accuracy", lineno);
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0))
      throw ParseError("accuracy " + cells[static_cast<std::size_t>(col_acc)] +
                         " outside [0,1] in row for size " + std::to_string(r.size),
                       lineno);
    if (col_split >= 0)
      r.split = cells[static_cast<std::size_t>(col_split)];
    if (!seen.emplace(r.size, r.seed).second)
      throw ParseError("duplicate (size, seed) pair (" + std::to_string(r.size) + ", " + r.seed + ")",
                       lineno);
    t.rows.push_back(std::move(r));
  }
  if (col_size < 0)
    throw ParseError("missing header row");
  return t;
}

inline MeasurementTable read_measurements(const std::string& path)
{
  auto in = detail::open_in(path);
  return parse_measurements(in);
}

inline void write_measurements(const MeasurementTable& t, std::ostream& out)
{
  out << (t.has_split ? "size,seed,accuracy,split\n" : "size,seed,accuracy\n");
  for (const auto& r : t.rows) {
    out << r.size << ',' << r.seed << ',' << format_double(r.accuracy);
    if (t.has_split)
      out << ',' << r.split;
    out << '\n';
  }
}

inline void write_measurements(const MeasurementTable& t, const std::string& path)
{
  auto out = detail::open_out(path);
  write_measurements(t, out);
}

//! Per-size mean accuracy plus the replicates behind each mean.
struct AggregatedCurve
{
  CurveDataset curve;
  std::vector<std::vector<double>> replicates; //!< sorted by seed id within each size
  std::vector<std::vector<std::string>> seeds;

  std::vector<EvalPoint> eval_points() const
  {
    std::vector<EvalPoint> pts;
    for (std::size_t i = 0; i < curve.size(); ++i)
      pts.push_back({ curve.sizes[i], replicates[i] });
    return pts;
  }
};

//! Averages replicates per size. Replicates are ordered by seed id before
//! summation, so the result does not depend on row order.
inline AggregatedCurve aggregate_replicates(const MeasurementTable& table)
{
  if (table.rows.empty())
    throw DomainError("cannot aggregate an empty measurement table");
  std::map<long, std::vector<std::pair<std::string, double>>> by_size;
  for (const auto& r : table.rows)
    by_size[r.size].emplace_back(r.seed, r.accuracy);

  AggregatedCurve out;
  for (auto& [size, reps] : by_size) {
    std::sort(reps.begin(), reps.end());
    std::vector<double> acc;
    std::vector<std::string> ids;
    double sum = 0.0;
    for (const auto& [seed, a] : reps) {
      acc.push_back(a);
      ids.push_back(seed);
      sum += a;
    }
    out.curve.sizes.push_back(static_cast<double>(size));
    out.curve.accuracies.push_back(sum / static_cast<double>(acc.size()));
    out.replicates.push_back(std::move(acc));
    out.seeds.push_back(std::move(ids));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Extrapolation tables

using Metadata = std::map<std::string, std::string>;

//! Parsed form of a written extrapolation table.
struct ExtrapolationTable
{
  Metadata metadata;
  std::vector<double> levels;
  std::vector<double> sizes;
  std::vector<double> mean;   //!< mean of the truncated marginal
  std::vector<double> median; //!< median of the truncated marginal
  std::vector<double> mu;     //!< untruncated predictive mean
  std::vector<double> sd;     //!< untruncated predictive standard deviation
  std::vector<std::vector<double>> lo; //!< lo[q][l]
  std::vector<std::vector<double>> hi;
};

namespace detail {

inline std::string level_tag(double level)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", level);
  return buf;
}

} // namespace detail

//! One row per query size: size, truncated mean and median, untruncated mu
//! and sd, then lo/hi of the central interval per level. Metadata lines
//! "# key=value" precede the header.
inline void write_extrapolation(const Extrapolation& ex, const Metadata& metadata, std::ostream& out)
{
  out << "# lcgp extrapolation\n";
  for (const auto& [k, v] : metadata)
    out << "# " << k << '=' << v << '\n';
  out << "size,mean,median,mu,sd";
  for (double l : ex.levels)
    out << ",lo_" << detail::level_tag(l) << ",hi_" << detail::level_tag(l);
  out << '\n';
  const auto& pred = ex.predictive;
  for (std::size_t q = 0; q < pred.size(); ++q) {
    const auto qi = static_cast<Eigen::Index>(q);
    out << format_double(pred.query_sizes[q]) << ',' << format_double(pred.truncated_mean(q)) << ','
        << format_double(pred.median(q)) << ',' << format_double(pred.mu[qi]) << ','
        << format_double(std::sqrt(std::max(pred.sigma(qi, qi), 0.0)));
    for (const auto& [a, b] : ex.intervals[q])
      out << ',' << format_double(a) << ',' << format_double(b);
    out << '\n';
  }
}

inline void write_extrapolation(const Extrapolation& ex, const Metadata& metadata, const std::string& path)
{
  auto out = detail::open_out(path);
  write_extrapolation(ex, metadata, out);
}

inline ExtrapolationTable parse_extrapolation(std::istream& in)
{
  ExtrapolationTable t;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tl = detail::trim(line);
    if (tl.empty())
      continue;
    if (tl.front() == '#') {
      const auto body = detail::trim(tl.substr(1));
      const auto eq = body.find('=');
      if (eq != std::string_view::npos)
        t.metadata[std::string(detail::trim(body.substr(0, eq)))] =
          std::string(detail::trim(body.substr(eq + 1)));
      continue;
    }
    auto cells = detail::split_csv(tl);
    if (header.empty()) {
      header = cells;
      std::map<std::string, int> pos;
      for (std::size_t c = 0; c < header.size(); ++c)
        pos[header[c]] = static_cast<int>(c);
      for (const char* need : { "size", "mean", "median", "mu", "sd" })
        if (!pos.count(need))
          throw ParseError(std::string("missing column '") + need + "'", lineno);
      for (const auto& h : header)
        if (h.rfind("lo_", 0) == 0) {
          t.levels.push_back(detail::parse_double(h.substr(3), "level", lineno));
          if (!pos.count("hi_" + h.substr(3)))
            throw ParseError("column " + h + " has no matching hi_ column", lineno);
        }
      continue;
    }
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields", lineno);
    auto get = [&](const std::string& name) {
      const auto it = std::find(header.begin(), header.end(), name);
      return detail::parse_double(cells[static_cast<std::size_t>(it - header.begin())], name, lineno);
    };
    t.sizes.push_back(get("size"));
    t.mean.push_back(get("mean"));
    t.median.push_back(get("median"));
    t.mu.push_back(get("mu"));
    t.sd.push_back(get("sd"));
    std::vector<double> lo, hi;
    for (const auto& h : header)
      if (h.rfind("lo_", 0) == 0) {
        lo.push_back(get(h));
        hi.push_back(get("hi_" + h.substr(3)));
      }
    t.lo.push_back(std::move(lo));
    t.hi.push_back(std::move(hi));
  }
  if (header.empty())
    throw ParseError("missing header row");
  return t;
}

inline ExtrapolationTable read_extrapolation(const std::string& path)
{
  auto in = detail::open_in(path);
  return parse_extrapolation(in);
}

// ---------------------------------------------------------------------------
// Prior configuration files (key = value)

struct PriorConfigFile
{
  PriorConfig config;
  Metadata metadata; //!< every key not part of the configuration itself
};

namespace detail {

inline std::vector<std::pair<std::string, double>> prior_config_items(const PriorConfig& c)
{
  return { { "tau_loc", c.tau_prior.loc },       { "tau_scale", c.tau_prior.scale },
           { "sigma_loc", c.sigma_prior.loc },   { "sigma_scale", c.sigma_prior.scale },
           { "lambda_loc", c.lambda_prior.loc }, { "lambda_scale", c.lambda_prior.scale },
           { "epsilon_min", c.epsilon_min },     { "y_best_observed", c.y_best_observed } };
}

} // namespace detail

//! Stable 16-hex-digit fingerprint of the numeric prior configuration.
inline std::string prior_config_hash(const PriorConfig& cfg)
{
  std::string canon;
  for (const auto& [k, v] : detail::prior_config_items(cfg))
    canon += k + "=" + format_double(v) + "\n";
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(canon)));
  return buf;
}

//! Priors on tau, sigma and lambda are truncated normals on [0, inf).
inline void write_prior_config(const PriorConfig& cfg, const Metadata& metadata, std::ostream& out)
{
  out << "# lcgp prior configuration\n";
  out << "# tau, sigma and lambda priors are normals truncated to [0, inf)\n";
  for (const auto& [k, v] : detail::prior_config_items(cfg))
    out << k << " = " << format_double(v) << '\n';
  for (const auto& [k, v] : metadata)
    out << k << " = " << v << '\n';
}

inline void write_prior_config(const PriorConfig& cfg, const Metadata& metadata, const std::string& path)
{
  auto out = detail::open_out(path);
  write_prior_config(cfg, metadata, out);
}

inline PriorConfigFile parse_prior_config(std::istream& in)
{
  std::map<std::string, double> values;
  PriorConfigFile f;
  const auto items = detail::prior_config_items(f.config);
  std::set<std::string> known;
  for (const auto& [k, v] : items)
    known.insert(k);

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tl = detail::trim(line);
    if (tl.empty() || tl.front() == '#')
      continue;
    const auto eq = tl.find('=');
    if (eq == std::string_view::npos)
      throw ParseError("expected 'key = value'", lineno);
    const std::string key(detail::trim(tl.substr(0, eq)));
    const std::string val(detail::trim(tl.substr(eq + 1)));
    if (known.count(key)) {
      if (values.count(key))
        throw ParseError("duplicate key '" + key + "'", lineno);
      values[key] = detail::parse_double(val, key, lineno);
    } else {
      f.metadata[key] = val;
    }
  }
  for (const auto& k : known)
    if (!values.count(k))
      throw ParseError("prior configuration lacks key '" + k + "'");

  auto& c = f.config;
  c.tau_prior = { values["tau_loc"], values["tau_scale"], 0.0, kInf };
  c.sigma_prior = { values["sigma_loc"], values["sigma_scale"], 0.0, kInf };
  c.lambda_prior = { values["lambda_loc"], values["lambda_scale"], 0.0, kInf };
  c.epsilon_min = values["epsilon_min"];
  c.y_best_observed = values["y_best_observed"];
  try {
    c.validate();
  } catch (const InfeasibleError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(std::string("invalid prior configuration: ") + e.what());
  }
  return f;
}

inline PriorConfigFile read_prior_config(const std::string& path)
{
  auto in = detail::open_in(path);
  return parse_prior_config(in);
}

// ---------------------------------------------------------------------------
// Fitted models (JSON document)

namespace detail {

inline nlohmann::json finite_or_null(double v)
{
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline double number_or_neg_inf(const nlohmann::json& j)
{
  return j.is_null() ? -kInf : j.get<double>();
}

} // namespace detail

inline nlohmann::json prior_config_to_json(const PriorConfig& cfg)
{
  nlohmann::json j;
  for (const auto& [k, v] : detail::prior_config_items(cfg))
    j[k] = v;
  return j;
}

inline PriorConfig prior_config_from_json(const nlohmann::json& j)
{
  PriorConfig c;
  c.tau_prior = { j.at("tau_loc").get<double>(), j.at("tau_scale").get<double>(), 0.0, kInf };
  c.sigma_prior = { j.at("sigma_loc").get<double>(), j.at("sigma_scale").get<double>(), 0.0, kInf };
  c.lambda_prior = { j.at("lambda_loc").get<double>(), j.at("lambda_scale").get<double>(), 0.0, kInf };
  c.epsilon_min = j.at("epsilon_min").get<double>();
  c.y_best_observed = j.at("y_best_observed").get<double>();
  return c;
}

inline nlohmann::json fitted_model_to_json(const FittedModel& m, const FitConfig& fit_cfg)
{
  nlohmann::json j;
  j["format"] = "lcgp-fit";
  j["version"] = 1;
  j["family"] = std::string(to_string(m.family));
  j["data"] = { { "sizes", m.data.sizes }, { "accuracies", m.data.accuracies } };
  const auto& p = m.params_hat;
  j["params"] = { { "theta1", p.mean.theta1 }, { "theta2", p.mean.theta2 },
                  { "epsilon", p.mean.epsilon }, { "tau", p.tau },
                  { "sigma", p.kernel.sigma },   { "lambda", p.kernel.lambda } };
  j["prior"] = prior_config_to_json(m.prior_cfg);
  j["objective_value"] = m.objective_value;
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& r : m.optimizer_trace)
    trace.push_back({ { "initial_objective", detail::finite_or_null(r.initial_objective) },
                      { "final_objective", detail::finite_or_null(r.final_objective) },
                      { "iterations", r.iterations },
                      { "failed", r.failed } });
  j["optimizer_trace"] = trace;
  j["metadata"] = { { "seed", m.seed },
                    { "prior_hash", prior_config_hash(m.prior_cfg) },
                    { "n_starts", fit_cfg.n_starts },
                    { "max_iters", fit_cfg.max_iters },
                    { "convergence_tol", fit_cfg.convergence_tol },
                    { "epsilon_optimized", !fit_cfg.frozen_eta.has_value() },
                    { "predictive_truncation", "per-point marginals truncated to [0,1]" } };
  return j;
}

inline FittedModel fitted_model_from_json(const nlohmann::json& j)
{
  try {
    if (j.at("format").get<std::string>() != "lcgp-fit")
      throw ParseError("not an lcgp fit document");
    FittedModel m;
    m.family = parse_mean_family(j.at("family").get<std::string>());
    m.data.sizes = j.at("data").at("sizes").get<std::vector<double>>();
    m.data.accuracies = j.at("data").at("accuracies").get<std::vector<double>>();
    const auto& p = j.at("params");
    m.params_hat.family = m.family;
    m.params_hat.mean = { p.at("theta1").get<double>(), p.at("theta2").get<double>(),
                          p.at("epsilon").get<double>() };
    m.params_hat.kernel = { p.at("sigma").get<double>(), p.at("lambda").get<double>() };
    m.params_hat.tau = p.at("tau").get<double>();
    m.prior_cfg = prior_config_from_json(j.at("prior"));
    m.objective_value = j.at("objective_value").get<double>();
    for (const auto& r : j.at("optimizer_trace"))
      m.optimizer_trace.push_back({ detail::number_or_neg_inf(r.at("initial_objective")),
                                    detail::number_or_neg_inf(r.at("final_objective")),
                                    r.at("iterations").get<int>(), r.at("failed").get<bool>() });
    m.seed = j.at("metadata").at("seed").get<std::uint64_t>();
    m.data.validate_curve();
    m.params_hat.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed fit document: ") + e.what());
  } catch (const InvalidParams& e) {
    throw ParseError(std::string("invalid fit document: ") + e.what());
  }
}

inline void write_fitted_model(const FittedModel& m, const FitConfig& fit_cfg, const std::string& path)
{
  auto out = detail::open_out(path);
  out << fitted_model_to_json(m, fit_cfg).dump(2) << '\n';
}

inline FittedModel read_fitted_model(const std::string& path)
{
  auto in = detail::open_in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("fit file is not valid JSON: ") + e.what());
  }
  return fitted_model_from_json(j);
}

} // namespace lcgp
