#include "procrit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "procrit/errors.hpp"
#include "procrit/numfmt.hpp"

namespace procrit {

namespace {

using ojson = nlohmann::ordered_json;

void check_pairs(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw UsageError(std::string(what) + ": prediction and ground-truth lengths differ");
  if (a == 0) throw UsageError(std::string(what) + ": empty input");
}

std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::optional<double> mean(std::span<const double> v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::optional<double> read_opt(const ojson& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

}  // namespace

void MetricConfig::validate() const {
  if (mra_thresholds.empty()) throw ConfigError("mra thresholds must not be empty");
  for (std::size_t i = 0; i < mra_thresholds.size(); ++i) {
    if (!(mra_thresholds[i] > 0.0 && mra_thresholds[i] < 1.0))
      throw ConfigError("mra thresholds must lie in (0, 1)");
    if (i > 0 && !(mra_thresholds[i] > mra_thresholds[i - 1]))
      throw ConfigError("mra thresholds must be strictly increasing");
  }
  if (interval_edges.size() < 2) throw ConfigError("need at least two interval edges");
  for (std::size_t i = 1; i < interval_edges.size(); ++i)
    if (!(interval_edges[i] > interval_edges[i - 1]))
      throw ConfigError("interval edges must be strictly increasing");
  if (interval_edges.front() > 0.0 || interval_edges.back() < 100.0)
    throw ConfigError("interval edges must span [0, 100]");
  if (!(acc_tolerance >= 0.0)) throw ConfigError("acc_tolerance must be >= 0");
  if (!(zero_gt_denominator_floor > 0.0)) throw ConfigError("zero-gt denominator floor must be positive");
}

double mra(std::span<const double> preds, std::span<const double> gts, const MetricConfig& cfg) {
  check_pairs(preds.size(), gts.size(), "mra");
  if (cfg.mra_thresholds.empty()) throw ConfigError("mra thresholds must not be empty");
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (cfg.mra_exclude_zero_gt && gts[i] == 0.0) continue;
    const double rel = std::abs(preds[i] - gts[i]) / std::max(std::abs(gts[i]), cfg.zero_gt_denominator_floor);
    std::size_t pass = 0;
    for (double t : cfg.mra_thresholds) pass += rel < 1.0 - t ? 1 : 0;
    total += static_cast<double>(pass) / static_cast<double>(cfg.mra_thresholds.size());
    ++n;
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(n);
}

double mae(std::span<const double> preds, std::span<const double> gts) {
  check_pairs(preds.size(), gts.size(), "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += std::abs(preds[i] - gts[i]);
  return total / static_cast<double>(preds.size());
}

double acc_at(std::span<const double> preds, std::span<const double> gts, double tol) {
  check_pairs(preds.size(), gts.size(), "acc_at");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += std::abs(preds[i] - gts[i]) <= tol ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<IntervalBin> interval_mae(std::span<const double> preds, std::span<const double> gts,
                                      std::span<const double> edges) {
  if (preds.size() != gts.size()) throw UsageError("interval_mae: length mismatch");
  if (edges.size() < 2) throw UsageError("interval_mae: need at least two edges");
  std::vector<IntervalBin> bins(edges.size() - 1);
  std::vector<double> sums(bins.size(), 0.0);
  for (std::size_t j = 0; j < bins.size(); ++j) {
    bins[j].lo = edges[j];
    bins[j].hi = edges[j + 1];
  }
  for (std::size_t i = 0; i < gts.size(); ++i) {
    const double y = gts[i];
    if (y < edges.front() || y > edges.back()) continue;
    auto it = std::upper_bound(edges.begin(), edges.end(), y);
    std::size_t j = static_cast<std::size_t>(it - edges.begin());
    j = j == 0 ? 0 : j - 1;
    if (j >= bins.size()) j = bins.size() - 1;
    ++bins[j].count;
    sums[j] += std::abs(preds[i] - y);
  }
  for (std::size_t j = 0; j < bins.size(); ++j)
    if (bins[j].count > 0) bins[j].mae = sums[j] / static_cast<double>(bins[j].count);
  return bins;
}

double failure_accuracy(std::span<const bool> preds, std::span<const bool> gts) {
  check_pairs(preds.size(), gts.size(), "failure_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double failure_accuracy(const std::vector<bool>& preds, const std::vector<bool>& gts) {
  check_pairs(preds.size(), gts.size(), "failure_accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == gts[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

EfficiencyStats efficiency_stats(std::span<const double> latencies_s, std::span<const double> token_counts) {
  EfficiencyStats s;
  s.mean_latency_s = mean(latencies_s);
  s.median_latency_s = median({latencies_s.begin(), latencies_s.end()});
  s.mean_tokens = mean(token_counts);
  s.median_tokens = median({token_counts.begin(), token_counts.end()});
  return s;
}

std::string report_to_json(const MetricReport& r) {
  ojson j;
  j["model"] = r.model;
  j["split"] = r.split;
  j["question_type"] = r.question_type;
  j["mra"] = opt(r.mra);
  j["mae"] = opt(r.mae);
  j["acc_at_tol"] = opt(r.acc_at_tol);
  j["acc_tolerance"] = r.acc_tolerance;
  ojson bins = ojson::array();
  for (const auto& b : r.interval_mae)
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"mae", opt(b.mae)}});
  j["interval_mae"] = std::move(bins);
  j["failure_accuracy"] = opt(r.failure_accuracy);
  j["n_samples"] = r.n_samples;
  j["n_scored"] = r.n_scored;
  j["n_parse_failures"] = r.n_parse_failures;
  j["n_transport_errors"] = r.n_transport_errors;
  j["n_out_of_range"] = r.n_out_of_range;
  j["mean_token_count"] = opt(r.efficiency.mean_tokens);
  j["median_token_count"] = opt(r.efficiency.median_tokens);
  j["token_count_approximate"] = r.tokens_approximate;
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  try {
    const ojson j = ojson::parse(text);
    MetricReport r;
    r.model = j.at("model").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.question_type = j.at("question_type").get<std::string>();
    r.mra = read_opt(j, "mra");
    r.mae = read_opt(j, "mae");
    r.acc_at_tol = read_opt(j, "acc_at_tol");
    r.acc_tolerance = j.at("acc_tolerance").get<double>();
    for (const auto& b : j.at("interval_mae"))
      r.interval_mae.push_back({b.at("lo").get<double>(), b.at("hi").get<double>(),
                                b.at("count").get<std::size_t>(), read_opt(b, "mae")});
    r.failure_accuracy = read_opt(j, "failure_accuracy");
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.n_scored = j.at("n_scored").get<std::size_t>();
    r.n_parse_failures = j.at("n_parse_failures").get<std::size_t>();
    r.n_transport_errors = j.at("n_transport_errors").get<std::size_t>();
    r.n_out_of_range = j.at("n_out_of_range").get<std::size_t>();
    r.efficiency.mean_tokens = read_opt(j, "mean_token_count");
    r.efficiency.median_tokens = read_opt(j, "median_token_count");
    r.tokens_approximate = j.at("token_count_approximate").get<bool>();
    return r;
  } catch (const ojson::exception& e) {
    throw ParseError(std::string("metric report: ") + e.what());
  }
}

void write_summary_csv(std::span<const MetricReport> reports, std::ostream& out) {
  out << "model,split,question_type,n_samples,n_scored,n_parse_failures,n_transport_errors,mra,mae,"
         "acc_at_tol,failure_accuracy\n";
  for (const auto& r : reports)
    out << r.model << ',' << r.split << ',' << r.question_type << ',' << r.n_samples << ',' << r.n_scored
        << ',' << r.n_parse_failures << ',' << r.n_transport_errors << ',' << format_optional(r.mra) << ','
        << format_optional(r.mae) << ',' << format_optional(r.acc_at_tol) << ','
        << format_optional(r.failure_accuracy) << '\n';
}

void write_interval_csv(std::span<const MetricReport> reports, std::ostream& out) {
  out << "model,split,bin_lo,bin_hi,count,mae\n";
  for (const auto& r : reports)
    for (const auto& b : r.interval_mae)
      out << r.model << ',' << r.split << ',' << format_double(b.lo) << ',' << format_double(b.hi) << ','
          << b.count << ',' << format_optional(b.mae) << '\n';
}

void write_efficiency_csv(std::span<const MetricReport> reports, std::ostream& out) {
  out << "model,split,mean_latency_s,median_latency_s,mean_tokens,median_tokens,token_source\n";
  for (const auto& r : reports)
    out << r.model << ',' << r.split << ',' << format_optional(r.efficiency.mean_latency_s) << ','
        << format_optional(r.efficiency.median_latency_s) << ',' << format_optional(r.efficiency.mean_tokens)
        << ',' << format_optional(r.efficiency.median_tokens) << ','
        << (r.tokens_approximate ? "approximate" : "reported") << '\n';
}

}  // namespace procrit
