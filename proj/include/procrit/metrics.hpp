#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace procrit {

struct MetricConfig {
  /// Relative-accuracy thresholds, strictly increasing in (0, 1).
  std::vector<double> mra_thresholds = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  double acc_tolerance = 10.0;
  /// Bin edges over ground-truth progress; the last bin is closed.
  std::vector<double> interval_edges = {0, 20, 40, 60, 80, 100};
  /// The relative error divides by max(|y|, floor), keeping y = 0 defined.
  double zero_gt_denominator_floor = 1.0;
  /// Sensitivity mode: drop y = 0 samples from MRA instead of flooring.
  bool mra_exclude_zero_gt = false;

  void validate() const;
};

/// Mean over samples of the fraction of thresholds t with
/// |pred - gt| / max(|gt|, floor) < 1 - t. Throws UsageError on length
/// mismatch or empty input (NaN if exclusion leaves nothing).
double mra(std::span<const double> preds, std::span<const double> gts, const MetricConfig& cfg);
double mae(std::span<const double> preds, std::span<const double> gts);
/// Fraction with |pred - gt| <= tol.
double acc_at(std::span<const double> preds, std::span<const double> gts, double tol);

struct IntervalBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> mae;
};

/// Per-bin MAE with samples binned by ground truth into [e_j, e_j+1); the
/// final bin also takes gt == e_last. Samples outside the edges fall in no bin.
std::vector<IntervalBin> interval_mae(std::span<const double> preds, std::span<const double> gts,
                                      std::span<const double> edges);

double failure_accuracy(std::span<const bool> preds, std::span<const bool> gts);
double failure_accuracy(const std::vector<bool>& preds, const std::vector<bool>& gts);

struct EfficiencyStats {
  std::optional<double> mean_latency_s;
  std::optional<double> median_latency_s;
  std::optional<double> mean_tokens;
  std::optional<double> median_tokens;
};

EfficiencyStats efficiency_stats(std::span<const double> latencies_s, std::span<const double> token_counts);

struct MetricReport {
  std::string model;
  std::string split;
  std::string question_type;
  std::optional<double> mra;
  std::optional<double> mae;
  std::optional<double> acc_at_tol;
  double acc_tolerance = 10.0;
  std::vector<IntervalBin> interval_mae;
  std::optional<double> failure_accuracy;
  std::size_t n_samples = 0;
  std::size_t n_scored = 0;
  std::size_t n_parse_failures = 0;
  std::size_t n_transport_errors = 0;
  std::size_t n_out_of_range = 0;
  EfficiencyStats efficiency;
  /// True when any token count was approximated from the text length.
  bool tokens_approximate = false;
};

/// Deterministic fields only; latency lives in the efficiency table.
std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& text);

/// Summary table: one row per (model, split).
void write_summary_csv(std::span<const MetricReport> reports, std::ostream& out);
/// Plot-ready per-interval MAE, one row per (model, split, bin).
void write_interval_csv(std::span<const MetricReport> reports, std::ostream& out);
void write_efficiency_csv(std::span<const MetricReport> reports, std::ostream& out);

}  // namespace procrit
