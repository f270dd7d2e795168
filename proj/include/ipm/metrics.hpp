#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ipm {

class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct PairedSeries {
  std::vector<double> reference;
  std::vector<double> simulated;
  std::string label;

  void check() const {
    if (reference.empty()) {
      throw MetricError(label + ": empty series");
    }
    if (reference.size() != simulated.size()) {
      throw MetricError(label + ": series lengths differ (" + std::to_string(reference.size()) + " vs " +
                        std::to_string(simulated.size()) + ")");
    }
  }
  double n() const { return static_cast<double>(reference.size()); }
};

inline double rmse(const PairedSeries& s) {
  s.check();
  double sum = 0.0;
  for (std::size_t i = 0; i < s.reference.size(); ++i) {
    double d = s.reference[i] - s.simulated[i];
    sum += d * d;
  }
  return std::sqrt(sum / s.n());
}

/// Relative to the reference; a zero reference entry is an error.
inline double rmspe(const PairedSeries& s) {
  s.check();
  double sum = 0.0;
  for (std::size_t i = 0; i < s.reference.size(); ++i) {
    if (s.reference[i] == 0.0) {
      throw MetricError(s.label + ": reference entry " + std::to_string(i) + " is zero; percent error undefined");
    }
    double d = (s.reference[i] - s.simulated[i]) / s.reference[i];
    sum += d * d;
  }
  return std::sqrt(sum / s.n());
}

struct TheilResult {
  double U = 0.0;
  // Bias, variance and covariance shares; absent when the series coincide.
  std::optional<double> U_M, U_S, U_C;
};

inline TheilResult theil(const PairedSeries& s) {
  s.check();
  const double n = s.n();
  double sse = 0.0, ss_ref = 0.0, ss_sim = 0.0, mean_ref = 0.0, mean_sim = 0.0;
  for (std::size_t i = 0; i < s.reference.size(); ++i) {
    double y = s.reference[i], x = s.simulated[i];
    sse += (y - x) * (y - x);
    ss_ref += y * y;
    ss_sim += x * x;
    mean_ref += y;
    mean_sim += x;
  }
  mean_ref /= n;
  mean_sim /= n;
  const double denom = std::sqrt(ss_ref / n) + std::sqrt(ss_sim / n);
  if (denom == 0.0) {
    throw MetricError(s.label + ": both series are zero; Theil's U undefined");
  }
  TheilResult r;
  r.U = std::sqrt(sse / n) / denom;
  if (sse == 0.0) {
    return r;
  }
  // Population moments so the three shares add up exactly.
  double var_ref = 0.0, var_sim = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < s.reference.size(); ++i) {
    double dy = s.reference[i] - mean_ref, dx = s.simulated[i] - mean_sim;
    var_ref += dy * dy;
    var_sim += dx * dx;
    cov += dy * dx;
  }
  var_ref /= n;
  var_sim /= n;
  cov /= n;
  const double sd_ref = std::sqrt(var_ref), sd_sim = std::sqrt(var_sim);
  const double rho = sd_ref > 0.0 && sd_sim > 0.0 ? cov / (sd_ref * sd_sim) : 0.0;
  const double mse = sse / n;
  r.U_M = (mean_sim - mean_ref) * (mean_sim - mean_ref) / mse;
  r.U_S = (sd_sim - sd_ref) * (sd_sim - sd_ref) / mse;
  r.U_C = 2.0 * (1.0 - rho) * sd_ref * sd_sim / mse;
  return r;
}

struct FitReport {
  std::string label;
  std::size_t n = 0;
  double rmse = 0.0;
  std::optional<double> rmspe;  // absent when a reference entry is zero
  std::optional<TheilResult> theil;
};

inline FitReport fit_report(const PairedSeries& s) {
  FitReport r;
  r.label = s.label;
  r.n = s.reference.size();
  r.rmse = rmse(s);
  try {
    r.rmspe = rmspe(s);
  } catch (const MetricError&) {
  }
  try {
    r.theil = theil(s);
  } catch (const MetricError&) {
  }
  return r;
}

}  // namespace ipm
