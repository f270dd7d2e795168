#pragma once

// Pairs two run outputs bin by bin and lays the fit statistics out as text
// tables: one column per series channel, or one column per experiment level.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipm/metrics.hpp"
#include "ipm/output.hpp"

namespace ipm {

/// Appends matching bins of two channels; bins missing on either side are skipped.
inline void append_pairs(const std::vector<Series>& ref, const std::vector<Series>& sim, PairedSeries& out) {
  for (const auto& r : ref) {
    auto it = std::find_if(sim.begin(), sim.end(), [&](const Series& s) { return s.id == r.id; });
    if (it == sim.end()) {
      throw MetricError("simulated output lacks series '" + r.id + "'");
    }
    if (it->values.size() != r.values.size()) {
      throw MetricError("series '" + r.id + "' has a different number of bins");
    }
    for (std::size_t b = 0; b < r.values.size(); ++b) {
      if (std::isnan(r.values[b]) || std::isnan(it->values[b])) {
        continue;
      }
      out.reference.push_back(r.values[b]);
      out.simulated.push_back(it->values[b]);
    }
  }
}

struct ChannelPairs {
  PairedSeries counts{{}, {}, "counts"};
  PairedSeries times{{}, {}, "OD times"};

  void add(const RunOutput& ref, const RunOutput& sim) {
    append_pairs(ref.sensors, sim.sensors, counts);
    append_pairs(ref.od_times, sim.od_times, times);
  }
};

struct ChannelFit {
  std::optional<FitReport> counts, times;
};

/// Percent error over the bins with a non-zero reference. Bins where the
/// reference is zero carry no relative information.
inline std::optional<double> rmspe_nonzero(const PairedSeries& s) {
  PairedSeries f{{}, {}, s.label};
  for (std::size_t i = 0; i < s.reference.size(); ++i) {
    if (s.reference[i] != 0.0) {
      f.reference.push_back(s.reference[i]);
      f.simulated.push_back(s.simulated[i]);
    }
  }
  if (f.reference.empty()) {
    return std::nullopt;
  }
  return rmspe(f);
}

inline std::optional<FitReport> channel_report(const PairedSeries& s, bool skip_zero_reference) {
  if (s.reference.empty()) {
    return std::nullopt;
  }
  auto r = fit_report(s);
  if (skip_zero_reference && !r.rmspe) {
    r.rmspe = rmspe_nonzero(s);
  }
  return r;
}

inline ChannelFit channel_fit(const ChannelPairs& p, bool skip_zero_reference = false) {
  return {channel_report(p.counts, skip_zero_reference), channel_report(p.times, skip_zero_reference)};
}

inline const char* const kStatNames[] = {"RMSE", "RMSPE", "U", "U^M", "U^S", "U^C"};

inline std::optional<double> stat_value(const std::optional<FitReport>& r, int stat) {
  if (!r) {
    return std::nullopt;
  }
  switch (stat) {
    case 0:
      return r->rmse;
    case 1:
      return r->rmspe;
    case 2:
      return r->theil ? std::optional<double>(r->theil->U) : std::nullopt;
    case 3:
      return r->theil ? r->theil->U_M : std::nullopt;
    case 4:
      return r->theil ? r->theil->U_S : std::nullopt;
    default:
      return r->theil ? r->theil->U_C : std::nullopt;
  }
}

inline std::string cell(const std::optional<double>& v) {
  if (!v) {
    return "undefined";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

/// Statistics as rows, the two channels as columns.
inline std::string fit_table(const ChannelFit& f) {
  std::ostringstream os;
  os << pad("", 8) << pad("Counts", 14) << "OD times\n";
  for (int k = 0; k < 6; ++k) {
    os << pad(kStatNames[k], 8) << pad(cell(stat_value(f.counts, k)), 14) << cell(stat_value(f.times, k)) << "\n";
  }
  return os.str();
}

struct LevelColumn {
  std::string label;
  ChannelFit fit;
};

/// Channel and statistic as rows, one column per level.
inline std::string level_table(const std::string& title, const std::vector<LevelColumn>& cols) {
  std::ostringstream os;
  os << title << "\n" << pad("", 18);
  for (const auto& c : cols) {
    os << pad(c.label, 12);
  }
  os << "\n";
  for (int ch = 0; ch < 2; ++ch) {
    for (int k = 0; k < 6; ++k) {
      os << pad(std::string(ch == 0 ? "Counts " : "OD times ") + kStatNames[k], 18);
      for (const auto& c : cols) {
        os << pad(cell(stat_value(ch == 0 ? c.fit.counts : c.fit.times, k)), 12);
      }
      os << "\n";
    }
  }
  return os.str();
}

inline nlohmann::ordered_json fit_json(const ChannelFit& f) {
  nlohmann::ordered_json j;
  for (int ch = 0; ch < 2; ++ch) {
    nlohmann::ordered_json c;
    const auto& r = ch == 0 ? f.counts : f.times;
    for (int k = 0; k < 6; ++k) {
      auto v = stat_value(r, k);
      c[kStatNames[k]] = v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
    }
    c["n"] = r ? r->n : 0;
    j[ch == 0 ? "counts" : "od_times"] = c;
  }
  return j;
}

}  // namespace ipm
