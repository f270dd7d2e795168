#pragma once

// Plain-loop reference for capacity and priority constrained turn allocation.
// Each pass hands every downstream link's remaining capacity to the upstream
// links still sending there, in proportion to their priorities among those
// links, and every sender advances by the largest common fraction of its
// remaining turn demands that fits all its shares. A downstream link that
// fills up stops every link that has a turn to it. Passes repeat until
// nothing changes.

#include <algorithm>
#include <vector>

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat reference_allocation(const Mat& demand, const std::vector<double>& capacity, const Mat& priority,
                                int max_passes = 100000) {
  const std::size_t I = demand.size(), J = capacity.size();
  Mat flow(I, std::vector<double>(J, 0.0));
  std::vector<double> cap(J);
  for (std::size_t j = 0; j < J; ++j) {
    cap[j] = std::max(0.0, capacity[j]);
  }
  std::vector<char> sending(I, 0);
  for (std::size_t i = 0; i < I; ++i) {
    double d = 0.0;
    for (double x : demand[i]) {
      d += x;
    }
    sending[i] = d > 0.0;
  }
  auto remaining = [&](std::size_t i, std::size_t j) { return demand[i][j] - flow[i][j]; };
  for (int pass = 0; pass < max_passes; ++pass) {
    // A full downstream link blocks all of its feeders.
    for (std::size_t j = 0; j < J; ++j) {
      if (cap[j] <= 1e-12 * std::max(1.0, capacity[j])) {
        for (std::size_t i = 0; i < I; ++i) {
          if (demand[i][j] > 0.0) {
            sending[i] = 0;
          }
        }
      }
    }
    for (std::size_t i = 0; i < I; ++i) {
      double left = 0.0, total = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        left += remaining(i, j);
        total += demand[i][j];
      }
      if (left <= 1e-12 * std::max(1.0, total)) {
        sending[i] = 0;
      }
    }
    std::vector<double> fraction(I, 0.0);
    bool any = false;
    for (std::size_t i = 0; i < I; ++i) {
      if (!sending[i]) {
        continue;
      }
      double frac = 1.0;
      for (std::size_t j = 0; j < J; ++j) {
        if (remaining(i, j) <= 0.0) {
          continue;
        }
        double wsum = 0.0;
        int n = 0;
        for (std::size_t k = 0; k < I; ++k) {
          if (sending[k] && remaining(k, j) > 0.0) {
            wsum += priority[k][j];
            ++n;
          }
        }
        const double share = wsum > 0.0 ? priority[i][j] / wsum : 1.0 / n;
        frac = std::min(frac, share * cap[j] / remaining(i, j));
      }
      fraction[i] = frac;
      any = any || frac > 0.0;
    }
    if (!any) {
      break;
    }
    std::vector<double> used(J, 0.0);
    double moved = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
      if (fraction[i] <= 0.0) {
        continue;
      }
      for (std::size_t j = 0; j < J; ++j) {
        const double add = fraction[i] * remaining(i, j);
        flow[i][j] += add;
        used[j] += add;
        moved += add;
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      cap[j] -= used[j];
    }
    if (moved < 1e-12) {
      break;
    }
  }
  return flow;
}

}  // namespace oracle
