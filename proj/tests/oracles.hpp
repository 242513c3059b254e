#pragma once

// Brute-force reference implementations. They share no code with the
// library beyond plain data types, so a bug has to be made twice to pass.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "fsood/geometry.hpp"
#include "fsood/linalg.hpp"
#include "fsood/membank.hpp"

namespace oracle {

struct BankEntry {
  std::vector<double> z;
  int label = 0;
  std::uint64_t offset = 0;
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) s += a[d] * b[d];
  return s;
}

/// (1/M) sum_i phi(c_i) * (L_in,i + L_cross,i), written as the textbook
/// double loops with plain exp and log.
inline double mcl_total(const std::vector<std::vector<double>>& z, const std::vector<int>& y,
                        const std::vector<double>& c, const std::vector<BankEntry>& bank, double tau,
                        double theta, double w0, double alpha) {
  const std::size_t m = z.size();
  const std::size_t n = bank.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double phi = c[i] > theta ? c[i] : 0.0;

    double denom_in = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (k != i) denom_in += std::exp(dot(z[i], z[k]) / tau);
    }
    double l_in = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i || y[j] != y[i]) continue;
      l_in += std::log(std::exp(dot(z[i], z[j]) / tau) / denom_in);
    }
    l_in *= -1.0 / (static_cast<double>(m) * static_cast<double>(m));

    double l_cross = 0.0;
    if (n > 0) {
      double denom_bank = 0.0;
      for (const auto& e : bank) denom_bank += std::exp(dot(z[i], e.z) / tau);
      for (const auto& e : bank) {
        double w = 0.0;
        if (e.label == y[i]) w = std::max(w0 - alpha * static_cast<double>(e.offset), 0.0);
        l_cross += w * std::log(std::exp(dot(z[i], e.z) / tau) / denom_bank);
      }
      l_cross *= -1.0 / (static_cast<double>(m) * static_cast<double>(n));
    }
    total += phi * (l_in + l_cross);
  }
  return total / static_cast<double>(m);
}

inline bool inside(const fsood::OrientedBox& b, double px, double py) {
  const double c = std::cos(b.angle()), s = std::sin(b.angle());
  const double dx = px - b.cx(), dy = py - b.cy();
  return std::abs(c * dx + s * dy) <= 0.5 * b.w() && std::abs(-s * dx + c * dy) <= 0.5 * b.h();
}

/// Point-sampling IoU: uniform samples over the joint axis-aligned envelope,
/// IoU = #(in both) / #(in either).
inline double monte_carlo_iou(const fsood::OrientedBox& a, const fsood::OrientedBox& b,
                              std::size_t samples, std::mt19937_64& gen) {
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  for (const auto* box : {&a, &b}) {
    const double c = std::abs(std::cos(box->angle())), s = std::abs(std::sin(box->angle()));
    const double ex = 0.5 * (c * box->w() + s * box->h());
    const double ey = 0.5 * (s * box->w() + c * box->h());
    lo_x = std::min(lo_x, box->cx() - ex);
    hi_x = std::max(hi_x, box->cx() + ex);
    lo_y = std::min(lo_y, box->cy() - ey);
    hi_y = std::max(hi_y, box->cy() + ey);
  }
  std::uniform_real_distribution<double> ux(lo_x, hi_x), uy(lo_y, hi_y);
  std::size_t both = 0, either = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    const double px = ux(gen), py = uy(gen);
    const bool in_a = inside(a, px, py), in_b = inside(b, px, py);
    both += (in_a && in_b) ? 1 : 0;
    either += (in_a || in_b) ? 1 : 0;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

/// Axis-aligned IoU from center/size form.
inline double axis_aligned_iou(double cx1, double cy1, double w1, double h1, double cx2, double cy2,
                               double w2, double h2) {
  const double ix = std::max(0.0, std::min(cx1 + w1 / 2, cx2 + w2 / 2) - std::max(cx1 - w1 / 2, cx2 - w2 / 2));
  const double iy = std::max(0.0, std::min(cy1 + h1 / 2, cy2 + h2 / 2) - std::max(cy1 - h1 / 2, cy2 - h2 / 2));
  const double inter = ix * iy;
  return inter / (w1 * h1 + w2 * h2 - inter);
}

/// Keeps every record ever enqueued; the bank must equal the last N.
struct ReplayBank {
  std::size_t capacity;
  std::vector<fsood::ProposalRecord> stream;

  void push(std::vector<fsood::ProposalRecord> batch, std::uint64_t step) {
    for (auto& r : batch) {
      r.step = step;
      stream.push_back(std::move(r));
    }
  }
  std::vector<fsood::ProposalRecord> last() const {
    const std::size_t n = std::min(capacity, stream.size());
    return {stream.end() - static_cast<std::ptrdiff_t>(n), stream.end()};
  }
};

}  // namespace oracle
