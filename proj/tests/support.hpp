#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "atr/spectral.hpp"

namespace testing {

using atr::cplx;

inline double kTwoPiOver(int n) { return atr::kTwoPi / n; }

inline atr::Field random_field(const atr::TorusGrid& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<cplx> v(g.size());
  for (auto& z : v) z = cplx(n(rng), n(rng));
  return atr::Field(g, std::move(v));
}

inline atr::Field random_real_field(const atr::TorusGrid& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<cplx> v(g.size());
  for (auto& z : v) z = n(rng);
  return atr::Field(g, std::move(v));
}

inline atr::Field band_limited_field(const atr::TorusGrid& g, unsigned seed, int band) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<cplx> v(g.size(), 0.0);
  for (int k1 = -band; k1 <= band; ++k1)
    for (int k2 = -band; k2 <= band; ++k2) {
      const cplx c(n(rng), n(rng));
      for (int i = 0; i < g.n1(); ++i)
        for (int j = 0; j < g.n2(); ++j) v[g.index(i, j)] += c * std::polar(1.0, k1 * g.x1(i) + k2 * g.x2(j));
    }
  return atr::Field(g, std::move(v));
}

inline double max_diff(const atr::Field& a, const atr::Field& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

inline double rel_l2(const atr::Field& a, const atr::Field& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += std::norm(a.values()[i] - b.values()[i]);
    den += std::norm(b.values()[i]);
  }
  return std::sqrt(num / den);
}

// Direct O(N²) evaluation of (1/(n1 n2)) Σ u(x) e^{-ik·x}.
inline cplx naive_coefficient(const atr::Field& u, int k1, int k2) {
  const auto& g = u.grid();
  cplx acc = 0.0;
  for (int i = 0; i < g.n1(); ++i)
    for (int j = 0; j < g.n2(); ++j) acc += u.at(i, j) * std::polar(1.0, -(k1 * g.x1(i) + k2 * g.x2(j)));
  return acc / static_cast<double>(g.size());
}

// Frequencies strictly inside the Nyquist bound, in a fixed order.
struct ModeBasis {
  std::vector<std::pair<int, int>> modes;
  explicit ModeBasis(const atr::TorusGrid& g) {
    for (int k1 = -g.n1() / 2 + 1; k1 < g.n1() / 2; ++k1)
      for (int k2 = -g.n2() / 2 + 1; k2 < g.n2() / 2; ++k2) modes.emplace_back(k1, k2);
  }
  std::size_t size() const { return modes.size(); }
};

}  // namespace testing
