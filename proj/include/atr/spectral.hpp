#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace atr {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Uniform periodic grid on [0, 2π)², nodes x = 2πj/n along each axis.
class TorusGrid {
 public:
  /// Both sizes must be even and at least 8.
  TorusGrid(int n1, int n2);

  int n1() const noexcept { return n1_; }
  int n2() const noexcept { return n2_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(n1_) * n2_; }

  double x1(int i) const noexcept { return kTwoPi * i / n1_; }
  double x2(int j) const noexcept { return kTwoPi * j / n2_; }
  double cell_area() const noexcept { return (kTwoPi / n1_) * (kTwoPi / n2_); }

  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) * n2_ + j;
  }

  bool operator==(const TorusGrid&) const = default;

 private:
  int n1_;
  int n2_;
};

/// Storage layout of a Field. Both are row-major with the first axis slow.
///
///   grid     value at node (x1_i, x2_j) lives at i*n2 + j.
///   fourier  coefficient û(k1, k2), k_a ∈ [-n_a/2, n_a/2), lives at
///            (k1 + n1/2)*n2 + (k2 + n2/2). Coefficients follow the
///            plane-wave-unit convention û(k) = (1/(n1 n2)) Σ_x u(x) e^{-ik·x},
///            so e^{ik·x} has coefficient exactly 1 at k.
enum class Layout { grid, fourier };

/// Complex-valued function on the discrete torus. Immutable once built.
class Field {
 public:
  explicit Field(TorusGrid grid, Layout layout = Layout::grid);
  /// Throws std::invalid_argument on a size mismatch or a non-finite entry.
  Field(TorusGrid grid, std::vector<cplx> values, Layout layout = Layout::grid);

  /// Samples fn(x1, x2) at every grid node.
  template <class Fn>
  static Field sample(const TorusGrid& grid, Fn&& fn) {
    std::vector<cplx> v(grid.size());
    for (int i = 0; i < grid.n1(); ++i)
      for (int j = 0; j < grid.n2(); ++j) v[grid.index(i, j)] = cplx(fn(grid.x1(i), grid.x2(j)));
    return Field(grid, std::move(v));
  }
  static Field constant(const TorusGrid& grid, cplx c);
  /// e^{i(k1 x1 + k2 x2)} on the grid.
  static Field plane_wave(const TorusGrid& grid, int k1, int k2);

  const TorusGrid& grid() const noexcept { return grid_; }
  Layout layout() const noexcept { return layout_; }
  std::span<const cplx> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  /// Grid value at node (i, j); requires the grid layout.
  cplx at(int i, int j) const;
  /// Fourier coefficient at frequency (k1, k2); requires the fourier layout.
  cplx coefficient(int k1, int k2) const;

  Field conj() const;
  /// Pointwise product of two grid-layout fields. No Nyquist projection.
  Field times(const Field& other) const;
  double max_abs() const noexcept;

  friend Field operator+(const Field& a, const Field& b);
  friend Field operator-(const Field& a, const Field& b);
  friend Field operator*(cplx c, const Field& a);

 private:
  TorusGrid grid_;
  Layout layout_;
  std::vector<cplx> values_;
};

/// Real Fourier symbol k ↦ m(k) acting as m(D).
class Multiplier {
 public:
  using Symbol = std::function<double(int k1, int k2)>;

  explicit Multiplier(Symbol symbol, std::string name = "custom");

  /// m(k) = k2 / sqrt(1 + k1² + k2²), the symbol of ⟨D⟩⁻¹D_{x2}.
  static Multiplier normalized_vertical();
  static Multiplier constant(double c);

  double operator()(int k1, int k2) const { return symbol_(k1, k2); }
  const std::string& name() const noexcept { return name_; }

  /// Values in native transform order (see SpectralTransform); Nyquist
  /// entries are set to zero. Throws if any value is non-finite.
  std::vector<double> tabulate(const TorusGrid& grid) const;
  /// sup |m(k)| over the grid's non-Nyquist frequencies.
  double sup_abs(const TorusGrid& grid) const;

 private:
  Symbol symbol_;
  std::string name_;
};

/// ⟨k⟩ = sqrt(1 + |k|²).
inline double japanese_bracket(int k1, int k2) {
  return std::sqrt(1.0 + static_cast<double>(k1) * k1 + static_cast<double>(k2) * k2);
}

/// Forward/inverse 2-D DFT on contiguous buffers in native frequency order:
/// row r holds k1 = r for r < n1/2 and k1 = r - n1 otherwise (likewise for
/// columns), so the Nyquist frequency -n/2 sits at index n/2.
///
/// forward() applies the 1/(n1 n2) normalization. Buffers must not alias.
/// Instances are cheap to copy and safe to use from several threads at once.
class SpectralTransform {
 public:
  explicit SpectralTransform(const TorusGrid& grid);

  const TorusGrid& grid() const noexcept { return grid_; }

  void forward(std::span<const cplx> in, std::span<cplx> out) const;
  void inverse(std::span<const cplx> in, std::span<cplx> out) const;
  void zero_nyquist(std::span<cplx> spectrum) const;

  int k1(int row) const noexcept { return row < grid_.n1() / 2 ? row : row - grid_.n1(); }
  int k2(int col) const noexcept { return col < grid_.n2() / 2 ? col : col - grid_.n2(); }
  bool is_nyquist_row(int row) const noexcept { return row == grid_.n1() / 2; }
  bool is_nyquist_col(int col) const noexcept { return col == grid_.n2() / 2; }

  /// ⟨k⟩^{2s} in native order (Nyquist frequencies included).
  std::vector<double> bracket_weights(double s) const;

 private:
  struct Plans;
  TorusGrid grid_;
  std::shared_ptr<const Plans> plans_;
};

/// Native spectrum → fourier-layout values and back (a half-period shift per axis).
std::vector<cplx> native_to_centered(const TorusGrid& grid, std::span<const cplx> native);
std::vector<cplx> centered_to_native(const TorusGrid& grid, std::span<const cplx> centered);

Field to_fourier(const Field& f);
Field to_grid(const Field& f);

/// Zeroes the Nyquist row and column; returns a field in the input's layout.
Field project_nyquist(const Field& f);

/// to_grid(m(k)·to_fourier(f)) with the Nyquist modes zeroed.
Field apply_multiplier(const Field& f, const Multiplier& m);

/// L² pairing (2π/n1)(2π/n2) Σ u·conj(v) with Lebesgue measure on T².
cplx inner(const Field& u, const Field& v);
double l2_norm(const Field& u);

/// ‖u‖²_{H^s} = (2π)² Σ_k ⟨k⟩^{2s} |û(k)|².
double hs_norm(const Field& u, double s);
/// Several orders from a single transform.
std::vector<double> hs_norms(const Field& u, std::span<const double> orders);
/// H^s norms of native-order spectra for a fixed list of orders, with the
/// weights ⟨k⟩^{2s} tabulated once.
class SobolevNorms {
 public:
  SobolevNorms(const SpectralTransform& transform, std::vector<double> orders);

  const std::vector<double>& orders() const noexcept { return orders_; }
  std::vector<double> evaluate(std::span<const cplx> spectrum) const;

 private:
  std::vector<double> orders_;
  std::vector<std::vector<double>> weights_;
};

}  // namespace atr
