#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atr/spectral.hpp"

namespace atr {

/// Operator m(D) + V(x) − iχ(x) with real V and χ ≥ 0.
class OperatorSpec {
 public:
  /// potential and damping must be grid-layout fields on the same grid with
  /// imaginary parts ≤ 1e-14; damping must be ≥ -1e-14 pointwise.
  /// Throws std::invalid_argument otherwise.
  OperatorSpec(Multiplier multiplier, Field potential, Field damping,
               std::optional<double> preset_parameter = std::nullopt);

  const TorusGrid& grid() const noexcept { return potential_.grid(); }
  const Multiplier& multiplier() const noexcept { return multiplier_; }
  const Field& potential() const noexcept { return potential_; }
  const Field& damping() const noexcept { return damping_; }
  /// The parameter a when built by preset_paper.
  std::optional<double> preset_parameter() const noexcept { return preset_parameter_; }

  /// m(k) in native transform order, Nyquist entries zero.
  std::span<const double> multiplier_table() const noexcept { return multiplier_table_; }
  std::span<const double> potential_values() const noexcept { return potential_real_; }
  std::span<const double> damping_values() const noexcept { return damping_real_; }

  double multiplier_bound() const noexcept { return multiplier_bound_; }
  double potential_bound() const noexcept { return potential_bound_; }
  double damping_bound() const noexcept { return damping_bound_; }
  /// sup|m| + max|V| + max|χ|.
  double norm_bound() const noexcept { return multiplier_bound_ + potential_bound_ + damping_bound_; }

  OperatorSpec with_damping(Field damping) const;

 private:
  Multiplier multiplier_;
  Field potential_;
  Field damping_;
  std::optional<double> preset_parameter_;
  std::vector<double> multiplier_table_;
  std::vector<double> potential_real_;
  std::vector<double> damping_real_;
  double multiplier_bound_ = 0.0;
  double potential_bound_ = 0.0;
  double damping_bound_ = 0.0;
};

struct ForcingSpec {
  Field f;
  std::string description;
};

enum class DampingPreset { chi0, chi1, chi2 };

/// "chi0" | "chi1" | "chi2"; throws ConfigError for anything else.
DampingPreset parse_damping_preset(std::string_view name);
std::string_view to_string(DampingPreset preset);

/// Sum of the three nearest 2π-images of e^{-alpha (x - center)²}.
double periodized_gaussian(double x, double center, double alpha);

/// V = −a cos x1.
Field torus_potential(const TorusGrid& grid, double a);
/// χ0 ≡ 0, χ1 = ½e^{−5(x1−π/2)²}, χ2 = χ1 + ½e^{−5(x1+π/2)²}, each periodized.
Field preset_damping(const TorusGrid& grid, DampingPreset preset);
/// −5(G(x − (−0.9, −0.8)) + G(x − (0.9, 0.8))) e^{i(2x1 + x2)}, G(y) = e^{−3|y|²}
/// periodized over the 3×3 nearest images, Nyquist modes removed.
ForcingSpec preset_forcing(const TorusGrid& grid);

struct Preset {
  OperatorSpec op;
  ForcingSpec forcing;
};

/// The torus model ⟨D⟩⁻¹D_{x2} − a cos x1 − iχ with the standard forcing.
/// Requires a > 0 and a ≠ 1 (ConfigError otherwise).
Preset preset_paper(double a, int n1, int n2, DampingPreset damping);

/// Π(m(D) + V)Πu, where Π removes the Nyquist modes.
Field apply_undamped(const OperatorSpec& spec, const Field& u);
/// Π(m(D) + V − iχ − ω)Πu. No sign condition on ω here.
Field apply_damped(const OperatorSpec& spec, const Field& u, cplx omega);

/// Indicator of {Re g > level}, smoothed by the heat kernel of width
/// `width` and clipped to [0, 1].
Field smoothed_indicator(const Field& g, double level, double width);

enum class OperatorForm {
  undamped,  ///< m(D) + V
  damped,    ///< m(D) + V − iχ
  adjoint    ///< m(D) + V + iχ
};

/// Applies the operator to native-order spectra using owned scratch space.
/// Two transforms per application. Not safe to share between threads; build
/// one per thread.
class OperatorKernel {
 public:
  explicit OperatorKernel(const OperatorSpec& spec);

  const SpectralTransform& transform() const noexcept { return transform_; }

  /// out = Π[(m(k) − shift) + (V ∓ iχ)]Π û for the requested form, Π zeroing
  /// the Nyquist modes. `out` must not alias `spectrum`.
  void apply(std::span<const cplx> spectrum, std::span<cplx> out, cplx shift,
             OperatorForm form = OperatorForm::damped);

 private:
  SpectralTransform transform_;
  std::vector<double> multiplier_;
  std::vector<cplx> coefficient_damped_;
  std::vector<cplx> coefficient_undamped_;
  std::vector<cplx> coefficient_adjoint_;
  std::vector<cplx> input_;
  std::vector<cplx> grid_buffer_;
  std::vector<cplx> product_spectrum_;
};

}  // namespace atr
