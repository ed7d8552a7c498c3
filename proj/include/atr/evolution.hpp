#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "atr/operator.hpp"
#include "atr/spectral.hpp"

namespace atr {

enum class Scheme {
  rk4,        ///< classical four-stage Runge–Kutta
  strang_exp  ///< e^{-i dt/2 m(D)} ∘ exact pointwise step ∘ e^{-i dt/2 m(D)}
};

Scheme parse_scheme(std::string_view name);
std::string_view to_string(Scheme scheme);

struct SimConfig {
  double dt = 0.05;
  double t_final = 200.0;
  std::vector<double> snapshot_times;
  /// Must contain 0.
  std::vector<double> norm_orders{0.0, -1.0, -0.6};
  Scheme scheme = Scheme::rk4;
  /// Norms are sampled every `norm_stride` steps and at the final step.
  int norm_stride = 1;
};

/// Throws ConfigError when cfg violates dt·‖𝐏‖ ≤ 0.5, the snapshot window,
/// or the norm-order requirements.
void validate(const SimConfig& cfg, const OperatorSpec& spec);

struct NormSeries {
  std::vector<double> orders;
  std::vector<double> times;
  /// values[o][n] = ‖u(times[n])‖_{H^{orders[o]}}.
  std::vector<std::vector<double>> values;

  /// Series for order s (exact match); throws std::out_of_range otherwise.
  std::span<const double> at_order(double s) const;
};

struct Snapshot {
  double requested_time;
  double time;  ///< time of the integration step the request snapped to
  Field u;
};

struct EvolutionResult {
  std::vector<Snapshot> snapshots;
  NormSeries norms;
  long steps = 0;
  double final_time = 0.0;
  Field final_state;
};

/// Solves i∂_t u − 𝐏u = f, u(0) = 0, i.e. u' = −i(𝐏u + f).
/// Throws NumericalError if ‖u‖_{L²} exceeds 10⁶‖f‖_{L²}.
EvolutionResult integrate(const OperatorSpec& spec, const ForcingSpec& forcing, const SimConfig& cfg);

/// Single steps of u' = −i(𝐏u + f). Owns scratch space; one per thread.
class TimeStepper {
 public:
  TimeStepper(const OperatorSpec& spec, const ForcingSpec& forcing, double dt, Scheme scheme = Scheme::rk4);

  const SpectralTransform& transform() const noexcept { return kernel_.transform(); }
  double dt() const noexcept { return dt_; }

  Field step(const Field& u);
  /// Advances a native-order spectrum in place.
  void step_spectrum(std::span<cplx> spectrum);

 private:
  void rhs(std::span<const cplx> in, std::span<cplx> out);
  void step_rk4(std::span<cplx> s);
  void step_strang(std::span<cplx> s);

  OperatorKernel kernel_;
  double dt_;
  Scheme scheme_;
  std::vector<cplx> forcing_spectrum_;
  std::vector<double> multiplier_;
  // RK4 stages
  std::vector<cplx> k1_, k2_, k3_, k4_, stage_;
  // Strang pieces: pointwise propagator and forcing increment on the grid
  std::vector<cplx> half_rotation_, point_propagator_, point_forcing_, grid_;
};

/// |(‖u₁‖² − ‖u₀‖²)/dt − (2 Im⟨f, ū⟩ − 2⟨χū, ū⟩)| with ū = (u₀ + u₁)/2.
double energy_residual(const Field& u_before, const Field& u_after, const OperatorSpec& spec,
                       const ForcingSpec& forcing, double dt);

/// Where the L² mass of u sits relative to the two circles x1 = ±π/2 and
/// which directions its windowed spectrum points in.
struct ConcentrationReport {
  double width = 0.0;
  double strip_mass_plus = 0.0;   ///< fraction of ‖u‖² with |x1 − π/2| < w
  double strip_mass_minus = 0.0;  ///< fraction with |x1 + π/2| < w
  double directional_ratio_plus = 0.0;   ///< energy within π/8 of θ = π over the + strip
  double directional_ratio_minus = 0.0;  ///< energy within π/8 of θ = 0 over the − strip
};

/// Requires 0 < w < π/2. Frequencies with |k| < 4 are ignored for the
/// directional ratios; each strip is cut out with a cos² taper.
ConcentrationReport concentration_report(const Field& u, double w);

}  // namespace atr
