#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atr/operator.hpp"
#include "atr/spectral.hpp"

namespace atr {

enum class Preconditioner {
  none,
  /// (m(k) − ω − iε)⁻¹
  fourier_diagonal,
  /// Exact inverse of the operator with V and χ replaced by their x2-means;
  /// one dense LU per k2 column. Exact when V and χ depend on x1 only.
  x2_block
};

Preconditioner parse_preconditioner(std::string_view name);
std::string_view to_string(Preconditioner p);

/// Restarted GMRES, right-preconditioned, on native-order spectra.
struct KrylovOptions {
  double rtol = 1e-8;
  int max_iter = 5000;
  int restart = 50;
  Preconditioner preconditioner = Preconditioner::x2_block;
};

struct ResolventQuery {
  cplx omega = 0.0;  ///< Im ω ≥ 0
  double epsilon = 0.1;
  Field f;
  KrylovOptions krylov{};
  /// Solve (𝐏* − ω̄ + iε)u = f instead.
  bool adjoint = false;
};

struct ResolventSolution {
  Field u;
  /// ‖(𝐏 − ω − iε)u − f‖_{L²}, recomputed from the returned iterate.
  double residual = 0.0;
  double relative_residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Solves (𝐏 − ω − iε)u = f. Throws std::invalid_argument when Im ω < 0,
/// ε ≤ 0 or the data does not match the operator grid. Hitting max_iter
/// returns the last iterate with converged = false.
ResolventSolution solve_resolvent(const OperatorSpec& spec, const ResolventQuery& q,
                                  const Field* initial_guess = nullptr);

/// (𝐏 − ω − iε)u − f in grid layout.
Field resolvent_residual(const OperatorSpec& spec, const Field& u, cplx omega, double epsilon, const Field& f);

enum class LadderVerdict { converged, diverging, inconclusive };
std::string_view to_string(LadderVerdict v);

struct LadderOptions {
  KrylovOptions krylov{};
  double delta = 0.1;
  /// converged requires the final gap ≤ gap_tolerance·‖f‖
  double gap_tolerance = 1e-4;
  /// diverging requires ‖u‖ to grow by this factor over the last two decades
  double growth_factor = 2.0;
  /// Start each rung from the previous solution.
  bool warm_start = true;
};

struct ResolventLadder {
  cplx omega = 0.0;
  std::vector<double> epsilons;
  std::vector<Field> solutions;
  std::vector<double> residual_norms;
  std::vector<double> solution_norms;
  /// cauchy_gaps[j] = ‖u_{ε_{j+1}} − u_{ε_j}‖_{L²}
  std::vector<double> cauchy_gaps;
  std::vector<int> iterations;
  double f_norm = 0.0;
  /// ‖u‖ at the last rung over ‖u‖ two decades of ε earlier, when available.
  std::optional<double> growth;
  LadderVerdict verdict = LadderVerdict::inconclusive;
  /// false when a rung missed the residual tolerance; the ladder stops there.
  bool complete = true;
  std::string failure;

  /// Richardson extrapolation of the last two rungs to ε = 0.
  std::optional<Field> extrapolated_limit() const;
};

/// Geometric ladder 10⁻¹ … 10⁻⁵ with 9 rungs.
std::vector<double> default_epsilons();

/// ε-ladder of resolvent solves at ω. Requires strictly decreasing positive
/// epsilons, Im ω ≥ 0 and |Re ω| ≤ delta (std::invalid_argument otherwise).
ResolventLadder limiting_absorption(const OperatorSpec& spec, cplx omega, const Field& f,
                                    std::span<const double> epsilons, const LadderOptions& opts = {});

struct OmegaSweep {
  std::vector<ResolventLadder> ladders;
  /// ‖u(ω_{j+1}) − u(ω_j)‖ at the smallest ε
  std::vector<double> neighbor_gaps;
  /// ‖(𝐏 − ω_j − iε)⁻¹u(ω_j)‖ at the smallest ε, an estimate of ‖∂_ω u‖
  std::vector<double> derivative_norms;
};

/// Ladders at every ω (each |ω| ≤ delta), spread over `jobs` threads.
/// Results do not depend on `jobs`.
OmegaSweep omega_sweep(const OperatorSpec& spec, const Field& f, std::span<const double> omegas,
                       std::span<const double> epsilons, const LadderOptions& opts = {}, int jobs = 1);

struct ControlConstantOptions {
  double s = 0.0;
  int samples = 4;
  std::uint64_t seed = 0;
  /// order N of the ‖u‖_{H^{−N}} term
  double junk_order = 4.0;
  /// random data uses Fourier modes with |k1|, |k2| ≤ data_band
  int data_band = 6;
  KrylovOptions krylov{};
};

struct ControlConstantEstimate {
  std::vector<double> omegas;
  std::vector<double> epsilons;
  /// ratios[w][e]: max over samples at (omegas[w], epsilons[e])
  std::vector<std::vector<double>> ratios;
  /// max over ω for each ε
  std::vector<double> max_by_epsilon;
  double max_ratio = 0.0;
  /// max/min of max_by_epsilon
  double epsilon_spread = 0.0;
};

/// ‖u‖_s / (‖Π(cutoff·u)‖_s + ‖(𝐏 − ω)u‖_{s+1} + ‖u‖_{−N}).
double control_ratio(const OperatorSpec& spec, const Field& u, const Field& cutoff, double omega, double s,
                     double junk_order = 4.0);

/// Random band-limited f (deterministic in the seed) → u = (𝐏 − ω − iε)⁻¹f
/// → control_ratio. Requires s > −1/2. Throws NumericalError if a solve
/// misses its tolerance.
ControlConstantEstimate estimate_control_constant(const OperatorSpec& spec, const Field& cutoff,
                                                  std::span<const double> omegas, std::span<const double> epsilons,
                                                  const ControlConstantOptions& opts = {});

/// Band-limited complex Gaussian field, unit L² norm.
Field random_smooth_field(const TorusGrid& grid, std::uint64_t seed, int band = 6);

}  // namespace atr
