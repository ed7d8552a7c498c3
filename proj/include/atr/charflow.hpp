#pragma once

#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "atr/spectral.hpp"

namespace atr {

/// Point (x1, x2, θ) of the cosphere bundle over T², with ξ = ρ(cos θ, sin θ).
struct FlowPoint {
  double x1 = 0.0;
  double x2 = 0.0;
  double theta = 0.0;
};

struct FlowVector {
  double dx1 = 0.0;
  double dx2 = 0.0;
  double dtheta = 0.0;
};

/// X = −sin θ cos θ ∂_{x1} + cos²θ ∂_{x2} + a sin x1 sin θ ∂_θ, the rescaled
/// Hamiltonian field of |ξ|(ξ2/|ξ| − a cos x1 − ω). X does not depend on the
/// spectral shift ω; only the characteristic surface does.
FlowVector vector_field(const FlowPoint& p, double a);

/// sin θ − a cos x1 − shift; zero on the characteristic surface of p − shift.
double surface_residual(const FlowPoint& p, double a, double shift = 0.0);

/// The two sheets of {sin θ = a cos x1 + shift} when a + |shift| < 1:
/// theta_0 has cos θ > 0, theta_pi has cos θ < 0.
enum class Branch { theta_0, theta_pi };
std::string_view to_string(Branch b);

/// Point of the given sheet above (x1, x2). Throws std::domain_error if the
/// fibre over x1 misses the surface.
FlowPoint surface_point(double x1, double x2, Branch branch, double a, double shift = 0.0);
/// Moves θ onto the surface, keeping the sheet selected by the sign of cos θ.
FlowPoint project_to_surface(const FlowPoint& p, double a, double shift = 0.0);

struct Trajectory {
  std::vector<double> times;
  std::vector<FlowPoint> points;
  /// Largest |surface_residual| seen at accepted steps and output points.
  double max_surface_residual = 0.0;
  long steps = 0;
};

struct TrajectoryOptions {
  double shift = 0.0;
  /// Output times (between 0 and t_final, in the direction of integration).
  /// Empty: every accepted step is recorded.
  std::vector<double> output_times;
  /// Steps between re-projections onto the surface.
  int reproject_every = 10;
};

/// Adaptive Dormand–Prince integration of e^{tX} from p0 (negative t_final
/// runs the flow backwards). Requires |surface_residual(p0)| ≤ 1e-8;
/// throws NumericalError if the step size collapses.
Trajectory integrate_trajectory(const FlowPoint& p0, double a, double t_final, double tol,
                                const TrajectoryOptions& opts = {});

enum class CycleKind { attractive, repulsive };
/// Connected components of the characteristic set over x1 ≈ ±π/2.
enum class CycleComponent { x1_plus, x1_minus };

std::string_view to_string(CycleKind k);
std::string_view to_string(CycleComponent c);

struct LimitCycle {
  FlowPoint representative;  ///< on the section x2 = 0
  double period = 0.0;
  /// Derivative of the x1 return map on the section x2 = 0.
  double floquet_multiplier = 1.0;
  CycleKind kind = CycleKind::attractive;
  CycleComponent component = CycleComponent::x1_plus;
  Branch branch = Branch::theta_0;
};

struct CycleSearchOptions {
  double shift = 0.0;
  /// +1 for X, −1 for −X.
  int direction = 1;
  int scan_points = 72;
  double fd_step = 1e-5;
  double hyperbolicity_margin = 1e-6;
  int section_steps = 1024;
};

/// x1 after one return to the section, starting at (x1, 0) on the given sheet.
/// The lift is continuous in x1 (no reduction mod 2π).
double return_map(double x1, Branch branch, double a, const CycleSearchOptions& opts = {});

/// Closed orbits of the flow on the characteristic surface, found as fixed
/// points of the return map to {x2 = 0} on each sheet. Requires 0 < a and
/// a + |shift| < 1. Throws NumericalError on a failed root find or a
/// non-hyperbolic multiplier.
std::vector<LimitCycle> find_limit_cycles(double a, const CycleSearchOptions& opts = {});

/// Distance in (x1, θ) from p to the nearest cycle of the given kind.
double distance_to_cycles(const FlowPoint& p, std::span<const LimitCycle> cycles, CycleKind kind);

enum class ControlSign { plus, minus };

struct ControlReport {
  std::map<CycleComponent, bool> components;
  /// max of χ over the base circle of each component
  std::map<CycleComponent, double> max_damping;
  bool overall = false;
};

/// For ControlSign::plus each attractive cycle's base circle {x1 = x1*} must
/// carry χ > threshold somewhere (repulsive cycles for minus). χ is evaluated
/// on the circle by trigonometric interpolation in x1 at the x2 nodes.
ControlReport check_control_condition(const Field& chi, std::span<const LimitCycle> cycles, ControlSign sign,
                                      double threshold);

}  // namespace atr
