#include "atr/charflow.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "atr/errors.hpp"

namespace atr {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::array<double, 3>;

constexpr double kSurfaceEntryTolerance = 1e-8;

double wrap_to_pi(double x) {
  double y = std::fmod(x + kPi, kTwoPi);
  if (y < 0) y += kTwoPi;
  return y - kPi;
}

// x2-parametrized flow on one sheet: state (x1, θ, t), independent variable x2.
// dx2/dt = cos²θ ≥ 1 − (a + |shift|)² > 0 on the surface, so this is regular.
struct SectionSystem {
  double a;
  void operator()(const State& s, State& ds, double /*x2*/) const {
    const double st = std::sin(s[1]), ct = std::cos(s[1]);
    const double inv = 1.0 / (ct * ct);
    ds[0] = -st / ct;
    ds[1] = a * std::sin(s[0]) * st * inv;
    ds[2] = inv;
  }
};

struct SectionResult {
  double x1;
  double elapsed;
};

SectionResult integrate_section(double x1, Branch branch, double a, const CycleSearchOptions& opts) {
  const FlowPoint start = surface_point(x1, 0.0, branch, a, opts.shift);
  State s{start.x1, start.theta, 0.0};
  odeint::runge_kutta_fehlberg78<State> stepper;
  const double h = opts.direction * kTwoPi / opts.section_steps;
  SectionSystem sys{a};
  double x2 = 0.0;
  for (int n = 0; n < opts.section_steps; ++n, x2 += h) stepper.do_step(sys, s, x2, h);
  return {s[0], std::abs(s[2])};
}

}  // namespace

FlowVector vector_field(const FlowPoint& p, double a) {
  const double st = std::sin(p.theta), ct = std::cos(p.theta);
  return {-st * ct, ct * ct, a * std::sin(p.x1) * st};
}

double surface_residual(const FlowPoint& p, double a, double shift) {
  return std::sin(p.theta) - a * std::cos(p.x1) - shift;
}

std::string_view to_string(Branch b) { return b == Branch::theta_0 ? "theta_0" : "theta_pi"; }
std::string_view to_string(CycleKind k) { return k == CycleKind::attractive ? "attractive" : "repulsive"; }
std::string_view to_string(CycleComponent c) { return c == CycleComponent::x1_plus ? "x1_plus" : "x1_minus"; }

FlowPoint surface_point(double x1, double x2, Branch branch, double a, double shift) {
  const double s = a * std::cos(x1) + shift;
  if (std::abs(s) > 1.0) throw std::domain_error("fibre over x1 does not meet the characteristic surface");
  const double base = std::asin(s);
  return {x1, x2, branch == Branch::theta_0 ? base : kPi - base};
}

FlowPoint project_to_surface(const FlowPoint& p, double a, double shift) {
  const Branch b = std::cos(p.theta) >= 0.0 ? Branch::theta_0 : Branch::theta_pi;
  FlowPoint q = surface_point(p.x1, p.x2, b, a, shift);
  // keep θ in the same 2π window as the input
  q.theta += kTwoPi * std::round((p.theta - q.theta) / kTwoPi);
  return q;
}

Trajectory integrate_trajectory(const FlowPoint& p0, double a, double t_final, double tol,
                                const TrajectoryOptions& opts) {
  if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (std::abs(surface_residual(p0, a, opts.shift)) > kSurfaceEntryTolerance)
    throw std::invalid_argument("initial point is not on the characteristic surface");

  const double sign = t_final < 0.0 ? -1.0 : 1.0;
  const double horizon = std::abs(t_final);
  auto sys = [a, sign](const State& s, State& ds, double) {
    const FlowVector v = vector_field({s[0], s[1], s[2]}, a);
    ds = {sign * v.dx1, sign * v.dx2, sign * v.dtheta};
  };

  std::vector<double> outputs;
  outputs.reserve(opts.output_times.size());
  for (double t : opts.output_times) {
    if (t * sign < 0.0 || std::abs(t) > horizon)
      throw std::invalid_argument("output time outside the integration interval");
    outputs.push_back(std::abs(t));
  }
  if (!std::is_sorted(outputs.begin(), outputs.end()))
    throw std::invalid_argument("output times must be ordered along the integration direction");

  Trajectory traj;
  auto residual = [&](const State& s) {
    const double r = std::abs(surface_residual({s[0], s[1], s[2]}, a, opts.shift));
    traj.max_surface_residual = std::max(traj.max_surface_residual, r);
  };
  auto emit = [&](double tau, const State& s) {
    residual(s);
    traj.times.push_back(sign * tau);
    traj.points.push_back({s[0], s[1], s[2]});
  };

  State x{p0.x1, p0.x2, p0.theta};
  if (horizon == 0.0) {
    emit(0.0, x);
    return traj;
  }

  auto stepper = odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<State>());
  stepper.initialize(x, 0.0, std::min(0.1, horizon));

  std::size_t next_output = 0;
  const bool every_step = outputs.empty();
  if (every_step) emit(0.0, x);
  while (next_output < outputs.size() && outputs[next_output] == 0.0) emit(outputs[next_output++], x);

  try {
    while (stepper.current_time() < horizon) {
      stepper.do_step(sys);
      ++traj.steps;
      if (stepper.current_time_step() < 1e-14 * std::max(1.0, horizon)) {
        std::ostringstream os;
        os << "step-size collapse at t = " << sign * stepper.current_time();
        throw NumericalError(os.str());
      }
      residual(stepper.current_state());

      const double now = std::min(stepper.current_time(), horizon);
      State interp;
      if (every_step) {
        if (stepper.current_time() <= horizon) {
          emit(now, stepper.current_state());
        } else {
          stepper.calc_state(horizon, interp);
          emit(horizon, interp);
        }
      } else {
        while (next_output < outputs.size() && outputs[next_output] <= now) {
          stepper.calc_state(outputs[next_output], interp);
          emit(outputs[next_output++], interp);
        }
      }

      if (opts.reproject_every > 0 && traj.steps % opts.reproject_every == 0) {
        const State& cur = stepper.current_state();
        const FlowPoint q = project_to_surface({cur[0], cur[1], cur[2]}, a, opts.shift);
        stepper.initialize(State{q.x1, q.x2, q.theta}, stepper.current_time(), stepper.current_time_step());
      }
    }
  } catch (const odeint::step_adjustment_error& e) {
    throw NumericalError(std::string("step-size collapse: ") + e.what());
  }
  return traj;
}

double return_map(double x1, Branch branch, double a, const CycleSearchOptions& opts) {
  return integrate_section(x1, branch, a, opts).x1;
}

std::vector<LimitCycle> find_limit_cycles(double a, const CycleSearchOptions& opts) {
  if (!(a > 0.0) || !(a + std::abs(opts.shift) < 1.0))
    throw std::invalid_argument("cycle search requires a > 0 and a + |shift| < 1");
  if (opts.direction != 1 && opts.direction != -1) throw std::invalid_argument("direction must be +1 or -1");
  if (opts.scan_points < 8 || opts.section_steps < 16) throw std::invalid_argument("scan resolution too coarse");

  std::vector<LimitCycle> cycles;
  for (Branch branch : {Branch::theta_0, Branch::theta_pi}) {
    auto displacement = [&](double x1) { return return_map(x1, branch, a, opts) - x1; };

    const int n = opts.scan_points;
    const double h = kTwoPi / n;
    std::vector<double> xs(n), ds(n);
    for (int j = 0; j < n; ++j) {
      xs[j] = -kPi + (j + 0.5) * h;
      ds[j] = displacement(xs[j]);
    }

    std::vector<double> roots;
    for (int j = 0; j < n; ++j) {
      const int k = (j + 1) % n;
      double lo = xs[j], hi = xs[k] + (k == 0 ? kTwoPi : 0.0);
      double dlo = ds[j], dhi = ds[k];
      if (dlo == 0.0) {
        roots.push_back(lo);
        continue;
      }
      if ((dlo < 0.0) == (dhi < 0.0) || dhi == 0.0) continue;
      boost::uintmax_t max_iter = 200;
      auto tol = [](double l, double r) { return std::abs(r - l) < 1e-13; };
      try {
        const auto bracket =
            boost::math::tools::toms748_solve(displacement, lo, hi, dlo, dhi, tol, max_iter);
        roots.push_back(0.5 * (bracket.first + bracket.second));
      } catch (const std::exception& e) {
        throw NumericalError(std::string("return-map root find failed: ") + e.what());
      }
      if (max_iter >= 200) throw NumericalError("return-map root find did not converge");
    }

    for (double root : roots) {
      const double x1 = wrap_to_pi(root);
      const SectionResult at = integrate_section(x1, branch, a, opts);
      const double shifted = return_map(x1 + opts.fd_step, branch, a, opts);
      const double mu = (shifted - at.x1) / opts.fd_step;
      if (std::abs(mu - 1.0) < opts.hyperbolicity_margin) {
        std::ostringstream os;
        os << "non-hyperbolic cycle at x1 = " << x1 << " (multiplier " << mu << ")";
        throw NumericalError(os.str());
      }
      if (std::abs(mu) < 1e-6 || std::abs(mu) > 1e6) {
        std::ostringstream os;
        os << "multiplier " << mu << " at x1 = " << x1 << " outside the resolvable range";
        throw NumericalError(os.str());
      }
      LimitCycle c;
      c.representative = surface_point(x1, 0.0, branch, a, opts.shift);
      c.period = at.elapsed;
      c.floquet_multiplier = mu;
      c.kind = std::abs(mu) < 1.0 ? CycleKind::attractive : CycleKind::repulsive;
      c.component = std::sin(x1) > 0.0 ? CycleComponent::x1_plus : CycleComponent::x1_minus;
      c.branch = branch;
      cycles.push_back(c);
    }
  }
  if (cycles.empty()) throw NumericalError("no closed orbits found on the section x2 = 0");
  return cycles;
}

double distance_to_cycles(const FlowPoint& p, std::span<const LimitCycle> cycles, CycleKind kind) {
  double best = std::numeric_limits<double>::infinity();
  for (const LimitCycle& c : cycles) {
    if (c.kind != kind) continue;
    const double d1 = wrap_to_pi(p.x1 - c.representative.x1);
    const double dt = wrap_to_pi(p.theta - c.representative.theta);
    best = std::min(best, std::hypot(d1, dt));
  }
  return best;
}

ControlReport check_control_condition(const Field& chi, std::span<const LimitCycle> cycles, ControlSign sign,
                                      double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("control threshold must be positive");
  if (chi.layout() != Layout::grid) throw std::invalid_argument("damping must be in grid layout");
  const TorusGrid& grid = chi.grid();
  const int n1 = grid.n1();
  const CycleKind wanted = sign == ControlSign::plus ? CycleKind::attractive : CycleKind::repulsive;

  ControlReport report;
  for (const LimitCycle& c : cycles) {
    if (c.kind != wanted) continue;
    // Trigonometric interpolation weights in x1, Nyquist term split as cos.
    std::vector<double> w(n1);
    for (int i = 0; i < n1; ++i) {
      const double d = c.representative.x1 - grid.x1(i);
      double acc = 0.0;
      for (int k = -n1 / 2 + 1; k < n1 / 2; ++k) acc += std::cos(k * d);
      acc += std::cos(0.5 * n1 * d);
      w[i] = acc / n1;
    }
    double peak = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < grid.n2(); ++j) {
      double v = 0.0;
      for (int i = 0; i < n1; ++i) v += w[i] * chi.at(i, j).real();
      peak = std::max(peak, v);
    }
    auto [it, inserted] = report.max_damping.emplace(c.component, peak);
    if (!inserted) it->second = std::max(it->second, peak);
  }
  report.overall = !report.max_damping.empty();
  for (const auto& [component, peak] : report.max_damping) {
    const bool pass = peak > threshold;
    report.components[component] = pass;
    report.overall = report.overall && pass;
  }
  return report;
}

}  // namespace atr
