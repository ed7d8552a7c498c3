#include "atr/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "atr/errors.hpp"

namespace atr {

namespace {

constexpr double kStabilityMargin = 0.5;
constexpr double kBlowupFactor = 1e6;

double spectrum_l2(std::span<const cplx> s) {
  double acc = 0.0;
  for (const cplx& z : s) acc += std::norm(z);
  return kTwoPi * std::sqrt(acc);
}

bool all_finite(std::span<const cplx> s) {
  for (const cplx& z : s)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  return true;
}

// (e^z − 1)/z, continuous at 0.
cplx phi1(cplx z) {
  if (std::abs(z) < 1e-8) return 1.0 + 0.5 * z;
  return (std::exp(z) - 1.0) / z;
}

double periodic_distance(double x, double center) {
  double d = std::fmod(x - center, kTwoPi);
  if (d < -kPi) d += kTwoPi;
  if (d >= kPi) d -= kTwoPi;
  return std::abs(d);
}

double angle_distance(double a, double b) { return periodic_distance(a, b); }

}  // namespace

Scheme parse_scheme(std::string_view name) {
  if (name == "rk4") return Scheme::rk4;
  if (name == "strang_exp") return Scheme::strang_exp;
  throw ConfigError("unknown scheme '" + std::string(name) + "' (expected rk4|strang_exp)");
}

std::string_view to_string(Scheme scheme) { return scheme == Scheme::rk4 ? "rk4" : "strang_exp"; }

void validate(const SimConfig& cfg, const OperatorSpec& spec) {
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(cfg.t_final > 0.0)) throw ConfigError("t_final must be positive");
  if (cfg.dt * spec.norm_bound() > kStabilityMargin) {
    std::ostringstream os;
    os << "dt = " << cfg.dt << " violates dt * operator bound <= " << kStabilityMargin << " (bound "
       << spec.norm_bound() << ")";
    throw ConfigError(os.str());
  }
  if (!std::is_sorted(cfg.snapshot_times.begin(), cfg.snapshot_times.end()))
    throw ConfigError("snapshot_times must be sorted");
  for (double t : cfg.snapshot_times)
    if (t < 0.0 || t > cfg.t_final) throw ConfigError("snapshot time outside [0, t_final]");
  if (std::find(cfg.norm_orders.begin(), cfg.norm_orders.end(), 0.0) == cfg.norm_orders.end())
    throw ConfigError("norm_orders must include 0");
  if (cfg.norm_stride < 1) throw ConfigError("norm_stride must be >= 1");
}

std::span<const double> NormSeries::at_order(double s) const {
  for (std::size_t o = 0; o < orders.size(); ++o)
    if (orders[o] == s) return values[o];
  throw std::out_of_range("norm order not tracked: " + std::to_string(s));
}

// ---------------------------------------------------------------------------

TimeStepper::TimeStepper(const OperatorSpec& spec, const ForcingSpec& forcing, double dt, Scheme scheme)
    : kernel_(spec), dt_(dt), scheme_(scheme) {
  if (!(forcing.f.grid() == spec.grid())) throw std::invalid_argument("grid mismatch");
  if (forcing.f.layout() != Layout::grid) throw std::invalid_argument("forcing must be in grid layout");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const std::size_t n = spec.grid().size();
  forcing_spectrum_.resize(n);
  kernel_.transform().forward(forcing.f.values(), forcing_spectrum_);
  kernel_.transform().zero_nyquist(forcing_spectrum_);
  multiplier_.assign(spec.multiplier_table().begin(), spec.multiplier_table().end());

  if (scheme_ == Scheme::rk4) {
    k1_.resize(n), k2_.resize(n), k3_.resize(n), k4_.resize(n), stage_.resize(n);
    return;
  }
  half_rotation_.resize(n);
  for (std::size_t i = 0; i < n; ++i) half_rotation_[i] = std::polar(1.0, -0.5 * dt * multiplier_[i]);
  // Pointwise part u' = λu − i f with λ = −iV − χ, solved exactly.
  std::vector<cplx> f_grid(n);
  kernel_.transform().inverse(forcing_spectrum_, f_grid);
  point_propagator_.resize(n);
  point_forcing_.resize(n);
  const auto v = spec.potential_values();
  const auto chi = spec.damping_values();
  for (std::size_t i = 0; i < n; ++i) {
    const cplx z = cplx(-chi[i], -v[i]) * dt;
    point_propagator_[i] = std::exp(z);
    point_forcing_[i] = phi1(z) * dt * (cplx(0.0, -1.0) * f_grid[i]);
  }
  grid_.resize(n);
  stage_.resize(n);
}

void TimeStepper::rhs(std::span<const cplx> in, std::span<cplx> out) {
  kernel_.apply(in, out, 0.0, OperatorForm::damped);
  const cplx minus_i(0.0, -1.0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = minus_i * (out[i] + forcing_spectrum_[i]);
}

void TimeStepper::step_rk4(std::span<cplx> s) {
  const std::size_t n = s.size();
  const double h = dt_;
  rhs(s, k1_);
  for (std::size_t i = 0; i < n; ++i) stage_[i] = s[i] + 0.5 * h * k1_[i];
  rhs(stage_, k2_);
  for (std::size_t i = 0; i < n; ++i) stage_[i] = s[i] + 0.5 * h * k2_[i];
  rhs(stage_, k3_);
  for (std::size_t i = 0; i < n; ++i) stage_[i] = s[i] + h * k3_[i];
  rhs(stage_, k4_);
  for (std::size_t i = 0; i < n; ++i) s[i] += (h / 6.0) * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
}

void TimeStepper::step_strang(std::span<cplx> s) {
  const std::size_t n = s.size();
  for (std::size_t i = 0; i < n; ++i) s[i] *= half_rotation_[i];
  kernel_.transform().inverse(s, grid_);
  for (std::size_t i = 0; i < n; ++i) grid_[i] = point_propagator_[i] * grid_[i] + point_forcing_[i];
  kernel_.transform().forward(grid_, s);
  kernel_.transform().zero_nyquist(s);
  for (std::size_t i = 0; i < n; ++i) s[i] *= half_rotation_[i];
}

void TimeStepper::step_spectrum(std::span<cplx> spectrum) {
  if (spectrum.size() != forcing_spectrum_.size()) throw std::invalid_argument("spectrum size mismatch");
  if (scheme_ == Scheme::rk4)
    step_rk4(spectrum);
  else
    step_strang(spectrum);
}

Field TimeStepper::step(const Field& u) {
  if (!(u.grid() == kernel_.transform().grid())) throw std::invalid_argument("grid mismatch");
  if (u.layout() != Layout::grid) throw std::invalid_argument("TimeStepper::step expects a grid-layout field");
  std::vector<cplx> s(u.size()), out(u.size());
  transform().forward(u.values(), s);
  step_spectrum(s);
  transform().inverse(s, out);
  return Field(u.grid(), std::move(out));
}

// ---------------------------------------------------------------------------

EvolutionResult integrate(const OperatorSpec& spec, const ForcingSpec& forcing, const SimConfig& cfg) {
  validate(cfg, spec);
  if (!(forcing.f.grid() == spec.grid())) throw std::invalid_argument("grid mismatch");

  const TorusGrid& grid = spec.grid();
  TimeStepper stepper(spec, forcing, cfg.dt, cfg.scheme);
  const SobolevNorms norms(stepper.transform(), cfg.norm_orders);

  const long nsteps = std::max(1L, std::lround(cfg.t_final / cfg.dt));
  const double f_norm = l2_norm(forcing.f);
  const double blowup = kBlowupFactor * f_norm;

  std::vector<long> snap_steps;
  for (double t : cfg.snapshot_times) snap_steps.push_back(std::clamp(std::lround(t / cfg.dt), 0L, nsteps));

  EvolutionResult result{{}, {}, nsteps, nsteps * cfg.dt, Field(grid)};
  result.norms.orders = cfg.norm_orders;
  result.norms.values.resize(cfg.norm_orders.size());

  std::vector<cplx> state(grid.size(), 0.0);
  auto record = [&](long step) {
    const double t = step * cfg.dt;
    const auto v = norms.evaluate(state);
    result.norms.times.push_back(t);
    for (std::size_t o = 0; o < v.size(); ++o) result.norms.values[o].push_back(v[o]);
  };
  auto snapshot = [&](long step) {
    for (std::size_t q = 0; q < snap_steps.size(); ++q) {
      if (snap_steps[q] != step) continue;
      std::vector<cplx> g(grid.size());
      stepper.transform().inverse(state, g);
      result.snapshots.push_back({cfg.snapshot_times[q], step * cfg.dt, Field(grid, std::move(g))});
    }
  };

  record(0);
  snapshot(0);
  for (long step = 1; step <= nsteps; ++step) {
    stepper.step_spectrum(state);
    const double norm = spectrum_l2(state);
    if (!std::isfinite(norm) || !all_finite(state) || norm > blowup) {
      std::ostringstream os;
      os << "instability at t = " << step * cfg.dt << ": ||u||_L2 = " << norm << " exceeds 1e6 * ||f||_L2 = "
         << blowup;
      throw NumericalError(os.str());
    }
    if (step % cfg.norm_stride == 0 || step == nsteps) record(step);
    snapshot(step);
  }

  std::vector<cplx> g(grid.size());
  stepper.transform().inverse(state, g);
  result.final_state = Field(grid, std::move(g));
  return result;
}

double energy_residual(const Field& u_before, const Field& u_after, const OperatorSpec& spec,
                       const ForcingSpec& forcing, double dt) {
  const Field mid = 0.5 * (u_before + u_after);
  const double before = inner(u_before, u_before).real();
  const double after = inner(u_after, u_after).real();
  const double source = 2.0 * inner(forcing.f, mid).imag();
  const double sink = 2.0 * inner(spec.damping().times(mid), mid).real();
  return std::abs((after - before) / dt - (source - sink));
}

ConcentrationReport concentration_report(const Field& u, double w) {
  if (!(w > 0.0 && w < kPi / 2)) throw std::invalid_argument("strip width must lie in (0, pi/2)");
  if (u.layout() != Layout::grid) throw std::invalid_argument("concentration_report expects a grid-layout field");
  const TorusGrid& grid = u.grid();
  const double plus_center = kPi / 2, minus_center = 3 * kPi / 2;

  ConcentrationReport rep;
  rep.width = w;

  double total = 0.0, plus = 0.0, minus = 0.0;
  for (int i = 0; i < grid.n1(); ++i) {
    double row = 0.0;
    for (int j = 0; j < grid.n2(); ++j) row += std::norm(u.at(i, j));
    total += row;
    if (periodic_distance(grid.x1(i), plus_center) < w) plus += row;
    if (periodic_distance(grid.x1(i), minus_center) < w) minus += row;
  }
  if (total > 0.0) {
    rep.strip_mass_plus = plus / total;
    rep.strip_mass_minus = minus / total;
  }

  const SpectralTransform t(grid);
  auto directional = [&](double center, double direction) {
    std::vector<cplx> windowed(grid.size()), spec(grid.size());
    for (int i = 0; i < grid.n1(); ++i) {
      const double d = periodic_distance(grid.x1(i), center);
      const double c = d < w ? std::cos(0.5 * kPi * d / w) : 0.0;
      for (int j = 0; j < grid.n2(); ++j) windowed[grid.index(i, j)] = c * c * u.at(i, j);
    }
    t.forward(windowed, spec);
    double in_sector = 0.0, all = 0.0;
    for (int r = 0; r < grid.n1(); ++r) {
      if (t.is_nyquist_row(r)) continue;
      for (int c = 0; c < grid.n2(); ++c) {
        if (t.is_nyquist_col(c)) continue;
        const int k1 = t.k1(r), k2 = t.k2(c);
        if (k1 * k1 + k2 * k2 < 16) continue;
        const double e = std::norm(spec[grid.index(r, c)]);
        all += e;
        if (angle_distance(std::atan2(static_cast<double>(k2), static_cast<double>(k1)), direction) < kPi / 8)
          in_sector += e;
      }
    }
    return all > 0.0 ? in_sector / all : 0.0;
  };
  // Λ₊ points along ξ1 < 0 over x1 = π/2 and along ξ1 > 0 over x1 = −π/2.
  rep.directional_ratio_plus = directional(plus_center, kPi);
  rep.directional_ratio_minus = directional(minus_center, 0.0);
  return rep;
}

}  // namespace atr
