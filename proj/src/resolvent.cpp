#include "atr/resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>

#include <Eigen/Dense>

#include "atr/errors.hpp"

namespace atr {

namespace {

double spectrum_norm(std::span<const cplx> s) {
  double acc = 0.0;
  for (const cplx& z : s) acc += std::norm(z);
  return std::sqrt(acc);
}

cplx dot(std::span<const cplx> a, std::span<const cplx> b) {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

void check_query(const OperatorSpec& spec, const ResolventQuery& q) {
  if (q.omega.imag() < 0.0) throw std::invalid_argument("resolvent requires Im omega >= 0");
  if (!(q.epsilon > 0.0)) throw std::invalid_argument("resolvent requires epsilon > 0");
  if (!(q.f.grid() == spec.grid())) throw std::invalid_argument("grid mismatch");
  if (q.f.layout() != Layout::grid) throw std::invalid_argument("resolvent data must be in grid layout");
  if (!(q.krylov.rtol > 0.0) || q.krylov.max_iter < 1 || q.krylov.restart < 1)
    throw std::invalid_argument("invalid Krylov options");
}

// Right preconditioner acting on native spectra.
class PreconditionerOp {
 public:
  PreconditionerOp(const OperatorSpec& spec, const SpectralTransform& t, cplx shift, OperatorForm form,
                   Preconditioner kind)
      : transform_(t), kind_(kind) {
    const auto m = spec.multiplier_table();
    if (kind == Preconditioner::fourier_diagonal) {
      diagonal_.resize(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) {
        const cplx d = m[i] - shift;
        diagonal_[i] = std::abs(d) > 0.0 ? 1.0 / d : 0.0;
      }
    } else if (kind == Preconditioner::x2_block) {
      build_blocks(spec, shift, form);
    }
  }

  void apply(std::span<const cplx> in, std::span<cplx> out) const {
    switch (kind_) {
      case Preconditioner::none:
        std::copy(in.begin(), in.end(), out.begin());
        break;
      case Preconditioner::fourier_diagonal:
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = diagonal_[i] * in[i];
        break;
      case Preconditioner::x2_block:
        apply_blocks(in, out);
        break;
    }
  }

 private:
  void build_blocks(const OperatorSpec& spec, cplx shift, OperatorForm form) {
    const TorusGrid& g = spec.grid();
    const int n1 = g.n1(), n2 = g.n2();
    const auto v = spec.potential_values();
    const auto chi = spec.damping_values();
    const double sign = form == OperatorForm::damped ? -1.0 : form == OperatorForm::adjoint ? 1.0 : 0.0;

    // x2-mean of V ∓ iχ along each x1 row, then its x1 Fourier coefficients.
    std::vector<cplx> row_mean(n1, 0.0);
    for (int i = 0; i < n1; ++i) {
      cplx acc = 0.0;
      for (int j = 0; j < n2; ++j) acc += cplx(v[g.index(i, j)], sign * chi[g.index(i, j)]);
      row_mean[i] = acc / static_cast<double>(n2);
    }
    std::vector<cplx> coeff(n1, 0.0);
    for (int q = 0; q < n1; ++q) {
      cplx acc = 0.0;
      for (int i = 0; i < n1; ++i) acc += row_mean[i] * std::polar(1.0, -kTwoPi * q * i / n1);
      coeff[q] = acc / static_cast<double>(n1);
    }

    for (int r = 0; r < n1; ++r)
      if (!transform_.is_nyquist_row(r)) rows_.push_back(r);
    const int nr = static_cast<int>(rows_.size());
    const auto m = spec.multiplier_table();
    blocks_.resize(n2);
    for (int c = 0; c < n2; ++c) {
      if (transform_.is_nyquist_col(c)) continue;
      Eigen::MatrixXcd b(nr, nr);
      for (int a = 0; a < nr; ++a)
        for (int bcol = 0; bcol < nr; ++bcol) b(a, bcol) = coeff[((rows_[a] - rows_[bcol]) % n1 + n1) % n1];
      for (int a = 0; a < nr; ++a) b(a, a) += m[g.index(rows_[a], c)] - shift;
      blocks_[c].compute(b);
    }
  }

  void apply_blocks(std::span<const cplx> in, std::span<cplx> out) const {
    const TorusGrid& g = transform_.grid();
    std::fill(out.begin(), out.end(), cplx(0.0));
    const int nr = static_cast<int>(rows_.size());
    Eigen::VectorXcd rhs(nr);
    for (int c = 0; c < g.n2(); ++c) {
      if (transform_.is_nyquist_col(c)) continue;
      for (int a = 0; a < nr; ++a) rhs(a) = in[g.index(rows_[a], c)];
      const Eigen::VectorXcd sol = blocks_[c].solve(rhs);
      for (int a = 0; a < nr; ++a) out[g.index(rows_[a], c)] = sol(a);
    }
  }

  const SpectralTransform& transform_;
  Preconditioner kind_;
  std::vector<cplx> diagonal_;
  std::vector<int> rows_;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXcd>> blocks_;
};

struct GmresOutcome {
  int iterations = 0;
  bool converged = false;
};

// Restarted GMRES for A M⁻¹ y = b, x = x0 + M⁻¹ y. `x` holds the initial guess.
template <class ApplyA>
GmresOutcome gmres(ApplyA&& apply_a, const PreconditionerOp& precond, std::span<const cplx> b, std::span<cplx> x,
                   const KrylovOptions& opts) {
  const std::size_t n = b.size();
  const int m = opts.restart;
  const double target = opts.rtol * spectrum_norm(b);
  std::vector<cplx> r(n), w(n), z(n);
  std::vector<std::vector<cplx>> basis(m + 1, std::vector<cplx>(n));
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(m + 1, m);
  std::vector<cplx> cs(m), sn(m), g(m + 1);

  auto true_residual = [&] {
    apply_a(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    return spectrum_norm(r);
  };

  GmresOutcome out;
  double beta = true_residual();
  if (beta <= target) {
    out.converged = true;
    return out;
  }
  while (out.iterations < opts.max_iter) {
    for (std::size_t i = 0; i < n; ++i) basis[0][i] = r[i] / beta;
    std::fill(g.begin(), g.end(), cplx(0.0));
    g[0] = beta;
    h.setZero();
    int k = 0;
    for (; k < m && out.iterations < opts.max_iter; ++k) {
      precond.apply(basis[k], z);
      apply_a(z, w);
      // modified Gram–Schmidt, two passes
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= k; ++i) {
          const cplx hij = dot(basis[i], w);
          h(i, k) += hij;
          for (std::size_t p = 0; p < n; ++p) w[p] -= hij * basis[i][p];
        }
      const double hnext = spectrum_norm(w);
      h(k + 1, k) = hnext;
      if (hnext > 0.0)
        for (std::size_t p = 0; p < n; ++p) basis[k + 1][p] = w[p] / hnext;

      for (int i = 0; i < k; ++i) {
        const cplx t = std::conj(cs[i]) * h(i, k) + std::conj(sn[i]) * h(i + 1, k);
        h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
        h(i, k) = t;
      }
      const cplx a = h(k, k), bb = h(k + 1, k);
      const double denom = std::sqrt(std::norm(a) + std::norm(bb));
      if (denom == 0.0) {
        cs[k] = 1.0;
        sn[k] = 0.0;
      } else {
        cs[k] = a / denom;
        sn[k] = bb / denom;
      }
      h(k, k) = std::conj(cs[k]) * a + std::conj(sn[k]) * bb;
      h(k + 1, k) = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = std::conj(cs[k]) * g[k];
      ++out.iterations;
      if (std::abs(g[k + 1]) <= target || hnext == 0.0) {
        ++k;
        break;
      }
    }

    // back substitution on the k×k triangle
    std::vector<cplx> y(k);
    for (int i = k - 1; i >= 0; --i) {
      cplx acc = g[i];
      for (int j = i + 1; j < k; ++j) acc -= h(i, j) * y[j];
      y[i] = acc / h(i, i);
    }
    std::fill(w.begin(), w.end(), cplx(0.0));
    for (int i = 0; i < k; ++i)
      for (std::size_t p = 0; p < n; ++p) w[p] += y[i] * basis[i][p];
    precond.apply(w, z);
    for (std::size_t p = 0; p < n; ++p) x[p] += z[p];

    beta = true_residual();
    if (beta <= target) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace

Preconditioner parse_preconditioner(std::string_view name) {
  if (name == "none") return Preconditioner::none;
  if (name == "fourier_diagonal") return Preconditioner::fourier_diagonal;
  if (name == "x2_block") return Preconditioner::x2_block;
  throw ConfigError("unknown preconditioner '" + std::string(name) + "' (expected none|fourier_diagonal|x2_block)");
}

std::string_view to_string(Preconditioner p) {
  switch (p) {
    case Preconditioner::none:
      return "none";
    case Preconditioner::fourier_diagonal:
      return "fourier_diagonal";
    case Preconditioner::x2_block:
      return "x2_block";
  }
  return "?";
}

std::string_view to_string(LadderVerdict v) {
  switch (v) {
    case LadderVerdict::converged:
      return "converged";
    case LadderVerdict::diverging:
      return "diverging";
    case LadderVerdict::inconclusive:
      return "inconclusive";
  }
  return "?";
}

ResolventSolution solve_resolvent(const OperatorSpec& spec, const ResolventQuery& q, const Field* initial_guess) {
  check_query(spec, q);
  const TorusGrid& grid = spec.grid();
  OperatorKernel kernel(spec);
  const SpectralTransform& t = kernel.transform();

  cplx shift = q.omega + cplx(0.0, q.epsilon);
  OperatorForm form = OperatorForm::damped;
  if (q.adjoint) {
    shift = std::conj(shift);
    form = OperatorForm::adjoint;
  }
  const PreconditionerOp precond(spec, t, shift, form, q.krylov.preconditioner);

  std::vector<cplx> b(grid.size()), x(grid.size(), 0.0);
  t.forward(q.f.values(), b);
  t.zero_nyquist(b);
  if (initial_guess) {
    if (!(initial_guess->grid() == grid) || initial_guess->layout() != Layout::grid)
      throw std::invalid_argument("initial guess must be a grid-layout field on the operator grid");
    t.forward(initial_guess->values(), x);
    t.zero_nyquist(x);
  }

  auto apply_a = [&](std::span<const cplx> in, std::span<cplx> out) { kernel.apply(in, out, shift, form); };
  const GmresOutcome outcome = gmres(apply_a, precond, b, x, q.krylov);

  std::vector<cplx> r(grid.size());
  apply_a(x, r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  std::vector<cplx> ug(grid.size());
  t.inverse(x, ug);

  ResolventSolution sol{Field(grid, std::move(ug)), 0.0, 0.0, outcome.iterations, false};
  // spectral coefficients carry the unit-plane-wave scaling; ‖u‖_{L²} = 2π‖û‖
  sol.residual = kTwoPi * spectrum_norm(r);
  const double f_norm = kTwoPi * spectrum_norm(b);
  sol.relative_residual = f_norm > 0.0 ? sol.residual / f_norm : sol.residual;
  sol.converged = sol.relative_residual <= q.krylov.rtol;
  return sol;
}

Field resolvent_residual(const OperatorSpec& spec, const Field& u, cplx omega, double epsilon, const Field& f) {
  return apply_damped(spec, u, omega + cplx(0.0, epsilon)) - project_nyquist(f);
}

std::vector<double> default_epsilons() {
  std::vector<double> e(9);
  for (int j = 0; j < 9; ++j) e[j] = std::pow(10.0, -1.0 - 0.5 * j);
  return e;
}

std::optional<Field> ResolventLadder::extrapolated_limit() const {
  const std::size_t n = solutions.size();
  if (n < 2) return std::nullopt;
  const double e1 = epsilons[n - 2], e2 = epsilons[n - 1];
  // u(ε) ≈ u0 + ε u1  ⇒  u0 ≈ u2 + (u2 − u1) ε2/(ε1 − ε2)
  return solutions[n - 1] + cplx(e2 / (e1 - e2)) * (solutions[n - 1] - solutions[n - 2]);
}

ResolventLadder limiting_absorption(const OperatorSpec& spec, cplx omega, const Field& f,
                                    std::span<const double> epsilons, const LadderOptions& opts) {
  if (epsilons.empty()) throw std::invalid_argument("epsilon ladder is empty");
  for (std::size_t j = 0; j < epsilons.size(); ++j) {
    if (!(epsilons[j] > 0.0)) throw std::invalid_argument("epsilons must be positive");
    if (j > 0 && !(epsilons[j] < epsilons[j - 1])) throw std::invalid_argument("epsilons must be strictly decreasing");
  }
  if (omega.imag() < 0.0) throw std::invalid_argument("resolvent requires Im omega >= 0");
  if (std::abs(omega.real()) > opts.delta) {
    std::ostringstream os;
    os << "|Re omega| = " << std::abs(omega.real()) << " exceeds delta = " << opts.delta;
    throw std::invalid_argument(os.str());
  }

  ResolventLadder ladder;
  ladder.omega = omega;
  ladder.f_norm = l2_norm(project_nyquist(f));
  for (double eps : epsilons) {
    const ResolventQuery q{omega, eps, f, opts.krylov, false};
    const Field* guess = opts.warm_start && !ladder.solutions.empty() ? &ladder.solutions.back() : nullptr;
    ResolventSolution sol = solve_resolvent(spec, q, guess);
    if (!sol.converged) {
      std::ostringstream os;
      os << "rung epsilon = " << eps << " stopped at relative residual " << sol.relative_residual << " after "
         << sol.iterations << " iterations";
      ladder.complete = false;
      ladder.failure = os.str();
      break;
    }
    if (!ladder.solutions.empty()) ladder.cauchy_gaps.push_back(l2_norm(sol.u - ladder.solutions.back()));
    ladder.epsilons.push_back(eps);
    ladder.residual_norms.push_back(sol.residual);
    ladder.solution_norms.push_back(l2_norm(sol.u));
    ladder.iterations.push_back(sol.iterations);
    ladder.solutions.push_back(std::move(sol.u));
  }

  const std::size_t n = ladder.solutions.size();
  if (n >= 1) {
    const double last = ladder.epsilons.back();
    for (std::size_t j = 0; j < n; ++j)
      if (ladder.epsilons[j] <= 100.0 * last * (1.0 + 1e-9)) {
        if (j + 1 < n && ladder.solution_norms[j] > 0.0) ladder.growth = ladder.solution_norms.back() / ladder.solution_norms[j];
        break;
      }
  }
  if (ladder.growth && *ladder.growth >= opts.growth_factor) {
    ladder.verdict = LadderVerdict::diverging;
  } else if (ladder.complete && !ladder.cauchy_gaps.empty()) {
    bool decreasing = true;
    for (std::size_t j = 1; j < ladder.cauchy_gaps.size(); ++j)
      if (!(ladder.cauchy_gaps[j] < ladder.cauchy_gaps[j - 1])) decreasing = false;
    if (decreasing && ladder.cauchy_gaps.back() <= opts.gap_tolerance * ladder.f_norm)
      ladder.verdict = LadderVerdict::converged;
  }
  return ladder;
}

OmegaSweep omega_sweep(const OperatorSpec& spec, const Field& f, std::span<const double> omegas,
                       std::span<const double> epsilons, const LadderOptions& opts, int jobs) {
  if (omegas.empty()) throw std::invalid_argument("omega grid is empty");
  if (epsilons.empty()) throw std::invalid_argument("epsilon ladder is empty");
  for (double w : omegas)
    if (std::abs(w) > opts.delta) throw std::invalid_argument("omega outside [-delta, delta]");
  const std::size_t n = omegas.size();
  OmegaSweep sweep;
  sweep.ladders.resize(n);
  sweep.derivative_norms.assign(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(n);

  auto work = [&](std::size_t j) {
    try {
      sweep.ladders[j] = limiting_absorption(spec, omegas[j], f, epsilons, opts);
      const ResolventLadder& l = sweep.ladders[j];
      if (!l.complete) return;
      const ResolventQuery q{omegas[j], l.epsilons.back(), l.solutions.back(), opts.krylov, false};
      const ResolventSolution d = solve_resolvent(spec, q);
      if (d.converged) sweep.derivative_norms[j] = l2_norm(d.u);
    } catch (const std::exception& e) {
      errors[j] = e.what();
    }
  };

  const int workers = std::clamp(jobs, 1, static_cast<int>(n));
  if (workers == 1) {
    for (std::size_t j = 0; j < n; ++j) work(j);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < n; j += workers) work(j);
      });
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw NumericalError("omega sweep: " + e);

  for (std::size_t j = 0; j + 1 < n; ++j) {
    const auto& a = sweep.ladders[j];
    const auto& b = sweep.ladders[j + 1];
    if (a.complete && b.complete)
      sweep.neighbor_gaps.push_back(l2_norm(b.solutions.back() - a.solutions.back()));
    else
      sweep.neighbor_gaps.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  return sweep;
}

Field random_smooth_field(const TorusGrid& grid, std::uint64_t seed, int band) {
  if (band < 0 || 2 * band >= std::min(grid.n1(), grid.n2()))
    throw std::invalid_argument("random field band exceeds the grid");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const SpectralTransform t(grid);
  std::vector<cplx> spec(grid.size(), 0.0);
  for (int k1 = -band; k1 <= band; ++k1)
    for (int k2 = -band; k2 <= band; ++k2) {
      const int r = (k1 + grid.n1()) % grid.n1(), c = (k2 + grid.n2()) % grid.n2();
      const double re = normal(rng), im = normal(rng);
      spec[grid.index(r, c)] = cplx(re, im);
    }
  std::vector<cplx> g(grid.size());
  t.inverse(spec, g);
  Field f(grid, std::move(g));
  return cplx(1.0 / l2_norm(f)) * f;
}

double control_ratio(const OperatorSpec& spec, const Field& u, const Field& cutoff, double omega, double s,
                     double junk_order) {
  const Field cu = project_nyquist(cutoff.times(u));
  const Field pu = apply_damped(spec, u, omega);
  const double num = hs_norm(u, s);
  const double den = hs_norm(cu, s) + hs_norm(pu, s + 1.0) + hs_norm(u, -junk_order);
  return num / den;
}

ControlConstantEstimate estimate_control_constant(const OperatorSpec& spec, const Field& cutoff,
                                                  std::span<const double> omegas, std::span<const double> epsilons,
                                                  const ControlConstantOptions& opts) {
  if (!(opts.s > -0.5)) throw std::invalid_argument("control estimate requires s > -1/2");
  if (opts.samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (omegas.empty() || epsilons.empty()) throw std::invalid_argument("omega and epsilon lists must be non-empty");
  if (!(cutoff.grid() == spec.grid()) || cutoff.layout() != Layout::grid)
    throw std::invalid_argument("cutoff must be a grid-layout field on the operator grid");

  ControlConstantEstimate est;
  est.omegas.assign(omegas.begin(), omegas.end());
  est.epsilons.assign(epsilons.begin(), epsilons.end());
  est.ratios.assign(omegas.size(), std::vector<double>(epsilons.size(), 0.0));

  std::vector<Field> data;
  for (int k = 0; k < opts.samples; ++k)
    data.push_back(random_smooth_field(spec.grid(), opts.seed + static_cast<std::uint64_t>(k), opts.data_band));

  for (std::size_t w = 0; w < omegas.size(); ++w)
    for (std::size_t e = 0; e < epsilons.size(); ++e)
      for (const Field& f : data) {
        const ResolventQuery q{omegas[w], epsilons[e], f, opts.krylov, false};
        const ResolventSolution sol = solve_resolvent(spec, q);
        if (!sol.converged) {
          std::ostringstream os;
          os << "control-constant solve at omega = " << omegas[w] << ", epsilon = " << epsilons[e]
             << " reached relative residual " << sol.relative_residual;
          throw NumericalError(os.str());
        }
        const double r = control_ratio(spec, sol.u, cutoff, omegas[w], opts.s, opts.junk_order);
        est.ratios[w][e] = std::max(est.ratios[w][e], r);
      }

  est.max_by_epsilon.assign(epsilons.size(), 0.0);
  for (std::size_t e = 0; e < epsilons.size(); ++e)
    for (std::size_t w = 0; w < omegas.size(); ++w)
      est.max_by_epsilon[e] = std::max(est.max_by_epsilon[e], est.ratios[w][e]);
  est.max_ratio = *std::max_element(est.max_by_epsilon.begin(), est.max_by_epsilon.end());
  const double lo = *std::min_element(est.max_by_epsilon.begin(), est.max_by_epsilon.end());
  est.epsilon_spread = lo > 0.0 ? est.max_ratio / lo : std::numeric_limits<double>::infinity();
  return est;
}

}  // namespace atr
