#include <doctest.h>

#include <cmath>
#include <random>

#include "atr/errors.hpp"
#include "atr/resolvent.hpp"
#include "dense_oracle.hpp"

using namespace atr;

namespace {

const cplx I(0.0, 1.0);

ResolventQuery query(cplx omega, double eps, const Field& f, KrylovOptions k = {}, bool adjoint = false) {
  return ResolventQuery{omega, eps, f, k, adjoint};
}

OperatorSpec with_unit_damping(const OperatorSpec& s) { return s.with_damping(Field::constant(s.grid(), 1.0)); }

// Solves the dense system and returns the coefficient vector.
Eigen::VectorXcd dense_solve(const testing::ModeBasis& basis, const TorusGrid& g, double a, const Field& chi, cplx z,
                             const Field& f) {
  Eigen::MatrixXcd A = testing::dense_operator(basis, g, a, chi, -1);
  A -= z * Eigen::MatrixXcd::Identity(A.rows(), A.cols());
  return A.partialPivLu().solve(testing::coefficients(f, basis));
}

}  // namespace

TEST_CASE("constant coefficients invert mode by mode") {
  const TorusGrid g(16, 16);
  const OperatorSpec spec(Multiplier::normalized_vertical(), Field::constant(g, 0.0), Field::constant(g, 1.0));
  const Field f = Field::plane_wave(g, 0, 1);
  for (Preconditioner pc : {Preconditioner::none, Preconditioner::fourier_diagonal, Preconditioner::x2_block}) {
    KrylovOptions k;
    k.preconditioner = pc;
    const auto sol = solve_resolvent(spec, query(0.0, 1e-3, f, k));
    CHECK(sol.converged);
    const Field expect = (1.0 / (1.0 / std::sqrt(2.0) - I * 1.001)) * f;
    CHECK(testing::max_diff(sol.u, expect) < 1e-10);
  }
}

TEST_CASE("solution matches a dense solve at 32 points per side") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi0);
  const OperatorSpec spec = with_unit_damping(p.op);
  const testing::ModeBasis basis(spec.grid());
  const auto sol = solve_resolvent(spec, query(0.0, 0.1, p.forcing.f));
  REQUIRE(sol.converged);
  const Eigen::VectorXcd expect = dense_solve(basis, spec.grid(), 0.5, spec.damping(), cplx(0.0, 0.1), p.forcing.f);
  const Eigen::VectorXcd got = testing::coefficients(sol.u, basis);
  CHECK((got - expect).norm() <= 1e-7 * expect.norm());
}

TEST_CASE("random dense comparisons for every preconditioner") {
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> re(-0.1, 0.1), im(0.0, 0.05), le(-3.0, -1.0);
  const DampingPreset presets[] = {DampingPreset::chi1, DampingPreset::chi2};
  for (int draw = 0; draw < 20; ++draw) {
    const Preset p = preset_paper(0.5, 16, 16, presets[draw % 2]);
    const TorusGrid& g = p.op.grid();
    const testing::ModeBasis basis(g);
    const cplx omega(re(rng), im(rng));
    const double eps = std::pow(10.0, le(rng));
    const Field f = testing::band_limited_field(g, 500 + draw, 5);
    const Eigen::VectorXcd expect = dense_solve(basis, g, 0.5, p.op.damping(), omega + I * eps, f);
    for (Preconditioner pc : {Preconditioner::none, Preconditioner::fourier_diagonal, Preconditioner::x2_block}) {
      KrylovOptions k;
      k.preconditioner = pc;
      k.rtol = 1e-11;
      k.restart = 300;
      const auto sol = solve_resolvent(p.op, query(omega, eps, f, k));
      CAPTURE(draw);
      CAPTURE(to_string(pc));
      CHECK(sol.converged);
      const Eigen::VectorXcd got = testing::coefficients(sol.u, basis);
      CHECK((got - expect).norm() <= 1e-6 * expect.norm());
    }
  }
}

TEST_CASE("reported residual is the true residual") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi2);
  const auto sol = solve_resolvent(p.op, query(cplx(0.05, 0.01), 0.01, p.forcing.f));
  const Field r = apply_damped(p.op, sol.u, cplx(0.05, 0.01) + I * 0.01) - p.forcing.f;
  CHECK(std::abs(sol.residual - l2_norm(r)) <= 1e-12 * l2_norm(p.forcing.f));
  CHECK(sol.relative_residual == doctest::Approx(sol.residual / l2_norm(p.forcing.f)));
  CHECK(sol.relative_residual <= 1e-8);
  CHECK(l2_norm(resolvent_residual(p.op, sol.u, cplx(0.05, 0.01), 0.01, p.forcing.f)) <= 1e-8 * l2_norm(p.forcing.f));
}

TEST_CASE("resolvent norm is bounded by the distance to the upper half plane") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi2);
  for (unsigned seed = 0; seed < 5; ++seed) {
    const Field f = testing::band_limited_field(p.op.grid(), seed, 8);
    for (double eps : {0.1, 0.01})
      for (double im : {0.0, 0.02}) {
        const auto sol = solve_resolvent(p.op, query(cplx(0.03, im), eps, f));
        CHECK(l2_norm(sol.u) <= l2_norm(f) / (eps + im) * (1 + 1e-8));
      }
  }
}

TEST_CASE("conjugation maps the solution to the reflected adjoint problem") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi2);
  const TorusGrid& g = p.op.grid();
  const Field f = testing::random_real_field(g, 4);
  const double eps = 0.05;
  const auto u = solve_resolvent(p.op, query(0.0, eps, f)).u;

  const Multiplier& m = p.op.multiplier();
  const OperatorSpec reflected(Multiplier([m](int k1, int k2) { return -m(k1, k2); }), p.op.potential(),
                               p.op.damping());
  KrylovOptions k;
  k.rtol = 1e-12;
  const auto w = solve_resolvent(reflected, query(0.0, eps, f.conj(), k, true));
  CHECK(testing::rel_l2(w.u, u.conj()) <= 1e-7);

  const OperatorSpec even(Multiplier([](int k1, int k2) { return std::abs(k2) / japanese_bracket(k1, k2); }),
                          p.op.potential(), p.op.damping());
  const auto ue = solve_resolvent(even, query(0.0, eps, f, k)).u;
  const auto we = solve_resolvent(even, query(0.0, eps, f, k, true)).u;
  CHECK(testing::rel_l2(we, ue.conj()) <= 1e-7);
}

TEST_CASE("adjoint solves pair with forward solves") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi1);
  const TorusGrid& g = p.op.grid();
  const Field f = testing::random_field(g, 1), h = testing::random_field(g, 2);
  KrylovOptions k;
  k.rtol = 1e-12;
  const cplx omega(0.04, 0.01);
  const Field u = solve_resolvent(p.op, query(omega, 0.02, project_nyquist(f), k)).u;
  const Field w = solve_resolvent(p.op, query(omega, 0.02, project_nyquist(h), k, true)).u;
  const cplx lhs = inner(project_nyquist(f), w), rhs = inner(u, project_nyquist(h));
  CHECK(std::abs(lhs - rhs) <= 1e-9 * std::abs(rhs));
}

TEST_CASE("argument errors and iteration limits") {
  const Preset p = preset_paper(0.5, 16, 16, DampingPreset::chi2);
  const Field& f = p.forcing.f;
  CHECK_THROWS_AS(solve_resolvent(p.op, query(cplx(0.0, -0.1), 0.1, f)), std::invalid_argument);
  CHECK_THROWS_AS(solve_resolvent(p.op, query(0.0, 0.0, f)), std::invalid_argument);
  CHECK_THROWS_AS(solve_resolvent(p.op, query(0.0, -1.0, f)), std::invalid_argument);
  CHECK_THROWS_AS(solve_resolvent(p.op, query(0.0, 0.1, Field::constant(TorusGrid(8, 8), 1.0))),
                  std::invalid_argument);
  KrylovOptions k;
  k.preconditioner = Preconditioner::none;
  k.max_iter = 1;
  const auto sol = solve_resolvent(p.op, query(0.0, 1e-3, f, k));
  CHECK_FALSE(sol.converged);
  CHECK(sol.iterations == 1);
  CHECK(sol.relative_residual > 1e-8);
  CHECK(parse_preconditioner("fourier_diagonal") == Preconditioner::fourier_diagonal);
  CHECK_THROWS_AS(parse_preconditioner("ilu"), ConfigError);
}

TEST_CASE("ladder with unit damping converges to a solution of the limit problem") {
  const Preset p = preset_paper(0.5, 64, 64, DampingPreset::chi0);
  const OperatorSpec spec = with_unit_damping(p.op);
  const auto eps = default_epsilons();
  REQUIRE(eps.size() == 9);
  CHECK(eps.front() == doctest::Approx(0.1));
  CHECK(eps.back() == doctest::Approx(1e-5));
  const auto lad = limiting_absorption(spec, 0.0, p.forcing.f, eps);
  CHECK(lad.complete);
  CHECK(lad.verdict == LadderVerdict::converged);
  const auto lim = lad.extrapolated_limit();
  REQUIRE(lim.has_value());
  const Field r = apply_damped(spec, *lim, 0.0) - p.forcing.f;
  CHECK(l2_norm(r) <= 1e-6 * l2_norm(p.forcing.f));
  CHECK(lad.f_norm == doctest::Approx(l2_norm(p.forcing.f)));
}

TEST_CASE("ladder without damping diverges") {
  const Preset p = preset_paper(0.5, 64, 64, DampingPreset::chi0);
  const auto eps = default_epsilons();
  const auto lad = limiting_absorption(p.op, 0.0, p.forcing.f, eps);
  CHECK(lad.complete);
  CHECK(lad.verdict == LadderVerdict::diverging);
  REQUIRE(lad.growth.has_value());
  CHECK(*lad.growth >= 2.0);
}

TEST_CASE("ladder with two-sided damping has shrinking gaps") {
  const Preset p = preset_paper(0.5, 64, 64, DampingPreset::chi2);
  const auto eps = default_epsilons();
  const auto lad = limiting_absorption(p.op, 0.0, p.forcing.f, eps);
  CHECK(lad.complete);
  REQUIRE(lad.cauchy_gaps.size() == eps.size() - 1);
  for (std::size_t j = 1; j < lad.cauchy_gaps.size(); ++j) CHECK(lad.cauchy_gaps[j] < lad.cauchy_gaps[j - 1]);
  CHECK(lad.verdict != LadderVerdict::diverging);
  for (double r : lad.residual_norms) CHECK(r <= 1e-8 * lad.f_norm);
}

TEST_CASE("ladder argument checks") {
  const Preset p = preset_paper(0.5, 16, 16, DampingPreset::chi2);
  const std::vector<double> up{1e-3, 1e-2};
  CHECK_THROWS_AS(limiting_absorption(p.op, 0.0, p.forcing.f, up), std::invalid_argument);
  const std::vector<double> ok{1e-1, 1e-2};
  CHECK_THROWS_AS(limiting_absorption(p.op, 0.2, p.forcing.f, ok), std::invalid_argument);
  CHECK_THROWS_AS(limiting_absorption(p.op, cplx(0.0, -0.01), p.forcing.f, ok), std::invalid_argument);
}

TEST_CASE("omega sweeps") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi2);
  const std::vector<double> omegas{-0.05, -0.025, 0.0, 0.025, 0.05};
  const std::vector<double> eps{1e-1, 1e-2, 1e-3};
  const auto one = omega_sweep(p.op, p.forcing.f, omegas, eps, {}, 1);
  const auto three = omega_sweep(p.op, p.forcing.f, omegas, eps, {}, 3);
  REQUIRE(one.ladders.size() == omegas.size());
  REQUIRE(one.neighbor_gaps.size() == omegas.size() - 1);
  for (std::size_t w = 0; w < omegas.size(); ++w) {
    CHECK(one.ladders[w].omega == cplx(omegas[w]));
    CHECK(one.ladders[w].solution_norms == three.ladders[w].solution_norms);
  }
  CHECK(one.neighbor_gaps == three.neighbor_gaps);
  for (std::size_t j = 0; j + 1 < omegas.size(); ++j) {
    const double slope = std::max(one.derivative_norms[j], one.derivative_norms[j + 1]);
    CHECK(one.neighbor_gaps[j] <= 2.0 * slope * (omegas[j + 1] - omegas[j]));
  }

  const std::vector<double> single{0.025};
  const auto s = omega_sweep(p.op, p.forcing.f, single, eps);
  const auto lad = limiting_absorption(p.op, 0.025, p.forcing.f, eps);
  CHECK(s.ladders[0].solution_norms == lad.solution_norms);
  CHECK(s.neighbor_gaps.empty());

  const std::vector<double> far{0.0, 0.3};
  CHECK_THROWS_AS(omega_sweep(p.op, p.forcing.f, far, eps), std::invalid_argument);
}

TEST_CASE("undamped sweep diverges at the origin") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi0);
  const std::vector<double> omegas{-0.05, 0.0, 0.05};
  const auto sweep = omega_sweep(p.op, p.forcing.f, omegas, default_epsilons(), {}, 2);
  CHECK(sweep.ladders[1].verdict == LadderVerdict::diverging);
}

TEST_CASE("control ratio closed-form example") {
  const Preset p = preset_paper(0.5, 32, 32, DampingPreset::chi0);
  const TorusGrid& g = p.op.grid();
  const Field u = Field::plane_wave(g, 0, 1);
  const double expect = kTwoPi / (kTwoPi * std::sqrt(1.375) + kTwoPi / 4.0);
  CHECK(control_ratio(p.op, u, Field::constant(g, 0.0), 0.0, 0.0) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(control_ratio(p.op, u, Field::constant(g, 1.0), 0.0, 0.0) ==
        doctest::Approx(1.0 / (1.0 + std::sqrt(1.375) + 0.25)).epsilon(1e-12));
}

TEST_CASE("control constant estimates") {
  const Preset p2 = preset_paper(0.5, 32, 32, DampingPreset::chi2);
  const std::vector<double> omegas{0.0, 0.05};
  const std::vector<double> eps{1e-2, 1e-3};
  ControlConstantOptions o;
  o.samples = 2;
  o.seed = 3;
  const auto one = estimate_control_constant(p2.op, Field::constant(p2.op.grid(), 1.0), omegas, eps, o);
  CHECK(one.max_ratio <= 1.0 + 1e-6);
  REQUIRE(one.ratios.size() == 2);
  REQUIRE(one.ratios[0].size() == 2);
  CHECK(one.epsilon_spread >= 1.0);

  const Preset p0 = preset_paper(0.5, 32, 32, DampingPreset::chi0);
  const std::vector<double> origin{0.0};
  const std::vector<double> ladder{1e-2, 1e-3, 1e-4};
  const auto zero = estimate_control_constant(p0.op, Field::constant(p0.op.grid(), 0.0), origin, ladder, o);
  CHECK(zero.max_by_epsilon[2] > 2.0 * zero.max_by_epsilon[0]);

  o.s = -0.5;
  CHECK_THROWS_AS(estimate_control_constant(p2.op, Field::constant(p2.op.grid(), 1.0), omegas, eps, o),
                  std::invalid_argument);
}

TEST_CASE("random smooth data is normalized and reproducible") {
  const TorusGrid g(32, 32);
  const Field a = random_smooth_field(g, 7), b = random_smooth_field(g, 7), c = random_smooth_field(g, 8);
  CHECK(l2_norm(a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(testing::max_diff(a, b) == 0.0);
  CHECK(testing::max_diff(a, c) > 0.0);
  const Field ah = to_fourier(a);
  CHECK(std::abs(ah.coefficient(7, 0)) < 1e-14);
  CHECK(std::abs(ah.coefficient(0, -7)) < 1e-14);
}
