#include "atr/operator.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "atr/errors.hpp"

namespace atr {

namespace {

constexpr double kImagTolerance = 1e-14;

std::vector<double> real_values(const Field& f, const char* what, double lower_bound) {
  if (f.layout() != Layout::grid) throw std::invalid_argument(std::string(what) + " must be in grid layout");
  std::vector<double> out(f.size());
  const auto v = f.values();
  for (std::size_t n = 0; n < v.size(); ++n) {
    if (std::abs(v[n].imag()) > kImagTolerance)
      throw std::invalid_argument(std::string(what) + " must be real-valued");
    if (v[n].real() < lower_bound)
      throw std::invalid_argument(std::string(what) + " must be nonnegative");
    out[n] = v[n].real();
  }
  return out;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Wraps an angle difference into [-π, π).
double wrap_centered(double x) {
  double y = std::fmod(x + kPi, kTwoPi);
  if (y < 0) y += kTwoPi;
  return y - kPi;
}

}  // namespace

OperatorSpec::OperatorSpec(Multiplier multiplier, Field potential, Field damping,
                           std::optional<double> preset_parameter)
    : multiplier_(std::move(multiplier)),
      potential_(std::move(potential)),
      damping_(std::move(damping)),
      preset_parameter_(preset_parameter) {
  if (!(potential_.grid() == damping_.grid())) throw std::invalid_argument("grid mismatch");
  potential_real_ = real_values(potential_, "potential", -std::numeric_limits<double>::infinity());
  damping_real_ = real_values(damping_, "damping", -kImagTolerance);
  multiplier_table_ = multiplier_.tabulate(grid());
  multiplier_bound_ = max_abs(multiplier_table_);
  potential_bound_ = max_abs(potential_real_);
  damping_bound_ = max_abs(damping_real_);
}

OperatorSpec OperatorSpec::with_damping(Field damping) const {
  return OperatorSpec(multiplier_, potential_, std::move(damping), preset_parameter_);
}

DampingPreset parse_damping_preset(std::string_view name) {
  if (name == "chi0") return DampingPreset::chi0;
  if (name == "chi1") return DampingPreset::chi1;
  if (name == "chi2") return DampingPreset::chi2;
  throw ConfigError("unknown damping preset '" + std::string(name) + "' (expected chi0|chi1|chi2)");
}

std::string_view to_string(DampingPreset preset) {
  switch (preset) {
    case DampingPreset::chi0: return "chi0";
    case DampingPreset::chi1: return "chi1";
    case DampingPreset::chi2: return "chi2";
  }
  return "?";
}

double periodized_gaussian(double x, double center, double alpha) {
  const double d = wrap_centered(x - center);
  double acc = 0.0;
  for (int j = -1; j <= 1; ++j) {
    const double y = d + kTwoPi * j;
    acc += std::exp(-alpha * y * y);
  }
  return acc;
}

Field torus_potential(const TorusGrid& grid, double a) {
  return Field::sample(grid, [a](double x1, double) { return -a * std::cos(x1); });
}

Field preset_damping(const TorusGrid& grid, DampingPreset preset) {
  switch (preset) {
    case DampingPreset::chi0: return Field(grid);
    case DampingPreset::chi1:
      return Field::sample(grid, [](double x1, double) { return 0.5 * periodized_gaussian(x1, kPi / 2, 5.0); });
    case DampingPreset::chi2:
      return Field::sample(grid, [](double x1, double) {
        return 0.5 * periodized_gaussian(x1, kPi / 2, 5.0) + 0.5 * periodized_gaussian(x1, -kPi / 2, 5.0);
      });
  }
  throw std::invalid_argument("unknown damping preset");
}

ForcingSpec preset_forcing(const TorusGrid& grid) {
  auto bump = [](double x1, double x2, double c1, double c2) {
    return periodized_gaussian(x1, c1, 3.0) * periodized_gaussian(x2, c2, 3.0);
  };
  Field f = Field::sample(grid, [&](double x1, double x2) {
    const double envelope = -5.0 * (bump(x1, x2, -0.9, -0.8) + bump(x1, x2, 0.9, 0.8));
    return envelope * std::polar(1.0, 2.0 * x1 + x2);
  });
  return {project_nyquist(f), "two Gaussian packets at ±(0.9, 0.8) modulated by e^{i(2x1+x2)}"};
}

Preset preset_paper(double a, int n1, int n2, DampingPreset damping) {
  if (!(a > 0.0) || a == 1.0) throw ConfigError("preset parameter a must satisfy a > 0 and a != 1");
  const TorusGrid grid(n1, n2);
  OperatorSpec op(Multiplier::normalized_vertical(), torus_potential(grid, a), preset_damping(grid, damping), a);
  return {std::move(op), preset_forcing(grid)};
}

Field apply_undamped(const OperatorSpec& spec, const Field& u) {
  if (!(u.grid() == spec.grid())) throw std::invalid_argument("grid mismatch");
  if (u.layout() != Layout::grid) throw std::invalid_argument("apply_undamped expects a grid-layout field");
  OperatorKernel kernel(spec);
  const auto& t = kernel.transform();
  std::vector<cplx> spec_in(u.size()), spec_out(u.size()), out(u.size());
  t.forward(u.values(), spec_in);
  kernel.apply(spec_in, spec_out, 0.0, OperatorForm::undamped);
  t.inverse(spec_out, out);
  return Field(u.grid(), std::move(out));
}

Field apply_damped(const OperatorSpec& spec, const Field& u, cplx omega) {
  if (!(u.grid() == spec.grid())) throw std::invalid_argument("grid mismatch");
  if (u.layout() != Layout::grid) throw std::invalid_argument("apply_damped expects a grid-layout field");
  OperatorKernel kernel(spec);
  const auto& t = kernel.transform();
  std::vector<cplx> spec_in(u.size()), spec_out(u.size()), out(u.size());
  t.forward(u.values(), spec_in);
  kernel.apply(spec_in, spec_out, omega, OperatorForm::damped);
  t.inverse(spec_out, out);
  return Field(u.grid(), std::move(out));
}

Field smoothed_indicator(const Field& g, double level, double width) {
  if (g.layout() != Layout::grid) throw std::invalid_argument("smoothed_indicator expects a grid-layout field");
  if (!(width >= 0.0)) throw std::invalid_argument("smoothing width must be nonnegative");
  const TorusGrid& grid = g.grid();
  std::vector<cplx> ind(g.size());
  for (std::size_t n = 0; n < ind.size(); ++n) ind[n] = g.values()[n].real() > level ? 1.0 : 0.0;
  const SpectralTransform t(grid);
  std::vector<cplx> spec(ind.size()), out(ind.size());
  t.forward(ind, spec);
  for (int r = 0; r < grid.n1(); ++r)
    for (int c = 0; c < grid.n2(); ++c) {
      const double k2 = static_cast<double>(t.k1(r)) * t.k1(r) + static_cast<double>(t.k2(c)) * t.k2(c);
      spec[grid.index(r, c)] *= std::exp(-0.5 * width * width * k2);
    }
  t.zero_nyquist(spec);
  t.inverse(spec, out);
  for (cplx& z : out) z = std::clamp(z.real(), 0.0, 1.0);
  return Field(grid, std::move(out));
}

// ---------------------------------------------------------------------------

OperatorKernel::OperatorKernel(const OperatorSpec& spec)
    : transform_(spec.grid()),
      multiplier_(spec.multiplier_table().begin(), spec.multiplier_table().end()),
      coefficient_damped_(spec.grid().size()),
      coefficient_undamped_(spec.grid().size()),
      coefficient_adjoint_(spec.grid().size()),
      input_(spec.grid().size()),
      grid_buffer_(spec.grid().size()),
      product_spectrum_(spec.grid().size()) {
  const auto v = spec.potential_values();
  const auto chi = spec.damping_values();
  for (std::size_t n = 0; n < v.size(); ++n) {
    coefficient_undamped_[n] = v[n];
    coefficient_damped_[n] = cplx(v[n], -chi[n]);
    coefficient_adjoint_[n] = cplx(v[n], chi[n]);
  }
}

void OperatorKernel::apply(std::span<const cplx> spectrum, std::span<cplx> out, cplx shift, OperatorForm form) {
  const auto& coeff = form == OperatorForm::damped    ? coefficient_damped_
                      : form == OperatorForm::adjoint ? coefficient_adjoint_
                                                      : coefficient_undamped_;
  std::copy(spectrum.begin(), spectrum.end(), input_.begin());
  transform_.zero_nyquist(input_);
  transform_.inverse(input_, grid_buffer_);
  for (std::size_t n = 0; n < grid_buffer_.size(); ++n) grid_buffer_[n] *= coeff[n];
  transform_.forward(grid_buffer_, product_spectrum_);
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = (multiplier_[n] - shift) * input_[n] + product_spectrum_[n];
  transform_.zero_nyquist(out);
}

}  // namespace atr
