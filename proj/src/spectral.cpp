#include "atr/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <string>

namespace atr {

namespace {

// The FFTW planner is not reentrant; execution of an existing plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void require_same_grid(const Field& a, const Field& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("grid mismatch");
}

void require_layout(const Field& f, Layout layout, const char* what) {
  if (f.layout() != layout)
    throw std::invalid_argument(std::string(what) + ": unexpected field layout");
}

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }
fftw_complex* as_fftw(const cplx* p) { return reinterpret_cast<fftw_complex*>(const_cast<cplx*>(p)); }

std::vector<cplx> shift_half(const TorusGrid& grid, std::span<const cplx> in) {
  if (in.size() != grid.size()) throw std::invalid_argument("spectrum size mismatch");
  const int n1 = grid.n1(), n2 = grid.n2();
  std::vector<cplx> out(in.size());
  for (int r = 0; r < n1; ++r) {
    const int rs = (r + n1 / 2) % n1;
    for (int c = 0; c < n2; ++c) out[grid.index(rs, (c + n2 / 2) % n2)] = in[grid.index(r, c)];
  }
  return out;
}

}  // namespace

TorusGrid::TorusGrid(int n1, int n2) : n1_(n1), n2_(n2) {
  if (n1 < 8 || n2 < 8 || n1 % 2 != 0 || n2 % 2 != 0)
    throw std::invalid_argument("grid sizes must be even and >= 8, got " + std::to_string(n1) + "x" +
                                std::to_string(n2));
}

Field::Field(TorusGrid grid, Layout layout) : grid_(grid), layout_(layout), values_(grid.size()) {}

Field::Field(TorusGrid grid, std::vector<cplx> values, Layout layout)
    : grid_(grid), layout_(layout), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw std::invalid_argument("field has " + std::to_string(values_.size()) + " values, grid needs " +
                                std::to_string(grid_.size()));
  for (const cplx& z : values_)
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw std::invalid_argument("field contains a non-finite value");
}

Field Field::constant(const TorusGrid& grid, cplx c) {
  return Field(grid, std::vector<cplx>(grid.size(), c));
}

Field Field::plane_wave(const TorusGrid& grid, int k1, int k2) {
  return sample(grid, [&](double x1, double x2) { return std::polar(1.0, k1 * x1 + k2 * x2); });
}

cplx Field::at(int i, int j) const {
  require_layout(*this, Layout::grid, "Field::at");
  return values_[grid_.index(i, j)];
}

cplx Field::coefficient(int k1, int k2) const {
  require_layout(*this, Layout::fourier, "Field::coefficient");
  const int n1 = grid_.n1(), n2 = grid_.n2();
  if (k1 < -n1 / 2 || k1 >= n1 / 2 || k2 < -n2 / 2 || k2 >= n2 / 2)
    throw std::out_of_range("frequency outside the grid's band");
  return values_[grid_.index(k1 + n1 / 2, k2 + n2 / 2)];
}

Field Field::conj() const {
  std::vector<cplx> v(values_.size());
  std::transform(values_.begin(), values_.end(), v.begin(), [](cplx z) { return std::conj(z); });
  return Field(grid_, std::move(v), layout_);
}

Field Field::times(const Field& other) const {
  require_same_grid(*this, other);
  require_layout(*this, Layout::grid, "Field::times");
  require_layout(other, Layout::grid, "Field::times");
  std::vector<cplx> v(values_.size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = values_[n] * other.values_[n];
  return Field(grid_, std::move(v));
}

double Field::max_abs() const noexcept {
  double m = 0.0;
  for (const cplx& z : values_) m = std::max(m, std::abs(z));
  return m;
}

Field operator+(const Field& a, const Field& b) {
  require_same_grid(a, b);
  if (a.layout_ != b.layout_) throw std::invalid_argument("layout mismatch");
  std::vector<cplx> v(a.values_.size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = a.values_[n] + b.values_[n];
  return Field(a.grid_, std::move(v), a.layout_);
}

Field operator-(const Field& a, const Field& b) {
  require_same_grid(a, b);
  if (a.layout_ != b.layout_) throw std::invalid_argument("layout mismatch");
  std::vector<cplx> v(a.values_.size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = a.values_[n] - b.values_[n];
  return Field(a.grid_, std::move(v), a.layout_);
}

Field operator*(cplx c, const Field& a) {
  std::vector<cplx> v(a.values_.size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = c * a.values_[n];
  return Field(a.grid_, std::move(v), a.layout_);
}

// ---------------------------------------------------------------------------

Multiplier::Multiplier(Symbol symbol, std::string name) : symbol_(std::move(symbol)), name_(std::move(name)) {
  if (!symbol_) throw std::invalid_argument("multiplier symbol is empty");
}

Multiplier Multiplier::normalized_vertical() {
  return Multiplier([](int k1, int k2) { return k2 / japanese_bracket(k1, k2); }, "normalized_vertical");
}

Multiplier Multiplier::constant(double c) {
  return Multiplier([c](int, int) { return c; }, "constant");
}

std::vector<double> Multiplier::tabulate(const TorusGrid& grid) const {
  const int n1 = grid.n1(), n2 = grid.n2();
  std::vector<double> out(grid.size(), 0.0);
  for (int r = 0; r < n1; ++r) {
    if (r == n1 / 2) continue;
    for (int c = 0; c < n2; ++c) {
      if (c == n2 / 2) continue;
      const double m = symbol_(r < n1 / 2 ? r : r - n1, c < n2 / 2 ? c : c - n2);
      if (!std::isfinite(m)) throw std::invalid_argument("multiplier '" + name_ + "' is not finite");
      out[grid.index(r, c)] = m;
    }
  }
  return out;
}

double Multiplier::sup_abs(const TorusGrid& grid) const {
  const auto table = tabulate(grid);
  double m = 0.0;
  for (double v : table) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------

struct SpectralTransform::Plans {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;

  Plans(int n1, int n2) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    std::vector<cplx> a(static_cast<std::size_t>(n1) * n2), b(a.size());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    fwd = fftw_plan_dft_2d(n1, n2, as_fftw(a.data()), as_fftw(b.data()), FFTW_FORWARD, flags);
    bwd = fftw_plan_dft_2d(n1, n2, as_fftw(a.data()), as_fftw(b.data()), FFTW_BACKWARD, flags);
    if (!fwd || !bwd) throw std::runtime_error("FFTW planning failed");
  }
  ~Plans() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  Plans(const Plans&) = delete;
  Plans& operator=(const Plans&) = delete;
};

SpectralTransform::SpectralTransform(const TorusGrid& grid)
    : grid_(grid), plans_(std::make_shared<const Plans>(grid.n1(), grid.n2())) {}

void SpectralTransform::forward(std::span<const cplx> in, std::span<cplx> out) const {
  if (in.size() != grid_.size() || out.size() != grid_.size())
    throw std::invalid_argument("transform buffer size mismatch");
  fftw_execute_dft(plans_->fwd, as_fftw(in.data()), as_fftw(out.data()));
  const double scale = 1.0 / static_cast<double>(grid_.size());
  for (cplx& z : out) z *= scale;
}

void SpectralTransform::inverse(std::span<const cplx> in, std::span<cplx> out) const {
  if (in.size() != grid_.size() || out.size() != grid_.size())
    throw std::invalid_argument("transform buffer size mismatch");
  fftw_execute_dft(plans_->bwd, as_fftw(in.data()), as_fftw(out.data()));
}

void SpectralTransform::zero_nyquist(std::span<cplx> spectrum) const {
  const int n1 = grid_.n1(), n2 = grid_.n2();
  for (int c = 0; c < n2; ++c) spectrum[grid_.index(n1 / 2, c)] = 0.0;
  for (int r = 0; r < n1; ++r) spectrum[grid_.index(r, n2 / 2)] = 0.0;
}

std::vector<double> SpectralTransform::bracket_weights(double s) const {
  std::vector<double> w(grid_.size());
  for (int r = 0; r < grid_.n1(); ++r)
    for (int c = 0; c < grid_.n2(); ++c) {
      const int k1v = k1(r), k2v = k2(c);
      const double b2 = 1.0 + static_cast<double>(k1v) * k1v + static_cast<double>(k2v) * k2v;
      w[grid_.index(r, c)] = std::pow(b2, s);
    }
  return w;
}

// ---------------------------------------------------------------------------

std::vector<cplx> native_to_centered(const TorusGrid& grid, std::span<const cplx> native) {
  return shift_half(grid, native);
}

std::vector<cplx> centered_to_native(const TorusGrid& grid, std::span<const cplx> centered) {
  // For even sizes the half-period shift is an involution.
  return shift_half(grid, centered);
}

Field to_fourier(const Field& f) {
  require_layout(f, Layout::grid, "to_fourier");
  const SpectralTransform t(f.grid());
  std::vector<cplx> spec(f.size());
  t.forward(f.values(), spec);
  return Field(f.grid(), native_to_centered(f.grid(), spec), Layout::fourier);
}

Field to_grid(const Field& f) {
  require_layout(f, Layout::fourier, "to_grid");
  const SpectralTransform t(f.grid());
  const auto native = centered_to_native(f.grid(), f.values());
  std::vector<cplx> out(f.size());
  t.inverse(native, out);
  return Field(f.grid(), std::move(out));
}

Field project_nyquist(const Field& f) {
  const TorusGrid& g = f.grid();
  if (f.layout() == Layout::fourier) {
    std::vector<cplx> v(f.values().begin(), f.values().end());
    for (int c = 0; c < g.n2(); ++c) v[g.index(0, c)] = 0.0;
    for (int r = 0; r < g.n1(); ++r) v[g.index(r, 0)] = 0.0;
    return Field(g, std::move(v), Layout::fourier);
  }
  const SpectralTransform t(g);
  std::vector<cplx> spec(f.size()), out(f.size());
  t.forward(f.values(), spec);
  t.zero_nyquist(spec);
  t.inverse(spec, out);
  return Field(g, std::move(out));
}

Field apply_multiplier(const Field& f, const Multiplier& m) {
  require_layout(f, Layout::grid, "apply_multiplier");
  const TorusGrid& g = f.grid();
  const SpectralTransform t(g);
  const auto table = m.tabulate(g);
  std::vector<cplx> spec(f.size()), out(f.size());
  t.forward(f.values(), spec);
  for (std::size_t n = 0; n < spec.size(); ++n) spec[n] *= table[n];
  t.inverse(spec, out);
  return Field(g, std::move(out));
}

cplx inner(const Field& u, const Field& v) {
  require_same_grid(u, v);
  require_layout(u, Layout::grid, "inner");
  require_layout(v, Layout::grid, "inner");
  cplx acc = 0.0;
  const auto a = u.values(), b = v.values();
  for (std::size_t n = 0; n < a.size(); ++n) acc += a[n] * std::conj(b[n]);
  return acc * u.grid().cell_area();
}

double l2_norm(const Field& u) { return std::sqrt(std::max(0.0, inner(u, u).real())); }

double hs_norm(const Field& u, double s) {
  const double orders[] = {s};
  return hs_norms(u, orders).front();
}

std::vector<double> hs_norms(const Field& u, std::span<const double> orders) {
  require_layout(u, Layout::grid, "hs_norm");
  const SpectralTransform t(u.grid());
  std::vector<cplx> spec(u.size());
  t.forward(u.values(), spec);
  return SobolevNorms(t, std::vector<double>(orders.begin(), orders.end())).evaluate(spec);
}

SobolevNorms::SobolevNorms(const SpectralTransform& transform, std::vector<double> orders)
    : orders_(std::move(orders)) {
  weights_.reserve(orders_.size());
  for (double s : orders_) weights_.push_back(transform.bracket_weights(s));
}

std::vector<double> SobolevNorms::evaluate(std::span<const cplx> spectrum) const {
  std::vector<double> out(orders_.size());
  for (std::size_t o = 0; o < orders_.size(); ++o) {
    const auto& w = weights_[o];
    if (w.size() != spectrum.size()) throw std::invalid_argument("spectrum size mismatch");
    double acc = 0.0;
    for (std::size_t n = 0; n < spectrum.size(); ++n) acc += w[n] * std::norm(spectrum[n]);
    out[o] = kTwoPi * std::sqrt(acc);
  }
  return out;
}

}  // namespace atr
