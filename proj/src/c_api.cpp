#include "atr/atr.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "atr/charflow.hpp"
#include "atr/errors.hpp"
#include "atr/operator.hpp"
#include "atr/resolvent.hpp"
#include "atr/scenario.hpp"

struct atr_field {
  atr::Field value;
};

struct atr_operator {
  atr::Preset preset;
};

struct atr_config {
  atr::ScenarioConfig value;
};

namespace {

thread_local std::string last_error;

atr_status fail(atr_status code, const char* what) {
  last_error = what;
  return code;
}

template <class Fn>
atr_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const atr::ConfigError& e) {
    return fail(ATR_ERR_CONFIG, e.what());
  } catch (const atr::NumericalError& e) {
    return fail(ATR_ERR_NUMERICAL, e.what());
  } catch (const atr::IoError& e) {
    return fail(ATR_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(ATR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::domain_error& e) {
    return fail(ATR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::out_of_range& e) {
    return fail(ATR_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ATR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ATR_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ATR_ERR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define ATR_REQUIRE(cond, msg) \
  if (!(cond)) return fail(ATR_ERR_INVALID_ARGUMENT, msg)

}  // namespace

extern "C" {

const char* atr_last_error(void) { return last_error.c_str(); }

const char* atr_version(void) { return atr::library_version().data(); }

atr_status atr_field_create(int n1, int n2, const double* values, atr_field** out) {
  ATR_REQUIRE(out, "out is null");
  return guarded([&] {
    const atr::TorusGrid grid(n1, n2);
    std::vector<atr::cplx> v(grid.size());
    if (values)
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = atr::cplx(values[2 * i], values[2 * i + 1]);
    *out = new atr_field{atr::Field(grid, std::move(v))};
    return ATR_OK;
  });
}

void atr_field_destroy(atr_field* f) { delete f; }

atr_status atr_field_shape(const atr_field* f, int* n1, int* n2) {
  ATR_REQUIRE(f && n1 && n2, "null argument");
  *n1 = f->value.grid().n1();
  *n2 = f->value.grid().n2();
  return ATR_OK;
}

atr_status atr_field_values(const atr_field* f, double* out, size_t len) {
  ATR_REQUIRE(f && out, "null argument");
  const auto v = f->value.values();
  ATR_REQUIRE(len >= 2 * v.size(), "output buffer too small");
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[2 * i] = v[i].real();
    out[2 * i + 1] = v[i].imag();
  }
  return ATR_OK;
}

atr_status atr_field_hs_norm(const atr_field* f, double s, double* out) {
  ATR_REQUIRE(f && out, "null argument");
  return guarded([&] {
    *out = atr::hs_norm(f->value, s);
    return ATR_OK;
  });
}

atr_status atr_field_inner(const atr_field* u, const atr_field* v, double* re, double* im) {
  ATR_REQUIRE(u && v && re && im, "null argument");
  return guarded([&] {
    const atr::cplx z = atr::inner(u->value, v->value);
    *re = z.real();
    *im = z.imag();
    return ATR_OK;
  });
}

atr_status atr_operator_create_preset(double a, int n1, int n2, const char* damping, atr_operator** out) {
  ATR_REQUIRE(out && damping, "null argument");
  return guarded([&] {
    atr::ScenarioConfig cfg;
    cfg.a = a;
    cfg.n1 = n1;
    cfg.n2 = n2;
    cfg.damping = damping;
    *out = new atr_operator{atr::build_preset(cfg)};
    return ATR_OK;
  });
}

void atr_operator_destroy(atr_operator* op) { delete op; }

atr_status atr_operator_forcing(const atr_operator* op, atr_field** out) {
  ATR_REQUIRE(op && out, "null argument");
  return guarded([&] {
    *out = new atr_field{op->preset.forcing.f};
    return ATR_OK;
  });
}

atr_status atr_operator_damping(const atr_operator* op, atr_field** out) {
  ATR_REQUIRE(op && out, "null argument");
  return guarded([&] {
    *out = new atr_field{op->preset.op.damping()};
    return ATR_OK;
  });
}

atr_status atr_operator_apply(const atr_operator* op, const atr_field* u, double omega_re, double omega_im,
                              atr_field** out) {
  ATR_REQUIRE(op && u && out, "null argument");
  return guarded([&] {
    *out = new atr_field{atr::apply_damped(op->preset.op, u->value, atr::cplx(omega_re, omega_im))};
    return ATR_OK;
  });
}

atr_status atr_find_limit_cycles(double a, double shift, atr_cycle* out, size_t cap, size_t* count) {
  ATR_REQUIRE(count && (out || cap == 0), "null argument");
  return guarded([&] {
    atr::CycleSearchOptions opts;
    opts.shift = shift;
    const auto cycles = atr::find_limit_cycles(a, opts);
    *count = cycles.size();
    for (std::size_t k = 0; k < cycles.size() && k < cap; ++k) {
      const auto& c = cycles[k];
      out[k] = {c.representative.x1,
                c.representative.x2,
                c.representative.theta,
                c.period,
                c.floquet_multiplier,
                c.kind == atr::CycleKind::attractive,
                c.component == atr::CycleComponent::x1_plus,
                c.branch == atr::Branch::theta_pi};
    }
    return ATR_OK;
  });
}

atr_status atr_solve_resolvent(const atr_operator* op, const atr_field* f, double omega_re, double omega_im,
                               double epsilon, double rtol, const char* preconditioner, atr_field** u,
                               atr_resolvent_result* info) {
  ATR_REQUIRE(op && f && u, "null argument");
  return guarded([&] {
    atr::KrylovOptions k;
    k.rtol = rtol;
    if (preconditioner) k.preconditioner = atr::parse_preconditioner(preconditioner);
    const atr::ResolventQuery q{atr::cplx(omega_re, omega_im), epsilon, f->value, k, false};
    atr::ResolventSolution sol = atr::solve_resolvent(op->preset.op, q);
    if (info) *info = {sol.residual, sol.relative_residual, sol.iterations, sol.converged ? 1 : 0};
    *u = new atr_field{std::move(sol.u)};
    return ATR_OK;
  });
}

atr_status atr_config_create(atr_config** out) {
  ATR_REQUIRE(out, "out is null");
  return guarded([&] {
    *out = new atr_config{};
    return ATR_OK;
  });
}

void atr_config_destroy(atr_config* cfg) { delete cfg; }

atr_status atr_config_load(atr_config* cfg, const char* path) {
  ATR_REQUIRE(cfg && path, "null argument");
  return guarded([&] {
    atr::ScenarioConfig tmp = cfg->value;
    atr::load_config_file(tmp, path);
    cfg->value = std::move(tmp);
    return ATR_OK;
  });
}

atr_status atr_config_set(atr_config* cfg, const char* key, const char* value) {
  ATR_REQUIRE(cfg && key && value, "null argument");
  return guarded([&] {
    atr::set_config_value(cfg->value, key, value);
    return ATR_OK;
  });
}

atr_status atr_config_to_yaml(const atr_config* cfg, char** out) {
  ATR_REQUIRE(cfg && out, "null argument");
  return guarded([&] {
    *out = copy_string(atr::config_to_yaml(cfg->value));
    return ATR_OK;
  });
}

atr_status atr_run(const atr_config* cfg, char** manifest_json) {
  ATR_REQUIRE(cfg, "null argument");
  return guarded([&] {
    const atr::RunManifest m = atr::run(cfg->value);
    if (manifest_json) *manifest_json = copy_string(m.to_json());
    if (m.status != "ok") return fail(ATR_ERR_NUMERICAL, m.message.c_str());
    return ATR_OK;
  });
}

void atr_string_free(char* s) { std::free(s); }

}  // extern "C"
