// Command-line front end over the C API.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "atr/atr.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int exit_code(atr_status s) {
  switch (s) {
    case ATR_OK:
      return kExitOk;
    case ATR_ERR_CONFIG:
    case ATR_ERR_INVALID_ARGUMENT:
      return kExitConfig;
    case ATR_ERR_NUMERICAL:
      return kExitNumerical;
    default:
      return kExitOther;
  }
}

struct Overrides {
  std::string config_path;
  std::optional<double> a, dt, t_final;
  std::optional<std::string> damping, grid, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config_path, "YAML config file (flat key: value mapping)");
  sub->add_option("--a", o.a, "potential strength a in V = -a cos x1");
  sub->add_option("--damping", o.damping, "chi0 | chi1 | chi2 | FILE");
  sub->add_option("--grid", o.grid, "grid size N1xN2");
  sub->add_option("--dt", o.dt, "time step");
  sub->add_option("--t-final", o.t_final, "final time");
  sub->add_option("--out", o.out, "output directory");
  sub->add_option("--seed", o.seed, "seed for randomized data");
  sub->add_option("--jobs", o.jobs, "worker threads for sweeps and trajectory batches");
  sub->add_option("--set", o.sets, "override any config key, KEY=VALUE (repeatable)");
}

int fail(atr_status s, const char* context) {
  std::fprintf(stderr, "error: %s: %s\n", context, atr_last_error());
  return exit_code(s);
}

int execute(const std::string& scenario, const Overrides& o) {
  atr_config* cfg = nullptr;
  if (atr_status s = atr_config_create(&cfg); s != ATR_OK) return fail(s, "config");
  std::unique_ptr<atr_config, decltype(&atr_config_destroy)> guard(cfg, atr_config_destroy);

  if (!o.config_path.empty()) {
    if (atr_status s = atr_config_load(cfg, o.config_path.c_str()); s != ATR_OK) {
      fail(s, "config");
      return kExitConfig;
    }
  }

  std::vector<std::pair<std::string, std::string>> kv{{"scenario", scenario}};
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  if (o.a) kv.emplace_back("a", num(*o.a));
  if (o.damping) kv.emplace_back("damping", *o.damping);
  if (o.grid) kv.emplace_back("grid", *o.grid);
  if (o.dt) kv.emplace_back("dt", num(*o.dt));
  if (o.t_final) kv.emplace_back("t_final", num(*o.t_final));
  if (o.out) kv.emplace_back("output_dir", *o.out);
  if (o.seed) kv.emplace_back("seed", std::to_string(*o.seed));
  if (o.jobs) kv.emplace_back("jobs", std::to_string(*o.jobs));
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "error: --set expects KEY=VALUE, got '%s'\n", s.c_str());
      return kExitConfig;
    }
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : kv)
    if (atr_status s = atr_config_set(cfg, k.c_str(), v.c_str()); s != ATR_OK) return fail(s, "config");

  char* manifest = nullptr;
  const atr_status s = atr_run(cfg, &manifest);
  if (manifest) {
    std::fputs(manifest, stdout);
    atr_string_free(manifest);
  }
  if (s != ATR_OK) return fail(s, "run");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral simulator for zeroth-order operators on the 2-torus"};
  app.set_version_flag("--version", std::string(atr_version()));
  app.require_subcommand(1);

  Overrides o;
  const std::pair<const char*, const char*> commands[] = {
      {"evolve", "time evolution i u_t - P u = f, u(0) = 0"},
      {"flow", "limit cycles and trajectories of the characteristic flow"},
      {"resolvent", "epsilon ladder of (P - omega - i eps)^{-1} f"},
      {"sweep", "epsilon ladders over an omega grid"},
      {"control-constant", "empirical constant of the control estimate"},
      {"check-cc", "control condition of the damping against the cycles"},
  };
  std::string chosen;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_common(sub, o);
    sub->callback([&chosen, n = std::string(name)] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return execute(chosen, o);
}
