#include "atr/scenario.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>
#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "atr/charflow.hpp"
#include "atr/errors.hpp"

#ifndef ATR_VERSION
#define ATR_VERSION "0.0.0"
#endif

namespace atr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using ConfigValue = std::variant<double, long long, std::uint64_t, std::string, std::vector<double>, std::vector<int>>;

std::vector<std::pair<std::string, ConfigValue>> config_entries(const ScenarioConfig& c) {
  return {
      {"scenario", std::string(to_string(c.scenario))},
      {"a", c.a},
      {"damping", c.damping},
      {"grid", std::vector<int>{c.n1, c.n2}},
      {"dt", c.dt},
      {"t_final", c.t_final},
      {"snapshot_times", c.snapshot_times},
      {"norm_orders", c.norm_orders},
      {"scheme", std::string(to_string(c.scheme))},
      {"norm_stride", static_cast<long long>(c.norm_stride)},
      {"concentration_width", c.concentration_width},
      {"epsilons", c.epsilons},
      {"omegas", c.omegas},
      {"delta", c.delta},
      {"rtol", c.rtol},
      {"max_iter", static_cast<long long>(c.max_iter)},
      {"restart", static_cast<long long>(c.restart)},
      {"preconditioner", std::string(to_string(c.preconditioner))},
      {"s", c.s},
      {"samples", static_cast<long long>(c.samples)},
      {"cutoff_level", c.cutoff_level},
      {"cutoff_width", c.cutoff_width},
      {"trajectories", static_cast<long long>(c.trajectories)},
      {"flow_t_final", c.flow_t_final},
      {"flow_tol", c.flow_tol},
      {"cc_threshold", c.cc_threshold},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"jobs", static_cast<long long>(c.jobs)},
  };
}

json config_to_json(const ScenarioConfig& c) {
  json j = json::object();
  for (const auto& [key, value] : config_entries(c)) std::visit([&](const auto& v) { j[key] = v; }, value);
  return j;
}

[[noreturn]] void field_error(std::string_view key, const std::string& what) {
  throw ConfigError("config field '" + std::string(key) + "': " + what);
}

template <class T>
T scalar(std::string_view key, const YAML::Node& node, const char* expected) {
  if (!node.IsScalar()) field_error(key, std::string("expected ") + expected);
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    field_error(key, std::string("expected ") + expected + ", got '" + node.Scalar() + "'");
  }
}

std::vector<double> number_list(std::string_view key, const YAML::Node& node) {
  std::vector<double> out;
  if (node.IsScalar()) {
    out.push_back(scalar<double>(key, node, "a number or a list of numbers"));
    return out;
  }
  if (!node.IsSequence()) field_error(key, "expected a list of numbers");
  for (const auto& item : node) out.push_back(scalar<double>(key, item, "a list of numbers"));
  return out;
}

int int_value(std::string_view key, const YAML::Node& node) { return scalar<int>(key, node, "an integer"); }

void apply_node(ScenarioConfig& cfg, std::string_view key, const YAML::Node& node) {
  auto text = [&] { return scalar<std::string>(key, node, "a string"); };
  auto number = [&] { return scalar<double>(key, node, "a number"); };
  try {
    if (key == "scenario") {
      cfg.scenario = parse_scenario(text());
    } else if (key == "a") {
      cfg.a = number();
    } else if (key == "damping") {
      cfg.damping = text();
    } else if (key == "grid") {
      if (node.IsScalar()) {
        set_config_value(cfg, key, node.Scalar());
        return;
      }
      const auto v = number_list(key, node);
      if (v.size() != 2 || v[0] != std::floor(v[0]) || v[1] != std::floor(v[1]))
        field_error(key, "expected [n1, n2] or N1xN2");
      cfg.n1 = static_cast<int>(v[0]);
      cfg.n2 = static_cast<int>(v[1]);
    } else if (key == "dt") {
      cfg.dt = number();
    } else if (key == "t_final") {
      cfg.t_final = number();
    } else if (key == "snapshot_times") {
      cfg.snapshot_times = node.IsNull() ? std::vector<double>{} : number_list(key, node);
    } else if (key == "norm_orders") {
      cfg.norm_orders = number_list(key, node);
    } else if (key == "scheme") {
      cfg.scheme = parse_scheme(text());
    } else if (key == "norm_stride") {
      cfg.norm_stride = int_value(key, node);
    } else if (key == "concentration_width") {
      cfg.concentration_width = number();
    } else if (key == "epsilons") {
      cfg.epsilons = number_list(key, node);
    } else if (key == "omegas") {
      cfg.omegas = number_list(key, node);
    } else if (key == "delta") {
      cfg.delta = number();
    } else if (key == "rtol") {
      cfg.rtol = number();
    } else if (key == "max_iter") {
      cfg.max_iter = int_value(key, node);
    } else if (key == "restart") {
      cfg.restart = int_value(key, node);
    } else if (key == "preconditioner") {
      cfg.preconditioner = parse_preconditioner(text());
    } else if (key == "s") {
      cfg.s = number();
    } else if (key == "samples") {
      cfg.samples = int_value(key, node);
    } else if (key == "cutoff_level") {
      cfg.cutoff_level = number();
    } else if (key == "cutoff_width") {
      cfg.cutoff_width = number();
    } else if (key == "trajectories") {
      cfg.trajectories = int_value(key, node);
    } else if (key == "flow_t_final") {
      cfg.flow_t_final = number();
    } else if (key == "flow_tol") {
      cfg.flow_tol = number();
    } else if (key == "cc_threshold") {
      cfg.cc_threshold = number();
    } else if (key == "seed") {
      cfg.seed = scalar<std::uint64_t>(key, node, "a nonnegative integer");
    } else if (key == "output_dir") {
      cfg.output_dir = text();
    } else if (key == "jobs") {
      cfg.jobs = int_value(key, node);
    } else {
      throw ConfigError("unknown config field '" + std::string(key) + "'");
    }
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind("config field", 0) == 0 || msg.rfind("unknown config field", 0) == 0) throw;
    field_error(key, msg);
  }
}

// ---------------------------------------------------------------------------
// little-endian binary helpers

void put_bytes(std::ostream& os, std::uint64_t bits, int n) {
  std::array<char, 8> buf{};
  for (int i = 0; i < n; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf.data(), n);
}
void put_u32(std::ostream& os, std::uint32_t v) { put_bytes(os, v, 4); }
void put_f64(std::ostream& os, double v) { put_bytes(os, std::bit_cast<std::uint64_t>(v), 8); }

std::uint64_t get_bytes(std::istream& is, int n) {
  std::array<unsigned char, 8> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), n)) throw IoError("snapshot archive truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}
std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_bytes(is, 8)); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------

struct OutputSet {
  fs::path dir;
  std::vector<std::string> files;

  fs::path add(const std::string& name) {
    files.push_back(name);
    return dir / name;
  }
  void write_json(const std::string& name, const json& j) {
    std::ofstream os(add(name));
    if (!os) throw IoError("cannot write " + (dir / name).string());
    os << j.dump(2) << '\n';
  }
};

json cycle_json(const LimitCycle& c) {
  return {{"x1", c.representative.x1},
          {"x2", c.representative.x2},
          {"theta", c.representative.theta},
          {"period", c.period},
          {"floquet_multiplier", c.floquet_multiplier},
          {"kind", to_string(c.kind)},
          {"component", to_string(c.component)},
          {"branch", to_string(c.branch)}};
}

json krylov_json(const KrylovOptions& k) {
  return {{"method", "gmres"},
          {"restart", k.restart},
          {"max_iter", k.max_iter},
          {"rtol", k.rtol},
          {"preconditioner", to_string(k.preconditioner)}};
}

json ladder_json(const ResolventLadder& l) {
  json j = {{"omega", {l.omega.real(), l.omega.imag()}},
            {"epsilons", l.epsilons},
            {"residual_norms", l.residual_norms},
            {"solution_norms", l.solution_norms},
            {"cauchy_gaps", l.cauchy_gaps},
            {"iterations", l.iterations},
            {"f_norm", l.f_norm},
            {"verdict", to_string(l.verdict)},
            {"complete", l.complete},
            {"failure", l.failure}};
  j["growth"] = l.growth ? json(*l.growth) : json(nullptr);
  return j;
}

KrylovOptions krylov_from(const ScenarioConfig& c) { return {c.rtol, c.max_iter, c.restart, c.preconditioner}; }

LadderOptions ladder_from(const ScenarioConfig& c) {
  LadderOptions o;
  o.krylov = krylov_from(c);
  o.delta = c.delta;
  return o;
}

// ---------------------------------------------------------------------------

void run_evolve(const ScenarioConfig& cfg, const Preset& preset, OutputSet& out, RunManifest&) {
  SimConfig sim;
  sim.dt = cfg.dt;
  sim.t_final = cfg.t_final;
  sim.norm_orders = cfg.norm_orders;
  sim.scheme = cfg.scheme;
  sim.norm_stride = cfg.norm_stride;
  sim.snapshot_times = cfg.snapshot_times;
  if (sim.snapshot_times.empty())
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) sim.snapshot_times.push_back(q * cfg.t_final);
  if (cfg.dt * preset.op.norm_bound() > 0.5) {
    std::ostringstream os;
    os << "dt = " << cfg.dt << " violates dt * (sup|m| + max|V| + max chi) <= 0.5 (bound " << preset.op.norm_bound()
       << ")";
    field_error("dt", os.str());
  }
  validate(sim, preset.op);

  const EvolutionResult res = integrate(preset.op, preset.forcing, sim);
  write_norms_csv(out.add("norms.csv"), res.norms);
  write_snapshots(out.add("snapshots.bin"), preset.op.grid(), res.snapshots);

  const auto l2 = res.norms.at_order(0.0);
  const ConcentrationReport conc = concentration_report(res.final_state, cfg.concentration_width);
  json summary = {{"steps", res.steps},
                  {"final_time", res.final_time},
                  {"f_norm", l2_norm(preset.forcing.f)},
                  {"final_l2", l2.back()},
                  {"max_l2", *std::max_element(l2.begin(), l2.end())},
                  {"concentration",
                   {{"width", conc.width},
                    {"strip_mass_plus", conc.strip_mass_plus},
                    {"strip_mass_minus", conc.strip_mass_minus},
                    {"directional_ratio_plus", conc.directional_ratio_plus},
                    {"directional_ratio_minus", conc.directional_ratio_minus}}}};
  out.write_json("summary.json", summary);
}

void run_flow(const ScenarioConfig& cfg, OutputSet& out, RunManifest&) {
  json doc;
  doc["a"] = cfg.a;
  const auto cycles = find_limit_cycles(cfg.a);
  doc["cycles"] = json::array();
  for (const auto& c : cycles) doc["cycles"].push_back(cycle_json(c));

  doc["shifted"] = json::array();
  for (double shift : {-cfg.delta, cfg.delta}) {
    if (!(cfg.a + std::abs(shift) < 1.0)) continue;
    CycleSearchOptions o;
    o.shift = shift;
    json s = {{"shift", shift}, {"cycles", json::array()}};
    for (const auto& c : find_limit_cycles(cfg.a, o)) s["cycles"].push_back(cycle_json(c));
    doc["shifted"].push_back(s);
  }

  // random starting points on the surface, drawn up front so results do not depend on jobs
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  std::vector<FlowPoint> starts;
  for (int k = 0; k < cfg.trajectories; ++k) {
    const double x1 = angle(rng), x2 = angle(rng);
    const Branch b = (rng() & 1U) ? Branch::theta_pi : Branch::theta_0;
    starts.push_back(surface_point(x1, x2, b, cfg.a));
  }
  std::vector<Trajectory> trajs(starts.size());
  std::vector<std::string> errors(starts.size());
  TrajectoryOptions topts;
  topts.output_times = {0.0, cfg.flow_t_final};
  auto work = [&](std::size_t k) {
    try {
      trajs[k] = integrate_trajectory(starts[k], cfg.a, cfg.flow_t_final, cfg.flow_tol, topts);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  };
  const int workers = std::clamp(cfg.jobs, 1, std::max(1, static_cast<int>(starts.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < starts.size(); k += workers) work(k);
    });
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw NumericalError("trajectory: " + e);

  double worst = 0.0;
  doc["trajectories"] = json::array();
  for (std::size_t k = 0; k < trajs.size(); ++k) {
    const FlowPoint& p = starts[k];
    const FlowPoint& q = trajs[k].points.back();
    worst = std::max(worst, trajs[k].max_surface_residual);
    doc["trajectories"].push_back({{"start", {p.x1, p.x2, p.theta}},
                                   {"end", {q.x1, q.x2, q.theta}},
                                   {"steps", trajs[k].steps},
                                   {"max_surface_residual", trajs[k].max_surface_residual},
                                   {"distance_to_attractive", distance_to_cycles(q, cycles, CycleKind::attractive)}});
  }
  doc["trajectory_length"] = cfg.flow_t_final;
  doc["max_surface_residual"] = worst;
  out.write_json("cycles.json", doc);
}

void run_resolvent(const ScenarioConfig& cfg, const Preset& preset, OutputSet& out, RunManifest& m) {
  const ResolventLadder l =
      limiting_absorption(preset.op, cfg.omegas.front(), preset.forcing.f, cfg.epsilons, ladder_from(cfg));
  json doc = ladder_json(l);
  doc["krylov"] = krylov_json(krylov_from(cfg));
  doc["thresholds"] = {{"gap_tolerance", LadderOptions{}.gap_tolerance}, {"growth_factor", LadderOptions{}.growth_factor}};
  out.write_json("ladder.json", doc);
  if (!l.complete) {
    m.status = "numerical_failure";
    m.message = l.failure;
  }
}

void run_sweep(const ScenarioConfig& cfg, const Preset& preset, OutputSet& out, RunManifest& m) {
  const OmegaSweep sw = omega_sweep(preset.op, preset.forcing.f, cfg.omegas, cfg.epsilons, ladder_from(cfg), cfg.jobs);
  json doc;
  doc["omegas"] = cfg.omegas;
  doc["ladders"] = json::array();
  for (const auto& l : sw.ladders) {
    doc["ladders"].push_back(ladder_json(l));
    if (!l.complete && m.status == "ok") {
      m.status = "numerical_failure";
      m.message = l.failure;
    }
  }
  doc["neighbor_gaps"] = sw.neighbor_gaps;
  doc["derivative_norms"] = sw.derivative_norms;
  doc["krylov"] = krylov_json(krylov_from(cfg));
  out.write_json("ladder.json", doc);
}

void run_control_constant(const ScenarioConfig& cfg, const Preset& preset, OutputSet& out, RunManifest&) {
  const Field cutoff = smoothed_indicator(preset.op.damping(), cfg.cutoff_level, cfg.cutoff_width);
  ControlConstantOptions o;
  o.s = cfg.s;
  o.samples = cfg.samples;
  o.seed = cfg.seed;
  o.krylov = krylov_from(cfg);
  const ControlConstantEstimate est = estimate_control_constant(preset.op, cutoff, cfg.omegas, cfg.epsilons, o);
  json doc = {{"s", cfg.s},
              {"junk_order", o.junk_order},
              {"cutoff", {{"level", cfg.cutoff_level}, {"width", cfg.cutoff_width}}},
              {"omegas", est.omegas},
              {"epsilons", est.epsilons},
              {"ratios", est.ratios},
              {"max_by_epsilon", est.max_by_epsilon},
              {"max_ratio", est.max_ratio},
              {"epsilon_spread", est.epsilon_spread},
              {"samples", cfg.samples}};
  out.write_json("control_constant.json", doc);
}

void run_check_cc(const ScenarioConfig& cfg, const Preset& preset, OutputSet& out, RunManifest&) {
  const auto cycles = find_limit_cycles(cfg.a);
  double threshold = cfg.cc_threshold;
  if (threshold == 0.0) threshold = 0.1 * preset.op.damping_bound();
  threshold = std::max(threshold, std::numeric_limits<double>::min());
  json doc;
  doc["threshold"] = threshold;
  doc["damping"] = cfg.damping;
  doc["cycles"] = json::array();
  for (const auto& c : cycles) doc["cycles"].push_back(cycle_json(c));
  for (ControlSign sign : {ControlSign::plus, ControlSign::minus}) {
    const ControlReport r = check_control_condition(preset.op.damping(), cycles, sign, threshold);
    json rep = {{"overall", r.overall}, {"components", json::object()}, {"max_damping", json::object()}};
    for (const auto& [comp, ok] : r.components) rep["components"][std::string(to_string(comp))] = ok;
    for (const auto& [comp, v] : r.max_damping) rep["max_damping"][std::string(to_string(comp))] = v;
    doc[sign == ControlSign::plus ? "plus" : "minus"] = rep;
  }
  out.write_json("control.json", doc);
}

}  // namespace

// ---------------------------------------------------------------------------

ScenarioKind parse_scenario(std::string_view name) {
  std::string n(name);
  std::replace(n.begin(), n.end(), '-', '_');
  if (n == "evolve") return ScenarioKind::evolve;
  if (n == "flow") return ScenarioKind::flow;
  if (n == "resolvent") return ScenarioKind::resolvent;
  if (n == "sweep") return ScenarioKind::sweep;
  if (n == "control_constant") return ScenarioKind::control_constant;
  if (n == "check_cc") return ScenarioKind::check_cc;
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::evolve:
      return "evolve";
    case ScenarioKind::flow:
      return "flow";
    case ScenarioKind::resolvent:
      return "resolvent";
    case ScenarioKind::sweep:
      return "sweep";
    case ScenarioKind::control_constant:
      return "control_constant";
    case ScenarioKind::check_cc:
      return "check_cc";
  }
  return "?";
}

std::string_view library_version() { return ATR_VERSION; }

void set_config_value(ScenarioConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "damping" || key == "output_dir") {
    if (value.empty()) field_error(key, "must not be empty");
    (key == "damping" ? cfg.damping : cfg.output_dir) = std::string(value);
    return;
  }
  if (key == "grid") {
    const auto x = value.find_first_of("xX");
    if (x != std::string_view::npos) {
      try {
        std::size_t p1 = 0, p2 = 0;
        const std::string lhs(value.substr(0, x)), rhs(value.substr(x + 1));
        cfg.n1 = std::stoi(lhs, &p1);
        cfg.n2 = std::stoi(rhs, &p2);
        if (p1 != lhs.size() || p2 != rhs.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        field_error(key, "expected N1xN2, got '" + std::string(value) + "'");
      }
      return;
    }
  }
  YAML::Node node;
  try {
    node = YAML::Load(std::string(value));
  } catch (const YAML::Exception& e) {
    field_error(key, std::string("unparsable value: ") + e.what());
  }
  apply_node(cfg, key, node);
}

void load_config_file(ScenarioConfig& cfg, const fs::path& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::BadFile&) {
    throw IoError("cannot read config file " + path.string());
  } catch (const YAML::Exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  if (root.IsNull()) return;
  if (!root.IsMap()) throw ConfigError("config file " + path.string() + " must be a flat key: value mapping");
  for (const auto& kv : root) apply_node(cfg, kv.first.as<std::string>(), kv.second);
}

ScenarioConfig load_config_file(const fs::path& path) {
  ScenarioConfig cfg;
  load_config_file(cfg, path);
  return cfg;
}

std::string config_to_yaml(const ScenarioConfig& cfg) {
  YAML::Emitter em;
  em.SetDoublePrecision(17);
  em << YAML::BeginMap;
  for (const auto& [key, value] : config_entries(cfg)) {
    em << YAML::Key << key << YAML::Value;
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<int>>) {
            em << YAML::Flow << YAML::BeginSeq;
            for (auto x : v) em << x;
            em << YAML::EndSeq;
          } else if constexpr (std::is_same_v<T, std::string>) {
            em << YAML::DoubleQuoted << v;
          } else {
            em << v;
          }
        },
        value);
  }
  em << YAML::EndMap;
  return std::string(em.c_str()) + "\n";
}

void validate(const ScenarioConfig& c) {
  if (!(c.a > 0.0) || c.a == 1.0) field_error("a", "must be positive and different from 1");
  if (c.n1 < 8 || c.n2 < 8 || c.n1 % 2 || c.n2 % 2) field_error("grid", "sizes must be even and >= 8");
  if (c.damping.empty()) field_error("damping", "must be chi0, chi1, chi2 or a file path");
  if (c.damping != "chi0" && c.damping != "chi1" && c.damping != "chi2" && !fs::exists(c.damping))
    field_error("damping", "no preset or file named '" + c.damping + "'");
  if (!(c.dt > 0.0)) field_error("dt", "must be positive");
  if (!(c.t_final > 0.0)) field_error("t_final", "must be positive");
  if (!std::is_sorted(c.snapshot_times.begin(), c.snapshot_times.end()))
    field_error("snapshot_times", "must be sorted");
  for (double t : c.snapshot_times)
    if (!(t >= 0.0 && t <= c.t_final)) field_error("snapshot_times", "every time must lie in [0, t_final]");
  if (c.norm_stride < 1) field_error("norm_stride", "must be >= 1");
  if (std::find(c.norm_orders.begin(), c.norm_orders.end(), 0.0) == c.norm_orders.end())
    field_error("norm_orders", "must include 0");
  if (!(c.concentration_width > 0.0 && c.concentration_width < kPi / 2))
    field_error("concentration_width", "must lie in (0, pi/2)");
  if (c.epsilons.empty()) field_error("epsilons", "must not be empty");
  for (std::size_t j = 0; j < c.epsilons.size(); ++j)
    if (!(c.epsilons[j] > 0.0) || (j > 0 && !(c.epsilons[j] < c.epsilons[j - 1])))
      field_error("epsilons", "must be positive and strictly decreasing");
  if (!(c.delta > 0.0)) field_error("delta", "must be positive");
  if (c.omegas.empty()) field_error("omegas", "must not be empty");
  for (double w : c.omegas)
    if (!(std::abs(w) <= c.delta)) field_error("omegas", "every omega must satisfy |omega| <= delta");
  if (!(c.rtol > 0.0)) field_error("rtol", "must be positive");
  if (c.max_iter < 1) field_error("max_iter", "must be >= 1");
  if (c.restart < 1) field_error("restart", "must be >= 1");
  if (!(c.s > -0.5)) field_error("s", "must exceed -1/2");
  if (c.samples < 1) field_error("samples", "must be >= 1");
  if (!(c.cutoff_width >= 0.0)) field_error("cutoff_width", "must be nonnegative");
  if (!(c.cc_threshold >= 0.0)) field_error("cc_threshold", "must be nonnegative (0 selects 0.1 max chi)");
  if (c.trajectories < 0) field_error("trajectories", "must be >= 0");
  if (!(c.flow_t_final > 0.0)) field_error("flow_t_final", "must be positive");
  if (!(c.flow_tol > 0.0)) field_error("flow_tol", "must be positive");
  if (c.jobs < 1) field_error("jobs", "must be >= 1");
  if (c.output_dir.empty()) field_error("output_dir", "must not be empty");
  if ((c.scenario == ScenarioKind::flow || c.scenario == ScenarioKind::check_cc) && !(c.a < 1.0))
    field_error("a", "cycle search needs a < 1");
}

Field load_custom_damping(const fs::path& path, const TorusGrid& grid) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read damping file " + path.string());
  std::vector<cplx> v;
  v.reserve(grid.size());
  std::string line;
  int row = 0;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (row >= grid.n1())
      throw ConfigError("damping file " + path.string() + ": more than " + std::to_string(grid.n1()) + " rows");
    std::istringstream ls(line);
    std::string tok;
    int col = 0;
    while (ls >> tok) {
      double x = 0.0;
      try {
        std::size_t used = 0;
        x = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::out_of_range&) {
        x = std::numeric_limits<double>::infinity();
      } catch (const std::invalid_argument&) {
        throw ConfigError("damping file " + path.string() + ": row " + std::to_string(row + 1) +
                          " has a non-numeric entry '" + tok + "'");
      }
      if (!std::isfinite(x))
        throw ConfigError("damping file " + path.string() + ": non-finite entry at row " + std::to_string(row + 1) +
                          ", column " + std::to_string(col + 1));
      if (x < 0.0)
        throw ConfigError("damping file " + path.string() + ": negative entry " + tok + " at row " +
                          std::to_string(row + 1) + ", column " + std::to_string(col + 1));
      v.emplace_back(x);
      ++col;
    }
    if (col != grid.n2())
      throw ConfigError("damping file " + path.string() + ": row " + std::to_string(row + 1) + " has " +
                        std::to_string(col) + " values, expected " + std::to_string(grid.n2()));
    ++row;
  }
  if (row != grid.n1())
    throw ConfigError("damping file " + path.string() + ": " + std::to_string(row) + " rows, expected " +
                      std::to_string(grid.n1()));
  return Field(grid, std::move(v));
}

Preset build_preset(const ScenarioConfig& cfg) {
  const bool custom = cfg.damping != "chi0" && cfg.damping != "chi1" && cfg.damping != "chi2";
  Preset p = preset_paper(cfg.a, cfg.n1, cfg.n2, custom ? DampingPreset::chi0 : parse_damping_preset(cfg.damping));
  if (custom) p.op = p.op.with_damping(load_custom_damping(cfg.damping, p.op.grid()));
  return p;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 unavailable");
  std::array<char, 1 << 16> buf;
  while (is) {
    is.read(buf.data(), buf.size());
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

void write_snapshots(const fs::path& path, const TorusGrid& grid, const std::vector<Snapshot>& snaps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("ATRL", 4);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(grid.n1()));
  put_u32(os, static_cast<std::uint32_t>(grid.n2()));
  put_u32(os, static_cast<std::uint32_t>(snaps.size()));
  for (const Snapshot& s : snaps) {
    if (!(s.u.grid() == grid) || s.u.layout() != Layout::grid)
      throw std::invalid_argument("snapshot does not match the archive grid");
    put_f64(os, s.time);
    for (const cplx& z : s.u.values()) {
      put_f64(os, z.real());
      put_f64(os, z.imag());
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<Snapshot> read_snapshots(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "ATRL") throw IoError("not a snapshot archive");
  if (get_u32(is) != 1) throw IoError("unsupported snapshot archive version");
  const int n1 = static_cast<int>(get_u32(is)), n2 = static_cast<int>(get_u32(is));
  const std::uint32_t count = get_u32(is);
  const TorusGrid grid(n1, n2);
  std::vector<Snapshot> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    const double t = get_f64(is);
    std::vector<cplx> v(grid.size());
    for (cplx& z : v) {
      const double re = get_f64(is);
      z = cplx(re, get_f64(is));
    }
    out.push_back({t, t, Field(grid, std::move(v))});
  }
  if (is.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in snapshot archive");
  return out;
}

std::string norm_column_name(double order) {
  if (order == 0.0) return "L2";
  if (order == -1.0) return "Hm1";
  if (order == -0.6) return "Hm0p6";
  char buf[40];
  std::snprintf(buf, sizeof buf, "Hs_%g", order);
  return buf;
}

void write_norms_csv(const fs::path& path, const NormSeries& norms) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << 't';
  for (double s : norms.orders) os << ',' << norm_column_name(s);
  os << '\n';
  for (std::size_t n = 0; n < norms.times.size(); ++n) {
    os << format_double(norms.times[n]);
    for (std::size_t o = 0; o < norms.orders.size(); ++o) os << ',' << format_double(norms.values[o][n]);
    os << '\n';
  }
  if (!os) throw IoError("write failed: " + path.string());
}

std::string RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["scenario"] = to_string(config.scenario);
  j["grid"] = {config.n1, config.n2};
  j["scheme"] = to_string(config.scheme);
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["status"] = status;
  j["message"] = message;
  j["config"] = config_to_json(config);
  j["files"] = json::array();
  for (const auto& f : files) j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return j.dump(2) + "\n";
}

RunManifest run(const ScenarioConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();

  RunManifest m;
  m.config = cfg;
  m.version = std::string(library_version());

  OutputSet out{cfg.output_dir, {}};
  std::error_code ec;
  fs::create_directories(out.dir, ec);
  if (ec) throw IoError("cannot create output directory " + out.dir.string() + ": " + ec.message());

  {
    std::ofstream os(out.add("config.yaml"));
    if (!os) throw IoError("cannot write " + (out.dir / "config.yaml").string());
    os << config_to_yaml(cfg);
  }

  if (cfg.scenario == ScenarioKind::flow) {
    run_flow(cfg, out, m);
  } else {
    const Preset preset = build_preset(cfg);
    switch (cfg.scenario) {
      case ScenarioKind::evolve:
        run_evolve(cfg, preset, out, m);
        break;
      case ScenarioKind::resolvent:
        run_resolvent(cfg, preset, out, m);
        break;
      case ScenarioKind::sweep:
        run_sweep(cfg, preset, out, m);
        break;
      case ScenarioKind::control_constant:
        run_control_constant(cfg, preset, out, m);
        break;
      case ScenarioKind::check_cc:
        run_check_cc(cfg, preset, out, m);
        break;
      case ScenarioKind::flow:
        break;
    }
  }

  for (const auto& name : out.files) {
    const fs::path p = out.dir / name;
    m.files.push_back({name, sha256_file(p), fs::file_size(p)});
  }
  m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream os(out.dir / "manifest.json");
  if (!os) throw IoError("cannot write " + (out.dir / "manifest.json").string());
  os << m.to_json();
  return m;
}

}  // namespace atr
