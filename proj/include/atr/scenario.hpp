#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "atr/evolution.hpp"
#include "atr/operator.hpp"
#include "atr/resolvent.hpp"

namespace atr {

enum class ScenarioKind { evolve, flow, resolvent, sweep, control_constant, check_cc };

/// Accepts both "control_constant" and "control-constant" spellings.
ScenarioKind parse_scenario(std::string_view name);
std::string_view to_string(ScenarioKind kind);

struct ScenarioConfig {
  ScenarioKind scenario = ScenarioKind::evolve;
  double a = 0.5;
  /// chi0 | chi1 | chi2 | path to a damping file
  std::string damping = "chi2";
  int n1 = 128;
  int n2 = 128;

  // evolve
  double dt = 0.05;
  double t_final = 200.0;
  /// Empty: t_final·{0, 1/4, 1/2, 3/4, 1}.
  std::vector<double> snapshot_times;
  std::vector<double> norm_orders{0.0, -1.0, -0.6};
  Scheme scheme = Scheme::rk4;
  int norm_stride = 1;
  double concentration_width = 0.3;

  // resolvent, sweep, control_constant
  std::vector<double> epsilons = default_epsilons();
  std::vector<double> omegas{0.0};
  double delta = 0.1;
  double rtol = 1e-8;
  int max_iter = 5000;
  int restart = 50;
  Preconditioner preconditioner = Preconditioner::x2_block;
  double s = 0.0;
  int samples = 4;
  double cutoff_level = 0.05;
  double cutoff_width = 0.2;

  // flow, check_cc
  int trajectories = 20;
  double flow_t_final = 100.0;
  double flow_tol = 1e-10;
  /// 0 selects 0.1·max χ
  double cc_threshold = 0.0;

  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int jobs = 1;
};

/// Sets one field from its textual value (YAML scalar or flow sequence;
/// grid also accepts "N1xN2"). Throws ConfigError naming the key.
void set_config_value(ScenarioConfig& cfg, std::string_view key, std::string_view value);
/// Reads a flat YAML mapping on top of `cfg`. Unknown keys are errors.
void load_config_file(ScenarioConfig& cfg, const std::filesystem::path& path);
ScenarioConfig load_config_file(const std::filesystem::path& path);
/// Full resolved configuration as a flat YAML mapping, doubles at 17 digits.
std::string config_to_yaml(const ScenarioConfig& cfg);

/// Field-level validation of everything run() will need.
void validate(const ScenarioConfig& cfg);

/// n1 lines of n2 whitespace-separated reals. Throws IoError when
/// unreadable and ConfigError on a shape mismatch, a non-finite or a
/// negative entry.
Field load_custom_damping(const std::filesystem::path& path, const TorusGrid& grid);

/// Preset for the configured a and grid with preset or file damping.
Preset build_preset(const ScenarioConfig& cfg);

struct ManifestEntry {
  std::string path;  ///< relative to the output directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct RunManifest {
  ScenarioConfig config;
  std::string version;
  double wall_clock_seconds = 0.0;
  std::vector<ManifestEntry> files;
  /// "ok" or "numerical_failure" (a ladder or solve missed its tolerance)
  std::string status = "ok";
  std::string message;

  std::string to_json() const;
};

/// Runs the configured scenario and writes its files plus manifest.json
/// into cfg.output_dir. Byte-identical data files for identical configs.
RunManifest run(const ScenarioConfig& cfg);

std::string sha256_file(const std::filesystem::path& path);

/// snapshots.bin: "ATRL", u32 version, n1, n2, count, then per snapshot an
/// f64 time and n1·n2 interleaved (re, im) f64 values, row-major, little-endian.
void write_snapshots(const std::filesystem::path& path, const TorusGrid& grid, const std::vector<Snapshot>& snaps);
std::vector<Snapshot> read_snapshots(const std::filesystem::path& path);

/// norms.csv with header t,L2,Hm1,Hm0p6 (other orders as Hs_<value>).
void write_norms_csv(const std::filesystem::path& path, const NormSeries& norms);
std::string norm_column_name(double order);

std::string_view library_version();

}  // namespace atr
