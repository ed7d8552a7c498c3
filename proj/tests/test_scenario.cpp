#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "atr/errors.hpp"
#include "atr/scenario.hpp"

using namespace atr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::path(ATR_TEST_TMP) / "scenario" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(read_text(p)); }

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

ScenarioConfig small_evolve(const fs::path& out) {
  ScenarioConfig c;
  c.n1 = c.n2 = 32;
  c.t_final = 2.0;
  c.dt = 0.05;
  c.damping = "chi2";
  c.output_dir = out.string();
  return c;
}

std::map<std::string, std::string> checksums(const RunManifest& m) {
  std::map<std::string, std::string> out;
  for (const auto& f : m.files) out[f.path] = f.sha256;
  return out;
}

}  // namespace

TEST_CASE("yaml config files") {
  const fs::path dir = scratch("yaml");
  write_text(dir / "c.yaml",
             "scenario: control-constant\na: 0.25\ngrid: [32, 48]\nepsilons: [0.1, 0.01]\n"
             "preconditioner: none\nseed: 12345678901234\nsnapshot_times: [0, 1.5]\n");
  const ScenarioConfig c = load_config_file(dir / "c.yaml");
  CHECK(c.scenario == ScenarioKind::control_constant);
  CHECK(c.a == 0.25);
  CHECK(c.n1 == 32);
  CHECK(c.n2 == 48);
  CHECK(c.epsilons == std::vector<double>{0.1, 0.01});
  CHECK(c.preconditioner == Preconditioner::none);
  CHECK(c.seed == 12345678901234ULL);
  CHECK(c.snapshot_times == std::vector<double>{0.0, 1.5});
  CHECK(c.dt == 0.05);

  write_text(dir / "bad_key.yaml", "a: 0.5\nfrobnicate: 3\n");
  CHECK(error_of([&] { load_config_file(dir / "bad_key.yaml"); }).find("frobnicate") != std::string::npos);
  write_text(dir / "bad_value.yaml", "a: soft\n");
  CHECK(error_of([&] { load_config_file(dir / "bad_value.yaml"); }).find("'a'") != std::string::npos);
  write_text(dir / "bad_grid.yaml", "grid: [32]\n");
  CHECK(error_of([&] { load_config_file(dir / "bad_grid.yaml"); }).find("grid") != std::string::npos);
  write_text(dir / "list.yaml", "- 1\n- 2\n");
  CHECK_THROWS_AS(load_config_file(dir / "list.yaml"), ConfigError);
  CHECK_THROWS_AS(load_config_file(dir / "missing.yaml"), IoError);
}

TEST_CASE("single values") {
  ScenarioConfig c;
  set_config_value(c, "grid", "64x32");
  CHECK(c.n1 == 64);
  CHECK(c.n2 == 32);
  set_config_value(c, "grid", "[16, 24]");
  CHECK(c.n2 == 24);
  CHECK(error_of([&] { set_config_value(c, "grid", "64x"); }).find("grid") != std::string::npos);
  set_config_value(c, "scheme", "strang_exp");
  CHECK(c.scheme == Scheme::strang_exp);
  set_config_value(c, "omegas", "[-0.05, 0, 0.05]");
  CHECK(c.omegas.size() == 3);
  set_config_value(c, "damping", "some/file.txt");
  CHECK(c.damping == "some/file.txt");
  set_config_value(c, "scenario", "check_cc");
  CHECK(c.scenario == ScenarioKind::check_cc);
  CHECK_THROWS_AS(set_config_value(c, "scenario", "bake"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "max_iter", "2.5"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(c, "epsilons", "{a: 1}"), ConfigError);
}

TEST_CASE("yaml echo round trip") {
  const fs::path dir = scratch("echo");
  ScenarioConfig c;
  c.scenario = ScenarioKind::sweep;
  c.a = 0.1 + 0.2;
  c.omegas = {-0.1, 1.0 / 3.0 * 0.1};
  c.snapshot_times = {0.0, 7.25};
  c.seed = 99;
  c.output_dir = "some dir/with: colon";
  const std::string text = config_to_yaml(c);
  write_text(dir / "c.yaml", text);
  const ScenarioConfig back = load_config_file(dir / "c.yaml");
  CHECK(back.a == c.a);
  CHECK(back.omegas == c.omegas);
  CHECK(back.output_dir == c.output_dir);
  CHECK(config_to_yaml(back) == text);
}

TEST_CASE("config validation names the field") {
  const auto field_of = [](auto mutate) {
    ScenarioConfig c;
    mutate(c);
    return error_of([&] { validate(c); });
  };
  CHECK(field_of([](ScenarioConfig&) {}).empty());
  CHECK(field_of([](ScenarioConfig& c) { c.a = 1.0; }).find("'a'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.n1 = 7; }).find("'grid'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.damping = "chi9"; }).find("'damping'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.epsilons = {0.1, 0.1}; }).find("'epsilons'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.omegas = {0.2}; }).find("'omegas'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.s = -0.5; }).find("'s'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.snapshot_times = {300.0}; }).find("'snapshot_times'") !=
        std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.jobs = 0; }).find("'jobs'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) {
          c.scenario = ScenarioKind::flow;
          c.a = 1.5;
        }).find("'a'") != std::string::npos);
  CHECK(field_of([](ScenarioConfig& c) { c.a = 1.5; }).empty());
}

TEST_CASE("custom damping files") {
  const fs::path dir = scratch("damping");
  const TorusGrid g(16, 8);
  std::string zeros, chi1;
  const Field ref = preset_damping(g, DampingPreset::chi1);
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 8; ++j) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g ", ref.at(i, j).real());
      chi1 += buf;
      zeros += "0 ";
    }
    chi1 += "\n";
    zeros += "\n";
  }
  write_text(dir / "zeros.txt", zeros);
  write_text(dir / "chi1.txt", chi1);
  CHECK(load_custom_damping(dir / "zeros.txt", g).max_abs() == 0.0);
  const Field back = load_custom_damping(dir / "chi1.txt", g);
  for (std::size_t k = 0; k < back.size(); ++k) CHECK(back.values()[k] == ref.values()[k]);

  ScenarioConfig c;
  c.n1 = 16;
  c.n2 = 8;
  c.damping = (dir / "chi1.txt").string();
  const Preset p = build_preset(c);
  c.damping = "chi1";
  const Preset q = build_preset(c);
  CHECK(std::ranges::equal(p.op.damping_values(), q.op.damping_values()));

  std::string neg = zeros;
  neg[0] = '-';
  neg.insert(1, "1");
  write_text(dir / "neg.txt", neg);
  CHECK(error_of([&] { load_custom_damping(dir / "neg.txt", g); }).find("negative") != std::string::npos);
  std::string nan = zeros;
  nan.replace(0, 1, "nan");
  write_text(dir / "nan.txt", nan);
  CHECK_THROWS_AS(load_custom_damping(dir / "nan.txt", g), ConfigError);
  write_text(dir / "word.txt", "abc" + zeros.substr(1));
  CHECK_THROWS_AS(load_custom_damping(dir / "word.txt", g), ConfigError);
  CHECK_THROWS_AS(load_custom_damping(dir / "zeros.txt", TorusGrid(16, 10)), ConfigError);
  CHECK_THROWS_AS(load_custom_damping(dir / "zeros.txt", TorusGrid(8, 8)), ConfigError);
  CHECK_THROWS_AS(load_custom_damping(dir / "zeros.txt", TorusGrid(32, 8)), ConfigError);
  CHECK_THROWS_AS(load_custom_damping(dir / "absent.txt", g), IoError);
}

TEST_CASE("snapshot archives") {
  const fs::path dir = scratch("snap");
  const TorusGrid g(8, 10);
  std::vector<Snapshot> snaps;
  for (int k = 0; k < 3; ++k)
    snaps.push_back({0.5 * k, 0.5 * k + 0.01, Field::plane_wave(g, k, 1 - k) + Field::constant(g, cplx(0.0, k))});
  write_snapshots(dir / "s.bin", g, snaps);
  CHECK(fs::file_size(dir / "s.bin") == 20 + 3 * (8 + 80 * 16));
  const std::string raw = read_text(dir / "s.bin");
  CHECK(raw.substr(0, 4) == "ATRL");
  CHECK(static_cast<unsigned char>(raw[8]) == 8);
  CHECK(static_cast<unsigned char>(raw[12]) == 10);
  const auto back = read_snapshots(dir / "s.bin");
  REQUIRE(back.size() == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(back[k].time == snaps[k].time);
    for (std::size_t i = 0; i < back[k].u.size(); ++i) CHECK(back[k].u.values()[i] == snaps[k].u.values()[i]);
  }
  write_text(dir / "magic.bin", "XTRL" + raw.substr(4));
  CHECK_THROWS_AS(read_snapshots(dir / "magic.bin"), IoError);
  write_text(dir / "short.bin", raw.substr(0, raw.size() - 3));
  CHECK_THROWS_AS(read_snapshots(dir / "short.bin"), IoError);
  write_text(dir / "long.bin", raw + "x");
  CHECK_THROWS_AS(read_snapshots(dir / "long.bin"), IoError);
}

TEST_CASE("norm table") {
  const fs::path dir = scratch("csv");
  NormSeries n;
  n.orders = {0.0, -1.0, -0.6, 0.5};
  n.times = {0.0, 0.1};
  n.values = {{0.0, 1.0 / 3.0}, {0.0, 0.25}, {0.0, 0.5}, {0.0, 2.0}};
  write_norms_csv(dir / "n.csv", n);
  std::istringstream is(read_text(dir / "n.csv"));
  std::string header, row0, row1;
  std::getline(is, header);
  std::getline(is, row0);
  std::getline(is, row1);
  CHECK(header == "t,L2,Hm1,Hm0p6,Hs_0.5");
  CHECK(row1.rfind("0.10000000000000001,0.33333333333333331,0.25,", 0) == 0);
  CHECK(norm_column_name(-2.0) == "Hs_-2");
}

TEST_CASE("sha256 of known content") {
  const fs::path dir = scratch("sha");
  write_text(dir / "abc", "abc");
  CHECK(sha256_file(dir / "abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  write_text(dir / "empty", "");
  CHECK(sha256_file(dir / "empty") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("evolve runs are reproducible and fully checksummed") {
  const fs::path a = scratch("run_a"), b = scratch("run_b"), c = scratch("run_c");
  const RunManifest ma = run(small_evolve(a));
  const RunManifest mb = run(small_evolve(b));
  CHECK(ma.status == "ok");
  for (const char* f : {"config.yaml", "norms.csv", "snapshots.bin", "summary.json", "manifest.json"})
    CHECK(fs::exists(a / f));
  const auto sa = checksums(ma), sb = checksums(mb);
  CHECK(sa.count("manifest.json") == 0);
  for (const char* f : {"norms.csv", "snapshots.bin", "summary.json"}) {
    REQUIRE(sa.count(f) == 1);
    CHECK(sa.at(f) == sb.at(f));
  }
  for (const auto& e : ma.files) {
    CHECK(sha256_file(a / e.path) == e.sha256);
    CHECK(fs::file_size(a / e.path) == e.bytes);
  }

  const json man = read_json(a / "manifest.json");
  for (const char* k : {"version", "scenario", "grid", "scheme", "wall_clock_seconds", "status", "config", "files"})
    CHECK(man.contains(k));
  CHECK(man["grid"] == json::array({32, 32}));
  CHECK(man["config"]["dt"].get<double>() == 0.05);

  const auto snaps = read_snapshots(a / "snapshots.bin");
  REQUIRE(snaps.size() == 5);
  CHECK(snaps.front().time == 0.0);
  CHECK(snaps.back().time == doctest::Approx(2.0));
  CHECK(snaps[2].time == doctest::Approx(1.0));

  ScenarioConfig echo = load_config_file(a / "config.yaml");
  echo.output_dir = c.string();
  const auto sc = checksums(run(echo));
  for (const char* f : {"norms.csv", "snapshots.bin", "summary.json"}) CHECK(sc.at(f) == sa.at(f));

  ScenarioConfig bad = small_evolve(c);
  bad.dt = 5.0;
  CHECK(error_of([&] { run(bad); }).find("'dt'") != std::string::npos);
}

TEST_CASE("flow scenario") {
  const fs::path dir = scratch("flow");
  ScenarioConfig c;
  c.scenario = ScenarioKind::flow;
  c.trajectories = 3;
  c.flow_t_final = 20.0;
  c.seed = 4;
  c.jobs = 2;
  c.output_dir = dir.string();
  const RunManifest m = run(c);
  CHECK(m.status == "ok");
  const json doc = read_json(dir / "cycles.json");
  CHECK(doc["cycles"].size() == 4);
  CHECK(doc["shifted"].size() == 2);
  CHECK(doc["trajectories"].size() == 3);
  CHECK(doc["max_surface_residual"].get<double>() <= 1e-6);
  c.output_dir = scratch("flow_single").string();
  c.jobs = 1;
  run(c);
  CHECK(sha256_file(dir / "cycles.json") == sha256_file(fs::path(c.output_dir) / "cycles.json"));
}

TEST_CASE("check-cc scenario") {
  const fs::path dir = scratch("cc");
  ScenarioConfig c;
  c.scenario = ScenarioKind::check_cc;
  c.damping = "chi1";
  c.n1 = c.n2 = 32;
  c.output_dir = dir.string();
  run(c);
  const json doc = read_json(dir / "control.json");
  CHECK(doc["threshold"].get<double>() == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(doc["plus"]["overall"] == false);
  CHECK(doc["plus"]["components"]["x1_plus"] == true);
  CHECK(doc["minus"]["components"]["x1_minus"] == false);
}

TEST_CASE("resolvent scenario reports numerical failure") {
  ScenarioConfig c;
  c.scenario = ScenarioKind::resolvent;
  c.n1 = c.n2 = 32;
  c.epsilons = {0.1, 0.01};
  c.output_dir = scratch("res").string();
  const RunManifest ok = run(c);
  CHECK(ok.status == "ok");
  const json doc = read_json(fs::path(c.output_dir) / "ladder.json");
  CHECK(doc.contains("krylov"));
  c.output_dir = scratch("res_fail").string();
  c.max_iter = 1;
  c.preconditioner = Preconditioner::none;
  const RunManifest bad = run(c);
  CHECK(bad.status == "numerical_failure");
  CHECK_FALSE(bad.message.empty());
  CHECK(fs::exists(fs::path(c.output_dir) / "manifest.json"));
}
