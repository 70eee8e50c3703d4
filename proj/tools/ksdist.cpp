// Command-line front end: moment | build | ks | distance | verify.
// Exit codes: 0 success, 2 usage or config error, 3 numerical failure,
// 4 verification failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ksdist/io.hpp"
#include "ksdist/verify.hpp"

#ifndef KSDIST_VERSION
#define KSDIST_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace ksd;
using io::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitVerify = 4;

struct Global {
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 0;
  bool quiet = false;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// One manifest per output directory; timestamps live only here so every
// other output is reproducible byte for byte.
void write_manifest(const Global& g, const std::string& command, const std::vector<std::string>& configs,
                    const std::string& started) {
  json m{{"command", command},
         {"config_paths", configs},
         {"seed", g.seed},
         {"output_dir", g.out},
         {"tool_version", KSDIST_VERSION},
         {"started_at", started},
         {"finished_at", utc_now()}};
  io::write_json(fs::path(g.out) / "manifest.json", m);
}

void say(const Global& g, const std::string& line) {
  if (!g.quiet) std::cout << line << '\n';
}

// Space file plus sidecar. The sidecar defaults to sidecar.json next to the
// space file when present.
struct LoadedSpace {
  MMSpace space;
  std::vector<MomentMatrix> moments;
};

LoadedSpace load_space(const std::string& path, const std::string& sidecar, std::vector<std::string>& configs) {
  configs.push_back(path);
  LoadedSpace out{io::space_from_json(io::read_json(path)), {}};
  fs::path side = sidecar;
  if (side.empty()) {
    const fs::path guess = fs::path(path).parent_path() / "sidecar.json";
    if (fs::exists(guess)) side = guess;
  }
  if (!side.empty()) {
    configs.push_back(side.string());
    out.space = io::apply_sidecar(out.space, io::read_json(side), &out.moments);
  }
  return out;
}

// Field specs may be given inline as JSON or as a path to a JSON file.
json load_spec(const std::string& arg, std::vector<std::string>& configs) {
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && arg[first] == '{') {
    try {
      return json::parse(arg);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("malformed inline JSON: ") + e.what());
    }
  }
  configs.push_back(arg);
  return io::read_json(arg);
}

std::pair<Index, Index> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw ConfigError("pairs are written i,j");
  try {
    return {std::stoull(s.substr(0, comma)), std::stoull(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("bad pair '" + s + "'");
  }
}

// ---------------------------------------------------------------------------

struct MomentArgs {
  std::string norm;
  std::string quadrature = "default";
  int resolution = 256;
  int refine = 3;
  std::int64_t samples = 1'000'000;
};

int cmd_moment(const Global& g, const MomentArgs& a) {
  const std::string started = utc_now();
  std::vector<std::string> configs{a.norm};
  const Norm norm = io::norm_from_json(io::read_json(a.norm));
  Quadrature q = default_quadrature(norm.dim());
  if (a.quadrature == "grid") {
    q = GridQuadrature{a.resolution, a.refine};
  } else if (a.quadrature == "mc") {
    q = MonteCarloQuadrature{a.samples, g.seed};
  } else if (a.quadrature != "default") {
    throw ConfigError("quadrature must be default, grid or mc");
  }
  const MomentMatrix M = moment_matrix(norm, q);
  io::write_json(fs::path(g.out) / "moment.json", io::moment_to_json(M));
  std::ostringstream s;
  s << "A =\n" << M.A << "\nvol = " << M.vol << ", quadrature error = " << M.quadrature_error;
  say(g, s.str());
  write_manifest(g, "moment", configs, started);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_build(const Global& g, const std::string& config) {
  const std::string started = utc_now();
  const BuilderConfig cfg = io::builder_from_json(io::read_json(config));
  const BuiltSpace built = build(cfg);
  std::vector<MomentMatrix> moments = built.moments;
  if (moments.empty() && cfg.norm) moments.push_back(moment_matrix(*cfg.norm));
  io::write_json(fs::path(g.out) / "space.json", io::space_to_json(built.space));
  io::write_json(fs::path(g.out) / "sidecar.json", io::sidecar_to_json(built, moments));
  std::ostringstream s;
  s << "points " << built.space.size() << ", total mass " << built.space.total_mass() << ", anisotropy "
    << built.anisotropy;
  say(g, s.str());
  write_manifest(g, "build", {config}, started);
  return 0;
}

// ---------------------------------------------------------------------------

struct KsArgs {
  std::string space;
  std::string sidecar;
  std::string field;
  double p = 2.0;
  std::vector<double> ladder;
  std::vector<Index> centers;
  Index random_centers = 10;
};

int cmd_ks(const Global& g, const KsArgs& a) {
  const std::string started = utc_now();
  std::vector<std::string> configs;
  const LoadedSpace ls = load_space(a.space, a.sidecar, configs);
  const MMSpace& S = ls.space;
  const ScalarField f = io::field_from_json(load_spec(a.field, configs), S);
  const ScaleLadder ladder = a.ladder.empty() ? default_ladder(S) : ScaleLadder{a.ladder};
  std::vector<Index> centers = a.centers;
  if (centers.empty()) centers = sample_interior(S, ladder.scales.front(), a.random_centers, g.seed);
  for (Index c : centers) {
    if (c >= S.size()) throw ConfigError("center index out of range");
  }
  std::vector<KSProfile> profiles;
  std::vector<LipEstimate> lips;
  for (Index c : centers) {
    profiles.push_back(ks_profile(S, f, c, a.p, ladder));
    lips.push_back(lip_pointwise(S, f, c, ladder));
  }
  io::write_text(fs::path(g.out) / "ks_profile.csv", io::profile_csv(profiles, lips));
  for (const auto& p : profiles) {
    std::ostringstream s;
    s << "center " << p.center << ": ks " << p.limit_estimate << (p.plateau_flag ? "" : " (no plateau)");
    say(g, s.str());
  }
  write_manifest(g, "ks", configs, started);
  return 0;
}

// ---------------------------------------------------------------------------

struct DistanceArgs {
  std::string space;
  std::string sidecar;
  std::vector<std::string> methods;
  std::string pairs_file;
  std::vector<std::string> pairs;
  Index random_pairs = 0;
  double min_sep = 0.0;
  double r = 0.0;
  double ch_radius = 0.0;
  int iterations = 3000;
  std::string endpoint = "ball_mean";
  bool trace = false;
  bool dense = false;
};

int cmd_distance(const Global& g, const DistanceArgs& a) {
  const std::string started = utc_now();
  std::vector<std::string> configs;
  const LoadedSpace ls = load_space(a.space, a.sidecar, configs);
  const MMSpace& S = ls.space;
  if (a.methods.empty() || a.methods.size() > 2) throw ConfigError("give one or two --method values");
  static const std::set<std::string> known{"d", "d_ch", "d_ks", "d_riemannized"};
  for (const auto& m : a.methods) {
    if (!known.count(m)) throw ConfigError("unknown method '" + m + "'");
  }

  std::vector<std::pair<Index, Index>> pairs;
  if (!a.pairs_file.empty()) {
    configs.push_back(a.pairs_file);
    for (const auto& p : io::read_json(a.pairs_file)) {
      if (!p.is_array() || p.size() != 2) throw ConfigError("pairs file holds [i, j] entries");
      pairs.emplace_back(p[0].get<Index>(), p[1].get<Index>());
    }
  }
  for (const auto& p : a.pairs) pairs.push_back(parse_pair(p));
  if (a.random_pairs > 0) {
    const auto extra = sample_pairs(S, a.random_pairs, a.min_sep, g.seed);
    pairs.insert(pairs.end(), extra.begin(), extra.end());
  }
  if (pairs.empty()) throw ConfigError("no pairs: use --pair, --pairs or --random-pairs");
  for (const auto& [x, y] : pairs) {
    if (x >= S.size() || y >= S.size()) throw ConfigError("pair index out of range");
  }

  std::optional<MMSpace> riemannized;
  std::optional<BallTable> balls;
  KsSolverOptions opt;
  opt.max_iterations = a.iterations;
  opt.seed = g.seed;
  opt.trace = a.trace;
  if (a.endpoint == "point") {
    opt.endpoint = KsEndpoint::point;
  } else if (a.endpoint != "ball_mean") {
    throw ConfigError("endpoint must be point or ball_mean");
  }
  auto dist = [&](const std::string& m, Index x, Index y) -> double {
    if (m == "d") return S.distance(x, y);
    if (m == "d_ch") return d_ch(S, x, y, a.ch_radius);
    if (m == "d_riemannized") {
      if (ls.moments.empty()) throw ConfigError("d_riemannized needs a moment or moment_field in the sidecar");
      if (!riemannized) riemannized = riemannized_space(S, ls.moments);
      return riemannized->distance(x, y);
    }
    if (!balls) {
      opt.r = a.r > 0.0 ? a.r : default_constraint_scale(S);
      balls.emplace(S, opt.r);
      if (ls.moments.size() == 1) opt.warm_moment = ls.moments.front().A;
    }
    const KsSolveResult res = d_ks_solve(S, *balls, x, y, opt);
    if (a.trace) {
      io::write_text(fs::path(g.out) / "traces" / ("trace_" + std::to_string(x) + "_" + std::to_string(y) + ".csv"),
                     io::trace_csv(res.trace));
    }
    return res.value;
  };

  std::vector<std::vector<double>> values(a.methods.size());
  std::ostringstream csv;
  csv << "x,y";
  for (const auto& m : a.methods) csv << ',' << m;
  csv << '\n';
  for (const auto& [x, y] : pairs) {
    csv << x << ',' << y;
    for (std::size_t k = 0; k < a.methods.size(); ++k) {
      values[k].push_back(dist(a.methods[k], x, y));
      csv << ',' << io::fmt17(values[k].back());
    }
    csv << '\n';
  }
  io::write_text(fs::path(g.out) / "distances.csv", csv.str());

  if (a.methods.size() == 2) {
    // Ratio method[1] / method[0] over the distinct pairs.
    std::vector<std::pair<Index, Index>> distinct;
    std::map<std::pair<Index, Index>, std::pair<double, double>> table;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (pairs[k].first == pairs[k].second) continue;
      if (table.emplace(pairs[k], std::make_pair(values[0][k], values[1][k])).second) distinct.push_back(pairs[k]);
    }
    if (!distinct.empty()) {
      const auto rep = equivalence_report([&](Index x, Index y) { return table.at({x, y}).first; },
                                          [&](Index x, Index y) { return table.at({x, y}).second; }, distinct);
      io::write_json(fs::path(g.out) / "equivalence.json", io::equivalence_to_json(rep, a.methods[0], a.methods[1]));
      std::ostringstream s;
      s << a.methods[1] << " / " << a.methods[0] << ": c1 " << rep.c1 << ", c2 " << rep.c2 << " over " << rep.pairs
        << " pairs";
      say(g, s.str());
    }
  }

  if (a.dense) {
    // Distances among every point that appears in a pair, in the space file format.
    std::vector<Index> pts;
    for (const auto& [x, y] : pairs) {
      pts.push_back(x);
      pts.push_back(y);
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    std::vector<double> measure;
    Mat coords(S.has_coordinates() ? static_cast<Eigen::Index>(pts.size()) : 0,
               S.has_coordinates() ? S.coordinates().cols() : 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      measure.push_back(S.measure(pts[i]));
      if (S.has_coordinates()) coords.row(static_cast<Eigen::Index>(i)) = S.point(pts[i]).transpose();
    }
    for (const auto& m : a.methods) {
      Mat D = Mat::Zero(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(pts.size()));
      for (std::size_t i = 0; i < pts.size(); ++i) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
          D(i, j) = D(j, i) = dist(m, pts[i], pts[j]);
        }
      }
      io::write_json(fs::path(g.out) / ("distances_" + m + ".json"), io::dense_space_json(D, measure, coords));
    }
  }
  write_manifest(g, "distance", configs, started);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_verify(const Global& g, const std::string& suite_name, const std::vector<int>& only) {
  const std::string started = utc_now();
  const Suite suite = suite_from_string(suite_name);
  for (int id : only) {
    if (id < 1 || id > kCriteria) throw ConfigError("criterion ids run from 1 to 14");
  }
  const VerifyReport rep = run_verify(suite, g.seed, only, [&](const CriterionResult& c) {
    std::ostringstream s;
    s << (c.passed ? "PASS" : "FAIL") << ' ' << std::setw(2) << c.id << ' ' << c.name << " (" << std::fixed
      << std::setprecision(1) << c.seconds << " s";
    if (c.budget_seconds > 0.0) s << ", budget " << c.budget_seconds << " s";
    s << ")";
    say(g, s.str());
    if (!c.passed) say(g, "     " + c.detail);
  });
  // No timings in the report, so equal seeds give equal files.
  json criteria = json::array();
  for (const auto& c : rep.criteria) {
    json metrics = json::object();
    for (const auto& [k, v] : c.metrics) {
      if (k.ends_with("seconds")) continue;
      metrics[k] = std::isfinite(v) ? json(v) : json(v > 0 ? "inf" : "nan");
    }
    json entry{{"id", c.id}, {"name", c.name}, {"passed", c.passed}, {"budget_seconds", c.budget_seconds},
               {"metrics", metrics}};
    if (c.detail.starts_with("error:")) entry["error"] = c.detail;
    criteria.push_back(entry);
  }
  io::write_json(fs::path(g.out) / "verify.json",
                 json{{"suite", to_string(suite)}, {"seed", g.seed}, {"all_passed", rep.all_passed()}, {"criteria", criteria}});
  std::ostringstream s;
  s << (rep.all_passed() ? "all criteria passed" : "verification failures present") << " in " << std::fixed
    << std::setprecision(1) << rep.seconds << " s";
  say(g, s.str());
  write_manifest(g, "verify", {}, started);
  return rep.all_passed() ? 0 : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("ksdist"));

  CLI::App app{"Korevaar-Schoen energies and intrinsic distances on metric measure spaces"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Cap on worker threads (0: runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--quiet", g.quiet, "Only warnings and errors");
  app.set_version_flag("--version", KSDIST_VERSION);

  MomentArgs ma;
  auto* moment = app.add_subcommand("moment", "Moment matrix of a norm's unit ball");
  moment->add_option("--norm", ma.norm, "Norm config JSON")->required();
  moment->add_option("--quadrature", ma.quadrature, "default | grid | mc");
  moment->add_option("--resolution", ma.resolution, "Grid cells per axis");
  moment->add_option("--refine", ma.refine, "Boundary cell refinement levels");
  moment->add_option("--samples", ma.samples, "Monte Carlo samples");

  std::string build_config;
  auto* buildc = app.add_subcommand("build", "Build a grid, Finsler grid or cone+ray space");
  buildc->add_option("--config", build_config, "Builder config JSON")->required();

  KsArgs ka;
  auto* ks = app.add_subcommand("ks", "KS density profiles over a scale ladder");
  ks->add_option("--space", ka.space, "Space file")->required();
  ks->add_option("--sidecar", ka.sidecar, "Sidecar file (default: sidecar.json next to the space)");
  ks->add_option("--field", ka.field, "Field spec: JSON file or inline JSON")->required();
  ks->add_option("--p", ka.p, "Exponent p > 1");
  ks->add_option("--ladder", ka.ladder, "Decreasing scales (default: diameter/4 down to 3 x pitch)")->delimiter(',');
  ks->add_option("--center", ka.centers, "Centre indices")->delimiter(',');
  ks->add_option("--random-centers", ka.random_centers, "Seeded interior centres when none are given");

  DistanceArgs da;
  auto* distance = app.add_subcommand("distance", "Distances between point pairs");
  distance->add_option("--space", da.space, "Space file")->required();
  distance->add_option("--sidecar", da.sidecar, "Sidecar file (default: sidecar.json next to the space)");
  distance->add_option("--method", da.methods, "d | d_ch | d_ks | d_riemannized (twice for a comparison)")->required();
  distance->add_option("--pairs", da.pairs_file, "JSON file of [i, j] pairs");
  distance->add_option("--pair", da.pairs, "Pair i,j (repeatable)");
  distance->add_option("--random-pairs", da.random_pairs, "Seeded random pairs");
  distance->add_option("--min-sep", da.min_sep, "Minimum separation of random pairs");
  distance->add_option("--r", da.r, "d_ks constraint scale (default: smallest plateau scale)");
  distance->add_option("--ch-radius", da.ch_radius, "d_ch constraint radius (0: graph edges)");
  distance->add_option("--iterations", da.iterations, "d_ks iteration budget per start");
  distance->add_option("--endpoint", da.endpoint, "d_ks objective: ball_mean | point");
  distance->add_flag("--trace", da.trace, "Write d_ks solve traces");
  distance->add_flag("--dense", da.dense, "Write dense distance matrices over the paired points");

  std::string suite = "quick";
  std::vector<int> only;
  auto* verify = app.add_subcommand("verify", "Run the acceptance criteria");
  verify->add_option("--suite", suite, "quick | full");
  verify->add_option("--only", only, "Criterion ids")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (g.quiet) spdlog::set_level(spdlog::level::warn);
  try {
    if (g.threads > 0) set_threads(g.threads);
    fs::create_directories(g.out);
    if (*moment) return cmd_moment(g, ma);
    if (*buildc) return cmd_build(g, build_config);
    if (*ks) return cmd_ks(g, ka);
    if (*distance) return cmd_distance(g, da);
    return cmd_verify(g, suite, only);
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const json::exception& e) {
    spdlog::error("config: {}", e.what());
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  }
}
