#pragma once

// Run configuration: a flat, sectioned key-value text format.
//
//   # comment
//   [mpc]
//   N_p = 10
//   q = 5000            # scalar or one value per output
//   u_min = -1, -1, -1, -1
//
// Lists are separated by commas and/or whitespace, matrix rows by ';'.
// Sections: plant, mpc, solver, fxp, run, sweep. Unknown sections and keys
// are errors, reported with their line number.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spmpc/errors.hpp"
#include "spmpc/io.hpp"
#include "spmpc/simloop.hpp"

namespace spmpc {

enum class PlantModel { Satellite, Custom };

struct PlantSpec {
  PlantModel model = PlantModel::Satellite;
  SatelliteParameters satellite;  ///< used when model = satellite; its h is ignored
  MatrixXd A, B, C, D;            ///< used when model = custom
  double h = 0.1;

  ContinuousPlant build() const {
    if (model == PlantModel::Satellite) {
      SatelliteParameters prm = satellite;
      prm.h = h;
      return default_satellite_plant(prm);
    }
    return ContinuousPlant{A, B, C, D, h};
  }
};

struct MpcSpec {
  int N_p = 10;
  int N_c = 10;
  VectorXd q;  ///< per-output weight, repeated over the horizon
  double sigma = 1.5;
  SparsityNorm norm = SparsityNorm::L1;
  VectorXd u_min, u_max, y_min, y_max, r;
};

struct FxpSpec {
  bool enabled = false;
  int word_width = 28;
  int frac_width = 13;
  Rounding rounding = Rounding::NearestTiesAway;
  OverflowPolicy overflow = OverflowPolicy::Saturate;

  FxpFormat format() const { return make_format(word_width, frac_width, rounding, overflow); }
  int integer_bits() const { return word_width - frac_width; }
};

struct RunSpec {
  int steps = 400;
  std::uint64_t seed = 0;
  VectorXd x0;
  std::string out = "trace.csv";
  int verbosity = 1;
  int jobs = 1;
};

struct SweepSpec {
  std::vector<std::pair<int, int>> formats;  ///< (W, F); empty means the [fxp] setting
  std::vector<double> sigmas;                ///< empty means mpc.sigma
};

struct RunConfig {
  PlantSpec plant;
  MpcSpec mpc;
  SolverConfig solver;  ///< its fxp member is ignored; [fxp] decides
  FxpSpec fxp;
  RunSpec run;
  SweepSpec sweep;

  /// Scenario with an explicit arithmetic and sparsity weight.
  Scenario scenario(const std::optional<FxpFormat>& fmt, double sigma) const {
    Scenario s;
    s.plant = plant.build();
    s.mpc.N_p = mpc.N_p;
    s.mpc.N_c = mpc.N_c;
    s.mpc.Q = block_diagonal(mpc.q.asDiagonal().toDenseMatrix(), mpc.N_p);
    s.mpc.sigma = sigma;
    s.mpc.norm = mpc.norm;
    s.mpc.u_min = mpc.u_min;
    s.mpc.u_max = mpc.u_max;
    s.mpc.y_min = mpc.y_min;
    s.mpc.y_max = mpc.y_max;
    s.mpc.r = mpc.r;
    s.solver = solver;
    s.solver.fxp = fmt;
    s.x0 = run.x0;
    s.steps = run.steps;
    s.seed = run.seed;
    return s;
  }

  /// Scenario as configured by the [fxp] and [mpc] sections.
  Scenario scenario() const {
    return scenario(fxp.enabled ? std::optional<FxpFormat>(fxp.format()) : std::nullopt, mpc.sigma);
  }
};

namespace config_detail {

inline bool same(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

inline bool same_solver(const SolverConfig& a, const SolverConfig& b) {
  return a.method == b.method && a.lambda_u == b.lambda_u && a.lambda_z == b.lambda_z &&
         a.constrained == b.constrained && a.max_iters == b.max_iters && a.tol_primal == b.tol_primal &&
         a.scope == b.scope;
}

}  // namespace config_detail

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  using config_detail::same;
  const auto& pa = a.plant;
  const auto& pb = b.plant;
  const bool plant_eq =
      pa.model == pb.model && pa.h == pb.h &&
      (pa.model == PlantModel::Satellite
           ? (pa.satellite.inertia == pb.satellite.inertia &&
              pa.satellite.thruster_gain == pb.satellite.thruster_gain &&
              pa.satellite.wheel_inertia == pb.satellite.wheel_inertia &&
              pa.satellite.wheel_gain == pb.satellite.wheel_gain &&
              pa.satellite.wheel_time_constant == pb.satellite.wheel_time_constant)
           : (same(pa.A, pb.A) && same(pa.B, pb.B) && same(pa.C, pb.C) && same(pa.D, pb.D)));
  const auto& ma = a.mpc;
  const auto& mb = b.mpc;
  const bool mpc_eq = ma.N_p == mb.N_p && ma.N_c == mb.N_c && same(ma.q, mb.q) && ma.sigma == mb.sigma &&
                      ma.norm == mb.norm && same(ma.u_min, mb.u_min) && same(ma.u_max, mb.u_max) &&
                      same(ma.y_min, mb.y_min) && same(ma.y_max, mb.y_max) && same(ma.r, mb.r);
  const bool fxp_eq = a.fxp.enabled == b.fxp.enabled && a.fxp.word_width == b.fxp.word_width &&
                      a.fxp.frac_width == b.fxp.frac_width && a.fxp.rounding == b.fxp.rounding &&
                      a.fxp.overflow == b.fxp.overflow;
  const bool run_eq = a.run.steps == b.run.steps && a.run.seed == b.run.seed && same(a.run.x0, b.run.x0) &&
                      a.run.out == b.run.out && a.run.verbosity == b.run.verbosity && a.run.jobs == b.run.jobs;
  const bool sweep_eq = a.sweep.formats == b.sweep.formats && a.sweep.sigmas == b.sweep.sigmas;
  return plant_eq && mpc_eq && config_detail::same_solver(a.solver, b.solver) && fxp_eq && run_eq && sweep_eq;
}

namespace config_detail {

struct Entry {
  std::string value;
  int line = 0;
};

using SectionMap = std::map<std::string, std::map<std::string, Entry>>;

inline const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"plant",
       {"model", "h", "inertia", "thruster_gain", "wheel_inertia", "wheel_gain", "wheel_time_constant", "A", "B",
        "C", "D"}},
      {"mpc", {"N_p", "N_c", "q", "sigma", "norm", "u_min", "u_max", "y_min", "y_max", "r"}},
      {"solver", {"method", "lambda_u", "lambda_z", "max_iters", "tol_primal", "scope", "constrained"}},
      {"fxp", {"enabled", "word_width", "frac_width", "rounding", "overflow"}},
      {"run", {"steps", "seed", "x0", "out", "verbosity", "jobs"}},
      {"sweep", {"formats", "widths", "sigmas"}},
  };
  return keys;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline SectionMap parse_sections(std::string_view text) {
  SectionMap sections;
  std::string current;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header '" + std::string(line) + "'", line_no);
      current = std::string(trim(line.substr(1, line.size() - 2)));
      if (!schema().count(current)) throw ConfigError("unknown section [" + current + "]", line_no);
      sections[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (current.empty()) throw ConfigError("key '" + key + "' appears before any [section]", line_no);
    if (key.empty()) throw ConfigError("missing key before '='", line_no);
    if (!schema().at(current).count(key)) {
      throw ConfigError("unknown key '" + key + "' in [" + current + "]", line_no);
    }
    if (value.empty()) throw ConfigError("key '" + key + "' has no value", line_no);
    auto& sec = sections[current];
    if (const auto it = sec.find(key); it != sec.end()) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(it->second.line) + ")",
                        line_no);
    }
    sec[key] = Entry{value, line_no};
  }
  return sections;
}

/// Typed access to one section, remembering where each key came from.
class Section {
 public:
  Section(const SectionMap& all, const std::string& name) : name_(name) {
    if (const auto it = all.find(name); it != all.end()) entries_ = &it->second;
  }

  bool has(const std::string& key) const { return entries_ && entries_->count(key); }
  int line(const std::string& key) const { return has(key) ? entries_->at(key).line : 0; }
  const std::string& raw(const std::string& key) const { return entries_->at(key).value; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("[" + name_ + "] " + key + ": " + what, line(key));
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    double v = 0.0;
    if (!parse_number(raw(key), v)) fail(key, "expected a number, got '" + raw(key) + "'");
    return v;
  }

  long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    long long v = 0;
    if (!parse_integer(raw(key), v)) fail(key, "expected an integer, got '" + raw(key) + "'");
    return v;
  }

  int bounded_int(const std::string& key, int fallback, long long lo, long long hi) const {
    const long long v = integer(key, fallback);
    if (v < lo || v > hi) {
      fail(key, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " + std::to_string(v));
    }
    return static_cast<int>(v);
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = raw(key);
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    fail(key, "expected true or false, got '" + v + "'");
  }

  template <class E>
  E choice(const std::string& key, E fallback, const std::vector<std::pair<std::string, E>>& options) const {
    if (!has(key)) return fallback;
    std::string names;
    for (const auto& [name, value] : options) {
      if (raw(key) == name) return value;
      names += (names.empty() ? "" : ", ") + name;
    }
    fail(key, "expected one of {" + names + "}, got '" + raw(key) + "'");
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& tok : tokens(raw(key))) {
      double v = 0.0;
      if (!parse_number(tok, v)) fail(key, "expected a number, got '" + tok + "'");
      out.push_back(v);
    }
    return out;
  }

  /// A list of `length` numbers; a single value is broadcast.
  VectorXd vector(const std::string& key, Eigen::Index length, const VectorXd& fallback) const {
    if (!has(key)) return fallback;
    const auto vals = numbers(key);
    if (vals.size() == 1) return VectorXd::Constant(length, vals.front());
    if (static_cast<Eigen::Index>(vals.size()) != length) {
      fail(key, "expected 1 or " + std::to_string(length) + " values, got " + std::to_string(vals.size()));
    }
    return Eigen::Map<const VectorXd>(vals.data(), length);
  }

  MatrixXd matrix(const std::string& key) const {
    std::vector<std::vector<double>> rows;
    std::string_view rest = raw(key);
    while (true) {
      const auto semi = rest.find(';');
      const std::string_view row = trim(rest.substr(0, semi));
      if (!row.empty()) {
        std::vector<double> vals;
        for (const auto& tok : tokens(row)) {
          double v = 0.0;
          if (!parse_number(tok, v)) fail(key, "expected a number, got '" + tok + "'");
          vals.push_back(v);
        }
        rows.push_back(std::move(vals));
      }
      if (semi == std::string_view::npos) break;
      rest = rest.substr(semi + 1);
    }
    if (rows.empty()) fail(key, "empty matrix");
    MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.front().size()) fail(key, "rows have different lengths");
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    return m;
  }

 private:
  std::string name_;
  const std::map<std::string, Entry>* entries_ = nullptr;
};

inline std::string horizon_message(int N_c, int N_p) {
  return "horizons must satisfy N_c ≤ N_p (got N_c = " + std::to_string(N_c) + ", N_p = " + std::to_string(N_p) +
         ")";
}

/// Initial attitude offset of the shipped reorientation manoeuvre [rad].
inline VectorXd default_satellite_x0() {
  VectorXd x0 = VectorXd::Zero(7);
  x0.head(3) << 0.2, -0.15, 0.1;
  return x0;
}

}  // namespace config_detail

/// Checks every cross-field invariant. Errors carry no line number.
inline void validate_config(const RunConfig& cfg) {
  const ContinuousPlant plant = cfg.plant.build();
  try {
    plant.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("[plant] ") + e.what());
  }
  const auto n = plant.states(), p = plant.inputs(), m = plant.outputs();
  const auto& mpc = cfg.mpc;
  if (mpc.N_c > mpc.N_p) throw ConfigError(config_detail::horizon_message(mpc.N_c, mpc.N_p));
  if (mpc.N_c < 1) throw ConfigError("[mpc] N_c must be at least 1");
  if (mpc.q.size() != m || !(mpc.q.array() > 0.0).all()) {
    throw ConfigError("[mpc] q needs " + std::to_string(m) + " positive finite values");
  }
  if (!mpc.q.allFinite()) throw ConfigError("[mpc] q must be finite");
  if (!(mpc.sigma >= 0.0) || !std::isfinite(mpc.sigma)) throw ConfigError("[mpc] sigma must be finite and >= 0");
  if (mpc.u_min.size() != p || mpc.u_max.size() != p) throw ConfigError("[mpc] u bounds need p values");
  if (!mpc.u_min.allFinite() || !mpc.u_max.allFinite()) throw ConfigError("[mpc] u bounds must be finite");
  if (mpc.y_min.size() != m || mpc.y_max.size() != m || mpc.r.size() != m) {
    throw ConfigError("[mpc] y bounds and r need m values");
  }
  if (!mpc.r.allFinite()) throw ConfigError("[mpc] r must be finite");
  if (cfg.run.x0.size() != n) throw ConfigError("[run] x0 needs " + std::to_string(n) + " values");
  if (!cfg.run.x0.allFinite()) throw ConfigError("[run] x0 must be finite");
  if (cfg.run.jobs < 1) throw ConfigError("[run] jobs must be at least 1");
  if (cfg.run.out.empty()) throw ConfigError("[run] out must not be empty");
  try {
    if (cfg.fxp.enabled) (void)cfg.fxp.format();
    for (const auto& [w, f] : cfg.sweep.formats) (void)make_format(w, f);
  } catch (const Error& e) {
    throw ConfigError(std::string("[fxp/sweep] ") + e.what());
  }
  for (double s : cfg.sweep.sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("[sweep] sigmas must be finite and >= 0");
  }
  try {
    Scenario scn = cfg.scenario();
    scn.validate();
    scn.mpc.plant = zoh_discretize(scn.plant);
    scn.mpc.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

/// Parses configuration text. Absent keys take the documented defaults,
/// which together form the shipped reorientation scenario.
inline RunConfig parse_config(std::string_view text) {
  using config_detail::Section;
  const auto sections = config_detail::parse_sections(text);
  RunConfig cfg;

  const Section pl(sections, "plant");
  cfg.plant.model = pl.choice<PlantModel>("model", PlantModel::Satellite,
                                          {{"satellite", PlantModel::Satellite}, {"custom", PlantModel::Custom}});
  cfg.plant.h = pl.number("h", 0.1);
  if (!(cfg.plant.h > 0.0) || !std::isfinite(cfg.plant.h)) pl.fail("h", "must be positive");
  const char* sat_keys[] = {"inertia", "thruster_gain", "wheel_inertia", "wheel_gain", "wheel_time_constant"};
  const char* mat_keys[] = {"A", "B", "C", "D"};
  if (cfg.plant.model == PlantModel::Satellite) {
    for (const char* k : mat_keys) {
      if (pl.has(k)) pl.fail(k, "only allowed with model = custom");
    }
    auto& sat = cfg.plant.satellite;
    if (pl.has("inertia")) {
      const auto j = pl.numbers("inertia");
      if (j.size() != 3) pl.fail("inertia", "expected 3 values");
      for (std::size_t i = 0; i < 3; ++i) sat.inertia[i] = j[i];
    }
    sat.thruster_gain = pl.number("thruster_gain", sat.thruster_gain);
    sat.wheel_inertia = pl.number("wheel_inertia", sat.wheel_inertia);
    sat.wheel_gain = pl.number("wheel_gain", sat.wheel_gain);
    sat.wheel_time_constant = pl.number("wheel_time_constant", sat.wheel_time_constant);
    for (double j : sat.inertia) {
      if (!(j > 0.0) || !std::isfinite(j)) pl.fail("inertia", "values must be positive");
    }
    if (!(sat.wheel_inertia > 0.0)) pl.fail("wheel_inertia", "must be positive");
    if (!(sat.wheel_time_constant > 0.0)) pl.fail("wheel_time_constant", "must be positive");
    if (!std::isfinite(sat.thruster_gain)) pl.fail("thruster_gain", "must be finite");
    if (!std::isfinite(sat.wheel_gain)) pl.fail("wheel_gain", "must be finite");
  } else {
    for (const char* k : sat_keys) {
      if (pl.has(k)) pl.fail(k, "only allowed with model = satellite");
    }
    if (!pl.has("A") || !pl.has("B")) throw ConfigError("[plant] model = custom requires A and B", pl.line("model"));
    cfg.plant.A = pl.matrix("A");
    cfg.plant.B = pl.matrix("B");
    const auto n = cfg.plant.A.rows();
    cfg.plant.C = pl.has("C") ? pl.matrix("C") : MatrixXd(MatrixXd::Identity(n, n));
    cfg.plant.D = pl.has("D") ? pl.matrix("D") : MatrixXd(MatrixXd::Zero(cfg.plant.C.rows(), cfg.plant.B.cols()));
    try {
      cfg.plant.build().validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("[plant] ") + e.what(), pl.line("A"));
    }
  }
  const ContinuousPlant plant = cfg.plant.build();
  const auto n = plant.states(), p = plant.inputs(), m = plant.outputs();

  const Section mp(sections, "mpc");
  cfg.mpc.N_p = mp.bounded_int("N_p", 10, 1, 1000);
  cfg.mpc.N_c = mp.bounded_int("N_c", cfg.mpc.N_p < 10 ? cfg.mpc.N_p : 10, 1, 1000);
  if (cfg.mpc.N_c > cfg.mpc.N_p) {
    throw ConfigError(config_detail::horizon_message(cfg.mpc.N_c, cfg.mpc.N_p),
                      mp.has("N_c") ? mp.line("N_c") : mp.line("N_p"));
  }
  cfg.mpc.q = mp.vector("q", m, VectorXd::Constant(m, 5000.0));
  if (!(cfg.mpc.q.array() > 0.0).all() || !cfg.mpc.q.allFinite()) mp.fail("q", "weights must be positive and finite");
  cfg.mpc.sigma = mp.number("sigma", 1.5);
  if (!(cfg.mpc.sigma >= 0.0) || !std::isfinite(cfg.mpc.sigma)) mp.fail("sigma", "must be finite and >= 0");
  cfg.mpc.norm = mp.choice<SparsityNorm>("norm", SparsityNorm::L1, {{"l1", SparsityNorm::L1}, {"l0", SparsityNorm::L0}});
  cfg.mpc.u_min = mp.vector("u_min", p, VectorXd::Constant(p, -1.0));
  cfg.mpc.u_max = mp.vector("u_max", p, VectorXd::Constant(p, 1.0));
  if (!cfg.mpc.u_min.allFinite()) mp.fail("u_min", "must be finite");
  if (!cfg.mpc.u_max.allFinite()) mp.fail("u_max", "must be finite");
  if (!(cfg.mpc.u_min.array() < cfg.mpc.u_max.array()).all()) mp.fail("u_max", "must exceed u_min");
  const double inf = std::numeric_limits<double>::infinity();
  cfg.mpc.y_min = mp.vector("y_min", m, VectorXd::Constant(m, -inf));
  cfg.mpc.y_max = mp.vector("y_max", m, VectorXd::Constant(m, inf));
  if (!(cfg.mpc.y_min.array() < cfg.mpc.y_max.array()).all()) mp.fail("y_max", "must exceed y_min");
  cfg.mpc.r = mp.vector("r", m, VectorXd::Zero(m));
  if (!cfg.mpc.r.allFinite()) mp.fail("r", "must be finite");

  const Section so(sections, "solver");
  auto& sc = cfg.solver;
  sc.method = so.choice<SolverMethod>("method", SolverMethod::AxPgd,
                                      {{"axpgd", SolverMethod::AxPgd}, {"wlm_admm", SolverMethod::WlmAdmm}});
  sc.lambda_u = so.number("lambda_u", 5000.0);
  sc.lambda_z = so.number("lambda_z", 5000.0);
  if (!(sc.lambda_u > 0.0) || !std::isfinite(sc.lambda_u)) so.fail("lambda_u", "must be positive");
  if (!(sc.lambda_z > 0.0) || !std::isfinite(sc.lambda_z)) so.fail("lambda_z", "must be positive");
  sc.max_iters = so.bounded_int("max_iters", 30, 1, 1000000);
  if (so.has("tol_primal")) {
    sc.tol_primal = so.number("tol_primal", 0.0);
    if (!(*sc.tol_primal >= 0.0)) so.fail("tol_primal", "must be >= 0");
  }
  sc.scope = so.choice<QuantizeScope>("scope", QuantizeScope::GradientOnly,
                                      {{"gradient", QuantizeScope::GradientOnly}, {"all", QuantizeScope::AllIterates}});
  sc.constrained = so.boolean("constrained", true);

  const Section fx(sections, "fxp");
  cfg.fxp.enabled = fx.boolean("enabled", false);
  cfg.fxp.word_width = fx.bounded_int("word_width", 28, 2, 64);
  cfg.fxp.frac_width = fx.bounded_int("frac_width", cfg.fxp.word_width - 15 >= 0 ? cfg.fxp.word_width - 15 : 0, 0,
                                      cfg.fxp.word_width - 1);
  cfg.fxp.rounding = fx.choice<Rounding>("rounding", Rounding::NearestTiesAway,
                                         {{"nearest", Rounding::NearestTiesAway}, {"floor", Rounding::Floor}});
  cfg.fxp.overflow = fx.choice<OverflowPolicy>("overflow", OverflowPolicy::Saturate,
                                               {{"saturate", OverflowPolicy::Saturate}, {"error", OverflowPolicy::Error}});

  const Section rn(sections, "run");
  cfg.run.steps = rn.bounded_int("steps", 400, 1, 100000000);
  if (rn.has("seed")) {
    std::uint64_t seed = 0;
    const auto& s = rn.raw("seed");
    const auto res = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) rn.fail("seed", "expected an unsigned integer");
    cfg.run.seed = seed;
  }
  const VectorXd x0_default =
      cfg.plant.model == PlantModel::Satellite ? config_detail::default_satellite_x0() : VectorXd(VectorXd::Zero(n));
  cfg.run.x0 = rn.vector("x0", n, x0_default);
  if (!cfg.run.x0.allFinite()) rn.fail("x0", "must be finite");
  if (rn.has("out")) cfg.run.out = rn.raw("out");
  cfg.run.verbosity = rn.bounded_int("verbosity", 1, 0, 2);
  cfg.run.jobs = rn.bounded_int("jobs", 1, 1, 1024);

  const Section sw(sections, "sweep");
  if (sw.has("formats") && sw.has("widths")) sw.fail("widths", "give either formats or widths, not both");
  if (sw.has("formats")) {
    for (const auto& tok : config_detail::tokens(sw.raw("formats"))) {
      const auto colon = tok.find(':');
      long long w = 0, f = 0;
      if (colon == std::string::npos || !parse_integer(std::string_view(tok).substr(0, colon), w) ||
          !parse_integer(std::string_view(tok).substr(colon + 1), f)) {
        sw.fail("formats", "expected W:F pairs, got '" + tok + "'");
      }
      if (w < 2 || w > 64 || f < 0 || f > w - 1) sw.fail("formats", "invalid format " + tok);
      cfg.sweep.formats.emplace_back(static_cast<int>(w), static_cast<int>(f));
    }
  } else if (sw.has("widths")) {
    const int ibits = cfg.fxp.integer_bits();
    for (const auto& tok : config_detail::tokens(sw.raw("widths"))) {
      long long w = 0;
      if (!parse_integer(tok, w)) sw.fail("widths", "expected integers, got '" + tok + "'");
      if (w < 2 || w > 64 || w - ibits < 0 || ibits < 1) {
        sw.fail("widths", "width " + tok + " cannot keep the [fxp] integer bits (" + std::to_string(ibits) + ")");
      }
      cfg.sweep.formats.emplace_back(static_cast<int>(w), static_cast<int>(w - ibits));
    }
  } else {
    cfg.sweep.formats = {{28, 13}, {34, 19}, {64, 49}};
  }
  if (sw.has("sigmas")) {
    for (double s : sw.numbers("sigmas")) {
      if (!(s >= 0.0) || !std::isfinite(s)) sw.fail("sigmas", "values must be finite and >= 0");
      cfg.sweep.sigmas.push_back(s);
    }
  }

  validate_config(cfg);
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file " + path.string() + " does not exist");
  return parse_config(read_file(path));
}

/// The shipped scenario, i.e. the configuration of an empty file.
inline RunConfig default_run_config() { return parse_config(""); }

/// (W, F) keeping the default integer bits, as used for the width sweeps.
inline FxpFormat matched_format(int word_width) {
  return make_format(word_width, word_width - default_run_config().fxp.integer_bits());
}

namespace config_detail {

inline std::string join(const VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_number(v(i));
  return out;
}

inline std::string join(const MatrixXd& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += "; ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += (j ? " " : "") + format_number(m(i, j));
  }
  return out;
}

}  // namespace config_detail

/// Writes every key explicitly; parse_config(serialize(c)) == c.
inline std::string serialize(const RunConfig& cfg) {
  using config_detail::join;
  std::ostringstream os;
  os << "[plant]\n";
  if (cfg.plant.model == PlantModel::Satellite) {
    const auto& s = cfg.plant.satellite;
    os << "model = satellite\n"
       << "h = " << format_number(cfg.plant.h) << "\n"
       << "inertia = " << format_number(s.inertia[0]) << ", " << format_number(s.inertia[1]) << ", "
       << format_number(s.inertia[2]) << "\n"
       << "thruster_gain = " << format_number(s.thruster_gain) << "\n"
       << "wheel_inertia = " << format_number(s.wheel_inertia) << "\n"
       << "wheel_gain = " << format_number(s.wheel_gain) << "\n"
       << "wheel_time_constant = " << format_number(s.wheel_time_constant) << "\n";
  } else {
    os << "model = custom\n"
       << "h = " << format_number(cfg.plant.h) << "\n"
       << "A = " << join(cfg.plant.A) << "\n"
       << "B = " << join(cfg.plant.B) << "\n"
       << "C = " << join(cfg.plant.C) << "\n"
       << "D = " << join(cfg.plant.D) << "\n";
  }
  const auto& m = cfg.mpc;
  os << "\n[mpc]\n"
     << "N_p = " << m.N_p << "\n"
     << "N_c = " << m.N_c << "\n"
     << "q = " << join(m.q) << "\n"
     << "sigma = " << format_number(m.sigma) << "\n"
     << "norm = " << (m.norm == SparsityNorm::L1 ? "l1" : "l0") << "\n"
     << "u_min = " << join(m.u_min) << "\n"
     << "u_max = " << join(m.u_max) << "\n"
     << "y_min = " << join(m.y_min) << "\n"
     << "y_max = " << join(m.y_max) << "\n"
     << "r = " << join(m.r) << "\n";
  const auto& s = cfg.solver;
  os << "\n[solver]\n"
     << "method = " << (s.method == SolverMethod::AxPgd ? "axpgd" : "wlm_admm") << "\n"
     << "lambda_u = " << format_number(s.lambda_u) << "\n"
     << "lambda_z = " << format_number(s.lambda_z) << "\n"
     << "max_iters = " << s.max_iters << "\n";
  if (s.tol_primal) os << "tol_primal = " << format_number(*s.tol_primal) << "\n";
  os << "scope = " << (s.scope == QuantizeScope::GradientOnly ? "gradient" : "all") << "\n"
     << "constrained = " << (s.constrained ? "true" : "false") << "\n";
  const auto& f = cfg.fxp;
  os << "\n[fxp]\n"
     << "enabled = " << (f.enabled ? "true" : "false") << "\n"
     << "word_width = " << f.word_width << "\n"
     << "frac_width = " << f.frac_width << "\n"
     << "rounding = " << (f.rounding == Rounding::NearestTiesAway ? "nearest" : "floor") << "\n"
     << "overflow = " << (f.overflow == OverflowPolicy::Saturate ? "saturate" : "error") << "\n";
  const auto& r = cfg.run;
  os << "\n[run]\n"
     << "steps = " << r.steps << "\n"
     << "seed = " << r.seed << "\n"
     << "x0 = " << join(r.x0) << "\n"
     << "out = " << r.out << "\n"
     << "verbosity = " << r.verbosity << "\n"
     << "jobs = " << r.jobs << "\n";
  os << "\n[sweep]\n";
  if (!cfg.sweep.formats.empty()) {
    os << "formats =";
    for (const auto& [w, fr] : cfg.sweep.formats) os << " " << w << ":" << fr;
    os << "\n";
  }
  if (!cfg.sweep.sigmas.empty()) {
    os << "sigmas =";
    for (std::size_t i = 0; i < cfg.sweep.sigmas.size(); ++i) {
      os << (i ? ", " : " ") << format_number(cfg.sweep.sigmas[i]);
    }
    os << "\n";
  }
  return os.str();
}

/// Command-line values that replace the matching file keys.
struct ConfigOverrides {
  std::optional<std::string> out;          ///< [run] out
  std::optional<int> word_width;           ///< [fxp] word_width, also sets enabled
  std::optional<int> frac_width;           ///< [fxp] frac_width
  std::optional<double> sigma;             ///< [mpc] sigma
  std::optional<SparsityNorm> norm;        ///< [mpc] norm
  std::optional<int> steps;                ///< [run] steps
  std::optional<int> jobs;                 ///< [run] jobs
};

/// A new word width without a fraction width keeps the configured integer bits.
inline void apply_overrides(RunConfig& cfg, const ConfigOverrides& ov) {
  if (ov.out) cfg.run.out = *ov.out;
  if (ov.word_width) {
    const int ibits = cfg.fxp.integer_bits();
    cfg.fxp.enabled = true;
    cfg.fxp.word_width = *ov.word_width;
    if (!ov.frac_width) {
      if (*ov.word_width - ibits < 0) {
        throw ConfigError("--word-width " + std::to_string(*ov.word_width) + " leaves no room for " +
                          std::to_string(ibits) + " integer bits; pass --frac-width");
      }
      cfg.fxp.frac_width = *ov.word_width - ibits;
    }
  }
  if (ov.frac_width) cfg.fxp.frac_width = *ov.frac_width;
  if (ov.sigma) cfg.mpc.sigma = *ov.sigma;
  if (ov.norm) cfg.mpc.norm = *ov.norm;
  if (ov.steps) {
    if (*ov.steps < 1) throw ConfigError("--steps must be at least 1");
    cfg.run.steps = *ov.steps;
  }
  if (ov.jobs) cfg.run.jobs = *ov.jobs;
  if (cfg.fxp.word_width < 2 || cfg.fxp.word_width > 64 || cfg.fxp.frac_width < 0 ||
      cfg.fxp.frac_width > cfg.fxp.word_width - 1) {
    throw ConfigError("fixed-point format W=" + std::to_string(cfg.fxp.word_width) +
                      ", F=" + std::to_string(cfg.fxp.frac_width) + " is invalid (need 2 <= W <= 64, 0 <= F < W)");
  }
  validate_config(cfg);
}

}  // namespace spmpc
