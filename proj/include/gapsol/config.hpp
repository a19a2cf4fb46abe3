#pragma once

#include "gapsol/common.hpp"
#include "gapsol/hash.hpp"
#include "gapsol/medium.hpp"

#include "json.hpp"
#include "tomlplusplus/toml.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace gapsol {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what) : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct LatticeSpec {
  std::string kind = "square";  // square | hexagonal | custom
  double a0 = 2 * kPi;
  std::array<double, 2> a1{2 * kPi, 0.0}, a2{0.0, 2 * kPi};
};

struct MediumSpec {
  std::string kind = "homogeneous";  // homogeneous | harmonic | disk | ring | file
  double eps = 1.0;
  double eps0 = 2.0;
  std::vector<HarmonicTerm> terms;
  double radius = 1.0, eps_in = 2.0, eps_out = 1.0;
  double r_in = 0.5, r_out = 1.0, eps_ring = 2.0, eps_bg = 1.0;
  double width = 0.0;
  double chi0 = 1.0, chi_in = 1.0, chi_out = 1.0, chi_ring = 1.0, chi_bg = 1.0;
  std::string file;  // CSV of eps samples (rows: first index)
};

struct SolverSpec {
  double kappa = 1.0;
  int cutoff = 3;
  std::string discretization = "galerkin";  // galerkin | collocation
  int grid = 0;                             // 0: default for the discretization
  int bands = 6;
};

struct PathSpec {
  std::vector<std::string> labels{"G", "X", "M", "G"};
  std::vector<int> counts{20, 20, 20};
};

struct EdgeSpec {
  int grid = 16;
  int gap = 1;  // 1-based among the detected gaps (the floor gap counts when included)
  int lower_band = 0;  // when positive, selects the gap above this band instead of `gap`
  bool include_floor = false;
  std::string side = "upper";  // lower | upper
  double refine_tol = 1e-8;
};

struct CmeSpec {
  double L = 20.0;
  int M = 128;
  int max_iter = 50;
  double tol = 1e-10;
  double amplitude = 2.2;
  double decay_tol = 1e-6;
  bool nondegeneracy = true;
  std::vector<double> weights;  // per-component scale of the initial guess; empty: all 1
};

struct SolitonSpec {
  std::vector<double> eps_params{0.2, 0.15, 0.1, 0.07};
  std::vector<double> residual_eps{0.2, 0.14, 0.1, 0.07, 0.05};
  double coverage = 0.0;  // 0: 2 L
  int max_iter = 30;
  double rtol = 1e-9;
  int gmres_restart = 40;
  int gmres_max_iter = 800;
};

struct RunSpec {
  std::string out = "out";
  int threads = 0;
  unsigned seed = 1234;
  bool verbose = false;
};

struct RunConfig {
  LatticeSpec lattice;
  MediumSpec medium;
  SolverSpec solver;
  PathSpec path;
  EdgeSpec edge;
  CmeSpec cme;
  SolitonSpec soliton;
  RunSpec run;
  std::string source;  // file the config came from, if any
};

namespace detail {

// Typed accessors that report the full field path on mismatch.
class TableReader {
 public:
  TableReader(const toml::table* t, std::string prefix) : t_(t), prefix_(std::move(prefix)) {}

  std::string path(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void allow(std::initializer_list<const char*> keys) const {
    if (!t_) return;
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : *t_)
      if (!ok.count(std::string(k.str()))) throw ConfigError(path(std::string(k.str())), "unknown field");
  }

  template <class T>
  void get(const char* key, T& out) const {
    if (!t_) return;
    const toml::node* n = t_->get(key);
    if (!n) return;
    out = convert<T>(*n, path(key));
  }

  const toml::table* table() const { return t_; }

  template <class T>
  static T convert(const toml::node& n, const std::string& p) {
    if constexpr (std::is_same_v<T, double>) {
      if (auto v = n.value<double>()) return *v;
      throw ConfigError(p, "expected a number");
    } else if constexpr (std::is_same_v<T, int> || std::is_same_v<T, unsigned>) {
      if (!n.is_integer()) throw ConfigError(p, "expected an integer");
      const auto v = *n.value<int64_t>();
      if constexpr (std::is_same_v<T, unsigned>)
        if (v < 0) throw ConfigError(p, "expected a non-negative integer");
      return static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n.value<bool>()) return *v;
      throw ConfigError(p, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n.value<std::string>()) return *v;
      throw ConfigError(p, "expected a string");
    } else if constexpr (std::is_same_v<T, std::array<double, 2>>) {
      const auto* a = n.as_array();
      if (!a || a->size() != 2) throw ConfigError(p, "expected an array of two numbers");
      return {convert<double>(*a->get(0), p + "[0]"), convert<double>(*a->get(1), p + "[1]")};
    } else {
      using E = typename T::value_type;
      const auto* a = n.as_array();
      if (!a) throw ConfigError(p, "expected an array");
      T out;
      for (size_t i = 0; i < a->size(); ++i) out.push_back(convert<E>(*a->get(i), p + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const toml::table* t_;
  std::string prefix_;
};

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  using detail::require;
  const auto& L = c.lattice;
  require(L.kind == "square" || L.kind == "hexagonal" || L.kind == "custom", "lattice.kind",
          "must be square, hexagonal or custom");
  require(L.a0 > 0, "lattice.a0", "must be positive");
  const auto& m = c.medium;
  require(m.kind == "homogeneous" || m.kind == "harmonic" || m.kind == "disk" || m.kind == "ring" || m.kind == "file",
          "medium.kind", "must be homogeneous, harmonic, disk, ring or file");
  if (m.kind == "homogeneous") require(m.eps > 0, "medium.eps", "must be positive");
  if (m.kind == "harmonic") {
    double lo = m.eps0;
    for (const auto& t : m.terms) lo -= std::abs(t.cos_amp) + std::abs(t.sin_amp);
    require(lo > 0, "medium.terms", "eps0 minus the term amplitudes must stay positive");
  }
  if (m.kind == "disk") {
    require(m.radius > 0, "medium.radius", "must be positive");
    require(m.eps_in > 0, "medium.eps_in", "must be positive");
    require(m.eps_out > 0, "medium.eps_out", "must be positive");
  }
  if (m.kind == "ring") {
    require(m.r_in >= 0, "medium.r_in", "must be non-negative");
    require(m.r_out > m.r_in, "medium.r_out", "must exceed medium.r_in");
    require(m.eps_ring > 0, "medium.eps_ring", "must be positive");
    require(m.eps_bg > 0, "medium.eps_bg", "must be positive");
  }
  if (m.kind == "file") require(!m.file.empty(), "medium.file", "required for kind = file");
  require(m.width >= 0, "medium.width", "must be non-negative");
  const auto& s = c.solver;
  require(s.kappa != 0.0, "solver.kappa", "must be nonzero");
  require(std::isfinite(s.kappa), "solver.kappa", "must be finite");
  require(s.cutoff >= 0, "solver.cutoff", "must be non-negative");
  require(s.discretization == "galerkin" || s.discretization == "collocation", "solver.discretization",
          "must be galerkin or collocation");
  require(s.grid >= 0, "solver.grid", "must be non-negative");
  if (s.discretization == "collocation" && s.grid > 0) require(s.grid % 2 == 1, "solver.grid", "collocation needs an odd grid");
  require(s.bands >= 1, "solver.bands", "must be at least 1");
  require(c.path.labels.size() >= 2, "path.labels", "need at least two vertices");
  require(c.path.counts.size() + 1 == c.path.labels.size(), "path.counts", "need one count per segment");
  for (size_t i = 0; i < c.path.counts.size(); ++i)
    require(c.path.counts[i] >= 1, "path.counts[" + std::to_string(i) + "]", "must be positive");
  require(c.edge.grid >= 3, "edge.grid", "must be at least 3");
  require(c.edge.gap >= 1, "edge.gap", "must be at least 1");
  require(c.edge.lower_band >= 0 && c.edge.lower_band < c.solver.bands, "edge.lower_band",
          "must lie in [0, solver.bands)");
  require(c.edge.side == "lower" || c.edge.side == "upper", "edge.side", "must be lower or upper");
  require(c.edge.refine_tol > 0, "edge.refine_tol", "must be positive");
  require(c.cme.L > 0, "cme.L", "must be positive");
  require(c.cme.M >= 8, "cme.M", "must be at least 8");
  require(c.cme.max_iter >= 1, "cme.max_iter", "must be at least 1");
  require(c.cme.tol > 0, "cme.tol", "must be positive");
  require(c.cme.amplitude > 0, "cme.amplitude", "must be positive");
  require(c.cme.decay_tol > 0, "cme.decay_tol", "must be positive");
  for (size_t i = 0; i < c.soliton.eps_params.size(); ++i) {
    const double e = c.soliton.eps_params[i];
    require(e > 0 && e < 0.5, "soliton.eps_params[" + std::to_string(i) + "]", "must lie in (0, 0.5)");
  }
  for (size_t i = 0; i < c.soliton.residual_eps.size(); ++i) {
    const double e = c.soliton.residual_eps[i];
    require(e > 0 && e < 0.5, "soliton.residual_eps[" + std::to_string(i) + "]", "must lie in (0, 0.5)");
  }
  require(c.soliton.coverage >= 0, "soliton.coverage", "must be non-negative");
  require(c.soliton.max_iter >= 1, "soliton.max_iter", "must be at least 1");
  require(c.soliton.rtol > 0, "soliton.rtol", "must be positive");
  require(c.soliton.gmres_restart >= 2, "soliton.gmres_restart", "must be at least 2");
  require(c.soliton.gmres_max_iter >= 1, "soliton.gmres_max_iter", "must be at least 1");
  require(c.run.threads >= 0, "run.threads", "must be non-negative");
}

inline RunConfig parse_config(const toml::table& root, const std::string& source = "") {
  using detail::TableReader;
  RunConfig c;
  c.source = source;
  TableReader top(&root, "");
  top.allow({"lattice", "medium", "solver", "path", "edge", "cme", "soliton", "run"});
  auto sub = [&](const char* name) {
    const toml::node* n = root.get(name);
    if (n && !n->is_table()) throw ConfigError(name, "expected a table");
    return TableReader(n ? n->as_table() : nullptr, name);
  };
  {
    auto t = sub("lattice");
    t.allow({"kind", "a0", "a1", "a2"});
    t.get("kind", c.lattice.kind);
    t.get("a0", c.lattice.a0);
    t.get("a1", c.lattice.a1);
    t.get("a2", c.lattice.a2);
  }
  {
    auto t = sub("medium");
    t.allow({"kind", "eps", "eps0", "terms", "radius", "eps_in", "eps_out", "r_in", "r_out", "eps_ring", "eps_bg", "width",
             "chi0", "chi_in", "chi_out", "chi_ring", "chi_bg", "file"});
    t.get("kind", c.medium.kind);
    t.get("eps", c.medium.eps);
    t.get("eps0", c.medium.eps0);
    t.get("radius", c.medium.radius);
    t.get("eps_in", c.medium.eps_in);
    t.get("eps_out", c.medium.eps_out);
    t.get("r_in", c.medium.r_in);
    t.get("r_out", c.medium.r_out);
    t.get("eps_ring", c.medium.eps_ring);
    t.get("eps_bg", c.medium.eps_bg);
    t.get("width", c.medium.width);
    t.get("chi0", c.medium.chi0);
    t.get("chi_in", c.medium.chi_in);
    t.get("chi_out", c.medium.chi_out);
    t.get("chi_ring", c.medium.chi_ring);
    t.get("chi_bg", c.medium.chi_bg);
    t.get("file", c.medium.file);
    if (t.table())
      if (const toml::node* n = t.table()->get("terms")) {
        const auto* arr = n->as_array();
        if (!arr) throw ConfigError("medium.terms", "expected an array of tables");
        for (size_t i = 0; i < arr->size(); ++i) {
          const std::string p = "medium.terms[" + std::to_string(i) + "]";
          const auto* tt = arr->get(i)->as_table();
          if (!tt) throw ConfigError(p, "expected a table {m, n, cos, sin}");
          TableReader r(tt, p);
          r.allow({"m", "n", "cos", "sin"});
          HarmonicTerm h;
          r.get("m", h.m);
          r.get("n", h.n);
          r.get("cos", h.cos_amp);
          r.get("sin", h.sin_amp);
          c.medium.terms.push_back(h);
        }
      }
  }
  {
    auto t = sub("solver");
    t.allow({"kappa", "cutoff", "discretization", "grid", "bands"});
    t.get("kappa", c.solver.kappa);
    t.get("cutoff", c.solver.cutoff);
    t.get("discretization", c.solver.discretization);
    t.get("grid", c.solver.grid);
    t.get("bands", c.solver.bands);
  }
  {
    auto t = sub("path");
    t.allow({"labels", "counts"});
    t.get("labels", c.path.labels);
    t.get("counts", c.path.counts);
  }
  {
    auto t = sub("edge");
    t.allow({"grid", "gap", "lower_band", "include_floor", "side", "refine_tol"});
    t.get("grid", c.edge.grid);
    t.get("gap", c.edge.gap);
    t.get("lower_band", c.edge.lower_band);
    t.get("include_floor", c.edge.include_floor);
    t.get("side", c.edge.side);
    t.get("refine_tol", c.edge.refine_tol);
  }
  {
    auto t = sub("cme");
    t.allow({"L", "M", "max_iter", "tol", "amplitude", "decay_tol", "nondegeneracy", "weights"});
    t.get("L", c.cme.L);
    t.get("M", c.cme.M);
    t.get("max_iter", c.cme.max_iter);
    t.get("tol", c.cme.tol);
    t.get("amplitude", c.cme.amplitude);
    t.get("decay_tol", c.cme.decay_tol);
    t.get("nondegeneracy", c.cme.nondegeneracy);
    t.get("weights", c.cme.weights);
  }
  {
    auto t = sub("soliton");
    t.allow({"eps_params", "residual_eps", "coverage", "max_iter", "rtol", "gmres_restart", "gmres_max_iter"});
    t.get("eps_params", c.soliton.eps_params);
    t.get("residual_eps", c.soliton.residual_eps);
    t.get("coverage", c.soliton.coverage);
    t.get("max_iter", c.soliton.max_iter);
    t.get("rtol", c.soliton.rtol);
    t.get("gmres_restart", c.soliton.gmres_restart);
    t.get("gmres_max_iter", c.soliton.gmres_max_iter);
  }
  {
    auto t = sub("run");
    t.allow({"out", "threads", "seed", "verbose"});
    t.get("out", c.run.out);
    t.get("threads", c.run.threads);
    t.get("seed", c.run.seed);
    t.get("verbose", c.run.verbose);
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& file) {
  toml::table t;
  try {
    t = toml::parse_file(file);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (line " << e.source().begin.line << ")";
    throw ConfigError(file, os.str());
  }
  return parse_config(t, file);
}

inline RunConfig parse_config_string(const std::string& text) {
  toml::table t;
  try {
    t = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("<string>", std::string(e.description()));
  }
  return parse_config(t);
}

// Every input field that affects results; run.out, run.threads and
// run.verbose are execution settings and stay out of the hash.
inline nlohmann::ordered_json inputs_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["lattice"] = {{"kind", c.lattice.kind}, {"a0", c.lattice.a0}, {"a1", c.lattice.a1}, {"a2", c.lattice.a2}};
  nlohmann::ordered_json terms = nlohmann::ordered_json::array();
  for (const auto& t : c.medium.terms) terms.push_back({{"m", t.m}, {"n", t.n}, {"cos", t.cos_amp}, {"sin", t.sin_amp}});
  const auto& m = c.medium;
  j["medium"] = {{"kind", m.kind},         {"eps", m.eps},         {"eps0", m.eps0},   {"terms", terms},     {"radius", m.radius},
                 {"eps_in", m.eps_in},     {"eps_out", m.eps_out}, {"r_in", m.r_in},   {"r_out", m.r_out},   {"eps_ring", m.eps_ring},
                 {"eps_bg", m.eps_bg},     {"width", m.width},     {"chi0", m.chi0},   {"chi_in", m.chi_in}, {"chi_out", m.chi_out},
                 {"chi_ring", m.chi_ring}, {"chi_bg", m.chi_bg},   {"file", m.file}};
  j["solver"] = {{"kappa", c.solver.kappa},
                 {"cutoff", c.solver.cutoff},
                 {"discretization", c.solver.discretization},
                 {"grid", c.solver.grid},
                 {"bands", c.solver.bands}};
  j["path"] = {{"labels", c.path.labels}, {"counts", c.path.counts}};
  j["edge"] = {{"grid", c.edge.grid},
               {"gap", c.edge.gap},
               {"lower_band", c.edge.lower_band},
               {"include_floor", c.edge.include_floor},
               {"side", c.edge.side},
               {"refine_tol", c.edge.refine_tol}};
  j["cme"] = {{"L", c.cme.L},
              {"M", c.cme.M},
              {"max_iter", c.cme.max_iter},
              {"tol", c.cme.tol},
              {"amplitude", c.cme.amplitude},
              {"decay_tol", c.cme.decay_tol},
              {"nondegeneracy", c.cme.nondegeneracy},
              {"weights", c.cme.weights}};
  j["soliton"] = {{"eps_params", c.soliton.eps_params},
                  {"residual_eps", c.soliton.residual_eps},
                  {"coverage", c.soliton.coverage},
                  {"max_iter", c.soliton.max_iter},
                  {"rtol", c.soliton.rtol},
                  {"gmres_restart", c.soliton.gmres_restart},
                  {"gmres_max_iter", c.soliton.gmres_max_iter}};
  j["run"] = {{"seed", c.run.seed}};
  return j;
}

inline std::string inputs_hash(const RunConfig& c, const std::string& extra = "") {
  return hex64(fnv1a64(inputs_json(c).dump() + extra));
}

}  // namespace gapsol
