#pragma once

#include "gapsol/bands.hpp"
#include "gapsol/cme.hpp"
#include "gapsol/config.hpp"
#include "gapsol/io.hpp"
#include "gapsol/soliton.hpp"

#include <functional>
#include <iostream>
#include <set>

#ifndef GAPSOL_VERSION
#define GAPSOL_VERSION "dev"
#endif

namespace gapsol {

// ---------------------------------------------------------------------------
// Construction from the config

inline Lattice make_lattice(const LatticeSpec& s) {
  if (s.kind == "square") return Lattice::square(s.a0);
  if (s.kind == "hexagonal") return Lattice::hexagonal(s.a0);
  return Lattice(Vec2(s.a1[0], s.a1[1]), Vec2(s.a2[0], s.a2[1]));
}

inline Medium make_medium(const Lattice& lat, const MediumSpec& m) {
  if (m.kind == "homogeneous") return Medium::homogeneous(lat, m.eps, m.chi0);
  if (m.kind == "harmonic") return Medium::harmonic(lat, m.eps0, m.terms, m.chi0);
  if (m.kind == "disk") return Medium::disk(lat, m.radius, m.eps_in, m.eps_out, m.width, m.chi_in, m.chi_out);
  if (m.kind == "ring") return Medium::ring(lat, m.r_in, m.r_out, m.eps_ring, m.eps_bg, m.width, m.chi_ring, m.chi_bg);
  Eigen::ArrayXXd eps = read_real_array(m.file);
  if (!(eps.minCoeff() > 0)) throw ConfigError("medium.file", "eps samples must be positive");
  Eigen::ArrayXXd chi = Eigen::ArrayXXd::Constant(eps.rows(), eps.cols(), m.chi0);
  return Medium::sampled(lat, std::move(eps), std::move(chi));
}

inline BlochSolver make_solver(const Medium& med, const SolverSpec& s) {
  const Discretization d = s.discretization == "collocation" ? Discretization::collocation : Discretization::galerkin;
  return BlochSolver(med, s.kappa, s.cutoff, d, s.grid, s.grid);
}

// ---------------------------------------------------------------------------
// JSON forms of the intermediate results

inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
inline json to_json(const Mat2& m) { return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})}); }
inline Vec2 vec2_from(const json& j) { return Vec2(j.at(0).get<double>(), j.at(1).get<double>()); }
inline Mat2 mat2_from(const json& j) {
  Mat2 m;
  m << j.at(0).at(0).get<double>(), j.at(0).at(1).get<double>(), j.at(1).at(0).get<double>(), j.at(1).at(1).get<double>();
  return m;
}

inline json to_json(const Gap& g) {
  return {{"lo", g.lo}, {"hi", g.hi}, {"lower_band", g.lower_band}, {"upper_band", g.upper_band}};
}
inline Gap gap_from(const json& j) {
  return {j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("lower_band").get<int>(), j.at("upper_band").get<int>()};
}

inline json to_json(const BandEdge& e) {
  json j;
  j["omega_star"] = e.omega_star;
  j["Omega"] = e.Omega;
  j["n_star"] = e.n_star;
  j["side"] = e.side == EdgeSide::lower ? "lower" : "upper";
  j["N"] = e.N();
  j["gap"] = to_json(e.gap);
  j["kpoints"] = json::array();
  for (const auto& k : e.kpoints) j["kpoints"].push_back(to_json(k));
  j["omegas"] = e.omegas;
  j["margins"] = e.margins;
  j["hessians"] = json::array();
  for (const auto& h : e.hessians) j["hessians"].push_back(to_json(h));
  j["orbits"] = e.orbits;
  j["orbit_closed"] = e.orbit_closed;
  j["definiteness"] = e.definiteness;
  j["simple_fraction"] = e.simple_fraction;
  j["warnings"] = e.warnings;
  return j;
}

inline BandEdge edge_from(const json& j) {
  BandEdge e;
  e.omega_star = j.at("omega_star").get<double>();
  e.Omega = j.at("Omega").get<int>();
  e.n_star = j.at("n_star").get<int>();
  e.side = j.at("side").get<std::string>() == "lower" ? EdgeSide::lower : EdgeSide::upper;
  e.gap = gap_from(j.at("gap"));
  for (const auto& k : j.at("kpoints")) e.kpoints.push_back(vec2_from(k));
  e.omegas = j.at("omegas").get<std::vector<double>>();
  e.margins = j.at("margins").get<std::vector<double>>();
  for (const auto& h : j.at("hessians")) e.hessians.push_back(mat2_from(h));
  e.orbits = j.at("orbits").get<std::vector<std::vector<int>>>();
  e.orbit_closed = j.at("orbit_closed").get<bool>();
  e.definiteness = j.at("definiteness").get<int>();
  e.simple_fraction = j.at("simple_fraction").get<double>();
  e.warnings = j.at("warnings").get<std::vector<std::string>>();
  return e;
}

// Triples are written 1-based.
inline json to_json(const CmeSystem& s) {
  json j;
  j["N"] = s.N;
  j["Omega"] = s.Omega;
  j["omega_star"] = s.omega_star;
  j["kpoints"] = json::array();
  for (const auto& k : s.kpoints) j["kpoints"].push_back(to_json(k));
  j["hessians"] = json::array();
  for (const auto& h : s.H) j["hessians"].push_back(to_json(h));
  j["sigma"] = json::array();
  for (int c = 0; c < s.N; ++c) {
    json row = json::array();
    for (size_t t = 0; t < s.sigma[c].size(); ++t) {
      const Triple& tr = s.sigma[c][t];
      row.push_back({{"alpha", tr[0] + 1},
                     {"beta", tr[1] + 1},
                     {"gamma", tr[2] + 1},
                     {"I", json::array({s.I[c][t].real(), s.I[c][t].imag()})}});
    }
    j["sigma"].push_back(row);
  }
  return j;
}

inline CmeSystem cme_from(const json& j) {
  CmeSystem s;
  s.N = j.at("N").get<int>();
  s.Omega = j.at("Omega").get<int>();
  s.omega_star = j.at("omega_star").get<double>();
  for (const auto& k : j.at("kpoints")) s.kpoints.push_back(vec2_from(k));
  for (const auto& h : j.at("hessians")) s.H.push_back(mat2_from(h));
  for (const auto& row : j.at("sigma")) {
    std::vector<Triple> sig;
    std::vector<cdouble> co;
    for (const auto& t : row) {
      sig.push_back({t.at("alpha").get<int>() - 1, t.at("beta").get<int>() - 1, t.at("gamma").get<int>() - 1});
      co.emplace_back(t.at("I").at(0).get<double>(), t.at("I").at(1).get<double>());
    }
    s.sigma.push_back(sig);
    s.I.push_back(co);
  }
  return s;
}

inline std::vector<cdouble> flatten_fields(const std::vector<const Eigen::ArrayXXcd*>& fs) {
  std::vector<cdouble> out;
  for (const auto* f : fs) out.insert(out.end(), f->data(), f->data() + f->size());
  return out;
}

inline void write_envelope(const fs::path& p, const EnvelopeState& A, json meta = json::object()) {
  std::vector<const Eigen::ArrayXXcd*> fs;
  for (const auto& a : A.A) fs.push_back(&a);
  meta["N"] = A.N;
  meta["L"] = A.L;
  meta["M"] = A.M;
  meta["PT"] = A.pt;
  meta["trivial"] = A.trivial;
  meta["layout"] = "component-major, column-major M x M, y_i = -L + 2 L i / M";
  write_complex_array(p, flatten_fields(fs), meta);
}

inline EnvelopeState read_envelope(const fs::path& p) {
  auto [data, meta] = read_complex_array(p);
  EnvelopeState A(meta.at("N").get<int>(), meta.at("M").get<int>(), meta.at("L").get<double>());
  const size_t mm = static_cast<size_t>(A.M) * A.M;
  if (data.size() != mm * A.N) throw IoError(p.string() + ": envelope size mismatch");
  for (int j = 0; j < A.N; ++j) std::copy(data.begin() + j * mm, data.begin() + (j + 1) * mm, A.A[j].data());
  A.pt = meta.at("PT").get<bool>();
  A.trivial = meta.at("trivial").get<bool>();
  return A;
}

inline void write_vector_field(const fs::path& p, const VectorField& f, json meta = json::object()) {
  meta["n1"] = f.n1();
  meta["n2"] = f.n2();
  meta["components"] = 3;
  write_complex_array(p, flatten_fields({&f[0], &f[1], &f[2]}), meta);
}

inline VectorField read_vector_field(const fs::path& p) {
  auto [data, meta] = read_complex_array(p);
  const int n1 = meta.at("n1").get<int>(), n2 = meta.at("n2").get<int>();
  VectorField f(n1, n2);
  const size_t m = static_cast<size_t>(n1) * n2;
  if (data.size() != 3 * m) throw IoError(p.string() + ": field size mismatch");
  for (int a = 0; a < 3; ++a) std::copy(data.begin() + a * m, data.begin() + (a + 1) * m, f[a].data());
  return f;
}

// Bloch profiles p(., k_j) on the cell grid, one block of 3 components per pair.
inline void write_pairs(const fs::path& p, const std::vector<BlochEigenpair>& pairs, const BlochSolver& solver) {
  std::vector<const Eigen::ArrayXXcd*> fs;
  json meta;
  meta["k"] = json::array();
  meta["omegas"] = json::array();
  meta["bands"] = json::array();
  meta["pt_defects"] = json::array();
  for (const auto& q : pairs) {
    for (int a = 0; a < 3; ++a) fs.push_back(&q.p[a]);
    meta["k"].push_back(to_json(q.k));
    meta["omegas"].push_back(q.omega);
    meta["bands"].push_back(q.band);
    meta["pt_defects"].push_back(q.pt_defect);
  }
  meta["kappa"] = solver.kappa();
  meta["cutoff"] = solver.cutoff();
  meta["discretization"] = solver.discretization() == Discretization::collocation ? "collocation" : "galerkin";
  meta["n1"] = solver.n1();
  meta["n2"] = solver.n2();
  meta["normalization"] = "eps-weighted";
  meta["phase"] = "PT";
  write_complex_array(p, flatten_fields(fs), meta);
}

inline std::vector<BlochEigenpair> read_pairs(const fs::path& p) {
  auto [data, meta] = read_complex_array(p);
  const int n1 = meta.at("n1").get<int>(), n2 = meta.at("n2").get<int>();
  const size_t m = static_cast<size_t>(n1) * n2;
  const size_t count = meta.at("k").size();
  if (data.size() != 3 * m * count) throw IoError(p.string() + ": Bloch archive size mismatch");
  std::vector<BlochEigenpair> out(count);
  for (size_t j = 0; j < count; ++j) {
    auto& q = out[j];
    q.k = vec2_from(meta["k"][j]);
    q.omega = meta["omegas"][j].get<double>();
    q.omega2 = q.omega * q.omega;
    q.band = meta["bands"][j].get<int>();
    q.pt_defect = meta["pt_defects"][j].get<double>();
    q.p = VectorField(n1, n2);
    for (int a = 0; a < 3; ++a) std::copy(data.begin() + (3 * j + a) * m, data.begin() + (3 * j + a + 1) * m, q.p[a].data());
    q.normalized = q.phase_fixed = q.phase_reliable = true;
  }
  return out;
}

inline CsvTable band_table(const BandStructure& bs) {
  std::vector<std::string> h{"k_index", "k1", "k2", "arclength"};
  for (int n = 1; n <= bs.bands(); ++n) h.push_back("omega_" + std::to_string(n));
  CsvTable t(h);
  for (int i = 0; i < bs.points(); ++i) {
    std::vector<double> r{static_cast<double>(i), bs.k[i].x(), bs.k[i].y(), bs.arclength.empty() ? 0.0 : bs.arclength[i]};
    for (int n = 0; n < bs.bands(); ++n) r.push_back(bs.omega(i, n));
    t.add(r);
  }
  return t;
}

inline BandStructure band_table_read(const fs::path& p, int grid_n, double kappa, int cutoff) {
  const auto [h, rows] = CsvTable::parse(read_file(p));
  BandStructure bs;
  const int nb = static_cast<int>(h.size()) - 4;
  bs.omega.resize(static_cast<Eigen::Index>(rows.size()), nb);
  for (size_t i = 0; i < rows.size(); ++i) {
    bs.k.push_back(Vec2(rows[i][1], rows[i][2]));
    for (int n = 0; n < nb; ++n) bs.omega(static_cast<Eigen::Index>(i), n) = rows[i][4 + n];
  }
  bs.grid_n = grid_n;
  bs.kappa = kappa;
  bs.cutoff = cutoff;
  return bs;
}

// Phase-fixed Bloch pairs at the level set. A point equal to -k_j modulo
// Lambda* takes conj(p_j) e^{-iG.x}, so u(x,-k) = conj u(x,k) holds exactly.
inline std::vector<BlochEigenpair> edge_pairs(const BlochSolver& solver, const BandEdge& e) {
  const Lattice& lat = solver.lattice();
  std::vector<BlochEigenpair> out;
  for (size_t j = 0; j < e.kpoints.size(); ++j) {
    const Vec2 k = e.kpoints[j];
    int partner = -1;
    for (size_t i = 0; i < j; ++i)
      if (lat.is_reciprocal_vector(k + e.kpoints[i], 1e-8)) {
        partner = static_cast<int>(i);
        break;
      }
    if (partner >= 0) {
      BlochEigenpair q = negative_k(out[partner]);
      const Vec2 G = k + out[partner].k;
      for (int jj = 0; jj < solver.n2(); ++jj)
        for (int ii = 0; ii < solver.n1(); ++ii) {
          const cdouble ph = std::polar(1.0, -G.dot(lat.grid_point(ii, jj, solver.n1(), solver.n2())));
          for (int a = 0; a < 3; ++a) q.p[a](ii, jj) *= ph;
        }
      q.k = k;
      q.pt_defect = pt_defect(q.p);
      out.push_back(std::move(q));
    } else {
      auto prs = solver.eigenpairs(k, e.n_star);
      out.push_back(fix_phase(prs[e.n_star - 1]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stage orchestration

class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

class Pipeline {
 public:
  Pipeline(RunConfig cfg, std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), man_(cfg_.run.out), log_(log), lat_(make_lattice(cfg_.lattice)), med_(make_medium(lat_, cfg_.medium)) {
    threads_ = cfg_.run.threads > 0 ? cfg_.run.threads : default_threads();
    fs::create_directories(cfg_.run.out);
    man_.set_header(GAPSOL_VERSION, inputs_hash(cfg_), inputs_json(cfg_));
  }

  static const std::vector<std::string>& stages() {
    static const std::vector<std::string> s{"check", "bands", "gaps", "edge", "cme", "solve-cme", "assemble", "verify", "correct", "sweep"};
    return s;
  }

  const Manifest& manifest() const { return man_; }
  const fs::path& out() const { return man_.dir(); }

  // Runs `stage` and whatever stale upstream stages it needs. Returns true
  // when the stage itself was recomputed.
  bool run(const std::string& stage) {
    if (std::find(stages().begin(), stages().end(), stage) == stages().end())
      throw std::invalid_argument("unknown subcommand '" + stage + "'");
    const bool did = ensure(stage);
    man_.save();
    return did;
  }

 private:
  // -- keys -----------------------------------------------------------------

  std::string section_hash(std::initializer_list<const char*> sections) const {
    const json in = inputs_json(cfg_);
    json sub = json::object();
    for (const char* s : sections) sub[s] = in.at(s);
    return sub.dump();
  }

  std::string key(const std::string& stage) const {
    std::string k;
    if (stage == "check") k = section_hash({"lattice", "medium", "solver"});
    if (stage == "bands") k = section_hash({"lattice", "medium", "solver", "path"});
    if (stage == "gaps") {
      const json e = inputs_json(cfg_).at("edge");
      k = section_hash({"lattice", "medium", "solver"}) + e.at("grid").dump() + e.at("include_floor").dump();
    }
    if (stage == "edge") k = key("gaps") + section_hash({"edge"});
    if (stage == "cme") k = key("edge");
    if (stage == "solve-cme") k = key("cme") + section_hash({"cme"});
    if (stage == "assemble" || stage == "verify" || stage == "correct" || stage == "sweep")
      k = key("solve-cme") + section_hash({"soliton"});
    return hex64(fnv1a64(std::string(GAPSOL_VERSION) + "|" + stage + "|" + k));
  }

  static std::vector<std::string> upstream(const std::string& stage) {
    if (stage == "edge") return {"gaps"};
    if (stage == "cme") return {"edge"};
    if (stage == "solve-cme") return {"cme"};
    if (stage == "assemble" || stage == "verify" || stage == "correct" || stage == "sweep") return {"solve-cme", "edge"};
    return {};
  }

  bool ensure(const std::string& stage) {
    if (done_.count(stage)) return false;
    for (const auto& up : upstream(stage)) ensure(up);
    const std::string k = key(stage);
    if (man_.fresh(stage, k)) {
      info(stage + ": up to date");
      done_.insert(stage);
      return false;
    }
    info(stage + ": running");
    try {
      if (stage == "check") do_check(k);
      if (stage == "bands") do_bands(k);
      if (stage == "gaps") do_gaps(k);
      if (stage == "edge") do_edge(k);
      if (stage == "cme") do_cme(k);
      if (stage == "solve-cme") do_solve_cme(k);
      if (stage == "assemble") do_assemble(k);
      if (stage == "verify") do_verify(k);
      if (stage == "correct") do_correct(k);
      if (stage == "sweep") do_sweep(k);
    } catch (const StageError&) {
      throw;
    } catch (const ConfigError&) {
      info(stage + ": failed");
      throw;
    } catch (const AssumptionError&) {
      info(stage + ": failed");
      throw;
    } catch (const ConvergenceError&) {
      info(stage + ": failed");
      throw;
    } catch (const std::exception& e) {
      throw StageError(stage, e.what());
    }
    man_.save();
    done_.insert(stage);
    return true;
  }

  void info(const std::string& s) const {
    if (log_) *log_ << "[gapsol] " << s << "\n";
  }
  void debug(const std::string& s) const {
    if (log_ && cfg_.run.verbose) *log_ << "[gapsol]   " << s << "\n";
  }

  void write_json(const std::string& name, const json& j) { write_file(man_.path(name), j.dump(2) + "\n"); }
  json read_json(const std::string& name) const { return json::parse(read_file(man_.path(name))); }

  const BlochSolver& solver() {
    if (!solver_) solver_ = std::make_unique<BlochSolver>(make_solver(med_, cfg_.solver));
    return *solver_;
  }

  // -- stages ---------------------------------------------------------------

  void do_check(const std::string& k) {
    const auto& s = solver();
    const AssumptionReport r = check_assumptions(med_.eps_field(s.n1(), s.n2()), med_.chi_field(s.n1(), s.n2()));
    json j;
    j["positivity"] = r.positivity;
    j["evenness_eps"] = r.evenness_eps;
    j["evenness_chi"] = r.evenness_chi;
    j["realness"] = r.realness;
    j["min_eps"] = r.min_eps;
    j["eps_even_defect"] = r.eps_even_defect;
    j["chi_even_defect"] = r.chi_even_defect;
    j["grid"] = {s.n1(), s.n2()};
    j["kappa_nonzero"] = cfg_.solver.kappa != 0.0;
    write_json("assumptions.json", j);
    man_.record("check", k, {"assumptions.json"}, {{"all_pass", r.positivity && r.evenness_eps && r.evenness_chi && r.realness}});
  }

  void do_bands(const std::string& k) {
    const KPath path = KPath::through(lat_, cfg_.path.labels, cfg_.path.counts);
    const BandStructure bs = sweep_path(solver(), path, cfg_.solver.bands, threads_);
    band_table(bs).write(man_.path("bands.csv"));
    man_.record("bands", k, {"bands.csv"}, {{"points", bs.points()}, {"medium_hash", bs.medium_hash}});
  }

  void do_gaps(const std::string& k) {
    const BandStructure bs = sweep_grid(solver(), cfg_.edge.grid, cfg_.solver.bands, threads_);
    band_table(bs).write(man_.path("bands_grid.csv"));
    const auto gaps = find_gaps(bs, cfg_.edge.include_floor);
    json j;
    j["grid_n"] = bs.grid_n;
    j["gaps"] = json::array();
    for (const auto& g : gaps) j["gaps"].push_back(to_json(g));
    const Eigen::VectorXd lip = lipschitz_probe(bs, lat_);
    j["lipschitz"] = std::vector<double>(lip.data(), lip.data() + lip.size());
    write_json("gaps.json", j);
    man_.record("gaps", k, {"bands_grid.csv", "gaps.json"}, {{"gap_count", gaps.size()}});
  }

  void do_edge(const std::string& k) {
    const json gj = read_json("gaps.json");
    const BandStructure bs = band_table_read(man_.path("bands_grid.csv"), gj.at("grid_n").get<int>(), cfg_.solver.kappa, cfg_.solver.cutoff);
    const auto& gl = gj.at("gaps");
    Gap gap;
    if (cfg_.edge.lower_band > 0) {
      bool found = false;
      for (const auto& g : gl)
        if (g.at("lower_band").get<int>() == cfg_.edge.lower_band) {
          gap = gap_from(g);
          found = true;
        }
      if (!found)
        throw ConfigError("edge.lower_band", "no gap detected above band " + std::to_string(cfg_.edge.lower_band));
    } else {
      if (cfg_.edge.gap > static_cast<int>(gl.size()))
        throw ConfigError("edge.gap", "requested gap " + std::to_string(cfg_.edge.gap) + " but only " +
                                          std::to_string(gl.size()) + " detected");
      gap = gap_from(gl.at(cfg_.edge.gap - 1));
    }
    const EdgeSide side = cfg_.edge.side == "lower" ? EdgeSide::lower : EdgeSide::upper;
    if (side == EdgeSide::lower && gap.lower_band == 0) throw ConfigError("edge.side", "the floor gap has no lower band");
    EdgeOptions opt;
    opt.refine_tol = cfg_.edge.refine_tol;
    const BandEvaluator ev = evaluator(solver());
    const BandEdge e = locate_edge(bs, gap, side, lat_, &ev, opt);
    for (const auto& w : e.warnings) info("edge: warning: " + w);
    const auto pairs = edge_pairs(solver(), e);
    write_json("edge.json", to_json(e));
    write_pairs(man_.path("bloch_pairs.bin"), pairs, solver());
    man_.record("edge", k, {"edge.json", "bloch_pairs.bin", "bloch_pairs.bin.json"},
                {{"N", e.N()}, {"omega_star", e.omega_star}, {"Omega", e.Omega}});
  }

  void do_cme(const std::string& k) {
    const BandEdge e = edge_from(read_json("edge.json"));
    const auto pairs = read_pairs(man_.path("bloch_pairs.bin"));
    CmeSystem sys;
    sys.N = e.N();
    sys.Omega = e.Omega;
    sys.omega_star = e.omega_star;
    sys.H = e.hessians;
    sys.kpoints = e.kpoints;
    sys.sigma = resonance_sets(e.kpoints, lat_);
    const int n1 = pairs.front().p.n1(), n2 = pairs.front().p.n2();
    sys.I = coupling_coefficients(pairs, sys.sigma, med_.chi_field(n1, n2), e.omega_star, lat_);
    json j = to_json(sys);
    j["max_imag_I"] = sys.max_imag_coefficient();
    if (sys.N == 6) j["reduction_defect_A1A4_zero"] = reduction_defect(sys, {0, 3}, {{4, 1}, {5, 2}}, cfg_.run.seed);
    write_json("cme_system.json", j);
    man_.record("cme", k, {"cme_system.json"}, {{"max_imag_I", sys.max_imag_coefficient()}});
  }

  void do_solve_cme(const std::string& k) {
    const CmeSystem sys = cme_from(read_json("cme_system.json"));
    const auto& c = cfg_.cme;
    if (!c.weights.empty() && static_cast<int>(c.weights.size()) != sys.N)
      throw ConfigError("cme.weights", "need one weight per envelope component (N = " + std::to_string(sys.N) + ")");
    const EnvelopeState A0 = gaussian_guess(sys, c.M, c.L, c.amplitude, c.weights);
    NewtonOptions no;
    no.max_iter = c.max_iter;
    no.tol = c.tol;
    no.decay_tol = c.decay_tol;
    NewtonReport rep;
    const EnvelopeState A = solve_newton(sys, A0, no, &rep);
    debug("solve-cme: " + std::to_string(rep.iterations) + " Newton steps, residual " + format_double(rep.final_residual));
    if (!rep.decay_ok)
      throw ConvergenceError("solve-cme: boundary ratio " + format_double(rep.boundary_ratio) + " exceeds cme.decay_tol; enlarge cme.L",
                             rep.residuals);
    json j;
    j["iterations"] = rep.iterations;
    j["residual"] = rep.final_residual;
    j["residual_history"] = rep.residuals;
    j["boundary_ratio"] = rep.boundary_ratio;
    j["trivial"] = A.trivial;
    j["max_abs"] = A.max_abs();
    j["pt_defect"] = A.pt_defect();
    if (c.nondegeneracy && !A.trivial) {
      const NondegeneracyReport nd = nondegeneracy_check(sys, A);
      j["nondegeneracy"] = {{"singular_values", nd.singular_values},
                            {"median_singular", nd.median_singular},
                            {"null_tol", nd.null_tol},
                            {"null_count", nd.null_count},
                            {"subspace_angle", nd.subspace_angle},
                            {"pt_min_singular", nd.pt_min_singular},
                            {"degenerate", nd.degenerate},
                            {"verdict", nd.verdict}};
    }
    write_envelope(man_.path("envelope.bin"), A, {{"residual", rep.final_residual}});
    write_json("cme_solution.json", j);
    man_.record("solve-cme", k, {"envelope.bin", "envelope.bin.json", "cme_solution.json"},
                {{"iterations", rep.iterations}, {"trivial", A.trivial}});
  }

  struct SolitonInputs {
    CmeSystem sys;
    EnvelopeState A;
    std::vector<BlochEigenpair> pairs;
    int nc = 0;
    Eigen::ArrayXXd eps;
    SusceptibilityField chi;
  };

  SolitonInputs soliton_inputs() {
    SolitonInputs in;
    in.sys = cme_from(read_json("cme_system.json"));
    in.A = read_envelope(man_.path("envelope.bin"));
    in.pairs = read_pairs(man_.path("bloch_pairs.bin"));
    const int n1 = in.pairs.front().p.n1(), n2 = in.pairs.front().p.n2();
    if (cfg_.solver.discretization != "collocation" || n1 != n2 || n1 % 2 == 0)
      throw ConfigError("solver.discretization", "soliton stages need collocation on an odd square cell grid");
    in.nc = n1;
    in.eps = med_.eps_field(n1, n2).samples;
    in.chi = med_.chi_field(n1, n2);
    return in;
  }

  double coverage(const SolitonInputs& in) const { return cfg_.soliton.coverage > 0 ? cfg_.soliton.coverage : 2.0 * in.A.L; }

  SupercellGrid grid_for(const SolitonInputs& in, double e) const {
    return SupercellGrid::make(lat_, in.nc, e, in.sys.omega_star, in.sys.Omega, coverage(in), in.sys.kpoints);
  }

  CorrectorOptions corrector_options() const {
    CorrectorOptions co;
    co.newton.max_iter = cfg_.soliton.max_iter;
    co.newton.rtol = cfg_.soliton.rtol;
    co.newton.gmres.restart = cfg_.soliton.gmres_restart;
    co.newton.gmres.max_iter = cfg_.soliton.gmres_max_iter;
    co.threads = 1;
    return co;
  }

  static void write_slices(const fs::path& p1, const fs::path& p2, const SupercellGrid& g, const VectorField& u) {
    const Eigen::ArrayXXd I = GapSolitonApprox::intensity(u);
    const int n = g.n();
    CsvTable t1({"x1", "x2", "intensity"}), t2({"x1", "x2", "intensity"});
    for (int s = 0; s < n; ++s) {
      const int i = (s + (n + 1) / 2) % n;  // ascending coordinate order
      const Vec2 x = g.point(i, 0);
      t1.add({x.x(), x.y(), I(i, 0)});
      const Vec2 y = g.point(0, i);
      t2.add({y.x(), y.y(), I(0, i)});
    }
    t1.write(p1);
    t2.write(p2);
  }

  void do_assemble(const std::string& k) {
    const SolitonInputs in = soliton_inputs();
    if (cfg_.soliton.eps_params.empty()) throw ConfigError("soliton.eps_params", "empty");
    const double e = cfg_.soliton.eps_params.front();
    const SupercellGrid g = grid_for(in, e);
    const GapSolitonApprox s = assemble_ansatz(g, in.pairs, in.A, coverage(in), threads_);
    const MaxwellSupercell op(g, in.eps, in.chi, cfg_.solver.kappa);
    json meta{{"eps_param", e}, {"omega", g.omega()}, {"S", g.S}, {"nc", g.nc}};
    write_vector_field(man_.path("ansatz.bin"), s.u, meta);
    write_slices(man_.path("intensity_ansatz_x1.csv"), man_.path("intensity_ansatz_x2.csv"), g, s.u);
    json j = meta;
    j["ans_l2"] = op.l2_norm(s.u);
    j["ans_h2"] = op.h2_norm(s.u);
    j["pt_defect"] = pt_defect(s.u);
    j["commensuration_error"] = g.commensuration_error;
    write_json("ansatz.json", j);
    man_.record("assemble", k,
                {"ansatz.bin", "ansatz.bin.json", "ansatz.json", "intensity_ansatz_x1.csv", "intensity_ansatz_x2.csv"});
  }

  void do_verify(const std::string& k) {
    const SolitonInputs in = soliton_inputs();
    const auto& es = cfg_.soliton.residual_eps;
    std::vector<std::array<double, 8>> rows(es.size());
    parallel_for(static_cast<int>(es.size()), threads_, [&](int i) {
      const SupercellGrid g = grid_for(in, es[i]);
      const GapSolitonApprox s = assemble_ansatz(g, in.pairs, in.A, coverage(in));
      const MaxwellSupercell op(g, in.eps, in.chi, cfg_.solver.kappa);
      const VectorField R = op.residual(s.u, g.omega());
      rows[i] = {es[i], g.omega(), static_cast<double>(g.S), op.l2_norm(R), op.h2_norm(R), op.l2_norm(s.u), op.h2_norm(s.u),
                 pt_defect(s.u)};
      debug("verify: eps " + format_double(es[i]) + " S " + std::to_string(g.S) + " res_L2 " + format_double(rows[i][3]));
    });
    CsvTable t({"eps_param", "omega", "S", "res_L2", "res_H2", "ans_L2", "ans_H2", "pt_defect"});
    std::vector<double> x, rl2, rh2, al2, ah2;
    for (const auto& r : rows) {
      t.add(std::vector<double>(r.begin(), r.end()));
      x.push_back(r[0]);
      rl2.push_back(r[3]);
      rh2.push_back(r[4]);
      al2.push_back(r[5]);
      ah2.push_back(r[6]);
    }
    t.write(man_.path("residual.csv"));
    auto variation = [](const std::vector<double>& v) {
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      return (*hi - *lo) / *hi;
    };
    json j;
    if (x.size() >= 2) {
      j["res_l2_slope"] = loglog_slope(x, rl2);
      j["res_h2_slope"] = loglog_slope(x, rh2);
      j["ans_l2_variation"] = variation(al2);
      j["ans_h2_variation"] = variation(ah2);
    }
    write_json("verify.json", j);
    man_.record("verify", k, {"residual.csv", "verify.json"}, j);
  }

  void do_correct(const std::string& k) {
    const SolitonInputs in = soliton_inputs();
    if (cfg_.soliton.eps_params.empty()) throw ConfigError("soliton.eps_params", "empty");
    const double e = cfg_.soliton.eps_params.front();
    const SupercellGrid g = grid_for(in, e);
    GapSolitonApprox s = assemble_ansatz(g, in.pairs, in.A, coverage(in), threads_);
    const MaxwellSupercell op(g, in.eps, in.chi, cfg_.solver.kappa);
    CorrectorOptions co = corrector_options();
    co.threads = threads_;
    newton_correct(s, op, co);
    json meta{{"eps_param", e}, {"omega", g.omega()}, {"S", g.S}, {"nc", g.nc}};
    write_vector_field(man_.path("corrected.bin"), *s.u_corr, meta);
    write_vector_field(man_.path("magnetic.bin"), *s.h, meta);
    write_slices(man_.path("intensity_corrected_x1.csv"), man_.path("intensity_corrected_x2.csv"), g, *s.u_corr);
    json j = meta;
    const auto& d = s.diag;
    j["res_L2"] = d.res_l2;
    j["res_H2"] = d.res_h2;
    j["corrected_res_L2"] = d.corr_res_l2;
    j["err_L2"] = d.err_l2;
    j["err_H2"] = d.err_h2;
    j["newton_iters"] = d.newton_iters;
    j["gmres_iters"] = d.gmres_iters;
    j["pt_defect"] = d.pt_defect;
    j["div_h_max"] = op.divergence(*s.h).abs().maxCoeff();
    write_json("correct.json", j);
    man_.record("correct", k,
                {"corrected.bin", "corrected.bin.json", "magnetic.bin", "magnetic.bin.json", "correct.json",
                 "intensity_corrected_x1.csv", "intensity_corrected_x2.csv"});
  }

  void do_sweep(const std::string& k) {
    const SolitonInputs in = soliton_inputs();
    const auto& es = cfg_.soliton.eps_params;
    std::vector<SolitonDiagnostics> diag(es.size());
    std::vector<double> omegas(es.size());
    parallel_for(static_cast<int>(es.size()), threads_, [&](int i) {
      const SupercellGrid g = grid_for(in, es[i]);
      GapSolitonApprox s = assemble_ansatz(g, in.pairs, in.A, coverage(in));
      const MaxwellSupercell op(g, in.eps, in.chi, cfg_.solver.kappa);
      newton_correct(s, op, corrector_options());
      diag[i] = s.diag;
      omegas[i] = g.omega();
      debug("sweep: eps " + format_double(es[i]) + " S " + std::to_string(g.S) + " err_H2 " + format_double(s.diag.err_h2));
    });
    CsvTable t({"eps_param", "omega", "res_L2", "res_H2", "err_L2", "err_H2", "newton_iters"});
    std::vector<double> x, el2, eh2, rl2;
    for (size_t i = 0; i < es.size(); ++i) {
      const auto& d = diag[i];
      t.add({es[i], omegas[i], d.res_l2, d.res_h2, d.err_l2, d.err_h2, static_cast<double>(d.newton_iters)});
      x.push_back(es[i]);
      el2.push_back(d.err_l2);
      eh2.push_back(d.err_h2);
      rl2.push_back(d.res_l2);
    }
    t.write(man_.path("scaling.csv"));
    json j;
    if (x.size() >= 2) {
      j["err_h2_slope"] = loglog_slope(x, eh2);
      j["err_l2_slope"] = loglog_slope(x, el2);
      j["res_l2_slope"] = loglog_slope(x, rl2);
    }
    // monotone decrease of the H2 distance as eps_param decreases
    std::vector<size_t> order(es.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return es[a] > es[b]; });
    bool mono = true;
    for (size_t i = 1; i < order.size(); ++i) mono = mono && eh2[order[i]] < eh2[order[i - 1]];
    j["err_h2_monotone"] = mono;
    double worst = 0.0;
    for (const auto& d : diag) worst = std::max(worst, d.corr_res_l2);
    j["max_corrected_res_L2"] = worst;
    write_json("scaling.json", j);
    man_.record("sweep", k, {"scaling.csv", "scaling.json"}, j);
  }

  RunConfig cfg_;
  Manifest man_;
  std::ostream* log_;
  Lattice lat_;
  Medium med_;
  int threads_ = 1;
  std::unique_ptr<BlochSolver> solver_;
  std::set<std::string> done_;
};

}  // namespace gapsol
