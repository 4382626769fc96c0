#include "mvlab/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "mvlab/csv.hpp"
#include "mvlab/inequalities.hpp"
#include "mvlab/invariant.hpp"
#include "mvlab/kinetic.hpp"

#ifndef MVLAB_VERSION
#define MVLAB_VERSION "0.0.0"
#endif
#ifndef MVLAB_BUILD_HASH
#define MVLAB_BUILD_HASH "unknown"
#endif

namespace mvlab::lab {

using measures::EmpiricalMeasure;
using measures::GaussianLaw;

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Typed access to one JSON object. Every key read is remembered so done() can
// reject the rest.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw SchemaError(path_.empty() ? "<root>" : path_, "must be an object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  double number(const std::string& k, std::optional<double> def = {}) {
    const json* v = get(k);
    if (!v) return require(k, def);
    if (!v->is_number()) throw SchemaError(join(path_, k), "must be a number");
    const double x = v->get<double>();
    if (!std::isfinite(x)) throw SchemaError(join(path_, k), "must be finite");
    return x;
  }

  double positive(const std::string& k, std::optional<double> def = {}) {
    const double x = number(k, def);
    if (!(x > 0)) throw SchemaError(join(path_, k), "must be > 0");
    return x;
  }

  std::uint64_t count(const std::string& k, std::optional<std::uint64_t> def = {}, std::uint64_t min = 0) {
    const json* v = get(k);
    std::uint64_t x;
    if (!v) {
      x = require(k, def);
    } else {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
        throw SchemaError(join(path_, k), "must be a nonnegative integer");
      x = v->get<std::uint64_t>();
    }
    if (x < min) throw SchemaError(join(path_, k), "must be >= " + std::to_string(min));
    return x;
  }

  std::string text(const std::string& k, std::optional<std::string> def = {},
                    const std::vector<std::string>& allowed = {}) {
    const json* v = get(k);
    std::string s;
    if (!v) {
      s = require(k, def);
    } else {
      if (!v->is_string()) throw SchemaError(join(path_, k), "must be a string");
      s = v->get<std::string>();
    }
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw SchemaError(join(path_, k), "'" + s + "' is not one of {" + list + "}");
    }
    return s;
  }

  bool flag(const std::string& k, bool def) {
    const json* v = get(k);
    if (!v) return def;
    if (!v->is_boolean()) throw SchemaError(join(path_, k), "must be true or false");
    return v->get<bool>();
  }

  std::vector<double> numbers(const std::string& k, std::optional<std::vector<double>> def = {}) {
    const json* v = get(k);
    if (!v) return require(k, def);
    if (!v->is_array() || v->empty()) throw SchemaError(join(path_, k), "must be a nonempty array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const auto& e = (*v)[i];
      if (!e.is_number() || !std::isfinite(e.get<double>()))
        throw SchemaError(join(path_, k) + "[" + std::to_string(i) + "]", "must be a finite number");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Matrix matrix(const std::string& k, Eigen::Index n) {
    const json* v = get(k);
    const std::string p = join(path_, k);
    if (!v) throw SchemaError(p, "is required");
    if (!v->is_array() || static_cast<Eigen::Index>(v->size()) != n)
      throw SchemaError(p, "must be a " + std::to_string(n) + "x" + std::to_string(n) + " array of rows");
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& row = (*v)[static_cast<std::size_t>(i)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
        throw SchemaError(p + "[" + std::to_string(i) + "]", "must have " + std::to_string(n) + " entries");
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto& e = row[static_cast<std::size_t>(j)];
        if (!e.is_number()) throw SchemaError(p + "[" + std::to_string(i) + "][" + std::to_string(j) + "]", "must be a number");
        m(i, j) = e.get<double>();
      }
    }
    return m;
  }

  const json* object(const std::string& k) {
    const json* v = get(k);
    if (v && !v->is_object()) throw SchemaError(join(path_, k), "must be an object");
    return v;
  }

  const json* raw(const std::string& k) { return get(k); }

  std::string path(const std::string& k) const { return join(path_, k); }

  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw SchemaError(join(path_, it.key()), "unknown key");
  }

 private:
  const json* get(const std::string& k) {
    used_.insert(k);
    auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  T require(const std::string& k, const std::optional<T>& def) const {
    if (!def) throw SchemaError(join(path_, k), "is required");
    return *def;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(to_json(Vector(m.row(i).transpose())));
  return rows;
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

json law_json(const GaussianLaw& g) { return {{"mean", to_json(g.mean)}, {"cov", to_json(g.cov)}}; }

// ---------------------------------------------------------------------------
// Config pieces

json parse_init(const json* j, const std::string& path, int dim) {
  if (!j) return {{"type", "gaussian"}, {"mean", std::vector<double>(dim, 0.0)}, {"cov", to_json(Matrix(Matrix::Identity(dim, dim)))}};
  Fields f(*j, path);
  const std::string type = f.text("type", std::nullopt, {"dirac", "gaussian", "csv"});
  json out = {{"type", type}};
  auto vec = [&](const std::string& k, std::optional<std::vector<double>> def) {
    auto v = f.numbers(k, def);
    if (static_cast<int>(v.size()) != dim)
      throw SchemaError(f.path(k), "must have " + std::to_string(dim) + " entries (model dimension)");
    return v;
  };
  if (type == "dirac") {
    out["point"] = vec("point", std::nullopt);
  } else if (type == "gaussian") {
    out["mean"] = vec("mean", std::vector<double>(dim, 0.0));
    Matrix cov = f.has("cov") ? f.matrix("cov", dim) : Matrix(Matrix::Identity(dim, dim));
    try {
      GaussianLaw(Vector::Zero(dim), cov);
    } catch (const Error& e) {
      throw SchemaError(f.path("cov"), e.what());
    }
    out["cov"] = to_json(cov);
  } else {
    out["path"] = f.text("path");
  }
  f.done();
  return out;
}

EmpiricalMeasure make_measure(const json& spec, std::size_t n, std::uint64_t seed, const std::filesystem::path& base) {
  const std::string type = spec["type"];
  if (type == "dirac") return EmpiricalMeasure::dirac(to_vector(spec["point"].get<std::vector<double>>()), n);
  if (type == "gaussian") {
    const Vector mean = to_vector(spec["mean"].get<std::vector<double>>());
    const auto d = mean.size();
    Matrix cov(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) cov(i, j) = spec["cov"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return measures::sample_gaussian(GaussianLaw(mean, cov), n, seed);
  }
  std::filesystem::path p = spec["path"].get<std::string>();
  if (p.is_relative()) p = base / p;
  return measures::read_csv(p);
}

GaussianLaw gaussian_of(const json& spec) {
  const Vector mean = to_vector(spec["mean"].get<std::vector<double>>());
  Matrix cov(mean.size(), mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    for (Eigen::Index j = 0; j < mean.size(); ++j)
      cov(i, j) = spec["cov"][static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return GaussianLaw(mean, cov);
}

std::vector<double> snap_to_grid(const std::vector<double>& ts, double dt, const std::string& path) {
  std::vector<double> out;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] >= 0)) throw SchemaError(path + "[" + std::to_string(i) + "]", "must be >= 0");
    const double t = std::round(ts[i] / dt) * dt;
    if (!out.empty() && !(t > out.back()))
      throw SchemaError(path, "times must be strictly increasing after rounding to the dt grid");
    out.push_back(t);
  }
  return out;
}

std::vector<double> uniform_times(double t_end, double dt, std::size_t n) {
  std::vector<double> ts;
  const auto total = static_cast<std::uint64_t>(std::llround(t_end / dt));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::uint64_t>(std::llround(static_cast<double>(total) * i / (n - 1)));
    if (ts.empty() || k * dt > ts.back()) ts.push_back(static_cast<double>(k) * dt);
  }
  return ts;
}

json parse_params(const std::string& exp, const json* j, const ExperimentConfig& c, int dim, bool kinetic) {
  static const json empty = json::object();
  Fields f(j ? *j : empty, "params");
  json p;
  const double t_end = c.sim.t_end, dt = c.sim.dt;
  auto times = [&](const std::string& key, std::size_t n) {
    if (f.has(key)) return snap_to_grid(f.numbers(key), dt, f.path(key));
    f.numbers(key, std::vector<double>{});
    return uniform_times(t_end, dt, n);
  };
  auto point = [&](const std::string& key, std::optional<std::vector<double>> def) {
    auto v = f.numbers(key, def);
    if (static_cast<int>(v.size()) != dim)
      throw SchemaError(f.path(key), "must have " + std::to_string(dim) + " entries (model dimension)");
    return v;
  };
  auto burn_in = [&] {
    const double def = inv::default_burn_in(c.constants ? &*c.constants : nullptr);
    const double b = f.number("burn_in", def);
    if (!(b >= 0)) throw SchemaError(f.path("burn_in"), "must be >= 0");
    return b;
  };

  if (exp == "check") {
    p["condition"] = f.text("condition", kinetic ? "C" : "H", {"A", "H", "C"});
    p["n_pairs"] = f.count("n_pairs", 1000, 1);
    p["radius"] = f.positive("radius", 1.0);
    p["tolerance"] = f.number("tolerance", 1e-9);
    p["max_cloud"] = f.count("max_cloud", 8, 1);
  } else if (exp == "simulate") {
    p["mode"] = f.text("mode", "mean_field", {"mean_field", "frozen"});
    p["write_final"] = f.flag("write_final", true);
  } else if (exp == "phi") {
    p["burn_in"] = burn_in();
  } else if (exp == "fixed-point") {
    p["burn_in"] = burn_in();
    p["max_iter"] = f.count("max_iter", 8, 1);
    p["tol_factor"] = f.positive("tol_factor", 2.0);
    p["cap"] = f.count("cap", measures::kExactCap, 2);
  } else if (exp == "w2-decay") {
    p["sample_times"] = times("sample_times", 21);
    p["cap"] = f.count("cap", measures::kExactCap, 2);
    const json* ref = f.raw("reference");
    if (ref && ref->is_string()) {
      f.text("reference", std::nullopt, {"phi"});
      p["reference"] = "phi";
    } else if (ref) {
      p["reference"] = parse_init(ref, f.path("reference"), dim);
    } else {
      p["reference"] = "phi";
    }
    p["burn_in"] = burn_in();
  } else if (exp == "entropy-decay") {
    p["sample_times"] = times("sample_times", 21);
    if (const json* inv = f.object("invariant")) {
      json g = parse_init(inv, f.path("invariant"), dim);
      if (g["type"] != "gaussian") throw SchemaError(f.path("invariant.type"), "must be gaussian");
      p["invariant"] = g;
    }
  } else if (exp == "lsi-gap") {
    p["x"] = point("x", std::vector<double>(dim, 0.0));
    const auto ts = f.numbers("times", std::vector<double>{0.1, 0.5, 1.0});
    for (std::size_t i = 0; i < ts.size(); ++i)
      if (!(ts[i] > 0)) throw SchemaError(f.path("times") + "[" + std::to_string(i) + "]", "must be > 0");
    p["times"] = ts;
    p["n_mc"] = f.count("n_mc", 100000, 2);
    p["n_sigma"] = f.positive("n_sigma", 3.0);
  } else if (exp == "harnack") {
    p["x"] = point("x", std::nullopt);
    p["y"] = point("y", std::nullopt);
    p["t0"] = f.positive("t0", 1.0);
    if (f.has("p")) p["p"] = f.positive("p");
    p["n_paths"] = f.count("n_paths", 10000, 2);
    p["delta_stop"] = f.positive("delta_stop", 1e-3);
    p["clip"] = f.positive("clip", 1e6);
    if (p["delta_stop"].get<double>() >= p["t0"].get<double>()) throw SchemaError(f.path("delta_stop"), "must be < t0");
  } else if (exp == "kinetic") {
    p["entropy"] = f.flag("entropy", true);
    json g = json::object();
    if (const json* gj = f.object("grid")) {
      Fields gf(*gj, f.path("grid"));
      g["x_min"] = gf.number("x_min", -8.0);
      g["x_max"] = gf.number("x_max", 8.0);
      g["y_min"] = gf.number("y_min", -8.0);
      g["y_max"] = gf.number("y_max", 8.0);
      g["nx"] = gf.count("nx", 401, 3);
      g["ny"] = gf.count("ny", 401, 3);
      gf.done();
    } else {
      kin::GridSpec d;
      g = {{"x_min", d.x_min}, {"x_max", d.x_max}, {"y_min", d.y_min}, {"y_max", d.y_max}, {"nx", d.nx}, {"ny", d.ny}};
    }
    p["grid"] = g;
  } else if (exp == "regularization") {
    p["kind"] = f.text("kind", "yosida", {"yosida", "mollified"});
    p["levels"] = f.numbers("levels", std::vector<double>{1.0, 10.0, 100.0});
    for (double l : p["levels"].get<std::vector<double>>())
      if (!(l > 0)) throw SchemaError(f.path("levels"), "levels must be > 0");
    p["mollifier"] = f.text("mollifier", "uniform", {"uniform", "bump"});
    p["K"] = f.number("K", 0.0);
    p["panels"] = f.count("panels", 2, 1);
    p["mc_points"] = f.count("mc_points", 4096, 1);
    p["frozen"] = f.flag("frozen", false);
  }
  f.done();
  return p;
}

// ---------------------------------------------------------------------------
// Artifacts

class Output {
 public:
  explicit Output(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void text(const std::string& name, const std::string& contents) {
    csv::write_file(dir_ / name, contents);
    files_.push_back(name);
  }

  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

  void cloud(const std::string& name, const EmpiricalMeasure& mu) { text(name, measures::to_csv(mu)); }

  const std::vector<std::string>& files() const { return files_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

std::string series_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
  std::ostringstream os;
  csv::Writer w(os);
  w.header(header);
  for (const auto& r : rows) w.row(r);
  return os.str();
}

json fit_json(const ineq::DecaySeries& s) {
  json j = {{"floor", s.floor}, {"n_points", s.times.size()}};
  if (s.fit) {
    j["lambda"] = s.fit->lambda;
    j["c"] = s.fit->c;
    j["r2"] = s.fit->r2;
    j["points_used"] = s.fit->points_used;
    j["points_excluded"] = s.fit->points_excluded;
  } else {
    j["lambda"] = nullptr;
    j["note"] = "fewer than 3 points above the floor";
  }
  return j;
}

json moments_json(const EmpiricalMeasure& mu) { return law_json(measures::moment_match(mu)); }

const coeff::DissipativityConstants& need_constants(const ExperimentConfig& c) {
  if (!c.constants) throw SchemaError("constants", "is required for experiment '" + c.experiment + "'");
  return *c.constants;
}

/// Stationary law of dZ = AZ dt + S dW from A Σ + Σ Aᵀ + S Sᵀ = 0.
GaussianLaw lyapunov_invariant(const ineq::LinearSpec& spec) {
  const auto n = spec.A.rows();
  Matrix L = Matrix::Zero(n * n, n * n);
  const Matrix I = Matrix::Identity(n, n);
  // column-major vec: vec(AΣ) = (I⊗A) vec Σ, vec(ΣAᵀ) = (A⊗I) vec Σ
  for (Eigen::Index j = 0; j < n; ++j) {
    L.block(j * n, j * n, n, n) += spec.A;
    for (Eigen::Index k = 0; k < n; ++k) L.block(j * n, k * n, n, n) += spec.A(j, k) * I;
  }
  const Matrix Q = spec.S * spec.S.transpose();
  const Vector rhs = -Eigen::Map<const Vector>(Q.data(), n * n);
  Eigen::FullPivLU<Matrix> lu(L);
  if (!lu.isInvertible()) throw InvalidArgument("linear dynamics have no unique stationary law");
  Vector s = lu.solve(rhs);
  Matrix cov = Eigen::Map<Matrix>(s.data(), n, n);
  cov = 0.5 * (cov + cov.transpose());
  return GaussianLaw(Vector::Zero(n), cov);
}

// ---------------------------------------------------------------------------
// Experiments

struct Context {
  const ExperimentConfig& cfg;
  const coeff::CoefficientModel& model;
  EmpiricalMeasure init;
  Output& out;
  json& summary;
};

int run_check(Context& x) {
  const auto& p = x.cfg.params;
  coeff::CheckOptions o;
  o.n_pairs = p["n_pairs"];
  o.radius = p["radius"];
  o.seed = x.cfg.seed;
  o.tolerance = p["tolerance"];
  o.max_cloud = p["max_cloud"];
  const std::string cond = p["condition"];
  coeff::ConditionReport r;
  if (cond == "C") {
    if (!x.cfg.kinetic_constants) throw SchemaError("kinetic_constants", "is required for condition C");
    r = coeff::check_kinetic_C(x.model, *x.cfg.kinetic_constants, x.cfg.kinetic_KI, o);
    x.summary["c_psi"] = kin::c_psi(*x.cfg.kinetic_constants);
  } else if (cond == "A") {
    r = coeff::check_monotonicity_A(x.model, need_constants(x.cfg), o);
  } else {
    r = coeff::check_partial_dissipativity_H(x.model, need_constants(x.cfg), o);
  }
  json j = {{"condition", cond},        {"satisfied", r.satisfied}, {"worst_violation", r.worst_violation},
            {"n_samples", r.n_samples}, {"tolerance", r.tolerance}};
  if (r.witness) {
    json w = {{"condition", r.witness->condition}, {"x", to_json(r.witness->x)}, {"y", to_json(r.witness->y)}};
    w["gamma"] = to_json(Matrix(r.witness->gamma));
    w["gamma_tilde"] = to_json(Matrix(r.witness->gamma_tilde));
    j["witness"] = w;
  }
  x.summary["report"] = j;
  x.out.json_file("report.json", j);
  return r.satisfied ? exit_code::ok : exit_code::violated;
}

int run_simulate(Context& x) {
  const auto& p = x.cfg.params;
  const int d = x.model.dim;
  std::vector<std::string> header{"t"};
  for (int i = 0; i < d; ++i) header.push_back("mean_" + std::to_string(i));
  header.push_back("second_moment");
  std::vector<std::vector<double>> rows;
  auto observe = [&](double t, const RowMatrix& s) {
    std::vector<double> r{t};
    const Vector m = s.colwise().mean().transpose();
    for (int i = 0; i < d; ++i) r.push_back(m(i));
    r.push_back(s.rowwise().squaredNorm().mean());
    rows.push_back(std::move(r));
  };
  const EmpiricalMeasure final = p["mode"] == "frozen"
                                     ? sim::simulate_frozen(x.model, x.init, x.init, x.cfg.sim, observe)
                                     : sim::simulate_mean_field(x.model, x.init, x.cfg.sim, observe);
  x.out.text("moments.csv", series_csv(header, rows));
  if (p["write_final"].get<bool>()) x.out.cloud("final.csv", final);
  x.summary["final"] = moments_json(final);
  x.summary["scheme"] = sim::to_string(x.cfg.sim.scheme_for(x.model));
  return exit_code::ok;
}

int run_phi(Context& x) {
  const auto* c = x.cfg.constants ? &*x.cfg.constants : nullptr;
  const auto r = inv::phi(x.model, x.init, x.cfg.sim, x.cfg.params["burn_in"], c);
  std::vector<std::string> header{"t", "second_moment"};
  if (!r.exp_moment.empty()) header.push_back("exp_moment");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < r.times.size(); ++i) {
    rows.push_back({r.times[i], r.second_moment[i]});
    if (!r.exp_moment.empty()) rows.back().push_back(r.exp_moment[i]);
  }
  x.out.text("trace.csv", series_csv(header, rows));
  x.out.cloud("phi.csv", r.cloud);
  x.summary["burn_in"] = r.burn_in_used;
  x.summary["second_moment_drift"] = r.second_moment_drift;
  x.summary["stabilized"] = r.stabilized;
  if (c) {
    x.summary["epsilon"] = r.epsilon;
    x.summary["exp_moment_drift"] = r.exp_moment_drift;
    x.summary["exp_overflow"] = r.exp_overflow;
  }
  x.summary["law"] = moments_json(r.cloud);
  return exit_code::ok;
}

int run_fixed_point(Context& x) {
  const auto& p = x.cfg.params;
  const double burn = p["burn_in"];
  const std::size_t cap = p["cap"];
  const double floor = inv::mc_floor(x.model, x.init, x.cfg.sim, burn, cap);
  const double tol = p["tol_factor"].get<double>() * floor;
  const auto r = inv::picard_fixed_point(x.model, x.init, x.cfg.sim, burn, tol, p["max_iter"], floor, cap);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < r.gaps.size(); ++i) rows.push_back({static_cast<double>(i + 1), r.gaps[i]});
  x.out.text("gaps.csv", series_csv({"iteration", "w2_gap"}, rows));
  x.out.cloud("fixed_point.csv", r.cloud);
  x.summary["floor"] = r.floor;
  x.summary["tolerance"] = tol;
  x.summary["converged"] = r.converged;
  x.summary["iterations"] = r.gaps.size();
  x.summary["law"] = moments_json(r.cloud);
  return r.converged ? exit_code::ok : exit_code::violated;
}

int run_w2_decay(Context& x) {
  const auto& p = x.cfg.params;
  const auto times = p["sample_times"].get<std::vector<double>>();
  EmpiricalMeasure ref;
  if (p["reference"].is_string()) {
    ref = inv::phi(x.model, x.init, x.cfg.sim, p["burn_in"], nullptr).cloud;
  } else {
    ref = make_measure(p["reference"], x.cfg.sim.n_particles, x.cfg.seed ^ 0x7265665f6c617721ULL, {});
  }
  const auto s = ineq::w2_decay_experiment(x.model, x.init, ref, x.cfg.sim, times, p["cap"]);
  // analytic comparison column when the point-mass OU oracle applies
  const bool oracle = x.cfg.model_name == "ou" && x.model.dim == 1 && x.cfg.init["type"] == "dirac";
  std::vector<std::string> header{"t", "w2"};
  if (oracle) header.push_back("oracle_w2");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < s.times.size(); ++i) {
    rows.push_back({s.times[i], s.values[i]});
    if (oracle)
      rows.back().push_back(ineq::ou_point_w2(x.cfg.init["point"][0].get<double>(), x.cfg.model_params.at("theta"),
                                              x.cfg.model_params.at("sigma"), s.times[i]));
  }
  x.out.text("series.csv", series_csv(header, rows));
  json fit = fit_json(s);
  x.out.json_file("fit.json", fit);
  x.summary["fit"] = fit;
  return exit_code::ok;
}

int run_entropy_decay(Context& x) {
  const auto& p = x.cfg.params;
  if (x.cfg.init["type"] != "gaussian") throw SchemaError("init.type", "entropy-decay needs a gaussian initial law");
  const auto spec = ineq::linear_spec(x.model);
  const GaussianLaw target = p.contains("invariant") ? gaussian_of(p["invariant"]) : lyapunov_invariant(spec);
  const auto s = ineq::entropy_decay_experiment(spec, gaussian_of(x.cfg.init), target,
                                                p["sample_times"].get<std::vector<double>>());
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < s.times.size(); ++i) rows.push_back({s.times[i], s.values[i]});
  x.out.text("series.csv", series_csv({"t", "entropy"}, rows));
  json fit = fit_json(s);
  x.out.json_file("fit.json", fit);
  x.summary["fit"] = fit;
  x.summary["invariant"] = law_json(target);
  return exit_code::ok;
}

int run_lsi_gap(Context& x) {
  const auto& p = x.cfg.params;
  const auto& c = need_constants(x.cfg);
  const Vector pt = to_vector(p["x"].get<std::vector<double>>());
  const double n_sigma = p["n_sigma"];
  std::ostringstream os;
  csv::Writer w(os);
  w.header({"function", "t", "lhs", "rhs", "stderr_lhs", "stderr_rhs", "holds"});
  bool all = true;
  json rows = json::array();
  for (const auto& f : ineq::lsi_test_bank())
    for (double t : p["times"].get<std::vector<double>>()) {
      const auto r = ineq::semigroup_lsi_gap(x.model, x.init, f, pt, t, p["n_mc"], c, x.cfg.sim);
      const bool ok = r.holds(n_sigma);
      all = all && ok;
      w.row(f.name, {t, r.lhs, r.rhs, r.stderr_lhs, r.stderr_rhs, ok ? 1.0 : 0.0});
      rows.push_back({{"function", f.name}, {"t", t}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"holds", ok}});
    }
  x.out.text("lsi.csv", os.str());
  x.summary["rows"] = rows;
  x.summary["all_hold"] = all;
  return all ? exit_code::ok : exit_code::violated;
}

int run_harnack(Context& x) {
  const auto& p = x.cfg.params;
  const auto& c = need_constants(x.cfg);
  ineq::HarnackOptions o;
  o.delta_stop = p["delta_stop"];
  o.clip = p["clip"];
  const double pp = p.contains("p") ? p["p"].get<double>() : ineq::harnack_p0(c);
  const auto r = ineq::harnack_coupling(x.model, x.init, c, to_vector(p["x"].get<std::vector<double>>()),
                                        to_vector(p["y"].get<std::vector<double>>()), p["t0"], pp, x.cfg.sim,
                                        p["n_paths"], o);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < r.times.size(); ++i) rows.push_back({r.times[i], r.mean_gap[i]});
  x.out.text("gap.csv", series_csv({"t", "mean_gap"}, rows));
  const bool ok = r.r_moment_estimate <= r.r_moment_bound;
  x.summary["terminal_gap"] = r.terminal_gap;
  x.summary["terminal_gap_mean"] = r.terminal_gap_mean;
  x.summary["r_moment_estimate"] = r.r_moment_estimate;
  x.summary["r_moment_stderr"] = r.r_moment_stderr;
  x.summary["r_moment_bound"] = r.r_moment_bound;
  x.summary["margin"] = r.r_moment_bound - r.r_moment_estimate;
  x.summary["p"] = r.p_used;
  x.summary["p0"] = r.p0;
  x.summary["n_paths"] = r.n_paths;
  x.summary["clipped_paths"] = r.clipped_paths;
  x.summary["excluded_paths"] = r.excluded_paths;
  x.summary["bound_holds"] = ok;
  return ok ? exit_code::ok : exit_code::violated;
}

int run_kinetic(Context& x) {
  const auto& p = x.cfg.params;
  const auto& gk = x.model.gradient_kinetic;
  const bool entropy = p["entropy"].get<bool>() && gk && gk->d == 1;
  kin::GridSpec grid;
  const auto& g = p["grid"];
  grid.x_min = g["x_min"];
  grid.x_max = g["x_max"];
  grid.y_min = g["y_min"];
  grid.y_max = g["y_max"];
  grid.nx = g["nx"];
  grid.ny = g["ny"];

  const int d = x.model.position_dim();
  std::vector<std::string> header{"t"};
  for (int i = 0; i < d; ++i) header.push_back("var_x" + std::to_string(i));
  for (int i = 0; i < d; ++i) header.push_back("var_y" + std::to_string(i));
  header.push_back("second_moment");
  std::vector<std::vector<double>> rows;
  std::vector<GaussianLaw> laws;
  const EmpiricalMeasure final = kin::simulate_kinetic(x.model, x.init, x.cfg.sim, [&](double t, const RowMatrix& s) {
    const auto law = measures::moment_match(EmpiricalMeasure(s));
    std::vector<double> r{t};
    for (int i = 0; i < 2 * d; ++i) r.push_back(law.cov(i, i));
    r.push_back(s.rowwise().squaredNorm().mean());
    rows.push_back(std::move(r));
    if (entropy) laws.push_back(law);
  });
  x.summary["final"] = moments_json(final);
  if (entropy) {
    // the density is evaluated at the terminal cloud, which is its own fixed point in the long run
    const auto rho = kin::explicit_invariant_density(*gk, final, grid);
    header.push_back("entropy");
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double e = std::numeric_limits<double>::quiet_NaN();
      if (laws[i].cov.determinant() > 1e-12) {
        try {
          e = kin::grid_entropy(laws[i], rho);
        } catch (const InvalidArgument&) {
          // law not yet inside the grid
        }
      }
      rows[i].push_back(e);
    }
    x.summary["log_partition"] = rho.log_partition;
    x.summary["density"] = law_json(rho.moments());
  }
  if (x.cfg.kinetic_constants) x.summary["c_psi"] = kin::c_psi(*x.cfg.kinetic_constants);
  x.out.text("series.csv", series_csv(header, rows));
  return exit_code::ok;
}

int run_regularization(Context& x) {
  const auto& p = x.cfg.params;
  std::vector<sim::Regularization> levels;
  for (double l : p["levels"].get<std::vector<double>>()) {
    sim::Regularization r;
    r.kind = p["kind"] == "yosida" ? sim::Regularization::Kind::yosida : sim::Regularization::Kind::mollified;
    r.level = l;
    r.K = p["K"];
    r.rho = p["mollifier"] == "bump" ? sim::Mollifier::bump : sim::Mollifier::uniform;
    r.quad.panels = p["panels"];
    r.quad.mc_points = p["mc_points"];
    r.quad.seed = x.cfg.seed;
    levels.push_back(r);
  }
  std::optional<EmpiricalMeasure> frozen;
  if (p["frozen"].get<bool>()) frozen = x.init;
  const auto rows = sim::regularization_convergence(x.model, levels, x.init, x.cfg.sim, frozen);
  std::ostringstream os;
  csv::Writer w(os);
  w.header({"label", "level", "ms_gap", "rms_gap"});
  bool monotone = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    w.row(rows[i].label, {rows[i].level, rows[i].ms_gap, rows[i].rms_gap});
    if (i > 0 && rows[i].level > rows[i - 1].level && rows[i].ms_gap > rows[i - 1].ms_gap) monotone = false;
  }
  x.out.text("rows.csv", os.str());
  x.summary["monotone"] = monotone;
  return monotone ? exit_code::ok : exit_code::violated;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"check",         "simulate", "phi",     "fixed-point",
                                              "w2-decay",      "entropy-decay", "lsi-gap", "harnack",
                                              "kinetic",       "regularization"};
  return names;
}

ExperimentConfig parse_config(const json& doc, const std::string& experiment) {
  ExperimentConfig c;
  c.source = doc;
  Fields top(doc, "");
  if (top.has("experiment")) {
    c.experiment = top.text("experiment", std::nullopt, experiment_names());
    if (!experiment.empty() && experiment != c.experiment)
      throw SchemaError("experiment", "config says '" + c.experiment + "' but the subcommand is '" + experiment + "'");
  } else {
    top.raw("experiment");
    if (experiment.empty()) throw SchemaError("experiment", "is required");
    c.experiment = experiment;
  }
  c.seed = top.count("seed", 0);
  c.output_dir = top.text("output_dir", "out");

  const json* mj = top.object("model");
  if (!mj) throw SchemaError("model", "is required");
  Fields mf(*mj, "model");
  std::vector<std::string> names;
  for (const auto& b : coeff::builtin_catalog()) names.push_back(b.name);
  c.model_name = mf.text("name", std::nullopt, names);
  const coeff::BuiltinInfo* info = nullptr;
  for (const auto& b : coeff::builtin_catalog())
    if (b.name == c.model_name) info = &b;
  for (const auto& pi : info->params) c.model_params[pi.name] = pi.default_value;
  if (const json* pj = mf.object("params")) {
    Fields pf(*pj, "model.params");
    for (auto it = pj->begin(); it != pj->end(); ++it) {
      if (!c.model_params.count(it.key())) continue;  // reported by done()
      c.model_params[it.key()] = pf.number(it.key());
    }
    pf.done();
  }
  mf.done();
  coeff::CoefficientModel model;
  try {
    model = coeff::builtin_model(c.model_name, c.model_params);
  } catch (const InvalidArgument& e) {
    throw SchemaError("model.params", e.what());
  }

  static const json empty = json::object();
  const json* sj = top.object("sim");
  Fields sf(sj ? *sj : empty, "sim");
  c.sim.dt = sf.positive("dt", c.sim.dt);
  c.sim.t_end = sf.positive("t_end", c.sim.t_end);
  c.sim.n_particles = sf.count("n_particles", c.sim.n_particles, 1);
  c.sim.record_every = sf.count("record_every", c.sim.record_every, 1);
  c.sim.interaction_batch = sf.count("interaction_batch", 0);
  if (sf.has("scheme")) c.sim.scheme = sim::parse_scheme(sf.text("scheme", std::nullopt, {"euler", "tamed_euler"}));
  sf.done();
  c.sim.seed = c.seed;
  try {
    c.sim.validate();
  } catch (const InvalidArgument& e) {
    throw SchemaError("sim", e.what());
  }

  if (const json* kj = top.object("constants")) {
    Fields kf(*kj, "constants");
    coeff::DissipativityConstants k;
    k.K1 = kf.number("K1", k.K1);
    k.K2 = kf.number("K2", k.K2);
    k.KI = kf.number("KI", k.KI);
    k.r0 = kf.number("r0", k.r0);
    k.delta1 = kf.number("delta1", k.delta1);
    k.delta2 = kf.number("delta2", k.delta2);
    kf.done();
    try {
      k.validate();
    } catch (const InvalidArgument& e) {
      throw SchemaError("constants", e.what());
    }
    c.constants = k;
  }
  if (const json* kj = top.object("kinetic_constants")) {
    Fields kf(*kj, "kinetic_constants");
    coeff::KineticConstants k;
    k.r = kf.number("r", k.r);
    k.r0 = kf.number("r0", k.r0);
    k.theta = kf.number("theta", k.theta);
    k.R = kf.number("R", k.R);
    k.KM = kf.number("KM", k.KM);
    c.kinetic_KI = kf.number("KI", 0.0);
    kf.done();
    try {
      k.validate();
    } catch (const InvalidArgument& e) {
      throw SchemaError("kinetic_constants", e.what());
    }
    c.kinetic_constants = k;
  }
  c.init = parse_init(top.object("init"), "init", model.dim);
  c.params = parse_params(c.experiment, top.object("params"), c, model.dim, model.kind == coeff::Kind::kinetic);
  top.done();
  if (c.experiment == "kinetic" && model.kind != coeff::Kind::kinetic)
    throw SchemaError("model.name", "experiment 'kinetic' needs a kinetic model");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& experiment) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("<root>", std::string("invalid JSON: ") + e.what());
  }
  auto c = parse_config(doc, experiment);
  // relative csv paths resolve against the config's directory
  auto fix = [&](json& spec) {
    if (spec.is_object() && spec.value("type", "") == "csv") {
      std::filesystem::path p = spec["path"].get<std::string>();
      if (p.is_relative()) spec["path"] = (path.parent_path() / p).string();
    }
  };
  fix(c.init);
  if (c.params.contains("reference")) fix(c.params["reference"]);
  return c;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const auto model = coeff::builtin_model(cfg.model_name, cfg.model_params);
  Output out(out_dir);
  RunOutcome r;
  r.summary = {{"experiment", cfg.experiment}, {"model", cfg.model_name}};
  Context x{cfg, model, make_measure(cfg.init, cfg.sim.n_particles, cfg.seed, {}), out, r.summary};
  const std::string& e = cfg.experiment;
  if (e == "check") r.exit_code = run_check(x);
  else if (e == "simulate") r.exit_code = run_simulate(x);
  else if (e == "phi") r.exit_code = run_phi(x);
  else if (e == "fixed-point") r.exit_code = run_fixed_point(x);
  else if (e == "w2-decay") r.exit_code = run_w2_decay(x);
  else if (e == "entropy-decay") r.exit_code = run_entropy_decay(x);
  else if (e == "lsi-gap") r.exit_code = run_lsi_gap(x);
  else if (e == "harnack") r.exit_code = run_harnack(x);
  else if (e == "kinetic") r.exit_code = run_kinetic(x);
  else if (e == "regularization") r.exit_code = run_regularization(x);
  else throw SchemaError("experiment", "unknown experiment '" + e + "'");
  r.summary["exit_code"] = r.exit_code;
  out.json_file("summary.json", r.summary);

  json resolved = {{"experiment", cfg.experiment},
                   {"seed", cfg.seed},
                   {"model", {{"name", cfg.model_name}, {"params", cfg.model_params}}},
                   {"sim",
                    {{"dt", cfg.sim.dt},
                     {"t_end", cfg.sim.t_end},
                     {"n_particles", cfg.sim.n_particles},
                     {"record_every", cfg.sim.record_every},
                     {"interaction_batch", cfg.sim.interaction_batch},
                     {"scheme", sim::to_string(cfg.sim.scheme_for(model))}}},
                   {"init", cfg.init},
                   {"params", cfg.params}};
  json manifest = {{"tool", "mv-ergo"},
                   {"version", MVLAB_VERSION},
                   {"build", MVLAB_BUILD_HASH},
                   {"config", cfg.source},
                   {"resolved", resolved},
                   {"files", out.files()}};
  out.json_file("manifest.json", manifest);
  r.files = out.files();
  r.files.push_back("manifest.json");
  return r;
}

namespace {
std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
}  // namespace

std::string list_models() {
  std::ostringstream os;
  os << std::left << std::setw(18) << "model" << std::setw(12) << "parameter" << std::setw(20) << "default"
     << "description\n";
  for (const auto& b : coeff::builtin_catalog()) {
    os << std::setw(18) << b.name << std::setw(12) << "" << std::setw(20) << "" << b.summary << "\n";
    for (const auto& pi : b.params)
      os << std::setw(18) << "" << std::setw(12) << pi.name << std::setw(20) << shortest(pi.default_value)
         << pi.description << "\n";
  }
  return os.str();
}

std::string version_string() { return std::string(MVLAB_VERSION) + " (" + MVLAB_BUILD_HASH + ")"; }

}  // namespace mvlab::lab
