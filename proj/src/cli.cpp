#include "lama/cli.hpp"

#include "lama/container_io.hpp"
#include "lama/initnet.hpp"
#include "lama/metrics.hpp"
#include "lama/solver.hpp"

#include <CLI11.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

namespace lama {

namespace {

namespace fs = std::filesystem;

long long parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad integer for '" + key + "': '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad unsigned integer for '" + key + "': '" + v + "'");
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("bad number for '" + key + "': '" + v + "'");
  }
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + v + "'");
}

bool is_flag_key(const std::string& key) {
  return key == "baseline_only" || key == "inject_adjoint_fault";
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

Geometry make_geometry(const RunConfig& cfg) {
  Geometry geo;
  geo.image_size = cfg.image_size;
  geo.n_detectors = cfg.n_detectors == 0 ? cfg.image_size : cfg.n_detectors;
  geo.n_views_full = cfg.n_views;
  geo.detector_spacing = cfg.detector_spacing;
  geo.pixel_spacing = cfg.pixel_spacing;
  return geo;
}

ViewSelector make_selector(const RunConfig& cfg) {
  ViewSelector sel;
  sel.rate = cfg.rate;
  sel.offset = 0;
  sel.full_view_count = cfg.n_views;
  return sel;
}

RegularizerNet make_net(const std::string& spec, const RunConfig& cfg,
                        std::uint64_t salt) {
  if (spec == "tv") return tv_net(cfg.activation_knee);
  if (spec == "identity") return identity_net();
  if (spec == "zero") return zero_net();
  if (spec == "random") return random_net(cfg.seed ^ salt, 2, 4, 3,
                                          cfg.activation_knee);
  return load_net(spec);
}

struct SimulatedScan {
  Image phantom;   // clean ground truth
  Image sample;    // phantom plus optional noise; what gets projected
  Sinogram full;
  Sinogram sparse;
};

SimulatedScan simulate_scan(const RunConfig& cfg) {
  SimulatedScan s;
  s.phantom = shepp_logan(cfg.image_size);
  s.sample = s.phantom;
  if (cfg.noise_std > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, cfg.noise_std);
    for (Eigen::Index i = 0; i < s.sample.rows(); ++i)
      for (Eigen::Index j = 0; j < s.sample.cols(); ++j)
        s.sample(i, j) += gauss(rng);
  }
  s.full = project(s.sample, make_geometry(cfg));
  s.sparse = select_views(s.full, make_selector(cfg));
  return s;
}

SolverConfig make_solver_config(const RunConfig& rc, const Problem& p) {
  SolverConfig s;
  if (rc.alpha <= 0.0 || rc.beta <= 0.0 || rc.alpha_hat < 0.0 ||
      rc.beta_hat < 0.0)
    s = default_config(p);
  if (rc.alpha > 0.0) s.alpha = rc.alpha;
  if (rc.beta > 0.0) s.beta = rc.beta;
  if (rc.alpha_hat >= 0.0) s.alpha_hat = rc.alpha_hat;
  if (rc.beta_hat >= 0.0) s.beta_hat = rc.beta_hat;
  s.alpha_bar0 = rc.alpha_bar0;
  s.beta_bar0 = rc.beta_bar0;
  s.rho = rc.rho;
  s.delta = rc.delta;
  s.eta = rc.eta;
  s.sigma = rc.sigma;
  s.gamma = rc.gamma;
  s.eps0 = rc.eps0;
  s.eps_tol = rc.eps_tol;
  s.stationary_tol = rc.stationary_tol;
  s.max_iters = rc.max_iters;
  s.max_backtracks = rc.max_backtracks;
  s.validate();
  return s;
}

void write_metrics(const MetricReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "'");
  out << metric_csv_header() << "\n" << metric_csv_row(rep) << "\n";
}

}  // namespace

void RunConfig::validate() const {
  try {
    make_geometry(*this).validate();
    make_selector(*this).validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (reg_x.empty() || reg_z.empty() || initializer.empty())
    throw ConfigError("regularizer and initializer must be set");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "image_size",    "n_detectors",     "n_views",
      "detector_spacing", "pixel_spacing", "rate",
      "noise_std",     "seed",            "lambda",
      "activation_knee", "reg_x",         "reg_z",
      "initializer",   "baseline_only",   "inject_adjoint_fault",
      "output_dir",    "alpha",           "beta",
      "alpha_hat",     "beta_hat",        "alpha_bar0",
      "beta_bar0",     "rho",             "delta",
      "eta",           "sigma",           "gamma",
      "eps0",          "eps_tol",         "stationary_tol",
      "max_iters",     "max_backtracks"};
  return keys;
}

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "image_size") cfg.image_size = parse_int(value, key);
  else if (key == "n_detectors") cfg.n_detectors = parse_int(value, key);
  else if (key == "n_views") cfg.n_views = parse_int(value, key);
  else if (key == "detector_spacing") cfg.detector_spacing = parse_double(value, key);
  else if (key == "pixel_spacing") cfg.pixel_spacing = parse_double(value, key);
  else if (key == "rate") cfg.rate = parse_int(value, key);
  else if (key == "noise_std") cfg.noise_std = parse_double(value, key);
  else if (key == "seed") cfg.seed = parse_u64(value, key);
  else if (key == "lambda") cfg.lambda = parse_double(value, key);
  else if (key == "activation_knee") cfg.activation_knee = parse_double(value, key);
  else if (key == "reg_x") cfg.reg_x = value;
  else if (key == "reg_z") cfg.reg_z = value;
  else if (key == "initializer") cfg.initializer = value;
  else if (key == "baseline_only") cfg.baseline_only = parse_bool(value, key);
  else if (key == "inject_adjoint_fault") cfg.inject_adjoint_fault = parse_bool(value, key);
  else if (key == "output_dir") cfg.output_dir = value;
  else if (key == "alpha") cfg.alpha = parse_double(value, key);
  else if (key == "beta") cfg.beta = parse_double(value, key);
  else if (key == "alpha_hat") cfg.alpha_hat = parse_double(value, key);
  else if (key == "beta_hat") cfg.beta_hat = parse_double(value, key);
  else if (key == "alpha_bar0") cfg.alpha_bar0 = parse_double(value, key);
  else if (key == "beta_bar0") cfg.beta_bar0 = parse_double(value, key);
  else if (key == "rho") cfg.rho = parse_double(value, key);
  else if (key == "delta") cfg.delta = parse_double(value, key);
  else if (key == "eta") cfg.eta = parse_double(value, key);
  else if (key == "sigma") cfg.sigma = parse_double(value, key);
  else if (key == "gamma") cfg.gamma = parse_double(value, key);
  else if (key == "eps0") cfg.eps0 = parse_double(value, key);
  else if (key == "eps_tol") cfg.eps_tol = parse_double(value, key);
  else if (key == "stationary_tol") cfg.stationary_tol = parse_double(value, key);
  else if (key == "max_iters") cfg.max_iters = static_cast<int>(parse_int(value, key));
  else if (key == "max_backtracks") cfg.max_backtracks = static_cast<int>(parse_int(value, key));
  else throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "'");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "image_size = " << cfg.image_size << "\n";
  out << "n_detectors = " << cfg.n_detectors << "\n";
  out << "n_views = " << cfg.n_views << "\n";
  out << "detector_spacing = " << cfg.detector_spacing << "\n";
  out << "pixel_spacing = " << cfg.pixel_spacing << "\n";
  out << "rate = " << cfg.rate << "\n";
  out << "noise_std = " << cfg.noise_std << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "lambda = " << cfg.lambda << "\n";
  out << "activation_knee = " << cfg.activation_knee << "\n";
  out << "reg_x = " << cfg.reg_x << "\n";
  out << "reg_z = " << cfg.reg_z << "\n";
  out << "initializer = " << cfg.initializer << "\n";
  out << "baseline_only = " << (cfg.baseline_only ? "true" : "false") << "\n";
  out << "inject_adjoint_fault = "
      << (cfg.inject_adjoint_fault ? "true" : "false") << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  out << "alpha = " << cfg.alpha << "\n";
  out << "beta = " << cfg.beta << "\n";
  out << "alpha_hat = " << cfg.alpha_hat << "\n";
  out << "beta_hat = " << cfg.beta_hat << "\n";
  out << "alpha_bar0 = " << cfg.alpha_bar0 << "\n";
  out << "beta_bar0 = " << cfg.beta_bar0 << "\n";
  out << "rho = " << cfg.rho << "\n";
  out << "delta = " << cfg.delta << "\n";
  out << "eta = " << cfg.eta << "\n";
  out << "sigma = " << cfg.sigma << "\n";
  out << "gamma = " << cfg.gamma << "\n";
  out << "eps0 = " << cfg.eps0 << "\n";
  out << "eps_tol = " << cfg.eps_tol << "\n";
  out << "stationary_tol = " << cfg.stationary_tol << "\n";
  out << "max_iters = " << cfg.max_iters << "\n";
  out << "max_backtracks = " << cfg.max_backtracks << "\n";
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

int cmd_simulate(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  const Geometry geo = make_geometry(cfg);
  const ViewSelector sel = make_selector(cfg);
  const SimulatedScan scan = simulate_scan(cfg);
  const std::string dir = cfg.output_dir;

  Container c;
  c.add_matrix("phantom", scan.phantom);
  if (cfg.noise_std > 0.0) {
    const Sinogram clean_full = project(scan.phantom, geo);
    c.add_matrix("sinogram_full", clean_full);
    c.add_matrix("sinogram_sparse", select_views(clean_full, sel));
    c.add_matrix("phantom_noisy", scan.sample);
    c.add_matrix("sinogram_full_noisy", scan.full);
    c.add_matrix("sinogram_sparse_noisy", scan.sparse);
  } else {
    c.add_matrix("sinogram_full", scan.full);
    c.add_matrix("sinogram_sparse", scan.sparse);
  }
  save_container(c, dir + "/simulation.lama");
  save_pgm(scan.phantom, dir + "/phantom.pgm", 0.0, 1.0);
  write_config(cfg, dir + "/config_used.cfg");
  return kExitOk;
}

int cmd_reconstruct(const RunConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.output_dir);
  const Geometry geo = make_geometry(cfg);
  const ViewSelector sel = make_selector(cfg);
  const SimulatedScan scan = simulate_scan(cfg);
  const std::string dir = cfg.output_dir;

  Problem p;
  p.geometry = geo;
  p.selector = sel;
  p.measured = scan.sparse;
  p.lambda = cfg.lambda;
  p.reg_x = make_net(cfg.reg_x, cfg, 0x78u);
  p.reg_z = make_net(cfg.reg_z, cfg, 0x7au);
  p.validate();

  Image x0;
  Sinogram z0;
  if (cfg.initializer == "zero-fill") {
    z0 = embed_views(scan.sparse, sel);
    x0 = fbp(z0, geo);
  } else {
    ViewShiftOperator op;
    if (cfg.initializer == "linear")
      op = linear_interp_operator(cfg.rate);
    else if (cfg.initializer == "nearest")
      op = nearest_operator();
    else
      op = learned_operator(load_net(cfg.initializer));
    std::tie(x0, z0) = init_reconstruct(op, scan.sparse, sel, geo);
  }

  // quality is always measured against the clean ground truth
  const Sinogram z_ref =
      cfg.noise_std > 0.0 ? project(scan.phantom, geo) : scan.full;

  Container out;
  out.add_matrix("x0", x0);
  out.add_matrix("z0", z0);
  if (cfg.baseline_only) {
    save_container(out, dir + "/reconstruction.lama");
    save_pgm(x0, dir + "/x0.pgm", 0.0, 1.0);
    write_metrics(evaluate(x0, scan.phantom, z0, z_ref),
                  dir + "/metrics.csv");
    write_config(cfg, dir + "/config_used.cfg");
    return kExitOk;
  }

  const SolverConfig scfg = make_solver_config(cfg, p);
  const SolveResult result = lama_solve(p, x0, z0, scfg);

  out.add_matrix("x", result.final.x);
  out.add_matrix("z", result.final.z);
  save_container(out, dir + "/reconstruction.lama");
  save_pgm(x0, dir + "/x0.pgm", 0.0, 1.0);
  save_pgm(result.final.x, dir + "/x.pgm", 0.0, 1.0);
  export_csv_trace(result.trace, dir + "/trace.csv");
  write_metrics(evaluate(result.final.x, scan.phantom, result.final.z, z_ref),
                dir + "/metrics.csv");
  write_config(cfg, dir + "/config_used.cfg");
  return kExitOk;
}

namespace {

/// Central finite-difference gradient of a scalar field, for the verify
/// battery only; tolerances assume double precision and smooth branches.
template <typename F>
Eigen::MatrixXd fd_gradient(F&& value_of, Eigen::MatrixXd at, double h) {
  Eigen::MatrixXd g(at.rows(), at.cols());
  for (Eigen::Index i = 0; i < at.rows(); ++i)
    for (Eigen::Index j = 0; j < at.cols(); ++j) {
      const double orig = at(i, j);
      at(i, j) = orig + h;
      const double fp = value_of(at);
      at(i, j) = orig - h;
      const double fm = value_of(at);
      at(i, j) = orig;
      g(i, j) = (fp - fm) / (2.0 * h);
    }
  return g;
}

double rel_error(const Eigen::MatrixXd& approx, const Eigen::MatrixXd& exact) {
  return (approx - exact).norm() / std::max(exact.norm(), 1e-12);
}

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                              std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  return m;
}

}  // namespace

int cmd_verify(const RunConfig& cfg, std::ostream& report) {
  bool all_ok = true;
  auto check = [&](const std::string& name, bool ok,
                   const std::string& detail) {
    report << (ok ? "PASS " : "FAIL ") << name;
    if (!ok && !detail.empty()) report << " (" << detail << ")";
    report << "\n";
    all_ok = all_ok && ok;
  };
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      check(name, false, e.what());
    }
  };

  guarded("adjoint-identity", [&] {
    Geometry geo;
    geo.image_size = 24;
    geo.n_detectors = 24;
    geo.n_views_full = 32;
    std::mt19937_64 rng(42);
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Image x = random_matrix(24, 24, rng);
      const Sinogram zr = random_matrix(32, 24, rng);
      const Sinogram ax = project(x, geo);
      Image atz = backproject(zr, geo);
      if (cfg.inject_adjoint_fault) atz(0, 0) += 1e-3;
      const double lhs = (ax.array() * zr.array()).sum();
      const double rhs = (x.array() * atz.array()).sum();
      const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
      worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    check("adjoint-identity", worst < 1e-12,
          "worst relative error " + std::to_string(worst));
  });

  // shared small problem for the gradient checks
  Geometry sgeo;
  sgeo.image_size = 8;
  sgeo.n_detectors = 8;
  sgeo.n_views_full = 12;
  ViewSelector ssel;
  ssel.rate = 2;
  ssel.full_view_count = 12;
  std::mt19937_64 rng(7);
  Problem sp;
  sp.geometry = sgeo;
  sp.selector = ssel;
  sp.measured = random_matrix(6, 8, rng);
  sp.lambda = 1.3;
  sp.reg_x = random_net(11, 2, 3, 3, 0.01);
  sp.reg_z = random_net(13, 2, 3, 3, 0.01);

  guarded("gradient-data-term", [&] {
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
      const Image x = random_matrix(8, 8, rng);
      const Sinogram z = random_matrix(12, 8, rng);
      const auto fx = fd_gradient(
          [&](const Eigen::MatrixXd& xx) { return f_value(sp, xx, z); }, x,
          1e-5);
      const auto fz = fd_gradient(
          [&](const Eigen::MatrixXd& zz) { return f_value(sp, x, zz); }, z,
          1e-5);
      worst = std::max(worst, rel_error(fx, grad_f_x(sp, x, z)));
      worst = std::max(worst, rel_error(fz, grad_f_z(sp, x, z)));
    }
    check("gradient-data-term", worst < 1e-6,
          "worst relative error " + std::to_string(worst));
  });

  guarded("gradient-regularizer", [&] {
    double worst = 0.0;
    for (double eps : {1.0, 0.1}) {
      const Eigen::MatrixXd y = random_matrix(8, 8, rng);
      const auto fd = fd_gradient(
          [&](const Eigen::MatrixXd& yy) {
            return smoothed_value(sp.reg_x, yy, eps);
          },
          y, 1e-5);
      worst = std::max(worst, rel_error(fd, smoothed_gradient(sp.reg_x, y, eps)));
    }
    check("gradient-regularizer", worst < 1e-6,
          "worst relative error " + std::to_string(worst));
  });

  guarded("gradient-objective", [&] {
    const Image x = random_matrix(8, 8, rng);
    const Sinogram z = random_matrix(12, 8, rng);
    const double eps = 0.1;
    const PhiGradient g = grad_phi_eps(sp, Iterate{x, z, eps});
    const auto fx = fd_gradient(
        [&](const Eigen::MatrixXd& xx) {
          return phi_eps_value(sp, Iterate{xx, z, eps});
        },
        x, 1e-5);
    const auto fz = fd_gradient(
        [&](const Eigen::MatrixXd& zz) {
          return phi_eps_value(sp, Iterate{x, zz, eps});
        },
        z, 1e-5);
    const double worst = std::max(rel_error(fx, g.x), rel_error(fz, g.z));
    check("gradient-objective", worst < 1e-6,
          "worst relative error " + std::to_string(worst));
  });

  guarded("huber-reduction", [&] {
    const RegularizerNet id = identity_net();
    const Eigen::MatrixXd y = random_matrix(8, 8, rng);
    double worst = 0.0;
    for (double eps : {1.0, 0.25}) {
      double expected = 0.0;
      for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
          const double a = std::abs(y(i, j));
          expected += a <= eps ? a * a / (2.0 * eps) : a - eps / 2.0;
        }
      const double got = smoothed_value(id, y, eps);
      worst = std::max(worst,
                       std::abs(got - expected) / std::max(1.0, expected));
    }
    check("huber-reduction", worst < 1e-12,
          "worst relative error " + std::to_string(worst));
  });

  // fresh small solve backing the certificate and schedule checks
  guarded("descent-certificates", [&] {
    Geometry geo;
    geo.image_size = 16;
    geo.n_detectors = 16;
    geo.n_views_full = 24;
    ViewSelector sel;
    sel.rate = 2;
    sel.full_view_count = 24;
    Problem p;
    p.geometry = geo;
    p.selector = sel;
    const Image phantom = shepp_logan(16);
    const Sinogram full = project(phantom, geo);
    p.measured = select_views(full, sel);
    p.reg_x = tv_net();
    p.reg_z = tv_net();
    SolverConfig sc = default_config(p);
    sc.max_iters = 50;
    sc.eps_tol = 1e-3;

    bool certs_ok = true;
    bool schedule_ok = true;
    std::string why;
    const double slack = 1e-10;
    auto observer = [&](const IterationRecord& rec, const Iterate& before,
                        const Iterate& after) {
      const double phi_before = phi_eps_value(p, before);
      const double phi_after = phi_eps_value(p, after);
      const double dx = (after.x - before.x).norm();
      const double dz = (after.z - before.z).norm();
      if (rec.branch == Branch::CandidateAccepted) {
        const double gb = grad_phi_eps(p, before).norm();
        if (phi_after - phi_before > -sc.eta * (dx * dx + dz * dz) + slack ||
            gb > (dx + dz) / sc.eta + slack) {
          certs_ok = false;
          why = "candidate inequality broken at k=" + std::to_string(rec.k);
        }
      } else {
        if (phi_after - phi_before >
            -sc.delta * (dx * dx + dz * dz) + slack) {
          certs_ok = false;
          why = "safeguard decrease broken at k=" + std::to_string(rec.k);
        }
        const double expect_a =
            sc.alpha_bar0 * std::pow(sc.rho, rec.backtracks);
        if (std::abs(rec.alpha_bar - expect_a) > 1e-15) {
          certs_ok = false;
          why = "line-search step bookkeeping broken at k=" +
                std::to_string(rec.k);
        }
      }
      if (phi_after > phi_before + slack) {
        certs_ok = false;
        why = "objective increased at k=" + std::to_string(rec.k);
      }
      if (rec.eps_reduced &&
          !(rec.grad_norm < sc.sigma * sc.gamma * rec.eps)) {
        schedule_ok = false;
        why = "reduction fired above threshold at k=" + std::to_string(rec.k);
      }
    };
    const SolveResult r = lama_solve(p, Image::Zero(16, 16),
                                     Sinogram::Zero(24, 16), sc, observer);
    for (std::size_t i = 1; i < r.trace.size(); ++i)
      if (r.trace[i].eps > r.trace[i - 1].eps) schedule_ok = false;
    check("descent-certificates", certs_ok && !r.trace.empty(), why);
    check("eps-schedule", schedule_ok, why);
  });

  guarded("assembly-fidelity", [&] {
    ViewSelector sel;
    sel.rate = 4;
    sel.full_view_count = 24;
    const Sinogram s0 = random_matrix(6, 10, rng);
    const Sinogram full = assemble_full(linear_interp_operator(4), s0, sel);
    const Sinogram back = select_views(full, sel);
    check("assembly-fidelity", (back.array() == s0.array()).all(),
          "measured views were altered");
  });

  guarded("container-roundtrip", [&] {
    Container c;
    c.add_matrix("m", random_matrix(5, 7, rng));
    c.add_scalar("s", 0.1 + 0.2);
    const auto bytes = serialize(c);
    const Container d = deserialize(bytes.data(), bytes.size());
    const bool ok = d.matrix("m") == c.matrix("m") &&
                    d.scalar("s") == c.scalar("s");
    check("container-roundtrip", ok, "round trip drifted");
  });

  return all_ok ? kExitOk : kExitVerificationFailure;
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"dual-domain sparse-view CT reconstruction"};
  app.require_subcommand(1);

  struct SubState {
    CLI::App* sub = nullptr;
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> opts;
  };
  std::array<SubState, 3> states;
  const std::array<const char*, 3> names = {"simulate", "reconstruct",
                                            "verify"};
  const std::array<const char*, 3> descs = {
      "write phantom and sinogram files",
      "initialize and solve, writing results and a trace",
      "run the internal invariant battery"};
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& st = states[i];
    st.sub = app.add_subcommand(names[i], descs[i]);
    st.sub->add_option("--config", st.config_path,
                       "key=value file applied before flag overrides");
    for (const auto& key : config_keys()) {
      if (is_flag_key(key))
        st.opts[key] = st.sub->add_flag("--" + key);
      else
        st.opts[key] = st.sub->add_option("--" + key, st.values[key]);
    }
  }

  try {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("lama");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    for (std::size_t i = 0; i < states.size(); ++i) {
      auto& st = states[i];
      if (!st.sub->parsed()) continue;
      RunConfig cfg;
      if (!st.config_path.empty()) cfg = parse_config_file(st.config_path);
      for (const auto& key : config_keys()) {
        const CLI::Option* opt = st.opts.at(key);
        if (opt->count() == 0) continue;
        apply_override(cfg, key,
                       is_flag_key(key) ? "true" : st.values.at(key));
      }
      if (i == 0) return cmd_simulate(cfg);
      if (i == 1) return cmd_reconstruct(cfg);
      return cmd_verify(cfg, std::cout);
    }
    return kExitConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const ContainerError& e) {
    std::cerr << "file error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumericalFailure;
  } catch (const LineSearchFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericalFailure;
  }
}

}  // namespace lama
