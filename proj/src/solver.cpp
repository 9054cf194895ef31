#include "lama/solver.hpp"

#include "lama/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <utility>

namespace lama {

namespace {

const char* branch_name(Branch b) {
  return b == Branch::CandidateAccepted ? "candidate" : "safeguard";
}

bool in_unit(double v) { return v > 0.0 && v < 1.0; }

}  // namespace

void SolverConfig::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("candidate gradient steps must be positive");
  if (alpha_hat < 0.0 || beta_hat < 0.0)
    throw std::invalid_argument("candidate regularizer steps must be >= 0");
  if (!in_unit(alpha_bar0) || !in_unit(beta_bar0))
    throw std::invalid_argument("initial safeguard steps must lie in (0,1)");
  if (!in_unit(rho))
    throw std::invalid_argument("backtracking factor must lie in (0,1)");
  if (!in_unit(delta))
    throw std::invalid_argument("sufficient-decrease constant must lie in (0,1)");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!in_unit(gamma))
    throw std::invalid_argument("smoothing shrink factor must lie in (0,1)");
  if (!(eps0 > 0.0)) throw std::invalid_argument("eps0 must be positive");
  if (eps_tol < 0.0) throw std::invalid_argument("eps_tol must be >= 0");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (max_backtracks < 1)
    throw std::invalid_argument("max_backtracks must be >= 1");
  if (stationary_tol < 0.0)
    throw std::invalid_argument("stationary_tol must be >= 0");
}

SolverConfig default_config(const Problem& p) {
  const double lf = estimate_data_lipschitz(p);
  if (!(lf > 0.0))
    throw std::invalid_argument("data-term curvature estimate is zero");
  SolverConfig cfg;
  cfg.alpha = cfg.beta = 0.2 / lf;
  cfg.alpha_hat = cfg.beta_hat = cfg.alpha / 2.0;
  return cfg;
}

std::pair<Image, Sinogram> palm_candidate(const Problem& p, const Iterate& it,
                                          const SolverConfig& cfg) {
  p.validate();
  cfg.validate();
  if (!(it.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const Sinogram ax = project(it.x, p.geometry);
  // sinogram block first, then the image block at the updated sinogram
  const Sinogram b = it.z - cfg.alpha * grad_f_z_with(p, ax, it.z);
  Sinogram u_z = b - cfg.alpha_hat * smoothed_gradient(p.reg_z, b, it.eps);
  const Image c = it.x - cfg.beta * grad_f_x_with(p, ax, u_z);
  Image u_x = c - cfg.beta_hat * smoothed_gradient(p.reg_x, c, it.eps);
  return {std::move(u_x), std::move(u_z)};
}

bool safeguard_check(const Problem& p, const Iterate& it, const Image& u_x,
                     const Sinogram& u_z, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (u_x.rows() != it.x.rows() || u_x.cols() != it.x.cols() ||
      u_z.rows() != it.z.rows() || u_z.cols() != it.z.cols())
    throw std::invalid_argument("candidate shapes do not match the iterate");
  const double phi_u = phi_eps_value(p, Iterate{u_x, u_z, it.eps});
  const double phi_old = phi_eps_value(p, it);
  const double dx = (u_x - it.x).norm();
  const double dz = (u_z - it.z).norm();
  if (!std::isfinite(phi_u) || !std::isfinite(dx) || !std::isfinite(dz))
    return false;
  if (!(phi_u - phi_old <= -eta * (dx * dx + dz * dz))) return false;
  return grad_phi_eps(p, it).norm() <= (dx + dz) / eta;
}

std::pair<Image, Sinogram> bcd_step(const Problem& p, const Iterate& it,
                                    double alpha_bar, double beta_bar) {
  p.validate();
  if (!(it.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(alpha_bar > 0.0) || !(beta_bar > 0.0))
    throw std::invalid_argument("line-search steps must be positive");
  const Sinogram ax = project(it.x, p.geometry);
  Sinogram v_z = it.z - alpha_bar * (grad_f_z_with(p, ax, it.z) +
                                     smoothed_gradient(p.reg_z, it.z, it.eps));
  // the image-block regularizer gradient stays anchored at x
  Image v_x = it.x - beta_bar * (grad_f_x_with(p, ax, v_z) +
                                 smoothed_gradient(p.reg_x, it.x, it.eps));
  return {std::move(v_x), std::move(v_z)};
}

LineSearchResult line_search(const Problem& p, const Iterate& it,
                             const SolverConfig& cfg) {
  p.validate();
  cfg.validate();
  if (!(it.eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const Sinogram ax = project(it.x, p.geometry);
  const double phi_old = phi_eps_value_with(p, ax, it.x, it.z, it.eps);
  const Sinogram gz = grad_f_z_with(p, ax, it.z) +
                      smoothed_gradient(p.reg_z, it.z, it.eps);
  const Image gx_reg = smoothed_gradient(p.reg_x, it.x, it.eps);
  double abar = cfg.alpha_bar0;
  double bbar = cfg.beta_bar0;
  for (int l = 0; l <= cfg.max_backtracks; ++l) {
    Sinogram v_z = it.z - abar * gz;
    Image v_x = it.x - bbar * (grad_f_x_with(p, ax, v_z) + gx_reg);
    const Sinogram av = project(v_x, p.geometry);
    const double phi_v = phi_eps_value_with(p, av, v_x, v_z, it.eps);
    const double dx = (v_x - it.x).norm();
    const double dz = (v_z - it.z).norm();
    if (std::isfinite(phi_v) && std::isfinite(dx) && std::isfinite(dz) &&
        phi_v - phi_old <= -cfg.delta * (dx * dx + dz * dz))
      return {std::move(v_x), std::move(v_z), l, abar, bbar};
    abar *= cfg.rho;
    bbar *= cfg.rho;
  }
  throw LineSearchFailure(
      "no sufficient decrease after " + std::to_string(cfg.max_backtracks) +
          " backtracks; step bounds are likely misconfigured",
      {});
}

double eps_update(double grad_norm, double eps, double sigma, double gamma) {
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(sigma > 0.0)) throw std::invalid_argument("sigma must be positive");
  if (!in_unit(gamma))
    throw std::invalid_argument("gamma must lie in (0,1)");
  return grad_norm < sigma * gamma * eps ? gamma * eps : eps;
}

SolveResult lama_solve(const Problem& p, const Image& x0, const Sinogram& z0,
                       const SolverConfig& cfg,
                       const IterationObserver& observer) {
  p.validate();
  cfg.validate();

  SolveResult res;
  Image x = x0;
  Sinogram z = z0;
  double eps = cfg.eps0;
  Sinogram ax = project(x, p.geometry);
  double phi_cur = phi_eps_value_with(p, ax, x, z, eps);
  double gnorm_cur = grad_phi_eps_with(p, ax, x, z, eps).norm();
  if (!std::isfinite(phi_cur) || !std::isfinite(gnorm_cur))
    throw NumericalFailure("objective is not finite at the initial point", {});

  Termination term = Termination::MaxIters;
  bool done = false;
  if (eps <= cfg.eps_tol) {
    term = Termination::EpsTol;
    done = true;
  } else if (gnorm_cur < cfg.stationary_tol) {
    term = Termination::Stationary;
    done = true;
  }

  for (int k = 0; k < cfg.max_iters && !done; ++k) {
    const Sinogram gfz = grad_f_z_with(p, ax, z);

    // candidate update, sinogram block first
    const Sinogram b = z - cfg.alpha * gfz;
    Sinogram u_z = b - cfg.alpha_hat * smoothed_gradient(p.reg_z, b, eps);
    const Image c = x - cfg.beta * grad_f_x_with(p, ax, u_z);
    Image u_x = c - cfg.beta_hat * smoothed_gradient(p.reg_x, c, eps);
    Sinogram au = project(u_x, p.geometry);
    const double phi_u = phi_eps_value_with(p, au, u_x, u_z, eps);
    double dx = (u_x - x).norm();
    double dz = (u_z - z).norm();

    Branch branch = Branch::Safeguard;
    int backtracks = 0;
    double ab_used = 0.0;
    double bb_used = 0.0;
    double phi_new = 0.0;
    Image x_new;
    Sinogram z_new;
    Sinogram ax_new;

    const bool candidate_ok =
        std::isfinite(phi_u) && std::isfinite(dx) && std::isfinite(dz) &&
        phi_u - phi_cur <= -cfg.eta * (dx * dx + dz * dz) &&
        gnorm_cur <= (dx + dz) / cfg.eta;
    if (candidate_ok) {
      branch = Branch::CandidateAccepted;
      phi_new = phi_u;
      x_new = std::move(u_x);
      z_new = std::move(u_z);
      ax_new = std::move(au);
    } else {
      // fall back to alternating gradient steps with backtracking,
      // restarted from the configured initial steps
      const Sinogram gz = gfz + smoothed_gradient(p.reg_z, z, eps);
      const Image gx_reg = smoothed_gradient(p.reg_x, x, eps);
      double abar = cfg.alpha_bar0;
      double bbar = cfg.beta_bar0;
      bool accepted = false;
      for (int l = 0; l <= cfg.max_backtracks; ++l) {
        Sinogram v_z = z - abar * gz;
        Image v_x = x - bbar * (grad_f_x_with(p, ax, v_z) + gx_reg);
        Sinogram av = project(v_x, p.geometry);
        const double phi_v = phi_eps_value_with(p, av, v_x, v_z, eps);
        const double dxv = (v_x - x).norm();
        const double dzv = (v_z - z).norm();
        if (std::isfinite(phi_v) && std::isfinite(dxv) &&
            std::isfinite(dzv) &&
            phi_v - phi_cur <= -cfg.delta * (dxv * dxv + dzv * dzv)) {
          accepted = true;
          backtracks = l;
          ab_used = abar;
          bb_used = bbar;
          phi_new = phi_v;
          dx = dxv;
          dz = dzv;
          x_new = std::move(v_x);
          z_new = std::move(v_z);
          ax_new = std::move(av);
          break;
        }
        abar *= cfg.rho;
        bbar *= cfg.rho;
      }
      if (!accepted)
        throw LineSearchFailure(
            "iteration " + std::to_string(k) + ": no sufficient decrease in " +
                std::to_string(cfg.max_backtracks) + " backtracks",
            std::move(res.trace));
    }

    Image x_before;
    Sinogram z_before;
    if (observer) {
      x_before = x;
      z_before = z;
    }
    const double phi_prev_rec = phi_cur;
    const double gprev_rec = gnorm_cur;
    x = std::move(x_new);
    z = std::move(z_new);
    ax = std::move(ax_new);
    phi_cur = phi_new;
    const double gnorm_new = grad_phi_eps_with(p, ax, x, z, eps).norm();
    if (!std::isfinite(phi_cur) || !std::isfinite(gnorm_new))
      throw NumericalFailure(
          "objective became non-finite at iteration " + std::to_string(k),
          std::move(res.trace));

    const double eps_next = eps_update(gnorm_new, eps, cfg.sigma, cfg.gamma);
    const bool reduced = eps_next < eps;

    IterationRecord rec;
    rec.k = k;
    rec.branch = branch;
    rec.backtracks = backtracks;
    rec.eps = eps;
    rec.phi = phi_cur;
    rec.phi_prev = phi_prev_rec;
    rec.grad_norm = gnorm_new;
    rec.grad_norm_prev = gprev_rec;
    rec.eps_reduced = reduced;
    rec.dx_norm = dx;
    rec.dz_norm = dz;
    rec.alpha_bar = ab_used;
    rec.beta_bar = bb_used;
    res.trace.push_back(rec);
    if (observer)
      observer(rec, Iterate{std::move(x_before), std::move(z_before), eps},
               Iterate{x, z, eps});

    if (reduced) {
      eps = eps_next;
      if (eps <= cfg.eps_tol) {
        term = Termination::EpsTol;
        done = true;
      } else {
        // objective and gradient change with the smoothing level
        phi_cur = phi_eps_value_with(p, ax, x, z, eps);
        gnorm_cur = grad_phi_eps_with(p, ax, x, z, eps).norm();
        if (!std::isfinite(phi_cur) || !std::isfinite(gnorm_cur))
          throw NumericalFailure(
              "objective became non-finite after smoothing reduction",
              std::move(res.trace));
      }
    } else {
      gnorm_cur = gnorm_new;
    }
    if (!done && gnorm_cur < cfg.stationary_tol) {
      term = Termination::Stationary;
      done = true;
    }
  }

  res.final = Iterate{std::move(x), std::move(z), eps};
  res.termination = term;
  return res;
}

double loss_report(const Problem& p, const SolveResult& result,
                   const Image& ground_truth, double mu) {
  if (mu < 0.0) throw std::invalid_argument("mu must be >= 0");
  if (ground_truth.rows() != result.final.x.rows() ||
      ground_truth.cols() != result.final.x.cols())
    throw std::invalid_argument("ground truth shape mismatch");
  const Sinogram z_ref = project(ground_truth, p.geometry);
  double range = ground_truth.maxCoeff() - ground_truth.minCoeff();
  if (!(range > 0.0)) range = 1.0;
  const double structural = ssim(result.final.x, ground_truth, range);
  return (result.final.x - ground_truth).squaredNorm() +
         (result.final.z - z_ref).squaredNorm() + mu * (1.0 - structural);
}

int backtrack_bound(double lipschitz, const SolverConfig& cfg) {
  cfg.validate();
  if (lipschitz < 0.0)
    throw std::invalid_argument("lipschitz bound must be >= 0");
  // sufficient decrease is guaranteed once the step falls to
  // 1/(delta + L/2); count the shrinks to get there from the larger seed
  const double seed = std::max(cfg.alpha_bar0, cfg.beta_bar0);
  const double tau = 1.0 / (cfg.delta + lipschitz / 2.0);
  const double raw = std::log(tau / seed) / std::log(cfg.rho);
  const int shrinks = raw <= 0.0 ? 0 : static_cast<int>(std::ceil(raw));
  return shrinks + 1;
}

double estimate_phi_lipschitz(const Problem& p, double eps, int probes) {
  p.validate();
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  const double lf = estimate_data_lipschitz(p);
  const double lr = estimate_lipschitz(p.reg_x, p.geometry.image_size,
                                       p.geometry.image_size, eps, probes);
  const double lq = estimate_lipschitz(p.reg_z, p.geometry.n_views_full,
                                       p.geometry.n_detectors, eps, probes);
  return lf + lr + lq;
}

void export_csv_trace(const std::vector<IterationRecord>& trace,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot open '" + path + "' for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "k,branch,backtracks,eps,phi,phi_prev,grad_norm,grad_norm_prev,"
         "eps_reduced,dx_norm,dz_norm,alpha_bar,beta_bar\n";
  for (const auto& r : trace)
    out << r.k << ',' << branch_name(r.branch) << ',' << r.backtracks << ','
        << r.eps << ',' << r.phi << ',' << r.phi_prev << ',' << r.grad_norm
        << ',' << r.grad_norm_prev << ',' << (r.eps_reduced ? 1 : 0) << ','
        << r.dx_norm << ',' << r.dz_norm << ',' << r.alpha_bar << ','
        << r.beta_bar << '\n';
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace lama
