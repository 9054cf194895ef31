#pragma once

#include "lama/objective.hpp"

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lama {

/// Step sizes and safeguard constants for lama_solve. alpha/beta drive the
/// candidate gradient steps, alpha_hat/beta_hat the candidate regularizer
/// steps; the *_bar0 pair seeds the fallback line search each iteration.
struct SolverConfig {
  double alpha = 0.0;        // must be set > 0, see default_config
  double beta = 0.0;
  double alpha_hat = 0.0;    // >= 0
  double beta_hat = 0.0;
  double alpha_bar0 = 0.5;   // in (0,1)
  double beta_bar0 = 0.5;
  double rho = 0.5;          // backtracking shrink, in (0,1)
  double delta = 1e-4;       // sufficient-decrease constant, in (0,1)
  double eta = 1e-3;         // safeguard constant, > 0
  double sigma = 1.0;        // smoothing-reduction threshold factor, > 0
  double gamma = 0.5;        // smoothing shrink factor, in (0,1)
  double eps0 = 1.0;         // initial smoothing, > 0
  double eps_tol = 1e-4;     // stop once eps falls to this level, >= 0
  int max_iters = 2000;
  int max_backtracks = 60;
  double stationary_tol = 1e-14;  // gradient norm treated as converged

  void validate() const;
};

/// Fills candidate steps from the data-term curvature: alpha = beta =
/// 0.2 / L_f with L_f from estimate_data_lipschitz, alpha_hat = beta_hat
/// = alpha / 2, everything else at the struct defaults.
SolverConfig default_config(const Problem& p);

enum class Branch { CandidateAccepted, Safeguard };
enum class Termination { EpsTol, MaxIters, Stationary };

/// One solver iteration, with enough scalars to re-verify the acceptance
/// inequality of whichever branch ran.
struct IterationRecord {
  int k = 0;
  Branch branch = Branch::CandidateAccepted;
  int backtracks = 0;        // safeguard branch only, else 0
  double eps = 0.0;          // smoothing level in effect during the step
  double phi = 0.0;          // Φ_ε at the new iterate
  double phi_prev = 0.0;     // Φ_ε at the old iterate
  double grad_norm = 0.0;      // ‖∇Φ_ε‖ at the new iterate
  double grad_norm_prev = 0.0; // ‖∇Φ_ε‖ at the old iterate
  bool eps_reduced = false;
  double dx_norm = 0.0;      // ‖x_{k+1} − x_k‖
  double dz_norm = 0.0;      // ‖z_{k+1} − z_k‖
  double alpha_bar = 0.0;    // accepted safeguard steps, 0 on candidate
  double beta_bar = 0.0;
};

struct SolveResult {
  Iterate final;
  std::vector<IterationRecord> trace;
  Termination termination = Termination::MaxIters;
};

/// Line search exhausted max_backtracks; carries the trace up to the
/// failure point.
struct LineSearchFailure : std::runtime_error {
  std::vector<IterationRecord> trace;
  LineSearchFailure(const std::string& what, std::vector<IterationRecord> t)
      : std::runtime_error(what), trace(std::move(t)) {}
};

/// Objective or gradient became non-finite.
struct NumericalFailure : std::runtime_error {
  std::vector<IterationRecord> trace;
  NumericalFailure(const std::string& what, std::vector<IterationRecord> t)
      : std::runtime_error(what), trace(std::move(t)) {}
};

/// Proximal-linearized candidate update, sinogram block first:
///   b = z − α∇_z f(x,z);  u_z = b − α̂∇Q_ε(b);
///   c = x − β∇_x f(x,u_z); u_x = c − β̂∇R_ε(c).
std::pair<Image, Sinogram> palm_candidate(const Problem& p, const Iterate& it,
                                          const SolverConfig& cfg);

/// Accepts the candidate iff it decreases Φ_ε by at least
/// η(‖Δx‖²+‖Δz‖²) and the current gradient norm is at most
/// (‖Δx‖+‖Δz‖)/η. Ties accept.
bool safeguard_check(const Problem& p, const Iterate& it, const Image& u_x,
                     const Sinogram& u_z, double eta);

/// One alternating explicit gradient step on the smoothed objective:
///   v_z = z − ᾱ(∇_z f(x,z) + ∇Q_ε(z));
///   v_x = x − β̄(∇_x f(x,v_z) + ∇R_ε(x)).
std::pair<Image, Sinogram> bcd_step(const Problem& p, const Iterate& it,
                                    double alpha_bar, double beta_bar);

struct LineSearchResult {
  Image v_x;
  Sinogram v_z;
  int backtracks = 0;
  double alpha_bar = 0.0;  // accepted step sizes
  double beta_bar = 0.0;
};

/// Backtracks bcd_step from (ᾱ₀, β̄₀), shrinking both by ρ, until
/// Φ_ε(v) − Φ_ε(x,z) ≤ −δ(‖Δx‖²+‖Δz‖²). Throws LineSearchFailure after
/// max_backtracks shrinks.
LineSearchResult line_search(const Problem& p, const Iterate& it,
                             const SolverConfig& cfg);

/// Smoothing schedule: returns γ·eps when grad_norm < σ·γ·eps, else eps.
double eps_update(double grad_norm, double eps, double sigma, double gamma);

/// Called after every iteration with the record and both iterates (eps is
/// the level the step ran at). Lets tests re-derive certificates from full
/// iterates rather than trusting recorded scalars.
using IterationObserver = std::function<void(
    const IterationRecord&, const Iterate& before, const Iterate& after)>;

/// Full solve: candidate step with safeguard acceptance, line-search
/// fallback, smoothing reduction once the gradient is small relative to
/// eps. Φ_ε never increases while eps stays fixed. Terminates on
/// eps ≤ eps_tol, max_iters, or a vanishing gradient.
SolveResult lama_solve(const Problem& p, const Image& x0, const Sinogram& z0,
                       const SolverConfig& cfg,
                       const IterationObserver& observer = {});

/// Evaluation loss against a known ground truth:
/// ‖x_K − x̂‖² + ‖z_K − Ax̂‖² + mu·(1 − SSIM(x_K, x̂)).
double loss_report(const Problem& p, const SolveResult& result,
                   const Image& ground_truth, double mu = 0.01);

/// Worst-case backtrack count for line_search under a gradient-Lipschitz
/// bound L on ∇Φ_ε: smallest shrink count guaranteeing the sufficient
/// decrease, plus one for slack.
int backtrack_bound(double lipschitz, const SolverConfig& cfg);

/// Gradient-Lipschitz estimate for the whole smoothed objective at eps:
/// data-term curvature plus both regularizer estimates.
double estimate_phi_lipschitz(const Problem& p, double eps, int probes = 2);

/// Writes the trace as CSV with header k,branch,backtracks,eps,phi,
/// phi_prev,grad_norm,grad_norm_prev,eps_reduced,dx_norm,dz_norm,
/// alpha_bar,beta_bar. Doubles carry full round-trip precision.
void export_csv_trace(const std::vector<IterationRecord>& trace,
                      const std::string& path);

}  // namespace lama
