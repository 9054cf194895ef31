#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace lama {

// Process exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericalFailure = 3;
inline constexpr int kExitVerificationFailure = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One batch run, fully determined by these fields plus the seed. Presets
/// for reg_x/reg_z: "tv", "identity", "zero", "random", or a weight-file
/// path. Initializers: "linear", "nearest", "zero-fill", or a weight-file
/// path for a learned shift operator. Negative candidate step sizes mean
/// "derive from the data-term curvature".
struct RunConfig {
  Eigen::Index image_size = 128;
  Eigen::Index n_detectors = 0;  // 0: match image_size
  Eigen::Index n_views = 360;
  double detector_spacing = 1.0;
  double pixel_spacing = 1.0;
  Eigen::Index rate = 6;
  double noise_std = 0.0;
  std::uint64_t seed = 1;
  double lambda = 1.0;
  double activation_knee = 0.01;
  std::string reg_x = "tv";
  std::string reg_z = "tv";
  std::string initializer = "linear";
  bool baseline_only = false;
  bool inject_adjoint_fault = false;
  std::string output_dir = "out";

  double alpha = -1.0;
  double beta = -1.0;
  double alpha_hat = -1.0;
  double beta_hat = -1.0;
  double alpha_bar0 = 0.5;
  double beta_bar0 = 0.5;
  double rho = 0.5;
  double delta = 1e-4;
  double eta = 1e-3;
  double sigma = 1.0;
  double gamma = 0.5;
  double eps0 = 1.0;
  double eps_tol = 1e-4;
  double stationary_tol = 1e-14;
  int max_iters = 2000;
  int max_backtracks = 60;

  void validate() const;  // throws ConfigError
};

/// Keys accepted in config files and as --key flags, in canonical order.
const std::vector<std::string>& config_keys();

/// Parses a key=value file ('#' comments, blank lines allowed).
RunConfig parse_config_file(const std::string& path);

/// Applies one key=value pair; throws ConfigError on unknown keys or
/// unparsable values.
void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value);

/// Dumps every effective setting, reloadable via parse_config_file.
void write_config(const RunConfig& cfg, const std::string& path);

/// Writes phantom + sinograms (and noisy variants when noise_std > 0)
/// into output_dir. Returns kExitOk; throws on failure.
int cmd_simulate(const RunConfig& cfg);

/// Initializes, solves (unless baseline_only), and writes results,
/// previews, trace and metrics into output_dir.
int cmd_reconstruct(const RunConfig& cfg);

/// Runs the internal invariant battery, printing one PASS/FAIL line per
/// check to `report`. Returns kExitOk or kExitVerificationFailure.
int cmd_verify(const RunConfig& cfg, std::ostream& report);

/// Full front end: parses argv-style args (subcommands simulate,
/// reconstruct, verify), maps exceptions to exit codes.
int run_cli(const std::vector<std::string>& args);

}  // namespace lama
