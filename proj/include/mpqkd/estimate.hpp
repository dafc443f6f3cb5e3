#pragma once

#include <cstdint>
#include <string>

#include "mpqkd/model.hpp"

namespace mpqkd {

class EstimationError : public NumericError {
 public:
  explicit EstimationError(const std::string& what) : NumericError(what) {}
};

// Expected-value bounds for an observed count n: lower = n/(1+chi_l) and
// upper = n/(1-chi_u), where the chis solve
//   [exp(-chi_u) / (1-chi_u)^(1-chi_u)]^(n/(1-chi_u)) = eps_u
//   [exp(+chi_l) / (1+chi_l)^(1+chi_l)]^(n/(1+chi_l)) = eps_l
// n = 0 degenerates to lower 0, upper ln(1/eps_u).
struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
  double chi_l = 0.0;
  double chi_u = 0.0;
};

BoundPair chernoff_bounds(double n, double eps_u, double eps_l);

// Log-domain residuals of the defining equations, for solver verification:
// n * h(chi) - ln(eps) with h evaluated cancellation-free.
double chernoff_upper_residual(double n, double chi_u, double eps_u);
double chernoff_lower_residual(double n, double chi_l, double eps_l);

enum class TallyKey {
  MuMu, MuO, OMu, NuNu, NuO, ONu, OO, TwoNuTwoNu, TwoNuO, OTwoNu
};

// Relative probability of a pair class among all pairs: sum over ordered
// intensity assignments of the four per-round choice probabilities; the
// common total-probability factor is dropped. The doubly-sifted
// [2nu_a, 2nu_b] class carries the extra 2/M phase-sift acceptance.
double pair_class_probability(TallyKey key, const SystemConfig& cfg);

// Poisson weight e^-tau tau^i / i!, log-domain evaluation.
double poisson_weight(unsigned i, double tau);

double binary_entropy(double x);

// Random-sampling-without-replacement correction; b is clamped into
// [1e-12, 0.5] and the result floored at 0.
double gamma_correction(double a, double b, double c, double d);

struct EstimationResult {
  double n11_z_lower = 0.0;
  double e11_ph_upper = 0.0;
  // intermediates
  double n_mu = 0.0;
  double n_nu = 0.0;
  double alpha_11 = 0.0;
  double m_2nu = 0.0;
  double m11_upper = 0.0;
  double n11_x_lower = 0.0;
  double e11_x_upper = 0.0;
  int s_a = 1, s_b = 2;
  bool n11_clamped = false;  // negative combination clamped to 0
  bool e11_clamped = false;  // error ratio clamped into [0, 0.5]
};

// Lower bound on single-photon Z pairs (fills n_mu, n_nu, alpha_11,
// n11_z_lower). Negative results clamp to 0 and set n11_clamped.
EstimationResult estimate_n11_z(const TallyTable& tallies,
                                const SystemConfig& cfg);

// Phase-error upper bound; requires r.n11_z_lower from estimate_n11_z.
// Throws EstimationError when the single-photon X lower bound is zero.
void estimate_e11_ph(const TallyTable& tallies, const SystemConfig& cfg,
                     EstimationResult& r);

// f * n_z * H2(e_z); the textbook reconciliation-leak model.
double error_correction_leakage(double n_z, double e_z, double f);

struct SkrResult {
  double key_bits = 0.0;        // clamped at 0
  double bits_per_pulse = 0.0;
  double bits_per_second = 0.0;
  double lambda_ec = 0.0;
};

// Finite-size secret key rate. lambda_ec = ec_leak_scale * f * n_z * H2(e_z).
SkrResult secret_key_rate(double n11_z_lower, double e11_ph_upper,
                          const TallyTable& tallies, const SystemConfig& cfg,
                          double n_total_rounds);

// Repeaterless rate-loss limit -log2(1 - eta), eta = 10^(-loss/10).
// Returns +infinity at zero loss.
double plob_bound(double total_loss_db);

// Full chain on one tally table. point_estimate = true evaluates without
// concentration corrections (chi = 0, gamma = 0): a statistical summary for
// small desk-scale runs, not a security-grade bound.
EstimationResult run_estimation(const TallyTable& tallies,
                                const SystemConfig& cfg,
                                bool point_estimate = false);

}  // namespace mpqkd
