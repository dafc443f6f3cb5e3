#include "mpqkd/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mpqkd {

namespace {

constexpr double kLn2 = 0.69314718055994530941723212145818;

// h(x) = -x/(1-x) - ln(1-x) on (0,1); decreasing, h(0) = 0.
// Series -sum_{k>=2} x^k (k-1)/k avoids the cancellation that otherwise
// floors the defining-equation residual near 1e-12 for small chi.
double h_upper(double x) {
  if (x < 0.25) {
    double term = x * x;  // x^k starting at k = 2
    double sum = 0.0;
    for (int k = 2; k < 200; ++k) {
      double c = term * (k - 1) / k;
      sum += c;
      if (c < sum * 1e-18) break;
      term *= x;
    }
    return -sum;
  }
  return -x / (1.0 - x) - std::log1p(-x);
}

// g(x) = x/(1+x) - ln(1+x) on (0,inf); decreasing, g(0) = 0.
double g_lower(double x) {
  if (x < 0.25) {
    double term = x * x;
    double sum = 0.0;
    double sign = -1.0;
    for (int k = 2; k < 200; ++k) {
      double c = sign * term * (k - 1) / k;
      sum += c;
      if (std::abs(c) < std::abs(sum) * 1e-18) break;
      term *= x;
      sign = -sign;
    }
    return sum;
  }
  return x / (1.0 + x) - std::log1p(x);
}

double bisect(double lo, double hi, double target, double (*f)(double),
              double n) {
  // f is decreasing; invariant n*f(lo) > target >= n*f(hi)
  for (int it = 0; it < 300; ++it) {
    double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if (n * f(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double chernoff_upper_residual(double n, double chi_u, double eps_u) {
  return n * h_upper(chi_u) - std::log(eps_u);
}

double chernoff_lower_residual(double n, double chi_l, double eps_l) {
  return n * g_lower(chi_l) - std::log(eps_l);
}

BoundPair chernoff_bounds(double n, double eps_u, double eps_l) {
  if (!(n >= 0.0)) throw NumericError("chernoff_bounds: negative count");
  if (!(eps_u > 0.0 && eps_u < 1.0 && eps_l > 0.0 && eps_l < 1.0))
    throw NumericError("chernoff_bounds: epsilons must lie in (0,1)");
  BoundPair b;
  if (n == 0.0) {
    // The defining equations are singular at n = 0; zero observations bound
    // the Poisson mean by ln(1/eps) from above and 0 from below.
    b.lower = 0.0;
    b.upper = std::log(1.0 / eps_u);
    return b;
  }
  const double tu = std::log(eps_u);
  b.chi_u = bisect(0.0, 1.0 - 1e-15, tu, &h_upper, n);
  if (std::abs(chernoff_upper_residual(n, b.chi_u, eps_u)) >
      1e-9 * std::abs(tu))
    throw NumericError("chernoff_bounds: chi_u did not converge (n=" +
                       std::to_string(n) + ", bracket (0,1))");
  const double tl = std::log(eps_l);
  double hi = 1.0;
  while (n * g_lower(hi) > tl) {
    hi *= 2.0;
    if (!std::isfinite(hi))
      throw NumericError("chernoff_bounds: chi_l bracket expansion failed");
  }
  b.chi_l = bisect(0.0, hi, tl, &g_lower, n);
  if (std::abs(chernoff_lower_residual(n, b.chi_l, eps_l)) >
      1e-9 * std::abs(tl))
    throw NumericError("chernoff_bounds: chi_l did not converge (n=" +
                       std::to_string(n) + ", bracket (0," +
                       std::to_string(hi) + "))");
  b.upper = n / (1.0 - b.chi_u);
  b.lower = n / (1.0 + b.chi_l);
  return b;
}

double pair_class_probability(TallyKey key, const SystemConfig& cfg) {
  const auto& a = cfg.alice;
  const auto& b = cfg.bob;
  const double two_over_m = 2.0 / cfg.m_slices;
  switch (key) {
    case TallyKey::MuMu: return (2 * a.p_mu * a.p_o) * (2 * b.p_mu * b.p_o);
    case TallyKey::MuO:  return (2 * a.p_mu * a.p_o) * (b.p_o * b.p_o);
    case TallyKey::OMu:  return (a.p_o * a.p_o) * (2 * b.p_mu * b.p_o);
    case TallyKey::NuNu: return (2 * a.p_nu * a.p_o) * (2 * b.p_nu * b.p_o);
    case TallyKey::NuO:  return (2 * a.p_nu * a.p_o) * (b.p_o * b.p_o);
    case TallyKey::ONu:  return (a.p_o * a.p_o) * (2 * b.p_nu * b.p_o);
    case TallyKey::OO:   return (a.p_o * a.p_o) * (b.p_o * b.p_o);
    case TallyKey::TwoNuTwoNu:
      return two_over_m * a.p_nu * a.p_nu * b.p_nu * b.p_nu;
    case TallyKey::TwoNuO: return a.p_nu * a.p_nu * (b.p_o * b.p_o);
    case TallyKey::OTwoNu: return (a.p_o * a.p_o) * b.p_nu * b.p_nu;
  }
  throw NumericError("pair_class_probability: unknown tally key");
}

double poisson_weight(unsigned i, double tau) {
  if (tau <= 0.0) return i == 0 ? 1.0 : 0.0;
  return std::exp(-tau + i * std::log(tau) - std::lgamma(i + 1.0));
}

double binary_entropy(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return -(x * std::log2(x) + (1.0 - x) * std::log2(1.0 - x));
}

double gamma_correction(double a, double b, double c, double d) {
  b = std::clamp(b, 1e-12, 0.5);
  if (c <= 0.0 || d <= 0.0) return 0.0;
  const double pre = (c + d) * (1.0 - b) * b / (c * d);
  const double arg = (c + d) / (kTwoPi * c * d * (1.0 - b) * b * a * a);
  const double v = pre * std::log(arg);
  return std::sqrt(std::max(v, 0.0));
}

namespace {

struct Bounds {
  double lo, up;
};

Bounds tally_bounds(std::uint64_t n, const SystemConfig& cfg, bool point) {
  const double nd = static_cast<double>(n);
  if (point) return {nd, nd};
  BoundPair b = chernoff_bounds(nd, cfg.eps.upper, cfg.eps.lower);
  return {b.lower, b.upper};
}

EstimationResult estimate_n11_z_impl(const TallyTable& t,
                                     const SystemConfig& cfg, bool point) {
  EstimationResult r;
  const auto& A = cfg.alice;
  const auto& B = cfg.bob;

  const Bounds mm = tally_bounds(t.n_mu_mu, cfg, point);
  const Bounds mo = tally_bounds(t.n_mu_o, cfg, point);
  const Bounds om = tally_bounds(t.n_o_mu, cfg, point);
  const Bounds nn = tally_bounds(t.n_nu_nu, cfg, point);
  const Bounds no = tally_bounds(t.n_nu_o, cfg, point);
  const Bounds on = tally_bounds(t.n_o_nu, cfg, point);
  const Bounds oo = tally_bounds(t.n_o_o, cfg, point);

  const double p0_mu_a = poisson_weight(0, A.mu);
  const double p0_mu_b = poisson_weight(0, B.mu);
  const double p0_nu_a = poisson_weight(0, A.nu);
  const double p0_nu_b = poisson_weight(0, B.nu);

  const double p_mm = pair_class_probability(TallyKey::MuMu, cfg);
  const double p_mo = pair_class_probability(TallyKey::MuO, cfg);
  const double p_om = pair_class_probability(TallyKey::OMu, cfg);
  const double p_nn = pair_class_probability(TallyKey::NuNu, cfg);
  const double p_no = pair_class_probability(TallyKey::NuO, cfg);
  const double p_on = pair_class_probability(TallyKey::ONu, cfg);
  const double p_oo = pair_class_probability(TallyKey::OO, cfg);

  // n_mu enters the single-photon bound with a negative sign, n_nu with a
  // positive one, so the expected-value bounds run upper on n_mu's positive
  // terms and lower on n_nu's (and conversely on the subtracted terms).
  r.n_mu = mm.up / (p0_mu_a * p0_mu_b * p_mm)
         - om.lo / (p0_mu_b * p_om)
         - mo.lo / (p0_mu_a * p_mo)
         + oo.up / p_oo;
  r.n_nu = nn.lo / (p0_nu_a * p0_nu_b * p_nn)
         - on.up / (p0_nu_b * p_on)
         - no.up / (p0_nu_a * p_no)
         + oo.lo / p_oo;

  if (A.nu * B.mu <= B.nu * A.mu) {
    r.s_a = 1;
    r.s_b = 2;
  } else {
    r.s_a = 2;
    r.s_b = 1;
  }
  const double ps_nu_a = poisson_weight(r.s_a, A.nu);
  const double ps_nu_b = poisson_weight(r.s_b, B.nu);
  const double ps_mu_a = poisson_weight(r.s_a, A.mu);
  const double ps_mu_b = poisson_weight(r.s_b, B.mu);
  const double p1_mu_a = poisson_weight(1, A.mu);
  const double p1_mu_b = poisson_weight(1, B.mu);

  r.alpha_11 = (1.0 / p_mm) *
               (poisson_weight(1, A.nu) * poisson_weight(1, B.nu) /
                    (ps_nu_a * ps_nu_b * p1_mu_a * p1_mu_b) -
                1.0 / (ps_mu_a * ps_mu_b));

  const double combo =
      (p0_nu_a * p0_nu_b / (ps_nu_a * ps_nu_b)) * r.n_nu -
      (p0_mu_a * p0_mu_b / (ps_mu_a * ps_mu_b)) * r.n_mu;
  r.n11_z_lower = combo / r.alpha_11;
  if (r.n11_z_lower < 0.0) {
    r.n11_z_lower = 0.0;
    r.n11_clamped = true;
  }
  return r;
}

void estimate_e11_ph_impl(const TallyTable& t, const SystemConfig& cfg,
                          EstimationResult& r, bool point) {
  const auto& A = cfg.alice;
  const auto& B = cfg.bob;
  const Bounds ox = tally_bounds(t.n_o_2nu, cfg, point);
  const Bounds xo = tally_bounds(t.n_2nu_o, cfg, point);
  const Bounds oo = tally_bounds(t.n_o_o, cfg, point);

  const double p0_2nu_a = poisson_weight(0, 2 * A.nu);
  const double p0_2nu_b = poisson_weight(0, 2 * B.nu);
  const double p_xx = pair_class_probability(TallyKey::TwoNuTwoNu, cfg);
  const double p_xo = pair_class_probability(TallyKey::TwoNuO, cfg);
  const double p_ox = pair_class_probability(TallyKey::OTwoNu, cfg);
  const double p_oo = pair_class_probability(TallyKey::OO, cfg);

  // Vacuum-component errors occur at rate 1/2, hence the halved subtractions.
  r.m_2nu = static_cast<double>(t.m_x) / (p0_2nu_a * p0_2nu_b * p_xx) -
            ox.lo / (2.0 * p0_2nu_b * p_ox) -
            xo.lo / (2.0 * p0_2nu_a * p_xo) +
            oo.up / (2.0 * p_oo);
  r.m11_upper = p0_2nu_a * p0_2nu_b * p_xx * r.m_2nu;

  const double p_mm = pair_class_probability(TallyKey::MuMu, cfg);
  r.n11_x_lower = poisson_weight(1, 2 * A.nu) * poisson_weight(1, 2 * B.nu) *
                  p_xx /
                  (poisson_weight(1, A.mu) * poisson_weight(1, B.mu) * p_mm) *
                  r.n11_z_lower;
  if (r.n11_x_lower <= 0.0)
    throw EstimationError(
        "phase-error estimation failed: single-photon X-pair lower bound is "
        "zero");
  const double ratio = r.m11_upper / r.n11_x_lower;
  r.e11_x_upper = std::clamp(ratio, 0.0, 0.5);
  r.e11_clamped = (ratio != r.e11_x_upper);
  const double corr =
      point ? 0.0
            : gamma_correction(cfg.eps.e, r.e11_x_upper, r.n11_z_lower,
                               r.n11_x_lower);
  r.e11_ph_upper = std::min(r.e11_x_upper + corr, 1.0);
}

}  // namespace

EstimationResult estimate_n11_z(const TallyTable& t, const SystemConfig& cfg) {
  return estimate_n11_z_impl(t, cfg, false);
}

void estimate_e11_ph(const TallyTable& t, const SystemConfig& cfg,
                     EstimationResult& r) {
  estimate_e11_ph_impl(t, cfg, r, false);
}

double error_correction_leakage(double n_z, double e_z, double f) {
  if (n_z <= 0.0) return 0.0;
  return f * n_z * binary_entropy(e_z);
}

SkrResult secret_key_rate(double n11_z_lower, double e11_ph_upper,
                          const TallyTable& t, const SystemConfig& cfg,
                          double n_total_rounds) {
  SkrResult s;
  const double n_z = static_cast<double>(t.n_mu_mu);
  const double e_z = n_z > 0.0 ? static_cast<double>(t.m_z) / n_z : 0.0;
  s.lambda_ec =
      cfg.ec_leak_scale * error_correction_leakage(n_z, e_z, cfg.f_ec);
  const double log_terms =
      std::log2(2.0 / cfg.eps.cor) +
      2.0 * std::log2(2.0 / (cfg.eps.prime * cfg.eps.hat)) +
      2.0 * std::log2(1.0 / cfg.eps.pa);
  const double key = n11_z_lower * (1.0 - binary_entropy(e11_ph_upper)) -
                     s.lambda_ec - log_terms;
  s.key_bits = std::max(key, 0.0);
  s.bits_per_pulse = n_total_rounds > 0.0 ? s.key_bits / n_total_rounds : 0.0;
  s.bits_per_second = s.bits_per_pulse * cfg.clock_hz;
  return s;
}

double plob_bound(double total_loss_db) {
  if (total_loss_db < 0.0) throw NumericError("plob_bound: negative loss");
  const double eta = std::pow(10.0, -total_loss_db / 10.0);
  if (eta >= 1.0) return std::numeric_limits<double>::infinity();
  return -std::log1p(-eta) / kLn2;
}

EstimationResult run_estimation(const TallyTable& t, const SystemConfig& cfg,
                                bool point_estimate) {
  EstimationResult r = estimate_n11_z_impl(t, cfg, point_estimate);
  estimate_e11_ph_impl(t, cfg, r, point_estimate);
  return r;
}

}  // namespace mpqkd
