#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hybridgait/control.hpp"
#include "hybridgait/model.hpp"
#include "hybridgait/outputs.hpp"
#include "hybridgait/types.hpp"

namespace hybridgait {

class StabilityError : public std::runtime_error {
 public:
  explicit StabilityError(const std::string& what) : std::runtime_error(what) {}
};

// Error-system matrix [0 I; -KP -KD] of the output tracking loop.
Mat build_A(const ControllerGains& gains);

// Unique symmetric positive definite P solving P*A + A^T*P + Q = 0, computed
// from the vectorized dense linear system. Throws StabilityError when A is
// not Hurwitz or the solution fails to be positive definite.
Mat solve_lyapunov(const Mat& A, const Mat& Q);

// Quadratic Lyapunov data for the continuous-phase error dynamics, plus the
// weight sigma of the foot-placement augmentation.
struct StabilityCertificate {
  Mat A;
  Mat Q;
  Mat P;
  double c1 = 0.0;    // smallest eigenvalue of P
  double c2 = 0.0;    // largest eigenvalue of P
  double c3 = 0.0;    // smallest eigenvalue of Q
  double rate = 0.0;  // decay rate of V within a phase, c3 / c2
  double sigma = 1.0;
  bool sigma_provisional = true;  // sigma not yet derived from a placement gain
  bool hurwitz = false;

  double v(const Vec& x) const;
  double v_aug(const Vec& x, double y_st, double y_std) const;
};

// Builds the certificate for the given gains. Q defaults to the identity
// when empty. sigma <= 0 leaves a provisional sigma of 1.
StabilityCertificate certificate(const ControllerGains& gains, const Mat& Q = Mat(),
                                 double sigma = 0.0);

// sigma = 2 * k_sigma * lambda_max(P) * alpha_st, with margin k_sigma > 1.
// Clears the provisional flag.
void apply_placement_sigma(StabilityCertificate& cert, double alpha_st, double k_sigma = 2.0);

// One completed walking step.
struct StepRecord {
  int k = 0;
  double T = 0.0;    // landing time
  double tau = 0.0;  // landing time the reference called for
  double y_st = 0.0;  // lateral stance-foot position in the step frame
  double va_minus = 0.0;  // augmented Lyapunov value just before the landing
  double va_plus = 0.0;   // and just after
  Vec x_minus;
  Vec x_plus;
};

// Root of f on [lo, hi] by Brent's method. f(lo) and f(hi) must differ in
// sign; the result is within tol of a true root.
double brent_root(const std::function<double(double)>& f, double lo, double hi,
                  double tol = 1e-12);

// Time at which the reference profile carries the phase coordinate to
// theta_star, from sd(tau) - x_st = theta_star. The bracket starts at
// [t_lo, t_hi] and t_hi grows as needed.
double desired_impact_time(const SdProfile& sd, double x_st, double theta_star, double t_lo,
                           double t_hi);

// Empirical per-step contraction data and finite-difference sensitivity
// estimates of the landing map and guard timing.
struct ContractionEstimate {
  std::vector<double> rho;  // V_a|k+ / V_a|k-1+ per step
  double b_hat = 0.0;       // max rho over the steady window (first 2 steps excluded)
  bool contraction_established = false;

  double L_dx = 0.0;   // landing-map sensitivity to the error state
  double L_dt = 0.0;   // landing-map sensitivity to the landing time
  double L_dst = 0.0;  // landing-map sensitivity to the stance-foot offset
  double L_Tx = 0.0;   // landing-time sensitivity to the phase-start error
  double beta_st = 0.0;  // placement sensitivity to the phase-start error

  double alpha_x = 0.0;
  double gamma_x = 0.0;
  double alpha_st = 0.0;
  double epsilon = 0.05;  // probe size
};

struct SimTrace;

ContractionEstimate estimate_contraction(const SimTrace& trace, const StabilityCertificate& cert,
                                         const RobotModel& model, const VirtualConstraint& vc,
                                         const SdProfile& sd, const ControllerGains& gains);

}  // namespace hybridgait
