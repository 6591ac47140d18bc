#include "hybridgait/stability.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hybridgait {
namespace {

double max_real_eigenvalue(const Mat& A) {
  return Eigen::EigenSolver<Mat>(A, false).eigenvalues().real().maxCoeff();
}

void require_symmetric(const Mat& M, const char* name) {
  if (M.rows() != M.cols()) {
    std::ostringstream msg;
    msg << name << " must be square, got " << M.rows() << "x" << M.cols();
    throw std::invalid_argument(msg.str());
  }
  const double scale = std::max(1.0, M.norm());
  if ((M - M.transpose()).norm() > 1e-12 * scale) {
    throw std::invalid_argument(std::string(name) + " must be symmetric");
  }
}

}  // namespace

Mat build_A(const ControllerGains& gains) {
  const int n = gains.n();
  Mat A = Mat::Zero(2 * n, 2 * n);
  A.topRightCorner(n, n) = Mat::Identity(n, n);
  A.bottomLeftCorner(n, n) = (-gains.kp()).asDiagonal();
  A.bottomRightCorner(n, n) = (-gains.kd()).asDiagonal();
  return A;
}

Mat solve_lyapunov(const Mat& A, const Mat& Q) {
  if (A.rows() != A.cols()) {
    throw std::invalid_argument("solve_lyapunov: A must be square");
  }
  if (Q.rows() != A.rows() || Q.cols() != A.cols()) {
    throw std::invalid_argument("solve_lyapunov: Q must match the size of A");
  }
  if (max_real_eigenvalue(A) >= 0.0) {
    throw StabilityError("solve_lyapunov: A is not Hurwitz, no decaying certificate exists");
  }

  // Vectorize P*A + A^T*P = -Q columnwise. vec(P*A) = (A^T (x) I) vec(P) and
  // vec(A^T*P) = (I (x) A^T) vec(P), so the (i, j) block of the system matrix
  // is A(j, i)*I plus A^T on the diagonal blocks.
  const int m = static_cast<int>(A.rows());
  Mat K = Mat::Zero(m * m, m * m);
  const Mat At = A.transpose();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      for (int r = 0; r < m; ++r) K(i * m + r, j * m + r) += A(j, i);
    }
    K.block(i * m, i * m, m, m) += At;
  }
  const Eigen::Map<const Vec> vec_q(Q.data(), m * m);
  const Vec vec_p = K.partialPivLu().solve(-vec_q);
  Mat P = Eigen::Map<const Mat>(vec_p.data(), m, m);
  P = 0.5 * (P + P.transpose()).eval();

  const Eigen::LLT<Mat> llt(P);
  if (llt.info() != Eigen::Success) {
    throw StabilityError("solve_lyapunov: solution is not positive definite");
  }
  return P;
}

double StabilityCertificate::v(const Vec& x) const {
  if (x.size() != P.rows()) {
    std::ostringstream msg;
    msg << "StabilityCertificate::v: state has size " << x.size() << ", expected " << P.rows();
    throw std::invalid_argument(msg.str());
  }
  return x.dot(P * x);
}

double StabilityCertificate::v_aug(const Vec& x, double y_st, double y_std) const {
  const double dev = y_st - y_std;
  return v(x) + sigma * dev * dev;
}

StabilityCertificate certificate(const ControllerGains& gains, const Mat& Q, double sigma) {
  const int n = gains.n();
  StabilityCertificate cert;
  cert.A = build_A(gains);
  cert.Q = Q.size() == 0 ? Mat(Mat::Identity(2 * n, 2 * n)) : Q;
  require_symmetric(cert.Q, "certificate: Q");
  if (cert.Q.rows() != 2 * n) {
    std::ostringstream msg;
    msg << "certificate: Q has size " << cert.Q.rows() << ", expected " << 2 * n;
    throw std::invalid_argument(msg.str());
  }
  const Eigen::SelfAdjointEigenSolver<Mat> q_eigs(cert.Q, Eigen::EigenvaluesOnly);
  cert.c3 = q_eigs.eigenvalues().minCoeff();
  if (cert.c3 <= 0.0) {
    throw std::invalid_argument("certificate: Q must be positive definite");
  }

  cert.P = solve_lyapunov(cert.A, cert.Q);
  const Eigen::SelfAdjointEigenSolver<Mat> p_eigs(cert.P, Eigen::EigenvaluesOnly);
  cert.c1 = p_eigs.eigenvalues().minCoeff();
  cert.c2 = p_eigs.eigenvalues().maxCoeff();
  cert.rate = cert.c3 / cert.c2;
  cert.hurwitz = true;

  if (sigma > 0.0) {
    cert.sigma = sigma;
    cert.sigma_provisional = false;
  } else {
    cert.sigma = 1.0;
    cert.sigma_provisional = true;
  }
  return cert;
}

void apply_placement_sigma(StabilityCertificate& cert, double alpha_st, double k_sigma) {
  if (alpha_st <= 0.0) {
    throw std::invalid_argument("apply_placement_sigma: alpha_st must be positive");
  }
  if (k_sigma <= 1.0) {
    throw std::invalid_argument("apply_placement_sigma: k_sigma must exceed 1");
  }
  cert.sigma = 2.0 * k_sigma * cert.c2 * alpha_st;
  cert.sigma_provisional = false;
}

double brent_root(const std::function<double(double)>& f, double lo, double hi, double tol) {
  double a = lo;
  double b = hi;
  double fa = f(a);
  double fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0.0) == (fb > 0.0)) {
    throw std::invalid_argument("brent_root: interval does not bracket a root");
  }
  double c = a;
  double fc = fa;
  double d = b - a;
  double e = d;
  for (int iter = 0; iter < 200; ++iter) {
    if ((fb > 0.0) == (fc > 0.0)) {
      c = a;
      fc = fa;
      d = b - a;
      e = d;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      // Inverse quadratic interpolation, falling back to the secant form
      // when only two points are distinct.
      const double s = fb / fa;
      double p;
      double q;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        const double r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    if (std::abs(d) > tol1) {
      b += d;
    } else {
      b += xm > 0.0 ? tol1 : -tol1;
    }
    fb = f(b);
  }
  return b;
}

double desired_impact_time(const SdProfile& sd, double x_st, double theta_star, double t_lo,
                           double t_hi) {
  const auto f = [&](double t) { return sd.value(t) - x_st - theta_star; };
  if (f(t_lo) > 0.0) {
    throw std::invalid_argument(
        "desired_impact_time: the reference already passed the target at the bracket start");
  }
  double hi = t_hi > t_lo ? t_hi : t_lo + 1.0;
  int grow = 0;
  while (f(hi) < 0.0) {
    if (++grow > 64) {
      throw std::invalid_argument("desired_impact_time: the reference never reaches the target");
    }
    hi = t_lo + 2.0 * (hi - t_lo);
  }
  return brent_root(f, t_lo, hi, 1e-12);
}

}  // namespace hybridgait
