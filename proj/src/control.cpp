#include "hybridgait/control.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <utility>

namespace hybridgait {

namespace {

std::string format_config(const Vec& q) {
  std::ostringstream os;
  os.precision(6);
  os << "[";
  for (int i = 0; i < q.size(); ++i) {
    if (i > 0) os << ", ";
    os << q[i];
  }
  os << "]";
  return os.str();
}

}  // namespace

ControllerGains::ControllerGains(Vec kp, Vec kd) : kp_(std::move(kp)), kd_(std::move(kd)) {
  if (kp_.size() == 0 || kp_.size() != kd_.size()) {
    throw std::invalid_argument("gains: kp and kd must have the same nonzero length");
  }
  for (int i = 0; i < kp_.size(); ++i) {
    if (!(kp_[i] > 0.0) || !(kd_[i] > 0.0)) {
      throw std::invalid_argument("gains: diagonal entries must be positive");
    }
  }
  // With diagonal gains the error system splits into channels whose
  // characteristic polynomial is s^2 + kd*s + kp, so verify each channel's
  // largest eigenvalue real part directly.
  for (int i = 0; i < kp_.size(); ++i) {
    const double disc = 0.25 * kd_[i] * kd_[i] - kp_[i];
    const double max_re = disc >= 0.0 ? -0.5 * kd_[i] + std::sqrt(disc) : -0.5 * kd_[i];
    if (!(max_re < 0.0)) {
      throw std::invalid_argument("gains: error system is not Hurwitz");
    }
  }
}

ControllerGains ControllerGains::uniform(int n, double kp, double kd) {
  return ControllerGains(Vec::Constant(n, kp), Vec::Constant(n, kd));
}

Vec pd_outer(const OutputEval& out, const ControllerGains& gains) {
  if (out.y.size() != gains.n() || out.ydot.size() != gains.n()) {
    throw std::invalid_argument("pd_outer: output dimension does not match the gains");
  }
  return -(gains.kp().asDiagonal() * out.y) - (gains.kd().asDiagonal() * out.ydot);
}

TorqueCommand torque(const RobotModel& model, double t, const JointState& state,
                     const VirtualConstraint& vc, const SdProfile& sd, const FootAnchor& anchor,
                     const ControllerGains& gains) {
  const int n = model.n();
  vc.check(n);

  const TaskKin tk = model.task_kinematics(state.q, state.qd);
  const double theta = tk.hc[task::kBaseX];
  const double theta_dot = tk.J.row(task::kBaseX).dot(state.qd);
  const Vec des_d = vc.desired_d(theta);
  const Vec des_dd = vc.desired_dd(theta);

  // Output Jacobian: every row except the forward-position row subtracts its
  // target's sensitivity to the phase variable.
  Mat Jh = tk.J;
  for (int i = 1; i < n; ++i) {
    Jh.row(i) -= des_d[i - 1] * tk.J.row(task::kBaseX);
  }

  // Acceleration drift of the outputs, everything in ydotdot that does not
  // multiply qdotdot. The forward-position row carries the explicit time
  // dependence through the reference profile.
  Vec drift(n);
  drift[0] = tk.Jdot_qdot[task::kBaseX] - sd.deriv2(t);
  for (int i = 1; i < n; ++i) {
    drift[i] = tk.Jdot_qdot[i] - des_d[i - 1] * tk.Jdot_qdot[task::kBaseX] -
               des_dd[i - 1] * theta_dot * theta_dot;
  }

  const Mat M = model.mass_matrix(state.q);
  const Mat decoupling = M.llt().solve(Jh.transpose()).transpose();

  Eigen::JacobiSVD<Mat> svd(decoupling);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(n - 1);
  if (!(smin > 0.0) || smax / smin > 1e10) {
    std::ostringstream os;
    os << "torque: decoupling matrix is near singular (condition ";
    if (smin > 0.0) {
      os << smax / smin;
    } else {
      os << "inf";
    }
    os << ") at configuration q = " << format_config(state.q);
    throw SingularityError(os.str());
  }

  const OutputEval out = evaluate_outputs(model, vc, sd, t, anchor, state.q, state.qd);
  const Vec v = pd_outer(out, gains);
  const Vec c = model.bias_forces(state.q, state.qd);

  TorqueCommand cmd;
  cmd.u = c + M * Jh.partialPivLu().solve(v - drift);
  cmd.saturated.assign(static_cast<size_t>(n), false);
  const Vec limits = model.torque_limits();
  for (int i = 0; i < n; ++i) {
    if (std::abs(cmd.u[i]) > limits[i]) {
      cmd.saturated[static_cast<size_t>(i)] = true;
      cmd.any_saturated = true;
    }
  }
  return cmd;
}

}  // namespace hybridgait
