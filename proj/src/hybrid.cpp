#include "hybridgait/hybrid.hpp"

#include <Eigen/Dense>

namespace hybridgait {

double swing_height(const RobotModel& model, const Vec& q) {
  return model.task_values(q)[task::kSwingZ];
}

double swing_vertical_velocity(const RobotModel& model, const Vec& q, const Vec& qd) {
  TaskKin tk = model.task_kinematics(q, qd);
  return tk.J.row(task::kSwingZ).dot(qd);
}

Vec relabel(const RobotModel& model, const Vec& q) { return model.mirror().apply(q); }

ImpactResult impact_map(const RobotModel& model, const Vec& q_minus, const Vec& qd_minus) {
  const int n = model.n();
  const int ne = n + 6;
  if (!model.has_task_points()) {
    throw ModelError("impact_map: model has no swing contact point");
  }
  Mat Me = model.extended_mass_matrix(q_minus);
  Mat Jc = model.swing_contact_jacobian(q_minus);

  Vec v_minus = Vec::Zero(ne);
  v_minus.tail(n) = qd_minus;

  // Impulsive contact at the landing sole: momentum balance with an unknown
  // impulse, the sole spatial velocity driven to zero.
  Mat kkt = Mat::Zero(ne + 6, ne + 6);
  kkt.topLeftCorner(ne, ne) = Me;
  kkt.block(0, ne, ne, 6) = -Jc.transpose();
  kkt.block(ne, 0, 6, ne) = Jc;
  Vec rhs = Vec::Zero(ne + 6);
  rhs.head(ne) = Me * v_minus;

  Eigen::JacobiSVD<Mat> svd(kkt);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  const double smax = svd.singularValues()(0);
  if (!(smin > 0.0) || smax / smin > 1e10) {
    throw ModelError("impact_map: contact system is degenerate at this configuration");
  }
  Vec sol = kkt.partialPivLu().solve(rhs);

  ImpactResult out;
  out.qd_extended_plus = sol.head(ne);
  out.impulse = sol.tail(6);
  out.q_plus = model.mirror().apply(q_minus);
  out.qd_plus = model.mirror().apply(out.qd_extended_plus.tail(n));
  const double ke_minus = 0.5 * qd_minus.dot(model.mass_matrix(q_minus) * qd_minus);
  const double ke_plus = 0.5 * out.qd_extended_plus.dot(Me * out.qd_extended_plus);
  out.energy_loss = ke_minus - ke_plus;
  return out;
}

}  // namespace hybridgait
