#include "hybridgait/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>

namespace hybridgait {

namespace {

Mat3 skew3(const Vec3& v) {
  Mat3 S;
  S << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return S;
}

// World-frame pose and derived quantities for every joint-driven link.
struct Frames {
  std::vector<Mat3> R;
  std::vector<Vec3> p;     // link frame origin (joint center)
  std::vector<Vec3> axis;  // joint axis, world frame
  std::vector<Vec3> com;   // link com, world frame
};

Frames compute_frames(const RobotModel& m, const Vec& q) {
  const auto& links = m.links();
  const int n = m.n();
  Frames f;
  f.R.resize(n);
  f.p.resize(n);
  f.axis.resize(n);
  f.com.resize(n);
  for (int i = 0; i < n; ++i) {
    const LinkSpec& link = links[i];
    Mat3 Rp = Mat3::Identity();
    Vec3 pp = Vec3::Zero();
    if (link.parent >= 0) {
      Rp = f.R[link.parent];
      pp = f.p[link.parent];
    }
    f.p[i] = pp + Rp * link.origin;
    f.R[i] = Rp * Eigen::AngleAxisd(q[i], link.axis).toRotationMatrix();
    f.axis[i] = f.R[i] * link.axis;
    f.com[i] = f.p[i] + f.R[i] * link.com;
  }
  return f;
}

// Velocities and accelerations of link origins and coms, world frame. The
// root acceleration seeds the gravity offset so gravity never appears as a
// separate force term downstream.
struct Motion {
  std::vector<Vec3> w;      // link angular velocity
  std::vector<Vec3> wd;     // link angular acceleration
  std::vector<Vec3> v_o;    // velocity of the link origin point
  std::vector<Vec3> a_o;    // acceleration of the link origin point
  std::vector<Vec3> v_com;  // com velocity
  std::vector<Vec3> a_com;  // com acceleration (gravity offset included)
};

Motion compute_motion(const RobotModel& m, const Frames& f, const Vec& qd, const Vec& qdd,
                      bool gravity_offset) {
  const auto& links = m.links();
  const int n = m.n();
  Motion mo;
  mo.w.resize(n);
  mo.wd.resize(n);
  mo.v_o.resize(n);
  mo.a_o.resize(n);
  mo.v_com.resize(n);
  mo.a_com.resize(n);
  const Vec3 a_root = gravity_offset ? Vec3(0, 0, m.gravity()) : Vec3(Vec3::Zero());
  for (int i = 0; i < n; ++i) {
    const LinkSpec& link = links[i];
    Vec3 wp = Vec3::Zero(), wdp = Vec3::Zero();
    Vec3 vp = Vec3::Zero(), ap = a_root;
    Vec3 op = Vec3::Zero();
    if (link.parent >= 0) {
      wp = mo.w[link.parent];
      wdp = mo.wd[link.parent];
      vp = mo.v_o[link.parent];
      ap = mo.a_o[link.parent];
      op = f.p[link.parent];
    }
    const Vec3 r = f.p[i] - op;
    mo.v_o[i] = vp + wp.cross(r);
    mo.a_o[i] = ap + wdp.cross(r) + wp.cross(wp.cross(r));
    mo.w[i] = wp + qd[i] * f.axis[i];
    mo.wd[i] = wdp + qdd[i] * f.axis[i] + wp.cross(qd[i] * f.axis[i]);
    const Vec3 rc = f.com[i] - f.p[i];
    mo.v_com[i] = mo.v_o[i] + mo.w[i].cross(rc);
    mo.a_com[i] = mo.a_o[i] + mo.wd[i].cross(rc) + mo.w[i].cross(mo.w[i].cross(rc));
  }
  return mo;
}

// Net force on each link and its moment about the world origin.
struct LinkWrenches {
  std::vector<Vec3> force;
  std::vector<Vec3> torque_o;
};

LinkWrenches compute_link_wrenches(const RobotModel& m, const Frames& f, const Motion& mo) {
  const auto& links = m.links();
  const int n = m.n();
  LinkWrenches lw;
  lw.force.resize(n);
  lw.torque_o.resize(n);
  for (int i = 0; i < n; ++i) {
    const LinkSpec& link = links[i];
    Mat3 Iw = f.R[i] * link.inertia * f.R[i].transpose();
    Vec3 F = link.mass * mo.a_com[i];
    Vec3 N = Iw * mo.wd[i] + mo.w[i].cross(Iw * mo.w[i]);
    lw.force[i] = F;
    lw.torque_o[i] = N + f.com[i].cross(F);
  }
  return lw;
}

// 6x6 spatial inertia about the world origin for a body with the given com
// and world-frame rotational inertia, in [angular; linear] coordinates.
Eigen::Matrix<double, 6, 6> spatial_inertia_origin(double mass, const Vec3& com, const Mat3& Iw) {
  Eigen::Matrix<double, 6, 6> I;
  Mat3 cx = skew3(com);
  I.topLeftCorner<3, 3>() = Iw + mass * cx * cx.transpose();
  I.topRightCorner<3, 3>() = mass * cx;
  I.bottomLeftCorner<3, 3>() = mass * cx.transpose();
  I.bottomRightCorner<3, 3>() = mass * Mat3::Identity();
  return I;
}

using Vec6 = Eigen::Matrix<double, 6, 1>;

Vec6 joint_subspace(const Frames& f, int i) {
  Vec6 s;
  s.head<3>() = f.axis[i];
  s.tail<3>() = f.p[i].cross(f.axis[i]);
  return s;
}

// Time derivative of the Euler rate map along the given Euler rates.
Mat3 euler_rate_map_dot(const Vec3& rpy, const Vec3& rpy_dot) {
  const Mat3 Ky = skew3(Vec3::UnitY());
  const Mat3 Kz = skew3(Vec3::UnitZ());
  Mat3 Ry = Eigen::AngleAxisd(rpy[1], Vec3::UnitY()).toRotationMatrix();
  Mat3 Rz = Eigen::AngleAxisd(rpy[2], Vec3::UnitZ()).toRotationMatrix();
  Mat3 Edot = Mat3::Zero();
  Edot.col(0) =
      rpy_dot[2] * Kz * Rz * Ry * Vec3::UnitX() + rpy_dot[1] * Rz * Ky * Ry * Vec3::UnitX();
  Edot.col(1) = rpy_dot[2] * Kz * Rz * Vec3::UnitY();
  return Edot;
}

void check_pitch_regular(const Vec3& rpy, const char* what) {
  if (std::abs(std::cos(rpy[1])) < 1e-8) {
    throw ModelError(std::string(what) + ": orientation at the pitch singularity");
  }
}

}  // namespace

Vec TaskFrames::values() const {
  Vec v(task::kCount);
  v[task::kBaseX] = base_pos.x();
  v[task::kBaseY] = base_pos.y();
  v[task::kBaseZ] = base_pos.z();
  v[task::kBaseRoll] = base_roll;
  v[task::kBasePitch] = base_pitch;
  v[task::kSwingX] = swing_pos.x();
  v[task::kSwingY] = swing_pos.y();
  v[task::kSwingZ] = swing_pos.z();
  v[task::kSwingRoll] = swing_roll;
  v[task::kSwingPitch] = swing_pitch;
  return v;
}

const MirrorMap& RobotModel::mirror() const {
  if (!has_mirror()) {
    throw ModelError("model '" + name_ + "' has no mirror map");
  }
  return mirror_;
}

Vec RobotModel::lower_limits() const {
  Vec v(n());
  for (int i = 0; i < n(); ++i) v[i] = links_[i].q_min;
  return v;
}

Vec RobotModel::upper_limits() const {
  Vec v(n());
  for (int i = 0; i < n(); ++i) v[i] = links_[i].q_max;
  return v;
}

Vec RobotModel::torque_limits() const {
  Vec v(n());
  for (int i = 0; i < n(); ++i) v[i] = links_[i].torque_limit;
  return v;
}

int RobotModel::link_index(const std::string& name) const {
  for (int i = 0; i < n(); ++i) {
    if (links_[i].link_name == name || links_[i].joint_name == name) return i;
  }
  throw ModelError("model '" + name_ + "' has no link or joint named '" + name + "'");
}

void RobotModel::check_dim(const Vec& q, const char* what) const {
  if (q.size() != n()) {
    throw ModelError(std::string(what) + ": expected dimension " + std::to_string(n()) + ", got " +
                     std::to_string(q.size()));
  }
}

std::vector<LinkPose> RobotModel::forward_kinematics(const Vec& q) const {
  check_dim(q, "forward_kinematics");
  Frames f = compute_frames(*this, q);
  std::vector<LinkPose> poses(n());
  for (int i = 0; i < n(); ++i) {
    poses[i].R = f.R[i];
    poses[i].p = f.p[i];
  }
  return poses;
}

Vec3 RobotModel::point_position(const Vec& q, int link, const Vec3& local) const {
  check_dim(q, "point_position");
  if (link < 0 || link >= n()) throw ModelError("point_position: link index out of range");
  Frames f = compute_frames(*this, q);
  return f.p[link] + f.R[link] * local;
}

TaskFrames RobotModel::task_frames(const Vec& q) const {
  check_dim(q, "task_frames");
  if (!has_task_points()) {
    throw ModelError("model '" + name_ + "' has no base/swing task points");
  }
  Frames f = compute_frames(*this, q);
  TaskFrames out;
  out.base_pos = f.p[base_link_] + f.R[base_link_] * base_point_;
  out.swing_pos = f.p[swing_link_] + f.R[swing_link_] * swing_point_;
  Vec3 rpy_b = euler_zyx_from_rotation(f.R[base_link_]);
  Vec3 rpy_s = euler_zyx_from_rotation(f.R[swing_link_]);
  out.base_roll = rpy_b[0];
  out.base_pitch = rpy_b[1];
  out.swing_roll = rpy_s[0];
  out.swing_pitch = rpy_s[1];
  return out;
}

Vec RobotModel::task_values(const Vec& q) const { return task_frames(q).values(); }

TaskKin RobotModel::task_kinematics(const Vec& q, const Vec& qd) const {
  check_dim(q, "task_kinematics");
  check_dim(qd, "task_kinematics");
  if (!has_task_points()) {
    throw ModelError("model '" + name_ + "' has no base/swing task points");
  }
  Frames f = compute_frames(*this, q);
  Motion mo = compute_motion(*this, f, qd, Vec::Zero(n()), false);

  TaskKin out;
  out.hc = Vec(task::kCount);
  out.J = Mat::Zero(task::kCount, n());
  out.Jdot_qdot = Vec(task::kCount);

  struct PointSpec {
    int link;
    const Vec3* local;
    int pos_row;
    int ang_row;
  };
  const PointSpec points[2] = {{base_link_, &base_point_, task::kBaseX, task::kBaseRoll},
                               {swing_link_, &swing_point_, task::kSwingX, task::kSwingRoll}};
  for (const PointSpec& ps : points) {
    const int L = ps.link;
    const Vec3 pt = f.p[L] + f.R[L] * (*ps.local);
    const Vec3 rpy = euler_zyx_from_rotation(f.R[L]);
    check_pitch_regular(rpy, "task_kinematics");
    const Mat3 E = euler_rate_map(rpy);
    const Mat3 Einv = E.inverse();

    out.hc.segment<3>(ps.pos_row) = pt;
    out.hc[ps.ang_row] = rpy[0];
    out.hc[ps.ang_row + 1] = rpy[1];

    for (int j : ancestors_[L]) {
      const Vec3 lin = f.axis[j].cross(pt - f.p[j]);
      const Vec3 erates = Einv * f.axis[j];
      out.J.block<3, 1>(ps.pos_row, j) = lin;
      out.J(ps.ang_row, j) = erates[0];
      out.J(ps.ang_row + 1, j) = erates[1];
    }

    // Velocity-product accelerations: task acceleration at zero joint
    // acceleration. Position rows take the point acceleration directly; the
    // Euler rows solve eta_dd = E^{-1} (omega_dot - Edot eta_dot).
    const Vec3 rc = pt - f.p[L];
    const Vec3 a_pt =
        mo.a_o[L] + mo.wd[L].cross(rc) + mo.w[L].cross(mo.w[L].cross(rc));
    const Vec3 eta_dot = Einv * mo.w[L];
    const Vec3 eta_dd = Einv * (mo.wd[L] - euler_rate_map_dot(rpy, eta_dot) * eta_dot);
    out.Jdot_qdot.segment<3>(ps.pos_row) = a_pt;
    out.Jdot_qdot[ps.ang_row] = eta_dd[0];
    out.Jdot_qdot[ps.ang_row + 1] = eta_dd[1];
  }
  return out;
}

Mat RobotModel::mass_matrix(const Vec& q) const {
  check_dim(q, "mass_matrix");
  Frames f = compute_frames(*this, q);
  std::vector<Eigen::Matrix<double, 6, 6>> IC(n());
  for (int i = 0; i < n(); ++i) {
    Mat3 Iw = f.R[i] * links_[i].inertia * f.R[i].transpose();
    IC[i] = spatial_inertia_origin(links_[i].mass, f.com[i], Iw);
  }
  for (int i = n() - 1; i >= 0; --i) {
    if (links_[i].parent >= 0) IC[links_[i].parent] += IC[i];
  }
  Mat M = Mat::Zero(n(), n());
  for (int j = 0; j < n(); ++j) {
    const Vec6 Fj = IC[j] * joint_subspace(f, j);
    M(j, j) = joint_subspace(f, j).dot(Fj);
    for (int i = links_[j].parent; i >= 0; i = links_[i].parent) {
      const double v = joint_subspace(f, i).dot(Fj);
      M(i, j) = v;
      M(j, i) = v;
    }
  }
  return M;
}

Vec RobotModel::inverse_dynamics(const Vec& q, const Vec& qd, const Vec& qdd) const {
  check_dim(q, "inverse_dynamics");
  check_dim(qd, "inverse_dynamics");
  check_dim(qdd, "inverse_dynamics");
  Frames f = compute_frames(*this, q);
  Motion mo = compute_motion(*this, f, qd, qdd, true);
  LinkWrenches lw = compute_link_wrenches(*this, f, mo);
  // Subtree wrench accumulation, then projection on the joint axes.
  std::vector<Vec3> fs(lw.force), ns(lw.torque_o);
  for (int i = n() - 1; i >= 0; --i) {
    if (links_[i].parent >= 0) {
      fs[links_[i].parent] += fs[i];
      ns[links_[i].parent] += ns[i];
    }
  }
  Vec tau(n());
  for (int i = 0; i < n(); ++i) {
    tau[i] = f.axis[i].dot(ns[i] - f.p[i].cross(fs[i]));
  }
  return tau;
}

Vec RobotModel::bias_forces(const Vec& q, const Vec& qd) const {
  return inverse_dynamics(q, qd, Vec::Zero(n()));
}

GroundWrench RobotModel::ground_wrench(const Vec& q, const Vec& qd, const Vec& qdd) const {
  check_dim(q, "ground_wrench");
  Frames f = compute_frames(*this, q);
  Motion mo = compute_motion(*this, f, qd, qdd, true);
  LinkWrenches lw = compute_link_wrenches(*this, f, mo);
  GroundWrench w;
  for (int i = 0; i < n(); ++i) {
    w.force += lw.force[i];
    w.torque += lw.torque_o[i];
  }
  // The root body is static; with the gravity offset folded into the
  // accelerations its share of the reaction is its weight alone.
  w.force += root_.mass * Vec3(0, 0, gravity_);
  w.torque += root_.com.cross(root_.mass * Vec3(0, 0, gravity_));
  return w;
}

double RobotModel::potential_energy(const Vec& q) const {
  check_dim(q, "potential_energy");
  Frames f = compute_frames(*this, q);
  double v = gravity_ * root_.mass * root_.com.z();
  for (int i = 0; i < n(); ++i) {
    v += gravity_ * links_[i].mass * f.com[i].z();
  }
  return v;
}

double RobotModel::kinetic_energy(const Vec& q, const Vec& qd) const {
  check_dim(q, "kinetic_energy");
  check_dim(qd, "kinetic_energy");
  Frames f = compute_frames(*this, q);
  Motion mo = compute_motion(*this, f, qd, Vec::Zero(n()), false);
  double ke = 0.0;
  for (int i = 0; i < n(); ++i) {
    Mat3 Iw = f.R[i] * links_[i].inertia * f.R[i].transpose();
    ke += 0.5 * links_[i].mass * mo.v_com[i].squaredNorm() + 0.5 * mo.w[i].dot(Iw * mo.w[i]);
  }
  return ke;
}

Vec3 RobotModel::com_position(const Vec& q) const {
  check_dim(q, "com_position");
  Frames f = compute_frames(*this, q);
  Vec3 c = root_.mass * root_.com;
  for (int i = 0; i < n(); ++i) {
    c += links_[i].mass * f.com[i];
  }
  return c / total_mass_;
}

Mat RobotModel::extended_mass_matrix(const Vec& q) const {
  check_dim(q, "extended_mass_matrix");
  Frames f = compute_frames(*this, q);
  std::vector<Eigen::Matrix<double, 6, 6>> IC(n());
  for (int i = 0; i < n(); ++i) {
    Mat3 Iw = f.R[i] * links_[i].inertia * f.R[i].transpose();
    IC[i] = spatial_inertia_origin(links_[i].mass, f.com[i], Iw);
  }
  for (int i = n() - 1; i >= 0; --i) {
    if (links_[i].parent >= 0) IC[links_[i].parent] += IC[i];
  }
  Eigen::Matrix<double, 6, 6> IC_total = spatial_inertia_origin(root_.mass, root_.com, root_.inertia);
  for (int i = 0; i < n(); ++i) {
    if (links_[i].parent < 0) IC_total += IC[i];
  }
  // Root motion directions at the identity root pose, [xyz; rpy] order. The
  // Euler rate map is the identity there, so rotations map straight to world
  // angular velocity about the origin.
  std::array<Vec6, 6> base;
  for (int k = 0; k < 3; ++k) {
    base[k].setZero();
    base[k][3 + k] = 1.0;
    base[3 + k].setZero();
    base[3 + k][k] = 1.0;
  }
  const int ne = n() + 6;
  Mat Me = Mat::Zero(ne, ne);
  for (int a = 0; a < 6; ++a) {
    const Vec6 Fa = IC_total * base[a];
    for (int b = a; b < 6; ++b) {
      Me(a, b) = base[b].dot(Fa);
      Me(b, a) = Me(a, b);
    }
  }
  for (int j = 0; j < n(); ++j) {
    const Vec6 Fj = IC[j] * joint_subspace(f, j);
    for (int a = 0; a < 6; ++a) {
      Me(a, 6 + j) = base[a].dot(Fj);
      Me(6 + j, a) = Me(a, 6 + j);
    }
    Me(6 + j, 6 + j) = joint_subspace(f, j).dot(Fj);
    for (int i = links_[j].parent; i >= 0; i = links_[i].parent) {
      const double v = joint_subspace(f, i).dot(Fj);
      Me(6 + i, 6 + j) = v;
      Me(6 + j, 6 + i) = v;
    }
  }
  return Me;
}

Mat RobotModel::swing_contact_jacobian(const Vec& q) const {
  check_dim(q, "swing_contact_jacobian");
  if (!has_task_points()) {
    throw ModelError("model '" + name_ + "' has no base/swing task points");
  }
  Frames f = compute_frames(*this, q);
  const int L = swing_link_;
  const Vec3 sole = f.p[L] + f.R[L] * swing_point_;
  Mat Jc = Mat::Zero(6, n() + 6);
  Jc.block<3, 3>(0, 0) = Mat3::Identity();
  Jc.block<3, 3>(0, 3) = -skew3(sole);
  Jc.block<3, 3>(3, 3) = Mat3::Identity();
  for (int j : ancestors_[L]) {
    Jc.block<3, 1>(0, 6 + j) = f.axis[j].cross(sole - f.p[j]);
    Jc.block<3, 1>(3, 6 + j) = f.axis[j];
  }
  return Jc;
}

void RobotModel::validate() const {
  if (links_.empty()) throw ModelError("model '" + name_ + "' has no joints");
  for (int i = 0; i < n(); ++i) {
    const LinkSpec& link = links_[i];
    if (link.parent >= i) {
      throw ModelError("joint '" + link.joint_name + "': parent must precede child");
    }
    if (std::abs(link.axis.norm() - 1.0) > 1e-9) {
      throw ModelError("joint '" + link.joint_name + "': axis must be a unit vector");
    }
    if (!(link.mass > 0.0)) {
      throw ModelError("link '" + link.link_name + "': mass must be positive");
    }
    Eigen::LLT<Mat3> llt(link.inertia);
    if (llt.info() != Eigen::Success) {
      throw ModelError("link '" + link.link_name + "': inertia must be positive definite");
    }
    if (!(link.q_min < link.q_max)) {
      throw ModelError("joint '" + link.joint_name + "': limits must satisfy q_min < q_max");
    }
    if (!(link.torque_limit > 0.0)) {
      throw ModelError("joint '" + link.joint_name + "': torque_limit must be positive");
    }
  }
  if (!(root_.mass > 0.0)) {
    throw ModelError("link '" + root_.link_name + "': mass must be positive");
  }
  if (!(gravity_ > 0.0)) throw ModelError("gravity must be positive");
  if (has_mirror()) {
    Mat square = mirror_.S * mirror_.S;
    if ((square - Mat::Identity(n(), n())).cwiseAbs().maxCoeff() > 0) {
      throw ModelError("mirror map must be an involution");
    }
  }
}

Vec3 euler_zyx_from_rotation(const Mat3& R) {
  const double sp = -R(2, 0);
  const double pitch = std::asin(std::clamp(sp, -1.0, 1.0));
  const double roll = std::atan2(R(2, 1), R(2, 2));
  const double yaw = std::atan2(R(1, 0), R(0, 0));
  return Vec3(roll, pitch, yaw);
}

Mat3 rotation_from_euler_zyx(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy[2], Vec3::UnitZ()) * Eigen::AngleAxisd(rpy[1], Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy[0], Vec3::UnitX()))
      .toRotationMatrix();
}

Mat3 euler_rate_map(const Vec3& rpy) {
  const double ct = std::cos(rpy[1]);
  const double st = std::sin(rpy[1]);
  const double cp = std::cos(rpy[2]);
  const double sp = std::sin(rpy[2]);
  Mat3 E;
  E << cp * ct, -sp, 0, sp * ct, cp, 0, -st, 0, 1;
  return E;
}

}  // namespace hybridgait
