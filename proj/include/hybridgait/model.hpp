#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "hybridgait/types.hpp"

namespace hybridgait {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One revolute joint together with the link it drives. Link frames coincide
// with the world frame at q = 0; the joint origin is expressed in the parent
// link frame and the axis in the child link frame.
struct LinkSpec {
  std::string joint_name;
  std::string link_name;
  int parent = -1;  // index into RobotModel::links(), -1 means the root link
  Vec3 origin = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();  // about the com, in link frame axes
  double q_min = 0.0;
  double q_max = 0.0;
  double torque_limit = 0.0;
};

// The fixed root body (the stance foot). Its sole frame is the world origin.
struct RootSpec {
  std::string link_name;
  double mass = 0.0;
  Vec3 com = Vec3::Zero();
  Mat3 inertia = Mat3::Zero();
};

// Leg-swap relabeling: a signed permutation S with S*S = I. Positions map as
// q_new = S q_old and joint rates the same way.
struct MirrorMap {
  Mat S;
  Vec apply(const Vec& q) const { return S * q; }
};

struct LinkPose {
  Mat3 R = Mat3::Identity();
  Vec3 p = Vec3::Zero();
};

// Task coordinates relative to the stance sole frame: base-point position and
// base roll/pitch, swing-sole position and swing-foot roll/pitch.
struct TaskFrames {
  Vec3 base_pos = Vec3::Zero();
  double base_roll = 0.0;
  double base_pitch = 0.0;
  Vec3 swing_pos = Vec3::Zero();
  double swing_roll = 0.0;
  double swing_pitch = 0.0;

  // Packs the fields in the task:: row order.
  Vec values() const;
};

// Task values together with their configuration Jacobian and the
// velocity-product acceleration term d/dt(J q̇) - J q̈ = Jdot q̇.
struct TaskKin {
  Vec hc;
  Mat J;
  Vec Jdot_qdot;
};

// Reaction applied by the ground on the robot at the stance sole origin,
// world frame.
struct GroundWrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();
};

// Rigid-body model of a stance-foot-pinned kinematic tree. Immutable after
// construction; all member functions are const and thread-safe.
class RobotModel {
 public:
  static RobotModel load(const std::string& path);
  static RobotModel parse(const std::string& text, const std::string& source_name = "<string>");

  int n() const { return static_cast<int>(links_.size()); }
  const std::string& name() const { return name_; }
  double gravity() const { return gravity_; }
  double nominal_base_height() const { return nominal_base_height_; }
  // Stance-sole support rectangle {x_min, x_max, y_min, y_max} in the sole frame.
  const std::array<double, 4>& foot_rect() const { return foot_rect_; }
  double total_mass() const { return total_mass_; }
  const std::vector<LinkSpec>& links() const { return links_; }
  const RootSpec& root() const { return root_; }
  // Actuation matrix; the model is fully actuated, so this is the identity.
  const Mat& actuation() const { return B_u_; }

  bool has_mirror() const { return mirror_.S.size() > 0; }
  const MirrorMap& mirror() const;
  bool has_task_points() const { return base_link_ >= 0 && swing_link_ >= 0; }
  int base_link() const { return base_link_; }
  int swing_link() const { return swing_link_; }
  const Vec3& base_point() const { return base_point_; }
  const Vec3& swing_point() const { return swing_point_; }

  Vec lower_limits() const;
  Vec upper_limits() const;
  Vec torque_limits() const;

  // Index of the link driven by the named joint (link names match too).
  int link_index(const std::string& name) const;

  // Kinematics. The returned vector holds one pose per joint-driven link, in
  // joint order; the root pose is the identity.
  std::vector<LinkPose> forward_kinematics(const Vec& q) const;
  Vec3 point_position(const Vec& q, int link, const Vec3& local) const;
  TaskFrames task_frames(const Vec& q) const;
  Vec task_values(const Vec& q) const;
  TaskKin task_kinematics(const Vec& q, const Vec& qd) const;

  // Pinned dynamics M(q) q̈ + c(q, q̇) = B_u u.
  Mat mass_matrix(const Vec& q) const;
  Vec bias_forces(const Vec& q, const Vec& qd) const;
  Vec inverse_dynamics(const Vec& q, const Vec& qd, const Vec& qdd) const;
  GroundWrench ground_wrench(const Vec& q, const Vec& qd, const Vec& qdd) const;

  double potential_energy(const Vec& q) const;
  double kinetic_energy(const Vec& q, const Vec& qd) const;
  Vec3 com_position(const Vec& q) const;

  // Floating-root quantities used by the impact map. Extended coordinates are
  // [root xyz; root roll/pitch/yaw; q] with the root pose evaluated at the
  // identity, so the six root columns are the canonical translations and
  // rotations about the stance sole origin.
  Mat extended_mass_matrix(const Vec& q) const;
  // 6 x (n+6) contact Jacobian of the swing foot: rows 0-2 the swing sole
  // point linear velocity, rows 3-5 the swing foot angular velocity.
  Mat swing_contact_jacobian(const Vec& q) const;

 private:
  friend class ModelParser;

  void validate() const;
  void check_dim(const Vec& q, const char* what) const;

  std::string name_;
  double gravity_ = 9.81;
  double nominal_base_height_ = 0.0;
  std::array<double, 4> foot_rect_ = {0, 0, 0, 0};
  RootSpec root_;
  std::vector<LinkSpec> links_;
  std::vector<std::vector<int>> ancestors_;  // per link, path root -> link
  Mat B_u_;
  MirrorMap mirror_;
  int base_link_ = -1;
  int swing_link_ = -1;
  Vec3 base_point_ = Vec3::Zero();
  Vec3 swing_point_ = Vec3::Zero();
  double total_mass_ = 0.0;
};

// Euler angle helpers shared by the model and tests. Angles follow the
// z-y-x (yaw-pitch-roll) convention: R = Rz(yaw) Ry(pitch) Rx(roll).
Vec3 euler_zyx_from_rotation(const Mat3& R);
Mat3 rotation_from_euler_zyx(const Vec3& rpy);
// Maps Euler-angle rates (roll, pitch, yaw order) to world angular velocity.
Mat3 euler_rate_map(const Vec3& rpy);

}  // namespace hybridgait
