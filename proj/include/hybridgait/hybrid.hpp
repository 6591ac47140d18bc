#pragma once

#include "hybridgait/model.hpp"
#include "hybridgait/types.hpp"

namespace hybridgait {

// Outcome of a plastic swing-foot touchdown followed by the leg relabeling.
// The landing sole sticks (zero spatial velocity after impact); the stance
// and swing roles then swap so the landed foot becomes the new pinned root.
struct ImpactResult {
  Vec q_plus;   // relabeled configuration, new stance conventions
  Vec qd_plus;  // relabeled joint rates
  // Contact impulse applied to the robot at the landing sole, world frame,
  // ordered [linear; angular] like the contact Jacobian rows.
  Eigen::Matrix<double, 6, 1> impulse = Eigen::Matrix<double, 6, 1>::Zero();
  double energy_loss = 0.0;  // kinetic energy dissipated, always >= 0
  // Post-impact extended velocity [root xyz; root rpy rates; joint rates] in
  // the pre-impact coordinates, before relabeling. Diagnostic only.
  Vec qd_extended_plus;
};

// Touchdown guard: the walking step ends when the swing sole height crosses
// zero from above with a downward vertical velocity.
double swing_height(const RobotModel& model, const Vec& q);
double swing_vertical_velocity(const RobotModel& model, const Vec& q, const Vec& qd);

// Leg relabeling alone (positions or rates transform the same way).
Vec relabel(const RobotModel& model, const Vec& q);

// Plastic impact at the swing sole followed by relabeling. Throws ModelError
// when the impact system is numerically degenerate.
ImpactResult impact_map(const RobotModel& model, const Vec& q_minus, const Vec& qd_minus);

}  // namespace hybridgait
