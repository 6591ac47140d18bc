#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "hybridgait/model.hpp"
#include "hybridgait/outputs.hpp"
#include "hybridgait/types.hpp"

namespace hybridgait {

// Raised when the output decoupling matrix loses rank and the torque law
// cannot be evaluated.
class SingularityError : public std::runtime_error {
 public:
  explicit SingularityError(const std::string& what) : std::runtime_error(what) {}
};

// Diagonal PD gains of the outer loop. Construction requires positive
// entries and checks that the error-system matrix [0 I; -KP -KD] has all
// eigenvalues in the open left half plane.
class ControllerGains {
 public:
  ControllerGains(Vec kp, Vec kd);
  static ControllerGains uniform(int n, double kp, double kd);

  int n() const { return static_cast<int>(kp_.size()); }
  const Vec& kp() const { return kp_; }
  const Vec& kd() const { return kd_; }

 private:
  Vec kp_;
  Vec kd_;
};

struct TorqueCommand {
  Vec u;
  std::vector<bool> saturated;  // per joint, true when |u_i| exceeds its limit
  bool any_saturated = false;
};

// Outer-loop command v = -KP y - KD ydot.
Vec pd_outer(const OutputEval& out, const ControllerGains& gains);

// Feedback linearizing torque: cancels the dynamics along the tracking
// outputs so the closed loop obeys ydotdot = v. Commands above the joint
// torque limits are flagged, never clipped.
TorqueCommand torque(const RobotModel& model, double t, const JointState& state,
                     const VirtualConstraint& vc, const SdProfile& sd, const FootAnchor& anchor,
                     const ControllerGains& gains);

}  // namespace hybridgait
