#pragma once

#include <string>
#include <vector>

#include "hybridgait/io_util.hpp"
#include "hybridgait/model.hpp"
#include "hybridgait/types.hpp"

namespace hybridgait {

// Polynomial curve in Bernstein form on [0, 1]. Outside that interval the
// curve continues as its tangent line at the nearest endpoint, so value and
// first derivative stay continuous; a flag records that this happened.
class BezierCurve {
 public:
  BezierCurve() = default;
  explicit BezierCurve(const Vec& points);

  double value(double s) const;
  double deriv(double s) const;
  double deriv2(double s) const;

  int order() const { return static_cast<int>(points_.size()) - 1; }
  const Vec& points() const { return points_; }
  bool extrapolation_seen() const { return extrapolation_seen_; }

 private:
  Vec points_;
  mutable bool extrapolation_seen_ = false;
};

// One sinusoidal term of the global reference profile.
struct SinusoidTerm {
  double amplitude = 0.0;
  double frequency = 0.0;
};

// Global position reference s_d(t) = slope*t + offset + sum c*sin(w*t).
// Construction rejects profiles whose speed can reach zero or below.
class SdProfile {
 public:
  SdProfile() = default;
  SdProfile(double slope, double offset, std::vector<SinusoidTerm> terms);
  // Accepts text like "0.044*t-0.03" or
  // "0.031*t-0.015+0.015*sin(0.3*t)-0.01*sin(0.8*t)".
  static SdProfile parse(const std::string& text);

  double value(double t) const;
  double deriv(double t) const;
  double deriv2(double t) const;

  double slope() const { return slope_; }
  double offset() const { return offset_; }
  const std::vector<SinusoidTerm>& terms() const { return terms_; }

 private:
  void validate() const;

  double slope_ = 0.0;
  double offset_ = 0.0;
  std::vector<SinusoidTerm> terms_;
};

// Names of the shape-target rows (task rows 2..9) in file order.
constexpr int kPhiRows = 8;
const char* phi_row_name(int row);

// A walking gait: phase interval of the base forward position, the lateral
// base target parameters, and Bernstein control rows for the remaining eight
// task coordinates. The swing-side lateral row is expressed in world
// coordinates of the current step frame, not relative to the stance foot.
struct VirtualConstraint {
  double theta_plus = 0.0;   // base forward position at step start
  double theta_minus = 0.0;  // base forward position at touchdown
  double duration = 0.0;     // nominal step period
  double y_std = 0.0;        // nominal lateral distance of each sole
  Vec alpha = Vec::Zero(3);  // lateral base target y(theta) = a1*sin(a2*theta + a3)
  Mat phi_points;            // kPhiRows x (order+1) Bernstein control rows
  Vec q_star;                // nominal pre-impact configuration
  std::string model_name;

  int order() const { return static_cast<int>(phi_points.cols()) - 1; }
  double theta_range() const { return theta_minus - theta_plus; }
  double phase(double theta) const { return (theta - theta_plus) / theta_range(); }
  double theta_at(double s) const { return theta_plus + s * theta_range(); }
  // Nominal pacing of the phase variable.
  double nominal_theta_rate() const { return theta_range() / duration; }

  double y_des(double theta) const;
  double y_des_d(double theta) const;
  double y_des_dd(double theta) const;

  // Shape targets and derivatives with respect to the phase s.
  Vec phi(double s) const;
  Vec phi_d(double s) const;
  Vec phi_dd(double s) const;

  // Theta-parameterized desired values for task rows 1..9 (lateral base row
  // first, then the eight shape rows) and their theta derivatives.
  Vec desired(double theta) const;
  Vec desired_d(double theta) const;
  Vec desired_dd(double theta) const;

  bool extrapolation_seen() const { return extrapolation_seen_; }
  void check(int n) const;  // throws FormatError on malformed fields

 private:
  mutable bool extrapolation_seen_ = false;
};

VirtualConstraint load_gait(const std::string& path);
std::string serialize_gait(const VirtualConstraint& vc);
void save_gait(const std::string& path, const VirtualConstraint& vc);

// Step frame bookkeeping. The world positions of the stance sole are x and
// y in the current step's folded frame; parity says whether that frame is
// the world frame (+1) or its lateral mirror image (-1). Updates keep the
// physical base point continuous across the relabeling for any impact.
struct FootAnchor {
  double x = 0.0;
  double y = 0.0;
  int parity = 1;
  int step = 0;  // completed landings since the walk started

  void advance(const RobotModel& model, const Vec& q_minus, const Vec& q_plus);
};

// Tracking outputs at one instant.
struct OutputEval {
  Vec y;             // output errors, task row order
  Vec ydot;          // their time derivatives
  double theta = 0;  // stance-relative base forward position
  double theta_dot = 0;
  double s = 0;  // phase in [0, 1] on the nominal gait
  Vec desired_world;  // desired task values in the step frame (diagnostic)

  // Stacked error state [y; ydot] of the closed-loop error system.
  Vec packed() const {
    Vec x(y.size() + ydot.size());
    x << y, ydot;
    return x;
  }
};

OutputEval evaluate_outputs(const RobotModel& model, const VirtualConstraint& vc,
                            const SdProfile& sd, double t, const FootAnchor& anchor, const Vec& q,
                            const Vec& qd);

}  // namespace hybridgait
