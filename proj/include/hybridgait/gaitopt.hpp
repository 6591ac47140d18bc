#pragma once

#include <stdexcept>
#include <string>

#include "hybridgait/hybrid.hpp"
#include "hybridgait/model.hpp"
#include "hybridgait/outputs.hpp"
#include "hybridgait/types.hpp"

namespace hybridgait {

class GaitOptError : public std::runtime_error {
 public:
  explicit GaitOptError(const std::string& what) : std::runtime_error(what) {}
};

// Configuration the gait pins down at touchdown: the desired curves hold
// exactly and the swing sole is on the ground.
struct PreImpactSolution {
  Vec q_star;   // configuration just before the landing
  Vec q_zero;   // configuration just after it, legs relabeled
  double theta_star = 0.0;
  double theta_zero = 0.0;
  double newton_residual = 0.0;  // norm of the defining system at q_star
  double condition = 0.0;        // condition number of the system Jacobian
};

// User-level gait request: geometry, timing, contact limits, objective
// weights, and the solver seed posture.
struct GaitSpec {
  double step_length = 0.09;
  double duration = 0.9;
  double clearance = 0.02;
  double y_std = 0.05;
  double mu = 0.6;
  double w_torque = 1.0;  // weight of the torque-squared integral
  double w_smooth = 0.1;  // weight of the control-point smoothness term
  int max_outer = 60;     // outer constraint-loop cap
  Vec q_seed;             // mid-stance posture the solvers start from

  void check(int n) const;  // throws FormatError on malformed fields
};

GaitSpec parse_gaitspec(const std::string& text, const std::string& source_name = "<string>");
GaitSpec load_gaitspec(const std::string& path);
std::string serialize_gaitspec(const GaitSpec& spec);
void save_gaitspec(const std::string& path, const GaitSpec& spec);

// Worst-case constraint margins over one nominal step; positive means
// feasible with room to spare.
struct FeasibilityMargins {
  double joint = 0.0;
  double torque = 0.0;
  double zmp = 0.0;
  double friction = 0.0;
  double clearance = 0.0;

  double min() const;
};

// Landing-invariance residuals together with the feasibility margins.
struct ResidualReport {
  Vec r_A1;           // position-level landing residuals, task rows 1..n-1
  Vec r_A2;           // velocity-level landing residuals, task rows 1..n-1
  double r_A3 = 0.0;  // phase-rate continuity residual at the landing
  FeasibilityMargins margins;

  // Largest invariance residual magnitude across r_A1, r_A2, and r_A3.
  double max_invariance() const;
};

// Desired task values in the step frame at base progress theta, with the
// stance sole at the nominal lateral placement. Row task::kBaseX is theta.
Vec design_targets(const VirtualConstraint& vc, double theta);

// Newton solve of task_values(q) = target starting from q_seed. Throws
// GaitOptError when the residual cannot be brought below tol.
Vec solve_task_ik(const RobotModel& model, const Vec& target, const Vec& q_seed,
                  double tol = 1e-12);

// State, command, and ground reaction on the desired gait at phase s under
// nominal constant-rate phase pacing.
struct GaitSample {
  double s = 0.0;
  double theta = 0.0;
  Vec q;
  Vec qd;
  Vec qdd;
  Vec u;
  GroundWrench wrench;
};

GaitSample gait_sample(const RobotModel& model, const VirtualConstraint& vc, double s,
                       const Vec& q_seed);

// Damped Newton on the touchdown system (desired curves stacked with the
// swing sole height). The seed falls back to vc.q_star when omitted.
PreImpactSolution solve_pre_impact(const RobotModel& model, const VirtualConstraint& vc,
                                   const Vec& q_seed = Vec());

// Evaluates the landing-invariance conditions of the gait. Margins in the
// returned report are left zero; feasibility_residuals fills them.
ResidualReport impact_invariance_residuals(const RobotModel& model,
                                           const VirtualConstraint& vc);

// Worst-case margins over 21 evenly spaced phase samples of one nominal
// step. Unreachable desired postures are charged against the joint margin.
FeasibilityMargins feasibility_residuals(const RobotModel& model, const VirtualConstraint& vc,
                                         const GaitSpec& spec);

struct GaitOptResult {
  VirtualConstraint vc;
  bool certified = false;  // constraints met to tolerance and margins >= 0
  int outer_iterations = 0;
  double objective = 0.0;
  ResidualReport report;  // invariance residuals and margins of vc
};

// Constrained gait synthesis: an augmented-Lagrangian outer loop over the
// landing-invariance equalities with hinge penalties on the feasibility
// margins, a BFGS inner loop on central finite-difference gradients, and a
// final Gauss-Newton polish of the equalities. Deterministic.
GaitOptResult optimize_gait(const RobotModel& model, const GaitSpec& spec,
                            const VirtualConstraint* seed = nullptr);

}  // namespace hybridgait
