#include "hybridgait/gaitopt.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "hybridgait/hybrid.hpp"
#include "hybridgait/io_util.hpp"
#include "hybridgait/outputs.hpp"
#include "test_util.hpp"

using namespace hybridgait;
using hgtest::data_file;
using hgtest::expect_near_vec;

namespace {

RobotModel load_biped() { return RobotModel::load(data_file("biped10.model")); }

Vec midstance_seed() {
  Vec q(10);
  q << 0.0, 0.3, -0.6, 0.3, 0.05, 0.05, -0.3, 0.6, -0.3, 0.0;
  return q;
}

// A gait built backwards from a chosen touchdown posture: every shape row is
// constant at that posture's task value, the swing-height row drops to zero
// only at the end of the phase interval, and the sway curve is solved so the
// lateral base target passes through the posture as well. The posture itself
// is then the exact touchdown configuration.
struct HandGait {
  VirtualConstraint vc;
  Vec q_hat;
  Vec target;
};

HandGait make_hand_gait(const RobotModel& model) {
  HandGait hg;
  hg.target.resize(task::kCount);
  hg.target << 0.05, -0.03, 0.31, 0.02, 0.05, 0.08, -0.06, 0.0, 0.01, -0.02;
  hg.q_hat = solve_task_ik(model, hg.target, midstance_seed(), 1e-12);
  VirtualConstraint& vc = hg.vc;
  vc.model_name = model.name();
  vc.theta_minus = hg.target[task::kBaseX];
  vc.theta_plus = vc.theta_minus - 0.09;
  vc.duration = 0.9;
  vc.y_std = 0.05;
  const double a2 = 20.0;
  const double a3 = 0.7;
  const double a1 =
      (hg.target[task::kBaseY] + vc.y_std) / std::sin(a2 * vc.theta_minus + a3);
  vc.alpha.resize(3);
  vc.alpha << a1, a2, a3;
  vc.phi_points = Mat::Zero(kPhiRows, 6);
  vc.phi_points.row(0).setConstant(hg.target[task::kBaseZ]);
  vc.phi_points.row(1).setConstant(hg.target[task::kBaseRoll]);
  vc.phi_points.row(2).setConstant(hg.target[task::kBasePitch]);
  vc.phi_points.row(3).setConstant(hg.target[task::kSwingX]);
  vc.phi_points.row(4).setConstant(hg.target[task::kSwingY] + vc.y_std);
  vc.phi_points.row(5) << 0.02, 0.02, 0.02, 0.02, 0.02, 0.0;
  vc.phi_points.row(6).setConstant(hg.target[task::kSwingRoll]);
  vc.phi_points.row(7).setConstant(hg.target[task::kSwingPitch]);
  vc.q_star = hg.q_hat;
  return hg;
}

Vec perturbed(const Vec& q, double scale) {
  Vec out = q;
  for (int i = 0; i < out.size(); ++i) out[i] += (i % 2 == 0 ? scale : -scale);
  return out;
}

GaitSpec hand_spec() {
  GaitSpec spec;
  spec.step_length = 0.09;
  spec.duration = 0.9;
  spec.clearance = 0.005;
  spec.y_std = 0.05;
  spec.q_seed = midstance_seed();
  return spec;
}

}  // namespace

TEST(DesignTargetsTest, MatchesCurveValues) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  const double theta = 0.02;
  const Vec t = design_targets(hg.vc, theta);
  ASSERT_EQ(t.size(), task::kCount);
  EXPECT_DOUBLE_EQ(t[task::kBaseX], theta);
  EXPECT_NEAR(t[task::kBaseY], hg.vc.y_des(theta) - hg.vc.y_std, 1e-15);
  const Vec shape = hg.vc.phi(hg.vc.phase(theta));
  for (int r = 0; r < kPhiRows; ++r) {
    const int row = r + 2;
    const double adjust = row == task::kSwingY ? hg.vc.y_std : 0.0;
    EXPECT_NEAR(t[row], shape[r] - adjust, 1e-15) << "row " << row;
  }
}

TEST(GaitSpecIoTest, RoundTripPreservesFields) {
  GaitSpec spec;
  spec.step_length = 0.105;
  spec.duration = 0.77;
  spec.clearance = 0.019;
  spec.y_std = 0.048;
  spec.mu = 0.55;
  spec.w_torque = 1.25;
  spec.w_smooth = 0.07;
  spec.max_outer = 7;
  spec.q_seed = perturbed(midstance_seed(), 0.013);
  const std::string text = serialize_gaitspec(spec);
  const GaitSpec back = parse_gaitspec(text, "roundtrip");
  EXPECT_EQ(back.step_length, spec.step_length);
  EXPECT_EQ(back.duration, spec.duration);
  EXPECT_EQ(back.clearance, spec.clearance);
  EXPECT_EQ(back.y_std, spec.y_std);
  EXPECT_EQ(back.mu, spec.mu);
  EXPECT_EQ(back.w_torque, spec.w_torque);
  EXPECT_EQ(back.w_smooth, spec.w_smooth);
  EXPECT_EQ(back.max_outer, spec.max_outer);
  ASSERT_EQ(back.q_seed.size(), spec.q_seed.size());
  for (int i = 0; i < spec.q_seed.size(); ++i) EXPECT_EQ(back.q_seed[i], spec.q_seed[i]);
  EXPECT_EQ(serialize_gaitspec(back), text);

  const std::string path = ::testing::TempDir() + "gaitspec_roundtrip.txt";
  save_gaitspec(path, spec);
  const GaitSpec loaded = load_gaitspec(path);
  EXPECT_EQ(serialize_gaitspec(loaded), text);
}

TEST(GaitSpecIoTest, RejectsMalformedInput) {
  EXPECT_THROW(parse_gaitspec("nonsense", "t"), FormatError);
  EXPECT_THROW(parse_gaitspec("hybridgait-gaitspec 2\n", "t"), FormatError);
  EXPECT_THROW(parse_gaitspec("hybridgait-gaitspec 1\nbogus 3\n", "t"), FormatError);
  EXPECT_THROW(parse_gaitspec("hybridgait-gaitspec 1\nmu x\n", "t"), FormatError);
  EXPECT_THROW(parse_gaitspec("hybridgait-gaitspec 1\nmax_outer 2.5\n", "t"), FormatError);
  EXPECT_THROW(parse_gaitspec("hybridgait-gaitspec 1\nduration -1\n", "t"), FormatError);
  EXPECT_THROW(parse_gaitspec("hybridgait-gaitspec 1\nstep_length 0\n", "t"), FormatError);
}

TEST(IkTest, SolvesAndRejects) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  expect_near_vec(model.task_values(hg.q_hat), hg.target, 1e-10, "ik task values");

  Vec far = hg.target;
  far[task::kBaseZ] = 2.0;  // far beyond leg length
  EXPECT_THROW(solve_task_ik(model, far, midstance_seed(), 1e-12), GaitOptError);
  EXPECT_THROW(solve_task_ik(model, hg.target, Vec::Zero(3), 1e-12), std::invalid_argument);
  EXPECT_THROW(solve_task_ik(model, Vec::Zero(3), midstance_seed(), 1e-12),
               std::invalid_argument);
}

TEST(SolvePreImpactTest, RecoversHandConstructedConfiguration) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  const PreImpactSolution sol = solve_pre_impact(model, hg.vc, perturbed(hg.q_hat, 0.03));
  expect_near_vec(sol.q_star, hg.q_hat, 1e-9, "touchdown configuration");
  EXPECT_NEAR(sol.theta_star, hg.target[task::kBaseX], 1e-10);
  EXPECT_LE(sol.newton_residual, 1e-10);
  EXPECT_LE(std::abs(model.task_values(sol.q_star)[task::kSwingZ]), 1e-10);
  EXPECT_LT(sol.theta_zero, sol.theta_star);
  EXPECT_GE(sol.condition, 1.0);
  EXPECT_TRUE(std::isfinite(sol.condition));
  expect_near_vec(sol.q_zero, relabel(model, sol.q_star), 0.0, "relabeled landing");
}

TEST(SolvePreImpactTest, ResidualReplay) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  const PreImpactSolution sol = solve_pre_impact(model, hg.vc, perturbed(hg.q_hat, 0.03));
  const Vec hc = model.task_values(sol.q_star);
  const double theta = hc[task::kBaseX];
  const Vec des = hg.vc.desired(theta);
  double worst = std::abs(hc[task::kSwingZ]);
  for (int i = 1; i < task::kCount; ++i) {
    double want = des[i - 1];
    if (i == task::kBaseY || i == task::kSwingY) want -= hg.vc.y_std;
    worst = std::max(worst, std::abs(hc[i] - want));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(SolvePreImpactTest, NoGuardIntersectionFails) {
  RobotModel model = load_biped();
  HandGait hg = make_hand_gait(model);
  hg.vc.phi_points.row(5).setConstant(0.05);  // swing sole never reaches the ground
  EXPECT_THROW(solve_pre_impact(model, hg.vc, hg.q_hat), GaitOptError);
}

TEST(SolvePreImpactTest, DualRouteLandingRates) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  const TaskKin tk = model.task_kinematics(hg.q_hat, Vec::Zero(model.n()));
  const Vec des_d = hg.vc.desired_d(hg.vc.theta_minus);
  Vec rhs_a(task::kCount);
  rhs_a[task::kBaseX] = 1.0;
  rhs_a.tail(task::kCount - 1) = des_d;
  const Vec qd_a = tk.J.fullPivLu().solve(rhs_a);
  Mat jh = tk.J;
  for (int i = 1; i < task::kCount; ++i) jh.row(i) -= des_d[i - 1] * tk.J.row(task::kBaseX);
  Vec rhs_b = Vec::Zero(task::kCount);
  rhs_b[task::kBaseX] = 1.0;
  const Vec qd_b = jh.fullPivLu().solve(rhs_b);
  expect_near_vec(qd_a, qd_b, 1e-9, "landing rates");
}

TEST(ImpactResidualTest, HandGaitHasFiniteNonVacuousResiduals) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  const ResidualReport rep = impact_invariance_residuals(model, hg.vc);
  ASSERT_EQ(rep.r_A1.size(), model.n() - 1);
  ASSERT_EQ(rep.r_A2.size(), model.n() - 1);
  for (int i = 0; i < rep.r_A1.size(); ++i) {
    EXPECT_TRUE(std::isfinite(rep.r_A1[i]));
    EXPECT_TRUE(std::isfinite(rep.r_A2[i]));
  }
  EXPECT_TRUE(std::isfinite(rep.r_A3));
  // A gait built with no attention to the landing should not look invariant.
  EXPECT_GT(rep.max_invariance(), 1e-3);
}

TEST(GaitSampleTest, GroundReactionMatchesComMotion) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  const double s = 0.45;
  const double h = 1e-3;
  const double dt = h * hg.vc.duration;
  const GaitSample lo = gait_sample(model, hg.vc, s - h, midstance_seed());
  const GaitSample mid = gait_sample(model, hg.vc, s, lo.q);
  const GaitSample hi = gait_sample(model, hg.vc, s + h, mid.q);
  const Vec3 acc =
      (model.com_position(lo.q) - 2.0 * model.com_position(mid.q) + model.com_position(hi.q)) /
      (dt * dt);
  Vec3 expected = model.total_mass() * acc;
  expected[2] += model.total_mass() * model.gravity();
  expect_near_vec(Vec(mid.wrench.force), Vec(expected), 2e-3, "ground reaction");
  EXPECT_NEAR(mid.theta, hg.vc.theta_at(s), 1e-15);
  expect_near_vec(model.task_values(mid.q), design_targets(hg.vc, mid.theta), 1e-10,
                  "sampled posture");
}

TEST(FeasibilityTest, MeterStepHitsJointLimits) {
  RobotModel model = load_biped();
  HandGait hg = make_hand_gait(model);
  VirtualConstraint vc = hg.vc;
  vc.theta_plus = -0.5;
  vc.theta_minus = 0.5;
  for (int j = 0; j <= 5; ++j) vc.phi_points(3, j) = -1.0 + 0.4 * j;
  vc.q_star = midstance_seed();
  GaitSpec spec = hand_spec();
  spec.step_length = 1.0;
  const FeasibilityMargins m = feasibility_residuals(model, vc, spec);
  EXPECT_LT(m.joint, 0.0);
  EXPECT_TRUE(std::isfinite(m.joint));
  EXPECT_TRUE(std::isfinite(m.torque));
  EXPECT_TRUE(std::isfinite(m.zmp));
  EXPECT_TRUE(std::isfinite(m.friction));
  EXPECT_TRUE(std::isfinite(m.clearance));
}

TEST(FeasibilityTest, ZeroFrictionIsNegative) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  GaitSpec spec = hand_spec();
  spec.mu = 0.0;
  const FeasibilityMargins m = feasibility_residuals(model, hg.vc, spec);
  EXPECT_LT(m.friction, 0.0);
  EXPECT_GT(m.clearance, 0.0);
}

TEST(FeasibilityTest, HugeClearanceIsNegative) {
  RobotModel model = load_biped();
  const HandGait hg = make_hand_gait(model);
  GaitSpec spec = hand_spec();
  spec.clearance = 0.5;
  const FeasibilityMargins m = feasibility_residuals(model, hg.vc, spec);
  EXPECT_LT(m.clearance, 0.0);
  EXPECT_LT(m.min(), 0.0);
}

TEST(OptimizeGaitTest, DeterministicRerun) {
  RobotModel model = load_biped();
  GaitSpec spec = load_gaitspec(data_file("default.gaitspec"));
  spec.max_outer = 1;
  const GaitOptResult a = optimize_gait(model, spec);
  const GaitOptResult b = optimize_gait(model, spec);
  EXPECT_EQ(serialize_gait(a.vc), serialize_gait(b.vc));
  EXPECT_EQ(a.certified, b.certified);
  EXPECT_EQ(a.outer_iterations, b.outer_iterations);
  EXPECT_DOUBLE_EQ(a.objective, b.objective);
}

TEST(OptimizeGaitTest, HugeClearanceNotCertified) {
  RobotModel model = load_biped();
  GaitSpec spec = load_gaitspec(data_file("default.gaitspec"));
  spec.clearance = 0.5;
  spec.max_outer = 1;
  const GaitOptResult res = optimize_gait(model, spec);
  EXPECT_FALSE(res.certified);
  EXPECT_LT(res.report.margins.clearance, 0.0);
}

TEST(OptimizeGaitTest, ProducesCertifiedGait) {
  RobotModel model = load_biped();
  const GaitSpec spec = load_gaitspec(data_file("default.gaitspec"));
  const GaitOptResult res = optimize_gait(model, spec);
  EXPECT_TRUE(res.certified);
  EXPECT_LE(res.report.max_invariance(), 1e-6);
  EXPECT_GE(res.report.margins.min(), 0.0);
  EXPECT_LE(res.outer_iterations, spec.max_outer);
  EXPECT_TRUE(std::isfinite(res.objective));
  EXPECT_EQ(res.vc.model_name, model.name());
}

TEST(ShippedGaitTest, ResidualsAndMargins) {
  RobotModel model = load_biped();
  const VirtualConstraint vc = load_gait(data_file("walk.gait"));
  EXPECT_EQ(vc.model_name, model.name());
  const ResidualReport rep = impact_invariance_residuals(model, vc);
  EXPECT_LE(rep.max_invariance(), 1e-6);
  const GaitSpec spec = load_gaitspec(data_file("default.gaitspec"));
  const FeasibilityMargins m = feasibility_residuals(model, vc, spec);
  EXPECT_GE(m.min(), 0.0);
}

TEST(ShippedGaitTest, EndToEndImpactInvariance) {
  RobotModel model = load_biped();
  const VirtualConstraint vc = load_gait(data_file("walk.gait"));
  const PreImpactSolution sol = solve_pre_impact(model, vc);
  const SdProfile sd = SdProfile::parse("0.1*t");
  const double t_impact = 3.0;

  // Joint rates that put the state exactly on the desired trajectories with
  // the phase advancing at the commanded forward speed.
  const TaskKin tk = model.task_kinematics(sol.q_star, Vec::Zero(model.n()));
  Vec rhs(task::kCount);
  rhs[task::kBaseX] = 1.0;
  rhs.tail(task::kCount - 1) = vc.desired_d(sol.theta_star);
  const Vec qd_minus = sd.deriv(t_impact) * tk.J.fullPivLu().solve(rhs);

  FootAnchor anchor;
  anchor.x = sd.value(t_impact) - sol.theta_star;
  anchor.y = vc.y_std;
  const OutputEval before =
      evaluate_outputs(model, vc, sd, t_impact, anchor, sol.q_star, qd_minus);
  ASSERT_LE(before.packed().norm(), 1e-8);

  const ImpactResult imp = impact_map(model, sol.q_star, qd_minus);
  FootAnchor after_anchor = anchor;
  after_anchor.advance(model, sol.q_star, imp.q_plus);
  const OutputEval after =
      evaluate_outputs(model, vc, sd, t_impact, after_anchor, imp.q_plus, imp.qd_plus);
  EXPECT_LE(after.packed().norm(), 1e-6);
  // The landing error stays within an order of magnitude of the equality
  // tolerance the gait was certified at.
  EXPECT_LE(after.packed().norm(), 10.0 * 1e-6);
}

TEST(ShippedGaitTest, EndpointPerturbationIsDetected) {
  RobotModel model = load_biped();
  VirtualConstraint vc = load_gait(data_file("walk.gait"));
  vc.phi_points(0, 0) += 0.01;
  const ResidualReport rep = impact_invariance_residuals(model, vc);
  EXPECT_GT(rep.max_invariance(), 1e-4);
}
