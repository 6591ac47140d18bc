#include "hybridgait/model.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace hybridgait;
using hgtest::data_file;
using hgtest::expect_near_mat;
using hgtest::expect_near_vec;
using hgtest::random_config;
using hgtest::random_task_safe_config;
using hgtest::random_vec;
using hgtest::skew;
using hgtest::swing_pin_basis;

namespace {

// Planar double pendulum expressed in the model text format. Both joints
// rotate about +y; links point up (+z) at q = 0, so the textbook closed-form
// inertia matrix and gravity vector apply with angles measured from vertical.
constexpr double kL1 = 0.5;
constexpr double kLc1 = 0.25;
constexpr double kLc2 = 0.21;
constexpr double kM1 = 1.3;
constexpr double kM2 = 0.9;
constexpr double kI1 = 2.1e-2;
constexpr double kI2 = 1.7e-2;

const char* kPendulumModel = R"(
model pendulum2
gravity 9.81

root ground {
  mass 1.0
  com 0 0 0
  inertia 1e-3 1e-3 1e-3
}

joint j1 {
  parent ground
  child link1
  origin 0 0 0
  axis 0 1 0
  mass 1.3
  com 0 0 0.25
  inertia 2.1e-2 2.1e-2 1e-4
  limits -6.3 6.3
  torque_limit 100
}

joint j2 {
  parent link1
  child link2
  origin 0 0 0.5
  axis 0 1 0
  mass 0.9
  com 0 0 0.21
  inertia 1.7e-2 1.7e-2 1e-4
  limits -6.3 6.3
  torque_limit 100
}
)";

Mat pendulum_mass_closed_form(double q2) {
  const double c2 = std::cos(q2);
  Mat M(2, 2);
  M(0, 0) = kI1 + kI2 + kM1 * kLc1 * kLc1 +
            kM2 * (kL1 * kL1 + kLc2 * kLc2 + 2.0 * kL1 * kLc2 * c2);
  M(0, 1) = kI2 + kM2 * (kLc2 * kLc2 + kL1 * kLc2 * c2);
  M(1, 0) = M(0, 1);
  M(1, 1) = kI2 + kM2 * kLc2 * kLc2;
  return M;
}

Vec pendulum_gravity_closed_form(double q1, double q2, double g) {
  Vec G(2);
  G[0] = -g * (kM1 * kLc1 + kM2 * kL1) * std::sin(q1) - g * kM2 * kLc2 * std::sin(q1 + q2);
  G[1] = -g * kM2 * kLc2 * std::sin(q1 + q2);
  return G;
}

RobotModel load_biped() { return RobotModel::load(data_file("biped10.model")); }

using hgtest::flatten_swing_foot;

TEST(ModelLoad, Biped10Basics) {
  RobotModel model = load_biped();
  EXPECT_EQ(model.n(), 10);
  EXPECT_EQ(model.name(), "biped10");
  EXPECT_NEAR(model.total_mass(), 3.2, 1e-12);
  EXPECT_NEAR(model.gravity(), 9.81, 1e-15);
  EXPECT_NEAR(model.nominal_base_height(), 0.37, 1e-15);
  EXPECT_TRUE(model.has_mirror());
  EXPECT_TRUE(model.has_task_points());
  EXPECT_EQ(model.links()[0].joint_name, "stance_ankle_roll");
  EXPECT_EQ(model.link_index("swing_foot"), 9);
  EXPECT_EQ(model.link_index("stance_thigh"), 2);
  // Fully actuated: identity actuation matrix.
  expect_near_mat(model.actuation(), Mat::Identity(10, 10), 0.0, "B_u");
  // Standing height at the reference configuration.
  TaskFrames f = model.task_frames(Vec::Zero(10));
  EXPECT_NEAR(f.base_pos.z(), model.nominal_base_height(), 1e-12);
  EXPECT_NEAR(f.swing_pos.z(), 0.0, 1e-12);
  EXPECT_NEAR(f.swing_pos.y(), -0.07, 1e-12);
}

TEST(ModelLoad, RejectsNonPositiveMass) {
  std::string text = kPendulumModel;
  size_t pos = text.find("mass 1.3");
  text.replace(pos, 8, "mass 0.0");
  try {
    RobotModel::parse(text);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("mass must be positive"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("link1"), std::string::npos) << e.what();
  }
}

TEST(ModelLoad, RejectsNonUnitAxis) {
  std::string text = kPendulumModel;
  size_t pos = text.find("axis 0 1 0");
  text.replace(pos, 10, "axis 0 2 0");
  EXPECT_THROW(RobotModel::parse(text), ModelError);
}

TEST(ModelLoad, RejectsUnknownParent) {
  std::string text = kPendulumModel;
  size_t pos = text.find("parent link1");
  text.replace(pos, 12, "parent nosuch");
  EXPECT_THROW(RobotModel::parse(text), ModelError);
}

TEST(ModelLoad, RejectsDoubledMirrorEntry) {
  std::string text = kPendulumModel;
  text += "\nmirror j1 j2 +1\nmirror j2 j1 -1\n";
  try {
    RobotModel::parse(text);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    EXPECT_NE(std::string(e.what()).find("mirror"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("j2"), std::string::npos) << e.what();
  }
}

TEST(ModelLoad, MirrorIsInvolution) {
  RobotModel model = load_biped();
  const Mat& S = model.mirror().S;
  expect_near_mat(S * S, Mat::Identity(10, 10), 0.0, "S*S");
  std::mt19937 rng(101);
  for (int k = 0; k < 100; ++k) {
    Vec q = random_vec(10, rng);
    expect_near_vec(model.mirror().apply(model.mirror().apply(q)), q, 0.0, "relabel twice");
  }
}

TEST(ModelLoad, TaskOpsRequireTaskPoints) {
  RobotModel model = RobotModel::parse(kPendulumModel);
  EXPECT_FALSE(model.has_task_points());
  EXPECT_THROW(model.task_values(Vec::Zero(2)), ModelError);
  EXPECT_THROW(model.mirror(), ModelError);
}

TEST(MassMatrix, DoublePendulumClosedForm) {
  RobotModel model = RobotModel::parse(kPendulumModel);
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    Vec q(2);
    q << unif(rng), unif(rng);
    expect_near_mat(model.mass_matrix(q), pendulum_mass_closed_form(q[1]), 1e-9,
                    "double pendulum M");
  }
}

TEST(MassMatrix, SymmetricPositiveDefinite) {
  RobotModel model = load_biped();
  std::mt19937 rng(7);
  for (int k = 0; k < 200; ++k) {
    Vec q = random_config(model, rng);
    Mat M = model.mass_matrix(q);
    EXPECT_LE((M - M.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::LLT<Mat> llt(M);
    EXPECT_EQ(llt.info(), Eigen::Success) << "M not positive definite";
  }
}

TEST(MassMatrix, PeriodicInEveryJoint) {
  RobotModel model = load_biped();
  std::mt19937 rng(8);
  Vec q = random_config(model, rng);
  Mat M = model.mass_matrix(q);
  for (int i = 0; i < model.n(); ++i) {
    Vec q2 = q;
    q2[i] += 2.0 * M_PI;
    expect_near_mat(model.mass_matrix(q2), M, 1e-12, "M periodicity");
  }
}

TEST(Dynamics, KineticEnergyMatchesQuadraticForm) {
  RobotModel model = load_biped();
  std::mt19937 rng(9);
  for (int k = 0; k < 50; ++k) {
    Vec q = random_config(model, rng);
    Vec qd = random_vec(model.n(), rng, 2.0);
    double ke_links = model.kinetic_energy(q, qd);
    double ke_quad = 0.5 * qd.dot(model.mass_matrix(q) * qd);
    EXPECT_NEAR(ke_links, ke_quad, 1e-10 * std::max(1.0, std::abs(ke_quad)));
  }
}

TEST(Dynamics, InverseDynamicsMatchesMassAndBias) {
  RobotModel model = load_biped();
  std::mt19937 rng(10);
  for (int k = 0; k < 50; ++k) {
    Vec q = random_config(model, rng);
    Vec qd = random_vec(model.n(), rng, 1.5);
    Vec qdd = random_vec(model.n(), rng, 5.0);
    Vec lhs = model.inverse_dynamics(q, qd, qdd);
    Vec rhs = model.mass_matrix(q) * qdd + model.bias_forces(q, qd);
    expect_near_vec(lhs, rhs, 1e-9, "inverse dynamics");
  }
}

TEST(Dynamics, GravityIsPotentialGradientPendulum) {
  RobotModel model = RobotModel::parse(kPendulumModel);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unif(-3.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    Vec q(2);
    q << unif(rng), unif(rng);
    Vec g_model = model.bias_forces(q, Vec::Zero(2));
    expect_near_vec(g_model, pendulum_gravity_closed_form(q[0], q[1], model.gravity()), 1e-9,
                    "pendulum gravity closed form");
  }
}

TEST(Dynamics, GravityIsPotentialGradientBiped) {
  RobotModel model = load_biped();
  std::mt19937 rng(12);
  const double eps = 1e-6;
  for (int k = 0; k < 25; ++k) {
    Vec q = random_config(model, rng);
    Vec g_model = model.bias_forces(q, Vec::Zero(model.n()));
    Vec g_fd(model.n());
    for (int i = 0; i < model.n(); ++i) {
      Vec qp = q, qm = q;
      qp[i] += eps;
      qm[i] -= eps;
      g_fd[i] = (model.potential_energy(qp) - model.potential_energy(qm)) / (2.0 * eps);
    }
    expect_near_vec(g_model, g_fd, 1e-6, "gravity vs potential gradient");
  }
}

TEST(TaskKinematics, FramesMatchForwardKinematics) {
  RobotModel model = load_biped();
  std::mt19937 rng(13);
  for (int k = 0; k < 50; ++k) {
    Vec q = random_task_safe_config(model, rng);
    TaskFrames f = model.task_frames(q);
    std::vector<LinkPose> fk = model.forward_kinematics(q);
    const LinkPose& base = fk[model.base_link()];
    const LinkPose& swing = fk[model.swing_link()];
    Vec3 pb = base.p + base.R * model.base_point();
    Vec3 ps = swing.p + swing.R * model.swing_point();
    EXPECT_LE((f.base_pos - pb).norm(), 1e-10);
    EXPECT_LE((f.swing_pos - ps).norm(), 1e-10);
    Vec3 rpy_b = euler_zyx_from_rotation(base.R);
    Vec3 rpy_s = euler_zyx_from_rotation(swing.R);
    EXPECT_NEAR(f.base_roll, rpy_b[0], 1e-10);
    EXPECT_NEAR(f.base_pitch, rpy_b[1], 1e-10);
    EXPECT_NEAR(f.swing_roll, rpy_s[0], 1e-10);
    EXPECT_NEAR(f.swing_pitch, rpy_s[1], 1e-10);
    // values() packs the same numbers in task:: order.
    expect_near_vec(f.values(), model.task_values(q), 0.0, "TaskFrames::values");
  }
}

TEST(TaskKinematics, JacobianMatchesCentralDifference) {
  RobotModel model = load_biped();
  std::mt19937 rng(14);
  const double eps = 1e-6;
  for (int k = 0; k < 100; ++k) {
    Vec q = random_task_safe_config(model, rng);
    Vec delta = random_vec(model.n(), rng);
    delta.normalize();
    TaskKin tk = model.task_kinematics(q, Vec::Zero(model.n()));
    Vec fd = (model.task_values(q + eps * delta) - model.task_values(q - eps * delta)) / (2.0 * eps);
    expect_near_vec(tk.J * delta, fd, 1e-6, "task Jacobian FD");
  }
}

TEST(TaskKinematics, VelocityProductMatchesFiniteDifference) {
  RobotModel model = load_biped();
  std::mt19937 rng(15);
  const double h = 1e-6;
  for (int k = 0; k < 50; ++k) {
    Vec q = random_task_safe_config(model, rng);
    Vec qd = random_vec(model.n(), rng, 1.0);
    TaskKin tk = model.task_kinematics(q, qd);
    Mat Jp = model.task_kinematics(q + h * qd, qd).J;
    Mat Jm = model.task_kinematics(q - h * qd, qd).J;
    Vec fd = (Jp * qd - Jm * qd) / (2.0 * h);
    expect_near_vec(tk.Jdot_qdot, fd, 1e-5, "velocity product FD");
  }
  // Quadratic in velocity: zero at rest.
  Vec q = random_task_safe_config(model, rng);
  TaskKin tk = model.task_kinematics(q, Vec::Zero(model.n()));
  expect_near_vec(tk.Jdot_qdot, Vec::Zero(model.n()), 0.0, "Jdot_qdot at rest");
}

TEST(TaskKinematics, SwingHeightInsensitiveToSwingJointsWhenVertical) {
  RobotModel model = load_biped();
  // At the reference configuration the swing leg hangs vertically, so the
  // swing-sole height is at a stationary point of every swing-leg joint.
  Vec q = Vec::Zero(10);
  TaskKin tk = model.task_kinematics(q, Vec::Zero(10));
  for (int j = 5; j < 10; ++j) {
    EXPECT_NEAR(tk.J(task::kSwingZ, j), 0.0, 1e-12) << "joint " << j;
  }
  const double eps = 1e-6;
  for (int j = 5; j < 10; ++j) {
    Vec qp = q, qm = q;
    qp[j] += eps;
    qm[j] -= eps;
    double fd = (model.task_values(qp)[task::kSwingZ] - model.task_values(qm)[task::kSwingZ]) /
                (2.0 * eps);
    EXPECT_NEAR(fd, 0.0, 1e-6);
  }
}

TEST(GroundWrench, StaticStandingMatchesWeightAndCom) {
  RobotModel model = load_biped();
  std::mt19937 rng(16);
  for (int k = 0; k < 20; ++k) {
    Vec q = random_config(model, rng, 0.6);
    GroundWrench w = model.ground_wrench(q, Vec::Zero(10), Vec::Zero(10));
    double mg = model.total_mass() * model.gravity();
    EXPECT_NEAR(w.force.x(), 0.0, 1e-9);
    EXPECT_NEAR(w.force.y(), 0.0, 1e-9);
    EXPECT_NEAR(w.force.z(), mg, 1e-9);
    // Zero-moment point of the static wrench is the ground projection of the com.
    Vec3 com = model.com_position(q);
    double zmp_x = -w.torque.y() / w.force.z();
    double zmp_y = w.torque.x() / w.force.z();
    EXPECT_NEAR(zmp_x, com.x(), 1e-10);
    EXPECT_NEAR(zmp_y, com.y(), 1e-10);
  }
}

TEST(GroundWrench, ForceMatchesComMomentumRate) {
  RobotModel model = load_biped();
  std::mt19937 rng(17);
  const double h = 1e-5;
  for (int k = 0; k < 10; ++k) {
    Vec q = random_config(model, rng, 0.6);
    Vec qd = random_vec(model.n(), rng, 0.5);
    Vec qdd = random_vec(model.n(), rng, 2.0);
    GroundWrench w = model.ground_wrench(q, qd, qdd);
    // Com velocity by finite difference of com position along the flow.
    auto com_vel = [&](const Vec& qq, const Vec& qqd) {
      return Vec3((model.com_position(qq + h * qqd) - model.com_position(qq - h * qqd)) / (2.0 * h));
    };
    Vec3 vp = com_vel(q + h * qd, qd + h * qdd);
    Vec3 vm = com_vel(q - h * qd, qd - h * qdd);
    Vec3 com_acc = (vp - vm) / (2.0 * h);
    Vec3 expected = model.total_mass() * (com_acc + Vec3(0, 0, model.gravity()));
    EXPECT_LE((Vec3(w.force) - expected).norm(), 2e-4) << "step " << k;
  }
}

TEST(Dynamics, PassiveSwingConservesEnergy) {
  RobotModel model = load_biped();
  Vec q(10);
  q << 0.0, 0.2, -0.45, 0.25, 0.05, 0.05, 0.25, 0.45, -0.2, 0.0;
  Vec qd = Vec::Zero(10);
  const double e0 = model.potential_energy(q) + model.kinetic_energy(q, qd);
  // The chain falls fast from this seed, reaching speeds two orders beyond
  // walking; a fine step keeps integrator truncation below the audit line.
  const double dt = 1e-4;
  auto rhs = [&](const Vec& qq, const Vec& qqd, Vec& out_qd, Vec& out_qdd) {
    out_qd = qqd;
    Mat M = model.mass_matrix(qq);
    out_qdd = M.llt().solve(-model.bias_forces(qq, qqd));
  };
  Vec k1q(10), k1v(10), k2q(10), k2v(10), k3q(10), k3v(10), k4q(10), k4v(10);
  double max_drift = 0.0;
  for (int step = 0; step < 5000; ++step) {
    rhs(q, qd, k1q, k1v);
    rhs(q + 0.5 * dt * k1q, qd + 0.5 * dt * k1v, k2q, k2v);
    rhs(q + 0.5 * dt * k2q, qd + 0.5 * dt * k2v, k3q, k3v);
    rhs(q + dt * k3q, qd + dt * k3v, k4q, k4v);
    q += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    qd += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    double e = model.potential_energy(q) + model.kinetic_energy(q, qd);
    max_drift = std::max(max_drift, std::abs(e - e0) / std::abs(e0));
  }
  EXPECT_LT(max_drift, 1e-6);
}

TEST(ExtendedDynamics, MassMatrixMatchesDirectKineticEnergy) {
  RobotModel model = load_biped();
  std::mt19937 rng(18);
  for (int k = 0; k < 20; ++k) {
    Vec q = random_config(model, rng);
    Mat Me = model.extended_mass_matrix(q);
    EXPECT_LE((Me - Me.transpose()).cwiseAbs().maxCoeff(), 1e-11);
    // Independent kinetic energy: propagate an arbitrary base twist plus joint
    // rates through the kinematic tree, sum the link energies directly.
    Vec ve = random_vec(16, rng);
    Vec3 v0(ve[0], ve[1], ve[2]);
    Vec3 w0(ve[3], ve[4], ve[5]);
    std::vector<LinkPose> fk = model.forward_kinematics(q);
    // Per-link angular velocity and velocity of the link frame origin point.
    std::vector<Vec3> omega(model.n()), vel(model.n()), origin(model.n());
    double ke = 0.0;
    // Root contribution (rotation about the world origin plus translation).
    {
      Vec3 c = model.root().com;
      Vec3 vc = v0 + w0.cross(c);
      Mat3 Iw = model.root().inertia;
      ke += 0.5 * model.root().mass * vc.squaredNorm() + 0.5 * w0.dot(Iw * w0);
    }
    for (int i = 0; i < model.n(); ++i) {
      const LinkSpec& link = model.links()[i];
      Vec3 o = fk[i].p;
      origin[i] = o;
      Vec3 parent_w = (link.parent < 0) ? w0 : omega[link.parent];
      Vec3 parent_o = (link.parent < 0) ? Vec3::Zero() : origin[link.parent];
      Vec3 parent_v = (link.parent < 0) ? v0 : vel[link.parent];
      Vec3 v_here = parent_v + parent_w.cross(o - parent_o);
      Vec3 axis_w = fk[i].R * link.axis;
      omega[i] = parent_w + ve[6 + i] * axis_w;
      vel[i] = v_here;
      Vec3 cw = fk[i].p + fk[i].R * link.com;
      Vec3 vc = vel[i] + omega[i].cross(cw - o);
      Mat3 Iw = fk[i].R * link.inertia * fk[i].R.transpose();
      ke += 0.5 * link.mass * vc.squaredNorm() + 0.5 * omega[i].dot(Iw * omega[i]);
    }
    double ke_quad = 0.5 * ve.dot(Me * ve);
    EXPECT_NEAR(ke, ke_quad, 1e-10 * std::max(1.0, std::abs(ke)));
  }
}

TEST(ExtendedDynamics, PinnedBlockEqualsMassMatrix) {
  RobotModel model = load_biped();
  std::mt19937 rng(19);
  Vec q = random_config(model, rng);
  Mat Me = model.extended_mass_matrix(q);
  expect_near_mat(Me.bottomRightCorner(10, 10), model.mass_matrix(q), 1e-11,
                  "joint block of extended mass matrix");
  // Translation-translation block is the total mass times identity.
  expect_near_mat(Me.topLeftCorner(3, 3), model.total_mass() * Mat::Identity(3, 3), 1e-11,
                  "translation block");
}

TEST(ExtendedDynamics, ContactJacobianStructureAndFiniteDifference) {
  RobotModel model = load_biped();
  std::mt19937 rng(20);
  Vec q = random_config(model, rng);
  Mat Jc = model.swing_contact_jacobian(q);
  ASSERT_EQ(Jc.rows(), 6);
  ASSERT_EQ(Jc.cols(), 16);
  // Base columns at the identity root pose: translations move the sole point
  // directly; rotations about the origin act through the lever arm.
  std::vector<LinkPose> fk = model.forward_kinematics(q);
  Vec3 sole = fk[model.swing_link()].p + fk[model.swing_link()].R * model.swing_point();
  expect_near_mat(Jc.block(0, 0, 3, 3), Mat::Identity(3, 3), 1e-12, "Jc translation/linear");
  expect_near_mat(Jc.block(3, 0, 3, 3), Mat::Zero(3, 3), 1e-12, "Jc translation/angular");
  expect_near_mat(Jc.block(0, 3, 3, 3), Mat(-skew(sole)), 1e-12, "Jc rotation/linear");
  expect_near_mat(Jc.block(3, 3, 3, 3), Mat::Identity(3, 3), 1e-12, "Jc rotation/angular");
  // Joint columns against finite differences of the swing sole pose.
  const double eps = 1e-7;
  for (int j = 0; j < model.n(); ++j) {
    Vec qp = q, qm = q;
    qp[j] += eps;
    qm[j] -= eps;
    std::vector<LinkPose> fp = model.forward_kinematics(qp);
    std::vector<LinkPose> fm = model.forward_kinematics(qm);
    Vec3 pp = fp[model.swing_link()].p + fp[model.swing_link()].R * model.swing_point();
    Vec3 pm = fm[model.swing_link()].p + fm[model.swing_link()].R * model.swing_point();
    Vec3 lin_fd = (pp - pm) / (2.0 * eps);
    Mat3 dR = (fp[model.swing_link()].R - fm[model.swing_link()].R) / (2.0 * eps);
    Mat3 wx = dR * fk[model.swing_link()].R.transpose();
    Vec3 ang_fd(wx(2, 1), wx(0, 2), wx(1, 0));
    EXPECT_LE((Vec3(Jc.block(0, 6 + j, 3, 1)) - lin_fd).norm(), 1e-6) << "joint " << j;
    EXPECT_LE((Vec3(Jc.block(3, 6 + j, 3, 1)) - ang_fd).norm(), 1e-6) << "joint " << j;
  }
}

// Re-rooting identity: describing the robot pinned at the swing sole in the
// relabeled coordinates must reproduce the pinned mass matrix, since the two
// descriptions differ by a rigid motion plus the model's left/right symmetry.
TEST(Mirror, MassMatrixRerootIdentity) {
  RobotModel model = load_biped();
  const Mat& S = model.mirror().S;
  std::mt19937 rng(21);
  for (int k = 0; k < 20; ++k) {
    Vec q = random_config(model, rng);
    Mat G = swing_pin_basis(model, q);
    Mat M_sw = G.transpose() * model.extended_mass_matrix(q) * G;
    Mat M_new = model.mass_matrix(S * q);
    expect_near_mat(M_new, S * M_sw * S, 1e-9, "mirror mass matrix identity");
  }
}

// Same identity for gravity, valid when the swing foot is level (gravity is
// invariant under yaw but not under roll/pitch of the new root). Includes the
// upright configuration, where the lateral components must be antisymmetric.
TEST(Mirror, GravityRerootIdentity) {
  RobotModel model = load_biped();
  const Mat& S = model.mirror().S;
  std::mt19937 rng(22);
  for (int k = 0; k < 20; ++k) {
    Vec q = (k == 0) ? Vec(Vec::Zero(10)) : flatten_swing_foot(model, random_config(model, rng, 0.5));
    // Extended gravity vector: translation rows carry the total weight,
    // rotation rows the moment of the weight about the origin, joint rows the
    // pinned gravity torques.
    double mg = model.total_mass() * model.gravity();
    Vec3 com = model.com_position(q);
    Vec ge(16);
    ge.setZero();
    ge[2] = mg;
    ge[3] = mg * com.y();
    ge[4] = -mg * com.x();
    ge.tail(10) = model.bias_forces(q, Vec::Zero(10));
    Mat G = swing_pin_basis(model, q);
    Vec g_reroot = S * (G.transpose() * ge);
    Vec g_direct = model.bias_forces(S * q, Vec::Zero(10));
    expect_near_vec(g_direct, g_reroot, 1e-9, "mirror gravity identity");
  }
}

TEST(EulerHelpers, RoundTripAndRateMap) {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> unif(-1.2, 1.2);
  for (int k = 0; k < 50; ++k) {
    Vec3 rpy(unif(rng), unif(rng), unif(rng));
    Mat3 R = rotation_from_euler_zyx(rpy);
    Vec3 back = euler_zyx_from_rotation(R);
    EXPECT_LE((rpy - back).norm(), 1e-12);
    // E maps Euler rates to world angular velocity: check against a finite
    // difference of the rotation matrix.
    Vec3 rate(unif(rng), unif(rng), unif(rng));
    const double h = 1e-7;
    Mat3 Rp = rotation_from_euler_zyx(rpy + h * rate);
    Mat3 Rm = rotation_from_euler_zyx(rpy - h * rate);
    Mat3 wx = ((Rp - Rm) / (2.0 * h)) * R.transpose();
    Vec3 w_fd(wx(2, 1), wx(0, 2), wx(1, 0));
    Vec3 w_map = euler_rate_map(rpy) * rate;
    EXPECT_LE((w_fd - w_map).norm(), 1e-6);
  }
}

}  // namespace
