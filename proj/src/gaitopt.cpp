#include "hybridgait/gaitopt.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hybridgait/io_util.hpp"
#include "hybridgait/log.hpp"

namespace hybridgait {
namespace {

constexpr double kNewtonFloor = 1e-14;
constexpr double kOutputConditionGate = 1e10;
constexpr double kTouchdownConditionGate = 1e12;
constexpr int kSweepPanels = 20;  // 21 samples over one step

double parse_num(const std::string& text, const std::string& context) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || !std::isfinite(v)) {
    throw FormatError(context + ": expected a number, got '" + text + "'");
  }
  return v;
}

struct IkResult {
  Vec q;
  double residual = 0.0;
};

// Damped Newton on task_values(q) = target. Never throws; the caller decides
// what residual is acceptable.
IkResult newton_task_ik(const RobotModel& model, const Vec& target, const Vec& q_seed,
                        int max_iter) {
  const int n = model.n();
  IkResult out;
  out.q = q_seed;
  Vec f = model.task_values(out.q) - target;
  out.residual = f.norm();
  for (int it = 0; it < max_iter && out.residual > kNewtonFloor; ++it) {
    const TaskKin tk = model.task_kinematics(out.q, Vec::Zero(n));
    const Vec step = tk.J.partialPivLu().solve(-f);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool moved = false;
    for (int halve = 0; halve < 30; ++halve) {
      Vec q_try = out.q + scale * step;
      Vec f_try = model.task_values(q_try) - target;
      if (f_try.norm() < out.residual) {
        out.q = std::move(q_try);
        f = std::move(f_try);
        out.residual = f.norm();
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) break;
  }
  // Two fixed polish steps once the iteration has settled. The adaptive exit
  // above stops at a residual that depends on the iteration count, which
  // makes the result jump by ~1e-13 across count boundaries; downstream
  // penalty terms amplify such jumps past finite-difference tolerances. The
  // fixed steps land on the root to machine precision regardless of where
  // the loop stopped, so the solve is a smooth function of its inputs.
  if (out.residual <= 1e-8) {
    for (int polish = 0; polish < 2; ++polish) {
      const TaskKin tk = model.task_kinematics(out.q, Vec::Zero(n));
      const Vec step = tk.J.partialPivLu().solve(-f);
      if (!step.allFinite()) break;
      Vec q_try = out.q + step;
      Vec f_try = model.task_values(q_try) - target;
      if (!f_try.allFinite()) break;
      out.q = std::move(q_try);
      f = std::move(f_try);
      out.residual = f.norm();
    }
  }
  return out;
}

// Residuals whose root is the touchdown configuration: desired-curve errors
// for every task row past the phase row, stacked with the swing sole height.
struct TouchdownEval {
  Vec F;
  Mat J;
};

TouchdownEval touchdown_system(const RobotModel& model, const VirtualConstraint& vc,
                               const Vec& q) {
  const int n = model.n();
  const TaskKin tk = model.task_kinematics(q, Vec::Zero(n));
  const double theta = tk.hc[task::kBaseX];
  const Vec target = design_targets(vc, theta);
  const Vec des_d = vc.desired_d(theta);
  TouchdownEval ev;
  ev.F.resize(n);
  ev.J.resize(n, n);
  for (int i = 1; i < task::kCount; ++i) {
    ev.F[i - 1] = tk.hc[i] - target[i];
    ev.J.row(i - 1) = tk.J.row(i) - des_d[i - 1] * tk.J.row(task::kBaseX);
  }
  ev.F[n - 1] = tk.hc[task::kSwingZ];
  ev.J.row(n - 1) = tk.J.row(task::kSwingZ);
  return ev;
}

double swing_yaw(const RobotModel& model, const Vec& q) {
  const auto poses = model.forward_kinematics(q);
  return euler_zyx_from_rotation(poses[model.swing_link()].R)[2];
}

// Everything the landing determines once the touchdown configuration is
// known: joint rates at unit phase rate, their image under the impact, and
// the post-impact task-space rates.
struct LandingKinematics {
  PreImpactSolution sol;
  Vec qd_star;
  Vec qd_zero;
  Vec task_rate0;
  double theta0_dot = 0.0;
};

LandingKinematics landing_kinematics(const RobotModel& model, const VirtualConstraint& vc,
                                     const Vec& seed) {
  LandingKinematics lk;
  lk.sol = solve_pre_impact(model, vc, seed);
  const int n = model.n();
  const TaskKin tk = model.task_kinematics(lk.sol.q_star, Vec::Zero(n));
  const Vec des_d = vc.desired_d(lk.sol.theta_star);
  Mat Jh = tk.J;
  for (int i = 1; i < task::kCount; ++i) {
    Jh.row(i) -= des_d[i - 1] * tk.J.row(task::kBaseX);
  }
  Eigen::JacobiSVD<Mat> svd(Jh, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > kOutputConditionGate) {
    throw GaitOptError(
        "landing analysis: output Jacobian is singular at the touchdown configuration");
  }
  Vec rhs = Vec::Zero(n);
  rhs[task::kBaseX] = 1.0;
  lk.qd_star = svd.solve(rhs);
  const ImpactResult imp = impact_map(model, lk.sol.q_star, lk.qd_star);
  lk.qd_zero = imp.qd_plus;
  const TaskKin tk0 = model.task_kinematics(lk.sol.q_zero, Vec::Zero(n));
  lk.task_rate0 = tk0.J * lk.qd_zero;
  lk.theta0_dot = lk.task_rate0[task::kBaseX];
  return lk;
}

// Worst-case margins and the torque-squared integral over one step on the
// desired trajectories at nominal pacing.
struct SweepResult {
  FeasibilityMargins margins;
  double torque_integral = 0.0;
  double worst_ik = 0.0;
  // Every individual inequality margin, grouped by channel (joint, torque,
  // zmp, friction, clearance). The reported margins are the channel minima;
  // the optimizer hinges each entry separately, which keeps the penalty
  // smooth where the underlying constraint functions are smooth instead of
  // introducing kinks through the min.
  std::array<std::vector<double>, 5> parts;
};

SweepResult sweep_gait(const RobotModel& model, const VirtualConstraint& vc,
                       const GaitSpec& spec, const Vec& q_start) {
  const int n = model.n();
  const Vec lo = model.lower_limits();
  const Vec hi = model.upper_limits();
  const Vec tl = model.torque_limits();
  const auto rect = model.foot_rect();
  const double rate = vc.nominal_theta_rate();
  const double dt = vc.duration / kSweepPanels;
  constexpr double inf = std::numeric_limits<double>::infinity();
  SweepResult out;
  out.parts[0].reserve(2 * n * (kSweepPanels + 1) + 1);
  out.parts[1].reserve(2 * n * (kSweepPanels + 1));
  out.parts[2].reserve(4 * (kSweepPanels + 1));
  out.parts[3].reserve(2 * (kSweepPanels + 1));
  out.parts[4].reserve(kSweepPanels + 1);
  Vec q_prev = q_start;
  double prev_u2 = 0.0;
  for (int k = 0; k <= kSweepPanels; ++k) {
    const double s = static_cast<double>(k) / kSweepPanels;
    const double theta = vc.theta_at(s);
    const IkResult ik = newton_task_ik(model, design_targets(vc, theta), q_prev, 60);
    q_prev = ik.q;
    out.worst_ik = std::max(out.worst_ik, ik.residual);
    for (int i = 0; i < n; ++i) {
      out.parts[0].push_back(ik.q[i] - lo[i]);
      out.parts[0].push_back(hi[i] - ik.q[i]);
    }
    const TaskKin tk = model.task_kinematics(ik.q, Vec::Zero(n));
    if (s >= 0.1 - 1e-12 && s <= 0.9 + 1e-12) {
      out.parts[4].push_back(tk.hc[task::kSwingZ] - spec.clearance);
    }
    const Vec des_d = vc.desired_d(theta);
    Vec rhs(n);
    rhs[task::kBaseX] = rate;
    for (int i = 1; i < task::kCount; ++i) rhs[i] = des_d[i - 1] * rate;
    const Eigen::PartialPivLU<Mat> lu(tk.J);
    const Vec qd = lu.solve(rhs);
    double u2 = 0.0;
    bool dynamic_ok = qd.allFinite();
    if (dynamic_ok) {
      const TaskKin tkv = model.task_kinematics(ik.q, qd);
      const Vec des_dd = vc.desired_dd(theta);
      Vec rhs2(n);
      rhs2[task::kBaseX] = -tkv.Jdot_qdot[task::kBaseX];
      for (int i = 1; i < task::kCount; ++i) {
        rhs2[i] = des_dd[i - 1] * rate * rate - tkv.Jdot_qdot[i];
      }
      const Vec qdd = lu.solve(rhs2);
      dynamic_ok = qdd.allFinite();
      if (dynamic_ok) {
        const Vec u = model.inverse_dynamics(ik.q, qd, qdd);
        u2 = u.squaredNorm();
        for (int i = 0; i < n; ++i) {
          out.parts[1].push_back(tl[i] - u[i]);
          out.parts[1].push_back(u[i] + tl[i]);
        }
        const GroundWrench w = model.ground_wrench(ik.q, qd, qdd);
        const double fz = w.force[2];
        if (fz > 1e-9) {
          const double px = -w.torque[1] / fz;
          const double py = w.torque[0] / fz;
          out.parts[2].push_back(px - rect[0]);
          out.parts[2].push_back(rect[1] - px);
          out.parts[2].push_back(py - rect[2]);
          out.parts[2].push_back(rect[3] - py);
        } else {
          out.parts[2].push_back(fz - 1.0);
        }
        out.parts[3].push_back(spec.mu * fz - std::hypot(w.force[0], w.force[1]));
        out.parts[3].push_back(fz);
      }
    }
    if (!dynamic_ok) out.parts[1].push_back(-1e3);
    if (k > 0) out.torque_integral += 0.5 * (u2 + prev_u2) * dt;
    prev_u2 = u2;
  }
  std::array<double, 5> mins;
  for (int c = 0; c < 5; ++c) {
    double m = inf;
    for (const double v : out.parts[c]) m = std::min(m, v);
    mins[c] = m;
  }
  if (out.worst_ik > 1e-6) {
    mins[0] -= out.worst_ik;
    out.parts[0].push_back(mins[0]);
  }
  out.margins = FeasibilityMargins{mins[0], mins[1], mins[2], mins[3], mins[4]};
  return out;
}

}  // namespace

void GaitSpec::check(int n) const {
  if (!(step_length > 0.0)) throw FormatError("gait spec: step_length must be positive");
  if (!(duration > 0.0)) throw FormatError("gait spec: duration must be positive");
  if (!(clearance > 0.0)) throw FormatError("gait spec: clearance must be positive");
  if (!(y_std > 0.0)) throw FormatError("gait spec: y_std must be positive");
  if (!(mu >= 0.0)) throw FormatError("gait spec: mu must be nonnegative");
  if (!(w_torque >= 0.0) || !(w_smooth >= 0.0)) {
    throw FormatError("gait spec: objective weights must be nonnegative");
  }
  if (max_outer < 1) throw FormatError("gait spec: max_outer must be at least 1");
  if (n > 0 && q_seed.size() != n) {
    throw FormatError("gait spec: q_seed has dimension " + std::to_string(q_seed.size()) +
                      ", expected " + std::to_string(n));
  }
}

GaitSpec parse_gaitspec(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  std::string word;
  if (!(in >> word) || word != "hybridgait-gaitspec") {
    throw FormatError(source_name + ": not a gait spec file (missing format header)");
  }
  int version = 0;
  if (!(in >> version) || version != 1) {
    throw FormatError(source_name + ": unsupported gait spec format version");
  }
  GaitSpec spec;
  auto read_num = [&](const char* what) {
    std::string tok;
    if (!(in >> tok)) throw FormatError(source_name + ": unexpected end of file in " + what);
    return parse_num(tok, source_name + ": " + what);
  };
  while (in >> word) {
    if (word == "step_length") {
      spec.step_length = read_num("step_length");
    } else if (word == "duration") {
      spec.duration = read_num("duration");
    } else if (word == "clearance") {
      spec.clearance = read_num("clearance");
    } else if (word == "y_std") {
      spec.y_std = read_num("y_std");
    } else if (word == "mu") {
      spec.mu = read_num("mu");
    } else if (word == "w_torque") {
      spec.w_torque = read_num("w_torque");
    } else if (word == "w_smooth") {
      spec.w_smooth = read_num("w_smooth");
    } else if (word == "max_outer") {
      const double v = read_num("max_outer");
      if (v != std::floor(v) || v < 1.0 || v > 1e6) {
        throw FormatError(source_name + ": max_outer must be a positive integer");
      }
      spec.max_outer = static_cast<int>(v);
    } else if (word == "q_seed") {
      std::vector<double> values;
      std::string tok;
      while (in >> tok) values.push_back(parse_num(tok, source_name + ": q_seed"));
      spec.q_seed = Vec(values.size());
      for (size_t i = 0; i < values.size(); ++i) spec.q_seed[i] = values[i];
    } else {
      throw FormatError(source_name + ": unknown gait spec field '" + word + "'");
    }
  }
  spec.check(0);
  return spec;
}

GaitSpec load_gaitspec(const std::string& path) { return parse_gaitspec(read_file(path), path); }

std::string serialize_gaitspec(const GaitSpec& spec) {
  spec.check(0);
  std::ostringstream out;
  out << "hybridgait-gaitspec 1\n";
  out << "step_length " << format_double(spec.step_length) << "\n";
  out << "duration " << format_double(spec.duration) << "\n";
  out << "clearance " << format_double(spec.clearance) << "\n";
  out << "y_std " << format_double(spec.y_std) << "\n";
  out << "mu " << format_double(spec.mu) << "\n";
  out << "w_torque " << format_double(spec.w_torque) << "\n";
  out << "w_smooth " << format_double(spec.w_smooth) << "\n";
  out << "max_outer " << spec.max_outer << "\n";
  if (spec.q_seed.size() > 0) {
    out << "q_seed";
    for (int i = 0; i < spec.q_seed.size(); ++i) out << " " << format_double(spec.q_seed[i]);
    out << "\n";
  }
  return out.str();
}

void save_gaitspec(const std::string& path, const GaitSpec& spec) {
  write_file_atomic(path, serialize_gaitspec(spec));
}

double FeasibilityMargins::min() const { return std::min({joint, torque, zmp, friction, clearance}); }

double ResidualReport::max_invariance() const {
  double m = std::abs(r_A3);
  for (int i = 0; i < r_A1.size(); ++i) m = std::max(m, std::abs(r_A1[i]));
  for (int i = 0; i < r_A2.size(); ++i) m = std::max(m, std::abs(r_A2[i]));
  return m;
}

Vec design_targets(const VirtualConstraint& vc, double theta) {
  Vec t(task::kCount);
  t[task::kBaseX] = theta;
  const Vec des = vc.desired(theta);
  for (int i = 1; i < task::kCount; ++i) t[i] = des[i - 1];
  t[task::kBaseY] -= vc.y_std;
  t[task::kSwingY] -= vc.y_std;
  return t;
}

Vec solve_task_ik(const RobotModel& model, const Vec& target, const Vec& q_seed, double tol) {
  if (target.size() != task::kCount) {
    throw std::invalid_argument("task ik: target must have one entry per task row");
  }
  if (q_seed.size() != model.n()) {
    throw std::invalid_argument("task ik: seed must have one entry per joint");
  }
  if (!(tol > 0.0)) throw std::invalid_argument("task ik: tolerance must be positive");
  const IkResult r = newton_task_ik(model, target, q_seed, 60);
  if (r.residual > tol) {
    throw GaitOptError("task ik: stalled at residual " + format_double(r.residual) +
                       ", the target may be out of reach");
  }
  return r.q;
}

GaitSample gait_sample(const RobotModel& model, const VirtualConstraint& vc, double s,
                       const Vec& q_seed) {
  const int n = model.n();
  GaitSample out;
  out.s = s;
  out.theta = vc.theta_at(s);
  out.q = solve_task_ik(model, design_targets(vc, out.theta), q_seed);
  const TaskKin tk = model.task_kinematics(out.q, Vec::Zero(n));
  const Eigen::JacobiSVD<Mat> svd(tk.J);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > kOutputConditionGate) {
    throw GaitOptError("gait sample: task Jacobian is singular at the desired posture");
  }
  const double rate = vc.nominal_theta_rate();
  const Vec des_d = vc.desired_d(out.theta);
  Vec rhs(n);
  rhs[task::kBaseX] = rate;
  for (int i = 1; i < task::kCount; ++i) rhs[i] = des_d[i - 1] * rate;
  const Eigen::PartialPivLU<Mat> lu(tk.J);
  out.qd = lu.solve(rhs);
  const TaskKin tkv = model.task_kinematics(out.q, out.qd);
  const Vec des_dd = vc.desired_dd(out.theta);
  Vec rhs2(n);
  rhs2[task::kBaseX] = -tkv.Jdot_qdot[task::kBaseX];
  for (int i = 1; i < task::kCount; ++i) {
    rhs2[i] = des_dd[i - 1] * rate * rate - tkv.Jdot_qdot[i];
  }
  out.qdd = lu.solve(rhs2);
  out.u = model.inverse_dynamics(out.q, out.qd, out.qdd);
  out.wrench = model.ground_wrench(out.q, out.qd, out.qdd);
  return out;
}

PreImpactSolution solve_pre_impact(const RobotModel& model, const VirtualConstraint& vc,
                                   const Vec& q_seed) {
  const int n = model.n();
  if (n != task::kCount) {
    throw GaitOptError("pre-impact solve: needs one actuated joint per task row");
  }
  vc.check(0);
  Vec q = q_seed.size() > 0 ? q_seed : vc.q_star;
  if (q.size() != n) {
    throw std::invalid_argument(
        "pre-impact solve: needs a seed posture (argument or vc.q_star)");
  }
  TouchdownEval ev = touchdown_system(model, vc, q);
  double fn = ev.F.norm();
  for (int it = 0; it < 50 && fn > kNewtonFloor; ++it) {
    const Vec step = ev.J.partialPivLu().solve(-ev.F);
    if (!step.allFinite()) break;
    double scale = 1.0;
    bool moved = false;
    for (int halve = 0; halve < 30; ++halve) {
      TouchdownEval trial = touchdown_system(model, vc, q + scale * step);
      if (trial.F.norm() < fn) {
        q += scale * step;
        ev = std::move(trial);
        fn = ev.F.norm();
        moved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!moved) break;
  }
  // Fixed polish steps for the same reason as in newton_task_ik: the result
  // must be a smooth function of the gait coefficients, not of how many
  // iterations the adaptive loop happened to take.
  if (fn <= 1e-8) {
    for (int polish = 0; polish < 2; ++polish) {
      const Vec step = ev.J.partialPivLu().solve(-ev.F);
      if (!step.allFinite()) break;
      TouchdownEval trial = touchdown_system(model, vc, q + step);
      if (!trial.F.allFinite()) break;
      q += step;
      ev = std::move(trial);
      fn = ev.F.norm();
    }
  }
  if (!(fn <= 1e-10)) {
    throw GaitOptError("pre-impact solve: no convergence within 50 iterations, residual " +
                       format_double(fn) +
                       " (the desired curves may never bring the swing sole to the ground)");
  }
  const Eigen::JacobiSVD<Mat> svd(ev.J);
  const double smin = svd.singularValues().minCoeff();
  const double smax = svd.singularValues().maxCoeff();
  if (!(smin > 0.0) || smax / smin > kTouchdownConditionGate) {
    throw GaitOptError("pre-impact solve: touchdown system is singular at the solution");
  }
  PreImpactSolution sol;
  sol.q_star = q;
  sol.q_zero = relabel(model, q);
  sol.theta_star = model.task_values(q)[task::kBaseX];
  sol.theta_zero = model.task_values(sol.q_zero)[task::kBaseX];
  sol.newton_residual = fn;
  sol.condition = smax / smin;
  if (!(sol.theta_zero < sol.theta_star)) {
    throw GaitOptError("pre-impact solve: the landing does not advance the base");
  }
  return sol;
}

ResidualReport impact_invariance_residuals(const RobotModel& model, const VirtualConstraint& vc) {
  const int n = model.n();
  const LandingKinematics lk = landing_kinematics(model, vc, Vec());
  ResidualReport rep;
  const Vec hc0 = model.task_values(lk.sol.q_zero);
  const Vec target0 = design_targets(vc, lk.sol.theta_zero);
  rep.r_A1 = (hc0 - target0).tail(n - 1);
  const Vec des_d0 = vc.desired_d(lk.sol.theta_zero);
  rep.r_A2.resize(n - 1);
  for (int i = 1; i < task::kCount; ++i) {
    rep.r_A2[i - 1] = lk.task_rate0[i] - des_d0[i - 1] * lk.theta0_dot;
  }
  rep.r_A3 = lk.theta0_dot - 1.0;
  return rep;
}

FeasibilityMargins feasibility_residuals(const RobotModel& model, const VirtualConstraint& vc,
                                         const GaitSpec& spec) {
  vc.check(0);
  spec.check(0);
  const Vec start = spec.q_seed.size() == model.n() ? spec.q_seed : vc.q_star;
  if (start.size() != model.n()) {
    throw std::invalid_argument(
        "feasibility check: needs a start posture (spec.q_seed or vc.q_star)");
  }
  return sweep_gait(model, vc, spec, start).margins;
}

namespace {

// Margin units differ (rad, N m, m, N, m); hinge penalties act on margins
// divided by these scales, with a shared pad so certified gaits keep room.
constexpr std::array<double, 5> kMarginScale = {0.1, 1.0, 0.02, 1.0, 0.02};
constexpr double kMarginPad = 0.2;
constexpr double kLiftScale = 0.02;
constexpr double kLiftPad = 0.5;
// Classification band around hinge activation used when an inner loop runs
// on a frozen active set (see GaitProblem::freeze_hinges).
constexpr double kHingeBand = 0.02;

// Free variables: the lateral sway parameters, interior control points of
// every shape row, and the touchdown values of the base rows. Touchdown
// values of the swing rows are pinned to the step geometry, and the first
// two control points of every row are eliminated so the landing maps the
// state exactly onto the desired curves.
class GaitProblem {
 public:
  GaitProblem(const RobotModel& model, const GaitSpec& spec, VirtualConstraint seed)
      : model_(model), spec_(spec), vc_(std::move(seed)) {}

  // Lateral sway parameters, interior points of every row, and the
  // touchdown values of the base rows.
  int free_count() const { return 3 + kPhiRows * (vc_.order() - 2) + 3; }

  struct Assembled {
    VirtualConstraint vc;
    PreImpactSolution sol;
    Vec task_rate0;
    double theta0_dot = 0.0;
    double lift = 0.0;
    Vec eq;
  };

  struct Eval {
    double objective = 0.0;
    Vec eq;
    Vec margins;
    double lift = 0.0;
    double hinge = 0.0;
  };

  Vec pack() const {
    const int ord = vc_.order();
    Vec x(free_count());
    x.segment<3>(0) = vc_.alpha;
    int p = 3;
    for (int r = 0; r < kPhiRows; ++r) {
      for (int j = 2; j <= ord - 1; ++j) x[p++] = vc_.phi_points(r, j);
    }
    for (int r = 0; r < 3; ++r) x[p++] = vc_.phi_points(r, ord);
    return x;
  }

  Assembled assemble(const Vec& x) const {
    const int ord = vc_.order();
    Assembled a;
    a.vc = vc_;
    a.vc.alpha = x.segment<3>(0);
    int p = 3;
    for (int r = 0; r < kPhiRows; ++r) {
      for (int j = 2; j <= ord - 1; ++j) a.vc.phi_points(r, j) = x[p++];
    }
    for (int r = 0; r < 3; ++r) a.vc.phi_points(r, ord) = x[p++];
    a.vc.phi_points(3, ord) = spec_.step_length;
    a.vc.phi_points(4, ord) = -spec_.y_std;
    a.vc.phi_points(5, ord) = 0.0;
    a.vc.phi_points(6, ord) = 0.0;
    a.vc.phi_points(7, ord) = 0.0;
    // Always seed the touchdown solve from the reference posture so the
    // evaluation is a pure function of x. A drifting warm start can hop to
    // a different root of the touchdown system mid line search, which makes
    // finite differences meaningless.
    LandingKinematics lk = landing_kinematics(model_, a.vc, vc_.q_star);
    const Vec hc0 = model_.task_values(lk.sol.q_zero);
    const double range = a.vc.theta_range();
    const int order = a.vc.order();
    for (int r = 0; r < kPhiRows; ++r) {
      const int t = r + 2;
      double v0 = hc0[t];
      if (t == task::kSwingY) v0 += a.vc.y_std;
      const double slope = lk.task_rate0[t] / lk.theta0_dot;
      a.vc.phi_points(r, 0) = v0;
      a.vc.phi_points(r, 1) = v0 + slope * range / order;
    }
    a.vc.q_star = lk.sol.q_star;
    a.sol = lk.sol;
    a.task_rate0 = lk.task_rate0;
    a.theta0_dot = lk.theta0_dot;
    a.lift = lk.task_rate0[task::kSwingZ] / lk.theta0_dot;
    a.eq.resize(4);
    a.eq[0] = hc0[task::kBaseY] - (a.vc.y_des(lk.sol.theta_zero) - a.vc.y_std);
    a.eq[1] = lk.task_rate0[task::kBaseY] - a.vc.y_des_d(lk.sol.theta_zero) * lk.theta0_dot;
    a.eq[2] = lk.theta0_dot - 1.0;
    a.eq[3] = swing_yaw(model_, lk.sol.q_star);
    return a;
  }

  Eval evaluate(const Vec& x) const { return evaluate(x, nullptr); }

  Eval evaluate(const Vec& x, SweepResult* sw_out) const {
    const Assembled a = assemble(x);
    Eval ev;
    ev.eq = a.eq;
    ev.lift = a.lift;
    const SweepResult sw = sweep_gait(model_, a.vc, spec_, a.sol.q_zero);
    ev.margins.resize(5);
    ev.margins << sw.margins.joint, sw.margins.torque, sw.margins.zmp, sw.margins.friction,
        sw.margins.clearance;
    double smooth = 0.0;
    for (int r = 0; r < kPhiRows; ++r) {
      for (int j = 0; j + 2 <= a.vc.order(); ++j) {
        const double d2 = a.vc.phi_points(r, j + 2) - 2.0 * a.vc.phi_points(r, j + 1) +
                          a.vc.phi_points(r, j);
        smooth += d2 * d2;
      }
    }
    ev.objective = spec_.w_torque * sw.torque_integral + spec_.w_smooth * smooth;
    double hs = 0.0;
    for (int c = 0; c < 5; ++c) {
      for (const double m : sw.parts[c]) {
        const double h = std::max(0.0, kMarginPad - m / kMarginScale[c]);
        hs += h * h;
      }
    }
    const double hl = std::max(0.0, kLiftPad - ev.lift / kLiftScale);
    ev.hinge = hs + hl * hl;
    if (sw_out) *sw_out = sw;
    return ev;
  }

  // Hinge entries near or past activation, recorded entry by entry. An inner
  // loop that runs against a frozen set sees a merit that is smooth through
  // the activation boundaries: in-set entries contribute their quadratic
  // without the max clamp, entries safely beyond the band contribute
  // nothing. The true clamped hinge has a curvature kink exactly where the
  // binding entries settle, and finite differences across that kink read
  // walls instead of slopes.
  struct HingeSet {
    std::array<std::vector<char>, 5> in;
    bool lift_in = false;
    bool valid = false;
  };

  HingeSet freeze_hinges(const Vec& x) const {
    HingeSet set;
    SweepResult sw;
    Eval ev;
    try {
      ev = evaluate(x, &sw);
    } catch (const std::runtime_error&) {
      return set;
    }
    for (int c = 0; c < 5; ++c) {
      set.in[c].reserve(sw.parts[c].size());
      for (const double m : sw.parts[c]) {
        set.in[c].push_back(kMarginPad - m / kMarginScale[c] > -kHingeBand ? 1 : 0);
      }
    }
    set.lift_in = kLiftPad - ev.lift / kLiftScale > -kHingeBand;
    set.valid = true;
    return set;
  }

  double merit(const Vec& x, const Vec& lambda, double mu_pen, double rho,
               const HingeSet* set = nullptr) const {
    SweepResult sw;
    Eval ev;
    try {
      ev = evaluate(x, set ? &sw : nullptr);
    } catch (const std::runtime_error&) {
      return 1e50;
    }
    double f = ev.objective;
    for (int i = 0; i < 4; ++i) {
      f += lambda[i] * ev.eq[i] + 0.5 * mu_pen * ev.eq[i] * ev.eq[i];
    }
    double hinge = ev.hinge;
    if (set) {
      if (!set->valid) return 1e50;
      double hs = 0.0;
      for (int c = 0; c < 5; ++c) {
        if (sw.parts[c].size() != set->in[c].size()) return 1e50;
        for (size_t i = 0; i < sw.parts[c].size(); ++i) {
          if (!set->in[c][i]) continue;
          const double z = kMarginPad - sw.parts[c][i] / kMarginScale[c];
          hs += z * z;
        }
      }
      if (set->lift_in) {
        const double zl = kLiftPad - ev.lift / kLiftScale;
        hs += zl * zl;
      }
      hinge = hs;
    }
    f += 0.5 * rho * hinge;
    return f;
  }

 private:
  const RobotModel& model_;
  const GaitSpec& spec_;
  VirtualConstraint vc_;
};

struct InnerResult {
  Vec x;
  double f = 0.0;
  double gnorm = 0.0;
};

// Central finite-difference gradient. Components are independent pure
// evaluations, so they are computed on a small thread pool; the assignment
// of components to threads is static, which keeps the reduction order and
// therefore the result bit-identical regardless of scheduling.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& at, double h_rel,
                double f_at) {
  const int n = static_cast<int>(at.size());
  Vec g(n);
  const unsigned hw = std::thread::hardware_concurrency();
  const int workers = std::clamp(static_cast<int>(hw), 1, 8);
  auto run = [&](int lo, int hi) {
    Vec probe = at;
    for (int i = lo; i < hi; ++i) {
      const double h = h_rel * std::max(1.0, std::abs(at[i]));
      const double orig = probe[i];
      probe[i] = orig + h;
      const double fp = f(probe);
      probe[i] = orig - h;
      const double fm = f(probe);
      probe[i] = orig;
      // A probe that fails to evaluate means the iterate sits next to a
      // solver cliff. Fall back to the one-sided difference on the side
      // that still evaluates; a gradient of 1e50s would otherwise freeze
      // the whole loop at this point.
      if (fp >= 1e49 && fm >= 1e49) {
        g[i] = 0.0;
      } else if (fp >= 1e49) {
        g[i] = (f_at - fm) / h;
      } else if (fm >= 1e49) {
        g[i] = (fp - f_at) / h;
      } else {
        g[i] = (fp - fm) / (2.0 * h);
      }
    }
  };
  if (workers <= 1 || n < 4) {
    run(0, n);
    return g;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(run, lo, hi);
  }
  for (auto& t : pool) t.join();
  return g;
}

// BFGS on the inverse Hessian with Armijo backtracking and central
// finite-difference gradients.
InnerResult bfgs_minimize(const std::function<double(const Vec&)>& f, Vec x, int max_iter,
                          double gtol, double h_rel) {
  const int n = static_cast<int>(x.size());
  double fx = f(x);
  if (fx >= 1e49) {
    throw GaitOptError("gait optimization: the current gait fails to evaluate");
  }
  Vec g = fd_gradient(f, x, h_rel, fx);
  Mat H = Mat::Identity(n, n);
  bool scaled = false;
  std::vector<double> history;
  history.reserve(max_iter + 1);
  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() <= gtol) break;
    // Stop crawling when twenty iterations bought nothing measurable; the
    // outer loop is better served by a multiplier update at that point.
    history.push_back(fx);
    if (it >= 20 && history[it - 20] - fx < 1e-10 * (1.0 + std::abs(fx))) break;
    Vec d = -(H * g);
    double slope = d.dot(g);
    bool steepest = false;
    if (!(slope < 0.0)) {
      H.setIdentity();
      scaled = false;
      d = -g;
      slope = d.dot(g);
      steepest = true;
    }
    bool accepted = false;
    Vec x_new;
    double f_new = 0.0;
    // Two line-search attempts: the quasi-Newton direction first, then a
    // fresh steepest-descent direction if the model direction fails.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      if (attempt == 1) {
        if (steepest) break;
        H.setIdentity();
        scaled = false;
        d = -g;
        slope = d.dot(g);
        steepest = true;
      }
      // Trust-region style cap: the packed coordinates are all O(0.1) gait
      // coefficients, so a unit jump is already far outside the model of
      // the local quadratic.
      const double dn = d.norm();
      if (dn > 0.5) {
        d *= 0.5 / dn;
        slope = d.dot(g);
      }
      double step = 1.0;
      for (int ls = 0; ls < 40; ++ls) {
        x_new = x + step * d;
        f_new = f(x_new);
        if (f_new <= fx + 1e-4 * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (!accepted) {
      if (log::threshold() >= log::Level::kDebug) {
        const Vec dir = -g / g.norm();
        std::string ray = "inner stall it " + std::to_string(it) + " f " + format_double(fx) +
                          " gnorm " + format_double(g.norm()) + " ray";
        for (const double t : {1e-3, 1e-4, 1e-5, 1e-6, 1e-8, 1e-10}) {
          ray += " " + format_double(f(x + t * dir) - fx);
        }
        log::debug(ray);
        int imax = 0;
        for (int i = 1; i < n; ++i) {
          if (std::abs(g[i]) > std::abs(g[imax])) imax = i;
        }
        for (const double hh : {1e-5, 1e-6, 1e-7, 1e-8}) {
          Vec xp = x, xm = x;
          xp[imax] += hh;
          xm[imax] -= hh;
          log::debug("  comp " + std::to_string(imax) + " g " + format_double(g[imax]) +
                     " h " + format_double(hh) + " fp-fx " + format_double(f(xp) - fx) +
                     " fx-fm " + format_double(fx - f(xm)));
        }
      }
      break;
    }
    Vec g_new = fd_gradient(f, x_new, h_rel, f_new);
    const Vec s = x_new - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H = (sy / y.squaredNorm()) * Mat::Identity(n, n);
        scaled = true;
      }
      const Vec Hy = H * y;
      const double yHy = y.dot(Hy);
      H += ((sy + yHy) / (sy * sy)) * (s * s.transpose());
      H -= (Hy * s.transpose() + s * Hy.transpose()) / sy;
    }
    x = std::move(x_new);
    fx = f_new;
    g = std::move(g_new);
  }
  InnerResult out;
  out.x = std::move(x);
  out.f = fx;
  out.gnorm = g.norm();
  return out;
}

// Least-squares multiplier estimate at the current iterate: the multipliers
// that best cancel the penalized-objective gradient along the equality
// gradients. Near a constrained minimum this is far more accurate than the
// running dual estimate, which lets the final iterations run with a small
// penalty weight and therefore a well-conditioned merit.
Vec estimate_multipliers(const GaitProblem& prob, const Vec& x, double rho,
                         const GaitProblem::HingeSet& set, const Vec& fallback) {
  const int nf = static_cast<int>(x.size());
  const Vec zero4 = Vec::Zero(4);
  const auto f0 = [&](const Vec& xx) { return prob.merit(xx, zero4, 0.0, rho, &set); };
  Mat eq_jac(nf, 4);
  const Vec g0 = fd_gradient(f0, x, 4e-6, f0(x));
  if (!g0.allFinite()) return fallback;
  try {
    for (int i = 0; i < nf; ++i) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[i]));
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      eq_jac.row(i) = ((prob.assemble(xp).eq - prob.assemble(xm).eq) / (2.0 * h)).transpose();
    }
  } catch (const std::runtime_error&) {
    return fallback;
  }
  const Vec lam = eq_jac.colPivHouseholderQr().solve(-g0);
  if (!lam.allFinite()) return fallback;
  return lam;
}

VirtualConstraint default_seed_gait(const RobotModel& model, const GaitSpec& spec) {
  VirtualConstraint vc;
  vc.model_name = model.name();
  vc.theta_plus = -0.5 * spec.step_length;
  vc.theta_minus = 0.5 * spec.step_length;
  vc.duration = spec.duration;
  vc.y_std = spec.y_std;
  vc.alpha.resize(3);
  vc.alpha << 0.9 * spec.y_std, M_PI / spec.step_length, 0.5 * M_PI;
  vc.phi_points = Mat::Zero(kPhiRows, 8);
  const Vec hc = model.task_values(spec.q_seed);
  vc.phi_points.row(0).setConstant(hc[task::kBaseZ]);
  // The swing foot decelerates horizontally before touchdown and lands with
  // a shallow descent so the impact preserves most of the phase rate.
  const double L = spec.step_length;
  vc.phi_points.row(3) << -L, -0.8 * L, -0.3 * L, 0.3 * L, 0.8 * L, L, L, L;
  vc.phi_points.row(4).setConstant(-spec.y_std);
  // The swing-height row scales with the requested clearance, capped so the
  // seed stays reachable even when the request is not.
  const double c = std::min(spec.clearance, 0.03);
  vc.phi_points.row(5) << 0.0, 0.1 * c, 7.5 * c, 2.5 * c, 2.5 * c, 7.5 * c, 0.3 * c, 0.0;
  // Walk the seed posture onto the touchdown configuration so the landing
  // solver starts close.
  Vec q = spec.q_seed;
  for (const double s : {0.35, 0.7, 1.0}) {
    q = newton_task_ik(model, design_targets(vc, vc.theta_at(s)), q, 60).q;
  }
  vc.q_star = q;
  return vc;
}

// Gauss-Newton least-norm polish of the landing equalities over the sway
// parameters and the base touchdown values, tightening the constraint-loop
// result to near machine precision.
void polish_equalities(const GaitProblem& prob, Vec& x, double margin_slack = 1e-3) {
  const int nf = prob.free_count();
  const std::array<int, 6> vars = {0, 1, 2, nf - 3, nf - 2, nf - 1};
  // Polishing is a local refinement. Far from a solution the Gauss-Newton
  // steps grow large enough to wreck the feasibility margins, so bail out
  // unless the constraint loop already brought the equalities close.
  double margin_floor;
  try {
    const GaitProblem::Eval ev0 = prob.evaluate(x);
    if (ev0.eq.lpNorm<Eigen::Infinity>() > 5e-2) return;
    margin_floor = std::min(ev0.margins.minCoeff(), ev0.lift) - margin_slack;
  } catch (const std::runtime_error&) {
    return;
  }
  for (int it = 0; it < 15; ++it) {
    Vec e;
    try {
      e = prob.assemble(x).eq;
    } catch (const std::runtime_error&) {
      return;
    }
    if (e.lpNorm<Eigen::Infinity>() <= 1e-11) return;
    Mat J(4, 6);
    for (int c = 0; c < 6; ++c) {
      const double h = 1e-7 * std::max(1.0, std::abs(x[vars[c]]));
      Vec xp = x, xm = x;
      xp[vars[c]] += h;
      xm[vars[c]] -= h;
      try {
        J.col(c) = (prob.assemble(xp).eq - prob.assemble(xm).eq) / (2.0 * h);
      } catch (const std::runtime_error&) {
        return;
      }
    }
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    const Vec dv = svd.solve(-e);
    const double en = e.norm();
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 25; ++ls) {
      Vec xt = x;
      for (int c = 0; c < 6; ++c) xt[vars[c]] += step * dv[c];
      bool ok = false;
      double et = en + 1.0;
      try {
        const GaitProblem::Eval evt = prob.evaluate(xt);
        et = evt.eq.norm();
        ok = std::min(evt.margins.minCoeff(), evt.lift) >= margin_floor;
      } catch (const std::runtime_error&) {
      }
      if (ok && et < en) {
        x = xt;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) return;
  }
}

}  // namespace

GaitOptResult optimize_gait(const RobotModel& model, const GaitSpec& spec,
                            const VirtualConstraint* seed) {
  const int n = model.n();
  spec.check(n);
  if (!(spec.mu > 0.0)) {
    throw FormatError("gait spec: optimization requires a positive friction coefficient");
  }
  VirtualConstraint vc0 = seed ? *seed : default_seed_gait(model, spec);
  vc0.check(n);
  if (vc0.model_name.empty()) vc0.model_name = model.name();
  if (std::abs(vc0.theta_range() - spec.step_length) > 1e-9 ||
      std::abs(vc0.duration - spec.duration) > 1e-9 ||
      std::abs(vc0.y_std - spec.y_std) > 1e-9) {
    throw FormatError("gait spec: the warm-start gait disagrees with the requested geometry");
  }
  const GaitProblem prob(model, spec, vc0);
  Vec x = prob.pack();
  Vec lambda = Vec::Zero(4);
  double mu_pen = 100.0;
  double rho = 100.0;
  double prev_enorm = std::numeric_limits<double>::infinity();
  bool converged = false;
  int outers = 0;
  Vec x_best = x;
  bool best_feasible = false;
  double best_viol = std::numeric_limits<double>::infinity();
  double best_obj = std::numeric_limits<double>::infinity();
  // Enter the seed itself as the first incumbent so a divergent early
  // iterate can never displace it.
  try {
    const GaitProblem::Eval ev0 = prob.evaluate(x);
    best_viol = std::max({ev0.eq.lpNorm<Eigen::Infinity>(), -ev0.margins.minCoeff(), -ev0.lift});
    best_obj = ev0.objective;
    best_feasible = ev0.eq.lpNorm<Eigen::Infinity>() <= 1e-6 && ev0.margins.minCoeff() >= 0.0 &&
                    ev0.lift > 0.0;
    log::debug("gait optimization seed: eq " + format_double(ev0.eq.lpNorm<Eigen::Infinity>()) +
               " joint " + format_double(ev0.margins[0]) + " torque " +
               format_double(ev0.margins[1]) + " zmp " + format_double(ev0.margins[2]) +
               " friction " + format_double(ev0.margins[3]) + " clearance " +
               format_double(ev0.margins[4]) + " lift " + format_double(ev0.lift));
  } catch (const std::runtime_error&) {
    log::debug("gait optimization seed: evaluation failed");
  }
  const auto consider = [&](const Vec& xc, const GaitProblem::Eval& ev) {
    const double enorm = ev.eq.lpNorm<Eigen::Infinity>();
    const bool feasible = enorm <= 1e-6 && ev.margins.minCoeff() >= 0.0 && ev.lift > 0.0;
    const double viol = std::max({enorm, -ev.margins.minCoeff(), -ev.lift});
    if (feasible) {
      if (!best_feasible || ev.objective <= best_obj) {
        x_best = xc;
        best_obj = ev.objective;
        best_feasible = true;
      }
    } else if (!best_feasible && viol < best_viol) {
      x_best = xc;
      best_viol = viol;
      best_obj = ev.objective;
    }
  };
  // Drive phase. Moderate penalty weights pull the iterate towards the
  // constraint manifold while the multiplier updates absorb the constraint
  // forces. The weights stay capped well below the level where the penalty
  // curvature (about mu * |grad e|^2) would make the 1e-7 central
  // differences read the penalty walls instead of the local slope; going
  // harder visibly freezes the inner loop, it does not tighten anything.
  const int drive_budget = std::max(1, spec.max_outer - 3);
  double prev_gnorm = std::numeric_limits<double>::infinity();
  int stalls = 0;
  for (int outer = 1; outer <= drive_budget; ++outer) {
    outers = outer;
    const double gtol = std::clamp(0.05 * prev_enorm, 1e-4, 1e-2);
    const GaitProblem::HingeSet hset = prob.freeze_hinges(x);
    // Once the iterate is near the constraint manifold and the last inner
    // loop was near-stationary, the multipliers come from a least-squares
    // fit at the current point instead of the running accumulation. The
    // fit reads the constraint forces off the gradient, so it needs a
    // mostly-minimized iterate; fitting against a half-minimized gradient
    // produces wild multipliers that send the next inner loop off a cliff.
    const bool fit_ok = prev_enorm <= 1e-2 && prev_gnorm <= 20.0;
    if (fit_ok) {
      lambda = estimate_multipliers(prob, x, rho, hset, lambda);
    }
    const auto fn = [&](const Vec& xx) { return prob.merit(xx, lambda, mu_pen, rho, &hset); };
    const InnerResult inner = bfgs_minimize(fn, x, 120, gtol, 1e-7);
    const bool moved = (inner.x - x).norm() > 1e-13;
    prev_gnorm = inner.gnorm;
    x = inner.x;
    // Pull the iterate back onto the equality manifold before judging it.
    // Near convergence the pull is tiny, and it is margin-guarded.
    polish_equalities(prob, x, 1e-4);
    const GaitProblem::Eval ev = prob.evaluate(x);
    const double enorm = ev.eq.lpNorm<Eigen::Infinity>();
    consider(x, ev);
    log::debug("gait optimization drive " + std::to_string(outer) + ": eq " +
               format_double(enorm) + " gnorm " + format_double(inner.gnorm) + " margin " +
               format_double(ev.margins.minCoeff()) + " lift " + format_double(ev.lift) +
               " objective " + format_double(ev.objective) + " mu " + format_double(mu_pen) +
               " rho " + format_double(rho));
    if (enorm <= 3e-6 && inner.gnorm <= 1e-3 && ev.margins.minCoeff() >= 0.0 &&
        ev.lift > 0.0) {
      break;
    }
    stalls = moved ? 0 : stalls + 1;
    if (stalls >= 3) break;
    if (!fit_ok && moved && enorm > 1e-8) lambda += mu_pen * ev.eq;
    // Harden the penalty only when a near-stationary inner loop still left
    // the equalities behind; an inner loop that ran out of budget says
    // nothing about whether the penalty is strong enough.
    if (inner.gnorm <= 1.0 && enorm > 0.25 * prev_enorm && enorm > 1e-6) {
      mu_pen = std::min(mu_pen * 4.0, 1e4);
    }
    if (ev.hinge > 0.0) rho = std::min(rho * 2.0, 1e3);
    prev_enorm = enorm;
  }
  // Certification rounds. The convergence test demands the inner gradient
  // norm at 1e-6, which a finite difference can only resolve when the merit
  // has low curvature and tiny noise. Re-estimating the multipliers by
  // least squares lets these rounds run with small fixed weights: the
  // minimizer then sits on the constraint manifold without needing large
  // penalties, and the gradient measurement is honest.
  {
    const double mu_cert = 40.0;
    const double rho_cert = 100.0;
    bool enter = false;
    try {
      const GaitProblem::Eval ev = prob.evaluate(x);
      enter = ev.eq.lpNorm<Eigen::Infinity>() <= 1e-3;
    } catch (const std::runtime_error&) {
    }
    if (enter) {
      GaitProblem::HingeSet hset = prob.freeze_hinges(x);
      const auto fn = [&](const Vec& xx) {
        return prob.merit(xx, lambda, mu_cert, rho_cert, &hset);
      };
      for (int round = 1; round <= 3 && outers < spec.max_outer; ++round) {
        ++outers;
        hset = prob.freeze_hinges(x);
        // The least-squares fit is only trustworthy at a near-stationary
        // iterate. When the preceding inner loop exited on its budget
        // instead, run this round on the carried multipliers and let its
        // minimization earn the stationarity for the next round's fit.
        if (prev_gnorm <= 20.0) {
          lambda = estimate_multipliers(prob, x, rho_cert, hset, lambda);
        }
        log::debug("gait optimization certify multipliers " + format_double(lambda[0]) + " " +
                   format_double(lambda[1]) + " " + format_double(lambda[2]) + " " +
                   format_double(lambda[3]));
        const InnerResult inner = bfgs_minimize(fn, x, 500, 1e-6, 4e-6);
        prev_gnorm = inner.gnorm;
        x = inner.x;
        const GaitProblem::Eval ev = prob.evaluate(x);
        const double enorm = ev.eq.lpNorm<Eigen::Infinity>();
        consider(x, ev);
        log::debug("gait optimization certify " + std::to_string(round) + ": eq " +
                   format_double(enorm) + " gnorm " + format_double(inner.gnorm) + " margin " +
                   format_double(ev.margins.minCoeff()) + " lift " + format_double(ev.lift) +
                   " objective " + format_double(ev.objective));
        if (enorm <= 1e-6 && inner.gnorm <= 1e-6 && ev.margins.minCoeff() >= 0.0 &&
            ev.lift > 0.0) {
          converged = true;
          break;
        }
        if (round == 1 && log::threshold() >= log::Level::kDebug) {
          const Vec gd = fd_gradient(fn, x, 4e-6, fn(x));
          int imax = 0;
          for (int i = 1; i < static_cast<int>(gd.size()); ++i) {
            if (std::abs(gd[i]) > std::abs(gd[imax])) imax = i;
          }
          const GaitProblem::Eval e0 = prob.evaluate(x);
          for (const double hh : {-4e-6, -1e-6, -1e-7, 1e-7, 1e-6, 4e-6}) {
            Vec xp = x;
            xp[imax] += hh;
            try {
              const GaitProblem::Eval ep = prob.evaluate(xp);
              log::debug("  decomp comp " + std::to_string(imax) + " h " + format_double(hh) +
                         " dobj " + format_double(ep.objective - e0.objective) + " de0 " +
                         format_double(ep.eq[0] - e0.eq[0]) + " de1 " +
                         format_double(ep.eq[1] - e0.eq[1]) + " de2 " +
                         format_double(ep.eq[2] - e0.eq[2]) + " de3 " +
                         format_double(ep.eq[3] - e0.eq[3]) + " dhinge " +
                         format_double(ep.hinge - e0.hinge));
            } catch (const std::runtime_error&) {
              log::debug("  decomp comp " + std::to_string(imax) + " h " + format_double(hh) +
                         " eval failed");
            }
          }
        }
      }
    }
  }
  if (!converged) x = x_best;
  polish_equalities(prob, x);
  GaitProblem::Assembled fin = prob.assemble(x);
  const GaitProblem::Eval fe = prob.evaluate(x);
  GaitOptResult res;
  res.vc = std::move(fin.vc);
  res.vc.model_name = model.name();
  res.outer_iterations = outers;
  res.objective = fe.objective;
  res.report = impact_invariance_residuals(model, res.vc);
  res.report.margins = feasibility_residuals(model, res.vc, spec);
  res.certified = converged && res.report.max_invariance() <= 1e-6 &&
                  res.report.margins.min() >= 0.0 && fe.lift > 0.0;
  return res;
}

}  // namespace hybridgait
