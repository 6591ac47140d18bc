#include "hybridgait/outputs.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "hybridgait/log.hpp"

namespace hybridgait {

namespace {

double decasteljau(const Vec& points, double s) {
  Vec tmp = points;
  const int M = static_cast<int>(points.size()) - 1;
  for (int r = 1; r <= M; ++r) {
    for (int i = 0; i <= M - r; ++i) {
      tmp[i] = (1.0 - s) * tmp[i] + s * tmp[i + 1];
    }
  }
  return tmp[0];
}

Vec difference_points(const Vec& points) {
  const int M = static_cast<int>(points.size()) - 1;
  Vec d(M);
  for (int i = 0; i < M; ++i) d[i] = M * (points[i + 1] - points[i]);
  return d;
}

// Bernstein evaluation with the tangent-line continuation outside [0, 1].
double bez_value(const Vec& points, double s, bool* extrapolated) {
  if (s < 0.0) {
    if (extrapolated) *extrapolated = true;
    return decasteljau(points, 0.0) + s * decasteljau(difference_points(points), 0.0);
  }
  if (s > 1.0) {
    if (extrapolated) *extrapolated = true;
    return decasteljau(points, 1.0) + (s - 1.0) * decasteljau(difference_points(points), 1.0);
  }
  return decasteljau(points, s);
}

double bez_deriv(const Vec& points, double s, bool* extrapolated) {
  const Vec d = difference_points(points);
  if (s < 0.0 || s > 1.0) {
    if (extrapolated) *extrapolated = true;
    return decasteljau(d, s < 0.0 ? 0.0 : 1.0);
  }
  return decasteljau(d, s);
}

double bez_deriv2(const Vec& points, double s, bool* extrapolated) {
  if (s < 0.0 || s > 1.0) {
    if (extrapolated) *extrapolated = true;
    return 0.0;
  }
  return decasteljau(difference_points(difference_points(points)), s);
}

double parse_strict_number(const std::string& text, const std::string& context) {
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

}  // namespace

BezierCurve::BezierCurve(const Vec& points) : points_(points) {
  if (points_.size() < 2) {
    throw FormatError("a curve needs at least two control points");
  }
}

double BezierCurve::value(double s) const {
  if (points_.size() < 2) throw FormatError("curve has no control points");
  return bez_value(points_, s, &extrapolation_seen_);
}

double BezierCurve::deriv(double s) const {
  if (points_.size() < 2) throw FormatError("curve has no control points");
  return bez_deriv(points_, s, &extrapolation_seen_);
}

double BezierCurve::deriv2(double s) const {
  if (points_.size() < 2) throw FormatError("curve has no control points");
  return bez_deriv2(points_, s, &extrapolation_seen_);
}

SdProfile::SdProfile(double slope, double offset, std::vector<SinusoidTerm> terms)
    : slope_(slope), offset_(offset), terms_(std::move(terms)) {
  validate();
}

double SdProfile::value(double t) const {
  double v = slope_ * t + offset_;
  for (const SinusoidTerm& term : terms_) v += term.amplitude * std::sin(term.frequency * t);
  return v;
}

double SdProfile::deriv(double t) const {
  double v = slope_;
  for (const SinusoidTerm& term : terms_) {
    v += term.amplitude * term.frequency * std::cos(term.frequency * t);
  }
  return v;
}

double SdProfile::deriv2(double t) const {
  double v = 0.0;
  for (const SinusoidTerm& term : terms_) {
    v -= term.amplitude * term.frequency * term.frequency * std::sin(term.frequency * t);
  }
  return v;
}

void SdProfile::validate() const {
  double wiggle = 0.0;
  for (const SinusoidTerm& term : terms_) wiggle += std::abs(term.amplitude * term.frequency);
  if (slope_ - wiggle > 0.0) return;
  // The cheap bound is inconclusive; sample the speed densely.
  for (int k = 0; k <= 3600 * 1000; ++k) {
    if (deriv(k * 1e-3) <= 0.0) {
      throw FormatError("reference profile speed must stay positive; it reaches " +
                        format_double(deriv(k * 1e-3)) + " at t=" + format_double(k * 1e-3));
    }
  }
}

SdProfile SdProfile::parse(const std::string& text) {
  std::string s;
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  }
  if (s.empty()) throw FormatError("empty reference profile");
  // Split into signed terms; '+'/'-' inside an exponent does not split.
  std::vector<std::string> parts;
  size_t start = 0;
  for (size_t i = 1; i < s.size(); ++i) {
    if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E' && s[i - 1] != '(') {
      parts.push_back(s.substr(start, i - start));
      start = i;
    }
  }
  parts.push_back(s.substr(start));

  double slope = 0.0, offset = 0.0;
  std::vector<SinusoidTerm> terms;
  for (const std::string& raw : parts) {
    std::string term = raw;
    double sign = 1.0;
    if (!term.empty() && (term[0] == '+' || term[0] == '-')) {
      sign = (term[0] == '-') ? -1.0 : 1.0;
      term.erase(0, 1);
    }
    if (term.empty()) {
      throw FormatError("malformed reference profile near '" + raw + "'");
    }
    size_t sin_pos = term.find("*sin(");
    if (sin_pos != std::string::npos) {
      if (term.size() < sin_pos + 8 || term.substr(term.size() - 3) != "*t)") {
        throw FormatError("malformed sinusoid term '" + raw + "' (expected c*sin(w*t))");
      }
      SinusoidTerm st;
      st.amplitude = sign * parse_strict_number(term.substr(0, sin_pos), "sinusoid amplitude");
      st.frequency = parse_strict_number(
          term.substr(sin_pos + 5, term.size() - 3 - (sin_pos + 5)), "sinusoid frequency");
      terms.push_back(st);
    } else if (term.size() >= 2 && term.substr(term.size() - 2) == "*t") {
      slope += sign * parse_strict_number(term.substr(0, term.size() - 2), "profile slope");
    } else {
      offset += sign * parse_strict_number(term, "profile offset");
    }
  }
  return SdProfile(slope, offset, std::move(terms));
}

const char* phi_row_name(int row) {
  static const char* names[kPhiRows] = {"z_b",  "roll_b", "pitch_b", "x_sw",
                                        "y_sw", "z_sw",   "roll_sw", "pitch_sw"};
  if (row < 0 || row >= kPhiRows) throw FormatError("shape row index out of range");
  return names[row];
}

double VirtualConstraint::y_des(double theta) const {
  return alpha[0] * std::sin(alpha[1] * theta + alpha[2]);
}

double VirtualConstraint::y_des_d(double theta) const {
  return alpha[0] * alpha[1] * std::cos(alpha[1] * theta + alpha[2]);
}

double VirtualConstraint::y_des_dd(double theta) const {
  return -alpha[0] * alpha[1] * alpha[1] * std::sin(alpha[1] * theta + alpha[2]);
}

Vec VirtualConstraint::phi(double s) const {
  Vec v(kPhiRows);
  bool ext = false;
  for (int r = 0; r < kPhiRows; ++r) v[r] = bez_value(phi_points.row(r).transpose(), s, &ext);
  if (ext) extrapolation_seen_ = true;
  return v;
}

Vec VirtualConstraint::phi_d(double s) const {
  Vec v(kPhiRows);
  bool ext = false;
  for (int r = 0; r < kPhiRows; ++r) v[r] = bez_deriv(phi_points.row(r).transpose(), s, &ext);
  if (ext) extrapolation_seen_ = true;
  return v;
}

Vec VirtualConstraint::phi_dd(double s) const {
  Vec v(kPhiRows);
  bool ext = false;
  for (int r = 0; r < kPhiRows; ++r) v[r] = bez_deriv2(phi_points.row(r).transpose(), s, &ext);
  if (ext) extrapolation_seen_ = true;
  return v;
}

Vec VirtualConstraint::desired(double theta) const {
  Vec d(1 + kPhiRows);
  d[0] = y_des(theta);
  d.tail(kPhiRows) = phi(phase(theta));
  return d;
}

Vec VirtualConstraint::desired_d(double theta) const {
  Vec d(1 + kPhiRows);
  d[0] = y_des_d(theta);
  d.tail(kPhiRows) = phi_d(phase(theta)) / theta_range();
  return d;
}

Vec VirtualConstraint::desired_dd(double theta) const {
  Vec d(1 + kPhiRows);
  d[0] = y_des_dd(theta);
  d.tail(kPhiRows) = phi_dd(phase(theta)) / (theta_range() * theta_range());
  return d;
}

void VirtualConstraint::check(int n) const {
  if (!(theta_minus > theta_plus)) {
    throw FormatError("gait: theta_minus must exceed theta_plus");
  }
  if (!(duration > 0.0)) throw FormatError("gait: duration must be positive");
  if (!(y_std > 0.0)) throw FormatError("gait: y_std must be positive");
  if (alpha.size() != 3) throw FormatError("gait: alpha must have three entries");
  if (phi_points.rows() != kPhiRows || phi_points.cols() < 2) {
    throw FormatError("gait: control rows must be " + std::to_string(kPhiRows) +
                      " rows of at least two points");
  }
  if (n > 0 && q_star.size() != n) {
    throw FormatError("gait: q_star has dimension " + std::to_string(q_star.size()) +
                      ", expected " + std::to_string(n));
  }
}

std::string serialize_gait(const VirtualConstraint& vc) {
  std::ostringstream out;
  out << "hybridgait-gait 1\n";
  out << "model " << vc.model_name << "\n";
  out << "theta_range " << format_double(vc.theta_plus) << " " << format_double(vc.theta_minus)
      << "\n";
  out << "duration " << format_double(vc.duration) << "\n";
  out << "y_std " << format_double(vc.y_std) << "\n";
  out << "alpha";
  for (int i = 0; i < 3; ++i) out << " " << format_double(vc.alpha[i]);
  out << "\nbezier_order " << vc.order() << "\n";
  for (int r = 0; r < kPhiRows; ++r) {
    out << "phi " << phi_row_name(r);
    for (int c = 0; c <= vc.order(); ++c) out << " " << format_double(vc.phi_points(r, c));
    out << "\n";
  }
  out << "q_star";
  for (int i = 0; i < vc.q_star.size(); ++i) out << " " << format_double(vc.q_star[i]);
  out << "\n";
  return out.str();
}

void save_gait(const std::string& path, const VirtualConstraint& vc) {
  write_file_atomic(path, serialize_gait(vc));
}

VirtualConstraint load_gait(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string word;
  if (!(in >> word) || word != "hybridgait-gait") {
    throw FormatError(path + ": not a gait file (missing format header)");
  }
  int version = 0;
  if (!(in >> version) || version != 1) {
    throw FormatError(path + ": unsupported gait format version");
  }
  VirtualConstraint vc;
  auto read_num = [&](const char* what) {
    std::string tok;
    if (!(in >> tok)) throw FormatError(path + ": unexpected end of file in " + what);
    return parse_strict_number(tok, std::string(path) + ": " + what);
  };
  int order = -1;
  std::map<std::string, int> row_index;
  for (int r = 0; r < kPhiRows; ++r) row_index[phi_row_name(r)] = r;
  std::vector<bool> row_seen(kPhiRows, false);
  bool have_qstar = false;
  while (in >> word) {
    if (word == "model") {
      if (!(in >> vc.model_name)) throw FormatError(path + ": missing model name");
    } else if (word == "theta_range") {
      vc.theta_plus = read_num("theta_range");
      vc.theta_minus = read_num("theta_range");
    } else if (word == "duration") {
      vc.duration = read_num("duration");
    } else if (word == "y_std") {
      vc.y_std = read_num("y_std");
    } else if (word == "alpha") {
      vc.alpha = Vec(3);
      for (int i = 0; i < 3; ++i) vc.alpha[i] = read_num("alpha");
    } else if (word == "bezier_order") {
      order = static_cast<int>(read_num("bezier_order"));
      if (order < 1 || order > 64) throw FormatError(path + ": bezier_order out of range");
      vc.phi_points = Mat::Zero(kPhiRows, order + 1);
    } else if (word == "phi") {
      std::string name;
      if (!(in >> name)) throw FormatError(path + ": missing shape row name");
      auto it = row_index.find(name);
      if (it == row_index.end()) throw FormatError(path + ": unknown shape row '" + name + "'");
      if (order < 0) throw FormatError(path + ": bezier_order must precede shape rows");
      if (row_seen[it->second]) throw FormatError(path + ": duplicate shape row '" + name + "'");
      row_seen[it->second] = true;
      for (int c = 0; c <= order; ++c) vc.phi_points(it->second, c) = read_num("shape row");
    } else if (word == "q_star") {
      std::vector<double> values;
      std::string tok;
      while (in >> tok) {
        values.push_back(parse_strict_number(tok, path + ": q_star"));
      }
      vc.q_star = Vec(values.size());
      for (size_t i = 0; i < values.size(); ++i) vc.q_star[i] = values[i];
      have_qstar = !values.empty();
    } else {
      throw FormatError(path + ": unknown gait field '" + word + "'");
    }
  }
  for (int r = 0; r < kPhiRows; ++r) {
    if (!row_seen[r]) {
      throw FormatError(path + ": missing shape row '" + std::string(phi_row_name(r)) + "'");
    }
  }
  if (!have_qstar) throw FormatError(path + ": missing q_star");
  vc.check(0);
  return vc;
}

void FootAnchor::advance(const RobotModel& model, const Vec& q_minus, const Vec& q_plus) {
  Vec before = model.task_values(q_minus);
  Vec after = model.task_values(q_plus);
  // Keep the physical base point continuous: the forward position carries
  // over directly, the lateral position flips with the frame fold.
  x = x + before[task::kBaseX] - after[task::kBaseX];
  y = -(y + before[task::kBaseY]) - after[task::kBaseY];
  parity = -parity;
  ++step;
}

OutputEval evaluate_outputs(const RobotModel& model, const VirtualConstraint& vc,
                            const SdProfile& sd, double t, const FootAnchor& anchor, const Vec& q,
                            const Vec& qd) {
  TaskKin tk = model.task_kinematics(q, qd);
  OutputEval ev;
  ev.theta = tk.hc[task::kBaseX];
  ev.theta_dot = tk.J.row(task::kBaseX).dot(qd);
  ev.s = vc.phase(ev.theta);

  const Vec des = vc.desired(ev.theta);
  const Vec des_d = vc.desired_d(ev.theta);

  // Desired task values in the stance sole frame. The forward row and the
  // two lateral rows are world targets pulled back through the anchor.
  ev.desired_world = Vec(task::kCount);
  ev.desired_world[task::kBaseX] = sd.value(t) - anchor.x;
  for (int i = 1; i < task::kCount; ++i) {
    ev.desired_world[i] = des[i - 1];
  }
  ev.desired_world[task::kBaseY] -= anchor.y;
  ev.desired_world[task::kSwingY] -= anchor.y;

  ev.y = tk.hc - ev.desired_world;
  ev.ydot = Vec(task::kCount);
  ev.ydot[0] = ev.theta_dot - sd.deriv(t);
  for (int i = 1; i < task::kCount; ++i) {
    ev.ydot[i] = tk.J.row(i).dot(qd) - des_d[i - 1] * ev.theta_dot;
  }
  return ev;
}

}  // namespace hybridgait
