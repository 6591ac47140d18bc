#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "hybridgait/model.hpp"

namespace hybridgait {

namespace {

struct Token {
  std::string text;
  int line;
};

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> tokens;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream words(line);
    std::string word;
    while (words >> word) {
      tokens.push_back({word, line_no});
    }
  }
  return tokens;
}

}  // namespace

class ModelParser {
 public:
  ModelParser(const std::string& text, const std::string& source)
      : tokens_(tokenize(text)), source_(source) {}

  RobotModel build() {
    while (pos_ < tokens_.size()) {
      const Token& tok = next("directive");
      if (tok.text == "model") {
        model_.name_ = next("model name").text;
      } else if (tok.text == "gravity") {
        model_.gravity_ = number("gravity");
      } else if (tok.text == "nominal_base_height") {
        model_.nominal_base_height_ = number("nominal_base_height");
      } else if (tok.text == "foot_rect") {
        for (double& v : model_.foot_rect_) v = number("foot_rect");
        if (!(model_.foot_rect_[0] < model_.foot_rect_[1] &&
              model_.foot_rect_[2] < model_.foot_rect_[3])) {
          fail(tok.line, "foot_rect must satisfy x_min < x_max and y_min < y_max");
        }
      } else if (tok.text == "root") {
        parse_root(tok.line);
      } else if (tok.text == "joint") {
        parse_joint(tok.line);
      } else if (tok.text == "base_point") {
        base_point_link_ = next("base_point link").text;
        for (int k = 0; k < 3; ++k) model_.base_point_[k] = number("base_point");
      } else if (tok.text == "swing_point") {
        swing_point_link_ = next("swing_point link").text;
        for (int k = 0; k < 3; ++k) model_.swing_point_[k] = number("swing_point");
      } else if (tok.text == "mirror") {
        MirrorEntry e;
        e.line = tok.line;
        e.joint_a = next("mirror joint").text;
        e.joint_b = next("mirror joint").text;
        e.sign = number("mirror sign");
        if (e.sign != 1.0 && e.sign != -1.0) fail(e.line, "mirror sign must be +1 or -1");
        mirror_entries_.push_back(e);
      } else {
        fail(tok.line, "unknown directive '" + tok.text + "'");
      }
    }
    finish();
    return std::move(model_);
  }

 private:
  struct MirrorEntry {
    std::string joint_a;
    std::string joint_b;
    double sign = 0.0;
    int line = 0;
  };

  [[noreturn]] void fail(int line, const std::string& message) const {
    throw ModelError(source_ + ":" + std::to_string(line) + ": " + message);
  }

  const Token& next(const std::string& context) {
    if (pos_ >= tokens_.size()) {
      int line = tokens_.empty() ? 1 : tokens_.back().line;
      fail(line, "unexpected end of input while reading " + context);
    }
    return tokens_[pos_++];
  }

  bool peek_is_number() const {
    if (pos_ >= tokens_.size()) return false;
    const std::string& t = tokens_[pos_].text;
    try {
      size_t used = 0;
      (void)std::stod(t, &used);
      return used == t.size();
    } catch (const std::exception&) {
      return false;
    }
  }

  double number(const std::string& context) {
    const Token& tok = next(context);
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok.text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.text.size() || !std::isfinite(v)) {
      fail(tok.line, context + ": expected a number, got '" + tok.text + "'");
    }
    return v;
  }

  void expect(const char* literal, const std::string& context) {
    const Token& tok = next(context);
    if (tok.text != literal) {
      fail(tok.line, context + ": expected '" + std::string(literal) + "', got '" + tok.text + "'");
    }
  }

  Vec3 vec3(const std::string& context) {
    Vec3 v;
    for (int k = 0; k < 3; ++k) v[k] = number(context);
    return v;
  }

  // Either three diagonal entries or six entries ixx iyy izz ixy ixz iyz.
  Mat3 inertia_matrix(const std::string& context) {
    Vec3 d = vec3(context);
    Mat3 I = d.asDiagonal();
    if (peek_is_number()) {
      double ixy = number(context);
      double ixz = number(context);
      double iyz = number(context);
      I(0, 1) = I(1, 0) = ixy;
      I(0, 2) = I(2, 0) = ixz;
      I(1, 2) = I(2, 1) = iyz;
    }
    return I;
  }

  void claim_name(const std::string& name, int line) {
    if (!used_names_.insert(name).second) {
      fail(line, "duplicate name '" + name + "'");
    }
  }

  void parse_root(int line) {
    if (have_root_) fail(line, "duplicate root block");
    have_root_ = true;
    model_.root_.link_name = next("root link name").text;
    claim_name(model_.root_.link_name, line);
    expect("{", "root block");
    std::set<std::string> seen;
    while (true) {
      const Token& tok = next("root field");
      if (tok.text == "}") break;
      if (!seen.insert(tok.text).second) {
        fail(tok.line, "root: duplicate field '" + tok.text + "'");
      }
      if (tok.text == "mass") {
        model_.root_.mass = number("mass");
      } else if (tok.text == "com") {
        model_.root_.com = vec3("com");
      } else if (tok.text == "inertia") {
        model_.root_.inertia = inertia_matrix("inertia");
      } else {
        fail(tok.line, "root: unknown field '" + tok.text + "'");
      }
    }
    for (const char* field : {"mass", "com", "inertia"}) {
      if (!seen.count(field)) fail(line, "root: missing field '" + std::string(field) + "'");
    }
  }

  void parse_joint(int line) {
    if (!have_root_) fail(line, "joint declared before the root block");
    LinkSpec link;
    link.joint_name = next("joint name").text;
    claim_name(link.joint_name, line);
    expect("{", "joint '" + link.joint_name + "'");
    std::set<std::string> seen;
    std::string parent_name;
    while (true) {
      const Token& tok = next("joint field");
      if (tok.text == "}") break;
      if (!seen.insert(tok.text).second) {
        fail(tok.line, "joint '" + link.joint_name + "': duplicate field '" + tok.text + "'");
      }
      if (tok.text == "parent") {
        parent_name = next("parent").text;
      } else if (tok.text == "child") {
        link.link_name = next("child").text;
      } else if (tok.text == "origin") {
        link.origin = vec3("origin");
      } else if (tok.text == "axis") {
        link.axis = vec3("axis");
      } else if (tok.text == "mass") {
        link.mass = number("mass");
      } else if (tok.text == "com") {
        link.com = vec3("com");
      } else if (tok.text == "inertia") {
        link.inertia = inertia_matrix("inertia");
      } else if (tok.text == "limits") {
        link.q_min = number("limits");
        link.q_max = number("limits");
      } else if (tok.text == "torque_limit") {
        link.torque_limit = number("torque_limit");
      } else {
        fail(tok.line, "joint '" + link.joint_name + "': unknown field '" + tok.text + "'");
      }
    }
    for (const char* field : {"parent", "child", "origin", "axis", "mass", "com", "inertia",
                              "limits", "torque_limit"}) {
      if (!seen.count(field)) {
        fail(line, "joint '" + link.joint_name + "': missing field '" + std::string(field) + "'");
      }
    }
    claim_name(link.link_name, line);
    if (parent_name == model_.root_.link_name) {
      link.parent = -1;
    } else {
      auto it = link_by_name_.find(parent_name);
      if (it == link_by_name_.end()) {
        fail(line, "joint '" + link.joint_name + "': unknown parent '" + parent_name + "'");
      }
      link.parent = it->second;
    }
    link_by_name_[link.link_name] = static_cast<int>(model_.links_.size());
    joint_by_name_[link.joint_name] = static_cast<int>(model_.links_.size());
    model_.links_.push_back(link);
  }

  int resolve_link(const std::string& name, int line, const char* what) const {
    auto it = link_by_name_.find(name);
    if (it == link_by_name_.end()) {
      fail(line, std::string(what) + ": unknown link '" + name + "'");
    }
    return it->second;
  }

  void finish() {
    if (model_.name_.empty()) {
      fail(1, "missing 'model' declaration");
    }
    if (!have_root_) fail(1, "missing root block");
    const int n = static_cast<int>(model_.links_.size());
    if ((base_point_link_.empty()) != (swing_point_link_.empty())) {
      fail(1, "base_point and swing_point must be declared together");
    }
    if (!base_point_link_.empty()) {
      model_.base_link_ = resolve_link(base_point_link_, 1, "base_point");
      model_.swing_link_ = resolve_link(swing_point_link_, 1, "swing_point");
    }
    if (!mirror_entries_.empty()) {
      Mat S = Mat::Zero(n, n);
      std::vector<bool> used(n, false);
      for (const MirrorEntry& e : mirror_entries_) {
        auto ia = joint_by_name_.find(e.joint_a);
        auto ib = joint_by_name_.find(e.joint_b);
        if (ia == joint_by_name_.end()) fail(e.line, "mirror: unknown joint '" + e.joint_a + "'");
        if (ib == joint_by_name_.end()) fail(e.line, "mirror: unknown joint '" + e.joint_b + "'");
        for (int idx : {ia->second, ib->second}) {
          if (used[idx]) {
            fail(e.line, "duplicate mirror entry for joint '" + model_.links_[idx].joint_name + "'");
          }
        }
        S(ia->second, ib->second) = e.sign;
        S(ib->second, ia->second) = e.sign;
        used[ia->second] = true;
        used[ib->second] = true;
      }
      for (int i = 0; i < n; ++i) {
        if (!used[i]) {
          fail(mirror_entries_.back().line,
               "mirror map does not cover joint '" + model_.links_[i].joint_name + "'");
        }
      }
      model_.mirror_.S = S;
    }
    model_.ancestors_.resize(n);
    for (int i = 0; i < n; ++i) {
      if (model_.links_[i].parent >= 0) {
        model_.ancestors_[i] = model_.ancestors_[model_.links_[i].parent];
      }
      model_.ancestors_[i].push_back(i);
    }
    model_.total_mass_ = model_.root_.mass;
    for (const LinkSpec& link : model_.links_) model_.total_mass_ += link.mass;
    model_.B_u_ = Mat::Identity(n, n);
    model_.validate();
  }

  std::vector<Token> tokens_;
  std::string source_;
  size_t pos_ = 0;
  RobotModel model_;
  bool have_root_ = false;
  std::set<std::string> used_names_;
  std::map<std::string, int> link_by_name_;
  std::map<std::string, int> joint_by_name_;
  std::string base_point_link_;
  std::string swing_point_link_;
  std::vector<MirrorEntry> mirror_entries_;
};

RobotModel RobotModel::parse(const std::string& text, const std::string& source_name) {
  ModelParser parser(text, source_name);
  return parser.build();
}

RobotModel RobotModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ModelError("cannot open model file '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

}  // namespace hybridgait
