#include "qrbd/robot_model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qrbd {

Matrix3 skew(const Vector3& v) {
  Matrix3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

SpatialMatrix SpatialTransform::motion_matrix() const {
  SpatialMatrix x = SpatialMatrix::Zero();
  x.topLeftCorner<3, 3>() = rotation;
  x.bottomLeftCorner<3, 3>() = -rotation * skew(translation);
  x.bottomRightCorner<3, 3>() = rotation;
  return x;
}

SpatialMatrix SpatialTransform::force_matrix() const {
  SpatialMatrix x = SpatialMatrix::Zero();
  x.topLeftCorner<3, 3>() = rotation;
  x.topRightCorner<3, 3>() = -rotation * skew(translation);
  x.bottomRightCorner<3, 3>() = rotation;
  return x;
}

SpatialVector SpatialTransform::apply_motion(const SpatialVector& v) const {
  SpatialVector out;
  const Vector3 w = v.head<3>();
  out.head<3>() = rotation * w;
  out.tail<3>() = rotation * (v.tail<3>() - translation.cross(w));
  return out;
}

SpatialVector SpatialTransform::apply_force(const SpatialVector& f) const {
  SpatialVector out;
  const Vector3 lin = f.tail<3>();
  out.head<3>() = rotation * (f.head<3>() - translation.cross(lin));
  out.tail<3>() = rotation * lin;
  return out;
}

SpatialVector SpatialTransform::apply_transpose_force(const SpatialVector& f) const {
  SpatialVector out;
  const Vector3 lin = rotation.transpose() * f.tail<3>();
  out.head<3>() = rotation.transpose() * f.head<3>() + translation.cross(lin);
  out.tail<3>() = lin;
  return out;
}

SpatialTransform SpatialTransform::compose(const SpatialTransform& inner) const {
  return {rotation * inner.rotation, inner.translation + inner.rotation.transpose() * translation};
}

SpatialTransform SpatialTransform::inverse() const {
  return {rotation.transpose(), -(rotation * translation)};
}

SpatialMatrix motion_cross_matrix(const SpatialVector& v) {
  SpatialMatrix m = SpatialMatrix::Zero();
  m.topLeftCorner<3, 3>() = skew(v.head<3>());
  m.bottomLeftCorner<3, 3>() = skew(v.tail<3>());
  m.bottomRightCorner<3, 3>() = skew(v.head<3>());
  return m;
}

SpatialVector spatial_cross(const SpatialVector& v, const SpatialVector& x, CrossKind kind) {
  const Vector3 w = v.head<3>();
  const Vector3 vl = v.tail<3>();
  SpatialVector out;
  if (kind == CrossKind::Motion) {
    out.head<3>() = w.cross(x.head<3>());
    out.tail<3>() = w.cross(x.tail<3>()) + vl.cross(x.head<3>());
  } else {
    out.head<3>() = w.cross(x.head<3>()) + vl.cross(x.tail<3>());
    out.tail<3>() = w.cross(x.tail<3>());
  }
  return out;
}

SpatialMatrix Link::spatial_inertia() const {
  SpatialMatrix m = SpatialMatrix::Zero();
  const Matrix3 cx = skew(com);
  m.topLeftCorner<3, 3>() = inertia_com + mass * cx * cx.transpose();
  m.topRightCorner<3, 3>() = mass * cx;
  m.bottomLeftCorner<3, 3>() = mass * cx.transpose();
  m.bottomRightCorner<3, 3>() = mass * Matrix3::Identity();
  return m;
}

std::vector<int> RobotModel::children(int i) const {
  std::vector<int> out;
  for (int j = i + 1; j < subtree_end(i); ++j) {
    if (parent(j) == i) out.push_back(j);
  }
  return out;
}

std::optional<Frame> RobotModel::find_frame(std::string_view name) const {
  for (const auto& f : frames_) {
    if (f.name == name) return f;
  }
  return std::nullopt;
}

Frame RobotModel::end_effector() const {
  if (ee_frame_) {
    if (auto f = find_frame(*ee_frame_)) return *f;
  }
  for (auto it = frames_.rbegin(); it != frames_.rend(); ++it) {
    if (!links_.empty() && it->link == size() - 1) return *it;
  }
  Frame f;
  f.name = links_.empty() ? base_name_ : links_.back().name;
  f.link = size() - 1;
  return f;
}

void RobotModel::set_end_effector(std::string_view frame_name) {
  if (!find_frame(frame_name)) {
    // A link name is also accepted as a frame at the link origin.
    bool found = false;
    for (int i = 0; i < size(); ++i) {
      if (links_[static_cast<std::size_t>(i)].name == frame_name) {
        frames_.push_back(Frame{std::string(frame_name), i, SpatialTransform::identity()});
        found = true;
        break;
      }
    }
    if (!found) throw ModelError("unknown end-effector frame '" + std::string(frame_name) + "'");
  }
  ee_frame_ = std::string(frame_name);
}

RobotModel RobotModel::with_velocity_limits_scaled(double factor) const {
  RobotModel out = *this;
  for (auto& l : out.links_) l.joint.velocity_limit *= factor;
  return out;
}

void RobotModel::finalize() {
  const int n = size();
  depth_.assign(static_cast<std::size_t>(n), 0);
  subtree_end_.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int p = links_[static_cast<std::size_t>(i)].parent;
    depth_[static_cast<std::size_t>(i)] = p < 0 ? 1 : depth_[static_cast<std::size_t>(p)] + 1;
  }
  for (int i = n - 1; i >= 0; --i) {
    int end = i + 1;
    for (int j = i + 1; j < n && depth_[static_cast<std::size_t>(j)] > depth_[static_cast<std::size_t>(i)]; ++j) {
      end = j + 1;
    }
    subtree_end_[static_cast<std::size_t>(i)] = end;
  }
  validate();
}

void RobotModel::validate() const {
  if (links_.empty()) throw ModelError("robot model has no movable joints");
  for (int i = 0; i < size(); ++i) {
    const auto& l = links_[static_cast<std::size_t>(i)];
    if (l.parent >= i || l.parent < -1) throw ModelError("link '" + l.name + "' is not topologically ordered");
    if (!(l.mass > 0.0)) throw ModelError("link '" + l.name + "' has non-positive mass");
    const Matrix3& r = l.joint.placement.rotation;
    if ((r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff() > 1e-9 || r.determinant() < 0.0) {
      throw ModelError("joint '" + l.joint.name + "' placement is not a proper rotation");
    }
    if ((l.inertia_com - l.inertia_com.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw ModelError("link '" + l.name + "' inertia is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix3> eig(l.inertia_com, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw ModelError("link '" + l.name + "' rotational inertia is not positive semidefinite");
    }
  }
}

bool approx_equal(const RobotModel& a, const RobotModel& b, double tol) {
  if (a.size() != b.size() || a.base_name_ != b.base_name_) return false;
  auto close = [tol](const auto& x, const auto& y) { return (x - y).cwiseAbs().maxCoeff() <= tol; };
  for (int i = 0; i < a.size(); ++i) {
    const auto& la = a.link(i);
    const auto& lb = b.link(i);
    if (la.name != lb.name || la.parent != lb.parent || la.joint.kind != lb.joint.kind ||
        la.joint.name != lb.joint.name) {
      return false;
    }
    if (std::abs(la.mass - lb.mass) > tol || !close(la.com, lb.com) || !close(la.inertia_com, lb.inertia_com)) {
      return false;
    }
    if (!close(la.joint.placement.rotation, lb.joint.placement.rotation) ||
        !close(la.joint.placement.translation, lb.joint.placement.translation)) {
      return false;
    }
    if (std::abs(la.joint.lower - lb.joint.lower) > tol || std::abs(la.joint.upper - lb.joint.upper) > tol ||
        std::abs(la.joint.velocity_limit - lb.joint.velocity_limit) > tol ||
        std::abs(la.joint.effort_limit - lb.joint.effort_limit) > tol) {
      return false;
    }
  }
  return true;
}

namespace {

namespace pt = boost::property_tree;

double snap(double x) {
  constexpr double kTol = 1e-12;
  if (std::abs(x) < kTol) return 0.0;
  if (std::abs(x - 1.0) < kTol) return 1.0;
  if (std::abs(x + 1.0) < kTol) return -1.0;
  return x;
}

Matrix3 snapped(Matrix3 m) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = snap(m(r, c));
  return m;
}

Vector3 parse_vec3(const std::string& text, const std::string& what) {
  std::istringstream in(text);
  Vector3 v;
  if (!(in >> v.x() >> v.y() >> v.z())) throw ModelError("malformed vector '" + text + "' in " + what);
  return v;
}

Matrix3 rpy_to_matrix(const Vector3& rpy) {
  const Eigen::AngleAxisd roll(rpy.x(), Vector3::UnitX());
  const Eigen::AngleAxisd pitch(rpy.y(), Vector3::UnitY());
  const Eigen::AngleAxisd yaw(rpy.z(), Vector3::UnitZ());
  return snapped((yaw * pitch * roll).toRotationMatrix());
}

Vector3 matrix_to_rpy(const Matrix3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  double roll = 0.0;
  double yaw = 0.0;
  if (std::abs(std::cos(pitch)) > 1e-9) {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  } else {
    yaw = std::atan2(-r(0, 1), r(1, 1));
  }
  return {roll, pitch, yaw};
}

/// Pose of a frame in some body frame: axes (columns) and origin.
struct Placement {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 position = Vector3::Zero();

  Placement then(const Placement& inner) const {
    return {snapped(rotation * inner.rotation), position + rotation * inner.position};
  }
  SpatialTransform as_transform() const { return {rotation.transpose(), position}; }
};

Placement parse_origin(const pt::ptree& node, const std::string& what) {
  Placement p;
  if (auto origin = node.get_child_optional("origin")) {
    p.position = parse_vec3(origin->get<std::string>("<xmlattr>.xyz", "0 0 0"), what);
    p.rotation = rpy_to_matrix(parse_vec3(origin->get<std::string>("<xmlattr>.rpy", "0 0 0"), what));
  }
  return p;
}

struct RawInertial {
  double mass = 0.0;
  Vector3 com = Vector3::Zero();
  Matrix3 inertia = Matrix3::Zero();
};

struct RawJoint {
  std::string name;
  std::string type;
  std::string parent;
  std::string child;
  Placement origin;
  Vector3 axis = Vector3::UnitX();
  double lower = 0.0;
  double upper = 0.0;
  double velocity = 0.0;
  double effort = 0.0;
  bool has_limit = false;
};

/// Rotation whose third column is `axis`.
Matrix3 axis_alignment(const Vector3& axis) {
  if ((axis - Vector3::UnitZ()).norm() < 1e-12) return Matrix3::Identity();
  if ((axis + Vector3::UnitZ()).norm() < 1e-12) return Vector3(1.0, -1.0, -1.0).asDiagonal();
  const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vector3::UnitZ(), axis);
  return snapped(q.toRotationMatrix());
}

void merge_inertial(Link& body, const Placement& where, const RawInertial& in) {
  if (in.mass <= 0.0) return;
  const Vector3 c2 = where.position + where.rotation * in.com;
  const Matrix3 i2 = where.rotation * in.inertia * where.rotation.transpose();
  const double m = body.mass + in.mass;
  const Vector3 c = (body.mass * body.com + in.mass * c2) / m;
  auto shifted = [&c](const Matrix3& inertia, double mass, const Vector3& com) {
    const Vector3 d = com - c;
    return Matrix3(inertia + mass * (d.squaredNorm() * Matrix3::Identity() - d * d.transpose()));
  };
  const Matrix3 total = shifted(body.inertia_com, body.mass, body.com) + shifted(i2, in.mass, c2);
  body.inertia_com = 0.5 * (total + total.transpose());
  body.mass = m;
  body.com = c;
}

}  // namespace

class ModelBuilder {
 public:
  static RobotModel build(std::string_view xml) {
    try {
      return build_tree(xml);
    } catch (const pt::ptree_error& e) {
      throw ModelError(std::string("invalid URDF: ") + e.what());
    }
  }

 private:
  static RobotModel build_tree(std::string_view xml) {
    pt::ptree tree;
    try {
      std::istringstream in{std::string(xml)};
      pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
    } catch (const pt::xml_parser_error& e) {
      throw ModelError(std::string("malformed URDF XML: ") + e.what());
    }
    auto robot_node = tree.get_child_optional("robot");
    if (!robot_node) throw ModelError("URDF has no <robot> element");

    RobotModel model;
    model.name_ = robot_node->get<std::string>("<xmlattr>.name", "robot");

    std::map<std::string, RawInertial> inertials;
    std::vector<std::string> link_order;
    std::vector<RawJoint> joints;
    for (const auto& [tag, node] : *robot_node) {
      if (tag == "link") {
        const auto name = node.get<std::string>("<xmlattr>.name");
        if (inertials.count(name)) throw ModelError("duplicate link '" + name + "'");
        RawInertial in;
        if (auto inertial = node.get_child_optional("inertial")) {
          const auto what = "inertial of link '" + name + "'";
          const Placement o = parse_origin(*inertial, what);
          in.mass = inertial->get<double>("mass.<xmlattr>.value", 0.0);
          if (in.mass <= 0.0) {
            throw ModelError("link '" + name + "' has non-positive mass");
          }
          Matrix3 i;
          const pt::ptree a = inertial->get_child("inertia.<xmlattr>", pt::ptree{});
          const double ixx = a.get<double>("ixx", 0.0), iyy = a.get<double>("iyy", 0.0),
                       izz = a.get<double>("izz", 0.0), ixy = a.get<double>("ixy", 0.0),
                       ixz = a.get<double>("ixz", 0.0), iyz = a.get<double>("iyz", 0.0);
          i << ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz;
          in.com = o.position;
          in.inertia = o.rotation * i * o.rotation.transpose();
        }
        inertials[name] = in;
        link_order.push_back(name);
      } else if (tag == "joint") {
        RawJoint j;
        j.name = node.get<std::string>("<xmlattr>.name");
        j.type = node.get<std::string>("<xmlattr>.type");
        j.parent = node.get<std::string>("parent.<xmlattr>.link");
        j.child = node.get<std::string>("child.<xmlattr>.link");
        j.origin = parse_origin(node, "joint '" + j.name + "'");
        if (auto axis = node.get_optional<std::string>("axis.<xmlattr>.xyz")) {
          j.axis = parse_vec3(*axis, "axis of joint '" + j.name + "'");
        }
        if (auto limit = node.get_child_optional("limit")) {
          j.has_limit = true;
          j.lower = limit->get<double>("<xmlattr>.lower", 0.0);
          j.upper = limit->get<double>("<xmlattr>.upper", 0.0);
          j.velocity = limit->get<double>("<xmlattr>.velocity", 0.0);
          j.effort = limit->get<double>("<xmlattr>.effort", 0.0);
        }
        joints.push_back(std::move(j));
      }
    }
    if (link_order.empty()) throw ModelError("URDF defines no links");

    std::map<std::string, std::vector<const RawJoint*>> by_parent;
    std::set<std::string> children;
    for (const auto& j : joints) {
      if (j.type == "floating" || j.type == "planar") {
        throw ModelError("unsupported joint type '" + j.type + "' on joint '" + j.name + "'");
      }
      if (j.type != "revolute" && j.type != "continuous" && j.type != "prismatic" && j.type != "fixed") {
        throw ModelError("unknown joint type '" + j.type + "' on joint '" + j.name + "'");
      }
      if (!inertials.count(j.parent) || !inertials.count(j.child)) {
        throw ModelError("joint '" + j.name + "' references an undefined link");
      }
      if (!children.insert(j.child).second) {
        throw ModelError("link '" + j.child + "' has more than one parent (closed loop or cycle)");
      }
      by_parent[j.parent].push_back(&j);
    }
    std::vector<std::string> roots;
    for (const auto& name : link_order) {
      if (!children.count(name)) roots.push_back(name);
    }
    if (roots.size() != 1) {
      throw ModelError(roots.empty() ? "kinematic structure is cyclic (no root link)"
                                     : "URDF has more than one root link");
    }
    model.base_name_ = roots.front();

    std::set<std::string> visited;
    std::function<void(const std::string&, int, const Placement&)> visit =
        [&](const std::string& raw, int body, const Placement& in_body) {
          if (!visited.insert(raw).second) throw ModelError("kinematic structure is cyclic at '" + raw + "'");
          auto it = by_parent.find(raw);
          if (it == by_parent.end()) return;
          for (const RawJoint* j : it->second) {
            const Placement child_in_body = in_body.then(j->origin);
            if (j->type == "fixed") {
              if (body >= 0) merge_inertial(model.links_[static_cast<std::size_t>(body)], child_in_body, inertials[j->child]);
              model.frames_.push_back(Frame{j->child, body, child_in_body.as_transform()});
              visit(j->child, body, child_in_body);
              continue;
            }
            const double norm = j->axis.norm();
            if (std::abs(norm - 1.0) > 1e-6) {
              throw ModelError("axis of joint '" + j->name + "' is not a unit vector");
            }
            const Vector3 axis = j->axis / norm;
            const Matrix3 align = axis_alignment(axis);
            Link link;
            link.name = j->child;
            link.parent = body;
            link.joint.name = j->name;
            link.joint.kind = j->type == "prismatic" ? JointKind::Prismatic : JointKind::Revolute;
            const Placement joint_frame = child_in_body.then(Placement{align, Vector3::Zero()});
            link.joint.placement = joint_frame.as_transform();
            if (j->type == "continuous" || !j->has_limit || j->lower >= j->upper) {
              if (j->type == "prismatic") throw ModelError("prismatic joint '" + j->name + "' needs position limits");
              link.joint.lower = -M_PI;
              link.joint.upper = M_PI;
            } else {
              link.joint.lower = j->lower;
              link.joint.upper = j->upper;
            }
            link.joint.velocity_limit = j->velocity;
            link.joint.effort_limit = j->effort;
            const int index = static_cast<int>(model.links_.size());
            const Placement raw_in_link{align.transpose(), Vector3::Zero()};
            merge_inertial(link, raw_in_link, inertials[j->child]);
            model.links_.push_back(link);
            visit(j->child, index, raw_in_link);
          }
        };
    visit(model.base_name_, -1, Placement{});
    if (visited.size() != link_order.size()) throw ModelError("some links are not reachable from the base");

    for (auto& l : model.links_) {
      if (!(l.mass > 0.0)) throw ModelError("link '" + l.name + "' has non-positive mass");
      l.inertia_com = 0.5 * (l.inertia_com + l.inertia_com.transpose());
      for (int r = 0; r < 3; ++r) {
        if (std::abs(l.com(r)) < 1e-15) l.com(r) = 0.0;
        if (std::abs(l.joint.placement.translation(r)) < 1e-15) l.joint.placement.translation(r) = 0.0;
      }
    }
    model.finalize();
    return model;
  }
};

RobotModel parse_urdf(std::string_view xml) { return ModelBuilder::build(xml); }

RobotModel load_urdf(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open URDF file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_urdf(ss.str());
}

namespace {

std::string fmt_num(double x) {
  std::ostringstream o;
  o.precision(17);
  o << x;
  return o.str();
}

std::string fmt_vec(const Vector3& v) { return fmt_num(v.x()) + " " + fmt_num(v.y()) + " " + fmt_num(v.z()); }

}  // namespace

std::string to_urdf(const RobotModel& model) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\"?>\n<robot name=\"" << model.name() << "\">\n";
  out << "  <link name=\"" << model.base_name() << "\"/>\n";
  for (int i = 0; i < model.size(); ++i) {
    const auto& l = model.link(i);
    const auto& I = l.inertia_com;
    out << "  <link name=\"" << l.name << "\">\n    <inertial>\n      <origin xyz=\"" << fmt_vec(l.com)
        << "\" rpy=\"0 0 0\"/>\n      <mass value=\"" << fmt_num(l.mass) << "\"/>\n      <inertia ixx=\""
        << fmt_num(I(0, 0)) << "\" ixy=\"" << fmt_num(I(0, 1)) << "\" ixz=\"" << fmt_num(I(0, 2)) << "\" iyy=\""
        << fmt_num(I(1, 1)) << "\" iyz=\"" << fmt_num(I(1, 2)) << "\" izz=\"" << fmt_num(I(2, 2))
        << "\"/>\n    </inertial>\n  </link>\n";
    const auto& j = l.joint;
    const std::string parent = l.parent < 0 ? model.base_name() : model.link(l.parent).name;
    out << "  <joint name=\"" << j.name << "\" type=\""
        << (j.kind == JointKind::Prismatic ? "prismatic" : "revolute") << "\">\n    <parent link=\"" << parent
        << "\"/>\n    <child link=\"" << l.name << "\"/>\n    <origin xyz=\"" << fmt_vec(j.placement.translation)
        << "\" rpy=\"" << fmt_vec(matrix_to_rpy(j.placement.rotation.transpose()))
        << "\"/>\n    <axis xyz=\"0 0 1\"/>\n    <limit lower=\"" << fmt_num(j.lower) << "\" upper=\""
        << fmt_num(j.upper) << "\" velocity=\"" << fmt_num(j.velocity_limit) << "\" effort=\""
        << fmt_num(j.effort_limit) << "\"/>\n  </joint>\n";
  }
  out << "</robot>\n";
  return out.str();
}

std::string to_json(const RobotModel& model) {
  using nlohmann::json;
  auto vec = [](const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); };
  auto mat = [&](const Matrix3& m) { return json::array({vec(m.row(0)), vec(m.row(1)), vec(m.row(2))}); };
  json j;
  j["name"] = model.name();
  j["base"] = model.base_name();
  j["gravity"] = vec(model.gravity());
  json links = json::array();
  for (int i = 0; i < model.size(); ++i) {
    const auto& l = model.link(i);
    links.push_back({{"index", i},
                     {"name", l.name},
                     {"parent", l.parent},
                     {"depth", model.depth(i)},
                     {"mass", l.mass},
                     {"com", vec(l.com)},
                     {"inertia_com", mat(l.inertia_com)},
                     {"joint",
                      {{"name", l.joint.name},
                       {"kind", l.joint.kind == JointKind::Revolute ? "revolute" : "prismatic"},
                       {"subspace_index", l.joint.subspace_index()},
                       {"rotation", mat(l.joint.placement.rotation)},
                       {"translation", vec(l.joint.placement.translation)},
                       {"lower", l.joint.lower},
                       {"upper", l.joint.upper},
                       {"velocity_limit", l.joint.velocity_limit},
                       {"effort_limit", l.joint.effort_limit}}}});
  }
  j["links"] = links;
  json frames = json::array();
  for (const auto& f : model.frames()) {
    frames.push_back({{"name", f.name}, {"link", f.link}, {"translation", vec(f.placement.translation)}});
  }
  j["frames"] = frames;
  j["end_effector"] = model.end_effector().name;
  return j.dump(2);
}

SpatialTransform joint_transform(const RobotModel& model, int i, double q) {
  if (i < 0 || i >= model.size()) throw std::out_of_range("joint index " + std::to_string(i) + " out of range");
  const Joint& j = model.link(i).joint;
  SpatialTransform motion;
  if (j.kind == JointKind::Revolute) {
    const double c = std::cos(q), s = std::sin(q);
    motion.rotation << c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0;
  } else {
    motion.translation = Vector3(0.0, 0.0, q);
  }
  return motion.compose(j.placement);
}

std::vector<Pose> link_poses(const RobotModel& model, const Eigen::VectorXd& q) {
  std::vector<Pose> poses(static_cast<std::size_t>(model.size()));
  for (int i = 0; i < model.size(); ++i) {
    const SpatialTransform x = joint_transform(model, i, q(i));
    const int p = model.parent(i);
    const Pose parent = p < 0 ? Pose{} : poses[static_cast<std::size_t>(p)];
    poses[static_cast<std::size_t>(i)] = {parent.rotation * x.rotation.transpose(),
                                          parent.position + parent.rotation * x.translation};
  }
  return poses;
}

Vector3 end_effector_position(const RobotModel& model, const Eigen::VectorXd& q) {
  const Frame ee = model.end_effector();
  if (ee.link < 0) return ee.placement.translation;
  const auto poses = link_poses(model, q);
  const Pose& p = poses[static_cast<std::size_t>(ee.link)];
  return p.position + p.rotation * ee.placement.translation;
}

}  // namespace qrbd
