#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qrbd {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
/// Angular part first, linear part second.
using SpatialVector = Eigen::Matrix<double, 6, 1>;
using SpatialMatrix = Eigen::Matrix<double, 6, 6>;

enum class CrossKind { Motion, Force };

/// Plücker transform between two frames: `rotation` maps parent coordinates
/// into child coordinates, `translation` is the child origin in parent coordinates.
struct SpatialTransform {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 translation = Vector3::Zero();

  static SpatialTransform identity() { return {}; }

  SpatialMatrix motion_matrix() const;
  SpatialMatrix force_matrix() const;
  SpatialVector apply_motion(const SpatialVector& v) const;
  SpatialVector apply_force(const SpatialVector& f) const;
  /// Transpose of the motion matrix applied to a force (child force into parent frame).
  SpatialVector apply_transpose_force(const SpatialVector& f) const;
  SpatialTransform compose(const SpatialTransform& inner) const;
  SpatialTransform inverse() const;
};

Matrix3 skew(const Vector3& v);

/// v x x for motion vectors, v x* x for forces.
SpatialVector spatial_cross(const SpatialVector& v, const SpatialVector& x, CrossKind kind);

/// Explicit 6x6 operator of the motion cross product.
SpatialMatrix motion_cross_matrix(const SpatialVector& v);

enum class JointKind { Revolute, Prismatic };

/// A 1-DOF joint in canonical form: the joint axis is +z of the child link frame.
struct Joint {
  std::string name;
  JointKind kind = JointKind::Revolute;
  /// Parent link frame to joint frame at q = 0.
  SpatialTransform placement;
  double lower = -3.141592653589793;
  double upper = 3.141592653589793;
  double velocity_limit = 0.0;  ///< 0 when the URDF gives none
  double effort_limit = 0.0;    ///< 0 when the URDF gives none

  /// Index of the nonzero entry of the one-hot motion subspace.
  int subspace_index() const { return kind == JointKind::Revolute ? 2 : 5; }
};

struct Link {
  std::string name;
  int parent = -1;  ///< -1 is the fixed base
  double mass = 0.0;
  Vector3 com = Vector3::Zero();
  Matrix3 inertia_com = Matrix3::Zero();  ///< about the COM, in link axes
  Joint joint;

  SpatialMatrix spatial_inertia() const;
};

/// A named frame rigidly attached to a link (merged fixed links, tool points).
struct Frame {
  std::string name;
  int link = -1;  ///< -1 is the fixed base
  SpatialTransform placement;  ///< link frame to this frame
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RobotModel {
 public:
  RobotModel() = default;

  int size() const { return static_cast<int>(links_.size()); }
  const Link& link(int i) const { return links_.at(static_cast<std::size_t>(i)); }
  const std::vector<Link>& links() const { return links_; }
  int parent(int i) const { return link(i).parent; }
  const std::string& name() const { return name_; }
  const std::string& base_name() const { return base_name_; }
  const Vector3& gravity() const { return gravity_; }
  void set_gravity(const Vector3& g) { gravity_ = g; }

  /// Number of movable joints between the base and link i, counting i.
  int depth(int i) const { return depth_.at(static_cast<std::size_t>(i)); }
  /// Links [i, subtree_end(i)) form the subtree rooted at i.
  int subtree_end(int i) const { return subtree_end_.at(static_cast<std::size_t>(i)); }
  bool in_subtree(int root, int j) const { return j >= root && j < subtree_end(root); }
  std::vector<int> children(int i) const;

  const std::vector<Frame>& frames() const { return frames_; }
  std::optional<Frame> find_frame(std::string_view name) const;
  /// End-effector frame: the named frame if set, otherwise the origin of the last link.
  Frame end_effector() const;
  void set_end_effector(std::string_view frame_name);

  /// Scales every joint velocity limit (used by range-sensitivity studies).
  RobotModel with_velocity_limits_scaled(double factor) const;

  /// Checks the structural invariants; throws ModelError.
  void validate() const;

  friend class ModelBuilder;
  friend bool approx_equal(const RobotModel& a, const RobotModel& b, double tol);

 private:
  void finalize();

  std::string name_;
  std::string base_name_;
  std::vector<Link> links_;
  std::vector<Frame> frames_;
  std::vector<int> depth_;
  std::vector<int> subtree_end_;
  Vector3 gravity_{0.0, 0.0, -9.81};
  std::optional<std::string> ee_frame_;
};

bool approx_equal(const RobotModel& a, const RobotModel& b, double tol = 1e-12);

/// Builds a canonical model: fixed joints merged, axes rotated onto +z, links in DFS order.
RobotModel parse_urdf(std::string_view xml);
RobotModel load_urdf(const std::string& path);

/// Serializes the canonical model back to URDF; parsing the result reproduces the model.
std::string to_urdf(const RobotModel& model);
/// Debug dump of the canonical model as JSON text.
std::string to_json(const RobotModel& model);

/// ^iX_λ(q): joint motion composed with the calibrated placement.
SpatialTransform joint_transform(const RobotModel& model, int i, double q);

/// World pose of a frame (rotation child-to-world, origin in world) at configuration q.
struct Pose {
  Matrix3 rotation = Matrix3::Identity();
  Vector3 position = Vector3::Zero();
};
std::vector<Pose> link_poses(const RobotModel& model, const Eigen::VectorXd& q);
Vector3 end_effector_position(const RobotModel& model, const Eigen::VectorXd& q);

}  // namespace qrbd
