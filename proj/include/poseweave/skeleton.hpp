#pragma once

// Pose representation, forward kinematics, global-rotation normalization,
// and Procrustes-aligned evaluation metrics over a fixed 22-joint tree.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "poseweave/geometry.hpp"

namespace poseweave::skeleton {

using nlohmann::json;

enum Joint : int {
  kPelvis = 0,
  kLeftHip = 1,
  kRightHip = 2,
  kSpine1 = 3,
  kLeftKnee = 4,
  kRightKnee = 5,
  kSpine2 = 6,
  kLeftAnkle = 7,
  kRightAnkle = 8,
  kSpine3 = 9,
  kLeftFoot = 10,
  kRightFoot = 11,
  kNeck = 12,
  kLeftCollar = 13,
  kRightCollar = 14,
  kHead = 15,
  kLeftShoulder = 16,
  kRightShoulder = 17,
  kLeftElbow = 18,
  kRightElbow = 19,
  kLeftWrist = 20,
  kRightWrist = 21,
};

constexpr int kNumJoints = 22;
constexpr int kNumShapeGroups = 10;

// Kinematic tree: parent per joint (root = -1), rest-direction unit vector
// and rest bone length per non-root joint. Parents precede children.
struct JointTree {
  int num_joints = 0;
  std::vector<int> parent;          // parent[0] == -1
  std::vector<Vec3> rest_dir;       // unit vector, entry 0 unused
  std::vector<double> rest_len;     // meters, entry 0 unused
  std::vector<std::string> names;
  std::vector<int> shape_group;     // bone -> shape group, entry 0 = -1
  std::map<std::string, std::vector<int>> groups;  // semantic joint groups

  void validate() const {
    check(num_joints >= 1, "JointTree: empty");
    check(int(parent.size()) == num_joints, "JointTree: parent size");
    check(parent[0] == -1, "JointTree: joint 0 must be the root");
    for (int j = 1; j < num_joints; ++j) {
      check(parent[j] >= 0 && parent[j] < j, "JointTree: parents must precede children");
      check(rest_len[j] > 0.0, "JointTree: bone lengths must be positive");
      check(std::abs(rest_dir[j].norm() - 1.0) < 1e-9, "JointTree: rest_dir must be unit");
    }
  }
};

// Pose as per-joint axis-angle rotations; index 0 is the global orientation.
struct PoseAA {
  std::vector<Vec3> aa;

  int num_joints() const { return int(aa.size()); }

  static PoseAA identity(int joints) { return PoseAA{std::vector<Vec3>(joints, Vec3::Zero())}; }

  std::vector<double> flat() const {
    std::vector<double> out;
    out.reserve(aa.size() * 3);
    for (const auto& v : aa) { out.push_back(v.x()); out.push_back(v.y()); out.push_back(v.z()); }
    return out;
  }

  static PoseAA from_flat(const std::vector<double>& v) {
    check(v.size() % 3 == 0, "PoseAA::from_flat: length not divisible by 3");
    PoseAA p;
    p.aa.resize(v.size() / 3);
    for (size_t j = 0; j < p.aa.size(); ++j) p.aa[j] = Vec3(v[3 * j], v[3 * j + 1], v[3 * j + 2]);
    return p;
  }
};

struct JointPositions {
  std::vector<Vec3> p;
  int num_joints() const { return int(p.size()); }
};

// 10 coefficients interpreted as multiplicative bone-length scales on
// semantic bone groups; scale = exp(c) clamped to [0.5, 2.0].
struct ShapeCoeffs {
  std::array<double, kNumShapeGroups> c{};

  std::array<double, kNumShapeGroups> scales() const {
    std::array<double, kNumShapeGroups> s{};
    for (int g = 0; g < kNumShapeGroups; ++g)
      s[g] = std::clamp(std::exp(c[g]), 0.5, 2.0);
    return s;
  }
};

// Checked-in constant table for the default human-like 22-joint tree.
// Canonical frame: +y up, subject faces +z, subject's left is +x.
inline const JointTree& default_tree() {
  static const JointTree tree = [] {
    JointTree t;
    t.num_joints = kNumJoints;
    t.names = {"pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
               "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
               "neck", "left_collar", "right_collar", "head", "left_shoulder",
               "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist"};
    t.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

    auto dir = [](double x, double y, double z) { return Vec3(x, y, z).normalized(); };
    t.rest_dir.assign(kNumJoints, Vec3::Zero());
    t.rest_len.assign(kNumJoints, 0.0);
    auto set = [&](int j, Vec3 d, double len) { t.rest_dir[j] = d; t.rest_len[j] = len; };
    set(kLeftHip, dir(0.98, -0.20, 0), 0.11);
    set(kRightHip, dir(-0.98, -0.20, 0), 0.11);
    set(kSpine1, dir(0, 1, 0), 0.12);
    set(kLeftKnee, dir(0, -1, 0), 0.38);
    set(kRightKnee, dir(0, -1, 0), 0.38);
    set(kSpine2, dir(0, 1, 0), 0.13);
    set(kLeftAnkle, dir(0, -1, 0), 0.40);
    set(kRightAnkle, dir(0, -1, 0), 0.40);
    set(kSpine3, dir(0, 1, 0), 0.05);
    set(kLeftFoot, dir(0, -0.30, 0.95), 0.15);
    set(kRightFoot, dir(0, -0.30, 0.95), 0.15);
    set(kNeck, dir(0, 1, 0), 0.22);
    set(kLeftCollar, dir(0.92, 0.38, 0), 0.15);
    set(kRightCollar, dir(-0.92, 0.38, 0), 0.15);
    set(kHead, dir(0, 1, 0), 0.17);
    set(kLeftShoulder, dir(1, 0, 0), 0.10);
    set(kRightShoulder, dir(-1, 0, 0), 0.10);
    set(kLeftElbow, dir(1, 0, 0), 0.26);
    set(kRightElbow, dir(-1, 0, 0), 0.26);
    set(kLeftWrist, dir(1, 0, 0), 0.25);
    set(kRightWrist, dir(-1, 0, 0), 0.25);

    // Shape groups: multiplicative bone-scale sets covering all 21 bones.
    t.shape_group.assign(kNumJoints, -1);
    auto grp = [&](int g, std::initializer_list<int> joints) {
      for (int j : joints) t.shape_group[j] = g;
    };
    grp(0, {kLeftHip, kRightHip});
    grp(1, {kSpine1, kSpine2, kSpine3});
    grp(2, {kNeck, kHead});
    grp(3, {kLeftCollar, kLeftShoulder, kLeftElbow});
    grp(4, {kRightCollar, kRightShoulder, kRightElbow});
    grp(5, {kLeftWrist});
    grp(6, {kRightWrist});
    grp(7, {kLeftKnee});
    grp(8, {kRightKnee});
    grp(9, {kLeftAnkle, kRightAnkle, kLeftFoot, kRightFoot});

    t.groups = {
        {"left_arm", {kLeftCollar, kLeftShoulder, kLeftElbow, kLeftWrist}},
        {"right_arm", {kRightCollar, kRightShoulder, kRightElbow, kRightWrist}},
        {"left_leg", {kLeftHip, kLeftKnee, kLeftAnkle, kLeftFoot}},
        {"right_leg", {kRightHip, kRightKnee, kRightAnkle, kRightFoot}},
        {"head", {kNeck, kHead}},
        {"torso", {kPelvis, kSpine1, kSpine2, kSpine3}},
        {"arms", {kLeftCollar, kLeftShoulder, kLeftElbow, kLeftWrist, kRightCollar,
                  kRightShoulder, kRightElbow, kRightWrist}},
        {"legs", {kLeftHip, kLeftKnee, kLeftAnkle, kLeftFoot, kRightHip, kRightKnee,
                  kRightAnkle, kRightFoot}},
        {"upper_body", {kNeck, kHead, kLeftCollar, kLeftShoulder, kLeftElbow, kLeftWrist,
                        kRightCollar, kRightShoulder, kRightElbow, kRightWrist}},
        {"lower_body", {kLeftHip, kLeftKnee, kLeftAnkle, kLeftFoot, kRightHip, kRightKnee,
                        kRightAnkle, kRightFoot}},
    };
    t.validate();
    return t;
  }();
  return tree;
}

// Per-bone length scale under the given shape (1.0 without shape).
inline double bone_scale(const JointTree& tree, const ShapeCoeffs* shape, int joint) {
  if (shape == nullptr) return 1.0;
  const int g = tree.shape_group[joint];
  if (g < 0) return 1.0;
  return shape->scales()[size_t(g)];
}

// Forward kinematics: joint j's rotation acts on its children; the bone
// parent->j is carried by the parent's global rotation.
inline JointPositions forward_kinematics(const PoseAA& pose, const JointTree& tree,
                                         const ShapeCoeffs* shape = nullptr) {
  check(pose.num_joints() == tree.num_joints,
        "forward_kinematics: pose joint count does not match tree");
  std::vector<Mat3> global(size_t(tree.num_joints));
  JointPositions out;
  out.p.assign(size_t(tree.num_joints), Vec3::Zero());
  global[0] = axis_angle_to_matrix(pose.aa[0]);
  const auto scales = shape ? shape->scales() : std::array<double, kNumShapeGroups>{};
  for (int j = 1; j < tree.num_joints; ++j) {
    const int p = tree.parent[j];
    double scale = 1.0;
    if (shape != nullptr && tree.shape_group[j] >= 0) scale = scales[size_t(tree.shape_group[j])];
    out.p[j] = out.p[p] + global[p] * (tree.rest_dir[j] * (tree.rest_len[j] * scale));
    global[j] = global[p] * axis_angle_to_matrix(pose.aa[j]);
  }
  return out;
}

inline JointPositions rest_positions(const JointTree& tree, const ShapeCoeffs* shape = nullptr) {
  return forward_kinematics(PoseAA::identity(tree.num_joints), tree, shape);
}

// Rest-pose vertical extent; the reference length for posecode thresholds.
inline double body_height(const JointTree& tree, const ShapeCoeffs* shape = nullptr) {
  const auto rest = rest_positions(tree, shape);
  double lo = rest.p[0].y(), hi = rest.p[0].y();
  for (const auto& v : rest.p) { lo = std::min(lo, v.y()); hi = std::max(hi, v.y()); }
  return hi - lo;
}

// Removes the yaw (rotation about +y) component of the global orientation so
// the horizontal projection of the left->right hip axis maps to its
// canonical direction (-x, matching the rest pose where the subject's left
// hip sits at +x). Non-root joints are untouched.
inline PoseAA normalize_global_rotation(const PoseAA& pose, const JointTree& tree) {
  check(pose.num_joints() == tree.num_joints, "normalize_global_rotation: joint count");
  const Mat3 root = axis_angle_to_matrix(pose.aa[0]);
  // Hips attach directly to the root, so their axis depends only on it.
  const Vec3 hips_rest = tree.rest_dir[kLeftHip] * tree.rest_len[kLeftHip] -
                         tree.rest_dir[kRightHip] * tree.rest_len[kRightHip];
  Vec3 axis = root * hips_rest;
  double ax = axis.x(), az = axis.z();
  if (ax * ax + az * az < 1e-18) {
    // Hips near vertical: fall back to the facing direction.
    const Vec3 facing = root * Vec3::UnitZ();
    ax = facing.z();
    az = -facing.x();
    if (ax * ax + az * az < 1e-18) return pose;  // no recoverable heading
  }
  const double target = std::atan2(hips_rest.z(), hips_rest.x());  // 0 for the default tree
  const double yaw = std::atan2(az, ax) - 0.0;
  const double correction = yaw - target;
  if (std::abs(correction) < 1e-15) return pose;
  PoseAA out = pose;
  out.aa[0] = matrix_to_axis_angle(yaw_matrix(correction) * root);
  return out;
}

inline double mpjpe(const JointPositions& a, const JointPositions& b) {
  check(a.num_joints() == b.num_joints(), "mpjpe: joint count mismatch");
  check(a.num_joints() > 0, "mpjpe: empty");
  double sum = 0.0;
  for (int j = 0; j < a.num_joints(); ++j) sum += (a.p[j] - b.p[j]).norm();
  return sum / a.num_joints();
}

struct ProcrustesResult {
  Mat3 rotation;
  double scale = 1.0;
  Vec3 translation;
  JointPositions aligned;
};

// Similarity transform (rotation, isotropic scale, translation) minimizing
// the sum of squared distances from s*R*pred + t to gt.
inline ProcrustesResult procrustes_align(const JointPositions& pred,
                                         const JointPositions& gt) {
  const int n = pred.num_joints();
  check(n == gt.num_joints(), "procrustes_align: joint count mismatch");
  check(n >= 3, "procrustes_align: need at least 3 points");

  Vec3 mu_p = Vec3::Zero(), mu_g = Vec3::Zero();
  for (int i = 0; i < n; ++i) { mu_p += pred.p[i]; mu_g += gt.p[i]; }
  mu_p /= n;
  mu_g /= n;

  double var_p = 0.0, var_g = 0.0;
  Mat3 cov = Mat3::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec3 x = pred.p[i] - mu_p;
    const Vec3 y = gt.p[i] - mu_g;
    var_p += x.squaredNorm();
    var_g += y.squaredNorm();
    cov += y * x.transpose();
  }
  var_p /= n;
  var_g /= n;
  cov /= n;

  if (var_g < 1e-18) throw DegenerateInputError("procrustes_align: ground truth has zero variance");
  if (var_p < 1e-18) throw DegenerateInputError("procrustes_align: prediction has zero variance");

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d.z() = -1.0;
  ProcrustesResult r;
  r.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  r.scale = (svd.singularValues().dot(d)) / var_p;
  r.translation = mu_g - r.scale * (r.rotation * mu_p);
  r.aligned.p.resize(size_t(n));
  for (int i = 0; i < n; ++i) r.aligned.p[i] = r.scale * (r.rotation * pred.p[i]) + r.translation;
  return r;
}

inline double pa_mpjpe(const JointPositions& pred, const JointPositions& gt) {
  return mpjpe(procrustes_align(pred, gt).aligned, gt);
}

// Skeleton constants as a JSON document, for inspection and manifests.
inline json tree_to_json(const JointTree& tree) {
  json j;
  j["num_joints"] = tree.num_joints;
  j["names"] = tree.names;
  j["parents"] = tree.parent;
  json dirs = json::array(), lens = json::array();
  for (int i = 0; i < tree.num_joints; ++i) {
    dirs.push_back({tree.rest_dir[i].x(), tree.rest_dir[i].y(), tree.rest_dir[i].z()});
    lens.push_back(tree.rest_len[i]);
  }
  j["rest_directions"] = dirs;
  j["rest_lengths"] = lens;
  j["shape_groups"] = tree.shape_group;
  j["joint_groups"] = tree.groups;
  return j;
}

}  // namespace poseweave::skeleton
