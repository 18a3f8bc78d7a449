#pragma once

// Procedural tri-modal dataset: pose sampling, farthest-point selection,
// keypoint-view rendering with occlusion, posecode extraction, template
// captioning, pair mining, and comparative instructions. The whole dataset is
// a pure function of (config, seed).

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "poseweave/skeleton.hpp"

namespace poseweave::datagen {

using nlohmann::json;
using skeleton::JointPositions;
using skeleton::JointTree;
using skeleton::PoseAA;
using skeleton::ShapeCoeffs;

struct UnrenderableError : std::runtime_error {
  explicit UnrenderableError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Posecodes
// ---------------------------------------------------------------------------

enum class CodeKind { kAngle, kVertical, kLateral, kDistance, kGround };
enum class CodeSubject {
  kLeftElbow, kRightElbow, kLeftKnee, kRightKnee,
  kLeftHand, kRightHand, kLeftFoot, kRightFoot, kHands, kFeet,
};
enum class CodeValue {
  kBent, kPartlyBent, kStraight,
  kAbove, kBelow, kLevel,
  kCrossedOver,
  kClose, kWide,
  kOnGround, kRaised,
};

inline const char* to_string(CodeKind k) {
  switch (k) {
    case CodeKind::kAngle: return "angle";
    case CodeKind::kVertical: return "vertical";
    case CodeKind::kLateral: return "lateral";
    case CodeKind::kDistance: return "distance";
    case CodeKind::kGround: return "ground";
  }
  return "?";
}
inline const char* to_string(CodeSubject s) {
  switch (s) {
    case CodeSubject::kLeftElbow: return "left_elbow";
    case CodeSubject::kRightElbow: return "right_elbow";
    case CodeSubject::kLeftKnee: return "left_knee";
    case CodeSubject::kRightKnee: return "right_knee";
    case CodeSubject::kLeftHand: return "left_hand";
    case CodeSubject::kRightHand: return "right_hand";
    case CodeSubject::kLeftFoot: return "left_foot";
    case CodeSubject::kRightFoot: return "right_foot";
    case CodeSubject::kHands: return "hands";
    case CodeSubject::kFeet: return "feet";
  }
  return "?";
}
inline const char* to_string(CodeValue v) {
  switch (v) {
    case CodeValue::kBent: return "bent";
    case CodeValue::kPartlyBent: return "partly_bent";
    case CodeValue::kStraight: return "straight";
    case CodeValue::kAbove: return "above";
    case CodeValue::kBelow: return "below";
    case CodeValue::kLevel: return "level";
    case CodeValue::kCrossedOver: return "crossed_over";
    case CodeValue::kClose: return "close";
    case CodeValue::kWide: return "wide";
    case CodeValue::kOnGround: return "on_ground";
    case CodeValue::kRaised: return "raised";
  }
  return "?";
}

struct Posecode {
  CodeKind kind;
  CodeSubject subject;
  CodeValue value;
  // vertical codes are measured against the shoulders
  std::string object() const { return kind == CodeKind::kVertical ? "shoulders" : ""; }

  bool operator==(const Posecode& o) const {
    return kind == o.kind && subject == o.subject && value == o.value;
  }
  bool operator<(const Posecode& o) const {
    return std::tie(kind, subject, value) < std::tie(o.kind, o.subject, o.value);
  }

  json to_json() const {
    json j = json::array();
    j.push_back(to_string(kind));
    j.push_back(to_string(subject));
    j.push_back(to_string(value));
    if (!object().empty()) j.push_back(object());
    return j;
  }
};

// Thresholds in degrees / fractions of body height; checked-in defaults.
struct PosecodeThresholds {
  double bent_deg = 110.0;
  double straight_deg = 160.0;
  double vertical_margin = 0.15;
  double lateral_margin = 0.05;
  double close_frac = 0.2;
  double wide_frac = 0.6;
  double ground_frac = 0.05;

  json to_json() const {
    return {{"bent_deg", bent_deg},         {"straight_deg", straight_deg},
            {"vertical_margin", vertical_margin}, {"lateral_margin", lateral_margin},
            {"close_frac", close_frac},     {"wide_frac", wide_frac},
            {"ground_frac", ground_frac}};
  }
  static PosecodeThresholds from_json(const json& j) {
    PosecodeThresholds t;
    t.bent_deg = j.at("bent_deg");
    t.straight_deg = j.at("straight_deg");
    t.vertical_margin = j.at("vertical_margin");
    t.lateral_margin = j.at("lateral_margin");
    t.close_frac = j.at("close_frac");
    t.wide_frac = j.at("wide_frac");
    t.ground_frac = j.at("ground_frac");
    return t;
  }
};

inline double interior_angle_deg(const Vec3& a, const Vec3& center, const Vec3& b) {
  const Vec3 u = a - center, v = b - center;
  const double nu = u.norm(), nv = v.norm();
  if (nu < 1e-12 || nv < 1e-12) return 180.0;
  const double c = std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

// Deterministic categorical codes from thresholded joint geometry, emitted in
// a fixed canonical order (left arm, right arm, left leg, right leg, body).
inline std::vector<Posecode> extract_posecodes(const JointPositions& pos,
                                               const PosecodeThresholds& th,
                                               double height) {
  using namespace skeleton;
  check(pos.num_joints() == kNumJoints, "extract_posecodes: expected 22 joints");
  std::vector<Posecode> out;
  double ground = pos.p[0].y();
  for (const auto& v : pos.p) ground = std::min(ground, v.y());

  auto angle_code = [&](CodeSubject sub, int a, int center, int b) {
    const double deg = interior_angle_deg(pos.p[a], pos.p[center], pos.p[b]);
    CodeValue v = deg < th.bent_deg            ? CodeValue::kBent
                  : deg > th.straight_deg      ? CodeValue::kStraight
                                               : CodeValue::kPartlyBent;
    out.push_back({CodeKind::kAngle, sub, v});
  };
  auto vertical_code = [&](CodeSubject sub, int wrist, int shoulder) {
    const double dy = pos.p[wrist].y() - pos.p[shoulder].y();
    CodeValue v = dy > th.vertical_margin * height    ? CodeValue::kAbove
                  : dy < -th.vertical_margin * height ? CodeValue::kBelow
                                                      : CodeValue::kLevel;
    out.push_back({CodeKind::kVertical, sub, v});
  };
  auto lateral_code = [&](CodeSubject sub, int wrist, double side_sign) {
    // side_sign +1 for the left hand (rest side +x), -1 for the right
    const double dx = (pos.p[wrist].x() - pos.p[kPelvis].x()) * side_sign;
    if (dx < -th.lateral_margin * height)
      out.push_back({CodeKind::kLateral, sub, CodeValue::kCrossedOver});
  };
  auto ground_code = [&](CodeSubject sub, int foot) {
    CodeValue v = pos.p[foot].y() - ground < th.ground_frac * height ? CodeValue::kOnGround
                                                                     : CodeValue::kRaised;
    out.push_back({CodeKind::kGround, sub, v});
  };
  auto distance_code = [&](CodeSubject sub, int a, int b) {
    const double d = (pos.p[a] - pos.p[b]).norm();
    if (d < th.close_frac * height)
      out.push_back({CodeKind::kDistance, sub, CodeValue::kClose});
    else if (d > th.wide_frac * height)
      out.push_back({CodeKind::kDistance, sub, CodeValue::kWide});
  };

  angle_code(CodeSubject::kLeftElbow, kLeftShoulder, kLeftElbow, kLeftWrist);
  vertical_code(CodeSubject::kLeftHand, kLeftWrist, kLeftShoulder);
  lateral_code(CodeSubject::kLeftHand, kLeftWrist, +1.0);
  angle_code(CodeSubject::kRightElbow, kRightShoulder, kRightElbow, kRightWrist);
  vertical_code(CodeSubject::kRightHand, kRightWrist, kRightShoulder);
  lateral_code(CodeSubject::kRightHand, kRightWrist, -1.0);
  angle_code(CodeSubject::kLeftKnee, kLeftHip, kLeftKnee, kLeftAnkle);
  ground_code(CodeSubject::kLeftFoot, kLeftFoot);
  angle_code(CodeSubject::kRightKnee, kRightHip, kRightKnee, kRightAnkle);
  ground_code(CodeSubject::kRightFoot, kRightFoot);
  distance_code(CodeSubject::kHands, kLeftWrist, kRightWrist);
  distance_code(CodeSubject::kFeet, kLeftFoot, kRightFoot);
  return out;
}

// ---------------------------------------------------------------------------
// Verbalization: templates, captions, instructions, vocabulary
// ---------------------------------------------------------------------------

namespace templates {

struct Entry {
  CodeKind kind;
  CodeSubject subject;
  CodeValue value;
  std::array<const char*, 3> caption;  // synonym variants
  const char* do_instr;
  const char* undo_instr;
};

// {side} expands to "left"/"right". Token rules: lowercase words separated by
// single spaces; sentences get a trailing " ." when assembled.
inline const std::vector<Entry>& table() {
  static const std::vector<Entry> t = {
      // elbows
      {CodeKind::kAngle, CodeSubject::kLeftElbow, CodeValue::kBent,
       {"the {side} arm is bent sharply", "the {side} arm is folded",
        "the {side} elbow is bent"},
       "bend the {side} arm sharply", "stop bending the {side} arm sharply"},
      {CodeKind::kAngle, CodeSubject::kLeftElbow, CodeValue::kPartlyBent,
       {"the {side} arm is slightly bent", "the {side} arm is half bent",
        "the {side} elbow is partly bent"},
       "bend the {side} arm slightly", "stop bending the {side} arm slightly"},
      {CodeKind::kAngle, CodeSubject::kLeftElbow, CodeValue::kStraight,
       {"the {side} arm is straight", "the {side} arm is fully extended",
        "the {side} arm is held straight"},
       "straighten the {side} arm", "stop holding the {side} arm straight"},
      // knees
      {CodeKind::kAngle, CodeSubject::kLeftKnee, CodeValue::kBent,
       {"the {side} leg is bent sharply", "the {side} knee is deeply bent",
        "the {side} leg is folded"},
       "bend the {side} leg sharply", "stop bending the {side} leg sharply"},
      {CodeKind::kAngle, CodeSubject::kLeftKnee, CodeValue::kPartlyBent,
       {"the {side} leg is slightly bent", "the {side} knee is partly bent",
        "the {side} leg is half bent"},
       "bend the {side} leg slightly", "stop bending the {side} leg slightly"},
      {CodeKind::kAngle, CodeSubject::kLeftKnee, CodeValue::kStraight,
       {"the {side} leg is straight", "the {side} leg is fully extended",
        "the {side} knee is locked straight"},
       "straighten the {side} leg", "stop holding the {side} leg straight"},
      // hand height
      {CodeKind::kVertical, CodeSubject::kLeftHand, CodeValue::kAbove,
       {"the {side} hand is raised above the shoulders", "the {side} hand is lifted overhead",
        "the {side} hand is held above shoulder level"},
       "raise the {side} hand above the shoulders",
       "lower the {side} hand from above the shoulders"},
      {CodeKind::kVertical, CodeSubject::kLeftHand, CodeValue::kBelow,
       {"the {side} hand is kept below the shoulders",
        "the {side} hand hangs below shoulder level", "the {side} hand is lowered"},
       "lower the {side} hand below the shoulders",
       "lift the {side} hand from below the shoulders"},
      {CodeKind::kVertical, CodeSubject::kLeftHand, CodeValue::kLevel,
       {"the {side} hand is at shoulder height", "the {side} hand is level with the shoulders",
        "the {side} hand stays at shoulder level"},
       "bring the {side} hand to shoulder height",
       "move the {side} hand away from shoulder height"},
      // crossing
      {CodeKind::kLateral, CodeSubject::kLeftHand, CodeValue::kCrossedOver,
       {"the {side} hand crosses over the body", "the {side} arm is crossed to the other side",
        "the {side} hand reaches across the body"},
       "cross the {side} hand over the body", "uncross the {side} hand"},
      // feet / ground
      {CodeKind::kGround, CodeSubject::kLeftFoot, CodeValue::kOnGround,
       {"the {side} foot is planted on the ground", "the {side} foot rests on the floor",
        "the {side} foot stays on the ground"},
       "place the {side} foot on the ground", "take the {side} foot off the ground"},
      {CodeKind::kGround, CodeSubject::kLeftFoot, CodeValue::kRaised,
       {"the {side} foot is lifted off the ground", "the {side} foot is raised",
        "the {side} foot hovers above the floor"},
       "lift the {side} foot off the ground", "put the {side} foot back down"},
      // pair distances
      {CodeKind::kDistance, CodeSubject::kHands, CodeValue::kClose,
       {"the hands are close together", "the hands are brought near each other",
        "the hands almost touch"},
       "bring the hands close together", "stop holding the hands close together"},
      {CodeKind::kDistance, CodeSubject::kHands, CodeValue::kWide,
       {"the hands are spread far apart", "the hands are held wide apart",
        "the hands are far from each other"},
       "spread the hands far apart", "stop holding the hands far apart"},
      {CodeKind::kDistance, CodeSubject::kFeet, CodeValue::kClose,
       {"the feet are close together", "the feet are nearly touching",
        "the feet stand close"},
       "bring the feet close together", "stop keeping the feet close together"},
      {CodeKind::kDistance, CodeSubject::kFeet, CodeValue::kWide,
       {"the feet are spread wide", "the feet are far apart", "the feet stand wide apart"},
       "spread the feet wide apart", "stop keeping the feet wide apart"},
  };
  return t;
}

inline constexpr const char* kFallbackCaption = "the person stands neutrally";
inline constexpr const char* kFallbackInstruction = "hold the pose";

// The table stores left-side subjects; right-side codes reuse the entry with
// the mirrored subject and {side} = "right".
inline std::pair<const Entry*, std::string> lookup(const Posecode& code) {
  CodeSubject key = code.subject;
  std::string side;
  switch (code.subject) {
    case CodeSubject::kRightElbow: key = CodeSubject::kLeftElbow; side = "right"; break;
    case CodeSubject::kRightKnee: key = CodeSubject::kLeftKnee; side = "right"; break;
    case CodeSubject::kRightHand: key = CodeSubject::kLeftHand; side = "right"; break;
    case CodeSubject::kRightFoot: key = CodeSubject::kLeftFoot; side = "right"; break;
    case CodeSubject::kLeftElbow:
    case CodeSubject::kLeftKnee:
    case CodeSubject::kLeftHand:
    case CodeSubject::kLeftFoot: side = "left"; break;
    default: break;
  }
  for (const auto& e : table())
    if (e.kind == code.kind && e.subject == key && e.value == code.value) return {&e, side};
  throw ContractError("no template for posecode");
}

inline std::vector<std::string> tokenize(const std::string& text, const std::string& side) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      tokens.push_back(word == "{side}" ? side : word);
      word.clear();
    }
  };
  for (char c : text) {
    if (c == ' ') flush();
    else word.push_back(c);
  }
  flush();
  return tokens;
}

}  // namespace templates

// Closed token vocabulary shared by captions, instructions, and the decoder.
// Ids 0..3 are reserved for the decoder specials.
struct Vocabulary {
  static constexpr int kBos = 0, kEos = 1, kPad = 2, kUnk = 3;
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocabulary build() {
    std::set<std::string> words;
    auto add_text = [&](const std::string& text) {
      for (const auto& t : templates::tokenize(text, ""))
        if (t != "") words.insert(t);
    };
    for (const auto& e : templates::table()) {
      for (const char* c : e.caption) add_text(c);
      add_text(e.do_instr);
      add_text(e.undo_instr);
    }
    add_text(templates::kFallbackCaption);
    add_text(templates::kFallbackInstruction);
    words.insert("left");
    words.insert("right");
    words.insert("and");
    words.insert(".");
    Vocabulary v;
    v.tokens = {"<bos>", "<eos>", "<pad>", "<unk>"};
    for (const auto& w : words) v.tokens.push_back(w);
    for (size_t i = 0; i < v.tokens.size(); ++i) v.index[v.tokens[i]] = int(i);
    return v;
  }

  static const Vocabulary& instance() {
    static const Vocabulary v = build();
    return v;
  }

  int id(const std::string& token) const {
    auto it = index.find(token);
    return it == index.end() ? kUnk : it->second;
  }
  int size() const { return int(tokens.size()); }

  std::vector<int> encode(const std::vector<std::string>& words) const {
    std::vector<int> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(id(w));
    return out;
  }
};

// Part groups for sentence merging, in canonical caption order.
inline int part_group(CodeSubject s) {
  switch (s) {
    case CodeSubject::kLeftElbow:
    case CodeSubject::kLeftHand: return 0;   // left arm
    case CodeSubject::kRightElbow:
    case CodeSubject::kRightHand: return 1;  // right arm
    case CodeSubject::kLeftKnee:
    case CodeSubject::kLeftFoot: return 2;   // left leg
    case CodeSubject::kRightKnee:
    case CodeSubject::kRightFoot: return 3;  // right leg
    default: return 4;                       // whole body
  }
}

// Template-based caption with seeded synonym choice and optional posecode
// dropout. Codes on the same body part merge into one sentence. Empty (or
// fully dropped) input yields the fixed fallback sentence.
inline std::vector<std::string> verbalize(const std::vector<Posecode>& codes, uint64_t seed,
                                          double dropout = 0.0) {
  Rng rng(seed);
  std::vector<std::vector<std::string>> group_clauses(5);
  for (const auto& code : codes) {
    const bool drop = dropout > 0.0 && rng.uniform() < dropout;
    const int variant = int(rng.uniform_int(0, 2));
    if (drop) continue;
    auto [entry, side] = templates::lookup(code);
    group_clauses[size_t(part_group(code.subject))].push_back(
        std::string(entry->caption[size_t(variant)]));
    // stash the side with the clause via token expansion now
    auto& clause = group_clauses[size_t(part_group(code.subject))].back();
    std::string expanded;
    for (const auto& tok : templates::tokenize(clause, side)) {
      if (!expanded.empty()) expanded += ' ';
      expanded += tok;
    }
    clause = expanded;
  }
  std::vector<std::string> out;
  for (const auto& clauses : group_clauses) {
    for (size_t i = 0; i < clauses.size(); ++i) {
      auto toks = templates::tokenize(clauses[i], "");
      if (i > 0) out.push_back("and");
      out.insert(out.end(), toks.begin(), toks.end());
    }
    if (!clauses.empty()) out.push_back(".");
  }
  if (out.empty()) {
    out = templates::tokenize(templates::kFallbackCaption, "");
    out.push_back(".");
  }
  return out;
}

// Comparative instruction from the posecode difference between two poses:
// codes of B missing from A become "do" clauses, codes of A missing from B
// become "undo" clauses, in canonical body-part order. Identical code sets
// yield the fixed fallback.
inline std::vector<std::string> instruction_from_codes(const std::vector<Posecode>& codes_a,
                                                       const std::vector<Posecode>& codes_b) {
  auto contains = [](const std::vector<Posecode>& v, const Posecode& c) {
    return std::find(v.begin(), v.end(), c) != v.end();
  };
  std::vector<std::string> out;
  auto emit = [&](const Posecode& code, bool do_side) {
    auto [entry, side] = templates::lookup(code);
    auto toks = templates::tokenize(do_side ? entry->do_instr : entry->undo_instr, side);
    out.insert(out.end(), toks.begin(), toks.end());
    out.push_back(".");
  };
  // canonical order: iterate B's codes (do), then A's leftover codes (undo),
  // both already emitted in extract_posecodes order, grouped per body part
  for (int group = 0; group < 5; ++group) {
    for (const auto& c : codes_b)
      if (part_group(c.subject) == group && !contains(codes_a, c)) emit(c, true);
    for (const auto& c : codes_a)
      if (part_group(c.subject) == group && !contains(codes_b, c)) emit(c, false);
  }
  if (out.empty()) {
    out = templates::tokenize(templates::kFallbackInstruction, "");
    out.push_back(".");
  }
  return out;
}

inline std::vector<std::string> generate_instruction(const JointPositions& pos_a,
                                                     const JointPositions& pos_b,
                                                     const PosecodeThresholds& th,
                                                     double height) {
  return instruction_from_codes(extract_posecodes(pos_a, th, height),
                                extract_posecodes(pos_b, th, height));
}

// ---------------------------------------------------------------------------
// Pose sampling
// ---------------------------------------------------------------------------

// Per-joint symmetric axis-angle component limits (radians).
inline const std::vector<Vec3>& default_joint_limits() {
  using namespace skeleton;
  static const std::vector<Vec3> limits = [] {
    std::vector<Vec3> l(kNumJoints, Vec3::Zero());
    l[kPelvis] = Vec3(0.35, 0.0, 0.35);
    l[kLeftHip] = l[kRightHip] = Vec3(0.9, 0.5, 0.5);
    l[kSpine1] = l[kSpine2] = l[kSpine3] = Vec3(0.25, 0.25, 0.25);
    l[kLeftKnee] = l[kRightKnee] = Vec3(1.8, 0.15, 0.15);
    l[kLeftAnkle] = l[kRightAnkle] = Vec3(0.5, 0.2, 0.2);
    l[kLeftFoot] = l[kRightFoot] = Vec3(0.3, 0.1, 0.1);
    l[kNeck] = Vec3(0.4, 0.4, 0.3);
    l[kLeftCollar] = l[kRightCollar] = Vec3(0.2, 0.2, 0.2);
    l[kHead] = Vec3(0.4, 0.5, 0.3);
    l[kLeftShoulder] = l[kRightShoulder] = Vec3(1.2, 1.0, 1.0);
    l[kLeftElbow] = l[kRightElbow] = Vec3(0.5, 1.9, 0.5);
    l[kLeftWrist] = l[kRightWrist] = Vec3(0.4, 0.4, 0.4);
    return l;
  }();
  return limits;
}

// Uniform per-component sampling inside the limit box, then global yaw
// normalization. Non-root joints stay inside the box exactly; the root may
// shift by the small yaw correction (bounded by ~0.1 rad for the default
// limits).
inline PoseAA sample_pose(Rng& rng, const std::vector<Vec3>& limits,
                          const JointTree& tree) {
  check(int(limits.size()) == tree.num_joints, "sample_pose: limits size mismatch");
  PoseAA pose = PoseAA::identity(tree.num_joints);
  for (int j = 0; j < tree.num_joints; ++j)
    for (int c = 0; c < 3; ++c) {
      const double lim = limits[size_t(j)][c];
      pose.aa[size_t(j)][c] = lim > 0.0 ? rng.uniform(-lim, lim) : 0.0;
    }
  return skeleton::normalize_global_rotation(pose, tree);
}

// ---------------------------------------------------------------------------
// Farthest point sampling under the mpjpe distance
// ---------------------------------------------------------------------------

// Greedy max-min selection; ties break to the lowest index.
inline std::vector<int> farthest_point_sample(const std::vector<JointPositions>& items,
                                              int n, int start_index = 0) {
  if (n == 0) return {};
  check(n <= int(items.size()), "farthest_point_sample: n exceeds item count");
  check(start_index >= 0 && start_index < int(items.size()),
        "farthest_point_sample: bad start index");
  std::vector<int> selected{start_index};
  std::vector<double> min_dist(items.size());
  for (size_t i = 0; i < items.size(); ++i)
    min_dist[i] = skeleton::mpjpe(items[i], items[size_t(start_index)]);
  while (int(selected.size()) < n) {
    int best = -1;
    double best_dist = -1.0;
    for (size_t i = 0; i < items.size(); ++i) {
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = int(i);
      }
    }
    selected.push_back(best);
    for (size_t i = 0; i < items.size(); ++i)
      min_dist[i] = std::min(min_dist[i], skeleton::mpjpe(items[i], items[size_t(best)]));
  }
  return selected;
}

// ---------------------------------------------------------------------------
// View rendering
// ---------------------------------------------------------------------------

struct CameraConfig {
  double azimuth_lo = -M_PI, azimuth_hi = M_PI;
  double elevation_lo = -0.3, elevation_hi = 0.5;
  double distance_lo = 2.3, distance_hi = 3.2;
  double focal = 1.0;

  json to_json() const {
    return {{"azimuth", {azimuth_lo, azimuth_hi}},
            {"elevation", {elevation_lo, elevation_hi}},
            {"distance", {distance_lo, distance_hi}},
            {"focal", focal}};
  }
  static CameraConfig from_json(const json& j) {
    CameraConfig c;
    c.azimuth_lo = j.at("azimuth")[0];
    c.azimuth_hi = j.at("azimuth")[1];
    c.elevation_lo = j.at("elevation")[0];
    c.elevation_hi = j.at("elevation")[1];
    c.distance_lo = j.at("distance")[0];
    c.distance_hi = j.at("distance")[1];
    c.focal = j.at("focal");
    return c;
  }
};

struct OcclusionConfig {
  double p_occ = 0.3;
  std::vector<std::string> groups = {"left_arm", "right_arm", "left_leg",
                                     "right_leg", "head", "torso"};
  int v_min = 16;
  int max_attempts = 20;

  json to_json() const {
    return {{"p_occ", p_occ}, {"groups", groups}, {"v_min", v_min},
            {"max_attempts", max_attempts}};
  }
  static OcclusionConfig from_json(const json& j) {
    OcclusionConfig c;
    c.p_occ = j.at("p_occ");
    c.groups = j.at("groups").get<std::vector<std::string>>();
    c.v_min = j.at("v_min");
    c.max_attempts = j.at("max_attempts");
    return c;
  }
};

// The visual modality: normalized 2D keypoints with per-joint visibility
// under a sampled camera.
struct RenderedView {
  std::vector<double> xy;        // 2 * J, normalized image coordinates
  std::vector<uint8_t> visible;  // J flags
  double azimuth = 0, elevation = 0, distance = 0;

  int num_joints() const { return int(visible.size()); }
  int visible_count() const {
    int n = 0;
    for (uint8_t v : visible) n += v ? 1 : 0;
    return n;
  }

  json to_json() const {
    json j;
    j["xy"] = xy;
    j["vis"] = std::vector<int>(visible.begin(), visible.end());
    j["azimuth"] = azimuth;
    j["elevation"] = elevation;
    j["distance"] = distance;
    return j;
  }
  static RenderedView from_json(const json& j) {
    RenderedView v;
    v.xy = j.at("xy").get<std::vector<double>>();
    auto vis = j.at("vis").get<std::vector<int>>();
    v.visible.assign(vis.begin(), vis.end());
    v.azimuth = j.at("azimuth");
    v.elevation = j.at("elevation");
    v.distance = j.at("distance");
    return v;
  }
};

// Pinhole projection of one joint set from a camera orbiting the centroid.
inline void project_points(const JointPositions& pos, double azimuth, double elevation,
                           double distance, double focal, std::vector<double>& xy,
                           std::vector<double>& depth) {
  Vec3 center = Vec3::Zero();
  for (const auto& p : pos.p) center += p;
  center /= double(pos.num_joints());
  const Vec3 cam = center + distance * Vec3(std::cos(elevation) * std::sin(azimuth),
                                            std::sin(elevation),
                                            std::cos(elevation) * std::cos(azimuth));
  const Vec3 fwd = (center - cam).normalized();
  const Vec3 right = fwd.cross(Vec3::UnitY()).normalized();
  const Vec3 up = right.cross(fwd);
  xy.assign(size_t(pos.num_joints()) * 2, 0.0);
  depth.assign(size_t(pos.num_joints()), 0.0);
  for (int j = 0; j < pos.num_joints(); ++j) {
    const Vec3 rel = pos.p[size_t(j)] - cam;
    const double z = rel.dot(fwd);
    depth[size_t(j)] = z;
    xy[size_t(2 * j)] = 0.5 + focal * rel.dot(right) / z;
    xy[size_t(2 * j + 1)] = 0.5 - focal * rel.dot(up) / z;
  }
}

// Renders a view: camera sampled from the config; with probability p_occ one
// contiguous joint group is occluded; joints projected outside the unit image
// square are truncated (invisible). Cameras are re-sampled until at least
// v_min joints stay visible, up to max_attempts.
inline RenderedView render_view(const JointPositions& pos, Rng& rng,
                                const CameraConfig& cam, const OcclusionConfig& occ,
                                const JointTree& tree) {
  std::vector<double> xy, depth;
  for (int attempt = 0; attempt < occ.max_attempts; ++attempt) {
    const double az = rng.uniform(cam.azimuth_lo, cam.azimuth_hi);
    const double el = rng.uniform(cam.elevation_lo, cam.elevation_hi);
    const double dist = rng.uniform(cam.distance_lo, cam.distance_hi);
    int occluded_group = -1;
    if (occ.p_occ > 0.0 && rng.bernoulli(occ.p_occ) && !occ.groups.empty())
      occluded_group = int(rng.uniform_int(0, int64_t(occ.groups.size()) - 1));
    project_points(pos, az, el, dist, cam.focal, xy, depth);
    RenderedView view;
    view.xy = xy;
    view.visible.assign(size_t(pos.num_joints()), 1);
    if (occluded_group >= 0) {
      const auto& joints = tree.groups.at(occ.groups[size_t(occluded_group)]);
      for (int j : joints) view.visible[size_t(j)] = 0;
    }
    for (int j = 0; j < pos.num_joints(); ++j) {
      const double u = xy[size_t(2 * j)], v = xy[size_t(2 * j + 1)];
      if (depth[size_t(j)] < 0.1 || u < 0.0 || u > 1.0 || v < 0.0 || v > 1.0)
        view.visible[size_t(j)] = 0;
    }
    if (view.visible_count() >= occ.v_min) {
      view.azimuth = az;
      view.elevation = el;
      view.distance = dist;
      return view;
    }
  }
  throw UnrenderableError("render_view: visibility threshold unmet after max attempts");
}

// Marks a named joint group invisible (edited-retrieval occlusion).
inline RenderedView occlude_view(const RenderedView& view, const std::vector<int>& joints) {
  RenderedView out = view;
  for (int j : joints) {
    check(j >= 0 && j < out.num_joints(), "occlude_view: joint index out of range");
    out.visible[size_t(j)] = 0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Samples and datasets
// ---------------------------------------------------------------------------

struct TriSample {
  int64_t id = 0;
  PoseAA pose;          // globally normalized
  ShapeCoeffs shape;
  RenderedView view;
  std::vector<std::vector<std::string>> captions;  // exactly 3
  std::vector<uint64_t> caption_seeds;
  std::vector<Posecode> posecodes;  // default-shape geometry codes

  json to_json() const {
    json j;
    j["id"] = id;
    j["pose"] = pose.flat();
    j["shape"] = std::vector<double>(shape.c.begin(), shape.c.end());
    j["view"] = view.to_json();
    j["captions"] = captions;
    j["caption_seeds"] = caption_seeds;
    json codes = json::array();
    for (const auto& c : posecodes) codes.push_back(c.to_json());
    j["posecodes"] = codes;
    return j;
  }
};

inline CodeKind kind_from_string(const std::string& s) {
  for (CodeKind k : {CodeKind::kAngle, CodeKind::kVertical, CodeKind::kLateral,
                     CodeKind::kDistance, CodeKind::kGround})
    if (s == to_string(k)) return k;
  throw ContractError("unknown posecode kind: " + s);
}
inline CodeSubject subject_from_string(const std::string& s) {
  for (CodeSubject v :
       {CodeSubject::kLeftElbow, CodeSubject::kRightElbow, CodeSubject::kLeftKnee,
        CodeSubject::kRightKnee, CodeSubject::kLeftHand, CodeSubject::kRightHand,
        CodeSubject::kLeftFoot, CodeSubject::kRightFoot, CodeSubject::kHands,
        CodeSubject::kFeet})
    if (s == to_string(v)) return v;
  throw ContractError("unknown posecode subject: " + s);
}
inline CodeValue value_from_string(const std::string& s) {
  for (CodeValue v : {CodeValue::kBent, CodeValue::kPartlyBent, CodeValue::kStraight,
                      CodeValue::kAbove, CodeValue::kBelow, CodeValue::kLevel,
                      CodeValue::kCrossedOver, CodeValue::kClose, CodeValue::kWide,
                      CodeValue::kOnGround, CodeValue::kRaised})
    if (s == to_string(v)) return v;
  throw ContractError("unknown posecode value: " + s);
}

inline TriSample tri_sample_from_json(const json& j) {
  TriSample s;
  s.id = j.at("id");
  s.pose = PoseAA::from_flat(j.at("pose").get<std::vector<double>>());
  auto shape = j.at("shape").get<std::vector<double>>();
  check(shape.size() == skeleton::kNumShapeGroups, "sample: bad shape size");
  std::copy(shape.begin(), shape.end(), s.shape.c.begin());
  s.view = RenderedView::from_json(j.at("view"));
  s.captions = j.at("captions").get<std::vector<std::vector<std::string>>>();
  s.caption_seeds = j.at("caption_seeds").get<std::vector<uint64_t>>();
  for (const auto& c : j.at("posecodes")) {
    Posecode p{kind_from_string(c[0]), subject_from_string(c[1]), value_from_string(c[2])};
    s.posecodes.push_back(p);
  }
  return s;
}

struct PairSample {
  int64_t id = 0;
  int64_t a = 0;
  int64_t b = 0;
  std::vector<std::string> instruction;

  json to_json() const {
    return {{"id", id}, {"a", a}, {"b", b}, {"instruction", instruction}};
  }
  static PairSample from_json(const json& j) {
    PairSample p;
    p.id = j.at("id");
    p.a = j.at("a");
    p.b = j.at("b");
    p.instruction = j.at("instruction").get<std::vector<std::string>>();
    return p;
  }
};

struct DatagenConfig {
  int pool_size = 50000;
  int train_size = 5000;
  int val_size = 1000;
  double shape_std = 0.08;
  double caption_dropout = 0.5;
  int captions_per_sample = 3;
  PosecodeThresholds thresholds;
  CameraConfig camera;
  OcclusionConfig occlusion;

  json to_json() const {
    return {{"pool_size", pool_size},
            {"train_size", train_size},
            {"val_size", val_size},
            {"shape_std", shape_std},
            {"caption_dropout", caption_dropout},
            {"captions_per_sample", captions_per_sample},
            {"thresholds", thresholds.to_json()},
            {"camera", camera.to_json()},
            {"occlusion", occlusion.to_json()}};
  }
  static DatagenConfig from_json(const json& j) {
    DatagenConfig c;
    c.pool_size = j.at("pool_size");
    c.train_size = j.at("train_size");
    c.val_size = j.at("val_size");
    c.shape_std = j.at("shape_std");
    c.caption_dropout = j.at("caption_dropout");
    c.captions_per_sample = j.at("captions_per_sample");
    c.thresholds = PosecodeThresholds::from_json(j.at("thresholds"));
    c.camera = CameraConfig::from_json(j.at("camera"));
    c.occlusion = OcclusionConfig::from_json(j.at("occlusion"));
    return c;
  }
};

struct Dataset {
  std::vector<TriSample> train;
  std::vector<TriSample> val;
  DatagenConfig config;
  uint64_t seed = 0;

  const std::vector<TriSample>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    throw ContractError("unknown split: " + name);
  }
};

// Semantic geometry (posecodes, captions, FPS distance) uses default-shape
// forward kinematics; the rendered view and regression targets use the
// sampled per-body shape.
inline Dataset build_dataset(const DatagenConfig& cfg, uint64_t seed) {
  const auto& tree = skeleton::default_tree();
  const double height = skeleton::body_height(tree);
  check(cfg.train_size + cfg.val_size <= cfg.pool_size,
        "build_dataset: pool smaller than requested splits");

  // 1. pose pool
  std::vector<PoseAA> pool(size_t(cfg.pool_size));
  std::vector<ShapeCoeffs> shapes(size_t(cfg.pool_size));
  std::vector<JointPositions> canonical(size_t(cfg.pool_size));  // default-shape FK
  for (int i = 0; i < cfg.pool_size; ++i) {
    Rng rng(derive_seed(seed, "pose", uint64_t(i)));
    pool[size_t(i)] = sample_pose(rng, default_joint_limits(), tree);
    Rng srng(derive_seed(seed, "body-shape", uint64_t(i)));
    for (auto& c : shapes[size_t(i)].c) c = srng.normal(0.0, cfg.shape_std);
    canonical[size_t(i)] = skeleton::forward_kinematics(pool[size_t(i)], tree);
  }

  // 2. diversity selection: train first, then val from the remainder
  auto train_idx = farthest_point_sample(canonical, cfg.train_size, 0);
  std::vector<char> taken(size_t(cfg.pool_size), 0);
  for (int i : train_idx) taken[size_t(i)] = 1;
  std::vector<int> rest;
  for (int i = 0; i < cfg.pool_size; ++i)
    if (!taken[size_t(i)]) rest.push_back(i);
  std::vector<JointPositions> rest_pos;
  rest_pos.reserve(rest.size());
  for (int i : rest) rest_pos.push_back(canonical[size_t(i)]);
  auto val_rel = farthest_point_sample(rest_pos, cfg.val_size, 0);
  std::vector<int> val_idx;
  for (int r : val_rel) val_idx.push_back(rest[size_t(r)]);

  // leftover pool indices replace samples whose view cannot be rendered
  for (int i : val_idx) taken[size_t(i)] = 1;
  std::vector<int> spare;
  for (int i = 0; i < cfg.pool_size; ++i)
    if (!taken[size_t(i)]) spare.push_back(i);
  size_t spare_next = 0;

  auto make_sample = [&](int pool_index, int64_t id) -> std::optional<TriSample> {
    TriSample s;
    s.id = id;
    s.pose = pool[size_t(pool_index)];
    s.shape = shapes[size_t(pool_index)];
    const auto shaped = skeleton::forward_kinematics(s.pose, tree, &s.shape);
    Rng vrng(derive_seed(seed, "view", uint64_t(pool_index)));
    try {
      s.view = render_view(shaped, vrng, cfg.camera, cfg.occlusion, tree);
    } catch (const UnrenderableError&) {
      return std::nullopt;
    }
    s.posecodes = extract_posecodes(canonical[size_t(pool_index)], cfg.thresholds, height);
    for (int k = 0; k < cfg.captions_per_sample; ++k) {
      const uint64_t cseed = derive_seed(seed, "caption", uint64_t(pool_index), uint64_t(k));
      s.caption_seeds.push_back(cseed);
      s.captions.push_back(verbalize(s.posecodes, cseed, cfg.caption_dropout));
    }
    return s;
  };

  auto build_split = [&](const std::vector<int>& indices) {
    std::vector<TriSample> out;
    out.reserve(indices.size());
    for (int idx : indices) {
      int use = idx;
      std::optional<TriSample> s;
      while (!(s = make_sample(use, int64_t(out.size()))).has_value()) {
        check(spare_next < spare.size(), "build_dataset: pool exhausted by render failures");
        use = spare[spare_next++];
      }
      out.push_back(std::move(*s));
    }
    return out;
  };

  Dataset ds;
  ds.config = cfg;
  ds.seed = seed;
  ds.train = build_split(train_idx);
  ds.val = build_split(val_idx);
  return ds;
}

// ---------------------------------------------------------------------------
// Pair mining
// ---------------------------------------------------------------------------

struct PairMiningConfig {
  double jaccard_min = 0.4;
  double dmin_frac = 0.05;  // of body height
  double dmax_frac = 0.6;
  int max_pairs = 2000;

  json to_json() const {
    return {{"jaccard_min", jaccard_min}, {"dmin_frac", dmin_frac},
            {"dmax_frac", dmax_frac}, {"max_pairs", max_pairs}};
  }
  static PairMiningConfig from_json(const json& j) {
    PairMiningConfig c;
    c.jaccard_min = j.at("jaccard_min");
    c.dmin_frac = j.at("dmin_frac");
    c.dmax_frac = j.at("dmax_frac");
    c.max_pairs = j.at("max_pairs");
    return c;
  }
};

inline double code_jaccard(const std::vector<Posecode>& a, const std::vector<Posecode>& b) {
  if (a.empty() && b.empty()) return 1.0;
  size_t inter = 0;
  for (const auto& c : a)
    if (std::find(b.begin(), b.end(), c) != b.end()) ++inter;
  const size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

// Ordered pairs (a, b), a != b, with shared-posecode Jaccard >= the threshold
// and default-shape mpjpe inside [dmin, dmax]. When more pairs qualify than
// max_pairs, a seeded reservoir keeps a uniform subset; output is sorted by
// (a, b). Instructions come from the default-shape posecode difference.
inline std::vector<PairSample> mine_pairs(const std::vector<TriSample>& samples,
                                          const PairMiningConfig& cfg, uint64_t seed) {
  const auto& tree = skeleton::default_tree();
  const double height = skeleton::body_height(tree);
  const double dmin = cfg.dmin_frac * height, dmax = cfg.dmax_frac * height;
  std::vector<JointPositions> pos(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    pos[i] = skeleton::forward_kinematics(samples[i].pose, tree);

  Rng rng(derive_seed(seed, "pair-reservoir"));
  std::vector<std::pair<int, int>> reservoir;
  int64_t seen = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    for (size_t j = 0; j < samples.size(); ++j) {
      if (i == j) continue;
      if (code_jaccard(samples[i].posecodes, samples[j].posecodes) < cfg.jaccard_min)
        continue;
      const double d = skeleton::mpjpe(pos[i], pos[j]);
      if (d < dmin || d > dmax) continue;
      if (int(reservoir.size()) < cfg.max_pairs) {
        reservoir.push_back({int(i), int(j)});
      } else {
        const int64_t r = rng.uniform_int(0, seen);
        if (r < cfg.max_pairs) reservoir[size_t(r)] = {int(i), int(j)};
      }
      ++seen;
    }
  }
  std::sort(reservoir.begin(), reservoir.end());
  std::vector<PairSample> out;
  out.reserve(reservoir.size());
  for (const auto& [a, b] : reservoir) {
    PairSample p;
    p.id = int64_t(out.size());
    p.a = samples[size_t(a)].id;
    p.b = samples[size_t(b)].id;
    p.instruction = instruction_from_codes(samples[size_t(a)].posecodes,
                                           samples[size_t(b)].posecodes);
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: JSON Lines + manifest
// ---------------------------------------------------------------------------

template <typename SampleT>
void write_jsonl(const std::filesystem::path& path, const std::vector<SampleT>& samples) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write: " + path.string());
  for (const auto& s : samples) out << s.to_json().dump() << '\n';
}

inline std::vector<TriSample> read_tri_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot open dataset: " + path.string());
  std::vector<TriSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(tri_sample_from_json(json::parse(line)));
  }
  return out;
}

inline std::vector<PairSample> read_pair_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DependencyError("cannot open pairs: " + path.string());
  std::vector<PairSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(PairSample::from_json(json::parse(line)));
  }
  return out;
}

inline json dataset_manifest(const Dataset& ds, const std::string& train_hash,
                             const std::string& val_hash) {
  json m;
  m["config"] = ds.config.to_json();
  m["seed"] = ds.seed;
  m["splits"] = {{"train", int(ds.train.size())}, {"val", int(ds.val.size())}};
  m["vocabulary"] = Vocabulary::instance().tokens;
  m["skeleton"] = skeleton::tree_to_json(skeleton::default_tree());
  m["hashes"] = {{"train.jsonl", train_hash}, {"val.jsonl", val_hash}};
  return m;
}

}  // namespace poseweave::datagen
