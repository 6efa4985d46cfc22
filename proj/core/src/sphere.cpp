#include "av360/sphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace av360::geom {

namespace {

struct Mat3 {
  // row-major
  double m[3][3];
};

// Rotation of Eq. (1): columns are the view direction at (theta, phi), the
// horizontal image axis and the vertical image axis.
Mat3 calibration_matrix(const Perspective& p) {
  const double ct = std::cos(p.theta), st = std::sin(p.theta);
  const double cp = std::cos(p.phi), sp = std::sin(p.phi);
  return Mat3{{{ct * cp, -st, -ct * sp},
               {st * cp, ct, -sp * st},
               {sp, 0.0, cp}}};
}

struct Vec3 {
  double x, y, z;
};

Vec3 apply(const Mat3& m, const Vec3& v) {
  return {m.m[0][0] * v.x + m.m[0][1] * v.y + m.m[0][2] * v.z,
          m.m[1][0] * v.x + m.m[1][1] * v.y + m.m[1][2] * v.z,
          m.m[2][0] * v.x + m.m[2][1] * v.y + m.m[2][2] * v.z};
}

Vec3 apply_transpose(const Mat3& m, const Vec3& v) {
  return {m.m[0][0] * v.x + m.m[1][0] * v.y + m.m[2][0] * v.z,
          m.m[0][1] * v.x + m.m[1][1] * v.y + m.m[2][1] * v.z,
          m.m[0][2] * v.x + m.m[1][2] * v.y + m.m[2][2] * v.z};
}

double vdot(const Vec3& a, const Vec3& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

double elevation_of(const Vec3& v) {
  return std::asin(std::clamp(v.z / std::sqrt(vdot(v, v)), -1.0, 1.0));
}

// overlap length of [l1, r1] and [l2, r2]
double overlap(double l1, double r1, double l2, double r2) {
  return std::max(0.0, std::min(r1, r2) - std::max(l1, l2));
}

// total intersection length of two arcs on the circle; up to two pieces
double arc_intersection(double center_a, double width_a, double center_b,
                        double width_b) {
  const double wa = std::min(width_a, kTwoPi);
  const double wb = std::min(width_b, kTwoPi);
  const double start_a = center_a - wa / 2.0;
  const double rel = wrap_two_pi((center_b - wb / 2.0) - start_a);
  double total = overlap(0.0, wa, rel, rel + wb) +
                 overlap(0.0, wa, rel - kTwoPi, rel - kTwoPi + wb);
  return std::min(total, std::min(wa, wb));
}

}  // namespace

double wrap_pi(double angle) {
  double a = std::remainder(angle, kTwoPi);  // [-pi, pi]
  if (a <= -kPi) a = kPi;
  return a;
}

double wrap_two_pi(double angle) {
  double a = std::fmod(angle, kTwoPi);
  if (a < 0.0) a += kTwoPi;
  return a;
}

double norm(const UnitVec& v) {
  return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
}

UnitVec normalized(double x, double y, double z) {
  const double n = std::sqrt(x * x + y * y + z * z);
  if (n == 0.0) throw std::invalid_argument("cannot normalize the zero vector");
  return {x / n, y / n, z / n};
}

double dot(const UnitVec& a, const UnitVec& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

double great_circle_distance(const UnitVec& a, const UnitVec& b) {
  const double cx = a.y * b.z - a.z * b.y;
  const double cy = a.z * b.x - a.x * b.z;
  const double cz = a.x * b.y - a.y * b.x;
  const double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  return std::atan2(cross, dot(a, b));
}

void validate(const SphericalBox& box) {
  if (!(box.theta > -kPi - 1e-12 && box.theta <= kPi + 1e-12))
    throw std::invalid_argument("box theta outside (-pi, pi]");
  if (!(box.phi >= -kHalfPi - 1e-12 && box.phi <= kHalfPi + 1e-12))
    throw std::invalid_argument("box phi outside [-pi/2, pi/2]");
  if (!(box.w_theta > 0.0 && box.w_theta <= kTwoPi + 1e-12))
    throw std::invalid_argument("box w_theta outside (0, 2*pi]");
  if (!(box.h_phi > 0.0 && box.h_phi <= kPi + 1e-12))
    throw std::invalid_argument("box h_phi outside (0, pi]");
  if (!(box.confidence >= 0.0 && box.confidence <= 1.0))
    throw std::invalid_argument("box confidence outside [0, 1]");
}

UnitVec center_unit_vec(const SphericalBox& box) {
  const double cp = std::cos(box.phi);
  return {cp * std::cos(box.theta), cp * std::sin(box.theta), std::sin(box.phi)};
}

const char* to_string(SpatialRelation r) {
  switch (r) {
    case SpatialRelation::NextTo: return "next to";
    case SpatialRelation::OppositeOf: return "opposite of";
    case SpatialRelation::LeftOf: return "left of";
    case SpatialRelation::RightOf: return "right of";
    case SpatialRelation::Above: return "above";
    case SpatialRelation::Below: return "below";
  }
  return "?";
}

SpatialRelation relation_from_string(const std::string& s) {
  if (s == "next to") return SpatialRelation::NextTo;
  if (s == "opposite of") return SpatialRelation::OppositeOf;
  if (s == "left of") return SpatialRelation::LeftOf;
  if (s == "right of") return SpatialRelation::RightOf;
  if (s == "above") return SpatialRelation::Above;
  if (s == "below") return SpatialRelation::Below;
  throw std::invalid_argument("unknown spatial relation: " + s);
}

const char* to_string(SpatialMode m) {
  switch (m) {
    case SpatialMode::Quaternion: return "quaternion";
    case SpatialMode::Cartesian: return "cartesian";
    case SpatialMode::Spherical: return "spherical";
    case SpatialMode::UnitSphere: return "unit-sphere";
  }
  return "?";
}

SpatialMode spatial_mode_from_string(const std::string& s) {
  if (s == "quaternion") return SpatialMode::Quaternion;
  if (s == "cartesian") return SpatialMode::Cartesian;
  if (s == "spherical") return SpatialMode::Spherical;
  if (s == "unit-sphere") return SpatialMode::UnitSphere;
  throw std::invalid_argument("unknown spatial mode: " + s);
}

std::size_t spatial_embedding_dim(SpatialMode m) {
  switch (m) {
    case SpatialMode::Quaternion: return 6;
    case SpatialMode::Cartesian: return 5;
    case SpatialMode::Spherical: return 5;
    case SpatialMode::UnitSphere: return 6;
  }
  throw std::invalid_argument("unknown spatial mode");
}

UnitVec calibrate_point(double x, double y, const Perspective& persp) {
  const Mat3 m = calibration_matrix(persp);
  const Vec3 v = apply(m, {1.0, x, y});
  return normalized(v.x, v.y, v.z);
}

std::array<double, 2> project_point(const UnitVec& v, const Perspective& persp) {
  const Mat3 m = calibration_matrix(persp);
  const Vec3 w = apply_transpose(m, {v.x, v.y, v.z});
  if (w.x <= 1e-12)
    throw std::invalid_argument("direction not in front of the perspective plane");
  return {w.y / w.x, w.z / w.x};
}

SphericalBox nfov_box_to_spherical(const std::array<double, 2>& corner_min,
                                   const std::array<double, 2>& corner_max,
                                   const Perspective& persp, double confidence) {
  const double x0 = corner_min[0], y0 = corner_min[1];
  const double x1 = corner_max[0], y1 = corner_max[1];
  if (x0 > x1 || y0 > y1)
    throw std::invalid_argument("box corners must be ordered (min, max) per axis");

  const Mat3 m = calibration_matrix(persp);

  // pole containment: the preimage of (0,0,+-1) must fall inside the rectangle
  auto covers_pole = [&](double pole_z) {
    const Vec3 w = apply_transpose(m, {0.0, 0.0, pole_z});
    if (w.x <= 0.0) return false;
    const double px = w.y / w.x, py = w.z / w.x;
    return px >= x0 && px <= x1 && py >= y0 && py <= y1;
  };
  const bool north = covers_pole(1.0), south = covers_pole(-1.0);
  if (north && south)
    throw std::invalid_argument("calibrated box spans both poles");

  const UnitVec c = calibrate_point((x0 + x1) / 2.0, (y0 + y1) / 2.0, persp);
  const double theta_c = std::atan2(c.y, c.x);
  const double phi_c = std::asin(std::clamp(c.z, -1.0, 1.0));

  const std::array<std::array<double, 2>, 4> corners = {
      {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}};

  double phi_min = std::numeric_limits<double>::infinity();
  double phi_max = -phi_min;
  double dtheta_min = 0.0, dtheta_max = 0.0;
  for (const auto& [cx, cy] : corners) {
    const UnitVec u = calibrate_point(cx, cy, persp);
    const double dth = wrap_pi(std::atan2(u.y, u.x) - theta_c);
    dtheta_min = std::min(dtheta_min, dth);
    dtheta_max = std::max(dtheta_max, dth);
    const double ph = std::asin(std::clamp(u.z, -1.0, 1.0));
    phi_min = std::min(phi_min, ph);
    phi_max = std::max(phi_max, ph);
  }

  // Elevation can peak in the interior of an edge. With P(s) = a + s*b the
  // stationary point of z/|P| solves a linear equation in s.
  const std::array<std::array<double, 4>, 4> edges = {{
      {x0, y0, x1 - x0, 0.0},
      {x1, y0, 0.0, y1 - y0},
      {x0, y1, x1 - x0, 0.0},
      {x0, y0, 0.0, y1 - y0},
  }};
  for (const auto& [ex, ey, dx, dy] : edges) {
    if (dx == 0.0 && dy == 0.0) continue;
    const Vec3 a = apply(m, {1.0, ex, ey});
    const Vec3 b = apply(m, {0.0, dx, dy});
    const double ab = vdot(a, b), aa = vdot(a, a), bb = vdot(b, b);
    const double denom = b.z * ab - a.z * bb;
    if (std::abs(denom) < 1e-300) continue;
    const double s = (a.z * ab - b.z * aa) / denom;
    if (s <= 0.0 || s >= 1.0) continue;
    const Vec3 p = {a.x + s * b.x, a.y + s * b.y, a.z + s * b.z};
    const double ph = elevation_of(p);
    phi_min = std::min(phi_min, ph);
    phi_max = std::max(phi_max, ph);
  }

  SphericalBox out;
  out.theta = wrap_pi(theta_c);
  out.confidence = confidence;
  if (north || south) {
    // the azimuth span degenerates to the full circle; anchor the elevation
    // extent at the covered pole
    const double pole = north ? kHalfPi : -kHalfPi;
    const double far_edge = north ? phi_min : phi_max;
    out.w_theta = kTwoPi;
    out.phi = (pole + far_edge) / 2.0;
    out.h_phi = std::abs(pole - far_edge);
  } else {
    out.w_theta = dtheta_max - dtheta_min;
    out.phi = phi_c;
    out.h_phi = phi_max - phi_min;
  }
  validate(out);
  return out;
}

double spherical_area(const SphericalBox& box) {
  const double top = std::clamp(box.phi + box.h_phi / 2.0, -kHalfPi, kHalfPi);
  const double bottom = std::clamp(box.phi - box.h_phi / 2.0, -kHalfPi, kHalfPi);
  return box.w_theta * (std::sin(top) - std::sin(bottom));
}

double spherical_iou(const SphericalBox& a, const SphericalBox& b) {
  const double a_top = std::clamp(a.phi + a.h_phi / 2.0, -kHalfPi, kHalfPi);
  const double a_bot = std::clamp(a.phi - a.h_phi / 2.0, -kHalfPi, kHalfPi);
  const double b_top = std::clamp(b.phi + b.h_phi / 2.0, -kHalfPi, kHalfPi);
  const double b_bot = std::clamp(b.phi - b.h_phi / 2.0, -kHalfPi, kHalfPi);

  const double top = std::min(a_top, b_top);
  const double bot = std::max(a_bot, b_bot);
  double inter = 0.0;
  if (top > bot) {
    const double arcs = arc_intersection(a.theta, a.w_theta, b.theta, b.w_theta);
    inter = arcs * (std::sin(top) - std::sin(bot));
  }
  const double uni = spherical_area(a) + spherical_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<SphericalBox> spherical_nms(const std::vector<SphericalBox>& boxes,
                                        double tau, std::size_t max_keep) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return boxes[i].confidence > boxes[j].confidence;
  });

  std::vector<SphericalBox> kept;
  for (std::size_t idx : order) {
    if (kept.size() >= max_keep) break;
    const SphericalBox& cand = boxes[idx];
    bool suppressed = false;
    for (const SphericalBox& k : kept) {
      if (spherical_iou(cand, k) > tau) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

QuatEmbedding quaternion_embedding(const SphericalBox& box, double t) {
  const UnitVec c = center_unit_vec(box);
  // rotation angle from the sphere's bottom (0,0,-1) to the center
  const double angle = std::acos(std::clamp(-c.z, -1.0, 1.0));
  const double planar = std::sqrt(c.x * c.x + c.y * c.y);
  double ax = 1.0, ay = 0.0;  // pole convention: axis (1, 0)
  if (planar > 1e-12) {
    ax = c.x / planar;
    ay = c.y / planar;
  }
  const double half_sin = std::sin(angle / 2.0);
  QuatEmbedding e;
  e.t = t;
  e.q_w = std::cos(angle / 2.0);
  e.q_x = -ay * half_sin;
  e.q_y = ax * half_sin;
  e.w = box.w_theta / kTwoPi;
  e.h = box.h_phi / kPi;
  return e;
}

std::vector<double> alt_embedding(const SphericalBox& box, double t,
                                  SpatialMode mode) {
  switch (mode) {
    case SpatialMode::Cartesian:
      return {t, (box.theta + kPi) / kTwoPi, (kHalfPi - box.phi) / kPi,
              box.w_theta / kTwoPi, box.h_phi / kPi};
    case SpatialMode::Spherical:
      return {t, box.theta, box.phi, box.w_theta, box.h_phi};
    case SpatialMode::UnitSphere: {
      const UnitVec c = center_unit_vec(box);
      return {t, c.x, c.y, c.z, box.w_theta, box.h_phi};
    }
    default:
      throw std::invalid_argument("alt_embedding: unknown mode");
  }
}

std::vector<double> spatial_embedding(const SphericalBox& box, double t,
                                      SpatialMode mode) {
  if (mode == SpatialMode::Quaternion) {
    const QuatEmbedding q = quaternion_embedding(box, t);
    return {q.t, q.q_w, q.q_x, q.q_y, q.w, q.h};
  }
  return alt_embedding(box, t, mode);
}

std::array<double, 5> grounding_target(const SphericalBox& box, SpatialMode mode) {
  const std::vector<double> e = spatial_embedding(box, 0.0, mode);
  std::array<double, 5> out = {0.0, 0.0, 0.0, 0.0, 0.0};
  for (std::size_t i = 1; i < e.size() && i <= 5; ++i) out[i - 1] = e[i];
  return out;
}

SpatialRelation classify_relation(const SphericalBox& a, const SphericalBox& b,
                                  const RelationThresholds& thr) {
  validate(a);
  validate(b);
  const double d = great_circle_distance(center_unit_vec(a), center_unit_vec(b));
  if (d < 1e-9)
    throw std::invalid_argument("coincident centers: relation is ambiguous");
  if (d < thr.next_to) return SpatialRelation::NextTo;

  const double dtheta = wrap_pi(b.theta - a.theta);
  const double dphi = b.phi - a.phi;
  if (std::abs(dtheta) > thr.opposite) return SpatialRelation::OppositeOf;
  if (std::abs(dphi) >= std::abs(dtheta) && std::abs(dphi) >= thr.vertical_deadzone)
    return dphi > 0.0 ? SpatialRelation::Above : SpatialRelation::Below;
  return dtheta > 0.0 ? SpatialRelation::RightOf : SpatialRelation::LeftOf;
}

}  // namespace av360::geom
