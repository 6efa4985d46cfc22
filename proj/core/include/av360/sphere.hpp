#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace av360::geom {

// Conventions used throughout:
//   theta: azimuth in (-pi, pi], measured from +x toward +y
//   phi:   elevation in [-pi/2, pi/2], +pi/2 at the +z pole
//   unit vector of (theta, phi) = (cos phi cos theta, cos phi sin theta, sin phi)
// All angles are radians.

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kHalfPi = 0.5 * kPi;

// wraps into (-pi, pi]
double wrap_pi(double angle);
// wraps into [0, 2*pi)
double wrap_two_pi(double angle);

struct UnitVec {
  double x = 1.0, y = 0.0, z = 0.0;
};

double norm(const UnitVec& v);
UnitVec normalized(double x, double y, double z);
double dot(const UnitVec& a, const UnitVec& b);
// angle between two unit vectors, robust near 0 and pi
double great_circle_distance(const UnitVec& a, const UnitVec& b);

// Viewing direction of a perspective (NFoV) projection.
struct Perspective {
  double theta = 0.0;  // (-pi, pi]
  double phi = 0.0;    // (-pi/2, pi/2)
};

// Axis-aligned region in angle space with angular extents.
struct SphericalBox {
  double theta = 0.0;       // center azimuth, (-pi, pi]
  double phi = 0.0;         // center elevation, [-pi/2, pi/2]
  double w_theta = 0.0;     // azimuth extent, (0, 2*pi]
  double h_phi = 0.0;       // elevation extent, (0, pi]
  double confidence = 1.0;  // [0, 1]
};

// throws std::invalid_argument when a field is outside its range
void validate(const SphericalBox& box);
UnitVec center_unit_vec(const SphericalBox& box);

// Rotation-quaternion spatial code of a box at time t. The quaternion
// carries the sphere's bottom (0,0,-1) to the box center around an axis
// restricted to the XY-plane; (q_w, q_x, q_y) is always unit-norm.
struct QuatEmbedding {
  double t = 0.0;    // seconds
  double q_w = 1.0;
  double q_x = 0.0;
  double q_y = 0.0;
  double w = 0.0;    // w_theta / (2*pi), in [0, 1]
  double h = 0.0;    // h_phi / pi, in [0, 1]
};

enum class SpatialRelation { NextTo, OppositeOf, LeftOf, RightOf, Above, Below };

const char* to_string(SpatialRelation r);
SpatialRelation relation_from_string(const std::string& s);

enum class SpatialMode { Quaternion, Cartesian, Spherical, UnitSphere };

const char* to_string(SpatialMode m);
SpatialMode spatial_mode_from_string(const std::string& s);
// embedding length including the leading t component
std::size_t spatial_embedding_dim(SpatialMode m);

// Perspective-plane point (x, y) in [-1,1]^2 to its unit vector on the
// sphere: M(theta, phi) * (1, x, y)^t, normalized.
UnitVec calibrate_point(double x, double y, const Perspective& persp);

// Inverse of calibrate_point: re-project a direction onto the tangent plane
// of the given perspective. Throws if the direction is behind the plane.
std::array<double, 2> project_point(const UnitVec& v, const Perspective& persp);

// Calibrates a perspective-plane rectangle, given as (min, max) corners, to a
// spherical box. The azimuth span is measured with wraparound and the
// elevation span over the whole rectangle boundary. Throws if the calibrated
// rectangle covers both poles.
SphericalBox nfov_box_to_spherical(const std::array<double, 2>& corner_min,
                                   const std::array<double, 2>& corner_max,
                                   const Perspective& persp,
                                   double confidence = 1.0);

// surface area in steradians: w_theta * (sin phi_top - sin phi_bottom)
double spherical_area(const SphericalBox& box);

// Intersection-over-union on the (theta, phi) strip with longitude
// wraparound and spherical surface-area weighting. Symmetric, in [0, 1].
double spherical_iou(const SphericalBox& a, const SphericalBox& b);

// Greedy non-maximum suppression by descending confidence (ties keep input
// order). A box is suppressed when its IoU with an already kept box exceeds
// tau. At most max_keep boxes survive; output is in descending confidence.
std::vector<SphericalBox> spherical_nms(const std::vector<SphericalBox>& boxes,
                                        double tau = 0.65,
                                        std::size_t max_keep = 35);

QuatEmbedding quaternion_embedding(const SphericalBox& box, double t);

// Alternative spatial codes. Cartesian is equirectangular-normalized
// (x, y, w, h) in [0,1] with y = 0 at the +z pole; Spherical is the identity
// on the box fields; UnitSphere is (x, y, z, w_theta, h_phi). All prefixed
// with t. Rejects SpatialMode::Quaternion (use quaternion_embedding).
std::vector<double> alt_embedding(const SphericalBox& box, double t,
                                  SpatialMode mode);

// Unified code for any mode; Quaternion yields the QuatEmbedding as a vector.
std::vector<double> spatial_embedding(const SphericalBox& box, double t,
                                      SpatialMode mode);

// 5-vector regression target in the active mode's coordinates, time dropped;
// modes with four spatial components are zero-padded to length 5.
std::array<double, 5> grounding_target(const SphericalBox& box, SpatialMode mode);

struct RelationThresholds {
  double next_to = kPi / 6.0;            // great-circle radius
  double opposite = 5.0 * kPi / 6.0;     // |delta theta| beyond this
  double vertical_deadzone = kPi / 12.0; // minimum |delta phi|
};

// Relation of b relative to a. Throws on coincident centers.
SpatialRelation classify_relation(const SphericalBox& a, const SphericalBox& b,
                                  const RelationThresholds& thr = {});

}  // namespace av360::geom
