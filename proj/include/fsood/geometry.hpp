#pragma once

#include <array>
#include <span>
#include <vector>

namespace fsood {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Rotated rectangle. `w` is measured along the box's local x-axis, which is
/// rotated by `angle` radians counter-clockwise from the image x-axis.
/// Angles are kept in [-pi/2, pi/2).
class OrientedBox {
 public:
  OrientedBox() = default;
  /// Throws std::invalid_argument unless w > 0, h > 0 and all fields are finite.
  OrientedBox(double cx, double cy, double w, double h, double angle);

  double cx() const { return cx_; }
  double cy() const { return cy_; }
  double w() const { return w_; }
  double h() const { return h_; }
  double angle() const { return angle_; }
  double area() const { return w_ * h_; }

  OrientedBox translated(double dx, double dy) const;

 private:
  double cx_ = 0.0;
  double cy_ = 0.0;
  double w_ = 1.0;
  double h_ = 1.0;
  double angle_ = 0.0;
};

class AxisAlignedBox {
 public:
  AxisAlignedBox() = default;
  /// Throws std::invalid_argument unless xmin < xmax and ymin < ymax.
  AxisAlignedBox(double xmin, double ymin, double xmax, double ymax);

  double xmin() const { return xmin_; }
  double ymin() const { return ymin_; }
  double xmax() const { return xmax_; }
  double ymax() const { return ymax_; }
  double area() const { return (xmax_ - xmin_) * (ymax_ - ymin_); }

 private:
  double xmin_ = 0.0;
  double ymin_ = 0.0;
  double xmax_ = 1.0;
  double ymax_ = 1.0;
};

/// Counter-clockwise convex polygon with duplicate and collinear vertices
/// merged. Fewer than three vertices means the polygon is empty.
class ConvexPolygon {
 public:
  ConvexPolygon() = default;
  /// Accepts vertices of a convex polygon in either orientation.
  explicit ConvexPolygon(std::vector<Point> vertices);

  const std::vector<Point>& vertices() const { return vertices_; }
  bool empty() const { return vertices_.size() < 3; }
  /// Inclusive of the boundary up to the clipping epsilon.
  bool contains(Point p) const;

 private:
  std::vector<Point> vertices_;
};

/// Tolerance used when classifying a point against a clipping edge.
inline constexpr double kClipEpsilon = 1e-9;

/// Wraps an angle into [-pi/2, pi/2). Rectangles are symmetric under
/// rotation by pi, so this never changes the footprint.
double normalize_angle(double angle);

std::array<Point, 4> obb_corners(const OrientedBox& box);
ConvexPolygon obb_to_polygon(const OrientedBox& box);
ConvexPolygon aabb_to_polygon(const AxisAlignedBox& box);

/// Shoelace area, never negative.
double polygon_area(const ConvexPolygon& p);

/// Sutherland-Hodgman clipping of one convex polygon against another.
ConvexPolygon polygon_intersection(const ConvexPolygon& a, const ConvexPolygon& b);

double rotated_iou(const OrientedBox& a, const OrientedBox& b);
double aabb_iou(const AxisAlignedBox& a, const AxisAlignedBox& b);

AxisAlignedBox obb_to_hbb(const OrientedBox& box);
OrientedBox hbb_to_obb(const AxisAlignedBox& box);

/// Minimum-area enclosing rectangle of four points (rotating calipers over
/// the convex hull). The result is reported with angle in [-pi/4, pi/4).
/// Throws std::invalid_argument on a zero-area quadrilateral.
OrientedBox quad_to_obb(std::span<const Point, 4> corners);

/// True when both boxes describe the same footprint: every corner of one lies
/// within `tol` of a corner of the other.
bool same_footprint(const OrientedBox& a, const OrientedBox& b, double tol);

}  // namespace fsood
