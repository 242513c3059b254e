#include "fsood/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace fsood {

namespace {

constexpr double kPi = std::numbers::pi;

double cross(Point o, Point a, Point b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

double signed_area(const std::vector<Point>& v) {
  double acc = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i) {
    const Point& p = v[i];
    const Point& q = v[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

// Removes coincident and collinear vertices until none remain.
std::vector<Point> merge_degenerate(std::vector<Point> v) {
  bool changed = true;
  while (changed && v.size() >= 3) {
    changed = false;
    for (std::size_t i = 0; i < v.size() && v.size() >= 3; ++i) {
      const std::size_t n = v.size();
      const Point& prev = v[(i + n - 1) % n];
      const Point& cur = v[i];
      const Point& next = v[(i + 1) % n];
      const double a = distance(prev, cur);
      const double b = distance(cur, next);
      const bool coincident = a <= kClipEpsilon;
      // Height of `cur` above the chord prev-next.
      const double chord = distance(prev, next);
      const bool collinear =
          !coincident && (chord <= kClipEpsilon ||
                          std::abs(cross(prev, cur, next)) / chord <= kClipEpsilon);
      if (coincident || collinear || b <= kClipEpsilon) {
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  if (v.size() < 3) v.clear();
  return v;
}

// Signed distance of p from the directed line a->b; positive on the left.
double side(Point a, Point b, Point p) {
  const double len = distance(a, b);
  return cross(a, b, p) / len;
}

Point line_intersection(Point p, Point q, double dp, double dq) {
  const double t = dp / (dp - dq);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

OrientedBox::OrientedBox(double cx, double cy, double w, double h, double angle)
    : cx_(cx), cy_(cy), w_(w), h_(h), angle_(normalize_angle(angle)) {
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(w) ||
      !std::isfinite(h) || !std::isfinite(angle)) {
    throw std::invalid_argument("OrientedBox: non-finite field");
  }
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("OrientedBox: width and height must be positive (got w=" +
                                std::to_string(w) + ", h=" + std::to_string(h) + ")");
  }
}

OrientedBox OrientedBox::translated(double dx, double dy) const {
  return OrientedBox(cx_ + dx, cy_ + dy, w_, h_, angle_);
}

AxisAlignedBox::AxisAlignedBox(double xmin, double ymin, double xmax, double ymax)
    : xmin_(xmin), ymin_(ymin), xmax_(xmax), ymax_(ymax) {
  if (!(xmin < xmax) || !(ymin < ymax)) {
    throw std::invalid_argument("AxisAlignedBox: require xmin < xmax and ymin < ymax");
  }
}

ConvexPolygon::ConvexPolygon(std::vector<Point> vertices) {
  vertices = merge_degenerate(std::move(vertices));
  if (signed_area(vertices) < 0.0) std::reverse(vertices.begin(), vertices.end());
  vertices_ = std::move(vertices);
}

bool ConvexPolygon::contains(Point p) const {
  if (empty()) return false;
  for (std::size_t i = 0, n = vertices_.size(); i < n; ++i) {
    if (side(vertices_[i], vertices_[(i + 1) % n], p) < -kClipEpsilon) return false;
  }
  return true;
}

double normalize_angle(double angle) {
  double a = std::fmod(angle + kPi / 2.0, kPi);
  if (a < 0.0) a += kPi;
  // fmod can land exactly on pi after the addition above rounds.
  if (a >= kPi) a -= kPi;
  return a - kPi / 2.0;
}

std::array<Point, 4> obb_corners(const OrientedBox& box) {
  const double c = std::cos(box.angle());
  const double s = std::sin(box.angle());
  const double hw = box.w() / 2.0;
  const double hh = box.h() / 2.0;
  // Local frame corners in CCW order, then rotate and translate.
  const std::array<Point, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  std::array<Point, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {box.cx() + c * local[i].x - s * local[i].y,
              box.cy() + s * local[i].x + c * local[i].y};
  }
  return out;
}

ConvexPolygon obb_to_polygon(const OrientedBox& box) {
  const auto corners = obb_corners(box);
  return ConvexPolygon(std::vector<Point>(corners.begin(), corners.end()));
}

ConvexPolygon aabb_to_polygon(const AxisAlignedBox& box) {
  return ConvexPolygon({{box.xmin(), box.ymin()},
                        {box.xmax(), box.ymin()},
                        {box.xmax(), box.ymax()},
                        {box.xmin(), box.ymax()}});
}

double polygon_area(const ConvexPolygon& p) {
  if (p.empty()) return 0.0;
  return std::abs(signed_area(p.vertices()));
}

ConvexPolygon polygon_intersection(const ConvexPolygon& a, const ConvexPolygon& b) {
  if (a.empty() || b.empty()) return {};
  std::vector<Point> output = a.vertices();
  const auto& clip = b.vertices();
  for (std::size_t e = 0, m = clip.size(); e < m && !output.empty(); ++e) {
    const Point c0 = clip[e];
    const Point c1 = clip[(e + 1) % m];
    std::vector<Point> input;
    input.swap(output);
    for (std::size_t i = 0, n = input.size(); i < n; ++i) {
      const Point p = input[i];
      const Point q = input[(i + 1) % n];
      const double dp = side(c0, c1, p);
      const double dq = side(c0, c1, q);
      const bool p_in = dp >= -kClipEpsilon;
      const bool q_in = dq >= -kClipEpsilon;
      if (p_in) output.push_back(p);
      if (p_in != q_in && std::abs(dp - dq) > 0.0) {
        // Skip near-vertex crossings; the endpoint itself is already kept.
        if (std::abs(dp) > kClipEpsilon && std::abs(dq) > kClipEpsilon) {
          output.push_back(line_intersection(p, q, dp, dq));
        }
      }
    }
  }
  return ConvexPolygon(std::move(output));
}

double rotated_iou(const OrientedBox& a, const OrientedBox& b) {
  // Quick reject on circumscribed circles.
  const double ra = 0.5 * std::hypot(a.w(), a.h());
  const double rb = 0.5 * std::hypot(b.w(), b.h());
  if (std::hypot(a.cx() - b.cx(), a.cy() - b.cy()) >= ra + rb) return 0.0;

  const double inter = polygon_area(polygon_intersection(obb_to_polygon(a), obb_to_polygon(b)));
  if (!(inter > 0.0)) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double aabb_iou(const AxisAlignedBox& a, const AxisAlignedBox& b) {
  const double iw = std::min(a.xmax(), b.xmax()) - std::max(a.xmin(), b.xmin());
  const double ih = std::min(a.ymax(), b.ymax()) - std::max(a.ymin(), b.ymin());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return std::clamp(inter / (a.area() + b.area() - inter), 0.0, 1.0);
}

AxisAlignedBox obb_to_hbb(const OrientedBox& box) {
  const auto corners = obb_corners(box);
  double x0 = corners[0].x, x1 = corners[0].x;
  double y0 = corners[0].y, y1 = corners[0].y;
  for (const Point& p : corners) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  return {x0, y0, x1, y1};
}

OrientedBox hbb_to_obb(const AxisAlignedBox& box) {
  return {0.5 * (box.xmin() + box.xmax()), 0.5 * (box.ymin() + box.ymax()),
          box.xmax() - box.xmin(), box.ymax() - box.ymin(), 0.0};
}

OrientedBox quad_to_obb(std::span<const Point, 4> corners) {
  // Monotone-chain convex hull, CCW, collinear points dropped.
  std::vector<Point> pts(corners.begin(), corners.end());
  for (const Point& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw std::invalid_argument("quad_to_obb: non-finite corner");
    }
  }
  std::sort(pts.begin(), pts.end(),
            [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);

  double scale = 0.0;
  for (const Point& p : hull) scale = std::max(scale, std::max(std::abs(p.x), std::abs(p.y)));
  scale = std::max(scale, 1.0);
  if (hull.size() < 3 || std::abs(signed_area(hull)) <= 1e-12 * scale * scale) {
    throw std::invalid_argument("quad_to_obb: degenerate (zero-area) quadrilateral");
  }

  double best_area = std::numeric_limits<double>::infinity();
  OrientedBox best;
  for (std::size_t i = 0, n = hull.size(); i < n; ++i) {
    const Point a = hull[i];
    const Point b = hull[(i + 1) % n];
    const double len = distance(a, b);
    if (len <= 0.0) continue;
    const Point u{(b.x - a.x) / len, (b.y - a.y) / len};
    const Point v{-u.y, u.x};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin;
    double vmin = umin, vmax = -umin;
    for (const Point& p : hull) {
      const double pu = p.x * u.x + p.y * u.y;
      const double pv = p.x * v.x + p.y * v.y;
      umin = std::min(umin, pu);
      umax = std::max(umax, pu);
      vmin = std::min(vmin, pv);
      vmax = std::max(vmax, pv);
    }
    const double w = umax - umin;
    const double h = vmax - vmin;
    const double area = w * h;
    if (area < best_area * (1.0 - 1e-12)) {
      best_area = area;
      const double mu = 0.5 * (umin + umax);
      const double mv = 0.5 * (vmin + vmax);
      double angle = normalize_angle(std::atan2(u.y, u.x));
      double bw = w;
      double bh = h;
      if (angle >= kPi / 4.0) {
        angle -= kPi / 2.0;
        std::swap(bw, bh);
      } else if (angle < -kPi / 4.0) {
        angle += kPi / 2.0;
        std::swap(bw, bh);
      }
      best = OrientedBox(mu * u.x + mv * v.x, mu * u.y + mv * v.y, bw, bh, angle);
    }
  }
  return best;
}

bool same_footprint(const OrientedBox& a, const OrientedBox& b, double tol) {
  const auto ca = obb_corners(a);
  const auto cb = obb_corners(b);
  for (const Point& p : ca) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const Point& q : cb) nearest = std::min(nearest, distance(p, q));
    if (nearest > tol) return false;
  }
  return true;
}

}  // namespace fsood
