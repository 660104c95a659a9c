#pragma once

#include <cmath>
#include <vector>

namespace rmbl::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{1.0, 0.0};
  }
  Vec2 rotated(double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
  }
};

double wrap_angle(double a);  // to (-pi, pi]

// Convex polygon, counter-clockwise or clockwise both accepted.
struct Polygon {
  std::vector<Vec2> pts;

  Vec2 centroid() const;
  void bounds(Vec2& lo, Vec2& hi) const;
};

Polygon rect_polygon(Vec2 center, double heading, double length, double width);

bool point_in_polygon(const Vec2& p, const Polygon& poly);

// Separating-axis test for convex polygons.
bool polygons_intersect(const Polygon& a, const Polygon& b);

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1);

// Piecewise-linear route with cached cumulative arclength.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  const std::vector<Vec2>& points() const { return pts_; }
  const std::vector<double>& cumlen() const { return cum_; }
  double total() const { return cum_.empty() ? 0.0 : cum_.back(); }
  bool empty() const { return pts_.empty(); }

  struct Projection {
    double s = 0.0;        // arclength of the closest point
    double d_lat = 0.0;    // signed lateral offset, left of travel positive
    double tangent = 0.0;  // route heading at the closest point
    double dist = 0.0;     // unsigned distance
  };

  Projection project(const Vec2& p) const;
  // Restricts the search to segments within [s_hint - back, s_hint + fwd];
  // used for monotone progress tracking on self-approaching routes.
  Projection project_near(const Vec2& p, double s_hint, double back, double fwd) const;

  Vec2 point_at(double s) const;
  double tangent_at(double s) const;

 private:
  Projection project_range(const Vec2& p, std::size_t first_seg, std::size_t last_seg) const;

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

}  // namespace rmbl::sim
