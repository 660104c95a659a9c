#include "rmbl/sim/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace rmbl::sim {

double wrap_angle(double a) {
  double y = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (y <= 0.0) y += 2.0 * std::numbers::pi;
  return y - std::numbers::pi;
}

Vec2 Polygon::centroid() const {
  Vec2 c;
  for (const auto& p : pts) c = c + p;
  return c * (1.0 / static_cast<double>(pts.size()));
}

void Polygon::bounds(Vec2& lo, Vec2& hi) const {
  lo = hi = pts.front();
  for (const auto& p : pts) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  }
}

Polygon rect_polygon(Vec2 center, double heading, double length, double width) {
  const Vec2 f = Vec2{1.0, 0.0}.rotated(heading) * (length * 0.5);
  const Vec2 l = Vec2{0.0, 1.0}.rotated(heading) * (width * 0.5);
  return Polygon{{center + f + l, center + f - l, center - f - l, center - f + l}};
}

bool point_in_polygon(const Vec2& p, const Polygon& poly) {
  bool inside = false;
  const auto& v = poly.pts;
  for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++) {
    if ((v[i].y > p.y) != (v[j].y > p.y)) {
      const double x_int = v[j].x + (v[i].x - v[j].x) * (p.y - v[j].y) / (v[i].y - v[j].y);
      if (p.x < x_int) inside = !inside;
    }
  }
  return inside;
}

namespace {
// Projects both polygons on the normal of every edge of `a`; true if some
// axis separates them.
bool has_separating_axis(const Polygon& a, const Polygon& b) {
  for (std::size_t i = 0; i < a.pts.size(); ++i) {
    const Vec2 e = a.pts[(i + 1) % a.pts.size()] - a.pts[i];
    const Vec2 axis{-e.y, e.x};
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (const auto& p : a.pts) {
      const double d = axis.dot(p);
      amin = std::min(amin, d);
      amax = std::max(amax, d);
    }
    for (const auto& p : b.pts) {
      const double d = axis.dot(p);
      bmin = std::min(bmin, d);
      bmax = std::max(bmax, d);
    }
    if (amax < bmin || bmax < amin) return true;
  }
  return false;
}
}  // namespace

bool polygons_intersect(const Polygon& a, const Polygon& b) {
  Vec2 alo, ahi, blo, bhi;
  a.bounds(alo, ahi);
  b.bounds(blo, bhi);
  if (ahi.x < blo.x || bhi.x < alo.x || ahi.y < blo.y || bhi.y < alo.y) return false;
  return !has_separating_axis(a, b) && !has_separating_axis(b, a);
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.dot(ab);
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + ab * t)).norm();
}

bool segments_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
  const auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double v = (q - p).cross(r - p);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
  };
  const int o1 = orient(a0, a1, b0), o2 = orient(a0, a1, b1);
  const int o3 = orient(b0, b1, a0), o4 = orient(b0, b1, a1);
  if (o1 != o2 && o3 != o4) return true;
  const auto on_seg = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x, r.x) - 1e-12 <= q.x && q.x <= std::max(p.x, r.x) + 1e-12 &&
           std::min(p.y, r.y) - 1e-12 <= q.y && q.y <= std::max(p.y, r.y) + 1e-12;
  };
  if (o1 == 0 && on_seg(a0, b0, a1)) return true;
  if (o2 == 0 && on_seg(a0, b1, a1)) return true;
  if (o3 == 0 && on_seg(b0, a0, b1)) return true;
  if (o4 == 0 && on_seg(b0, a1, b1)) return true;
  return false;
}

Polyline::Polyline(std::vector<Vec2> points) : pts_(std::move(points)) {
  if (pts_.size() < 2) {
    throw std::invalid_argument("Polyline: need at least 2 points");
  }
  cum_.resize(pts_.size());
  cum_[0] = 0.0;
  for (std::size_t i = 1; i < pts_.size(); ++i) {
    const double seg = (pts_[i] - pts_[i - 1]).norm();
    if (seg <= 1e-9) {
      throw std::invalid_argument("Polyline: arclength must be strictly increasing");
    }
    cum_[i] = cum_[i - 1] + seg;
  }
}

Polyline::Projection Polyline::project_range(const Vec2& p, std::size_t first_seg,
                                             std::size_t last_seg) const {
  Projection best;
  best.dist = 1e300;
  for (std::size_t i = first_seg; i <= last_seg; ++i) {
    const Vec2 a = pts_[i], b = pts_[i + 1];
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
    const Vec2 close = a + ab * t;
    const double dist = (p - close).norm();
    if (dist < best.dist) {
      best.dist = dist;
      best.s = cum_[i] + t * std::sqrt(len2);
      const Vec2 tang = ab.normalized();
      best.tangent = std::atan2(tang.y, tang.x);
      best.d_lat = tang.cross(p - close) >= 0.0 ? dist : -dist;
    }
  }
  return best;
}

Polyline::Projection Polyline::project(const Vec2& p) const {
  return project_range(p, 0, pts_.size() - 2);
}

Polyline::Projection Polyline::project_near(const Vec2& p, double s_hint, double back,
                                            double fwd) const {
  const double lo = s_hint - back, hi = s_hint + fwd;
  std::size_t first = pts_.size() - 2, last = 0;
  for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
    if (cum_[i + 1] >= lo && cum_[i] <= hi) {
      first = std::min(first, i);
      last = std::max(last, i);
    }
  }
  if (first > last) return project(p);
  return project_range(p, first, last);
}

Vec2 Polyline::point_at(double s) const {
  if (s <= 0.0) return pts_.front();
  if (s >= total()) return pts_.back();
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - cum_.begin()) - 1;
  const double t = (s - cum_[i]) / (cum_[i + 1] - cum_[i]);
  return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
}

double Polyline::tangent_at(double s) const {
  std::size_t i;
  if (s <= 0.0) {
    i = 0;
  } else if (s >= total()) {
    i = pts_.size() - 2;
  } else {
    const auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    i = static_cast<std::size_t>(it - cum_.begin()) - 1;
  }
  const Vec2 t = (pts_[i + 1] - pts_[i]).normalized();
  return std::atan2(t.y, t.x);
}

}  // namespace rmbl::sim
