#pragma once

#include <map>
#include <optional>
#include <string>

#include "icosr/core.hpp"

namespace icosr {

enum class ProjectionKind { erp, perspective, fisheye, cubemap_face };

// Pixel <-> sphere map of one output image.
//
// Continuous pixel coordinates: x in [0,b) rightward, y in [0,a) downward,
// pixel (i,j) centered at (j+0.5, i+0.5). ERP ignores the orientation and
// uses the global frame: theta = y*pi/a, phi = x*2*pi/b - pi. Perspective,
// fisheye and cubemap faces look along `forward` with `right` along +x and
// `up` along -y; the orientation is built from intrinsic yaw (about world z),
// pitch, roll applied to the +z optical axis, so yaw=pitch=roll=0 looks at
// the north pole and pitch=90deg looks at the equator with north up.
struct ProjectionSpec {
  ProjectionKind kind = ProjectionKind::erp;
  int height = 1, width = 1;        // a, b
  double fov_h = 0.0, fov_v = 0.0;  // M, N (radians)
  double yaw = 0.0, pitch = 0.0, roll = 0.0;
  Vec3 forward{0, 0, 1}, right{0, 1, 0}, up{-1, 0, 0};

  // Per-pixel image-plane steps. Perspective/cubemap: plane at unit focal
  // distance spanning tan(M/2) x tan(N/2); fisheye (equidistant): view angle
  // per pixel.
  double step_x() const {
    switch (kind) {
      case ProjectionKind::erp: return 2.0 * kPi / width;
      case ProjectionKind::fisheye: return fov_h / width;
      default: return 2.0 * std::tan(fov_h / 2.0) / width;
    }
  }
  double step_y() const {
    switch (kind) {
      case ProjectionKind::erp: return kPi / height;
      case ProjectionKind::fisheye: return fov_v / height;
      default: return 2.0 * std::tan(fov_v / 2.0) / height;
    }
  }

  static ProjectionSpec erp(int height, int width);
  static ProjectionSpec perspective(int height, int width, double fov_h, double fov_v, double yaw = 0,
                                    double pitch = 0, double roll = 0);
  static ProjectionSpec fisheye(int height, int width, double fov_h, double fov_v, double yaw = 0,
                                double pitch = 0, double roll = 0);
  static ProjectionSpec cubemap_face(int height, int width, double yaw = 0, double pitch = 0, double roll = 0);

  // Keys: kind, width, height, fov_h_deg, fov_v_deg, yaw_deg, pitch_deg, roll_deg.
  static ProjectionSpec from_kv(const std::map<std::string, std::string>& kv);
};

namespace detail {

inline void orient(ProjectionSpec& s) {
  const Mat3 r = rot_z(s.yaw) * rot_y(s.pitch) * rot_z(s.roll);
  s.forward = r * Vec3{0, 0, 1};
  s.right = r * Vec3{0, 1, 0};
  s.up = r * Vec3{-1, 0, 0};
}

inline void check_bounds(const ProjectionSpec& s, double x, double y) {
  // Half-pixel slack so corner differencing at border pixels stays legal.
  if (x < -0.5 - 1e-9 || x > s.width + 0.5 + 1e-9 || y < -0.5 - 1e-9 || y > s.height + 0.5 + 1e-9)
    throw InvalidInputError("pixel coordinates out of image bounds");
}

}  // namespace detail

inline ProjectionSpec ProjectionSpec::erp(int height, int width) {
  if (height < 1 || width < 1) throw InvalidInputError("image size must be at least 1x1");
  ProjectionSpec s;
  s.kind = ProjectionKind::erp;
  s.height = height;
  s.width = width;
  return s;
}

inline ProjectionSpec ProjectionSpec::perspective(int height, int width, double fov_h, double fov_v, double yaw,
                                                  double pitch, double roll) {
  if (height < 1 || width < 1) throw InvalidInputError("image size must be at least 1x1");
  if (fov_h <= 0 || fov_h >= kPi || fov_v <= 0 || fov_v >= kPi)
    throw InvalidInputError("perspective FOV must lie in (0, pi)");
  ProjectionSpec s;
  s.kind = ProjectionKind::perspective;
  s.height = height;
  s.width = width;
  s.fov_h = fov_h;
  s.fov_v = fov_v;
  s.yaw = yaw;
  s.pitch = pitch;
  s.roll = roll;
  detail::orient(s);
  return s;
}

inline ProjectionSpec ProjectionSpec::fisheye(int height, int width, double fov_h, double fov_v, double yaw,
                                              double pitch, double roll) {
  if (height < 1 || width < 1) throw InvalidInputError("image size must be at least 1x1");
  if (fov_h <= 0 || fov_h > 2 * kPi || fov_v <= 0 || fov_v > 2 * kPi)
    throw InvalidInputError("fisheye FOV must lie in (0, 2*pi]");
  ProjectionSpec s;
  s.kind = ProjectionKind::fisheye;
  s.height = height;
  s.width = width;
  s.fov_h = fov_h;
  s.fov_v = fov_v;
  s.yaw = yaw;
  s.pitch = pitch;
  s.roll = roll;
  detail::orient(s);
  return s;
}

inline ProjectionSpec ProjectionSpec::cubemap_face(int height, int width, double yaw, double pitch, double roll) {
  auto s = perspective(height, width, kPi / 2, kPi / 2, yaw, pitch, roll);
  s.kind = ProjectionKind::cubemap_face;
  return s;
}

inline ProjectionSpec ProjectionSpec::from_kv(const std::map<std::string, std::string>& kv) {
  auto get = [&](const std::string& key, double dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : std::stod(it->second);
  };
  auto kind_it = kv.find("kind");
  const std::string kind = kind_it == kv.end() ? "erp" : kind_it->second;
  const int w = static_cast<int>(get("width", 512));
  const int h = static_cast<int>(get("height", 256));
  const double d2r = kPi / 180.0;
  const double yaw = get("yaw_deg", 0) * d2r, pitch = get("pitch_deg", 0) * d2r, roll = get("roll_deg", 0) * d2r;
  if (kind == "erp") return erp(h, w);
  if (kind == "perspective")
    return perspective(h, w, get("fov_h_deg", 90) * d2r, get("fov_v_deg", 90) * d2r, yaw, pitch, roll);
  if (kind == "fisheye")
    return fisheye(h, w, get("fov_h_deg", 180) * d2r, get("fov_v_deg", 180) * d2r, yaw, pitch, roll);
  if (kind == "cubemap") return cubemap_face(h, w, yaw, pitch, roll);
  throw InvalidInputError("unknown projection kind: " + kind);
}

// ---------------------------------------------------------------------------
// Pixel <-> sphere
// ---------------------------------------------------------------------------

inline SpherePoint pixel_to_sphere(const ProjectionSpec& spec, double x, double y) {
  detail::check_bounds(spec, x, y);
  if (spec.kind == ProjectionKind::erp) {
    const double theta = std::clamp(y * kPi / spec.height, 0.0, kPi);
    const double phi = wrap_angle(x * 2.0 * kPi / spec.width - kPi);
    return SpherePoint::from_angles(theta, phi);
  }
  const double xc = x - spec.width / 2.0;
  const double yc = spec.height / 2.0 - y;
  const double p = xc * spec.step_x();
  const double q = yc * spec.step_y();
  if (spec.kind == ProjectionKind::fisheye) {
    const double rho = std::hypot(p, q);
    if (rho < 1e-15) return SpherePoint::from_dir(spec.forward);
    const Vec3 lateral = (spec.right * p + spec.up * q) * (std::sin(rho) / rho);
    return SpherePoint::from_dir(spec.forward * std::cos(rho) + lateral);
  }
  return SpherePoint::from_dir(normalized(spec.forward + spec.right * p + spec.up * q));
}

// Distinguished "outside" is nullopt. Inverse of pixel_to_sphere on the FOV.
inline std::optional<Vec2> sphere_to_pixel(const ProjectionSpec& spec, const SpherePoint& s) {
  if (spec.kind == ProjectionKind::erp) {
    const double y = s.theta * spec.height / kPi;
    const double x = (s.phi + kPi) * spec.width / (2.0 * kPi);
    return Vec2{x, y};
  }
  double p, q;
  if (spec.kind == ProjectionKind::fisheye) {
    const double c = std::clamp(dot(s.dir, spec.forward), -1.0, 1.0);
    const double psi = std::acos(c);
    if (psi >= kPi - 1e-9) return std::nullopt;
    const double tr = dot(s.dir, spec.right), tu = dot(s.dir, spec.up);
    const double lat = std::hypot(tr, tu);
    if (lat < 1e-15) {
      p = q = 0.0;
    } else {
      p = psi * tr / lat;
      q = psi * tu / lat;
    }
  } else {
    const double sf = dot(s.dir, spec.forward);
    if (sf <= 1e-12) return std::nullopt;
    p = dot(s.dir, spec.right) / sf;
    q = dot(s.dir, spec.up) / sf;
  }
  const double x = p / spec.step_x() + spec.width / 2.0;
  const double y = spec.height / 2.0 - q / spec.step_y();
  if (x < 0.0 || x > spec.width || y < 0.0 || y > spec.height) return std::nullopt;
  return Vec2{x, y};
}

// ---------------------------------------------------------------------------
// Analytic Jacobian: tangent displacement per one-pixel step, in (theta_hat,
// phi_hat) components. d_right is the +x step; d_up is the upward step (-y),
// matching the projected plane's y-up convention.
// ---------------------------------------------------------------------------

struct PixelJacobian {
  Vec2 d_right;  // (theta_hat, phi_hat) components
  Vec2 d_up;
};

inline PixelJacobian projection_jacobian(const ProjectionSpec& spec, double x, double y) {
  detail::check_bounds(spec, x, y);
  if (spec.kind == ProjectionKind::erp) {
    const double theta = y * kPi / spec.height;
    const double st = std::sin(theta);
    if (std::abs(st) < 1e-6) throw SingularityError("ERP jacobian singular at the poles");
    return {Vec2{0.0, spec.step_x() * st}, Vec2{-spec.step_y(), 0.0}};
  }

  const double xc = x - spec.width / 2.0;
  const double yc = spec.height / 2.0 - y;
  const double p = xc * spec.step_x();
  const double q = yc * spec.step_y();

  SpherePoint s;
  Vec3 ds_dp, ds_dq;  // tangent derivatives w.r.t. plane coordinates
  if (spec.kind == ProjectionKind::fisheye) {
    const double rho = std::hypot(p, q);
    if (rho < 1e-9) throw SingularityError("fisheye jacobian singular at the image center");
    const double sr = std::sin(rho), cr = std::cos(rho);
    const Vec3 g = spec.right * p + spec.up * q;
    s = SpherePoint::from_dir(spec.forward * cr + g * (sr / rho));
    // d/dp of cos(rho) f + sin(rho)/rho g, with drho/dp = p/rho.
    const double k = (cr * rho - sr) / (rho * rho);
    ds_dp = spec.forward * (-sr * p / rho) + g * (k * p / rho) + spec.right * (sr / rho);
    ds_dq = spec.forward * (-sr * q / rho) + g * (k * q / rho) + spec.up * (sr / rho);
  } else {
    const Vec3 w = spec.forward + spec.right * p + spec.up * q;
    const double wn = norm(w);
    s = SpherePoint::from_dir(w * (1.0 / wn));
    // Radial parts vanish under the tangent-basis dot products below.
    ds_dp = spec.right * (1.0 / wn);
    ds_dq = spec.up * (1.0 / wn);
  }
  if (std::abs(std::sin(s.theta)) < 1e-6)
    throw SingularityError("(theta, phi) chart singular at the world poles");

  const Vec3 th = theta_hat(s), ph = phi_hat(s);
  const double sx = spec.step_x(), sy = spec.step_y();
  return {Vec2{dot(th, ds_dp) * sx, dot(ph, ds_dp) * sx}, Vec2{dot(th, ds_dq) * sy, dot(ph, ds_dq) * sy}};
}

// ---------------------------------------------------------------------------
// Orientation-invariant tangent frame at p relative to a reference vertex:
// n1 points from the vertex toward p in the (theta, phi) chart, n2 is its
// 90-degree counter-clockwise rotation seen from outside the sphere.
// ---------------------------------------------------------------------------

struct TangentFrame {
  Vec2 n1, n2;
  // Row-major 2x2 solving (theta_hat; phi_hat) = alpha_beta * (n1; n2);
  // the inverse (= transpose) of the matrix with rows n1, n2.
  std::array<double, 4> alpha_beta;
};

inline TangentFrame frame_from_offset(Vec2 offset) {
  const double r = norm(offset);
  if (r < 1e-15) throw DegenerateFrameError("tangent frame undefined at the reference vertex");
  TangentFrame f;
  f.n1 = offset * (1.0 / r);
  f.n2 = Vec2{-f.n1.y, f.n1.x};
  f.alpha_beta = {f.n1.x, f.n2.x, f.n1.y, f.n2.y};
  return f;
}

// Chart offset of p relative to v: ((theta_p - theta_v), (phi_p - phi_v) sin(theta_p)).
inline Vec2 chart_offset(const SpherePoint& p, const SpherePoint& v) {
  return {p.theta - v.theta, wrap_angle(p.phi - v.phi) * std::sin(p.theta)};
}

inline TangentFrame tangent_frame(const SpherePoint& p, const SpherePoint& v) {
  return frame_from_offset(chart_offset(p, v));
}

// ---------------------------------------------------------------------------
// Equal-area axis-aligned rectangle with maximal overlap against the
// parallelogram spanned by u, v (both centered at the origin).
// ---------------------------------------------------------------------------

struct EquivalentRect {
  double width = 0.0, height = 0.0;
  double overlap = 0.0;  // intersection area with the parallelogram
};

namespace detail {

// Area of the parallelogram clipped to the centered w x h rectangle.
// Sutherland-Hodgman against the four half-planes, then the shoelace formula.
inline double clipped_overlap(const std::array<Vec2, 4>& para, double w, double h) {
  std::array<Vec2, 16> poly, next;
  int n = 4;
  for (int i = 0; i < 4; ++i) poly[i] = para[i];

  // inside(v) <=> sign * coord(v) <= limit
  auto clip_axis = [&](bool use_x, double sign, double limit) {
    int m = 0;
    for (int i = 0; i < n; ++i) {
      const Vec2 a = poly[i], b = poly[(i + 1) % n];
      const double da = sign * (use_x ? a.x : a.y) - limit;
      const double db = sign * (use_x ? b.x : b.y) - limit;
      const bool ina = da <= 0.0, inb = db <= 0.0;
      if (ina) next[m++] = a;
      if (ina != inb) {
        const double t = da / (da - db);
        next[m++] = a + (b - a) * t;
      }
    }
    for (int i = 0; i < m; ++i) poly[i] = next[i];
    n = m;
  };
  clip_axis(true, 1.0, w / 2);
  clip_axis(true, -1.0, w / 2);
  clip_axis(false, 1.0, h / 2);
  clip_axis(false, -1.0, h / 2);
  if (n < 3) return 0.0;
  double area2 = 0.0;
  for (int i = 0; i < n; ++i) area2 += cross(poly[i], poly[(i + 1) % n]);
  return std::abs(area2) / 2.0;
}

}  // namespace detail

inline EquivalentRect equivalent_rectangle(Vec2 u, Vec2 v) {
  const double area = std::abs(cross(u, v));
  if (area <= 1e-15 * (norm(u) + norm(v)) * (norm(u) + norm(v)) || area == 0.0)
    throw InvalidInputError("equivalent_rectangle: degenerate parallelogram");

  // Axis-aligned input is its own optimum.
  if (u.y == 0.0 && v.x == 0.0) return {std::abs(u.x), std::abs(v.y), area};
  if (u.x == 0.0 && v.y == 0.0) return {std::abs(v.x), std::abs(u.y), area};

  const std::array<Vec2, 4> para = {(u + v) * 0.5, (u - v) * 0.5, (u + v) * -0.5, (u - v) * -0.5};
  const double x_extent = std::abs(u.x) + std::abs(v.x);
  const double y_extent = std::abs(u.y) + std::abs(v.y);
  const double w_lo = area / y_extent, w_hi = x_extent;

  auto overlap_at = [&](double w) { return detail::clipped_overlap(para, w, area / w); };

  // Coarse scan to bracket the best mode, then golden-section inside it.
  const int kScan = 32;
  int best_i = 0;
  double best_val = -1.0;
  auto w_of = [&](int i) { return w_lo + (w_hi - w_lo) * i / kScan; };
  for (int i = 0; i <= kScan; ++i) {
    const double val = overlap_at(w_of(i));
    if (val > best_val) {
      best_val = val;
      best_i = i;
    }
  }
  double lo = w_of(std::max(0, best_i - 1));
  double hi = w_of(std::min(kScan, best_i + 1));
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - gr * (hi - lo), d = lo + gr * (hi - lo);
  double fc = overlap_at(c), fd = overlap_at(d);
  while (hi - lo > 1e-8 * w_hi) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - gr * (hi - lo);
      fc = overlap_at(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + gr * (hi - lo);
      fd = overlap_at(d);
    }
  }
  const double w = (lo + hi) / 2.0;
  return {w, area / w, overlap_at(w)};
}

// ---------------------------------------------------------------------------
// Sphere-oriented cell decoding: the output pixel's footprint pushed through
// the projection Jacobian into the (n1, n2) frame of the reference vertex,
// rendered as the equal-area axis-aligned rectangle. n1, n2 are unit, so the
// decoding values are the rectangle sides themselves.
// ---------------------------------------------------------------------------

struct CellDecoding {
  double cx = 0.0, cy = 0.0;
};

inline CellDecoding cell_decode_with_frame(const ProjectionSpec& spec, double x, double y,
                                           const TangentFrame& frame) {
  Vec2 dr, du;
  try {
    const PixelJacobian jac = projection_jacobian(spec, x, y);
    dr = jac.d_right;
    du = jac.d_up;
  } catch (const SingularityError&) {
    // Numeric fallback: difference the pixel edge midpoints through
    // pixel_to_sphere, projected into the chart at the pixel center.
    const SpherePoint c = pixel_to_sphere(spec, x, y);
    const Vec3 th = theta_hat(c), ph = phi_hat(c);
    const Vec3 ddx = pixel_to_sphere(spec, x + 0.5, y).dir - pixel_to_sphere(spec, x - 0.5, y).dir;
    const Vec3 ddy = pixel_to_sphere(spec, x, y - 0.5).dir - pixel_to_sphere(spec, x, y + 0.5).dir;
    dr = {dot(th, ddx), dot(ph, ddx)};
    du = {dot(th, ddy), dot(ph, ddy)};
  }
  // Coordinates in the orthonormal (n1, n2) frame.
  const Vec2 u{dot(dr, frame.n1), dot(dr, frame.n2)};
  const Vec2 v{dot(du, frame.n1), dot(du, frame.n2)};
  try {
    const EquivalentRect rect = equivalent_rectangle(u, v);
    return {rect.width, rect.height};
  } catch (const InvalidInputError&) {
    return {norm(u), norm(v)};  // degenerate cell; keep rendering total
  }
}

inline CellDecoding cell_decode(const ProjectionSpec& spec, double x, double y, const SpherePoint& vertex) {
  const SpherePoint p = pixel_to_sphere(spec, x, y);
  return cell_decode_with_frame(spec, x, y, tangent_frame(p, vertex));
}

}  // namespace icosr
