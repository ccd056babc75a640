#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace icosr {

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Errors. Every module throws one of these; the CLI maps them to exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
  using Error::Error;
};

struct BoundsError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

struct ShapeError : InvalidInputError {
  using InvalidInputError::InvalidInputError;
};

struct SingularityError : Error {
  using Error::Error;
};

struct DegenerateFrameError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Small vector types.
// ---------------------------------------------------------------------------

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator-() const { return {-x, -y}; }
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  if (n == 0.0) throw NumericError("cannot normalize zero vector");
  return a * (1.0 / n);
}

// Row-major 3x3 rotation helpers.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[3 * i + k] * o.m[3 * k + j];
        r.m[3 * i + j] = s;
      }
    return r;
  }
};

inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

// ---------------------------------------------------------------------------
// Points on the unit sphere. theta is colatitude from +z in [0,pi], phi is
// longitude from +x in [-pi,pi).
// ---------------------------------------------------------------------------

struct SpherePoint {
  Vec3 dir;           // unit vector
  double theta = 0.0; // colatitude
  double phi = 0.0;   // longitude

  static SpherePoint from_dir(const Vec3& d) {
    SpherePoint p;
    p.dir = d;
    p.theta = std::acos(std::clamp(d.z, -1.0, 1.0));
    p.phi = (d.x == 0.0 && d.y == 0.0) ? 0.0 : std::atan2(d.y, d.x);
    return p;
  }

  static SpherePoint from_angles(double theta, double phi) {
    SpherePoint p;
    p.theta = theta;
    p.phi = phi;
    const double st = std::sin(theta);
    p.dir = {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
    return p;
  }
};

// Unit tangent frame of the (theta, phi) chart at p.
inline Vec3 theta_hat(const SpherePoint& p) {
  const double ct = std::cos(p.theta), st = std::sin(p.theta);
  return {ct * std::cos(p.phi), ct * std::sin(p.phi), -st};
}

inline Vec3 phi_hat(const SpherePoint& p) { return {-std::sin(p.phi), std::cos(p.phi), 0.0}; }

// Wrap an angle difference into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

}  // namespace icosr
