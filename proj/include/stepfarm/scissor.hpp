// Closed-form kinematics and actuator loads of an n-level scissor lift.
//
// Geometry: n stacked X-links of length D. The actuator's moving end A sits
// on a positively sloping link at PA = a*D, its fixed end B at OB = b*D, with
// i scissor levels below B. All functions are templated on the scalar type so
// the same code runs in double for the optimizer and in long double for
// reference checks.
#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stepfarm {

enum class ThetaMaxRule {
  kClimbHeight,  // arcsin(sin(theta_min) + H / (n D))
  kRightAngle,   // pi / 2
};

class ScissorError : public std::domain_error {
 public:
  enum class Kind { kDomain, kNegativeRadicand, kToggleSingularity, kInfeasibleClimb };

  ScissorError(Kind kind, const std::string& what) : std::domain_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

template <typename Scalar>
struct ScissorConfigT {
  Scalar a{0.5};          // PA / D
  Scalar b{0.16};         // OB / D
  Scalar theta_min{std::numbers::pi_v<Scalar> / 18};
  int n{2};               // scissor levels
  Scalar D{0.4};          // link length [m]
  int i{1};               // levels below B
  Scalar L_load{250};     // lifted load [N]
  Scalar H{0.4};          // climb height [m]
  ThetaMaxRule theta_max_rule{ThetaMaxRule::kClimbHeight};

  template <typename Other>
  ScissorConfigT<Other> cast() const {
    return {Other(a), Other(b), Other(theta_min), n, Other(D), i, Other(L_load), Other(H), theta_max_rule};
  }
};

using ScissorConfig = ScissorConfigT<double>;

template <typename Scalar>
struct ScissorEvalT {
  Scalar h{};      // lift height [m]
  Scalar l{};      // actuator length [m]
  Scalar F{};      // actuator force [N]
  Scalar theta{};  // link angle [rad]
};

using ScissorEval = ScissorEvalT<double>;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Datasheet design of the prototype lift (rounded optimizer output).
inline ScissorConfig prototype_datasheet_config() {
  ScissorConfig c;
  c.a = 0.499;
  c.b = 0.158;
  c.theta_min = deg2rad(10.0);
  c.n = 2;
  c.D = 0.409;
  c.i = 1;
  c.L_load = 250.0;
  c.H = 0.4;
  return c;
}

/// Lift actually built: rounded position variables and a 0.25 m stroke actuator.
inline ScissorConfig prototype_built_config() {
  ScissorConfig c = prototype_datasheet_config();
  c.a = 0.5;
  c.b = 0.16;
  c.D = 0.4;
  return c;
}

namespace detail {

template <typename Scalar>
Scalar abar(const ScissorConfigT<Scalar>& c) {
  return Scalar(1) - c.a;
}

template <typename Scalar>
Scalar lambda(const ScissorConfigT<Scalar>& c) {
  const Scalar ia = Scalar(c.i) + c.a;
  return abar(c) * abar(c) - ia * ia;
}

template <typename Scalar>
void require_open_angle(Scalar theta) {
  using std::isfinite;
  const Scalar half_pi = std::numbers::pi_v<Scalar> / 2;
  if (!isfinite(theta) || theta <= Scalar(0) || theta >= half_pi) {
    throw ScissorError(ScissorError::Kind::kDomain, "link angle must lie in (0, pi/2)");
  }
}

}  // namespace detail

/// Throws unless the configuration describes a realizable lift: a, b in (0, 0.5],
/// n >= 1, 0 <= i < n, D > 0, L >= 0, H >= 0.
template <typename Scalar>
void check_geometry(const ScissorConfigT<Scalar>& c) {
  using K = ScissorError::Kind;
  if (!(c.a > Scalar(0) && c.a <= Scalar(0.5))) throw ScissorError(K::kDomain, "a must lie in (0, 0.5]");
  if (!(c.b > Scalar(0) && c.b <= Scalar(0.5))) throw ScissorError(K::kDomain, "b must lie in (0, 0.5]");
  if (c.n < 1) throw ScissorError(K::kDomain, "n must be at least 1");
  if (c.i < 0 || c.i >= c.n) throw ScissorError(K::kDomain, "i must lie in [0, n)");
  if (!(c.D > Scalar(0))) throw ScissorError(K::kDomain, "link length D must be positive");
  if (!(c.L_load >= Scalar(0))) throw ScissorError(K::kDomain, "load must be non-negative");
  if (!(c.H >= Scalar(0))) throw ScissorError(K::kDomain, "climb height must be non-negative");
  detail::require_open_angle(c.theta_min);
}

template <typename Scalar>
Scalar height(const ScissorConfigT<Scalar>& c, Scalar theta) {
  using std::sin;
  detail::require_open_angle(theta);
  return Scalar(c.n) * c.D * sin(theta);
}

/// Bracketed term shared by the actuator length and force expressions.
template <typename Scalar>
Scalar length_radicand(const ScissorConfigT<Scalar>& c, Scalar theta) {
  using std::cos;
  const Scalar ct = cos(theta);
  const Scalar ia = Scalar(c.i) + c.a;
  return detail::lambda(c) * ct * ct - Scalar(2) * c.b * detail::abar(c) * ct + c.b * c.b + ia * ia;
}

template <typename Scalar>
Scalar actuator_length(const ScissorConfigT<Scalar>& c, Scalar theta) {
  using std::sqrt;
  detail::require_open_angle(theta);
  const Scalar r = length_radicand(c, theta);
  if (r < Scalar(0)) {
    throw ScissorError(ScissorError::Kind::kNegativeRadicand, "actuator length radicand is negative");
  }
  return c.D * sqrt(r);
}

template <typename Scalar>
Scalar actuator_force(const ScissorConfigT<Scalar>& c, Scalar theta) {
  using std::abs;
  using std::sin;
  using std::sqrt;
  using std::tan;
  detail::require_open_angle(theta);
  const Scalar r = length_radicand(c, theta);
  if (r < Scalar(0)) {
    throw ScissorError(ScissorError::Kind::kNegativeRadicand, "actuator length radicand is negative");
  }
  const Scalar den = c.b * detail::abar(c) * tan(theta) - detail::lambda(c) * sin(theta);
  if (abs(den) <= Scalar(1e-12)) {
    throw ScissorError(ScissorError::Kind::kToggleSingularity, "mechanism is at its toggle point");
  }
  return Scalar(c.n) * c.L_load * sqrt(r / (den * den));
}

template <typename Scalar>
Scalar f_max(const ScissorConfigT<Scalar>& c) {
  return actuator_force(c, c.theta_min);
}

/// Link angle at the fully extended state.
template <typename Scalar>
Scalar theta_max_for_climb(const ScissorConfigT<Scalar>& c) {
  using std::asin;
  using std::sin;
  const Scalar half_pi = std::numbers::pi_v<Scalar> / 2;
  if (c.theta_max_rule == ThetaMaxRule::kRightAngle) return half_pi;
  const Scalar arg = sin(c.theta_min) + c.H / (Scalar(c.n) * c.D);
  // Round-off at the D = D_min boundary lands a few ulps above one.
  if (arg > Scalar(1) + Scalar(64) * std::numeric_limits<Scalar>::epsilon()) {
    throw ScissorError(ScissorError::Kind::kInfeasibleClimb, "lift cannot reach the climb height");
  }
  return arg >= Scalar(1) ? half_pi : asin(arg);
}

/// Actuator length at an angle, extended to the closed interval (0, pi/2].
template <typename Scalar>
Scalar actuator_length_closed(const ScissorConfigT<Scalar>& c, Scalar theta) {
  using std::sqrt;
  const Scalar half_pi = std::numbers::pi_v<Scalar> / 2;
  if (theta >= half_pi) {
    const Scalar r = length_radicand(c, half_pi);
    if (r < Scalar(0)) throw ScissorError(ScissorError::Kind::kNegativeRadicand, "actuator length radicand is negative");
    return c.D * sqrt(r);
  }
  return actuator_length(c, theta);
}

template <typename Scalar>
Scalar stroke(const ScissorConfigT<Scalar>& c) {
  const Scalar tmax = theta_max_for_climb(c);
  if (tmax <= c.theta_min) return Scalar(0);
  return actuator_length_closed(c, tmax) - actuator_length(c, c.theta_min);
}

/// Shortest link that still reaches H from the lower angle bound.
template <typename Scalar>
Scalar d_min(Scalar H, int n, Scalar theta_lb) {
  using std::sin;
  if (!(H > Scalar(0)) || n < 1) throw ScissorError(ScissorError::Kind::kDomain, "d_min needs H > 0 and n >= 1");
  return H / (Scalar(n) * (Scalar(1) - sin(theta_lb)));
}

template <typename Scalar>
ScissorEvalT<Scalar> evaluate_at(const ScissorConfigT<Scalar>& c, Scalar theta) {
  return {height(c, theta), actuator_length(c, theta), actuator_force(c, theta), theta};
}

/// Inverts the actuator length on [theta_min, pi/2) by bisection; the length
/// is monotone there for every design the optimizer admits.
template <typename Scalar>
Scalar theta_for_length(const ScissorConfigT<Scalar>& c, Scalar length) {
  const Scalar half_pi = std::numbers::pi_v<Scalar> / 2;
  Scalar lo = c.theta_min;
  Scalar hi = half_pi - Scalar(1e-9);
  if (length <= actuator_length(c, lo)) return lo;
  if (length >= actuator_length(c, hi)) return hi;
  for (int k = 0; k < 200 && hi - lo > Scalar(1e-15); ++k) {
    const Scalar mid = (lo + hi) / 2;
    if (actuator_length(c, mid) < length) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return (lo + hi) / 2;
}

}  // namespace stepfarm
