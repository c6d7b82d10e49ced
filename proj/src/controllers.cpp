#include "stepfarm/controllers.hpp"

#include <algorithm>
#include <cmath>

namespace stepfarm {

void PitchPidState::validate() const {
  if (!(tau_filter > 0.0)) throw std::invalid_argument("pitch filter time constant must be positive");
  if (k_p < 0 || k_i < 0 || k_d < 0) throw std::invalid_argument("PID gains must be non-negative");
  if (k_p > k_p_cap || k_i > k_i_cap || k_d > k_d_cap) throw std::invalid_argument("PID gains exceed their caps");
  if (!(rate_limit > 0.0)) throw std::invalid_argument("actuator rate limit must be positive");
  if (!(integral_max >= 0.0)) throw std::invalid_argument("integral clamp must be non-negative");
}

ActuatorRates pitch_control(double theta_meas, double dv, PitchPidState& st, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pitch_control needs dt > 0");
  const double e = -theta_meas;
  const double edot = st.has_prev ? (e - st.e_prev) / dt : 0.0;
  st.integral = std::clamp(st.integral + e * dt, -st.integral_max, st.integral_max);
  st.e_prev = e;
  st.has_prev = true;

  const double diff = st.k_p * e + st.k_i * st.integral + st.k_d * edot;
  const double sum = st.c1 - st.c2 * dv;

  const double lim = st.rate_limit;
  const double d = std::clamp(diff, -2.0 * lim, 2.0 * lim);
  const double room = 2.0 * lim - std::abs(d);
  const double s = std::clamp(sum, -room, room);
  return {(s + d) / 2.0, (s - d) / 2.0};
}

void adapt_gains(double e, double edot, PitchPidState& st, double dt) {
  st.k_p = std::clamp(st.k_p + st.gamma_p * (e - st.e_m), 0.0, st.k_p_cap);
  st.k_i = std::clamp(st.k_i + st.gamma_i * st.e_m, 0.0, st.k_i_cap);
  st.k_d = std::clamp(st.k_d + st.gamma_d * (edot - st.edot_m), 0.0, st.k_d_cap);
  const double w = 1.0 - std::exp(-dt / st.tau_filter);
  st.e_m += w * (e - st.e_m);
  st.edot_m += w * (edot - st.edot_m);
}

ActuatorRates pitch_tick(double theta_meas, double dv, PitchPidState& st, double dt) {
  const double e_before = st.e_prev;
  const bool had_prev = st.has_prev;
  const ActuatorRates out = pitch_control(theta_meas, dv, st, dt);
  const double e = -theta_meas;
  adapt_gains(e, had_prev ? (e - e_before) / dt : 0.0, st, dt);
  return out;
}

double pursuit_steer_undamped(double alpha, double v, const PursuitParams& p) {
  const double ld = lookahead(v, p);
  if (!(ld > 0.0)) throw std::invalid_argument("look-ahead distance must be positive");
  return std::atan(2.0 * p.wheelbase * std::sin(alpha) / ld);
}

double pursuit_steer(double alpha, double v, double r_ref, double r, const PursuitParams& p) {
  const double delta = pursuit_steer_undamped(alpha, v, p) + p.k_dyaw * (r_ref - r);
  return std::clamp(delta, -p.delta_max, p.delta_max);
}

WheelSpeeds wheel_speeds(double v, double alpha, double l_d, double L) {
  if (!(l_d > 0.0)) throw std::invalid_argument("look-ahead distance must be positive");
  const double omega = 2.0 * v * std::sin(alpha) / l_d;
  return {v - omega * L / 2.0, v + omega * L / 2.0};
}

WheelSpeeds wheel_speeds_from_steer(double v, double delta, double L) {
  const double omega = v * std::tan(delta) / L;
  return {v - omega * L / 2.0, v + omega * L / 2.0};
}

SeedRate seed_rate(double v, const SeederParams& p, bool product_form) {
  if (!(v >= 0.0)) throw std::invalid_argument("seeder speed must be non-negative");
  if (p.n_t < 1 || !(p.d_sep > 0.0) || !(p.alpha_step > 0.0)) throw std::invalid_argument("bad seeder parameters");
  SeedRate out;
  out.omega = v / (p.n_t * p.d_sep);
  out.pulses = product_form ? out.omega * p.alpha_step : 2.0 * std::numbers::pi * out.omega / p.alpha_step;
  return out;
}

SprayerState sprayer_select(SprayMode mode, double duty, const SprayerState& prev) {
  if (!(duty >= 0.0 && duty <= 1.0)) throw std::invalid_argument("pump duty must lie in [0, 1]");
  SprayerState next;
  if (mode == SprayMode::kOff) return next;
  const bool want_water = mode == SprayMode::kWater;
  const bool other_open = want_water ? prev.pesticide_valve : prev.water_valve;
  if (other_open) return next;  // break before make
  next.water_valve = want_water;
  next.pesticide_valve = !want_water;
  next.pump_duty = duty;
  return next;
}

SprayerState sprayer_select(bool water, bool pesticide, double duty, const SprayerState& prev) {
  if (water && pesticide) throw SprayerConflict("water and pesticide requested together");
  const SprayMode m = water ? SprayMode::kWater : pesticide ? SprayMode::kPesticide : SprayMode::kOff;
  return sprayer_select(m, duty, prev);
}

}  // namespace stepfarm
