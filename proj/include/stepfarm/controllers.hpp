// Tick-level control laws: scissor pitch PID with gain adaptation, pure pursuit
// with yaw-rate damping, differential wheel split, seed metering and sprayer
// valve sequencing.
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "stepfarm/scissor.hpp"

namespace stepfarm {

// ---------------------------------------------------------------- pitch

struct PitchPidState {
  double k_p{0.5};
  double k_i{0.2};
  double k_d{0.1};
  double gamma_p{0.0};
  double gamma_i{0.0};
  double gamma_d{0.0};
  double k_p_cap{5.0};
  double k_i_cap{5.0};
  double k_d_cap{2.0};

  double integral{0.0};      // rad*s, clamped to +-integral_max
  double integral_max{0.02};
  double e_prev{0.0};
  bool has_prev{false};

  double e_m{0.0};     // low-passed error
  double edot_m{0.0};  // low-passed error rate
  double tau_filter{0.2};

  double c1{0.04};          // nominal total lift rate, m/s
  double c2{0.5};
  double rate_limit{0.05};  // per actuator, m/s

  void validate() const;
};

struct ActuatorRates {
  double A_f{0.0};
  double A_b{0.0};
};

/// One tick of the pitch loop. The error is e = -theta (nose-up pitch is
/// positive), so a nose-up chassis gets A_f < A_b. Returns saturated rates;
/// when the limits bind, the difference channel is kept and the sum gives way.
ActuatorRates pitch_control(double theta_meas, double dv, PitchPidState& st, double dt);

/// Gain adaptation on the error stream:
///   k_p += gamma_p (e - e_m),  k_i += gamma_i e_m,  k_d += gamma_d (edot - edot_m)
/// using the filter values from before this sample; the filters then absorb
/// (e, edot) with time constant tau_filter. Gains are clamped to [0, cap].
void adapt_gains(double e, double edot, PitchPidState& st, double dt);

/// pitch_control followed by adapt_gains on the same sample.
ActuatorRates pitch_tick(double theta_meas, double dv, PitchPidState& st, double dt);

// ---------------------------------------------------------------- tracking

struct PursuitParams {
  double l0{0.5};        // base look-ahead, m
  double beta{0.3};      // look-ahead per unit speed, s
  double k_dyaw{0.5};    // yaw-rate damping gain, s
  double wheelbase{0.6}; // L, m
  double delta_max{deg2rad(40.0)};
};

inline double lookahead(double v, const PursuitParams& p) { return p.l0 + p.beta * std::abs(v); }

/// atan(2 L sin(alpha) / l_d), no damping and no clamp.
double pursuit_steer_undamped(double alpha, double v, const PursuitParams& p);

/// Damped steering angle, clamped to +-delta_max.
double pursuit_steer(double alpha, double v, double r_ref, double r, const PursuitParams& p);

struct WheelSpeeds {
  double v_l{0.0};
  double v_r{0.0};
};

/// omega = 2 v sin(alpha) / l_d split over a track of width L.
WheelSpeeds wheel_speeds(double v, double alpha, double l_d, double L);

/// Split for an arbitrary steering angle: omega = v tan(delta) / L.
WheelSpeeds wheel_speeds_from_steer(double v, double delta, double L);

// ---------------------------------------------------------------- tools

struct SeederParams {
  int n_t{10};
  double d_sep{0.1};
  double alpha_step{deg2rad(1.8)};  // rad per pulse
  double r_inner{0.03};             // carried for completeness; not in the rate law
};

struct SeedRate {
  double omega{0.0};   // rev/s
  double pulses{0.0};  // pulses/s
  double rpm() const { return omega * 60.0; }
};

/// omega = v / (n_t d); pulses = 2 pi omega / alpha_step. With product_form the
/// pulse rate is omega * alpha_step, which is not unit-consistent.
SeedRate seed_rate(double v, const SeederParams& p, bool product_form = false);

enum class SprayMode { kOff, kWater, kPesticide };

struct SprayerState {
  bool water_valve{false};
  bool pesticide_valve{false};
  double pump_duty{0.0};
};

class SprayerConflict : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Next valve/pump state for a command. Changing tanks spends one tick with
/// both valves closed and the pump off.
SprayerState sprayer_select(SprayMode mode, double duty, const SprayerState& prev);

/// Raw two-flag request; asking for both tanks throws SprayerConflict.
SprayerState sprayer_select(bool water, bool pesticide, double duty, const SprayerState& prev);

}  // namespace stepfarm
