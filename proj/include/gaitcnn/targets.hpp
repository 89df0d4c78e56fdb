#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

#include "gaitcnn/errors.hpp"

namespace gaitcnn {

/// The five parameters regressed by the networks, in their fixed order.
enum class CnnTarget : std::size_t { stride_length = 0, stride_width, foot_angle, heel_contact_time, toe_contact_time };

inline constexpr std::size_t kCnnTargetCount = 5;
inline constexpr std::array<CnnTarget, kCnnTargetCount> kCnnTargets{
    CnnTarget::stride_length, CnnTarget::stride_width, CnnTarget::foot_angle, CnnTarget::heel_contact_time,
    CnnTarget::toe_contact_time};

/// The three parameters computed from gait events.
enum class EventTarget : std::size_t { stride_time = 0, swing_time, stance_time };
inline constexpr std::array<EventTarget, 3> kEventTargets{EventTarget::stride_time, EventTarget::swing_time,
                                                          EventTarget::stance_time};

inline constexpr std::string_view name(CnnTarget t) {
  constexpr std::array<std::string_view, kCnnTargetCount> names{"stride_length", "stride_width", "foot_angle",
                                                                "heel_contact_time", "toe_contact_time"};
  return names[static_cast<std::size_t>(t)];
}
inline constexpr std::string_view unit(CnnTarget t) {
  constexpr std::array<std::string_view, kCnnTargetCount> units{"cm", "cm", "deg", "s", "s"};
  return units[static_cast<std::size_t>(t)];
}
inline constexpr std::string_view name(EventTarget t) {
  constexpr std::array<std::string_view, 3> names{"stride_time", "swing_time", "stance_time"};
  return names[static_cast<std::size_t>(t)];
}

inline CnnTarget cnn_target_from_name(std::string_view n) {
  for (auto t : kCnnTargets)
    if (name(t) == n) return t;
  throw ValidationError("unknown CNN target '" + std::string(n) + "'");
}

/// Reference or estimated parameters of one stride. Times in seconds.
struct GaitTargets {
  double stride_length_cm = 0.0;
  double stride_width_cm = 0.0;  // positive towards the lateral side of the shoe
  double foot_angle_deg = 0.0;
  double stride_time_s = 0.0;
  double swing_time_s = 0.0;
  double stance_time_s = 0.0;
  double heel_contact_s = 0.0;
  double toe_contact_s = 0.0;

  [[nodiscard]] double cnn(CnnTarget t) const {
    switch (t) {
      case CnnTarget::stride_length: return stride_length_cm;
      case CnnTarget::stride_width: return stride_width_cm;
      case CnnTarget::foot_angle: return foot_angle_deg;
      case CnnTarget::heel_contact_time: return heel_contact_s;
      case CnnTarget::toe_contact_time: return toe_contact_s;
    }
    return 0.0;
  }
  [[nodiscard]] double event(EventTarget t) const {
    switch (t) {
      case EventTarget::stride_time: return stride_time_s;
      case EventTarget::swing_time: return swing_time_s;
      case EventTarget::stance_time: return stance_time_s;
    }
    return 0.0;
  }

  friend bool operator==(const GaitTargets&, const GaitTargets&) = default;
};

}  // namespace gaitcnn
