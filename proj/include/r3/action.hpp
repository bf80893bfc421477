// Discrete navigation actions and their verbal rendering.
#pragma once

#include <cmath>
#include <numbers>
#include <string>

namespace r3 {

/// Which thinking system produced a step.
enum class Mode { Runner, Ruminator };

inline const char* to_string(Mode m) { return m == Mode::Runner ? "runner" : "ruminator"; }

/// Move to an adjacent viewpoint, or end the episode.
struct Action {
    enum class Kind { Move, Stop };
    Kind kind = Kind::Stop;
    std::string target;  // viewpoint id, Move only

    static Action move(std::string target) { return Action{Kind::Move, std::move(target)}; }
    static Action stop() { return Action{Kind::Stop, {}}; }
    bool is_stop() const { return kind == Kind::Stop; }

    friend bool operator==(const Action& a, const Action& b) {
        return a.kind == b.kind && a.target == b.target;
    }
};

/// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::remainder(a, two_pi);  // (-pi, pi]
    if (a >= std::numbers::pi) a -= two_pi;
    return a;
}

/// Verb for a relative heading, counter-clockwise positive.
/// forward |t| <= pi/4, left (pi/4, 3pi/4), right [-3pi/4, -pi/4), back otherwise.
inline std::string action_verb(double relative_heading) {
    constexpr double q = std::numbers::pi / 4.0;
    const double t = wrap_angle(relative_heading);
    if (std::abs(t) <= q) return "go forward to";
    if (t > q && t < 3.0 * q) return "turn left to";
    if (t >= -3.0 * q && t < -q) return "turn right to";
    return "turn back to";
}

/// "go forward to id_3", "turn left to id_7", ...
inline std::string verbalize_action(double relative_heading, const std::string& target) {
    return action_verb(relative_heading) + " " + target;
}

}  // namespace r3
