#pragma once

#include "a2rl/errors.hpp"

namespace a2rl {

struct RewardConfig {
    double nr = -5.0;                  // aspect-ratio penalty
    double step_penalty_coeff = 0.001;
    double ar_low = 0.5;
    double ar_high = 2.0;

    void validate() const {
        if (!(nr <= 0.0)) throw ConfigError("reward: nr must be <= 0");
        if (!(step_penalty_coeff >= 0.0)) throw ConfigError("reward: step penalty must be >= 0");
        if (!(ar_low > 0.0 && ar_low < ar_high)) throw ConfigError("reward: need 0 < ar_low < ar_high");
    }
};

/// sign() with sign(0) == 0.
inline constexpr double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Sign of the score change minus a penalty growing with the step index t
/// (t counts from 0).
inline double base_reward(double score_prev, double score_new, int t, const RewardConfig& cfg = {}) {
    detail::require(t >= 0, "base_reward: step index must be non-negative");
    return sign_of(score_new - score_prev) - cfg.step_penalty_coeff * (t + 1);
}

/// Adds nr when the new window's aspect ratio leaves [ar_low, ar_high]. The
/// bounds themselves are not penalized.
inline double full_reward(double score_prev, double score_new, int t, double ar, const RewardConfig& cfg = {}) {
    detail::require(ar > 0.0, "full_reward: aspect ratio must be positive");
    const double r = base_reward(score_prev, score_new, t, cfg);
    return (ar < cfg.ar_low || ar > cfg.ar_high) ? r + cfg.nr : r;
}

/// The termination action keeps the window, so only the step penalty applies.
inline double termination_reward(int t, const RewardConfig& cfg = {}) {
    detail::require(t >= 0, "termination_reward: step index must be non-negative");
    return -cfg.step_penalty_coeff * (t + 1);
}

}  // namespace a2rl
