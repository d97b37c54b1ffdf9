#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "a2rl/net.hpp"

namespace a2rl {

struct GradCheckOptions {
    double epsilon = 1e-5;
    // Denominator floor. At epsilon = 1e-5 a float64 objective of order 10
    // resolves differences only to ~1e-10, so components near 1e-6 would
    // report roundoff as relative error.
    double abs_floor = 1e-5;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst_tensor;
    Eigen::Index worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares `analytic` against central finite differences of tape_objective,
/// perturbing every scalar parameter by +-epsilon. Relative error is
/// |a - n| / max(|a|, |n|, abs_floor).
inline GradCheckResult grad_check(const PolicyParams& params, const Tape& tape, const PolicyParams& analytic,
                                  const GradCheckOptions& opt = {}) {
    params.check_same_shape(analytic);
    GradCheckResult res;
    PolicyParams probe = params;
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        Mat& m = probe[id];
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double orig = m.data()[i];
            m.data()[i] = orig + opt.epsilon;
            const double up = tape_objective(probe, tape);
            m.data()[i] = orig - opt.epsilon;
            const double down = tape_objective(probe, tape);
            m.data()[i] = orig;

            const double numeric = (up - down) / (2.0 * opt.epsilon);
            const double a = analytic[id].data()[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), opt.abs_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++res.checked;
            res.max_abs_error = std::max(res.max_abs_error, std::abs(a - numeric));
            if (rel > res.max_rel_error) {
                res.max_rel_error = rel;
                res.worst_tensor = std::string(kParamNames[id]);
                res.worst_index = i;
                res.worst_analytic = a;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

/// Checks backward() itself.
inline GradCheckResult grad_check(const PolicyParams& params, const Tape& tape, const GradCheckOptions& opt = {}) {
    return grad_check(params, tape, backward(params, tape).grads, opt);
}

}  // namespace a2rl
