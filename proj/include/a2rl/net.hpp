#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "a2rl/env.hpp"
#include "a2rl/errors.hpp"
#include "a2rl/image.hpp"
#include "a2rl/rng.hpp"

namespace a2rl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class EncoderKind { Pixel, Coordinate };

inline std::string_view encoder_name(EncoderKind k) { return k == EncoderKind::Pixel ? "pixel" : "coordinate"; }

inline EncoderKind parse_encoder(std::string_view s) {
    if (s == "pixel") return EncoderKind::Pixel;
    if (s == "coordinate") return EncoderKind::Coordinate;
    throw ConfigError("unknown encoder '" + std::string(s) + "' (expected pixel|coordinate)");
}

struct NetConfig {
    int feature_dim = 64;  // d: length of each of the global and local features
    int hidden = 128;
    EncoderKind encoder = EncoderKind::Pixel;
    bool recurrent = true;  // false: heads read the trunk directly, memory untouched
    int grid = 16;          // side of the area-averaged patch grid

    int global_inputs() const { return grid * grid; }
    int local_inputs() const { return encoder == EncoderKind::Pixel ? grid * grid : 8; }

    void validate() const {
        if (feature_dim < 1 || hidden < 1 || grid < 1) throw ConfigError("net: sizes must be positive");
    }

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

enum ParamId : std::size_t {
    kGlobalW, kGlobalB,
    kLocalW, kLocalB,
    kTrunkW, kTrunkB,
    kLstmWx, kLstmWh, kLstmB,
    kPolicyW, kPolicyB,
    kValueW, kValueB,
    kNumParamTensors
};

inline constexpr std::array<std::string_view, kNumParamTensors> kParamNames = {
    "global_encoder.weight", "global_encoder.bias", "local_encoder.weight", "local_encoder.bias",
    "trunk.weight",          "trunk.bias",          "lstm.weight_input",    "lstm.weight_hidden",
    "lstm.bias",             "policy.weight",       "policy.bias",          "value.weight",
    "value.bias"};

/// All learnable tensors. Actor and critic share the encoders, trunk and
/// recurrent cell; only the two heads are separate. With the recurrent cell
/// disabled its tensors are empty.
class PolicyParams {
public:
    PolicyParams() = default;

    static PolicyParams zeros(const NetConfig& cfg) {
        cfg.validate();
        PolicyParams p;
        p.config_ = cfg;
        const int d = cfg.feature_dim;
        const int H = cfg.hidden;
        const int rH = cfg.recurrent ? H : 0;
        p.t_[kGlobalW] = Mat::Zero(d, cfg.global_inputs());
        p.t_[kGlobalB] = Mat::Zero(d, 1);
        p.t_[kLocalW] = Mat::Zero(d, cfg.local_inputs());
        p.t_[kLocalB] = Mat::Zero(d, 1);
        p.t_[kTrunkW] = Mat::Zero(H, 2 * d);
        p.t_[kTrunkB] = Mat::Zero(H, 1);
        p.t_[kLstmWx] = Mat::Zero(4 * rH, rH);
        p.t_[kLstmWh] = Mat::Zero(4 * rH, rH);
        p.t_[kLstmB] = Mat::Zero(4 * rH, cfg.recurrent ? 1 : 0);
        p.t_[kPolicyW] = Mat::Zero(kNumActions, H);
        p.t_[kPolicyB] = Mat::Zero(kNumActions, 1);
        p.t_[kValueW] = Mat::Zero(1, H);
        p.t_[kValueB] = Mat::Zero(1, 1);
        return p;
    }

    /// Weights uniform in [-k, k] with k = 1/sqrt(fan_in); biases zero except
    /// the forget gate (1). Heads are scaled by 0.01 so the initial policy is
    /// close to uniform.
    static PolicyParams initialize(const NetConfig& cfg, Rng& rng) {
        PolicyParams p = zeros(cfg);
        auto fill = [&rng](Mat& m, double scale) {
            const double k = scale / std::sqrt(static_cast<double>(m.cols()));
            for (Eigen::Index j = 0; j < m.cols(); ++j)
                for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(-k, k);
        };
        fill(p.t_[kGlobalW], 1.0);
        fill(p.t_[kLocalW], 1.0);
        fill(p.t_[kTrunkW], 1.0);
        if (cfg.recurrent) {
            fill(p.t_[kLstmWx], 1.0);
            fill(p.t_[kLstmWh], 1.0);
            p.t_[kLstmB].block(cfg.hidden, 0, cfg.hidden, 1).setOnes();
        }
        fill(p.t_[kPolicyW], 0.01);
        fill(p.t_[kValueW], 0.01);
        return p;
    }

    PolicyParams zeros_like() const { return zeros(config_); }

    const NetConfig& config() const { return config_; }

    Mat& operator[](std::size_t id) { return t_[id]; }
    const Mat& operator[](std::size_t id) const { return t_[id]; }

    std::size_t num_scalars() const {
        std::size_t n = 0;
        for (const auto& m : t_) n += static_cast<std::size_t>(m.size());
        return n;
    }

    void set_zero() {
        for (auto& m : t_) m.setZero();
    }

    PolicyParams& operator+=(const PolicyParams& o) {
        check_same_shape(o);
        for (std::size_t i = 0; i < kNumParamTensors; ++i) t_[i] += o.t_[i];
        return *this;
    }

    PolicyParams& operator*=(double s) {
        for (auto& m : t_) m *= s;
        return *this;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& m : t_) s += m.squaredNorm();
        return s;
    }

    bool all_finite() const {
        for (const auto& m : t_)
            if (!m.allFinite()) return false;
        return true;
    }

    void check_same_shape(const PolicyParams& o) const {
        for (std::size_t i = 0; i < kNumParamTensors; ++i) {
            if (t_[i].rows() != o.t_[i].rows() || t_[i].cols() != o.t_[i].cols()) {
                throw ContractViolation("parameter shape mismatch in " + std::string(kParamNames[i]));
            }
        }
    }

private:
    NetConfig config_{};
    std::array<Mat, kNumParamTensors> t_{};
};

/// Hidden and cell vectors of the recurrent cell.
struct RecurrentState {
    Vec h;
    Vec c;

    static RecurrentState zeros(const NetConfig& cfg) {
        const int n = cfg.recurrent ? cfg.hidden : 0;
        return {Vec::Zero(n), Vec::Zero(n)};
    }
};

/// Raw encoder inputs plus their encoded features. The global input is shared
/// by every step of an episode.
struct Observation {
    std::shared_ptr<const Vec> global_input;
    Vec local_input;
    Vec global_feature;
    Vec local_feature;
};

/// Per-episode cache of the global feature, filled on first use.
struct GlobalFeatureCache {
    std::shared_ptr<const Vec> input;
    Vec feature;
};

namespace detail {

inline Vec centered_grid(const ImageRaster& img, const CropWindow& win, int grid) {
    const auto cells = area_average_grid(img, win, grid);
    Vec v(static_cast<Eigen::Index>(cells.size()));
    for (std::size_t i = 0; i < cells.size(); ++i) v[static_cast<Eigen::Index>(i)] = 2.0 * cells[i] - 1.0;
    return v;
}

inline Vec sigmoid(const Vec& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

}  // namespace detail

/// Gain on the centered copy of the coordinates. Raw coordinates alone move
/// too little per 0.05 step for RMSProp at small learning rates to resolve.
inline constexpr double kCoordinateGain = 8.0;

/// Raw local input: the window coordinates followed by a centered, amplified
/// copy (coordinate encoder), or the centered area-averaged luma grid of the
/// crop (pixel encoder).
inline Vec local_encoder_input(const NetConfig& cfg, const ImageRaster& image, const CropWindow& win) {
    if (cfg.encoder == EncoderKind::Coordinate) {
        Vec v(8);
        v << win.x, win.y, win.w, win.h, kCoordinateGain * (win.x - 0.5), kCoordinateGain * (win.y - 0.5),
            kCoordinateGain * (win.w - 0.5), kCoordinateGain * (win.h - 0.5);
        return v;
    }
    return detail::centered_grid(image, win, cfg.grid);
}

inline Vec global_encoder_input(const NetConfig& cfg, const ImageRaster& image) {
    return detail::centered_grid(image, CropWindow::full(), cfg.grid);
}

inline Vec encode_global(const PolicyParams& p, const Vec& input) {
    return (p[kGlobalW] * input + p[kGlobalB].col(0)).array().tanh().matrix();
}

inline Vec encode_local(const PolicyParams& p, const Vec& input) {
    return (p[kLocalW] * input + p[kLocalB].col(0)).array().tanh().matrix();
}

/// Global feature from the whole image (computed once per episode through
/// `cache`) and local feature from the current crop.
inline Observation encode_observation(const PolicyParams& p, const ImageRaster& image, const CropWindow& win,
                                      GlobalFeatureCache& cache) {
    const NetConfig& cfg = p.config();
    if (!cache.input) {
        cache.input = std::make_shared<const Vec>(global_encoder_input(cfg, image));
        cache.feature = encode_global(p, *cache.input);
    }
    Observation obs;
    obs.global_input = cache.input;
    obs.global_feature = cache.feature;
    obs.local_input = local_encoder_input(cfg, image, win);
    obs.local_feature = encode_local(p, obs.local_input);
    return obs;
}

struct PolicyOutput {
    std::array<double, kNumActions> probs{};
    std::array<double, kNumActions> log_probs{};
    double value = 0.0;
    RecurrentState next_state;

    double entropy() const {
        double h = 0.0;
        for (int a = 0; a < kNumActions; ++a) h -= probs[static_cast<std::size_t>(a)] * log_probs[static_cast<std::size_t>(a)];
        return h;
    }
};

/// Numerically stable softmax; also returns log-probabilities.
inline void softmax(const Vec& logits, std::array<double, kNumActions>& probs, std::array<double, kNumActions>& log_probs) {
    detail::require(logits.size() == kNumActions, "softmax: expected 14 logits");
    const double mx = logits.maxCoeff();
    double sum = 0.0;
    for (int a = 0; a < kNumActions; ++a) sum += std::exp(logits[a] - mx);
    const double log_z = mx + std::log(sum);
    for (int a = 0; a < kNumActions; ++a) {
        log_probs[static_cast<std::size_t>(a)] = logits[a] - log_z;
        probs[static_cast<std::size_t>(a)] = std::exp(log_probs[static_cast<std::size_t>(a)]);
    }
}

namespace detail {

inline void check_forward_shapes(const PolicyParams& p, const RecurrentState& s, const Vec& g, const Vec& l) {
    const NetConfig& cfg = p.config();
    const int n = cfg.recurrent ? cfg.hidden : 0;
    require(s.h.size() == n && s.c.size() == n, "forward: recurrent state has wrong size");
    require(g.size() == cfg.feature_dim && l.size() == cfg.feature_dim, "forward: feature has wrong size");
}

}  // namespace detail

/// Shared trunk -> recurrent cell -> policy softmax and value.
inline PolicyOutput forward_features(const PolicyParams& p, const RecurrentState& state, const Vec& global_feature,
                                     const Vec& local_feature) {
    detail::check_forward_shapes(p, state, global_feature, local_feature);
    const NetConfig& cfg = p.config();
    const int d = cfg.feature_dim;
    const int H = cfg.hidden;

    Vec o(2 * d);
    o << global_feature, local_feature;
    const Vec u = (p[kTrunkW] * o + p[kTrunkB].col(0)).array().tanh().matrix();

    PolicyOutput out;
    Vec h;
    if (cfg.recurrent) {
        const Vec z = p[kLstmWx] * u + p[kLstmWh] * state.h + p[kLstmB].col(0);
        const Vec ig = detail::sigmoid(z.segment(0, H));
        const Vec fg = detail::sigmoid(z.segment(H, H));
        const Vec gg = z.segment(2 * H, H).array().tanh().matrix();
        const Vec og = detail::sigmoid(z.segment(3 * H, H));
        Vec c = fg.cwiseProduct(state.c) + ig.cwiseProduct(gg);
        h = og.cwiseProduct(c.array().tanh().matrix());
        out.next_state = {h, std::move(c)};
    } else {
        h = u;
        out.next_state = state;
    }
    const Vec logits = p[kPolicyW] * h + p[kPolicyB].col(0);
    softmax(logits, out.probs, out.log_probs);
    out.value = (p[kValueW] * h)(0) + p[kValueB](0, 0);
    return out;
}

inline PolicyOutput forward(const PolicyParams& p, const RecurrentState& state, const Observation& obs) {
    return forward_features(p, state, obs.global_feature, obs.local_feature);
}

/// Categorical sample by inverse CDF.
inline Action sample_action(const std::array<double, kNumActions>& probs, Rng& rng) {
    const double u = rng.uniform();
    double acc = 0.0;
    int last_positive = 0;
    for (int a = 0; a < kNumActions; ++a) {
        const double pa = probs[static_cast<std::size_t>(a)];
        if (pa > 0.0) last_positive = a;
        acc += pa;
        if (u < acc) return action_from_id(a);
    }
    return action_from_id(last_positive);  // rounding left u >= sum
}

/// Argmax with ties resolved to the lowest id.
inline Action greedy_action(const std::array<double, kNumActions>& probs) {
    int best = 0;
    for (int a = 1; a < kNumActions; ++a)
        if (probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(best)]) best = a;
    return action_from_id(best);
}

/// One step of a training segment: raw inputs (re-encoded during the backward
/// pass), the taken action, its return and the frozen advantage.
struct TapeStep {
    std::shared_ptr<const Vec> global_input;
    Vec local_input;
    int action = 0;
    double ret = 0.0;        // R_t
    double advantage = 0.0;  // R_t - V_t at rollout time, treated as a constant
};

struct Tape {
    RecurrentState initial;  // memory entering the segment; gradients stop here
    std::vector<TapeStep> steps;
    double beta = 0.0;
};

/// Segment objective evaluated with forward passes only:
///   sum_t  -log pi(a_t) * A_t  -  beta * H(pi_t)  +  (R_t - V_t)^2 / 2
/// This is the reference the analytic gradients are checked against.
inline double tape_objective(const PolicyParams& p, const Tape& tape) {
    RecurrentState state = tape.initial;
    double loss = 0.0;
    for (const auto& step : tape.steps) {
        const Vec g = encode_global(p, *step.global_input);
        const Vec l = encode_local(p, step.local_input);
        PolicyOutput out = forward_features(p, state, g, l);
        const double dv = step.ret - out.value;
        loss += -out.log_probs[static_cast<std::size_t>(step.action)] * step.advantage - tape.beta * out.entropy() +
                0.5 * dv * dv;
        state = std::move(out.next_state);
    }
    return loss;
}

struct BackwardResult {
    double loss = 0.0;
    PolicyParams grads;
};

/// Exact gradients of tape_objective by backpropagation through time over
/// the segment. The advantage is a constant, so the policy term sends no
/// gradient into the value head.
inline BackwardResult backward(const PolicyParams& p, const Tape& tape) {
    const NetConfig& cfg = p.config();
    const int d = cfg.feature_dim;
    const int H = cfg.hidden;
    BackwardResult res{0.0, p.zeros_like()};
    PolicyParams& gr = res.grads;
    const std::size_t T = tape.steps.size();
    if (T == 0) return res;

    detail::require(tape.initial.h.size() == (cfg.recurrent ? H : 0), "backward: tape/params mismatch");

    struct Cache {
        Vec g, l, o, u, h_prev, c_prev, ig, fg, gg, og, c, h;
        std::array<double, kNumActions> probs{}, log_probs{};
        double value = 0.0;
    };
    std::vector<Cache> cache(T);

    RecurrentState state = tape.initial;
    for (std::size_t t = 0; t < T; ++t) {
        const TapeStep& step = tape.steps[t];
        detail::require(step.action >= 0 && step.action < kNumActions, "backward: invalid action in tape");
        detail::require(step.global_input && step.global_input->size() == cfg.global_inputs() &&
                            step.local_input.size() == cfg.local_inputs(),
                        "backward: tape/params mismatch");
        Cache& k = cache[t];
        k.g = encode_global(p, *step.global_input);
        k.l = encode_local(p, step.local_input);
        k.o.resize(2 * d);
        k.o << k.g, k.l;
        k.u = (p[kTrunkW] * k.o + p[kTrunkB].col(0)).array().tanh().matrix();
        if (cfg.recurrent) {
            k.h_prev = state.h;
            k.c_prev = state.c;
            const Vec z = p[kLstmWx] * k.u + p[kLstmWh] * k.h_prev + p[kLstmB].col(0);
            k.ig = detail::sigmoid(z.segment(0, H));
            k.fg = detail::sigmoid(z.segment(H, H));
            k.gg = z.segment(2 * H, H).array().tanh().matrix();
            k.og = detail::sigmoid(z.segment(3 * H, H));
            k.c = k.fg.cwiseProduct(k.c_prev) + k.ig.cwiseProduct(k.gg);
            k.h = k.og.cwiseProduct(k.c.array().tanh().matrix());
            state = {k.h, k.c};
        } else {
            k.h = k.u;
        }
        const Vec logits = p[kPolicyW] * k.h + p[kPolicyB].col(0);
        softmax(logits, k.probs, k.log_probs);
        k.value = (p[kValueW] * k.h)(0) + p[kValueB](0, 0);
    }

    Vec dh_next = Vec::Zero(cfg.recurrent ? H : 0);
    Vec dc_next = Vec::Zero(cfg.recurrent ? H : 0);
    for (std::size_t ti = T; ti-- > 0;) {
        const TapeStep& step = tape.steps[ti];
        const Cache& k = cache[ti];

        double entropy = 0.0;
        for (int a = 0; a < kNumActions; ++a) entropy -= k.probs[static_cast<std::size_t>(a)] * k.log_probs[static_cast<std::size_t>(a)];
        const double dv = k.value - step.ret;
        res.loss += -k.log_probs[static_cast<std::size_t>(step.action)] * step.advantage - tape.beta * entropy + 0.5 * dv * dv;

        // d/dz of -log pi(a) * A is A (pi - e_a); d/dz of -beta H is beta pi (log pi + H).
        Vec dlogits(kNumActions);
        for (int a = 0; a < kNumActions; ++a) {
            const double pa = k.probs[static_cast<std::size_t>(a)];
            dlogits[a] = step.advantage * (pa - (a == step.action ? 1.0 : 0.0)) +
                         tape.beta * pa * (k.log_probs[static_cast<std::size_t>(a)] + entropy);
        }
        gr[kPolicyW].noalias() += dlogits * k.h.transpose();
        gr[kPolicyB].col(0) += dlogits;
        gr[kValueW].row(0) += dv * k.h.transpose();
        gr[kValueB](0, 0) += dv;

        Vec dh = p[kPolicyW].transpose() * dlogits + dv * p[kValueW].row(0).transpose();
        Vec du;
        if (cfg.recurrent) {
            dh += dh_next;
            const Vec tc = k.c.array().tanh().matrix();
            const Vec dog = dh.cwiseProduct(tc);
            const Vec dc = dh.cwiseProduct(k.og).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_next;
            Vec dz(4 * H);
            dz.segment(0, H) = dc.cwiseProduct(k.gg).cwiseProduct(k.ig.cwiseProduct((1.0 - k.ig.array()).matrix()));
            dz.segment(H, H) = dc.cwiseProduct(k.c_prev).cwiseProduct(k.fg.cwiseProduct((1.0 - k.fg.array()).matrix()));
            dz.segment(2 * H, H) = dc.cwiseProduct(k.ig).cwiseProduct((1.0 - k.gg.array().square()).matrix());
            dz.segment(3 * H, H) = dog.cwiseProduct(k.og.cwiseProduct((1.0 - k.og.array()).matrix()));
            gr[kLstmWx].noalias() += dz * k.u.transpose();
            gr[kLstmWh].noalias() += dz * k.h_prev.transpose();
            gr[kLstmB].col(0) += dz;
            du = p[kLstmWx].transpose() * dz;
            dh_next = p[kLstmWh].transpose() * dz;
            dc_next = dc.cwiseProduct(k.fg);
        } else {
            du = dh;
        }

        const Vec dpre_u = du.cwiseProduct((1.0 - k.u.array().square()).matrix());
        gr[kTrunkW].noalias() += dpre_u * k.o.transpose();
        gr[kTrunkB].col(0) += dpre_u;
        const Vec dobs = p[kTrunkW].transpose() * dpre_u;

        const Vec dpre_g = dobs.segment(0, d).cwiseProduct((1.0 - k.g.array().square()).matrix());
        const Vec dpre_l = dobs.segment(d, d).cwiseProduct((1.0 - k.l.array().square()).matrix());
        gr[kGlobalW].noalias() += dpre_g * step.global_input->transpose();
        gr[kGlobalB].col(0) += dpre_g;
        gr[kLocalW].noalias() += dpre_l * step.local_input.transpose();
        gr[kLocalB].col(0) += dpre_l;
    }
    return res;
}

}  // namespace a2rl
