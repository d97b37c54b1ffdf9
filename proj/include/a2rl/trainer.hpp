#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "a2rl/env.hpp"
#include "a2rl/errors.hpp"
#include "a2rl/image.hpp"
#include "a2rl/net.hpp"
#include "a2rl/reward.hpp"
#include "a2rl/rng.hpp"
#include "a2rl/scorer.hpp"

namespace a2rl {

struct TrainerConfig {
    double gamma = 0.99;
    double beta = 0.05;  // entropy weight
    int t_max = 10;      // update period
    int T_max = 50;      // episode step cap
    double learning_rate = 0.0005;
    int batch_size = 32;
    double rms_decay = 0.99;
    double rms_epsilon = 1e-8;
    double grad_clip = 40.0;  // clip on the global norm of the per-stream mean gradient; <= 0 disables
    std::uint64_t seed = 0;
    std::int64_t total_steps = 0;  // lockstep ticks; each advances every stream by one transition
    int log_interval = 20;         // updates between log records

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("trainer: gamma must lie in [0,1]");
        if (!(beta >= 0.0)) throw ConfigError("trainer: beta must be >= 0");
        if (T_max < 1) throw ConfigError("trainer: Tmax must be >= 1");
        if (t_max < 1 || t_max > T_max) throw ConfigError("trainer: need 1 <= tmax <= Tmax");
        if (batch_size < 1) throw ConfigError("trainer: batch size must be >= 1");
        if (!(learning_rate > 0.0)) throw ConfigError("trainer: learning rate must be > 0");
        if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ConfigError("trainer: rms decay must lie in [0,1)");
        if (!(rms_epsilon >= 0.0)) throw ConfigError("trainer: rms epsilon must be >= 0");
        if (total_steps < 0) throw ConfigError("trainer: steps must be >= 0");
        if (log_interval < 1) throw ConfigError("trainer: log interval must be >= 1");
    }
};

/// Discounted returns of a segment by the backward recursion R <- r_i + gamma R,
/// starting from 0 when the segment ended with the termination action and
/// from the critic's bootstrap value otherwise.
inline std::vector<double> compute_returns(std::span<const double> rewards, bool terminal, double bootstrap_value,
                                           double gamma) {
    detail::require(!rewards.empty(), "compute_returns: empty segment");
    std::vector<double> out(rewards.size());
    double R = terminal ? 0.0 : bootstrap_value;
    for (std::size_t i = rewards.size(); i-- > 0;) {
        R = rewards[i] + gamma * R;
        out[i] = R;
    }
    return out;
}

struct Transition {
    std::shared_ptr<const Vec> global_input;
    Vec local_input;
    RecurrentState state;  // memory before this step
    int action = 0;
    double reward = 0.0;
    double value = 0.0;
    std::array<double, kNumActions> probs{};
};

/// Builds the tape for a segment and returns its loss and gradients.
inline BackwardResult segment_loss(std::span<const Transition> transitions, std::span<const double> returns,
                                   const PolicyParams& params, double beta) {
    detail::require(transitions.size() == returns.size(), "segment_loss: transitions and returns misaligned");
    Tape tape;
    tape.beta = beta;
    if (!transitions.empty()) tape.initial = transitions.front().state;
    else tape.initial = RecurrentState::zeros(params.config());
    tape.steps.reserve(transitions.size());
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        const Transition& tr = transitions[i];
        tape.steps.push_back({tr.global_input, tr.local_input, tr.action, returns[i], returns[i] - tr.value});
    }
    return backward(params, tape);
}

struct RmsPropState {
    PolicyParams cache;  // running mean of squared gradients
};

/// cache <- decay*cache + (1-decay)*g^2;  param <- param - lr*g/(sqrt(cache)+eps)
inline void rms_update(PolicyParams& params, const PolicyParams& grads, RmsPropState& state, double learning_rate,
                       double decay, double epsilon) {
    params.check_same_shape(grads);
    if (state.cache.config() != params.config() || state.cache[kTrunkW].size() != params[kTrunkW].size()) {
        state.cache = params.zeros_like();
    }
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        Mat& c = state.cache[id];
        const Mat& g = grads[id];
        c = decay * c + (1.0 - decay) * g.cwiseProduct(g);
        params[id].array() -= learning_rate * g.array() / (c.array().sqrt() + epsilon);
    }
}

/// What one episode runs on: an image and the scorer that defines its reward.
struct EpisodeTask {
    std::shared_ptr<const ImageRaster> image;
    std::shared_ptr<const AestheticScorer> scorer;
};

class TaskSource {
public:
    virtual ~TaskSource() = default;
    virtual EpisodeTask next(Rng& rng) const = 0;
};

/// Draws a window with w, h uniform in [lo, hi], an in-range pixel aspect
/// ratio and a uniform position.
inline CropWindow sample_target_window(Rng& rng, ImageDims dims, const RewardConfig& rc, double lo = 0.3,
                                       double hi = 0.8) {
    for (;;) {
        const double w = rng.uniform(lo, hi);
        const double h = rng.uniform(lo, hi);
        const double ar = (w * dims.width) / (h * dims.height);
        if (ar < rc.ar_low || ar > rc.ar_high) continue;
        return {rng.uniform() * (1.0 - w), rng.uniform() * (1.0 - h), w, h};
    }
}

/// Synthetic scene depicting `target` as a bright anti-aliased rectangle on a
/// dark background, so the optimum is visible to the agent.
inline ImageRaster render_target_image(const CropWindow& target, ImageDims dims, double background = 0.15,
                                       double foreground = 0.85) {
    ImageRaster img(dims.width, dims.height, 1, background);
    const double l = target.x * dims.width, r = target.right() * dims.width;
    const double t = target.y * dims.height, b = target.bottom() * dims.height;
    for (int y = 0; y < dims.height; ++y) {
        const double cy = std::max(0.0, std::min(b, y + 1.0) - std::max(t, static_cast<double>(y)));
        if (cy <= 0.0) continue;
        for (int x = 0; x < dims.width; ++x) {
            const double cx = std::max(0.0, std::min(r, x + 1.0) - std::max(l, static_cast<double>(x)));
            img.at(x, y) = background + (foreground - background) * cx * cy;
        }
    }
    return img;
}

/// Hidden-target oracle episodes: a fresh target per episode, scored by IoU.
class HiddenTargetTaskSource final : public TaskSource {
public:
    explicit HiddenTargetTaskSource(ImageDims dims = {64, 64}, RewardConfig reward = {}) : dims_(dims), reward_(reward) {}

    EpisodeTask next(Rng& rng) const override { return task_for(sample_target_window(rng, dims_, reward_)); }

    EpisodeTask task_for(const CropWindow& target) const {
        return {std::make_shared<const ImageRaster>(render_target_image(target, dims_)),
                std::make_shared<const TargetIouScorer>(target)};
    }

    ImageDims dims() const { return dims_; }

private:
    ImageDims dims_;
    RewardConfig reward_;
};

/// Images drawn uniformly with replacement, all scored by one scorer.
class ImageListTaskSource final : public TaskSource {
public:
    ImageListTaskSource(std::vector<std::shared_ptr<const ImageRaster>> images, std::shared_ptr<const AestheticScorer> scorer)
        : images_(std::move(images)), scorer_(std::move(scorer)) {
        if (images_.empty()) throw ConfigError("training needs at least one image");
    }

    EpisodeTask next(Rng& rng) const override { return {images_[rng.below(images_.size())], scorer_}; }

private:
    std::vector<std::shared_ptr<const ImageRaster>> images_;
    std::shared_ptr<const AestheticScorer> scorer_;
};

struct LogRecord {
    std::int64_t step = 0;  // lockstep ticks so far
    double mean_reward = 0.0;
    double mean_length = 0.0;
    double mean_final_score = 0.0;
    double entropy = 0.0;
};

/// Tab-separated: step, mean_reward, mean_length, mean_final_score, entropy.
inline std::string format_log_record(const LogRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%lld\t%.6f\t%.4f\t%.6f\t%.6f", static_cast<long long>(r.step), r.mean_reward,
                  r.mean_length, r.mean_final_score, r.entropy);
    return buf;
}

/// One stream's segment: transitions plus how the segment ended.
struct Segment {
    std::vector<Transition> transitions;
    bool terminal = false;  // ended by the termination action
    double bootstrap_value = 0.0;
};

struct BatchRollout {
    std::vector<Segment> segments;  // one per stream, in stream order
};

/// Mini-batch advantage actor-critic. `batch_size` episode streams advance in
/// lockstep; each update collects one segment of at most t_max steps per
/// stream, sums the per-stream gradients in stream order and applies a single
/// RMSProp step. Recurrent memory persists across segment boundaries within
/// an episode; gradients are truncated there.
class Trainer {
public:
    Trainer(TrainerConfig cfg, RewardConfig reward, PolicyParams init, std::shared_ptr<const TaskSource> tasks)
        : cfg_(cfg), reward_(reward), params_(std::move(init)), tasks_(std::move(tasks)) {
        cfg_.validate();
        reward_.validate();
        detail::require(tasks_ != nullptr, "Trainer: task source required");
        env_.max_steps = cfg_.T_max;
        opt_.cache = params_.zeros_like();
        streams_.resize(static_cast<std::size_t>(cfg_.batch_size));
        for (std::size_t s = 0; s < streams_.size(); ++s) streams_[s].rng = Rng(Rng::derive(cfg_.seed, s));
    }

    const PolicyParams& params() const { return params_; }
    const TrainerConfig& config() const { return cfg_; }
    std::int64_t ticks() const { return ticks_; }

    /// Advances every stream by up to t_max steps (never past the step budget).
    BatchRollout rollout(int max_len) {
        BatchRollout batch;
        batch.segments.reserve(streams_.size());
        for (auto& stream : streams_) batch.segments.push_back(run_segment(stream, max_len));
        ticks_ += max_len;
        return batch;
    }

    /// Segment gradient for one stream (returns computed here).
    BackwardResult segment_gradient(const Segment& seg) const {
        std::vector<double> rewards;
        rewards.reserve(seg.transitions.size());
        for (const auto& tr : seg.transitions) rewards.push_back(tr.reward);
        const auto returns = compute_returns(rewards, seg.terminal, seg.bootstrap_value, cfg_.gamma);
        return segment_loss(seg.transitions, returns, params_, cfg_.beta);
    }

    /// Sum of the per-stream segment gradients, in stream order.
    BackwardResult batch_gradient(const BatchRollout& batch) const {
        BackwardResult total{0.0, params_.zeros_like()};
        for (const auto& seg : batch.segments) {
            if (seg.transitions.empty()) continue;
            auto r = segment_gradient(seg);
            total.loss += r.loss;
            total.grads += r.grads;
        }
        return total;
    }

    void apply(PolicyParams grads) {
        if (cfg_.grad_clip > 0.0) {
            // The update sums batch_size streams; the clip bounds their mean.
            const double limit = cfg_.grad_clip * cfg_.batch_size;
            const double norm = std::sqrt(grads.squared_norm());
            if (norm > limit) grads *= limit / norm;
        }
        rms_update(params_, grads, opt_, cfg_.learning_rate, cfg_.rms_decay, cfg_.rms_epsilon);
    }

    /// Runs until total_steps ticks; `on_log` receives each periodic record.
    std::vector<LogRecord> run(const std::function<void(const LogRecord&)>& on_log = {}) {
        std::vector<LogRecord> log;
        std::int64_t updates = 0;
        while (ticks_ < cfg_.total_steps) {
            const int len = static_cast<int>(std::min<std::int64_t>(cfg_.t_max, cfg_.total_steps - ticks_));
            const BatchRollout batch = rollout(len);
            BackwardResult g = batch_gradient(batch);
            if (!std::isfinite(g.loss) || !g.grads.all_finite()) {
                throw NumericAbort("non-finite loss or gradient at step " + std::to_string(ticks_));
            }
            apply(std::move(g.grads));
            if (!params_.all_finite()) throw NumericAbort("non-finite parameters at step " + std::to_string(ticks_));
            if (++updates % cfg_.log_interval == 0 || ticks_ >= cfg_.total_steps) {
                LogRecord rec = take_stats();
                log.push_back(rec);
                if (on_log) on_log(rec);
            }
        }
        return log;
    }

private:
    struct Stream {
        Rng rng{0};
        bool active = false;
        EpisodeTask task;
        EpisodeState env;
        RecurrentState memory;
        GlobalFeatureCache global;
        double score = 0.0;
        double episode_reward = 0.0;
    };

    void begin_episode(Stream& st) {
        st.task = tasks_->next(st.rng);
        st.env = start_episode(st.task.image->dims());
        st.memory = RecurrentState::zeros(params_.config());
        st.global = {};
        st.score = st.task.scorer->score(*st.task.image, st.env.window);
        st.episode_reward = 0.0;
        st.active = true;
    }

    Segment run_segment(Stream& st, int max_len) {
        Segment seg;
        // The cached global feature depends on the parameters, which change
        // between segments.
        if (st.active) st.global.feature = encode_global(params_, *st.global.input);
        for (int k = 0; k < max_len; ++k) {
            if (!st.active) begin_episode(st);
            const ImageRaster& img = *st.task.image;
            const Observation obs = encode_observation(params_, img, st.env.window, st.global);
            PolicyOutput out = forward(params_, st.memory, obs);
            const Action a = sample_action(out.probs, st.rng);

            const EpisodeState next = episode_step(st.env, a, env_);
            double new_score = st.score;
            if (a != Action::Terminate) new_score = st.task.scorer->score(img, next.window);
            const double r = full_reward(st.score, new_score, st.env.t, aspect_ratio(next.window, img.dims()), reward_);

            seg.transitions.push_back({obs.global_input, obs.local_input, st.memory, action_id(a), r, out.value, out.probs});
            entropy_sum_ += out.entropy();
            ++entropy_count_;

            st.memory = std::move(out.next_state);
            st.env = next;
            st.score = new_score;
            st.episode_reward += r;

            if (next.terminated) {
                st.active = false;
                ++episodes_;
                reward_sum_ += st.episode_reward;
                length_sum_ += next.t;
                final_score_sum_ += st.score;
                seg.terminal = (a == Action::Terminate);
                break;
            }
        }
        if (!seg.terminal) {
            // Bootstrap from the critic at the state reached (also when the
            // step cap ended the episode without the termination action).
            const Observation obs = encode_observation(params_, *st.task.image, st.env.window, st.global);
            seg.bootstrap_value = forward(params_, st.memory, obs).value;
        }
        return seg;
    }

    LogRecord take_stats() {
        LogRecord r;
        r.step = ticks_;
        if (episodes_ > 0) {
            r.mean_reward = reward_sum_ / episodes_;
            r.mean_length = length_sum_ / episodes_;
            r.mean_final_score = final_score_sum_ / episodes_;
        }
        if (entropy_count_ > 0) r.entropy = entropy_sum_ / entropy_count_;
        episodes_ = 0;
        reward_sum_ = length_sum_ = final_score_sum_ = entropy_sum_ = 0.0;
        entropy_count_ = 0;
        return r;
    }

    TrainerConfig cfg_;
    RewardConfig reward_;
    EnvConfig env_;
    PolicyParams params_;
    RmsPropState opt_;
    std::shared_ptr<const TaskSource> tasks_;
    std::vector<Stream> streams_;
    std::int64_t ticks_ = 0;

    std::int64_t episodes_ = 0;
    double reward_sum_ = 0.0, length_sum_ = 0.0, final_score_sum_ = 0.0, entropy_sum_ = 0.0;
    std::int64_t entropy_count_ = 0;
};

struct TrainResult {
    PolicyParams params;
    std::vector<LogRecord> log;
};

inline TrainResult train(const TrainerConfig& cfg, const RewardConfig& reward, const NetConfig& net,
                         std::shared_ptr<const TaskSource> tasks, const std::function<void(const LogRecord&)>& on_log = {}) {
    Rng init_rng(Rng::derive(cfg.seed, 0xC0FFEE));
    Trainer trainer(cfg, reward, PolicyParams::initialize(net, init_rng), std::move(tasks));
    auto log = trainer.run(on_log);
    return {trainer.params(), std::move(log)};
}

}  // namespace a2rl
