#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "a2rl/grad_check.hpp"
#include "a2rl/trainer.hpp"

using namespace a2rl;

namespace {

NetConfig small_net() {
    NetConfig c;
    c.feature_dim = 8;
    c.hidden = 16;
    c.grid = 4;
    c.encoder = EncoderKind::Coordinate;
    return c;
}

TrainerConfig quick_trainer(std::int64_t ticks, int batch = 4) {
    TrainerConfig t;
    t.total_steps = ticks;
    t.batch_size = batch;
    t.seed = 3;
    t.log_interval = 2;
    return t;
}

std::shared_ptr<const TaskSource> scenes() { return std::make_shared<HiddenTargetTaskSource>(ImageDims{24, 24}); }

}  // namespace

TEST(Returns, Examples) {
    const std::vector<double> r1{1.0, -0.5};
    const auto a = compute_returns(r1, true, 123.0, 0.99);
    EXPECT_NEAR(a[0], 0.505, 1e-15);
    EXPECT_NEAR(a[1], -0.5, 1e-15);

    const std::vector<double> r2{0.0};
    EXPECT_NEAR(compute_returns(r2, false, 2.0, 0.99)[0], 1.98, 1e-15);

    const std::vector<double> r3{0.3, -1.0, 2.5};
    EXPECT_EQ(compute_returns(r3, true, 5.0, 0.0), r3);

    EXPECT_THROW(compute_returns(std::vector<double>{}, true, 0.0, 0.9), ContractViolation);
}

TEST(Returns, MatchBruteForceSums) {
    Rng rng(1);
    for (int n = 0; n < 2000; ++n) {
        const std::size_t len = 1 + rng.below(10);
        std::vector<double> r(len);
        for (auto& v : r) v = rng.uniform(-2, 2);
        const bool terminal = rng.below(2) == 0;
        const double boot = rng.uniform(-3, 3);
        const double gamma = std::array<double, 4>{0.0, 0.5, 0.99, 1.0}[rng.below(4)];
        const auto got = compute_returns(r, terminal, boot, gamma);
        for (std::size_t t = 0; t < len; ++t) {
            double want = 0.0;
            for (std::size_t i = t; i < len; ++i) want += std::pow(gamma, static_cast<double>(i - t)) * r[i];
            if (!terminal) want += std::pow(gamma, static_cast<double>(len - t)) * boot;
            EXPECT_NEAR(got[t], want, 1e-12);
        }
    }
}

TEST(SegmentLoss, ZeroAdvantageAndNoEntropyIsZero) {
    const NetConfig cfg = small_net();
    Rng rng(2);
    const PolicyParams p = PolicyParams::initialize(cfg, rng);
    const ImageRaster img(8, 8, 1, 0.5);
    GlobalFeatureCache cache;
    const Observation obs = encode_observation(p, img, CropWindow::full(), cache);
    const auto state = RecurrentState::zeros(cfg);
    const PolicyOutput out = forward(p, state, obs);
    const Transition tr{obs.global_input, obs.local_input, state, 4, 0.0, out.value, out.probs};
    const std::vector<double> ret{out.value};
    const BackwardResult r = segment_loss(std::span(&tr, 1), ret, p, 0.0);
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_EQ(r.grads[kPolicyW].squaredNorm(), 0.0);
    EXPECT_EQ(r.grads.squared_norm(), 0.0);
}

TEST(SegmentLoss, UniformPolicyEntropyTerm) {
    const NetConfig cfg = small_net();
    const PolicyParams p = PolicyParams::zeros(cfg);
    const ImageRaster img(8, 8, 1, 0.5);
    GlobalFeatureCache cache;
    const Observation obs = encode_observation(p, img, CropWindow::full(), cache);
    const auto state = RecurrentState::zeros(cfg);
    const Transition tr{obs.global_input, obs.local_input, state, 0, 0.0, 0.0, {}};
    const std::vector<double> ret{0.0};
    const double loss = segment_loss(std::span(&tr, 1), ret, p, 0.05).loss;
    EXPECT_NEAR(loss, -0.05 * std::log(14.0), 1e-15);
    EXPECT_NEAR(loss, -0.13196, 1e-5);
}

TEST(SegmentLoss, MisalignedInputsRejected) {
    const NetConfig cfg = small_net();
    const PolicyParams p = PolicyParams::zeros(cfg);
    const std::vector<Transition> trs(2);
    const std::vector<double> ret{0.0};
    EXPECT_THROW(segment_loss(trs, ret, p, 0.05), ContractViolation);
}

TEST(SegmentLoss, GradientsMatchFiniteDifferences) {
    const NetConfig cfg = small_net();
    Rng rng(3);
    PolicyParams p = PolicyParams::initialize(cfg, rng);
    p[kPolicyW] *= 50.0;
    p[kValueW] *= 50.0;
    Trainer trainer(quick_trainer(5, 1), RewardConfig{}, p, scenes());
    const BatchRollout batch = trainer.rollout(5);
    const Segment& seg = batch.segments.front();
    ASSERT_FALSE(seg.transitions.empty());

    std::vector<double> rewards;
    for (const auto& tr : seg.transitions) rewards.push_back(tr.reward);
    const auto returns = compute_returns(rewards, seg.terminal, seg.bootstrap_value, 0.99);
    const BackwardResult g = segment_loss(seg.transitions, returns, p, 0.05);

    Tape tape;
    tape.beta = 0.05;
    tape.initial = seg.transitions.front().state;
    for (std::size_t i = 0; i < seg.transitions.size(); ++i) {
        const auto& tr = seg.transitions[i];
        tape.steps.push_back({tr.global_input, tr.local_input, tr.action, returns[i], returns[i] - tr.value});
    }
    EXPECT_LT(grad_check(p, tape, g.grads).max_rel_error, 1e-4);
}

TEST(RmsProp, HandComputedFirstStep) {
    const NetConfig cfg = small_net();
    PolicyParams p = PolicyParams::zeros(cfg);
    PolicyParams g = p.zeros_like();
    g[kValueB](0, 0) = 1.0;
    RmsPropState st;
    rms_update(p, g, st, 0.0005, 0.99, 1e-8);
    EXPECT_NEAR(st.cache[kValueB](0, 0), 0.01, 1e-15);
    EXPECT_NEAR(p[kValueB](0, 0), -0.0005 / (0.1 + 1e-8), 1e-15);
    EXPECT_NEAR(p[kValueB](0, 0), -0.005, 1e-9);
    EXPECT_EQ(p[kPolicyW].squaredNorm(), 0.0);  // zero gradient leaves parameters unchanged

    const double before = p[kValueB](0, 0);
    rms_update(p, g, st, 0.0005, 0.99, 1e-8);
    const double second = p[kValueB](0, 0) - before;
    EXPECT_LT(std::abs(second), 0.005 - 1e-9);
}

TEST(RmsProp, ZeroGradientIsANoOp) {
    const NetConfig cfg = small_net();
    Rng rng(4);
    PolicyParams p = PolicyParams::initialize(cfg, rng);
    const PolicyParams before = p;
    RmsPropState st;
    rms_update(p, p.zeros_like(), st, 0.01, 0.99, 1e-8);
    for (std::size_t id = 0; id < kNumParamTensors; ++id) EXPECT_EQ(p[id], before[id]);
}

TEST(Entropy, RegularizedStepRaisesEntropy) {
    const NetConfig cfg = small_net();
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        PolicyParams p = PolicyParams::initialize(cfg, rng);
        p[kPolicyW] *= 100.0;  // a visibly non-uniform policy
        ImageRaster img(8, 8, 1);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) img.at(x, y) = rng.uniform();
        GlobalFeatureCache cache;
        const Observation obs = encode_observation(p, img, {0.1, 0.2, 0.6, 0.5}, cache);
        const auto state = RecurrentState::zeros(cfg);
        const PolicyOutput before = forward(p, state, obs);
        // R == V: zero advantage and no value error, so only the entropy term acts.
        const Transition tr{obs.global_input, obs.local_input, state, static_cast<int>(rng.below(14)), 0.0,
                            before.value, before.probs};
        const std::vector<double> ret{before.value};
        const BackwardResult g = segment_loss(std::span(&tr, 1), ret, p, 0.05);
        RmsPropState st;
        rms_update(p, g.grads, st, 1e-6, 0.99, 1e-8);
        GlobalFeatureCache cache2;
        const PolicyOutput after = forward(p, state, encode_observation(p, img, {0.1, 0.2, 0.6, 0.5}, cache2));
        EXPECT_GT(after.entropy(), before.entropy());
    }
}

TEST(Trainer, BatchGradientIsSumOfStreamGradients) {
    const NetConfig cfg = small_net();
    Rng rng(6);
    Trainer trainer(quick_trainer(10, 5), RewardConfig{}, PolicyParams::initialize(cfg, rng), scenes());
    const BatchRollout batch = trainer.rollout(7);
    ASSERT_EQ(batch.segments.size(), 5u);

    PolicyParams sum = trainer.params().zeros_like();
    for (const auto& seg : batch.segments) {
        std::vector<double> rewards;
        for (const auto& tr : seg.transitions) rewards.push_back(tr.reward);
        const auto returns = compute_returns(rewards, seg.terminal, seg.bootstrap_value, 0.99);
        sum += segment_loss(seg.transitions, returns, trainer.params(), 0.05).grads;
    }
    const PolicyParams total = trainer.batch_gradient(batch).grads;
    for (std::size_t id = 0; id < kNumParamTensors; ++id) {
        for (Eigen::Index i = 0; i < sum[id].size(); ++i)
            EXPECT_NEAR(total[id].data()[i], sum[id].data()[i], 1e-12 * (1.0 + std::abs(sum[id].data()[i])));
    }
}

TEST(Trainer, SegmentsRespectUpdatePeriodAndEpisodeCap) {
    const NetConfig cfg = small_net();
    Rng rng(7);
    TrainerConfig tc = quick_trainer(200, 3);
    tc.T_max = 12;
    tc.t_max = 5;
    Trainer trainer(tc, RewardConfig{}, PolicyParams::initialize(cfg, rng), scenes());
    std::vector<int> running(3, 0);
    for (int u = 0; u < 40; ++u) {
        const BatchRollout batch = trainer.rollout(tc.t_max);
        for (std::size_t s = 0; s < batch.segments.size(); ++s) {
            const auto& seg = batch.segments[s];
            EXPECT_LE(seg.transitions.size(), 5u);
            running[s] += static_cast<int>(seg.transitions.size());
            EXPECT_LE(running[s], 12);
            const bool ended = seg.terminal || running[s] == 12;
            if (ended) running[s] = 0;
        }
    }
}

TEST(Train, ZeroStepsReturnsInitialization) {
    const NetConfig cfg = small_net();
    TrainerConfig tc = quick_trainer(0);
    const TrainResult r = train(tc, RewardConfig{}, cfg, scenes());
    Rng init(Rng::derive(tc.seed, 0xC0FFEE));
    const PolicyParams want = PolicyParams::initialize(cfg, init);
    for (std::size_t id = 0; id < kNumParamTensors; ++id) EXPECT_EQ(r.params[id], want[id]);
    EXPECT_TRUE(r.log.empty());
}

TEST(Train, DeterministicForFixedSeed) {
    const NetConfig cfg = small_net();
    const TrainResult a = train(quick_trainer(60), RewardConfig{}, cfg, scenes());
    const TrainResult b = train(quick_trainer(60), RewardConfig{}, cfg, scenes());
    for (std::size_t id = 0; id < kNumParamTensors; ++id) EXPECT_EQ(a.params[id], b.params[id]);
    ASSERT_EQ(a.log.size(), b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) EXPECT_EQ(format_log_record(a.log[i]), format_log_record(b.log[i]));
    EXPECT_FALSE(a.log.empty());
    for (const auto& rec : a.log) EXPECT_LE(rec.mean_length, 50.0);
}

TEST(Train, NonFiniteLossAborts) {
    const NetConfig cfg = small_net();
    Rng rng(8);
    PolicyParams p = PolicyParams::initialize(cfg, rng);
    p[kValueB](0, 0) = std::numeric_limits<double>::quiet_NaN();
    Trainer trainer(quick_trainer(20), RewardConfig{}, p, scenes());
    EXPECT_THROW(trainer.run(), NumericAbort);
}

TEST(Train, EmptyImageSourceIsAnError) {
    EXPECT_THROW(ImageListTaskSource({}, std::make_shared<const CompositionScorer>()), ConfigError);
}

TEST(TrainerConfig, Validation) {
    TrainerConfig c;
    EXPECT_NO_THROW(c.validate());
    c.gamma = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.t_max = 60;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.beta = -0.1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Targets, SampledWithinRangeAndAspectBounds) {
    Rng rng(9);
    const RewardConfig rc;
    for (int i = 0; i < 5000; ++i) {
        const ImageDims d{64, 48};
        const CropWindow t = sample_target_window(rng, d, rc);
        EXPECT_GE(t.w, 0.3);
        EXPECT_LE(t.w, 0.8);
        EXPECT_GE(t.h, 0.3);
        EXPECT_LE(t.h, 0.8);
        EXPECT_TRUE(is_valid_window(t));
        const double ar = aspect_ratio(t, d);
        EXPECT_GE(ar, 0.5);
        EXPECT_LE(ar, 2.0);
    }
}

TEST(Targets, RenderedSceneShowsTheTarget) {
    const CropWindow t{0.25, 0.5, 0.5, 0.25};
    const ImageRaster img = render_target_image(t, {8, 8});
    EXPECT_NEAR(img.at(3, 4), 0.85, 1e-12);
    EXPECT_NEAR(img.at(0, 0), 0.15, 1e-12);
    EXPECT_NEAR(img.at(2, 6), 0.15, 1e-12);
}

TEST(Log, TabSeparatedFields) {
    const LogRecord r{40, 0.5, 12.25, 0.75, 2.5};
    EXPECT_EQ(format_log_record(r), "40\t0.500000\t12.2500\t0.750000\t2.500000");
}
