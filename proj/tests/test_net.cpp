#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "a2rl/grad_check.hpp"
#include "a2rl/net.hpp"

using namespace a2rl;

namespace {

NetConfig small_config(EncoderKind enc = EncoderKind::Coordinate, bool recurrent = true) {
    NetConfig c;
    c.feature_dim = 8;
    c.hidden = 16;
    c.grid = 4;
    c.encoder = enc;
    c.recurrent = recurrent;
    return c;
}

ImageRaster noise_image(Rng& rng, int w = 12, int h = 10) {
    ImageRaster img(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.at(x, y) = rng.uniform();
    return img;
}

CropWindow random_window(Rng& rng) {
    const double w = rng.uniform(0.1, 1.0), h = rng.uniform(0.1, 1.0);
    return {rng.uniform() * (1 - w), rng.uniform() * (1 - h), w, h};
}

/// Random tape with nonzero recurrent start state and random returns.
Tape random_tape(const PolicyParams& p, Rng& rng, int steps, double beta) {
    const NetConfig& cfg = p.config();
    const ImageRaster img = noise_image(rng);
    Tape tape;
    tape.beta = beta;
    tape.initial = RecurrentState::zeros(cfg);
    for (Eigen::Index i = 0; i < tape.initial.h.size(); ++i) {
        tape.initial.h[i] = rng.uniform(-0.5, 0.5);
        tape.initial.c[i] = rng.uniform(-0.5, 0.5);
    }
    auto global = std::make_shared<const Vec>(global_encoder_input(cfg, img));
    for (int t = 0; t < steps; ++t) {
        TapeStep s;
        s.global_input = global;
        s.local_input = local_encoder_input(cfg, img, random_window(rng));
        s.action = static_cast<int>(rng.below(kNumActions));
        s.ret = rng.uniform(-2, 2);
        s.advantage = rng.uniform(-2, 2);
        tape.steps.push_back(std::move(s));
    }
    return tape;
}

/// Heads at full scale so the check also exercises non-uniform policies.
PolicyParams random_params(const NetConfig& cfg, Rng& rng) {
    PolicyParams p = PolicyParams::initialize(cfg, rng);
    for (std::size_t id : {kPolicyW, kValueW, kPolicyB, kValueB, kGlobalB, kLocalB, kTrunkB})
        for (Eigen::Index i = 0; i < p[id].size(); ++i) p[id].data()[i] = rng.uniform(-0.5, 0.5);
    return p;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveUniformPolicy) {
    const NetConfig cfg = small_config();
    const PolicyParams p = PolicyParams::zeros(cfg);
    Rng rng(1);
    const Vec g = Vec::Random(8), l = Vec::Random(8);
    const PolicyOutput out = forward_features(p, RecurrentState::zeros(cfg), g, l);
    for (double pr : out.probs) EXPECT_NEAR(pr, 1.0 / 14.0, 1e-15);
    EXPECT_EQ(out.value, 0.0);
    EXPECT_NEAR(out.entropy(), std::log(14.0), 1e-12);
    EXPECT_NEAR(std::log(14.0), 2.6391, 1e-4);
}

TEST(Forward, DifferentObservationsGiveDifferentLogits) {
    const NetConfig cfg = small_config();
    Rng rng(2);
    const PolicyParams p = random_params(cfg, rng);
    const ImageRaster img = noise_image(rng);
    GlobalFeatureCache cache;
    const Observation a = encode_observation(p, img, {0.1, 0.1, 0.5, 0.5}, cache);
    const Observation b = encode_observation(p, img, {0.3, 0.2, 0.6, 0.4}, cache);
    const auto s = RecurrentState::zeros(cfg);
    EXPECT_NE(forward(p, s, a).probs, forward(p, s, b).probs);
}

TEST(Forward, ShapeMismatchIsAContractViolation) {
    const NetConfig cfg = small_config();
    const PolicyParams p = PolicyParams::zeros(cfg);
    EXPECT_THROW(forward_features(p, RecurrentState::zeros(cfg), Vec::Zero(7), Vec::Zero(8)), ContractViolation);
    RecurrentState bad{Vec::Zero(3), Vec::Zero(3)};
    EXPECT_THROW(forward_features(p, bad, Vec::Zero(8), Vec::Zero(8)), ContractViolation);
}

TEST(Softmax, NormalizedPositiveAndShiftInvariant) {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        Vec logits(kNumActions);
        for (int a = 0; a < kNumActions; ++a) logits[a] = rng.uniform(-30, 30);
        std::array<double, kNumActions> p{}, lp{}, q{}, lq{};
        softmax(logits, p, lp);
        softmax((logits.array() + rng.uniform(-100, 100)).matrix(), q, lq);
        double sum = 0.0;
        for (int a = 0; a < kNumActions; ++a) {
            EXPECT_GT(p[static_cast<std::size_t>(a)], 0.0);
            EXPECT_NEAR(p[static_cast<std::size_t>(a)], q[static_cast<std::size_t>(a)], 1e-12);
            sum += p[static_cast<std::size_t>(a)];
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Encoder, CoordinateInputStartsWithTheWindow) {
    const NetConfig cfg = small_config(EncoderKind::Coordinate);
    const ImageRaster img(4, 4, 1);
    const Vec v = local_encoder_input(cfg, img, {0.1, 0.2, 0.5, 0.6});
    ASSERT_GE(v.size(), 4);
    EXPECT_EQ(v[0], 0.1);
    EXPECT_EQ(v[1], 0.2);
    EXPECT_EQ(v[2], 0.5);
    EXPECT_EQ(v[3], 0.6);
    EXPECT_EQ(v.size(), cfg.local_inputs());
}

TEST(Encoder, GlobalFeatureIsCachedPerEpisode) {
    const NetConfig cfg = small_config(EncoderKind::Pixel);
    Rng rng(4);
    const PolicyParams p = random_params(cfg, rng);
    const ImageRaster img = noise_image(rng);
    GlobalFeatureCache cache;
    const Observation a = encode_observation(p, img, CropWindow::full(), cache);
    const Observation b = encode_observation(p, img, {0.2, 0.2, 0.5, 0.5}, cache);
    EXPECT_EQ(a.global_input.get(), b.global_input.get());
    ASSERT_EQ(a.global_feature.size(), b.global_feature.size());
    EXPECT_EQ(std::memcmp(a.global_feature.data(), b.global_feature.data(), sizeof(double) * 8), 0);
    EXPECT_NE(a.local_feature, b.local_feature);
}

TEST(Encoder, PixelEncoderOnUniformImageIgnoresTheWindow) {
    const NetConfig cfg = small_config(EncoderKind::Pixel);
    Rng rng(5);
    const PolicyParams p = random_params(cfg, rng);
    const ImageRaster img(20, 20, 1, 0.37);
    GlobalFeatureCache cache;
    const Observation a = encode_observation(p, img, {0.0, 0.0, 0.3, 0.9}, cache);
    const Observation b = encode_observation(p, img, {0.55, 0.1, 0.45, 0.2}, cache);
    for (int i = 0; i < cfg.feature_dim; ++i) EXPECT_NEAR(a.local_feature[i], b.local_feature[i], 1e-12);
}

TEST(Sampling, DegenerateAndGreedy) {
    Rng rng(6);
    std::array<double, kNumActions> onehot{};
    onehot[9] = 1.0;
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_action(onehot, rng), Action::Widen);

    std::array<double, kNumActions> p{};
    p.fill(0.05);
    p[7] = 0.35;
    EXPECT_EQ(action_id(greedy_action(p)), 7);
    std::array<double, kNumActions> tie{};
    tie[3] = tie[11] = 0.5;
    EXPECT_EQ(action_id(greedy_action(tie)), 3);
}

TEST(Sampling, UniformCountsWithinBinomialBounds) {
    Rng rng(7);
    std::array<double, kNumActions> uniform{};
    uniform.fill(1.0 / kNumActions);
    std::array<int, kNumActions> counts{};
    for (int i = 0; i < 14000; ++i) ++counts[static_cast<std::size_t>(action_id(sample_action(uniform, rng)))];
    for (int c : counts) {
        EXPECT_GE(c, 800);
        EXPECT_LE(c, 1200);
    }
}

TEST(Sampling, ReproducibleWithSeed) {
    std::array<double, kNumActions> p{};
    for (int a = 0; a < kNumActions; ++a) p[static_cast<std::size_t>(a)] = (a + 1) / 105.0;
    Rng r1(99), r2(99);
    for (int i = 0; i < 500; ++i) EXPECT_EQ(sample_action(p, r1), sample_action(p, r2));
}

TEST(Backward, EmptyTapeGivesZeroGradients) {
    const NetConfig cfg = small_config();
    Rng rng(8);
    const PolicyParams p = random_params(cfg, rng);
    Tape tape;
    tape.initial = RecurrentState::zeros(cfg);
    const BackwardResult r = backward(p, tape);
    EXPECT_EQ(r.loss, 0.0);
    EXPECT_EQ(r.grads.squared_norm(), 0.0);
}

TEST(Backward, NoEntropyNoAdvantageLeavesPolicyHeadUntouched) {
    const NetConfig cfg = small_config();
    Rng rng(9);
    const PolicyParams p = random_params(cfg, rng);
    Tape tape = random_tape(p, rng, 5, 0.0);
    for (auto& s : tape.steps) s.advantage = 0.0;
    const BackwardResult r = backward(p, tape);
    EXPECT_EQ(r.grads[kPolicyW].squaredNorm(), 0.0);
    EXPECT_EQ(r.grads[kPolicyB].squaredNorm(), 0.0);
    EXPECT_GT(r.grads[kValueW].squaredNorm(), 0.0);
}

TEST(Backward, LossMatchesForwardObjective) {
    const NetConfig cfg = small_config();
    Rng rng(10);
    const PolicyParams p = random_params(cfg, rng);
    const Tape tape = random_tape(p, rng, 5, 0.05);
    EXPECT_NEAR(backward(p, tape).loss, tape_objective(p, tape), 1e-12);
}

TEST(GradCheck, SmallNetsAllVariants) {
    Rng rng(11);
    for (EncoderKind enc : {EncoderKind::Coordinate, EncoderKind::Pixel}) {
        for (bool rec : {true, false}) {
            const NetConfig cfg = small_config(enc, rec);
            const PolicyParams p = random_params(cfg, rng);
            ASSERT_LE(p.num_scalars(), 10000u);
            const Tape tape = random_tape(p, rng, 5, 0.05);
            const GradCheckResult r = grad_check(p, tape);
            EXPECT_LT(r.max_rel_error, 1e-4) << encoder_name(enc) << " recurrent=" << rec << " worst "
                                             << r.worst_tensor << "[" << r.worst_index << "]";
            EXPECT_EQ(r.checked, p.num_scalars());
        }
    }
}

TEST(GradCheck, DetectsCorruptedPolicyHead) {
    const NetConfig cfg = small_config();
    Rng rng(12);
    const PolicyParams p = random_params(cfg, rng);
    const Tape tape = random_tape(p, rng, 5, 0.05);
    PolicyParams g = backward(p, tape).grads;
    g[kPolicyW] *= 1.5;
    EXPECT_GT(grad_check(p, tape, g).max_rel_error, 1e-2);
}

TEST(GradCheck, ZeroGradientsAreFlagged) {
    const NetConfig cfg = small_config();
    Rng rng(13);
    const PolicyParams p = random_params(cfg, rng);
    const Tape tape = random_tape(p, rng, 3, 0.05);
    EXPECT_NEAR(grad_check(p, tape, p.zeros_like()).max_rel_error, 1.0, 1e-12);
}

TEST(Recurrence, DisabledCellIgnoresHistory) {
    const NetConfig cfg = small_config(EncoderKind::Coordinate, false);
    Rng rng(14);
    const PolicyParams p = random_params(cfg, rng);
    const ImageRaster img = noise_image(rng);
    std::vector<CropWindow> history;
    for (int i = 0; i < 6; ++i) history.push_back(random_window(rng));
    const CropWindow probe{0.2, 0.3, 0.4, 0.5};

    auto run = [&](const std::vector<CropWindow>& hist) {
        GlobalFeatureCache cache;
        RecurrentState s = RecurrentState::zeros(cfg);
        for (const auto& w : hist) s = forward(p, s, encode_observation(p, img, w, cache)).next_state;
        return forward(p, s, encode_observation(p, img, probe, cache));
    };
    const PolicyOutput base = run(history);
    std::vector<CropWindow> rev(history.rbegin(), history.rend());
    EXPECT_EQ(run(rev).probs, base.probs);
    EXPECT_EQ(run({}).probs, base.probs);
}

TEST(Recurrence, EnabledCellDependsOnHistory) {
    const NetConfig cfg = small_config();
    Rng rng(15);
    const PolicyParams p = random_params(cfg, rng);
    const ImageRaster img = noise_image(rng);
    GlobalFeatureCache cache;
    const auto s0 = RecurrentState::zeros(cfg);
    const auto s1 = forward(p, s0, encode_observation(p, img, {0.1, 0.1, 0.3, 0.3}, cache)).next_state;
    const Observation probe = encode_observation(p, img, {0.2, 0.3, 0.4, 0.5}, cache);
    EXPECT_NE(forward(p, s0, probe).probs, forward(p, s1, probe).probs);
}

TEST(Params, InitializationShapesAndScale) {
    NetConfig cfg;
    Rng rng(16);
    const PolicyParams p = PolicyParams::initialize(cfg, rng);
    EXPECT_EQ(p[kLstmWx].rows(), 4 * cfg.hidden);
    EXPECT_EQ(p[kLocalW].cols(), 256);
    EXPECT_LE(p[kTrunkW].cwiseAbs().maxCoeff(), 1.0 / std::sqrt(2.0 * cfg.feature_dim));
    EXPECT_LE(p[kPolicyW].cwiseAbs().maxCoeff(), 0.01 / std::sqrt(static_cast<double>(cfg.hidden)));
    EXPECT_EQ(p[kLstmB].block(cfg.hidden, 0, cfg.hidden, 1).minCoeff(), 1.0);
    EXPECT_EQ(p[kLstmB].block(0, 0, cfg.hidden, 1).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_TRUE(p.all_finite());

    cfg.recurrent = false;
    const PolicyParams q = PolicyParams::initialize(cfg, rng);
    EXPECT_EQ(q[kLstmWx].size(), 0);
}
