#include <catch2/catch_amalgamated.hpp>

#include "mwdn/gradcheck.hpp"
#include "mwdn/rcf.hpp"
#include "synthetic.hpp"

using namespace mwdn;
using Catch::Approx;

namespace {

void zero_stage(ClassifierStage& s) {
    s.mlp_w_hidden.fill(0.0);
    std::fill(s.mlp_b_hidden.begin(), s.mlp_b_hidden.end(), 0.0);
    s.mlp_w_out.fill(0.0);
    std::fill(s.mlp_b_out.begin(), s.mlp_b_out.end(), 0.0);
}

GradCheckSet stage_blocks(ClassifierStage& s, PsiGradients& g) {
    GradCheckSet set;
    if (s.kind == PsiKind::kMlp) {
        set.add(s.mlp_w_hidden, g.mlp_w_hidden, "mlp_w_hidden");
        set.add(s.mlp_b_hidden, g.mlp_b_hidden, "mlp_b_hidden");
        set.add(s.mlp_w_out, g.mlp_w_out, "mlp_w_out");
        set.add(s.mlp_b_out, g.mlp_b_out, "mlp_b_out");
    } else {
        for (std::size_t k = 0; k < kConvPsiKernels; ++k) {
            set.add(s.conv_kernels_high[k], g.conv_kernels_high[k], "kernel_high");
            set.add(s.conv_kernels_low[k], g.conv_kernels_low[k], "kernel_low");
        }
        set.add(s.conv_bias_high, g.conv_bias_high, "kbias_high");
        set.add(s.conv_bias_low, g.conv_bias_low, "kbias_low");
        set.add(s.conv_w_out, g.conv_w_out, "conv_w_out");
        set.add(s.conv_b_out, g.conv_b_out, "conv_b_out");
    }
    return set;
}

}  // namespace

TEST_CASE("psi_forward") {
    SECTION("all-zero parameters emit the zero vector") {
        ClassifierStage s = make_stage(PsiKind::kMlp, 4, 3, 8, 0, "t");
        zero_stage(s);
        const Tensor1 u = psi_forward(s, Tensor1(4, 0.7), Tensor1(4, -0.2));
        CHECK(u == Tensor1(3, 0.0));
    }
    SECTION("output length is the class count") {
        for (std::size_t sub_len : {7, 10, 33}) {
            ClassifierStage mlp = make_stage(PsiKind::kMlp, sub_len, 5, 16, 1, "t");
            CHECK(psi_forward(mlp, Tensor1(sub_len, 0.1), Tensor1(sub_len, 0.2)).size() == 5);
            ClassifierStage conv = make_stage(PsiKind::kConv, sub_len, 5, 16, 1, "t");
            CHECK(psi_forward(conv, Tensor1(sub_len, 0.1), Tensor1(sub_len, 0.2)).size() == 5);
        }
    }
    SECTION("hand-computed two-layer composition, hidden width 1") {
        ClassifierStage s = make_stage(PsiKind::kMlp, 1, 2, 1, 0, "t");
        s.mlp_w_hidden(0, 0) = 2.0;
        s.mlp_w_hidden(0, 1) = 0.5;
        s.mlp_b_hidden = {0.1};
        s.mlp_w_out(0, 0) = 1.5;
        s.mlp_w_out(1, 0) = -0.7;
        s.mlp_b_out = {0.2, -0.3};
        const double a = 0.5, b = -1.0;
        const double hidden = 1.0 / (1.0 + std::exp(-(2.0 * a + 0.5 * b + 0.1)));
        const Tensor1 u = psi_forward(s, {a}, {b});
        CHECK(u[0] == Approx(1.5 * hidden + 0.2).margin(1e-14));
        CHECK(u[1] == Approx(-0.7 * hidden - 0.3).margin(1e-14));
    }
    SECTION("pair length mismatch rejected") {
        ClassifierStage s = make_stage(PsiKind::kMlp, 4, 2, 8, 0, "t");
        CHECK_THROWS(psi_forward(s, Tensor1(4, 0.0), Tensor1(3, 0.0)));
    }
}

TEST_CASE("rcf_forward residual chain") {
    SECTION("single stage with zero logits is uniform") {
        RcfModel m = make_rcf_model(16, 1, 4, PsiKind::kMlp, 8, db4_filters(), 1e-4, 0);
        zero_stage(m.stages[0]);
        const std::vector<Tensor1> c_hats = rcf_forward(m, Tensor1(16, 0.3));
        REQUIRE(c_hats.size() == 1);
        for (double p : c_hats[0]) CHECK(p == Approx(0.25).margin(1e-15));
    }
    SECTION("worked two-stage example") {
        RcfModel m = make_rcf_model(16, 2, 2, PsiKind::kMlp, 8, db4_filters(), 1e-4, 0);
        zero_stage(m.stages[0]);
        zero_stage(m.stages[1]);
        m.stages[1].mlp_b_out = {1.0, 0.0};  // u(2) = [1, 0]
        const std::vector<Tensor1> c_hats = rcf_forward(m, Tensor1(16, 0.3));
        CHECK(c_hats[0][0] == Approx(0.5).margin(1e-15));
        // c_hat(2) = softmax([0.5 + 1, 0.5 + 0])
        const double z = std::exp(1.5) + std::exp(0.5);
        CHECK(c_hats[1][0] == Approx(std::exp(1.5) / z).margin(1e-12));
        CHECK(c_hats[1][1] == Approx(std::exp(0.5) / z).margin(1e-12));
        CHECK(c_hats[1][0] == Approx(0.7311).margin(1e-4));
    }
    SECTION("every stage output is a probability vector") {
        RcfModel m = make_rcf_model(32, 3, 5, PsiKind::kMlp, 16, db4_filters(), 1e-4, 7);
        RandomStream rng(7, "rcf.prob");
        for (int trial = 0; trial < 10; ++trial) {
            Tensor1 x(32);
            for (double& v : x) v = rng.normal();
            const std::vector<Tensor1> c_hats = rcf_forward(m, x);
            for (const Tensor1& c : c_hats) {
                double sum = 0.0;
                for (double p : c) {
                    CHECK(p >= 0.0);
                    sum += p;
                }
                CHECK(sum == Approx(1.0).margin(1e-12));
            }
        }
    }
}

TEST_CASE("deep_supervision_loss") {
    SECTION("single stage reduces to plain cross-entropy") {
        const Tensor1 c{1.0, 0.0};
        const Tensor1 c_hat{0.3, 0.7};
        CHECK(deep_supervision_loss({c_hat}, c) ==
              Approx(cross_entropy(c, c_hat)).margin(1e-15));
    }
    SECTION("perfect predictions give zero") {
        const Tensor1 c{0.0, 1.0};
        CHECK(deep_supervision_loss({c, c, c}, c) == Approx(0.0).margin(1e-9));
    }
    SECTION("two-stage weights are 1/2 and 1") {
        const Tensor1 c{1.0, 0.0};
        const Tensor1 p1{0.6, 0.4};
        const Tensor1 p2{0.8, 0.2};
        const double a = cross_entropy(c, p1);
        const double b = cross_entropy(c, p2);
        CHECK(deep_supervision_loss({p1, p2}, c) == Approx(a / 2.0 + b).margin(1e-13));
    }
}

TEST_CASE("rcf_predict") {
    CHECK(rcf_predict_from_chat({0.7, 0.3}) == 0);
    CHECK(rcf_predict_from_chat({0.5, 0.5}) == 0);
    CHECK(rcf_predict_from_chat({0.1, 0.2, 0.7}) == 2);

    SECTION("invariant to a constant shift of final-stage logits") {
        RcfModel m = make_rcf_model(16, 2, 3, PsiKind::kMlp, 8, db4_filters(), 1e-4, 11);
        RcfModel shifted = m;
        for (double& b : shifted.stages.back().mlp_b_out) b += 37.5;
        RandomStream rng(11, "rcf.shift");
        for (int trial = 0; trial < 10; ++trial) {
            Tensor1 x(16);
            for (double& v : x) v = rng.normal();
            CHECK(rcf_predict(m, x) == rcf_predict(shifted, x));
        }
    }
}

TEST_CASE("end-to-end gradient check at tiny scale") {
    SECTION("mlp psi") {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            RcfModel m = make_rcf_model(8, 1, 2, PsiKind::kMlp, 2, db4_filters(), 1e-2, seed);
            RandomStream rng(seed, "rcf.e2e");
            Tensor1 x(8);
            for (double& v : x) v = rng.uniform(-1.0, 1.0);
            const Tensor1 target = one_hot(seed % 2, 2);
            const double alpha = 0.02, beta = 0.03;
            auto objective = [&] {
                return deep_supervision_loss(rcf_forward(m, x), target) +
                       regularization_penalty(m.mwdn, alpha, beta);
            };
            RcfForwardCache cache;
            rcf_forward(m, x, &cache);
            RcfGradients g = rcf_backward(m, cache, target, alpha, beta);
            GradCheckSet set = stage_blocks(m.stages[0], g.stages[0]);
            set.add(m.mwdn.levels[0].w_low, g.mwdn.levels[0].w_low, "w_low");
            set.add(m.mwdn.levels[0].w_high, g.mwdn.levels[0].w_high, "w_high");
            set.add(m.mwdn.levels[0].b_low, g.mwdn.levels[0].b_low, "b_low");
            set.add(m.mwdn.levels[0].b_high, g.mwdn.levels[0].b_high, "b_high");
            std::string worst;
            CHECK(set.run(objective, 1e-5, &worst) < 1e-4);
        }
    }
    SECTION("conv psi parameters and input gradients") {
        for (std::uint64_t seed = 0; seed < 6; ++seed) {
            ClassifierStage s = make_stage(PsiKind::kConv, 8, 2, 2, seed, "t");
            RandomStream rng(seed, "rcf.conv.fd");
            Tensor1 x_high(8), x_low(8), probe(2);
            for (double& v : x_high) v = rng.uniform(0.0, 1.0);
            for (double& v : x_low) v = rng.uniform(0.0, 1.0);
            for (double& v : probe) v = rng.uniform(-1.0, 1.0);
            auto objective = [&] {
                const Tensor1 u = psi_forward(s, x_high, x_low);
                return probe[0] * u[0] + probe[1] * u[1];
            };
            PsiCache cache;
            psi_forward(s, x_high, x_low, &cache);
            PsiGradients g = psi_backward(s, cache, probe);
            GradCheckSet set = stage_blocks(s, g);
            set.add(x_high, g.x_high, "x_high");
            set.add(x_low, g.x_low, "x_low");
            CHECK(set.run(objective) < 1e-4);
        }
    }
}

TEST_CASE("train_rcf") {
    SECTION("rejects single-class data") {
        LabeledDataset d;
        d.class_count = 1;
        d.series_length = 8;
        d.train.push_back(TimeSeries{Tensor1(8, 0.1), 0});
        TrainConfig cfg;
        CHECK_THROWS(train_rcf(d, cfg));
    }
    SECTION("zero epochs returns the initialized model") {
        testing::FreqDatasetSpec spec;
        spec.per_class = 5;
        spec.length = 16;
        const LabeledDataset d = testing::two_class_freq_dataset(spec, 3);
        TrainConfig cfg;
        cfg.epochs = 0;
        cfg.n_levels = 2;
        cfg.hidden_width = 4;
        cfg.seed = 12;
        const RcfTrainResult r = train_rcf(d, cfg);
        CHECK(r.history.empty());
        const RcfModel fresh = make_rcf_model(16, 2, 2, PsiKind::kMlp, 4, db4_filters(),
                                              cfg.eps_scale, 12);
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t k = 0; k < fresh.mwdn.levels[i].w_low.size(); ++k)
                CHECK(r.model.mwdn.levels[i].w_low.raw()[k] ==
                      fresh.mwdn.levels[i].w_low.raw()[k]);
        for (std::size_t k = 0; k < fresh.stages[0].mlp_w_hidden.size(); ++k)
            CHECK(r.model.stages[0].mlp_w_hidden.raw()[k] ==
                  fresh.stages[0].mlp_w_hidden.raw()[k]);
    }
    SECTION("identical seeds give identical parameters") {
        testing::FreqDatasetSpec spec;
        spec.per_class = 10;
        spec.length = 16;
        const LabeledDataset d = testing::two_class_freq_dataset(spec, 5);
        TrainConfig cfg;
        cfg.epochs = 5;
        cfg.n_levels = 2;
        cfg.hidden_width = 8;
        cfg.seed = 77;
        const RcfTrainResult a = train_rcf(d, cfg);
        const RcfTrainResult b = train_rcf(d, cfg);
        REQUIRE(a.history.size() == b.history.size());
        for (std::size_t e = 0; e < a.history.size(); ++e)
            CHECK(a.history[e].train_loss == b.history[e].train_loss);
        for (std::size_t i = 0; i < a.model.mwdn.n_levels(); ++i)
            for (std::size_t k = 0; k < a.model.mwdn.levels[i].w_low.size(); ++k)
                CHECK(a.model.mwdn.levels[i].w_low.raw()[k] ==
                      b.model.mwdn.levels[i].w_low.raw()[k]);
        for (std::size_t s = 0; s < a.model.stages.size(); ++s)
            for (std::size_t k = 0; k < a.model.stages[s].mlp_w_out.size(); ++k)
                CHECK(a.model.stages[s].mlp_w_out.raw()[k] ==
                      b.model.stages[s].mlp_w_out.raw()[k]);
    }
    SECTION("separable frequency dataset trains to low error") {
        testing::FreqDatasetSpec spec;  // 200 series, length 64
        const LabeledDataset d = testing::two_class_freq_dataset(spec, 0);
        TrainConfig cfg;
        cfg.seed = 0;
        cfg.epochs = 200;
        const RcfTrainResult r = train_rcf(d, cfg);
        REQUIRE(!r.history.empty());
        CHECK(r.history.back().train_err <= 0.05);
    }
}
