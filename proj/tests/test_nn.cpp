#include <catch2/catch_amalgamated.hpp>

#include "mwdn/gradcheck.hpp"
#include "mwdn/nn.hpp"
#include "mwdn/rng.hpp"

using namespace mwdn;
using Catch::Approx;

namespace {

Tensor1 random_vec(RandomStream& rng, std::size_t n, double scale = 1.0) {
    Tensor1 v(n);
    for (double& x : v) x = rng.uniform(-scale, scale);
    return v;
}

Tensor2 random_mat(RandomStream& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Tensor2 m(r, c);
    for (double& x : m.raw()) x = rng.uniform(-scale, scale);
    return m;
}

}  // namespace

TEST_CASE("sigmoid") {
    CHECK(sigmoid({0.0}) == Tensor1{0.5});
    CHECK(sigmoid({1e3})[0] == Approx(1.0).margin(1e-12));
    CHECK(sigmoid({-1e3})[0] == Approx(0.0).margin(1e-12));
    CHECK(activation_derivative(Activation::kSigmoid, 0.0, 0.5) == Approx(0.25));
}

TEST_CASE("softmax") {
    CHECK(softmax({0.0, 0.0}) == Tensor1{0.5, 0.5});
    CHECK(softmax({1000.0, 1000.0})[0] == Approx(0.5).margin(1e-12));
    CHECK_THROWS(softmax({}));

    RandomStream rng(0, "softmax.property");
    for (int trial = 0; trial < 25; ++trial) {
        Tensor1 v = random_vec(rng, 1 + trial % 7, 10.0);
        const Tensor1 p = softmax(v);
        double sum = 0.0;
        for (double x : p) sum += x;
        CHECK(sum == Approx(1.0).margin(1e-12));
        // argmax preserved
        std::size_t av = 0, ap = 0;
        for (std::size_t i = 1; i < v.size(); ++i) {
            if (v[i] > v[av]) av = i;
            if (p[i] > p[ap]) ap = i;
        }
        CHECK(av == ap);
        // shift invariance
        Tensor1 shifted = v;
        for (double& x : shifted) x += 123.456;
        const Tensor1 p2 = softmax(shifted);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(p2[i] == Approx(p[i]).margin(1e-12));
    }
}

TEST_CASE("fc forward") {
    SECTION("identity weights pass through") {
        Tensor2 w(3, 3);
        for (std::size_t i = 0; i < 3; ++i) w(i, i) = 1.0;
        const Tensor1 x{0.3, -1.2, 2.0};
        CHECK(fc_forward(x, w, Tensor1(3, 0.0), Activation::kIdentity) == x);
    }
    SECTION("zero weights with sigmoid give 0.5") {
        const Tensor1 out = fc_forward({1.0, 2.0}, Tensor2(4, 2), Tensor1(4, 0.0),
                                       Activation::kSigmoid);
        CHECK(out == Tensor1(4, 0.5));
    }
    SECTION("worked example") {
        Tensor2 w(1, 2);
        w(0, 0) = 1.0;
        w(0, 1) = 1.0;
        CHECK(fc_forward({1.0, 2.0}, w, {0.0}, Activation::kIdentity) == Tensor1{3.0});
    }
    SECTION("shape mismatch") {
        CHECK_THROWS(fc_forward({1.0, 2.0, 3.0}, Tensor2(2, 2), Tensor1(2, 0.0),
                                Activation::kIdentity));
    }
}

TEST_CASE("fc backward matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed, "fc.gradcheck");
        Tensor2 w = random_mat(rng, 8, 4);
        Tensor1 b = random_vec(rng, 8);
        Tensor1 x = random_vec(rng, 4);
        const Tensor1 probe = random_vec(rng, 8);
        const Activation act = seed % 2 ? Activation::kSigmoid : Activation::kRelu;

        auto objective = [&] {
            const Tensor1 out = fc_forward(x, w, b, act);
            double j = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) j += probe[i] * out[i];
            return j;
        };
        FcCache cache;
        fc_forward(x, w, b, act, &cache);
        const FcGradients g = fc_backward(w, cache, probe);
        GradCheckSet set;
        set.add(w, g.weight, "weight");
        set.add(b, g.bias, "bias");
        set.add(x, g.input, "input");
        CHECK(set.run(objective) < 1e-4);
    }
}

TEST_CASE("fc backward special cases") {
    RandomStream rng(1, "fc.special");
    Tensor2 w = random_mat(rng, 3, 5);
    Tensor1 b = random_vec(rng, 3);
    Tensor1 x = random_vec(rng, 5);
    FcCache cache;
    fc_forward(x, w, b, Activation::kIdentity, &cache);

    SECTION("zero upstream gives zero gradients") {
        const FcGradients g = fc_backward(w, cache, Tensor1(3, 0.0));
        for (double v : g.weight.raw()) CHECK(v == 0.0);
        for (double v : g.bias) CHECK(v == 0.0);
        for (double v : g.input) CHECK(v == 0.0);
    }
    SECTION("identity activation input gradient is W^T upstream") {
        const Tensor1 up = random_vec(rng, 3);
        const FcGradients g = fc_backward(w, cache, up);
        const Tensor1 expect = w.matvec_transposed(up);
        for (std::size_t i = 0; i < expect.size(); ++i) CHECK(g.input[i] == expect[i]);
    }
}

TEST_CASE("conv1d forward") {
    CHECK(conv1d_forward({1.0, 2.0, 3.0}, {1.0, 1.0}) == Tensor1{3.0, 5.0});
    CHECK(conv1d_forward({4.0, -1.0, 2.0}, {1.0}) == Tensor1{4.0, -1.0, 2.0});
    CHECK_THROWS_WITH(conv1d_forward({1.0}, {1.0, 2.0}), "conv1d: kernel longer than input");
}

TEST_CASE("conv1d backward matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed, "conv.gradcheck");
        Tensor1 x = random_vec(rng, 9);
        Tensor1 k = random_vec(rng, 3);
        const Tensor1 probe = random_vec(rng, 7);
        auto objective = [&] {
            const Tensor1 out = conv1d_forward(x, k);
            double j = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) j += probe[i] * out[i];
            return j;
        };
        Conv1dCache cache;
        conv1d_forward(x, k, &cache);
        const Conv1dGradients g = conv1d_backward(cache, probe);
        GradCheckSet set;
        set.add(k, g.kernel, "kernel");
        set.add(x, g.input, "input");
        CHECK(set.run(objective) < 1e-4);
    }
}

TEST_CASE("lstm forward") {
    SECTION("all-zero parameters give zero hidden states") {
        LstmParams p = make_lstm_params(2, 3);
        const std::vector<Tensor1> xs{{1.0, -2.0}, {0.5, 4.0}};
        const LstmForwardResult r = lstm_forward(xs, p, zero_lstm_state(3));
        REQUIRE(r.hidden_seq.size() == 2);
        for (const Tensor1& h : r.hidden_seq)
            for (double v : h) CHECK(v == 0.0);
    }
    SECTION("empty input returns the initial state") {
        LstmParams p = make_lstm_params(2, 3);
        LstmState init = zero_lstm_state(3);
        init.hidden[1] = 0.7;
        const LstmForwardResult r = lstm_forward({}, p, init);
        CHECK(r.hidden_seq.empty());
        CHECK(r.final_state.hidden == init.hidden);
        CHECK(r.final_state.cell == init.cell);
    }
    SECTION("inconsistent step sizes rejected") {
        LstmParams p = make_lstm_params(2, 3);
        CHECK_THROWS(lstm_forward({{1.0, 2.0}, {1.0}}, p, zero_lstm_state(3)));
    }
    SECTION("deterministic") {
        RandomStream rng(5, "lstm.det");
        LstmParams p = make_lstm_params(2, 4);
        init_lstm_params(p, rng);
        const std::vector<Tensor1> xs{{0.1, 0.2}, {-0.4, 1.0}, {2.0, -0.3}};
        const LstmForwardResult a = lstm_forward(xs, p, zero_lstm_state(4));
        const LstmForwardResult b = lstm_forward(xs, p, zero_lstm_state(4));
        for (std::size_t t = 0; t < xs.size(); ++t)
            for (std::size_t j = 0; j < 4; ++j) CHECK(a.hidden_seq[t][j] == b.hidden_seq[t][j]);
    }
}

TEST_CASE("lstm backward matches finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        RandomStream rng(seed, "lstm.gradcheck");
        LstmParams p = make_lstm_params(4, 4);
        init_lstm_params(p, rng);
        std::vector<Tensor1> xs;
        std::vector<Tensor1> probes;
        for (int t = 0; t < 3; ++t) {
            xs.push_back(random_vec(rng, 4));
            probes.push_back(random_vec(rng, 4));
        }
        auto objective = [&] {
            const LstmForwardResult r = lstm_forward(xs, p, zero_lstm_state(4));
            double j = 0.0;
            for (std::size_t t = 0; t < r.hidden_seq.size(); ++t)
                for (std::size_t i = 0; i < 4; ++i) j += probes[t][i] * r.hidden_seq[t][i];
            return j;
        };
        LstmCache cache;
        lstm_forward(xs, p, zero_lstm_state(4), &cache);
        const LstmGradients g = lstm_backward(p, cache, probes);
        GradCheckSet set;
        set.add(p.w_input, g.w_input, "w_input");
        set.add(p.w_hidden, g.w_hidden, "w_hidden");
        set.add(p.bias, g.bias, "bias");
        for (std::size_t t = 0; t < xs.size(); ++t) set.add(xs[t], g.inputs[t], "x");
        CHECK(set.run(objective) < 1e-4);
    }
}

TEST_CASE("cross entropy") {
    CHECK(cross_entropy({1.0, 0.0}, {1.0 - 1e-12, 1e-12}) == Approx(0.0).margin(1e-9));
    CHECK(cross_entropy({1.0, 0.0}, {0.5, 0.5}) == Approx(2.0 * std::log(2.0)).margin(1e-12));
    CHECK_THROWS(cross_entropy({1.0}, {0.5, 0.5}));

    RandomStream rng(2, "ce.property");
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + trial % 5;
        Tensor1 p = softmax(random_vec(rng, n, 3.0));
        const Tensor1 c = one_hot(trial % n, n);
        CHECK(cross_entropy(c, p) >= 0.0);
        CHECK(cross_entropy(c, c) == Approx(0.0).margin(1e-10));
    }
}

TEST_CASE("mse") {
    CHECK(mse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    CHECK(mse({2.0}, {0.0}) == 4.0);
    CHECK(mse({1.0, 5.0}, {2.0, 3.0}) == mse({2.0, 3.0}, {1.0, 5.0}));
    CHECK_THROWS(mse({1.0}, {1.0, 2.0}));
}

TEST_CASE("finite_difference_check") {
    SECTION("linear objective is exact") {
        Tensor1 params{0.4, -1.2, 3.0};
        const Tensor1 grads{2.0, -1.0, 0.5};
        auto objective = [&] {
            return 2.0 * params[0] - params[1] + 0.5 * params[2];
        };
        CHECK(finite_difference_check(objective, params, grads) < 1e-8);
    }
    SECTION("sigmoid fc at seed 0") {
        RandomStream rng(0, "fd.sigmoid");
        Tensor2 w = random_mat(rng, 4, 3);
        Tensor1 b = random_vec(rng, 4);
        const Tensor1 x = random_vec(rng, 3);
        const Tensor1 probe = random_vec(rng, 4);
        auto objective = [&] {
            const Tensor1 out = fc_forward(x, w, b, Activation::kSigmoid);
            double j = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) j += probe[i] * out[i];
            return j;
        };
        FcCache cache;
        fc_forward(x, w, b, Activation::kSigmoid, &cache);
        const FcGradients g = fc_backward(w, cache, probe);
        CHECK(finite_difference_check(objective, std::span<double>(w.raw()),
                                      std::span<const double>(g.weight.raw())) < 1e-4);
    }
    SECTION("zero step rejected") {
        Tensor1 params{1.0};
        const Tensor1 grads{1.0};
        CHECK_THROWS(finite_difference_check([] { return 0.0; }, params, grads, 0.0));
    }
    SECTION("non-finite forward rejected") {
        Tensor1 params{1.0};
        const Tensor1 grads{1.0};
        CHECK_THROWS(finite_difference_check(
            [] { return std::numeric_limits<double>::quiet_NaN(); }, params, grads));
    }
}
