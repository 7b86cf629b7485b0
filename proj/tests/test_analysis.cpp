#include <catch2/catch_amalgamated.hpp>

#include "mwdn/analysis.hpp"
#include "mwdn/gradcheck.hpp"
#include "synthetic.hpp"

using namespace mwdn;
using Catch::Approx;

namespace {

// Independent re-run of the classification chain with one sub-series
// overridden; used as the finite-difference oracle for layer importance.
double rcf_true_prob_with_override(const RcfModel& m, const Tensor1& x, std::size_t level,
                                   Branch branch, const Tensor1& override_vals,
                                   std::size_t true_class) {
    Tensor1 low = x;
    std::vector<Tensor1> highs, lows;
    for (std::size_t i = 0; i < m.mwdn.n_levels(); ++i) {
        const MwdnLevel& l = m.mwdn.levels[i];
        Tensor1 pre_low = l.w_low.matvec(low);
        axpy(pre_low, l.b_low, 1.0);
        Tensor1 pre_high = l.w_high.matvec(low);
        axpy(pre_high, l.b_high, 1.0);
        Tensor1 out_low = avg_downsample(even_pad(sigmoid(pre_low)));
        Tensor1 out_high = avg_downsample(even_pad(sigmoid(pre_high)));
        if (level == i + 1 && branch == Branch::kHigh) out_high = override_vals;
        if (level == i + 1 && branch == Branch::kLow) out_low = override_vals;
        highs.push_back(out_high);
        lows.push_back(out_low);
        low = lows.back();
    }
    Tensor1 prev(m.class_count, 0.0);
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        Tensor1 s = psi_forward(m.stages[i], highs[i], lows[i]);
        axpy(s, prev, 1.0);
        prev = softmax(s);
    }
    return prev[true_class];
}

}  // namespace

TEST_CASE("input_importance basics") {
    RcfModel m = make_rcf_model(16, 2, 2, PsiKind::kMlp, 4, db4_filters(), 1e-2, 5);
    RandomStream rng(5, "analysis.input");
    std::vector<TimeSeries> data;
    for (int s = 0; s < 6; ++s) {
        TimeSeries ts;
        ts.label = s % 2;
        ts.values.resize(16);
        for (double& v : ts.values) v = rng.normal();
        data.push_back(ts);
    }

    SECTION("all values non-negative and finite, length matches input") {
        const ImportanceSpectrum spec = input_importance(m, data);
        REQUIRE(spec.values.size() == 16);
        for (double v : spec.values) {
            CHECK(v >= 0.0);
            CHECK(std::isfinite(v));
        }
    }
    SECTION("duplicated dataset gives the identical spectrum") {
        std::vector<TimeSeries> doubled = data;
        doubled.insert(doubled.end(), data.begin(), data.end());
        const ImportanceSpectrum a = input_importance(m, data);
        const ImportanceSpectrum b = input_importance(m, doubled);
        for (std::size_t i = 0; i < a.values.size(); ++i)
            CHECK(a.values[i] == Approx(b.values[i]).margin(1e-15));
    }
    SECTION("one-sample dataset equals that sample's sensitivity") {
        const std::vector<TimeSeries> one{data[0]};
        const ImportanceSpectrum spec = input_importance(m, one);
        RcfForwardCache cache;
        rcf_forward(m, data[0].values, &cache);
        std::vector<Tensor1> d_chat(m.stages.size());
        d_chat.back() = one_hot(static_cast<std::size_t>(*data[0].label), 2);
        const RcfGradients g = rcf_backward_from_chat_grads(m, cache, d_chat, 0.0, 0.0);
        for (std::size_t i = 0; i < 16; ++i)
            CHECK(spec.values[i] == std::fabs(g.mwdn.input[i]));
    }
    SECTION("empty dataset rejected") {
        CHECK_THROWS(input_importance(m, std::vector<TimeSeries>{}));
    }
}

TEST_CASE("mlstm input importance matches direct finite differences") {
    MlstmModel m = make_mlstm_model(16, 2, 3, db4_filters(), 1e-2, 8);
    RandomStream rng(8, "analysis.mlstm");
    Tensor1 window(16);
    for (double& v : window) v = rng.uniform(-1.0, 1.0);
    const ImportanceSpectrum spec = input_importance(m, std::vector<Tensor1>{window});
    const double step = 1e-5;
    for (std::size_t i = 0; i < window.size(); ++i) {
        Tensor1 up = window, down = window;
        up[i] += 0.5 * step;
        down[i] -= 0.5 * step;
        const double numeric = (mlstm_predict(m, up) - mlstm_predict(m, down)) / step;
        const double denom = std::max({spec.values[i], std::fabs(numeric), 1e-8});
        CHECK(std::fabs(spec.values[i] - std::fabs(numeric)) / denom < 1e-4);
    }
}

TEST_CASE("sensitivity of a linear map is the absolute coefficient vector") {
    // mean |dM/dx| over any dataset equals |w| exactly when M(x) = w.x
    RandomStream rng(3, "analysis.linear");
    Tensor2 w(1, 8);
    for (double& v : w.raw()) v = rng.uniform(-2.0, 2.0);
    Tensor1 mean_abs(8, 0.0);
    for (int s = 0; s < 5; ++s) {
        Tensor1 x(8);
        for (double& v : x) v = rng.normal();
        FcCache cache;
        fc_forward(x, w, {0.0}, Activation::kIdentity, &cache);
        const FcGradients g = fc_backward(w, cache, {1.0});
        for (std::size_t i = 0; i < 8; ++i) mean_abs[i] += std::fabs(g.input[i]) / 5.0;
    }
    for (std::size_t i = 0; i < 8; ++i)
        CHECK(mean_abs[i] == Approx(std::fabs(w(0, i))).margin(1e-10));
}

TEST_CASE("layer_importance") {
    RcfModel m = make_rcf_model(16, 2, 2, PsiKind::kMlp, 4, db4_filters(), 1e-2, 13);
    TimeSeries sample;
    sample.label = 1;
    RandomStream rng(13, "analysis.layer");
    sample.values.resize(16);
    for (double& v : sample.values) v = rng.normal();
    const std::vector<TimeSeries> one{sample};

    SECTION("spectrum length equals the sub-series length") {
        CHECK(layer_importance(m, one, 1, Branch::kHigh).values.size() == 8);
        CHECK(layer_importance(m, one, 2, Branch::kHigh).values.size() == 4);
        CHECK(layer_importance(m, one, 2, Branch::kLow).values.size() == 4);
    }
    SECTION("invalid level rejected") {
        CHECK_THROWS(layer_importance(m, one, 3, Branch::kLow));
        CHECK_THROWS(layer_importance(m, one, 0, Branch::kLow));
    }
    SECTION("gradient at the layer matches finite differences on the downstream half") {
        const double step = 1e-5;
        for (std::size_t level : {std::size_t{1}, std::size_t{2}}) {
            for (Branch branch : {Branch::kHigh, Branch::kLow}) {
                const ImportanceSpectrum spec = layer_importance(m, one, level, branch);
                MwdnForwardCache cache;
                mwdn_forward(sample.values, m.mwdn, &cache);
                const Tensor1 base = branch == Branch::kHigh ? cache.levels[level - 1].out_high
                                                             : cache.levels[level - 1].out_low;
                for (std::size_t i = 0; i < base.size(); ++i) {
                    Tensor1 up = base, down = base;
                    up[i] += 0.5 * step;
                    down[i] -= 0.5 * step;
                    const double numeric =
                        (rcf_true_prob_with_override(m, sample.values, level, branch, up, 1) -
                         rcf_true_prob_with_override(m, sample.values, level, branch, down, 1)) /
                        step;
                    const double denom = std::max({spec.values[i], std::fabs(numeric), 1e-8});
                    CHECK(std::fabs(spec.values[i] - std::fabs(numeric)) / denom < 1e-4);
                }
            }
        }
    }
}

TEST_CASE("resize_spectrum") {
    ImportanceSpectrum s;
    s.values = {1.0, 3.0};

    SECTION("identity when lengths match") {
        const ImportanceSpectrum out = resize_spectrum(s, 2);
        CHECK(out.values == Tensor1{1.0, 3.0});
    }
    SECTION("nearest-neighbor stretch") {
        const ImportanceSpectrum out = resize_spectrum(s, 4);
        CHECK(out.values == Tensor1{1.0, 1.0, 3.0, 3.0});
    }
    SECTION("stretch preserves extremes") {
        ImportanceSpectrum t;
        t.values = {0.2, 5.0, 1.0, 0.1, 2.0};
        const ImportanceSpectrum out = resize_spectrum(t, 16);
        CHECK(*std::max_element(out.values.begin(), out.values.end()) == 5.0);
        CHECK(*std::min_element(out.values.begin(), out.values.end()) == 0.1);
    }
    SECTION("empty input rejected") {
        ImportanceSpectrum empty;
        CHECK_THROWS(resize_spectrum(empty, 4));
    }
}

TEST_CASE("error_rate and mpce") {
    CHECK(error_rate({0, 1, 1, 0}, {0, 1, 0, 0}) == 0.25);
    CHECK_THROWS(error_rate({}, {}));

    CHECK(mpce({{0.1, 2}, {0.3, 3}}) == Approx(0.075).margin(1e-12));
    CHECK(mpce({{0.0, 2}, {0.0, 5}}) == 0.0);
    CHECK_THROWS(mpce({}));
    CHECK_THROWS(mpce({{0.1, 1}}));

    SECTION("equal class counts reduce to mean error over c") {
        const double e1 = 0.12, e2 = 0.4, e3 = 0.08;
        CHECK(mpce({{e1, 4}, {e2, 4}, {e3, 4}}) ==
              Approx((e1 + e2 + e3) / 3.0 / 4.0).margin(1e-15));
    }
}

TEST_CASE("mape and rmse") {
    CHECK(mape({110.0, 180.0}, {100.0, 200.0}) == Approx(10.0).margin(1e-12));
    CHECK(rmse({110.0, 180.0}, {100.0, 200.0}) == Approx(std::sqrt(250.0)).margin(1e-12));
    CHECK(mape({5.0, 7.0}, {5.0, 7.0}) == 0.0);
    CHECK(rmse({5.0, 7.0}, {5.0, 7.0}) == 0.0);
    CHECK(rmse({3.0, 1.0}, {1.0, 3.0}) == rmse({1.0, 3.0}, {3.0, 1.0}));
    CHECK_THROWS(mape({1.0}, {0.0}));
    CHECK_THROWS(mape({1.0}, {1.0, 2.0}));
}

TEST_CASE("spectrum csv layout") {
    ImportanceSpectrum s;
    s.values = {0.5, 2.0, 1.0};
    const std::string path = "spectrum_test_out.csv";
    write_spectrum_csv(path, s);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "position,importance,importance_normalized");
    std::string row;
    std::getline(in, row);
    CHECK(row == "0,0.5,0");
    std::getline(in, row);
    CHECK(row == "1,2,1");
    std::getline(in, row);
    CHECK(row.rfind("2,1,", 0) == 0);  // normalized 1/3 prints in full precision
    std::filesystem::remove(path);
}
