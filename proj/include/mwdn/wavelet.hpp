#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwdn/tensor.hpp"

namespace mwdn {

// Low/high-pass decomposition filter pair.
struct WaveletFilterPair {
    Tensor1 low;
    Tensor1 high;

    std::size_t taps() const { return low.size(); }
};

// Daubechies-4 coefficients, 4 decimal places. The low-pass sums to ~sqrt(2),
// the high-pass to ~0 (both only within the printed precision).
inline WaveletFilterPair db4_filters() {
    WaveletFilterPair f;
    f.low = {-0.0106, 0.0329, 0.0308, -0.187, -0.028, 0.6309, 0.7148, 0.2304};
    f.high = {-0.2304, 0.7148, -0.6309, -0.028, 0.187, 0.0308, -0.0329, -0.0106};
    return f;
}

inline void validate_filters(const WaveletFilterPair& f) {
    require(f.low.size() == f.high.size(), "filter pair: low/high length mismatch");
    require(f.low.size() >= 2, "filter pair: need at least 2 taps");
}

// One decomposition step: correlate the series with both filters.
// out[n] = sum_k x[n + k] * coeff[k], with zero-extension past the end, so the
// output has the same length as the input and matches the banded weight-matrix
// form (truncated bottom rows) exactly.
struct ConvolvedPair {
    Tensor1 low;
    Tensor1 high;
};

inline ConvolvedPair convolve_level(const Tensor1& x, const WaveletFilterPair& filters) {
    if (x.empty()) throw std::invalid_argument("empty series");
    validate_filters(filters);
    const std::size_t n = x.size();
    const std::size_t k_taps = filters.taps();
    ConvolvedPair out{Tensor1(n, 0.0), Tensor1(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t span = std::min(k_taps, n - i);
        double lo = 0.0, hi = 0.0;
        for (std::size_t k = 0; k < span; ++k) {
            const double v = x[i + k];
            lo += v * filters.low[k];
            hi += v * filters.high[k];
        }
        out.low[i] = lo;
        out.high[i] = hi;
    }
    return out;
}

// Repeat the final element once if the length is odd. Pooling only accepts
// even lengths.
inline Tensor1 even_pad(const Tensor1& a) {
    Tensor1 out = a;
    if (out.size() % 2 != 0) out.push_back(out.back());
    return out;
}

// Pairwise mean: out[j] = (a[2j] + a[2j+1]) / 2.
inline Tensor1 avg_downsample(const Tensor1& a) {
    if (a.size() % 2 != 0) throw std::invalid_argument("unpadded odd-length input");
    Tensor1 out(a.size() / 2);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = 0.5 * (a[2 * j] + a[2 * j + 1]);
    return out;
}

// Level-N decomposition result: high-frequency detail per level plus the final
// low-frequency approximation. Frequencies run high to low across `high`.
struct SubSeriesSet {
    std::vector<Tensor1> high;
    Tensor1 low_final;

    std::size_t level_count() const { return high.size(); }
};

// Iterates convolve -> even-pad -> pool down the low-frequency branch. The
// k-th sub-series length obeys the halving law ceil(prev / 2).
inline SubSeriesSet mdwd_decompose(const Tensor1& x, std::size_t n_levels,
                                   const WaveletFilterPair& filters) {
    require(n_levels >= 1, "mdwd_decompose: n_levels must be >= 1");
    if (x.empty()) throw std::invalid_argument("empty series");
    if (x.size() < (std::size_t{1} << n_levels))
        throw std::invalid_argument("insufficient length: series of length " +
                                    std::to_string(x.size()) + " cannot support " +
                                    std::to_string(n_levels) + " levels");
    SubSeriesSet out;
    Tensor1 low = x;
    for (std::size_t level = 0; level < n_levels; ++level) {
        ConvolvedPair conv = convolve_level(low, filters);
        out.high.push_back(avg_downsample(even_pad(conv.high)));
        low = avg_downsample(even_pad(conv.low));
    }
    out.low_final = std::move(low);
    return out;
}

}  // namespace mwdn
