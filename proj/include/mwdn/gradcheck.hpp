#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwdn/tensor.hpp"

namespace mwdn {

// Central-difference check of analytic gradients. `forward` re-evaluates the
// scalar objective from current parameter values; `params` is mutated in
// place (each entry nudged +/- step/2 and restored). Returns the maximum
// relative error, denominator max(|analytic|, |numeric|, 1e-8).
//
// This is the independent test oracle for every hand-derived backward pass;
// it never calls any backward code itself.
inline double finite_difference_check(const std::function<double()>& forward,
                                      std::span<double> params,
                                      std::span<const double> analytic, double step = 1e-5) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be > 0");
    require(params.size() == analytic.size(),
            "finite_difference_check: gradient/parameter size mismatch");
    double max_rel = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + 0.5 * step;
        const double up = forward();
        params[i] = saved - 0.5 * step;
        const double down = forward();
        params[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::runtime_error("finite_difference_check: non-finite forward value");
        const double numeric = (up - down) / step;
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
        const double rel = std::fabs(analytic[i] - numeric) / denom;
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

// Accumulates (parameter block, analytic gradient block) pairs so a model's
// full parameter set can be checked with one forward closure.
class GradCheckSet {
public:
    void add(std::span<double> params, std::span<const double> analytic, std::string name = {}) {
        require(params.size() == analytic.size(), "GradCheckSet: block size mismatch");
        blocks_.push_back(Block{params, analytic, std::move(name)});
    }

    void add(Tensor2& params, const Tensor2& analytic, std::string name = {}) {
        add(std::span<double>(params.raw()), std::span<const double>(analytic.raw()),
            std::move(name));
    }

    void add(Tensor1& params, const Tensor1& analytic, std::string name = {}) {
        add(std::span<double>(params), std::span<const double>(analytic), std::move(name));
    }

    // Max relative error across all blocks; `worst` (if given) receives the
    // name of the block that produced it.
    double run(const std::function<double()>& forward, double step = 1e-5,
               std::string* worst = nullptr) const {
        double max_rel = 0.0;
        for (const Block& b : blocks_) {
            const double rel = finite_difference_check(forward, b.params, b.analytic, step);
            if (rel > max_rel) {
                max_rel = rel;
                if (worst) *worst = b.name;
            }
        }
        return max_rel;
    }

private:
    struct Block {
        std::span<double> params;
        std::span<const double> analytic;
        std::string name;
    };
    std::vector<Block> blocks_;
};

}  // namespace mwdn
