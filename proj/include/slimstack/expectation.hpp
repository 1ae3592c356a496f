#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/rng.hpp"

namespace slimstack {

struct ExpectationResult {
    std::vector<std::size_t> budgets;       // sample counts, log-spaced
    std::vector<double> dev_scaled;         // max |mean - S*hc| / max|S*hc| per budget
    std::vector<double> dev_complement;     // same against (1-S)*hc
    Matrix hc;                              // sequential inverse rows, upper part
    Matrix approximation;                   // S * hc, the closed-form stand-in
    Matrix mean_final;                      // Monte Carlo mean at the largest budget
};

namespace detail {

// Log-spaced integer budgets from lo to hi inclusive, strictly increasing.
inline std::vector<std::size_t> log_budgets(std::size_t lo, std::size_t hi, std::size_t points) {
    std::vector<std::size_t> out;
    if (points == 0 || hi < lo) return out;
    const double llo = std::log(static_cast<double>(lo));
    const double lhi = std::log(static_cast<double>(hi));
    for (std::size_t i = 0; i < points; ++i) {
        const double t = points == 1 ? 1.0
                                     : static_cast<double>(i) / static_cast<double>(points - 1);
        auto b = static_cast<std::size_t>(std::llround(std::exp(llo + t * (lhi - llo))));
        if (out.empty() || b > out.back()) out.push_back(b);
    }
    if (out.empty() || out.back() != hi) out.push_back(hi);
    return out;
}

}  // namespace detail

// Monte Carlo check that the deterministic sequential inverse rows track the
// expected inverse under random earlier removals. For each sample, every
// column is independently marked removed with probability `sparsity`; one
// in-place removal sweep walks the columns left to right, and just before a
// marked column p is removed, its current inverse row over the remaining
// columns is accumulated. The running means are compared against the
// precomputed rows at log-spaced sample budgets; both the sparsity-scaled and
// the survival-scaled references are reported so either convention can be
// read off the same run.
inline ExpectationResult expectation_experiment(const Matrix& h, double sparsity,
                                                std::size_t n_samples, std::uint64_t seed,
                                                std::size_t n_budgets = 12) {
    const std::size_t d = h.rows();
    if (h.cols() != d || d == 0) {
        throw std::invalid_argument("expectation_experiment: square Hessian required");
    }
    if (d > 64) {
        throw std::invalid_argument("expectation_experiment: dimension capped at 64");
    }
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
        throw std::invalid_argument("expectation_experiment: sparsity outside [0, 1]");
    }
    if (n_samples == 0) {
        throw std::invalid_argument("expectation_experiment: need at least one sample");
    }

    const Matrix h_inv0 = invert_spd(h);
    ExpectationResult result;
    result.hc = cholesky_rows(h);
    result.approximation = scale(result.hc, sparsity);
    result.budgets = detail::log_budgets(std::min<std::size_t>(8, n_samples), n_samples,
                                         n_budgets);
    result.dev_scaled.reserve(result.budgets.size());
    result.dev_complement.reserve(result.budgets.size());
    const double norm_s = std::max(max_abs(result.approximation), 1e-300);
    const double norm_c = std::max(max_abs(scale(result.hc, 1.0 - sparsity)), 1e-300);

    Matrix sum(d, d);           // running sum of observed rows, global indexing
    Matrix count(d, d);         // samples contributing to each (p, j) cell
    Rng rng(seed);
    std::size_t next_budget = 0;

    for (std::size_t s = 0; s < n_samples; ++s) {
        Rng sample_rng = rng.split("sample", s);
        std::vector<bool> removed(d, false);
        for (std::size_t j = 0; j < d; ++j) removed[j] = sample_rng.bernoulli(sparsity);

        Matrix inv = h_inv0;
        std::vector<std::size_t> active(d);
        for (std::size_t j = 0; j < d; ++j) active[j] = j;

        for (std::size_t p = 0; p < d; ++p) {
            if (!removed[p]) continue;
            // locate p in the shrunken matrix
            std::size_t a = 0;
            while (active[a] != p) ++a;
            for (std::size_t b = 0; b < active.size(); ++b) {
                const std::size_t j = active[b];
                sum(p, j) += inv(a, b);
                count(p, j) += 1.0;
            }
            inv = remove_row_col(inv, a);
            active.erase(active.begin() + static_cast<std::ptrdiff_t>(a));
        }

        while (next_budget < result.budgets.size() && s + 1 == result.budgets[next_budget]) {
            double dev_s = 0.0, dev_c = 0.0;
            for (std::size_t p = 0; p < d; ++p) {
                for (std::size_t j = p; j < d; ++j) {
                    if (count(p, j) == 0.0) continue;
                    const double mean = sum(p, j) / count(p, j);
                    dev_s = std::max(dev_s, std::abs(mean - sparsity * result.hc(p, j)));
                    dev_c = std::max(dev_c, std::abs(mean - (1.0 - sparsity) * result.hc(p, j)));
                }
            }
            result.dev_scaled.push_back(dev_s / norm_s);
            result.dev_complement.push_back(dev_c / norm_c);
            ++next_budget;
        }
    }

    result.mean_final = Matrix(d, d);
    for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t j = 0; j < d; ++j) {
            result.mean_final(p, j) = count(p, j) > 0.0 ? sum(p, j) / count(p, j) : 0.0;
        }
    }
    return result;
}

}  // namespace slimstack
