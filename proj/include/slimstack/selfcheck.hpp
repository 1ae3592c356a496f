#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "slimstack/expectation.hpp"
#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/pruning.hpp"
#include "slimstack/rng.hpp"
#include "slimstack/scheduler.hpp"

namespace slimstack {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline Matrix random_gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian();
    return m;
}

inline Matrix random_spd(Rng& rng, std::size_t d) {
    const Matrix x = random_gaussian(rng, d, 2 * d);
    return build_hessian(x, 0.01).h;
}

}  // namespace detail

// Cross-route consistency suite behind the `verify` command: each check
// compares two independent computation paths of the library on seeded
// random instances. Kept fast enough for interactive use.
inline std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
    std::vector<CheckResult> results;
    Rng root(seed);

    {  // closed-form compensation vs constrained least squares
        double worst = 0.0;
        for (std::size_t rep = 0; rep < 10; ++rep) {
            Rng rng = root.split("compensation", rep);
            const std::size_t d = 12;
            const Matrix x = detail::random_gaussian(rng, d, 48);
            const HessianState hs = build_prepared_hessian(x, 0.01);
            std::vector<double> w(d);
            for (double& v : w) v = rng.gaussian();
            const std::size_t p = rng.uniform_index(d);

            std::vector<double> hinv_row(d);
            for (std::size_t j = 0; j < d; ++j) hinv_row[j] = hs.h_inv(p, j);
            const std::vector<double> delta = compensation(w[p], p, hinv_row, hs.h_inv(p, p));
            std::vector<double> w_greedy(d);
            for (std::size_t j = 0; j < d; ++j) w_greedy[j] = w[j] + delta[j];
            const std::vector<double> w_ls = ls_optimal_compensation(w, {p}, hs.h);

            double scale = 0.0, diff = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                scale = std::max(scale, std::abs(w_ls[j]));
                diff = std::max(diff, std::abs(w_greedy[j] - w_ls[j]));
            }
            worst = std::max(worst, diff / std::max(scale, 1e-300));
        }
        results.push_back({"compensation_vs_least_squares", worst <= 1e-6,
                           "max rel diff " + std::to_string(worst)});
    }

    {  // iterated removal update vs direct submatrix inversion
        double worst = 0.0;
        for (std::size_t rep = 0; rep < 10; ++rep) {
            Rng rng = root.split("removal", rep);
            const std::size_t d = 16;
            Matrix h = detail::random_spd(rng, d);
            Matrix inv = invert_spd(h);
            Matrix sub = h;
            for (std::size_t step = 0; step < 8; ++step) {
                const std::size_t p = rng.uniform_index(sub.rows());
                inv = remove_row_col(inv, p);
                sub = delete_row_col(sub, p);
                worst = std::max(worst, max_rel_diff(inv, invert_spd(sub)));
            }
        }
        results.push_back({"removal_update_vs_reinversion", worst <= 1e-8,
                           "max rel diff " + std::to_string(worst)});
    }

    {  // Cholesky-derived sequential rows vs explicit removal sweep
        double worst = 0.0;
        for (std::size_t rep = 0; rep < 5; ++rep) {
            Rng rng = root.split("cholrows", rep);
            const std::size_t d = 16;
            const Matrix h = detail::random_spd(rng, d);
            const Matrix hc = cholesky_rows(h);
            Matrix inv = invert_spd(h);
            for (std::size_t p = 0; p < d; ++p) {
                for (std::size_t j = p; j < d; ++j) {
                    const double ref = inv(0, j - p);
                    const double diff = std::abs(hc(p, j) - ref);
                    worst = std::max(worst, diff / std::max(std::abs(ref), 1e-300));
                }
                if (p + 1 < d) inv = remove_row_col(inv, 0);
            }
        }
        results.push_back({"cholesky_rows_vs_removal_sweep", worst <= 1e-8,
                           "max rel diff " + std::to_string(worst)});
    }

    {  // greedy row pruning matches exhaustive per-step argmin
        bool ok = true;
        for (std::size_t rep = 0; rep < 10 && ok; ++rep) {
            Rng rng = root.split("greedy", rep);
            const std::size_t d = 8;
            const Matrix h = detail::random_spd(rng, d);
            std::vector<double> w(d);
            for (double& v : w) v = rng.gaussian();
            const ObcRowResult res = obc_prune_row(w, h, 3);

            std::vector<double> cur = w;
            std::vector<std::size_t> active(d);
            for (std::size_t j = 0; j < d; ++j) active[j] = j;
            Matrix sub = h;
            for (std::size_t step = 0; step < res.pruned.size(); ++step) {
                const Matrix inv = invert_spd(sub);
                std::size_t best = 0;
                double best_loss = 0.0;
                for (std::size_t a = 0; a < active.size(); ++a) {
                    const double loss = cur[active[a]] * cur[active[a]] / (2.0 * inv(a, a));
                    if (a == 0 || loss < best_loss) {
                        best = a;
                        best_loss = loss;
                    }
                }
                if (active[best] != res.pruned[step]) {
                    ok = false;
                    break;
                }
                const double ratio = cur[active[best]] / inv(best, best);
                for (std::size_t b = 0; b < active.size(); ++b) {
                    cur[active[b]] -= ratio * inv(best, b);
                }
                cur[active[best]] = 0.0;
                sub = delete_row_col(sub, best);
                active.erase(active.begin() + static_cast<std::ptrdiff_t>(best));
            }
        }
        results.push_back({"greedy_vs_exhaustive_argmin", ok,
                           ok ? "selection indices identical" : "selection mismatch"});
    }

    {  // expectation experiment: deviation stops shrinking (approximation floor)
        Rng hrng = root.split("expectation-h");
        const Matrix h = detail::random_spd(hrng, 8);
        Rng erng = root.split("expectation");
        const ExpectationResult er =
            expectation_experiment(h, 0.5, 2000, erng.next_u64(), 10);
        const double early = er.dev_scaled.front();
        const double late = er.dev_scaled.back();
        const bool pass = late <= 1.10 * early;
        results.push_back({"expectation_scaled_rows", pass,
                           "dev " + std::to_string(early) + " -> " + std::to_string(late)});
    }

    {  // Lloyd clustering never beats the exact DP oracle
        bool ok = true;
        double worst_gap = 0.0;
        for (std::size_t rep = 0; rep < 20 && ok; ++rep) {
            Rng rng = root.split("kmeans", rep);
            const std::size_t n = 6 + rng.uniform_index(20);
            std::vector<double> scores(n);
            for (double& s : scores) s = std::pow(10.0, rng.uniform(-6.0, 0.0));
            const std::size_t k = 1 + rng.uniform_index(std::min<std::size_t>(n, 6));
            const Clustering lloyd = kmeans_log(scores, k, rng.next_u64());
            const Clustering exact = kmeans_1d_exact(scores, k);
            if (lloyd.objective < exact.objective - 1e-12) ok = false;
            worst_gap = std::max(worst_gap, lloyd.objective - exact.objective);
        }
        results.push_back({"kmeans_vs_exact_dp", ok,
                           ok ? "max objective gap " + std::to_string(worst_gap)
                              : "lloyd beat the exact optimum (impossible)"});
    }

    return results;
}

}  // namespace slimstack
