#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/model.hpp"
#include "slimstack/pruning.hpp"
#include "slimstack/rng.hpp"

namespace slimstack {

// Mean per-weight pruning loss of a layer under the precomputed sequential
// inverse rows: (1 / (d_row * d_col)) * sum_ip w[i][p]^2 / (2 * hc[p][p]).
inline double layer_score(const Matrix& w, const Matrix& hc) {
    if (hc.rows() != w.cols() || hc.cols() != w.cols()) {
        throw std::invalid_argument("layer_score: dimension mismatch");
    }
    if (w.rows() == 0 || w.cols() == 0) {
        throw std::invalid_argument("layer_score: empty weight matrix");
    }
    double sum = 0.0;
    for (std::size_t p = 0; p < w.cols(); ++p) {
        const double hc_pp = hc(p, p);
        if (!(hc_pp > 0.0)) {
            throw std::invalid_argument("layer_score: nonpositive inverse diagonal");
        }
        double col = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) col += w(i, p) * w(i, p);
        sum += col / (2.0 * hc_pp);
    }
    return sum / static_cast<double>(w.rows() * w.cols());
}

struct ScoreEntry {
    std::string layer_name;
    std::size_t param_count = 0;
    double score = 0.0;
};

struct ScoreReport {
    std::vector<ScoreEntry> entries;
};

struct ScoreConfig {
    double damping_frac = 0.01;
    // Scoring normally runs on activations propagated through the dense
    // model (scheduling precedes any pruning). The alternative propagates
    // through provisionally pruned layers instead.
    bool compressed_activations = false;
    double provisional_sparsity = 0.7;
    std::size_t block_size = 128;
};

inline ScoreReport score_model(const LinearModel& model, const CalibrationSet& calib,
                               const ScoreConfig& cfg = {}) {
    validate_model(model);
    if (calib.x0.rows() != model.d_in()) {
        throw std::invalid_argument("score_model: calibration dimension mismatch");
    }
    ScoreReport report;
    Matrix x = calib.x0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LinearLayer& layer = model.layers[l];
        const HessianState hs = build_prepared_hessian(x, cfg.damping_frac);
        report.entries.push_back(
            {layer.name, layer.w.rows() * layer.w.cols(), layer_score(layer.w, hs.hc)});
        if (l + 1 == model.layers.size()) break;
        if (cfg.compressed_activations) {
            PruneConfig pc;
            pc.block_size = cfg.block_size;
            pc.damping_frac = cfg.damping_frac;
            const Matrix w_hat =
                sparsegpt_prune_layer(layer.w, hs, cfg.provisional_sparsity, pc).w_hat;
            x = apply_activation(layer.act, matmul(w_hat, x));
        } else {
            x = layer_forward(layer, x);
        }
    }
    return report;
}

struct Clustering {
    std::size_t k = 0;
    std::vector<double> centroids;        // log10 domain, ascending
    std::vector<std::size_t> assignment;  // point index -> cluster index
    double objective = 0.0;               // sum of squared log10 deviations
    std::vector<double> objective_trace;  // per Lloyd iteration, best restart
};

namespace detail {

inline std::vector<double> log10_scores(const std::vector<double>& scores) {
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] > 0.0) || !std::isfinite(scores[i])) {
            throw std::invalid_argument("scores must be positive and finite");
        }
        out[i] = std::log10(scores[i]);
    }
    return out;
}

// Canonical objective: recompute each cluster's centroid as the mean of its
// members and sum squared deviations. Used for every objective the module
// reports so the two clustering routes are compared on identical footing.
inline double assignment_objective(const std::vector<double>& pts,
                                   const std::vector<std::size_t>& assignment, std::size_t k) {
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        sum[assignment[i]] += pts[i];
        ++cnt[assignment[i]];
    }
    double obj = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const std::size_t c = assignment[i];
        const double mu = sum[c] / static_cast<double>(cnt[c]);
        const double d = pts[i] - mu;
        obj += d * d;
    }
    return obj;
}

// Sort clusters by centroid ascending and remap the assignment; empty
// clusters keep their last centroid value and sort in with the rest.
inline void canonicalize_clustering(Clustering& c) {
    std::vector<std::size_t> order(c.k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return c.centroids[a] < c.centroids[b];
    });
    std::vector<std::size_t> rank(c.k);
    for (std::size_t r = 0; r < c.k; ++r) rank[order[r]] = r;
    std::vector<double> centroids(c.k);
    for (std::size_t r = 0; r < c.k; ++r) centroids[r] = c.centroids[order[r]];
    c.centroids = std::move(centroids);
    for (auto& a : c.assignment) a = rank[a];
}

}  // namespace detail

// Seeded k-means++ / Lloyd on log10 scores, best of n_init restarts. The
// per-iteration objective of the winning restart is kept so the monotone
// descent property can be checked from outside.
inline Clustering kmeans_log(const std::vector<double>& scores, std::size_t k,
                             std::uint64_t seed, std::size_t max_iter = 100,
                             std::size_t n_init = 10) {
    const std::size_t n = scores.size();
    if (k < 1) throw std::invalid_argument("kmeans_log: k must be >= 1");
    if (k > n) throw std::invalid_argument("kmeans_log: k exceeds point count");
    const std::vector<double> pts = detail::log10_scores(scores);

    Clustering best;
    bool have_best = false;
    Rng root(seed);

    for (std::size_t init = 0; init < n_init; ++init) {
        Rng rng = root.split("init", init);

        // k-means++ seeding
        std::vector<double> centroids;
        centroids.reserve(k);
        centroids.push_back(pts[rng.uniform_index(n)]);
        std::vector<double> d2(n);
        while (centroids.size() < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double dmin = std::numeric_limits<double>::infinity();
                for (double c : centroids) dmin = std::min(dmin, (pts[i] - c) * (pts[i] - c));
                d2[i] = dmin;
                total += dmin;
            }
            std::size_t pick = 0;
            if (total > 0.0) {
                const double u = rng.uniform() * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (u < acc) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = rng.uniform_index(n);
            }
            centroids.push_back(pts[pick]);
        }

        std::vector<std::size_t> assignment(n, 0), prev;
        std::vector<double> trace;
        for (std::size_t iter = 0; iter < max_iter; ++iter) {
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t bc = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (std::size_t c = 0; c < k; ++c) {
                    const double d = (pts[i] - centroids[c]) * (pts[i] - centroids[c]);
                    if (d < bd) {  // strict: ties stay with the lower index
                        bd = d;
                        bc = c;
                    }
                }
                assignment[i] = bc;
            }
            trace.push_back(detail::assignment_objective(pts, assignment, k));
            if (assignment == prev) break;
            prev = assignment;

            std::vector<double> sum(k, 0.0);
            std::vector<std::size_t> cnt(k, 0);
            for (std::size_t i = 0; i < n; ++i) {
                sum[assignment[i]] += pts[i];
                ++cnt[assignment[i]];
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (cnt[c] > 0) centroids[c] = sum[c] / static_cast<double>(cnt[c]);
            }
            // Reseed empty clusters on the point farthest from its centroid.
            for (std::size_t c = 0; c < k; ++c) {
                if (cnt[c] > 0) continue;
                std::size_t far = 0;
                double fd = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d =
                        (pts[i] - centroids[assignment[i]]) * (pts[i] - centroids[assignment[i]]);
                    if (d > fd) {
                        fd = d;
                        far = i;
                    }
                }
                centroids[c] = pts[far];
                assignment[far] = c;
                ++cnt[c];
            }
        }

        Clustering cand;
        cand.k = k;
        cand.centroids = centroids;
        cand.assignment = assignment;
        cand.objective = detail::assignment_objective(pts, assignment, k);
        cand.objective_trace = trace;
        if (!have_best || cand.objective < best.objective) {
            best = std::move(cand);
            have_best = true;
        }
    }
    detail::canonicalize_clustering(best);
    return best;
}

// Exact 1-D k-means via dynamic programming over contiguous partitions of
// the sorted log10 scores (optimal 1-D clusters are contiguous).
inline Clustering kmeans_1d_exact(const std::vector<double>& scores, std::size_t k) {
    const std::size_t n = scores.size();
    if (k < 1) throw std::invalid_argument("kmeans_1d_exact: k must be >= 1");
    if (k > n) throw std::invalid_argument("kmeans_1d_exact: k exceeds point count");
    const std::vector<double> pts = detail::log10_scores(scores);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pts[a] < pts[b]; });
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = pts[order[i]];

    // Prefix sums for O(1) segment SSE.
    std::vector<double> ps(n + 1, 0.0), ps2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        ps[i + 1] = ps[i] + s[i];
        ps2[i + 1] = ps2[i] + s[i] * s[i];
    }
    const auto sse = [&](std::size_t a, std::size_t b) {  // points a..b inclusive
        const double cnt = static_cast<double>(b - a + 1);
        const double sum = ps[b + 1] - ps[a];
        return std::max(0.0, (ps2[b + 1] - ps2[a]) - sum * sum / cnt);
    };

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> dp(k + 1, std::vector<double>(n, inf));
    std::vector<std::vector<std::size_t>> cut(k + 1, std::vector<std::size_t>(n, 0));
    for (std::size_t j = 0; j < n; ++j) dp[1][j] = sse(0, j);
    for (std::size_t m = 2; m <= k; ++m) {
        for (std::size_t j = m - 1; j < n; ++j) {
            for (std::size_t i = m - 1; i <= j; ++i) {  // segment m starts at i
                const double cand = dp[m - 1][i - 1] + sse(i, j);
                if (cand < dp[m][j]) {
                    dp[m][j] = cand;
                    cut[m][j] = i;
                }
            }
        }
    }

    // Reconstruct segment boundaries right to left.
    Clustering out;
    out.k = k;
    out.centroids.assign(k, 0.0);
    out.assignment.assign(n, 0);
    std::size_t end = n - 1;
    for (std::size_t m = k; m >= 1; --m) {
        const std::size_t start = m == 1 ? 0 : cut[m][end];
        double mean = (ps[end + 1] - ps[start]) / static_cast<double>(end - start + 1);
        out.centroids[m - 1] = mean;
        for (std::size_t i = start; i <= end; ++i) out.assignment[order[i]] = m - 1;
        if (m > 1) end = start - 1;
    }
    out.objective = detail::assignment_objective(pts, out.assignment, k);
    out.objective_trace = {out.objective};
    return out;
}

struct SparsityPlan {
    std::vector<std::string> names;  // empty when the caller works by index
    std::vector<double> values;
    double weighted_total = 0.0;
    double s_min = 0.0;
    double s_max = 1.0;
    double target = 0.0;

    double value_for(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return values[i];
        }
        throw std::invalid_argument("plan does not cover layer: " + name);
    }
};

namespace detail {

// Parameter-weighted mean sparsity. All-equal inputs return the common
// value exactly so `weighted_total >= target` cannot be lost to rounding.
inline double weighted_mean(const std::vector<double>& values,
                            const std::vector<std::size_t>& counts) {
    if (values.empty()) throw std::invalid_argument("weighted_mean: empty plan");
    const bool all_equal =
        std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; });
    if (all_equal) return values[0];
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        num += static_cast<double>(counts[i]) * values[i];
        den += static_cast<double>(counts[i]);
    }
    if (!(den > 0.0)) throw std::invalid_argument("weighted_mean: param counts sum to zero");
    return num / den;
}

}  // namespace detail

// Linear sparsity ladder over clusters ordered by centroid: the lowest-loss
// cluster takes s_max, the highest-loss one s_min. If the parameter-weighted
// total falls short of the target, a uniform shift (clamped at s_max) is
// bisected in until the total clears it.
inline SparsityPlan assign_sparsities(const Clustering& clustering,
                                      const std::vector<std::size_t>& param_counts,
                                      double s_min, double s_max, double target,
                                      std::vector<std::string> names = {}) {
    const std::size_t n = clustering.assignment.size();
    const std::size_t k = clustering.k;
    if (param_counts.size() != n) {
        throw std::invalid_argument("assign_sparsities: param count size mismatch");
    }
    if (!names.empty() && names.size() != n) {
        throw std::invalid_argument("assign_sparsities: name count mismatch");
    }
    if (!(s_min >= 0.0 && s_min < s_max && s_max <= 1.0)) {
        throw std::invalid_argument("assign_sparsities: need 0 <= s_min < s_max <= 1");
    }
    if (target > s_max) throw std::runtime_error("infeasible target");
    if (n == 0) throw std::invalid_argument("assign_sparsities: empty clustering");

    SparsityPlan plan;
    plan.names = std::move(names);
    plan.s_min = s_min;
    plan.s_max = s_max;
    plan.target = target;

    std::vector<double> cluster_s(k);
    if (k == 1) {
        cluster_s[0] = std::min(std::max(target, s_min), s_max);
    } else {
        // Centroids are canonical ascending: rank r == cluster index r.
        for (std::size_t r = 0; r < k; ++r) {
            cluster_s[r] =
                s_max - (s_max - s_min) * static_cast<double>(r) / static_cast<double>(k - 1);
        }
    }

    const auto values_for = [&](double shift) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            v[i] = std::min(cluster_s[clustering.assignment[i]] + shift, s_max);
        }
        return v;
    };

    plan.values = values_for(0.0);
    plan.weighted_total = detail::weighted_mean(plan.values, param_counts);
    if (plan.weighted_total < target) {
        double lo = 0.0, hi = s_max - s_min;  // shift hi forces everything to s_max
        for (int it = 0; it < 64 && hi - lo > 1e-6; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (detail::weighted_mean(values_for(mid), param_counts) >= target) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        plan.values = values_for(hi);
        plan.weighted_total = detail::weighted_mean(plan.values, param_counts);
    }
    return plan;
}

// Naive position baseline: earlier layers get smaller sparsities.
inline SparsityPlan layer_order_plan(const std::vector<std::string>& layer_names,
                                     const std::vector<std::size_t>& param_counts,
                                     double s_min, double s_max) {
    const std::size_t n = layer_names.size();
    if (n == 0) throw std::invalid_argument("layer_order_plan: no layers");
    if (param_counts.size() != n) {
        throw std::invalid_argument("layer_order_plan: param count size mismatch");
    }
    if (!(s_min >= 0.0 && s_min <= s_max && s_max <= 1.0)) {
        throw std::invalid_argument("layer_order_plan: need 0 <= s_min <= s_max <= 1");
    }
    SparsityPlan plan;
    plan.names = layer_names;
    plan.s_min = s_min;
    plan.s_max = s_max;
    plan.values.resize(n);
    for (std::size_t t = 0; t < n; ++t) {
        plan.values[t] = n == 1 ? 0.5 * (s_min + s_max)
                                : s_min + (s_max - s_min) * static_cast<double>(t) /
                                              static_cast<double>(n - 1);
    }
    plan.weighted_total = detail::weighted_mean(plan.values, param_counts);
    plan.target = plan.weighted_total;
    return plan;
}

inline SparsityPlan uniform_plan(const std::vector<std::string>& layer_names,
                                 const std::vector<std::size_t>& param_counts, double s) {
    const std::size_t n = layer_names.size();
    if (n == 0) throw std::invalid_argument("uniform_plan: no layers");
    if (param_counts.size() != n) {
        throw std::invalid_argument("uniform_plan: param count size mismatch");
    }
    if (!(s >= 0.0 && s <= 1.0)) {
        throw std::invalid_argument("uniform_plan: sparsity outside [0, 1]");
    }
    SparsityPlan plan;
    plan.names = layer_names;
    plan.values.assign(n, s);
    plan.s_min = s;
    plan.s_max = s;
    plan.weighted_total = s;
    plan.target = s;
    return plan;
}

}  // namespace slimstack
