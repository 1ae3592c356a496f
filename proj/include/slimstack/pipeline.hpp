#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/model.hpp"
#include "slimstack/pruning.hpp"
#include "slimstack/quantize.hpp"
#include "slimstack/scheduler.hpp"
#include "slimstack/synthetic.hpp"

namespace slimstack {

// Mean squared output deviation of one layer on inputs x:
// ||W X - What X||_F^2 / (d_row * N).
inline double layer_mse(const Matrix& w, const Matrix& w_hat, const Matrix& x) {
    if (w.rows() != w_hat.rows() || w.cols() != w_hat.cols()) {
        throw std::invalid_argument("layer_mse: weight shapes differ");
    }
    if (x.rows() != w.cols()) {
        throw std::invalid_argument("layer_mse: input dimension mismatch");
    }
    if (x.cols() == 0) throw std::invalid_argument("layer_mse: no samples");
    const Matrix diff = matmul(w - w_hat, x);
    return frobenius_norm_sq(diff) / static_cast<double>(w.rows() * x.cols());
}

inline double model_output_error(const LinearModel& reference, const LinearModel& compressed,
                                 const Matrix& x0) {
    const Matrix y_ref = forward(reference, x0);
    const Matrix y_cmp = forward(compressed, x0);
    if (y_ref.rows() != y_cmp.rows() || y_ref.cols() != y_cmp.cols()) {
        throw std::invalid_argument("model_output_error: output shapes differ");
    }
    const double denom = frobenius_norm(y_ref);
    const double num = frobenius_norm(y_ref - y_cmp);
    if (denom == 0.0) {
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return num / denom;
}

enum class QuantMode { joint, sequential };

struct CompressConfig {
    std::optional<int> bits;               // quantize when set
    QuantMode quant_mode = QuantMode::joint;
    PruneConfig prune;                     // block size + damping
    bool collect_timings = false;
};

struct LayerReport {
    std::string name;
    double assigned_sparsity = 0.0;
    double achieved_density = 1.0;
    double layer_mse = 0.0;
    double prune_loss_estimate = 0.0;  // accumulated quadratic loss estimates
    double time_ms = 0.0;
};

struct CompressionReport {
    std::vector<LayerReport> layers;
    double weighted_sparsity = 0.0;  // recomputed from mask bits
    double output_rel_error = 0.0;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;  // echoed into every output file
    std::map<std::string, LayerQuantInfo> quant;  // per layer, when bits set
};

namespace detail {

// Fallback for layers whose calibration input carries no energy at all (an
// upstream layer collapsed to zero): with H unavailable, prune the smallest
// magnitudes per row at zero recorded loss and snap survivors to plain
// row grids. Any choice is exact on the calibration set here.
inline PruneResult magnitude_prune(const Matrix& w, double sparsity) {
    const std::size_t d_row = w.rows();
    const std::size_t d_col = w.cols();
    PruneResult result{w, PruneMask(d_row, d_col), 0.0};
    const auto n_prune =
        static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(d_col)));
    if (n_prune == 0) return result;
    std::vector<std::pair<double, std::size_t>> order(d_col);
    for (std::size_t i = 0; i < d_row; ++i) {
        for (std::size_t j = 0; j < d_col; ++j) order[j] = {std::abs(w(i, j)), j};
        std::sort(order.begin(), order.end());
        for (std::size_t a = 0; a < n_prune; ++a) {
            result.w_hat(i, order[a].second) = 0.0;
            result.mask.set_kept(i, order[a].second, false);
        }
    }
    return result;
}

inline bool input_has_energy(const Matrix& x) {
    for (double v : x.data()) {
        if (v != 0.0) return true;
    }
    return false;
}

}  // namespace detail

// Compress the stack layer by layer under a per-layer sparsity plan. Layer
// l's Hessian is built from activations propagated through the already
// compressed earlier layers, so compensation targets the inputs the final
// model actually sees.
inline std::pair<LinearModel, CompressionReport> compress_model(const LinearModel& model,
                                                                const CalibrationSet& calib,
                                                                const SparsityPlan& plan,
                                                                const CompressConfig& cfg = {}) {
    validate_model(model);
    if (calib.x0.rows() != model.d_in()) {
        throw std::invalid_argument("compress_model: calibration dimension mismatch");
    }
    if (cfg.bits) check_bits(*cfg.bits);

    LinearModel out;
    CompressionReport report;
    std::size_t params_total = 0, pruned_total = 0;

    Matrix x = calib.x0;
    for (const LinearLayer& layer : model.layers) {
        const double s = plan.value_for(layer.name);  // throws when the plan misses a layer
        if (!(s >= 0.0 && s <= 1.0)) {
            throw std::invalid_argument("compress_model: plan sparsity outside [0, 1]");
        }
        const auto t0 = std::chrono::steady_clock::now();

        Matrix w_hat;
        PruneMask mask;
        double loss_estimate = 0.0;
        if (!detail::input_has_energy(x)) {
            PruneResult pr = detail::magnitude_prune(layer.w, s);
            mask = std::move(pr.mask);
            if (cfg.bits) {
                const std::vector<QuantGrid> grids = fit_row_grids(pr.w_hat, *cfg.bits, &mask);
                w_hat = pr.w_hat;
                for (std::size_t i = 0; i < w_hat.rows(); ++i) {
                    for (std::size_t j = 0; j < w_hat.cols(); ++j) {
                        if (mask.kept(i, j)) w_hat(i, j) = grids[i].snap(w_hat(i, j));
                    }
                }
                report.quant[layer.name] = LayerQuantInfo{*cfg.bits, grids};
            } else {
                w_hat = std::move(pr.w_hat);
            }
        } else {
            const HessianState hs = build_prepared_hessian(x, cfg.prune.damping_frac);
            if (cfg.bits && cfg.quant_mode == QuantMode::joint) {
                JointResult jr = joint_compress_layer(layer.w, hs, s, *cfg.bits, cfg.prune);
                w_hat = std::move(jr.w_hat);
                mask = std::move(jr.mask);
                loss_estimate = jr.prune_loss_sum + jr.quant_loss_sum;
                report.quant[layer.name] = LayerQuantInfo{*cfg.bits, std::move(jr.grids)};
            } else {
                PruneResult pr = sparsegpt_prune_layer(layer.w, hs, s, cfg.prune);
                loss_estimate = pr.loss_sum;
                if (cfg.bits) {
                    QuantizeResult qr = quantize_pruned_layer(pr.w_hat, pr.mask, hs, *cfg.bits);
                    w_hat = std::move(qr.w_hat);
                    loss_estimate += qr.loss_sum;
                    report.quant[layer.name] = LayerQuantInfo{*cfg.bits, std::move(qr.grids)};
                } else {
                    w_hat = std::move(pr.w_hat);
                }
                mask = std::move(pr.mask);
            }
        }

        LayerReport lr;
        lr.name = layer.name;
        lr.assigned_sparsity = s;
        lr.achieved_density = mask.density();
        lr.layer_mse = layer_mse(layer.w, w_hat, x);
        lr.prune_loss_estimate = loss_estimate;
        if (cfg.collect_timings) {
            lr.time_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
        }
        report.layers.push_back(std::move(lr));

        params_total += mask.rows() * mask.cols();
        pruned_total += mask.rows() * mask.cols() - mask.kept_count();

        LinearLayer compressed{layer.name, std::move(w_hat), layer.act};
        x = layer_forward(compressed, x);
        out.layers.push_back(std::move(compressed));
    }

    report.weighted_sparsity =
        static_cast<double>(pruned_total) / static_cast<double>(params_total);
    report.output_rel_error = model_output_error(model, out, calib.x0);
    return {std::move(out), std::move(report)};
}

// Uniform sweep: one compression run per sparsity value.
inline std::vector<std::pair<double, double>> sparsity_sweep(const LinearModel& model,
                                                             const CalibrationSet& calib,
                                                             const std::vector<double>& sparsities,
                                                             const CompressConfig& cfg = {}) {
    std::vector<std::string> names;
    std::vector<std::size_t> counts;
    for (const auto& l : model.layers) {
        names.push_back(l.name);
        counts.push_back(l.w.rows() * l.w.cols());
    }
    std::vector<std::pair<double, double>> curve;
    curve.reserve(sparsities.size());
    for (double s : sparsities) {
        const SparsityPlan plan = uniform_plan(names, counts, s);
        curve.emplace_back(s, compress_model(model, calib, plan, cfg).second.output_rel_error);
    }
    return curve;
}

struct CompareRow {
    std::string scheduler;  // uniform | layer_order | score
    std::uint64_t seed = 0;
    double plan_total = 0.0;         // parameter-weighted plan sparsity
    double achieved_sparsity = 0.0;  // recounted from masks
    double output_rel_error = 0.0;
};

struct CompareConfig {
    double target = 0.7;
    double s_min = 0.6;
    double s_max = 0.8;
    std::size_t k = 0;  // 0 -> min(8, layer count)
    CompressConfig compress;
    ScoreConfig score;
};

// Runs the three schedulers on one (model, calibration) pair. The seed only
// feeds k-means initialization and is echoed into the rows.
inline std::vector<CompareRow> compare_schedulers(const LinearModel& model,
                                                  const CalibrationSet& calib,
                                                  const CompareConfig& cfg,
                                                  std::uint64_t seed) {
    validate_model(model);
    std::vector<std::string> names;
    std::vector<std::size_t> counts;
    for (const auto& l : model.layers) {
        names.push_back(l.name);
        counts.push_back(l.w.rows() * l.w.cols());
    }
    const std::size_t k =
        cfg.k > 0 ? std::min(cfg.k, names.size()) : std::min<std::size_t>(8, names.size());

    std::vector<std::pair<std::string, SparsityPlan>> plans;
    plans.emplace_back("uniform", uniform_plan(names, counts, cfg.target));
    plans.emplace_back("layer_order",
                       layer_order_plan(names, counts, cfg.s_min, cfg.s_max));
    {
        const ScoreReport scores = score_model(model, calib, cfg.score);
        std::vector<double> vals;
        for (const auto& e : scores.entries) vals.push_back(e.score);
        const Clustering clustering = kmeans_log(vals, k, seed);
        plans.emplace_back("score", assign_sparsities(clustering, counts, cfg.s_min, cfg.s_max,
                                                      cfg.target, names));
    }

    std::vector<CompareRow> rows;
    for (auto& [label, plan] : plans) {
        const auto [compressed, rep] = compress_model(model, calib, plan, cfg.compress);
        (void)compressed;
        rows.push_back({label, seed, plan.weighted_total, rep.weighted_sparsity,
                        rep.output_rel_error});
    }
    return rows;
}

// Statistical driver: a fresh synthetic model per seed, three schedulers
// each. Mirrors the qualitative scheduler-comparison experiment.
inline std::vector<CompareRow> compare_schedulers_generated(
    std::size_t n_layers, const std::vector<std::size_t>& dims, double heterogeneity,
    const std::vector<std::uint64_t>& seeds, const CompareConfig& cfg,
    const SyntheticConfig& gen_cfg = {}) {
    std::vector<CompareRow> all;
    for (std::uint64_t seed : seeds) {
        const auto [model, calib] =
            gen_synthetic_model(n_layers, dims, heterogeneity, seed, gen_cfg);
        for (CompareRow& row : compare_schedulers(model, calib, cfg, seed)) {
            all.push_back(std::move(row));
        }
    }
    return all;
}

// Mean output error per scheduler label, preserving first-seen label order.
inline std::vector<std::pair<std::string, double>> mean_errors(
    const std::vector<CompareRow>& rows) {
    std::vector<std::pair<std::string, double>> sums;
    std::vector<std::size_t> counts;
    for (const auto& row : rows) {
        std::size_t i = 0;
        while (i < sums.size() && sums[i].first != row.scheduler) ++i;
        if (i == sums.size()) {
            sums.emplace_back(row.scheduler, 0.0);
            counts.push_back(0);
        }
        sums[i].second += row.output_rel_error;
        ++counts[i];
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
        sums[i].second /= static_cast<double>(counts[i]);
    }
    return sums;
}

}  // namespace slimstack
