#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/pruning.hpp"

namespace slimstack {

// Uniform asymmetric grid for one weight row. zero_point is deliberately not
// clamped to the level range: levels q in [0, 2^bits) dequantize to
// (q - zero_point) * scale, which keeps the representable window centred on
// the fitted [min, max] even for rows that do not straddle zero.
struct QuantGrid {
    int bits = 4;
    double scale = 1.0;
    long long zero_point = 0;

    long long levels() const { return 1ll << bits; }

    long long quantize(double w) const {
        const long long q = std::llround(w / scale) + zero_point;
        return std::clamp<long long>(q, 0, levels() - 1);
    }

    double dequantize(long long q) const {
        return static_cast<double>(q - zero_point) * scale;
    }

    double snap(double w) const { return dequantize(quantize(w)); }
};

// Per-layer quantization metadata, carried in reports and serialized with
// compressed models (one grid per output row).
struct LayerQuantInfo {
    int bits = 4;
    std::vector<QuantGrid> rows;
};

constexpr double kScaleFloor = 1e-12;

inline void check_bits(int bits) {
    if (bits < 2 || bits > 8) {
        throw std::invalid_argument("bits outside supported range [2, 8]");
    }
}

inline QuantGrid fit_grid(const std::vector<double>& w_row, int bits) {
    check_bits(bits);
    if (w_row.empty()) {
        throw std::invalid_argument("fit_grid: empty row");
    }
    const auto [lo_it, hi_it] = std::minmax_element(w_row.begin(), w_row.end());
    QuantGrid grid;
    grid.bits = bits;
    grid.scale = (*hi_it - *lo_it) / static_cast<double>((1ll << bits) - 1);
    if (!(grid.scale > kScaleFloor)) grid.scale = kScaleFloor;
    grid.zero_point = std::llround(-*lo_it / grid.scale);
    return grid;
}

// One grid per row, optionally ignoring positions that are pruned or feed
// from dead inputs (their values are pinned to zero and never snapped, so
// letting them stretch the grid would waste levels).
inline std::vector<QuantGrid> fit_row_grids(const Matrix& w, int bits,
                                            const PruneMask* mask = nullptr,
                                            const std::vector<bool>* dead = nullptr) {
    check_bits(bits);
    std::vector<QuantGrid> grids;
    grids.reserve(w.rows());
    std::vector<double> row;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        row.clear();
        for (std::size_t j = 0; j < w.cols(); ++j) {
            if (mask && !mask->kept(i, j)) continue;
            if (dead && (*dead)[j]) continue;
            row.push_back(w(i, j));
        }
        if (row.empty()) row.push_back(0.0);
        grids.push_back(fit_grid(row, bits));
    }
    return grids;
}

inline Matrix rtn_quantize(const Matrix& w, int bits) {
    const std::vector<QuantGrid> grids = fit_row_grids(w, bits);
    Matrix out(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) out(i, j) = grids[i].snap(w(i, j));
    }
    return out;
}

struct QuantizeResult {
    Matrix w_hat;
    std::vector<QuantGrid> grids;
    double loss_sum = 0.0;  // accumulated e^2 / (2 hc_pp) over all snaps
};

namespace detail {

// Sequential compensated quantization over columns [j_begin, j_end) of `cur`,
// in place. Positions excluded by `mask` (pruned) stay untouched — their
// zeros must survive exactly — and excluded positions never receive residual
// compensation either.
inline double quantize_columns(Matrix& cur, const Matrix& hc, const std::vector<QuantGrid>& grids,
                               bool propagate, const PruneMask* mask,
                               const std::vector<bool>& dead, std::size_t j_begin,
                               std::size_t j_end) {
    const std::size_t d_col = cur.cols();
    double loss_sum = 0.0;
    for (std::size_t j = j_begin; j < j_end; ++j) {
        if (dead[j]) continue;
        const double hc_jj = hc(j, j);
        const double* hc_j = hc.row_ptr(j);
        for (std::size_t i = 0; i < cur.rows(); ++i) {
            if (mask && !mask->kept(i, j)) continue;
            double* wi = cur.row_ptr(i);
            const double v = wi[j];
            const double q = grids[i].snap(v);
            const double e = v - q;
            wi[j] = q;
            loss_sum += e * e / (2.0 * hc_jj);
            if (!propagate || e == 0.0) continue;
            const double ratio = e / hc_jj;
            for (std::size_t jj = j + 1; jj < d_col; ++jj) {
                if (dead[jj]) continue;
                if (mask && !mask->kept(i, jj)) continue;
                wi[jj] -= ratio * hc_j[jj];
            }
        }
    }
    return loss_sum;
}

inline std::vector<bool> dead_flags(const HessianState& hs, std::size_t d_col) {
    if (hs.dead.empty()) return std::vector<bool>(d_col, false);
    if (hs.dead.size() != d_col) {
        throw std::invalid_argument("quantize: dead-flag size mismatch");
    }
    return hs.dead;
}

}  // namespace detail

// Sequential compensated quantization of a full layer: columns left to
// right, each weight snapped to its row grid and the residual pushed into
// later columns through the precomputed inverse rows. With propagation
// disabled this reduces to rtn_quantize bit for bit.
inline QuantizeResult gptq_quantize_layer(const Matrix& w, const HessianState& hs, int bits,
                                          bool propagate = true) {
    const std::size_t d_col = w.cols();
    if (hs.hc.rows() != d_col || hs.hc.cols() != d_col) {
        throw std::invalid_argument("gptq_quantize_layer: Hessian state does not match layer");
    }
    QuantizeResult result;
    result.grids = fit_row_grids(w, bits);
    result.w_hat = w;
    std::vector<bool> dead(d_col, false);  // quantize every column; damping keeps pivots valid
    result.loss_sum = detail::quantize_columns(result.w_hat, hs.hc, result.grids, propagate,
                                               nullptr, dead, 0, d_col);
    return result;
}

// Quantize the survivors of an already-pruned layer (the sequential
// prune-then-quantize composition). Grids are fit on the surviving values;
// masked zeros stay exact zeros.
inline QuantizeResult quantize_pruned_layer(const Matrix& w_pruned, const PruneMask& mask,
                                            const HessianState& hs, int bits) {
    const std::size_t d_col = w_pruned.cols();
    if (hs.hc.rows() != d_col || hs.hc.cols() != d_col) {
        throw std::invalid_argument("quantize_pruned_layer: Hessian state does not match layer");
    }
    if (mask.rows() != w_pruned.rows() || mask.cols() != d_col) {
        throw std::invalid_argument("quantize_pruned_layer: mask does not match layer");
    }
    const std::vector<bool> dead = detail::dead_flags(hs, d_col);
    QuantizeResult result;
    result.grids = fit_row_grids(w_pruned, bits, &mask, &dead);
    result.w_hat = w_pruned;
    result.loss_sum = detail::quantize_columns(result.w_hat, hs.hc, result.grids, true, &mask,
                                               dead, 0, d_col);
    return result;
}

struct JointResult {
    Matrix w_hat;
    PruneMask mask;
    std::vector<QuantGrid> grids;
    double prune_loss_sum = 0.0;
    double quant_loss_sum = 0.0;
};

// Block-interleaved prune + quantize: per block, run the selective pruning
// sub-pass (selection and compensation exactly as sparsegpt_prune_layer),
// then snap the block's survivors to their row grids with residual
// propagation. Grids are fit once up front on the original weights with a
// prune-only mask estimate excluded, so grid range is not wasted on weights
// about to be zeroed.
inline JointResult joint_compress_layer(const Matrix& w, const HessianState& hs, double sparsity,
                                        int bits, const PruneConfig& cfg = {}) {
    check_bits(bits);
    const std::size_t d_row = w.rows();
    const std::size_t d_col = w.cols();
    if (hs.hc.rows() != d_col || hs.hc.cols() != d_col) {
        throw std::invalid_argument("joint_compress_layer: Hessian state does not match layer");
    }
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
        throw std::invalid_argument("joint_compress_layer: sparsity outside [0, 1]");
    }

    if (sparsity == 0.0) {
        QuantizeResult q = gptq_quantize_layer(w, hs, bits);
        JointResult out;
        out.w_hat = std::move(q.w_hat);
        out.mask = PruneMask(d_row, d_col);
        out.grids = std::move(q.grids);
        out.quant_loss_sum = q.loss_sum;
        return out;
    }

    const std::vector<bool> dead = detail::dead_flags(hs, d_col);
    const Matrix& hc = hs.hc;

    // Prune-only dry run fixes the grid-fitting exclusion set.
    const PruneMask mask_estimate = sparsegpt_prune_layer(w, hs, sparsity, cfg).mask;

    JointResult result;
    result.w_hat = w;
    result.mask = PruneMask(d_row, d_col);
    result.grids = fit_row_grids(w, bits, &mask_estimate, &dead);

    std::size_t dead_count = 0;
    for (std::size_t j = 0; j < d_col; ++j) {
        if (!dead[j]) continue;
        ++dead_count;
        for (std::size_t i = 0; i < d_row; ++i) {
            result.w_hat(i, j) = 0.0;
            result.mask.set_kept(i, j, false);
        }
    }
    std::vector<std::size_t> live;
    live.reserve(d_col - dead_count);
    for (std::size_t j = 0; j < d_col; ++j) {
        if (!dead[j]) live.push_back(j);
    }

    const std::size_t target_total =
        static_cast<std::size_t>(std::llround(sparsity * static_cast<double>(d_col)));
    const std::size_t target_live = target_total > dead_count ? target_total - dead_count : 0;
    const double live_share =
        live.empty() ? 0.0 : static_cast<double>(target_live) / static_cast<double>(live.size());
    const std::size_t block = std::min(std::max<std::size_t>(cfg.block_size, 1), d_col);

    Matrix& cur = result.w_hat;
    std::vector<double> carry(d_row, 0.0);
    std::vector<std::size_t> pruned_live(d_row, 0);
    std::vector<std::uint8_t> to_prune;

    std::size_t live_pos = 0;
    for (std::size_t b0 = 0; b0 < d_col; b0 += block) {
        const std::size_t b1 = std::min(b0 + block, d_col);
        const std::size_t live_begin = live_pos;
        while (live_pos < live.size() && live[live_pos] < b1) ++live_pos;
        const std::size_t width = live_pos - live_begin;
        if (width == 0) continue;
        const std::size_t live_after = live.size() - live_pos;

        if (target_live > 0) {
            to_prune.assign(d_row * width, 0);
            std::vector<std::pair<double, std::size_t>> losses(width);
            for (std::size_t i = 0; i < d_row; ++i) {
                const std::size_t budget = detail::block_budget(
                    live_share, width, carry[i], pruned_live[i], target_live, live_after);
                if (budget == 0) continue;
                pruned_live[i] += budget;
                for (std::size_t a = 0; a < width; ++a) {
                    const std::size_t j = live[live_begin + a];
                    const double wv = cur(i, j);
                    losses[a] = {wv * wv / (2.0 * hc(j, j)), a};
                }
                std::sort(losses.begin(), losses.end());
                for (std::size_t a = 0; a < budget; ++a) {
                    to_prune[i * width + losses[a].second] = 1;
                }
            }

            for (std::size_t a = 0; a < width; ++a) {
                const std::size_t j = live[live_begin + a];
                const double hc_jj = hc(j, j);
                const double* hc_j = hc.row_ptr(j);
                for (std::size_t i = 0; i < d_row; ++i) {
                    if (!to_prune[i * width + a]) continue;
                    const double e = cur(i, j);
                    cur(i, j) = 0.0;
                    result.mask.set_kept(i, j, false);
                    result.prune_loss_sum += e * e / (2.0 * hc_jj);
                    if (e == 0.0) continue;
                    const double ratio = e / hc_jj;
                    double* wi = cur.row_ptr(i);
                    for (std::size_t jj = j + 1; jj < d_col; ++jj) {
                        if (dead[jj]) continue;
                        if (!result.mask.kept(i, jj)) continue;
                        wi[jj] -= ratio * hc_j[jj];
                    }
                }
            }
        }

        result.quant_loss_sum += detail::quantize_columns(cur, hc, result.grids, true,
                                                          &result.mask, dead, b0, b1);
    }
    return result;
}

}  // namespace slimstack
