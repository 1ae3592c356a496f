#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "slimstack/hessian.hpp"
#include "slimstack/matrix.hpp"

namespace slimstack {

// Keep/prune bitmap for one weight matrix. kept == true means the weight
// survives.
class PruneMask {
public:
    PruneMask() = default;
    PruneMask(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), kept_(rows * cols, 1) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    bool kept(std::size_t r, std::size_t c) const { return kept_[r * cols_ + c] != 0; }
    void set_kept(std::size_t r, std::size_t c, bool k) { kept_[r * cols_ + c] = k ? 1 : 0; }

    std::size_t kept_count() const {
        return static_cast<std::size_t>(std::count(kept_.begin(), kept_.end(), 1));
    }

    std::size_t kept_count_row(std::size_t r) const {
        std::size_t n = 0;
        for (std::size_t c = 0; c < cols_; ++c) n += kept_[r * cols_ + c];
        return n;
    }

    double density() const {
        if (kept_.empty()) return 1.0;
        return static_cast<double>(kept_count()) / static_cast<double>(kept_.size());
    }

    bool operator==(const PruneMask& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && kept_ == other.kept_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> kept_;
};

struct PruneConfig {
    std::size_t block_size = 128;  // clamped to the layer's column count
    double damping_frac = 0.01;
};

// Exact loss of removing one weight with optimal compensation of the rest:
// w_p^2 / (2 * hc_pp), where hc_pp is the diagonal entry of the current
// (or sequentially precomputed) inverse Hessian.
inline double prune_loss(double w_p, double hc_pp) {
    if (!(hc_pp > 0.0)) {
        throw std::runtime_error("prune_loss: nonpositive inverse-Hessian diagonal");
    }
    return w_p * w_p / (2.0 * hc_pp);
}

// Closed-form update of the surviving weights when weight p is removed:
// delta = -(w_p / hinv_pp) * hinv_row, with delta[p] pinned to -w_p exactly.
inline std::vector<double> compensation(double w_p, std::size_t p,
                                        const std::vector<double>& hinv_row, double hinv_pp) {
    if (!(hinv_pp > 0.0)) {
        throw std::runtime_error("compensation: zero pivot");
    }
    if (p >= hinv_row.size()) {
        throw std::invalid_argument("compensation: index out of range");
    }
    std::vector<double> delta(hinv_row.size());
    const double ratio = w_p / hinv_pp;
    for (std::size_t j = 0; j < hinv_row.size(); ++j) delta[j] = -ratio * hinv_row[j];
    delta[p] = -w_p;
    return delta;
}

// Exact minimizer of (w_hat - w) H (w_hat - w)^T subject to w_hat[mask] = 0.
// Solves the kept-submatrix system directly; serves as the independent
// optimum the greedy routes are measured against.
inline std::vector<double> ls_optimal_compensation(const std::vector<double>& w,
                                                   const std::vector<std::size_t>& mask,
                                                   const Matrix& h) {
    const std::size_t d = w.size();
    if (h.rows() != d || h.cols() != d) {
        throw std::invalid_argument("ls_optimal_compensation: dimension mismatch");
    }
    std::vector<bool> masked(d, false);
    for (std::size_t p : mask) {
        if (p >= d) throw std::invalid_argument("ls_optimal_compensation: mask index out of range");
        masked[p] = true;
    }
    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < d; ++j) {
        if (!masked[j]) kept.push_back(j);
    }
    std::vector<double> w_hat(d, 0.0);
    if (kept.empty()) return w_hat;

    const std::size_t m = kept.size();
    Matrix h_kk(m, m);
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) h_kk(a, b) = h(kept[a], kept[b]);
    }
    // rhs = H[kept, masked] * w[masked]
    std::vector<double> rhs(m, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
        double s = 0.0;
        for (std::size_t p = 0; p < d; ++p) {
            if (masked[p]) s += h(kept[a], p) * w[p];
        }
        rhs[a] = s;
    }

    Matrix l;
    try {
        l = cholesky_lower(h_kk);
    } catch (const std::runtime_error&) {
        throw std::runtime_error("singular kept-submatrix");
    }
    // Solve L y = rhs, then L^T z = y.
    std::vector<double> y(m), z(m);
    for (std::size_t i = 0; i < m; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    for (std::size_t i = m; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < m; ++k) s -= l(k, i) * z[k];
        z[i] = s / l(i, i);
    }
    for (std::size_t a = 0; a < m; ++a) w_hat[kept[a]] = w[kept[a]] + z[a];
    return w_hat;
}

struct ObcRowResult {
    std::vector<double> w_hat;
    std::vector<std::size_t> pruned;      // in removal order
    std::vector<double> step_losses;      // one nonnegative entry per removal
};

// Exact greedy removal for one weight row: at every step pick the remaining
// weight with the smallest compensated loss under the current inverse,
// apply the closed-form update, then shrink the inverse. Reference-quality,
// cubic in the row length; intended for small instances and as the oracle
// the block pruner is compared against.
inline ObcRowResult obc_prune_row(const std::vector<double>& w, const Matrix& h,
                                  std::size_t k_prune) {
    const std::size_t d = w.size();
    if (h.rows() != d || h.cols() != d) {
        throw std::invalid_argument("obc_prune_row: dimension mismatch");
    }
    if (k_prune > d) {
        throw std::invalid_argument("obc_prune_row: k_prune exceeds row length");
    }
    ObcRowResult result;
    result.w_hat = w;
    if (k_prune == 0) return result;

    Matrix inv = invert_spd(h);
    std::vector<std::size_t> active(d);
    std::iota(active.begin(), active.end(), 0);

    for (std::size_t step = 0; step < k_prune; ++step) {
        std::size_t best_local = 0;
        double best_loss = 0.0;
        bool have = false;
        for (std::size_t a = 0; a < active.size(); ++a) {
            const double pivot = inv(a, a);
            if (!(pivot > 0.0)) {
                throw std::runtime_error("obc_prune_row: pivot collapse at step " +
                                         std::to_string(step));
            }
            const double wv = result.w_hat[active[a]];
            const double loss = wv * wv / (2.0 * pivot);
            if (!have || loss < best_loss) {  // ties keep the lower column index
                best_local = a;
                best_loss = loss;
                have = true;
            }
        }

        const std::size_t col = active[best_local];
        const double wv = result.w_hat[col];
        const double ratio = wv / inv(best_local, best_local);
        for (std::size_t b = 0; b < active.size(); ++b) {
            result.w_hat[active[b]] -= ratio * inv(best_local, b);
        }
        result.w_hat[col] = 0.0;
        result.pruned.push_back(col);
        result.step_losses.push_back(best_loss);

        inv = remove_row_col(inv, best_local);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_local));
    }
    return result;
}

struct PruneResult {
    Matrix w_hat;
    PruneMask mask;
    double loss_sum = 0.0;
};

namespace detail {

// Per-(row, block) prune budgets: llround(share * width) with a running
// fractional carry, clamped so each row lands exactly on its total.
inline std::size_t block_budget(double share, std::size_t width, double& carry,
                                std::size_t pruned_so_far, std::size_t target,
                                std::size_t live_after_block) {
    const double raw = share * static_cast<double>(width) + carry;
    long long n = std::llround(raw);
    const long long remaining = static_cast<long long>(target) - static_cast<long long>(pruned_so_far);
    const long long lo = std::max<long long>(0, remaining - static_cast<long long>(live_after_block));
    const long long hi = std::min<long long>(static_cast<long long>(width), remaining);
    n = std::clamp(n, lo, hi);
    carry = raw - static_cast<double>(n);
    return static_cast<std::size_t>(n);
}

}  // namespace detail

// Block-wise selective layer pruning against the precomputed sequential
// inverse rows. Columns are processed left to right in blocks; within each
// (row, block) the lowest-loss weights are selected using the hc diagonal as
// of block start, zeroed in column order, and every removal's compensation is
// applied to all later live columns through the matching hc row. Dead columns
// are zeroed up front at zero recorded loss. Ties in selection go to the
// lower column index, so the result is a pure function of its inputs.
inline PruneResult sparsegpt_prune_layer(const Matrix& w, const HessianState& hs,
                                         double sparsity, const PruneConfig& cfg = {}) {
    const std::size_t d_row = w.rows();
    const std::size_t d_col = w.cols();
    if (hs.hc.rows() != d_col || hs.hc.cols() != d_col) {
        throw std::invalid_argument("sparsegpt_prune_layer: Hessian state does not match layer");
    }
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
        throw std::invalid_argument("sparsegpt_prune_layer: sparsity outside [0, 1]");
    }
    if (cfg.block_size < 1) {
        throw std::invalid_argument("sparsegpt_prune_layer: block_size must be >= 1");
    }

    PruneResult result{w, PruneMask(d_row, d_col), 0.0};
    if (sparsity == 0.0 || d_row == 0 || d_col == 0) return result;

    const Matrix& hc = hs.hc;
    std::vector<bool> dead(d_col, false);
    if (!hs.dead.empty()) {
        if (hs.dead.size() != d_col) {
            throw std::invalid_argument("sparsegpt_prune_layer: dead-flag size mismatch");
        }
        dead = hs.dead;
    }

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
    const std::size_t target_live =
        target_total > dead_count ? target_total - dead_count : 0;
    if (live.empty() || target_live == 0) return result;

    const double live_share = static_cast<double>(target_live) / static_cast<double>(live.size());
    const std::size_t block = std::min(cfg.block_size, d_col);

    Matrix& cur = result.w_hat;
    std::vector<double> carry(d_row, 0.0);
    std::vector<std::size_t> pruned_live(d_row, 0);
    std::vector<std::uint8_t> to_prune;  // d_row x block_live bitmap, reused per block

    std::size_t live_pos = 0;  // index into `live` of the first column >= block start
    for (std::size_t b0 = 0; b0 < d_col; b0 += block) {
        const std::size_t b1 = std::min(b0 + block, d_col);
        std::size_t live_begin = live_pos;
        while (live_pos < live.size() && live[live_pos] < b1) ++live_pos;
        const std::size_t width = live_pos - live_begin;
        if (width == 0) continue;
        const std::size_t live_after = live.size() - live_pos;

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
            for (std::size_t a = 0; a < budget; ++a) to_prune[i * width + losses[a].second] = 1;
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
                result.loss_sum += e * e / (2.0 * hc_jj);
                if (e == 0.0) continue;
                const double ratio = e / hc_jj;
                double* wi = cur.row_ptr(i);
                for (std::size_t jj = j + 1; jj < d_col; ++jj) {
                    if (dead[jj]) continue;
                    wi[jj] -= ratio * hc_j[jj];
                }
            }
        }
    }
    return result;
}

}  // namespace slimstack
