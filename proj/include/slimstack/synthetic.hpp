#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "slimstack/matrix.hpp"
#include "slimstack/model.hpp"
#include "slimstack/rng.hpp"
#include "slimstack/scheduler.hpp"

namespace slimstack {
namespace detail {

// Orthonormalize the rows of `w` in place (modified Gram-Schmidt, two
// projection passes). Degenerate pivots are redrawn from `rng`; callers pass
// Gaussian data, so this is a measure-zero safety valve. Requires
// w.rows() <= w.cols().
inline void orthonormal_rows(Matrix& w, Rng& rng) {
    const std::size_t r = w.rows(), c = w.cols();
    for (std::size_t i = 0; i < r; ++i) {
        for (;;) {
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < i; ++k) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < c; ++j) dot += w(i, j) * w(k, j);
                    for (std::size_t j = 0; j < c; ++j) w(i, j) -= dot * w(k, j);
                }
            }
            double nrm = 0.0;
            for (std::size_t j = 0; j < c; ++j) nrm += w(i, j) * w(i, j);
            nrm = std::sqrt(nrm);
            if (nrm > 1e-8) {
                for (std::size_t j = 0; j < c; ++j) w(i, j) /= nrm;
                break;
            }
            for (std::size_t j = 0; j < c; ++j) w(i, j) = rng.gaussian();
        }
    }
}

// Haar-style orthonormal base along the short side.
inline Matrix haar_block(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix b(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) b(i, j) = rng.gaussian();
    }
    if (rows <= cols) {
        orthonormal_rows(b, rng);
    } else {
        Matrix bt = transpose(b);
        orthonormal_rows(bt, rng);
        b = transpose(bt);
    }
    return b;
}

// Redundancy layout of one activation space. The space carries `dirs` latent
// directions; direction m is stored as copies act(+pi_m) and act(-pi_m)
// spread over the coordinates, each scaled by a per-coordinate amplitude.
// Coordinates come in adjacent sign pairs (2k, 2k+1) assigned to directions
// round-robin, so the keep-the-strongest prune order retires whole balanced
// pairs and breaks at most one. A sign-balanced average of the copies
// recovers pi_m exactly, so the latent passes through the nonlinearity
// losslessly at any depth.
struct SlotLayout {
    std::size_t dirs = 1;
    std::vector<std::size_t> dir;  // coordinate -> direction it copies
    std::vector<double> sign;      // coordinate -> copy sign
    std::vector<double> amp;       // coordinate -> amplitude
    std::vector<double> pos_w;     // direction -> read normalizer, + copies
    std::vector<double> neg_w;     // direction -> read normalizer, - copies
};

inline SlotLayout make_layout(std::size_t d, double t, double h, double dir_floor) {
    SlotLayout lay;
    const std::size_t pairs = std::max<std::size_t>(1, d / 2);
    const double tt = (1.0 - h) + h * (dir_floor + (1.0 - dir_floor) * t);
    lay.dirs = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(tt * static_cast<double>(pairs))), 1,
        pairs);
    lay.dir.resize(d);
    lay.sign.resize(d);
    lay.amp.resize(d);
    for (std::size_t s = 0; s < d; ++s) {
        lay.dir[s] = (s / 2) % lay.dirs;
        lay.sign[s] = (s % 2 == 0) ? 1.0 : -1.0;
        // Amplitude grows with the copy's rank inside its direction (plus a
        // slight per-slot slope as a tiebreak), so the strongest copies sit
        // rightmost. Surplus copies are exact duplicates, and compensation
        // only flows toward later columns: ordering weak-to-strong keeps the
        // shifts landing on well-conditioned siblings instead of on copies
        // whose variance is below the damping floor.
        const std::size_t n_ranks = ((d - 1) / 2) / lay.dirs + 1;
        const double rev = static_cast<double>(n_ranks - 1 - (s / 2) / lay.dirs);
        const double slope =
            d > 1 ? 1.0 - static_cast<double>(s) / static_cast<double>(d - 1) : 0.0;
        lay.amp[s] = std::exp(-h * (std::min(0.8 * rev, 2.5) + 0.3 * slope));
    }
    std::vector<double> pw(lay.dirs, 0.0), nw(lay.dirs, 0.0);
    for (std::size_t s = 0; s < d; ++s) {
        (lay.sign[s] > 0.0 ? pw : nw)[lay.dir[s]] += lay.amp[s] * lay.amp[s];
    }
    lay.pos_w.assign(lay.dirs, 0.0);
    lay.neg_w.assign(lay.dirs, 0.0);
    for (std::size_t m = 0; m < lay.dirs; ++m) {
        if (nw[m] > 0.0) {
            lay.pos_w[m] = 1.0 / pw[m];
            lay.neg_w[m] = 1.0 / nw[m];
        } else {
            lay.pos_w[m] = 2.0 / pw[m];  // single-sign direction: one-sided read
        }
    }
    return lay;
}

// (dirs + fresh) x d map recovering the latent from a space's copies. Each
// copy is weighted by its own amplitude (matched filter), so strong copies
// carry the read and weak ones are the cheap ones to prune. Rows past
// `dirs` are sign-summed instead of sign-balanced reads of the leading
// directions: for a relu space they recover |pi_m|, fluctuation content the
// linear part never carries, which lets a layer replenish the variance its
// graded read spectrum drains from the tail directions.
inline Matrix reader(const SlotLayout& lay, std::size_t fresh = 0) {
    Matrix r(lay.dirs + fresh, lay.dir.size());
    for (std::size_t s = 0; s < lay.dir.size(); ++s) {
        const std::size_t m = lay.dir[s];
        const double w = lay.sign[s] > 0.0 ? lay.pos_w[m] : lay.neg_w[m];
        r(m, s) = (lay.sign[s] > 0.0 ? w : -w) * lay.amp[s];
        if (m < fresh) r(lay.dirs + m, s) = w * lay.amp[s];
    }
    return r;
}

}  // namespace detail

struct SyntheticConfig {
    std::size_t n_samples = 64;
    Activation hidden_act = Activation::relu;
    // Half-width of the per-layer score ramp in decades: layer gains are set
    // so the mean per-weight pruning loss lands exactly on 10^(span*h*(2t-1)).
    // Relative pruning damage is invariant to a layer's overall scale, so the
    // gain carries the score axis and nothing else.
    double score_span = 1.5;
    // Fraction of the maximum direction count (half the layer width) that the
    // most redundant layer still reads at full heterogeneity. Lower values
    // mean more copies per direction, i.e. cheaper pruning at the bottom of
    // the sensitivity ramp.
    double dir_floor = 0.1;
    // Response spectrum over a layer's input directions at full
    // heterogeneity, in e-folds: the drop from the dominant lead direction
    // to the start of the tail, and the further decay across the tail. The
    // strong head keeps hard pruning from decorrelating the model output
    // entirely (sweep curves stay out of the plateau regime); the tail
    // grades the cost of every additional lost direction.
    double response_head = 2.3;
    double response_tail = 2.0;
    // Lead directions whose |pi| channel is mixed back into the next latent,
    // topping its variance back up to stationary. Without this the graded
    // read spectrum would contract the latent every pass and deep inputs
    // would collapse to a couple of effective dimensions, which both inflates
    // noise amplification mid-stack and makes deep-layer compensation
    // spuriously easy.
    std::size_t fresh_dirs = 3;
};

// Deterministic synthetic stack + calibration set. `heterogeneity` spreads
// the layers along a latent sensitivity axis t in [0, 1] (a seeded
// permutation of an equally spaced grid, so the spread itself is guaranteed
// and only the order is random).
//
// Construction: each activation space carries r(t) latent directions, each
// written redundantly as act(+pi) / act(-pi) copies across its coordinates
// (t is the latent of the layer reading that space). A layer recovers the
// latent with a sign-balanced copy average, rotates it, and writes the next
// space's copy pattern, so the latent flows linearly through the stack and
// activation statistics are stationary in depth: fluctuations keep full rank
// and the relu correlation map cannot collapse deep layers onto a common
// ray (which would make late-layer compensation spuriously exact and turn
// compression cost into a function of position instead of the latent).
//
// The copy structure is what prices pruning. A surplus copy is a scaled
// linear duplicate of its siblings, so dropping the column is exactly
// compensable; once a direction is down to one copy per sign, the next drop
// costs that copy's one-sided residual (act(+pi) and act(-pi) are not linear
// functions of each other), and dropping a direction entirely loses it
// outright. Low-t layers read few directions with many copies each and are
// cheap to prune hard; high-t layers read the maximum direction count at
// minimal redundancy, so every pruned column hurts. The same latent also
// fixes each layer's score: a gain per layer places the mean per-weight
// pruning loss exactly on a log ramp in t (at heterogeneity 0 all layers
// score identically), which ties measured sensitivity and actual fragility
// to one knob.
inline std::pair<LinearModel, CalibrationSet> gen_synthetic_model(
    std::size_t n_layers, std::vector<std::size_t> dims, double heterogeneity,
    std::uint64_t seed, const SyntheticConfig& cfg = {}) {
    if (n_layers == 0) throw std::invalid_argument("gen_synthetic_model: need at least one layer");
    if (dims.empty()) throw std::invalid_argument("gen_synthetic_model: empty dims");
    if (!(heterogeneity >= 0.0 && heterogeneity <= 1.0)) {
        throw std::invalid_argument("gen_synthetic_model: heterogeneity outside [0, 1]");
    }
    if (cfg.n_samples == 0) {
        throw std::invalid_argument("gen_synthetic_model: need at least one sample");
    }
    if (dims.size() == 1) dims.assign(n_layers + 1, dims.front());
    if (dims.size() != n_layers + 1) {
        throw std::invalid_argument("gen_synthetic_model: dims must have n_layers + 1 entries");
    }
    for (std::size_t d : dims) {
        if (d == 0) throw std::invalid_argument("gen_synthetic_model: zero dimension");
    }

    Rng root(seed);
    const double h = heterogeneity;

    // Latent sensitivity per layer: permuted equally spaced grid.
    std::vector<double> t(n_layers, 0.5);
    if (n_layers > 1) {
        for (std::size_t l = 0; l < n_layers; ++l) {
            t[l] = static_cast<double>(l) / static_cast<double>(n_layers - 1);
        }
    }
    {
        Rng perm_rng = root.split("latent");
        perm_rng.shuffle(t);
    }

    // Copy layout per activation space; space l feeds layer l, so its
    // redundancy is priced by that layer's latent.
    std::vector<detail::SlotLayout> lay(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        lay[l] = detail::make_layout(dims[l], t[l], h, cfg.dir_floor);
    }

    // Response weight of input direction m: dominant lead, graded tail. The
    // index scale is the full pair count of the space, so the shape is the
    // same for every layer no matter how many directions it reads.
    const auto response = [&](std::size_t m, std::size_t d) {
        const double pairs = static_cast<double>(std::max<std::size_t>(1, d / 2));
        const double lead = 0.5 * static_cast<double>(std::min<std::size_t>(m, 2));
        const double frac = pairs > 3.0
                                ? static_cast<double>(m > 2 ? m - 2 : 0) / (pairs - 3.0)
                                : 0.0;
        return std::exp(-h * (cfg.response_head * lead + cfg.response_tail * frac));
    };

    // Calibration input: the layer-0 space realized from iid latent samples,
    // giving layer 0 exactly the statistics every deeper layer sees.
    CalibrationSet calib;
    {
        Rng xrng = root.split("x0");
        const auto& lin = lay[0];
        Matrix z(lin.dirs, cfg.n_samples);
        for (double& v : z.data()) v = xrng.gaussian();
        Matrix pre(dims[0], cfg.n_samples);
        for (std::size_t s = 0; s < dims[0]; ++s) {
            for (std::size_t k = 0; k < cfg.n_samples; ++k) {
                pre(s, k) = lin.amp[s] * lin.sign[s] * z(lin.dir[s], k);
            }
        }
        calib.x0 = apply_activation(cfg.hidden_act, pre);
    }

    LinearModel model;
    Matrix x = calib.x0;  // propagated calibration activations
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::size_t d_out = dims[l + 1];
        const std::size_t d_in = dims[l];
        const bool last = (l + 1 == n_layers);
        Rng wrng = root.split("weights", l);

        // Recover the latent (graded by the response spectrum) plus the
        // fresh |pi| channels of the lead directions, rotate the bundle, and
        // write the next space's copy pattern. The fresh rows are scaled so
        // the next latent's variance stays stationary despite the graded
        // read draining the tail. The output layer emits a plain dense mix.
        const std::size_t r_in = lay[l].dirs;
        const std::size_t q = std::min<std::size_t>(cfg.fresh_dirs, r_in);
        Matrix read = detail::reader(lay[l], q);
        double sum_rho2 = 0.0;
        for (std::size_t m = 0; m < r_in; ++m) {
            const double rho = response(m, d_in);
            sum_rho2 += rho * rho;
            for (std::size_t j = 0; j < d_in; ++j) read(m, j) *= rho;
        }
        if (q > 0) {
            const double fold_var = 1.0 - 2.0 / std::numbers::pi;  // var of |x|, x ~ N(0,1)
            const double kappa = std::sqrt(
                (static_cast<double>(r_in + q) - sum_rho2) /
                (static_cast<double>(q) * fold_var));
            for (std::size_t m = r_in; m < r_in + q; ++m) {
                for (std::size_t j = 0; j < d_in; ++j) read(m, j) *= kappa;
            }
        }
        Matrix w;
        if (last) {
            w = matmul(detail::haar_block(d_out, r_in + q, wrng), read);
        } else {
            const auto& lout = lay[l + 1];
            const Matrix mix =
                matmul(detail::haar_block(lout.dirs, r_in + q, wrng), read);
            w = Matrix(d_out, d_in);
            for (std::size_t s = 0; s < d_out; ++s) {
                const double g = lout.amp[s] * lout.sign[s];
                for (std::size_t j = 0; j < d_in; ++j) w(s, j) = g * mix(lout.dir[s], j);
            }
        }

        // Closed-loop gain: scale the layer so its mean per-weight pruning
        // loss lands exactly on the latent ramp (the loss is quadratic in a
        // global weight scale, and relative damage is invariant to it). At
        // h = 0 every layer lands on the same score. Damping matches the
        // scoring default so the placement is exact under default scoring.
        const HessianState hs = build_prepared_hessian(x, ScoreConfig{}.damping_frac);
        const double s_raw = layer_score(w, hs.hc);
        const double target = std::pow(10.0, cfg.score_span * h * (2.0 * t[l] - 1.0));
        const double c = std::sqrt(target / s_raw);
        for (double& v : w.data()) v *= c;

        LinearLayer layer;
        layer.name = "layer" + std::to_string(l);
        layer.w = std::move(w);
        layer.act = last ? Activation::identity : cfg.hidden_act;
        model.layers.push_back(std::move(layer));
        if (!last) x = layer_forward(model.layers.back(), x);
    }
    return {std::move(model), std::move(calib)};
}

}  // namespace slimstack
