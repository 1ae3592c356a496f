#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "slimstack/matrix.hpp"

namespace slimstack {

// Per-layer curvature state. `h` is the damped Hessian of the layer
// reconstruction error, `h_inv` its inverse, and `hc` the precomputed
// sequential-row matrix: row p of `hc` equals row p of the inverse Hessian
// after columns 0..p-1 have been removed one by one, with explicit zeros left
// of the diagonal. `dead` flags columns whose calibration energy was zero
// before damping.
struct HessianState {
    Matrix h;
    Matrix h_inv;
    Matrix hc;
    double damping_frac = 0.0;
    double damping_applied = 0.0;
    std::vector<bool> dead;
};

// Lower-triangular Cholesky factor of an SPD matrix, h = L * L^T.
// A pivot at or below 1e-12 times the largest input diagonal is treated as a
// factorization failure rather than letting garbage propagate.
inline Matrix cholesky_lower(const Matrix& h) {
    if (h.rows() != h.cols()) {
        throw std::invalid_argument("cholesky_lower: matrix is not square");
    }
    const std::size_t n = h.rows();
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, h(i, i));
    const double pivot_floor = 1e-12 * max_diag;

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = h(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > pivot_floor)) {
            throw std::runtime_error("not positive definite: Cholesky pivot collapsed at column " +
                                     std::to_string(j));
        }
        l(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = h(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

// Inverse of an SPD matrix via its Cholesky factor: invert L by forward
// substitution, then h^-1 = L^-T L^-1, symmetrized.
inline Matrix invert_spd(const Matrix& h) {
    const Matrix l = cholesky_lower(h);
    const std::size_t n = h.rows();

    Matrix linv(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        linv(j, j) = 1.0 / l(j, j);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = j; k < i; ++k) s += l(i, k) * linv(k, j);
            linv(i, j) = -s / l(i, i);
        }
    }

    Matrix inv(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t k = i; k < n; ++k) s += linv(k, i) * linv(k, j);
            inv(i, j) = s;
            inv(j, i) = s;
        }
    }
    return inv;
}

// Damped layer Hessian from calibration inputs x (d_col x N): h = 2*x*x^T
// plus damping_frac * mean(diag) on the diagonal. Columns with zero
// calibration energy before damping are flagged dead. Only `h`, the damping
// bookkeeping and the dead flags are filled in; call `prepare_hessian` (or
// `invert_spd` / `cholesky_rows` directly) for the derived matrices.
inline HessianState build_hessian(const Matrix& x, double damping_frac) {
    if (x.rows() == 0 || x.cols() == 0) {
        throw std::invalid_argument("build_hessian: empty calibration input");
    }
    if (damping_frac < 0.0) {
        throw std::invalid_argument("build_hessian: damping_frac must be >= 0");
    }
    require_finite(x, "calibration input");

    const std::size_t d = x.rows();
    HessianState state;
    state.damping_frac = damping_frac;
    state.h = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        const double* xi = x.row_ptr(i);
        for (std::size_t j = i; j < d; ++j) {
            const double* xj = x.row_ptr(j);
            double s = 0.0;
            for (std::size_t k = 0; k < x.cols(); ++k) s += xi[k] * xj[k];
            state.h(i, j) = 2.0 * s;
            state.h(j, i) = 2.0 * s;
        }
    }

    double diag_sum = 0.0;
    state.dead.resize(d, false);
    for (std::size_t i = 0; i < d; ++i) {
        diag_sum += state.h(i, i);
        state.dead[i] = (state.h(i, i) == 0.0);
    }
    const double mean_diag = diag_sum / static_cast<double>(d);
    if (mean_diag <= 0.0) {
        throw std::runtime_error("singular Hessian: calibration inputs carry no energy");
    }
    state.damping_applied = damping_frac * mean_diag;
    for (std::size_t i = 0; i < d; ++i) state.h(i, i) += state.damping_applied;
    return state;
}

// One step of the inverse update under weight removal: subtract the rank-one
// term h_inv[:,p]*h_inv[p,:] / h_inv[p][p], then delete row and column p.
// The result equals the inverse of h with row/column p deleted.
inline Matrix remove_row_col(const Matrix& h_inv, std::size_t p) {
    if (h_inv.rows() != h_inv.cols()) {
        throw std::invalid_argument("remove_row_col: matrix is not square");
    }
    if (p >= h_inv.rows()) {
        throw std::invalid_argument("remove_row_col: index out of range");
    }
    const double pivot = h_inv(p, p);
    if (std::fabs(pivot) < 1e-300) {
        throw std::runtime_error("zero pivot in inverse update");
    }
    const std::size_t n = h_inv.rows();
    Matrix r(n - 1, n - 1);
    for (std::size_t i = 0, ri = 0; i < n; ++i) {
        if (i == p) continue;
        const double cip = h_inv(i, p) / pivot;
        for (std::size_t j = 0, rj = 0; j < n; ++j) {
            if (j == p) continue;
            r(ri, rj) = h_inv(i, j) - cip * h_inv(p, j);
            ++rj;
        }
        ++ri;
    }
    return r;
}

// Precomputes every row of the sequentially-removed inverse in one
// factorization. With h_inv = L*L^T (lower Cholesky), iteratively removing
// columns 0..p-1 from h_inv leaves the Schur complement L[p:,p:]*L[p:,p:]^T,
// whose row p is L[p][p] * L[:,p]^T. Row p of the result therefore holds
// L(p,p)*L(j,p) for j >= p and zeros to the left of the diagonal.
inline Matrix cholesky_rows(const Matrix& h) {
    Matrix h_inv = invert_spd(h);
    const std::size_t n = h.rows();
    // Symmetrize before the second factorization.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 0.5 * (h_inv(i, j) + h_inv(j, i));
            h_inv(i, j) = v;
            h_inv(j, i) = v;
        }
    }
    const Matrix l = cholesky_lower(h_inv);
    Matrix hc(n, n);
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t j = p; j < n; ++j) hc(p, j) = l(p, p) * l(j, p);
    }
    return hc;
}

// Convenience: fill in h_inv and hc for a freshly built state.
inline HessianState prepare_hessian(HessianState state) {
    state.h_inv = invert_spd(state.h);
    state.hc = cholesky_rows(state.h);
    return state;
}

inline HessianState build_prepared_hessian(const Matrix& x, double damping_frac) {
    return prepare_hessian(build_hessian(x, damping_frac));
}

}  // namespace slimstack
