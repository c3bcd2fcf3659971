#include "projcgan/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "projcgan/errors.hpp"

namespace projcgan {

namespace {

double off_diagonal_norm(const TensorD& a) {
    const int n = a.extent(0);
    double s = 0.0;
    for (int p = 0; p < n; ++p)
        for (int q = p + 1; q < n; ++q) s += a.at(p, q) * a.at(p, q);
    return std::sqrt(2.0 * s);
}

double frobenius(const TensorD& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) s += a[i] * a[i];
    return std::sqrt(s);
}

}  // namespace

int jacobi_eigh(const TensorD& a_in, TensorD& evals, TensorD& evecs, int max_sweeps, double tol) {
    if (a_in.rank() != 2 || a_in.extent(0) != a_in.extent(1))
        throw DimensionError("jacobi_eigh expects a square matrix, got " + shape_str(a_in.shape()));
    const int n = a_in.extent(0);

    TensorD a({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a.at(i, j) = 0.5 * (a_in.at(i, j) + a_in.at(j, i));

    evecs = TensorD({n, n});
    for (int i = 0; i < n; ++i) evecs.at(i, i) = 1.0;
    evals = TensorD({n});

    const double fro = std::max(frobenius(a), 1e-300);
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        if (off_diagonal_norm(a) <= tol * fro) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a.at(p, q);
                if (std::abs(apq) <= 1e-300) continue;
                const double tau = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
                const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a.at(k, p), akq = a.at(k, q);
                    a.at(k, p) = c * akp - s * akq;
                    a.at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a.at(p, k), aqk = a.at(q, k);
                    a.at(p, k) = c * apk - s * aqk;
                    a.at(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = evecs.at(k, p), vkq = evecs.at(k, q);
                    evecs.at(k, p) = c * vkp - s * vkq;
                    evecs.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (off_diagonal_norm(a) > tol * fro)
        throw DivergenceError("jacobi_eigh did not converge in " + std::to_string(max_sweeps) +
                              " sweeps");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&a](int i, int j) { return a.at(i, i) > a.at(j, j); });
    TensorD v_sorted({n, n});
    for (int j = 0; j < n; ++j) {
        evals[j] = a.at(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(j)]);
        for (int i = 0; i < n; ++i) v_sorted.at(i, j) = evecs.at(i, order[static_cast<std::size_t>(j)]);
    }
    evecs = std::move(v_sorted);
    return sweep;
}

TensorD svd_values(const TensorD& a_in, int max_sweeps, double tol) {
    if (a_in.rank() != 2) throw DimensionError("svd_values expects a matrix");
    // work on the tall orientation so columns are the shorter list
    const bool transpose = a_in.extent(0) < a_in.extent(1);
    const int m = transpose ? a_in.extent(1) : a_in.extent(0);
    const int n = transpose ? a_in.extent(0) : a_in.extent(1);
    TensorD a({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) a.at(i, j) = transpose ? a_in.at(j, i) : a_in.at(i, j);

    auto col_dot = [&a, m](int i, int j) {
        double s = 0.0;
        for (int k = 0; k < m; ++k) s += a.at(k, i) * a.at(k, j);
        return s;
    };

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (int i = 0; i < n - 1; ++i) {
            for (int j = i + 1; j < n; ++j) {
                const double alpha = col_dot(i, i);
                const double beta = col_dot(j, j);
                const double gamma = col_dot(i, j);
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta) + 1e-300) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int k = 0; k < m; ++k) {
                    const double aki = a.at(k, i), akj = a.at(k, j);
                    a.at(k, i) = c * aki - s * akj;
                    a.at(k, j) = s * aki + c * akj;
                }
            }
        }
        if (!rotated) break;
    }

    TensorD sv({n});
    for (int j = 0; j < n; ++j) sv[j] = std::sqrt(col_dot(j, j));
    std::sort(sv.data(), sv.data() + n, std::greater<double>());
    return sv;
}

void orthonormalize_columns(TensorD& m) {
    if (m.rank() != 2) throw DimensionError("orthonormalize_columns expects a matrix");
    const int n = m.extent(0), k = m.extent(1);

    auto project_out_previous = [&m, n](int j) {
        // two passes: a single MGS pass can leave an O(1) overlap when the
        // residual is at roundoff scale
        for (int pass = 0; pass < 2; ++pass)
            for (int prev = 0; prev < j; ++prev) {
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += m.at(i, prev) * m.at(i, j);
                for (int i = 0; i < n; ++i) m.at(i, j) -= dot * m.at(i, prev);
            }
        double norm = 0.0;
        for (int i = 0; i < n; ++i) norm += m.at(i, j) * m.at(i, j);
        return std::sqrt(norm);
    };

    for (int j = 0; j < k; ++j) {
        double orig = 0.0;
        for (int i = 0; i < n; ++i) orig += m.at(i, j) * m.at(i, j);
        orig = std::sqrt(orig);
        double norm = project_out_previous(j);
        if (norm <= 1e-10 * std::max(orig, 1.0)) {
            // column was (numerically) inside the span of the previous ones:
            // restart from a basis vector instead of normalizing roundoff
            for (int attempt = 0; attempt < n && norm <= 1e-6; ++attempt) {
                for (int i = 0; i < n; ++i) m.at(i, j) = (i == (j + attempt) % n) ? 1.0 : 0.0;
                norm = project_out_previous(j);
            }
        }
        for (int i = 0; i < n; ++i) m.at(i, j) /= norm;
    }
}

}  // namespace projcgan
