#include "projcgan/spectral.hpp"

#include <cmath>

#include "projcgan/errors.hpp"
#include "projcgan/linalg.hpp"

namespace projcgan {

namespace {

template <typename T>
void check_mat(const Tensor<T>& m) {
    if (m.rank() != 2 || m.extent(0) < 1 || m.extent(1) < 1)
        throw DimensionError("spectral ops expect a non-empty matrix, got " + shape_str(m.shape()));
}

template <typename T>
void normalize_or_keep(Tensor<T>& v, const Tensor<T>& fallback) {
    double norm = 0.0;
    for (std::int64_t i = 0; i < v.numel(); ++i) norm += static_cast<double>(v[i]) * v[i];
    norm = std::sqrt(norm);
    if (norm < kSigmaFloor) {
        v = fallback;
        return;
    }
    const T inv = static_cast<T>(1.0 / norm);
    for (std::int64_t i = 0; i < v.numel(); ++i) v[i] *= inv;
}

}  // namespace

template <typename T>
Tensor<T> sn_right_vector(const Tensor<T>& m2d, const Tensor<T>& u) {
    check_mat(m2d);
    const int rows = m2d.extent(0), cols = m2d.extent(1);
    if (u.numel() != rows) throw DimensionError("sn: u length does not match matrix rows");
    Tensor<T> v({cols});
    for (int j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (int i = 0; i < rows; ++i) acc += static_cast<double>(m2d.at(i, j)) * u[i];
        v[j] = static_cast<T>(acc);
    }
    Tensor<T> e1({cols});
    e1[0] = T(1);
    normalize_or_keep(v, e1);
    return v;
}

template <typename T>
Tensor<T> sn_power_step(const Tensor<T>& m2d, Tensor<T>& u) {
    Tensor<T> v = sn_right_vector(m2d, u);
    const int rows = m2d.extent(0), cols = m2d.extent(1);
    Tensor<T> u_next({rows});
    for (int i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < cols; ++j) acc += static_cast<double>(m2d.at(i, j)) * v[j];
        u_next[i] = static_cast<T>(acc);
    }
    normalize_or_keep(u_next, u);
    u = std::move(u_next);
    return v;
}

template <typename T>
T sn_sigma_value(const Tensor<T>& m2d, const Tensor<T>& u, const Tensor<T>& v) {
    check_mat(m2d);
    const int rows = m2d.extent(0), cols = m2d.extent(1);
    double acc = 0.0;
    for (int i = 0; i < rows; ++i) {
        double row = 0.0;
        for (int j = 0; j < cols; ++j) row += static_cast<double>(m2d.at(i, j)) * v[j];
        acc += static_cast<double>(u[i]) * row;
    }
    return static_cast<T>(acc);
}

template <typename T>
NodeId sn_sigma_node(Tape<T>& tape, NodeId w2d, const Tensor<T>& u, const Tensor<T>& v) {
    const Tensor<T>& w = tape.val(w2d);
    check_mat(w);
    const int rows = w.extent(0), cols = w.extent(1);
    if (u.numel() != rows || v.numel() != cols)
        throw DimensionError("sn_sigma_node: u/v lengths do not match the matrix");
    NodeId urow = tape.constant(Tensor<T>({1, rows}, u.vec()));
    NodeId vcol = tape.constant(Tensor<T>({cols, 1}, v.vec()));
    NodeId uw = tape.matmul(urow, w2d);
    NodeId sigma = tape.reshape(tape.matmul(uw, vcol), {});
    return tape.max_scalar(sigma, static_cast<T>(kSigmaFloor));
}

double spectral_norm_converged(const TensorD& m2d, int block, int max_iters) {
    check_mat(m2d);
    const int rows = m2d.extent(0), cols = m2d.extent(1);
    const int b = std::min(block, cols);
    if (b < 1) throw ValueError("spectral_norm_converged: block must be positive");

    // deterministic start: leading unit basis columns
    TensorD q({cols, b});
    for (int j = 0; j < b; ++j) q.at(j % cols, j) = 1.0;

    TensorD mq({rows, b});
    TensorD next({cols, b});
    for (int iter = 0; iter < max_iters; ++iter) {
        // next = M^T (M q)
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < b; ++j) {
                double acc = 0.0;
                for (int k = 0; k < cols; ++k) acc += m2d.at(i, k) * q.at(k, j);
                mq.at(i, j) = acc;
            }
        for (int k = 0; k < cols; ++k)
            for (int j = 0; j < b; ++j) {
                double acc = 0.0;
                for (int i = 0; i < rows; ++i) acc += m2d.at(i, k) * mq.at(i, j);
                next.at(k, j) = acc;
            }
        q = next;
        orthonormalize_columns(q);
    }

    // Rayleigh-Ritz on the b-dimensional subspace: eigenvalues of Q^T (M^T M) Q
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < b; ++j) {
            double acc = 0.0;
            for (int k = 0; k < cols; ++k) acc += m2d.at(i, k) * q.at(k, j);
            mq.at(i, j) = acc;
        }
    TensorD small({b, b});
    for (int a = 0; a < b; ++a)
        for (int c = 0; c < b; ++c) {
            double acc = 0.0;
            for (int i = 0; i < rows; ++i) acc += mq.at(i, a) * mq.at(i, c);
            small.at(a, c) = acc;
        }
    TensorD evals, evecs;
    jacobi_eigh(small, evals, evecs);
    return std::sqrt(std::max(evals[0], 0.0));
}

template Tensor<float> sn_power_step<float>(const Tensor<float>&, Tensor<float>&);
template Tensor<double> sn_power_step<double>(const Tensor<double>&, Tensor<double>&);
template Tensor<float> sn_right_vector<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> sn_right_vector<double>(const Tensor<double>&, const Tensor<double>&);
template float sn_sigma_value<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template double sn_sigma_value<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template NodeId sn_sigma_node<float>(Tape<float>&, NodeId, const Tensor<float>&, const Tensor<float>&);
template NodeId sn_sigma_node<double>(Tape<double>&, NodeId, const Tensor<double>&, const Tensor<double>&);

}  // namespace projcgan
