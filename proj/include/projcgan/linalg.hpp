#ifndef PROJCGAN_LINALG_HPP
#define PROJCGAN_LINALG_HPP

#include "projcgan/tensor.hpp"

namespace projcgan {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, 64-bit.
/// `a` is symmetrized internally. Fills `evals` [n] descending and `evecs`
/// [n,n] with matching columns (A = V diag(w) V^T). Returns sweeps used;
/// throws DivergenceError when the off-diagonal mass will not shrink below
/// tol * frobenius within max_sweeps.
int jacobi_eigh(const TensorD& a, TensorD& evals, TensorD& evecs, int max_sweeps = 64,
                double tol = 1e-13);

/// Singular values of an arbitrary matrix by one-sided Jacobi, descending.
/// Deliberately a different algorithm from jacobi_eigh so the two can serve
/// as independent cross-checks.
TensorD svd_values(const TensorD& a, int max_sweeps = 64, double tol = 1e-13);

/// In-place modified Gram-Schmidt on the columns of a [n,k] matrix. Columns
/// that collapse to zero norm are replaced with fresh unit basis vectors.
void orthonormalize_columns(TensorD& m);

}  // namespace projcgan

#endif
