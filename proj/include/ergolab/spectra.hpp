#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ergolab/model.hpp"

namespace ergolab {

// Column i of `vectors` is eigenvector |i> in the unperturbed basis,
// vectors(j, i) = c_ji = <j|i>_0.
struct EigenSystem {
    Eigen::VectorXd eigenvalues;  // ascending
    Eigen::MatrixXd vectors;
    double residual_norm = 0.0;         // max |Hc - c diag(eigenvalues)|
    double orthogonality_error = 0.0;   // max |c^T c - I|

    std::size_t size() const { return static_cast<std::size_t>(eigenvalues.size()); }
};

inline constexpr double kOrthogonalityTolerance = 1e-10;
inline constexpr double kResidualTolerance = 1e-10;  // relative to max |eigenvalue|
inline constexpr double kDegeneracyTolerance = 1e-9;  // relative to mean spacing

// Full symmetric eigendecomposition (LAPACK dsyevd). Checks residual and
// orthonormality on every call and throws NumericalError if either fails.
EigenSystem diagonalize(const SymmetricMatrix& H);

// Mean consecutive difference over eigenvalues[first..last] (inclusive).
double mean_level_spacing(std::span<const double> eigenvalues, std::size_t first, std::size_t last);
double mean_level_spacing(const EigenSystem& system, std::size_t first, std::size_t last);

// Overlaps c_ji over j for eigenstate i.
Eigen::VectorXd overlap_row(const EigenSystem& system, std::size_t i);

// Index pairs (k, k+1) whose eigenvalues differ by less than
// kDegeneracyTolerance times the mean spacing.
std::vector<std::size_t> near_degenerate_pairs(const EigenSystem& system);

// Pins OpenBLAS to one thread so results do not depend on its partitioning.
void pin_blas_threads();

}  // namespace ergolab
