#include "ergolab/spectra.hpp"

#include <cmath>
#include <sstream>

#include <lapacke.h>

#include "ergolab/errors.hpp"

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace ergolab {

void pin_blas_threads() {
    static const bool done = [] {
        if (openblas_set_num_threads) openblas_set_num_threads(1);
        return true;
    }();
    (void)done;
}

EigenSystem diagonalize(const SymmetricMatrix& H) {
    pin_blas_threads();
    const Eigen::MatrixXd& A = H.dense();
    const lapack_int n = static_cast<lapack_int>(A.rows());
    if (n == 0) throw ConfigError("diagonalize: empty matrix");
    if (!A.allFinite()) throw NumericalError("diagonalize: non-finite matrix entries");

    EigenSystem s;
    s.vectors = A;  // column-major, overwritten by eigenvectors
    s.eigenvalues.resize(n);
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, s.vectors.data(), n, s.eigenvalues.data());
    if (info != 0) {
        std::ostringstream os;
        os << "diagonalize: dsyevd failed with info=" << info;
        throw NumericalError(os.str());
    }

    // sign convention: largest-magnitude entry positive, lowest index on ties
    for (lapack_int i = 0; i < n; ++i) {
        auto col = s.vectors.col(i);
        Eigen::Index best = 0;
        double bestv = -1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double a = std::abs(col(j));
            if (a > bestv) {
                bestv = a;
                best = j;
            }
        }
        if (col(best) < 0.0) col = -col;
    }

    const Eigen::MatrixXd R = A * s.vectors - s.vectors * s.eigenvalues.asDiagonal();
    s.residual_norm = R.cwiseAbs().maxCoeff();
    Eigen::MatrixXd G = s.vectors.transpose() * s.vectors;
    G.diagonal().array() -= 1.0;
    s.orthogonality_error = G.cwiseAbs().maxCoeff();

    const double scale = std::max(1.0, s.eigenvalues.cwiseAbs().maxCoeff());
    if (!(s.residual_norm <= kResidualTolerance * scale) || !(s.orthogonality_error <= kOrthogonalityTolerance)) {
        std::ostringstream os;
        os << "diagonalize: invariant violated (residual " << s.residual_norm << ", orthogonality "
           << s.orthogonality_error << ")";
        throw NumericalError(os.str());
    }
    return s;
}

double mean_level_spacing(std::span<const double> e, std::size_t first, std::size_t last) {
    if (last >= e.size() || first >= last) throw ConfigError("mean_level_spacing: window needs >= 2 levels");
    return (e[last] - e[first]) / static_cast<double>(last - first);
}

double mean_level_spacing(const EigenSystem& s, std::size_t first, std::size_t last) {
    return mean_level_spacing(std::span<const double>(s.eigenvalues.data(), s.size()), first, last);
}

Eigen::VectorXd overlap_row(const EigenSystem& s, std::size_t i) {
    if (i >= s.size()) throw ConfigError("overlap_row: index out of range");
    return s.vectors.col(static_cast<Eigen::Index>(i));
}

std::vector<std::size_t> near_degenerate_pairs(const EigenSystem& s) {
    std::vector<std::size_t> out;
    const std::size_t n = s.size();
    if (n < 2) return out;
    const double spacing = mean_level_spacing(s, 0, n - 1);
    const double tol = kDegeneracyTolerance * spacing;
    for (std::size_t k = 0; k + 1 < n; ++k)
        if (s.eigenvalues(k + 1) - s.eigenvalues(k) < tol) out.push_back(k);
    return out;
}

}  // namespace ergolab
