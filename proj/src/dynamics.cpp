#include "ergolab/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "ergolab/errors.hpp"

namespace ergolab {

StatePrep::StatePrep(std::vector<cplx> amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.empty()) throw ConfigError("state has no amplitudes");
    double s = 0.0;
    for (const auto& a : amps_) {
        if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) throw ConfigError("state has non-finite amplitude");
        s += std::norm(a);
    }
    norm_ = std::sqrt(s);
    if (std::abs(s - 1.0) > 1e-12) throw ConfigError("state is not normalized");
}

std::vector<std::size_t> StatePrep::support() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < amps_.size(); ++j)
        if (amps_[j] != cplx(0.0, 0.0)) out.push_back(j);
    return out;
}

StatePrep basis_state(std::size_t n, std::size_t e) {
    if (e >= n) throw ConfigError("basis index out of range");
    std::vector<cplx> a(n, 0.0);
    a[e] = 1.0;
    return StatePrep(std::move(a));
}

StatePrep superposition(std::size_t n, const std::vector<std::pair<std::size_t, cplx>>& components) {
    std::vector<cplx> a(n, 0.0);
    for (const auto& [j, g] : components) {
        if (j >= n) throw ConfigError("superposition index out of range");
        a[j] += g;
    }
    return StatePrep(std::move(a));
}

void require_nondegenerate(const EigenSystem& s) {
    const auto pairs = near_degenerate_pairs(s);
    if (!pairs.empty()) {
        std::ostringstream os;
        os << "near-degenerate spectrum: " << pairs.size() << " gap(s) below " << kDegeneracyTolerance
           << " x mean spacing, first at index " << pairs.front();
        throw NumericalError(os.str());
    }
}

std::vector<cplx> eigenbasis_amplitudes(const EigenSystem& s, const StatePrep& psi) {
    if (psi.size() != s.size()) throw ConfigError("state/eigensystem dimension mismatch");
    const auto sup = psi.support();
    const auto& g = psi.amplitudes();
    std::vector<cplx> out(s.size(), 0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        cplx acc = 0.0;
        for (auto j : sup) acc += s.vectors(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * g[j];
        out[i] = acc;
    }
    return out;
}

double infinite_time_average(const EigenSystem& s, const StatePrep& psi, const Observable& A) {
    require_nondegenerate(s);
    const auto a = eigenbasis_amplitudes(s, psi);
    const Eigen::VectorXd ev = all_eigenstate_expectations(s, A);
    double v = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) v += std::norm(a[i]) * ev(static_cast<Eigen::Index>(i));
    return v;
}

double finite_time_expectation(const EigenSystem& s, const StatePrep& psi, const Observable& A, double t) {
    if (A.size() != s.size()) throw ConfigError("observable/eigensystem dimension mismatch");
    const auto a = eigenbasis_amplitudes(s, psi);
    Eigen::VectorXcd at(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i)
        at(static_cast<Eigen::Index>(i)) = a[i] * std::polar(1.0, -s.eigenvalues(static_cast<Eigen::Index>(i)) * t);
    const Eigen::VectorXcd phi = s.vectors.cast<cplx>() * at;
    return (phi.adjoint() * (A.matrix().cast<cplx>() * phi))(0, 0).real();
}

TimeEvolution::TimeEvolution(const EigenSystem& s, const StatePrep& psi, const Observable& A)
    : energies_(s.eigenvalues) {
    if (A.size() != s.size()) throw ConfigError("observable/eigensystem dimension mismatch");
    const auto a = eigenbasis_amplitudes(s, psi);
    amps_.resize(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) amps_(static_cast<Eigen::Index>(i)) = a[i];
    rotated_ = s.vectors.transpose() * A.matrix() * s.vectors;
}

double TimeEvolution::expectation(double t) const {
    Eigen::VectorXcd at(amps_.size());
    for (Eigen::Index i = 0; i < amps_.size(); ++i) at(i) = amps_(i) * std::polar(1.0, -energies_(i) * t);
    const Eigen::VectorXcd Ma = rotated_.cast<cplx>() * at;
    return at.dot(Ma).real();
}

double running_time_average(const TimeEvolution& ev, double T, double dt) {
    if (!(T > 0.0) || !(dt > 0.0)) throw ConfigError("time average needs T > 0 and dt > 0");
    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / dt));
    const double h = T / static_cast<double>(steps);
    double s = 0.5 * (ev.expectation(0.0) + ev.expectation(T));
    for (std::size_t k = 1; k < steps; ++k) s += ev.expectation(static_cast<double>(k) * h);
    return s * h / T;
}

QuenchResult quench_time_average(const EigenSystem& s, std::size_t e, const Observable& A, double edge_exclusion) {
    if (e >= s.size()) throw ConfigError("quench index out of range");
    QuenchResult r;
    const double n = static_cast<double>(s.size());
    const double x = static_cast<double>(e);
    r.edge_warning = x < edge_exclusion * n || x >= (1.0 - edge_exclusion) * n;
    r.value = infinite_time_average(s, basis_state(s.size(), e), A);
    return r;
}

namespace {

// Lambda_2 restricted to states that exist; the time-averaged occupations sum to one
double edge_weighted_average(const Observable& A, const LagProfile& lambda2, std::size_t e) {
    const long n = static_cast<long>(A.size());
    double mass = 0.0;
    for (int s = lambda2.min_lag; s <= lambda2.max_lag(); ++s) {
        const long j = static_cast<long>(e) - s;
        if (j >= 0 && j < n) mass += lambda2.at(s);
    }
    if (!(mass > 0.0)) throw NumericalError("Lambda_2 has no mass over the spectrum");
    return envelope_weighted_average(A, lambda2, e) / mass;
}

}  // namespace

QuenchPrediction quench_prediction(const LagProfile& lambda, const LagProfile& lambda2, const Observable& A,
                                   std::size_t e) {
    if (!(std::abs(lambda2.total() - 1.0) <= 0.02)) throw ConfigError("Lambda_2 is not normalized");
    if (e >= A.size()) throw ConfigError("quench index out of range");
    QuenchPrediction p;
    const long n = static_cast<long>(A.size());
    p.value = edge_weighted_average(A, lambda2, e);
    double d = 0.0;
    for (int r = lambda.min_lag; r <= lambda.max_lag(); ++r) {
        const long i = static_cast<long>(e) + r;
        if (i < 0 || i >= n) continue;
        const double l = lambda.at(r);
        d += l * l * A.diagonal(static_cast<std::size_t>(i));
    }
    p.dropped_term = 2.0 * d;
    p.dropped_ratio = p.value != 0.0 ? std::abs(p.dropped_term / p.value) : 0.0;
    return p;
}

QuenchPrediction quench_prediction(const LagProfile& lambda, const Observable& A, std::size_t e) {
    return quench_prediction(lambda, convolve_envelope(lambda), A, e);
}

namespace {
constexpr std::size_t kDirectCrossLimit = 64;
}

TimeAverageReport superposition_time_average(const EigenSystem& s, const StatePrep& psi, const Observable& A,
                                             const LagProfile* lambda2) {
    require_nondegenerate(s);
    const auto sup = psi.support();
    const auto& g = psi.amplitudes();
    const auto a = eigenbasis_amplitudes(s, psi);
    const Eigen::VectorXd ev = all_eigenstate_expectations(s, A);

    TimeAverageReport rep;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto I = static_cast<Eigen::Index>(i);
        double diag = 0.0;
        cplx cross = 0.0;
        for (auto nu : sup) {
            const double cn = s.vectors(static_cast<Eigen::Index>(nu), I);
            diag += std::norm(g[nu]) * cn * cn;
            if (sup.size() > kDirectCrossLimit) continue;
            for (auto mu : sup)
                if (mu != nu) cross += std::conj(g[nu]) * g[mu] * cn * s.vectors(static_cast<Eigen::Index>(mu), I);
        }
        // wide states: the nu != mu sum equals |<i|psi>|^2 minus the diagonal part
        if (sup.size() > kDirectCrossLimit) cross = std::norm(a[i]) - diag;
        rep.infinite_time_value += std::norm(a[i]) * ev(I);
        rep.diagonal_term += diag * ev(I);
        rep.interference_term += cross.real() * ev(I);
    }
    if (lambda2) {
        rep.bound_value = interference_bound(psi, *lambda2, A);
        double pred = 0.0;
        for (auto nu : sup) pred += std::norm(g[nu]) * edge_weighted_average(A, *lambda2, nu);
        rep.prediction = pred;
    }
    return rep;
}

double interference_bound(const StatePrep& psi, const LagProfile& lambda2, const Observable& A) {
    if (psi.size() != A.size()) throw ConfigError("state/observable dimension mismatch");
    double s = 0.0;
    for (auto mu : psi.support()) s += std::norm(psi.amplitudes()[mu]) * A.square_diagonal(mu);
    return std::sqrt(std::max(lambda2.at(0), 0.0)) * std::sqrt(s);
}

}  // namespace ergolab
