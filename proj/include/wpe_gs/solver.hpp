#pragma once

// Iteratively reweighted FISTA for the group-sparse weighted prediction
// error problem of one frequency bin:
//
//   min_g  1/2 ||x1 - X g||_W^2 + lambda * sum_{m >= 2} ||g_m||_2
//
// The gradient step uses A g - b with A = X^H W X and b = X^H W x1, step size
// 1/P(A); the 1/2 on the data term is the scaling under which that step is a
// proximal-gradient step. The reference group g_1 is never penalized.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "wpe_gs/core.hpp"
#include "wpe_gs/mclp.hpp"

namespace wpe_gs {

struct SolverConfig {
    double p = 0.5;
    std::size_t reweight_iters = 10;   // outer iterations I
    std::size_t fista_iters = 50;      // inner iterations J
    double lambda_c = 1e-2;
    double epsilon = 1e-8;
    std::size_t taps = 20;             // L_g
    std::size_t base_tau = 2;
    std::size_t eig_iters = 100;
    double eig_tol = 1e-6;
};

inline void validate(const SolverConfig& cfg)
{
    require(cfg.p > 0.0 && cfg.p <= 1.0, "p must lie in (0, 1]");
    require(cfg.reweight_iters >= 1, "reweighting iterations must be >= 1");
    require(cfg.fista_iters >= 1, "FISTA iterations must be >= 1");
    require(cfg.lambda_c >= 0.0, "lambda_c must be >= 0");
    require(cfg.epsilon > 0.0, "epsilon must be > 0");
    require(cfg.taps >= 1, "filter length must be >= 1");
    require(cfg.base_tau >= 1, "base prediction delay must be >= 1");
    require(cfg.eig_iters >= 1 && cfg.eig_tol > 0.0, "invalid power iteration controls");
}

// Stacked filter of `groups` contiguous blocks of `taps` coefficients each.
struct PredictionFilter {
    CVector coeffs;
    std::size_t taps = 1;

    static PredictionFilter zeros(std::size_t groups, std::size_t taps)
    {
        return {CVector::Zero(Eigen::Index(groups * taps)), taps};
    }

    std::size_t groups() const { return std::size_t(coeffs.size()) / taps; }
    auto group(std::size_t m) { return coeffs.segment(Eigen::Index(m * taps), Eigen::Index(taps)); }
    auto group(std::size_t m) const { return coeffs.segment(Eigen::Index(m * taps), Eigen::Index(taps)); }
};

// w(n) = (|d(n)|^2 + epsilon)^(p/2 - 1)
inline RVector compute_weights(const CVector& d, double p, double epsilon)
{
    require(epsilon > 0.0, "compute_weights: epsilon must be > 0");
    if (!d.allFinite()) throw InputError("compute_weights: non-finite residual");
    const double exponent = p / 2.0 - 1.0;
    RVector w(d.size());
    for (Eigen::Index n = 0; n < d.size(); ++n) w[n] = std::pow(std::norm(d[n]) + epsilon, exponent);
    return w;
}

// Block soft-thresholding of every non-reference group.
inline void prox_group_inplace(PredictionFilter& g, double threshold)
{
    for (std::size_t m = 1; m < g.groups(); ++m) {
        auto block = g.group(m);
        const double norm = block.norm();
        if (norm <= threshold) {
            block.setZero();
        } else {
            block *= 1.0 - threshold / norm;
        }
    }
}

inline PredictionFilter prox_group(PredictionFilter g, double threshold)
{
    require(threshold >= 0.0, "prox_group: threshold must be >= 0");
    prox_group_inplace(g, threshold);
    return g;
}

struct EigenEstimate {
    double value = 0.0;
    bool converged = false;
    bool degenerate = false;
};

// Largest Gershgorin disc bound; an upper bound on the spectral radius.
inline double gershgorin_bound(const CMatrix& a)
{
    return a.cwiseAbs().rowwise().sum().maxCoeff();
}

// Upper bound on the spectral radius of a Hermitian PSD matrix from repeated
// squaring: ||A^(2^s)||_F^(1/2^s) overestimates by at most n^(1/2^(s+1)),
// with s picked so that factor stays below 1 + slack.
inline double squaring_bound(const CMatrix& a, double slack = 5e-4)
{
    const double n = double(a.rows());
    std::size_t s = 0;
    while (std::ldexp(1.0, int(s) + 1) * std::log1p(slack) < std::log(n)) ++s;
    const double f0 = a.norm();
    if (!(f0 > 0.0)) return 0.0;
    CMatrix b = a / f0;
    double log_norm = std::log(f0);
    CMatrix sq(a.rows(), a.cols());
    for (std::size_t k = 0; k < s; ++k) {
        sq.noalias() = b * b;
        const double f = sq.norm();
        if (!(f > 0.0)) return 0.0;
        b = sq / f;
        log_norm = 2.0 * log_norm + std::log(f);
    }
    return std::exp(std::ldexp(log_norm, -int(s)));
}

// Dominant eigenvalue of a Hermitian PSD matrix by power iteration from the
// normalized all-ones vector. If the iteration does not settle within
// max_iters the result is an upper bound: the smaller of the Gershgorin and
// squaring bounds.
inline EigenEstimate largest_eigenvalue(const CMatrix& a, std::size_t max_iters = 100, double tol = 1e-6)
{
    require(a.rows() == a.cols() && a.rows() > 0, "largest_eigenvalue: matrix must be square and non-empty");
    EigenEstimate est;
    const double bound = gershgorin_bound(a);
    if (!(bound > 0.0)) {
        est.degenerate = true;
        return est;
    }

    CVector v = CVector::Constant(a.rows(), Complex(1.0 / std::sqrt(double(a.rows())), 0.0));
    CVector w(a.rows());
    double previous = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        w.noalias() = a * v;
        const double rayleigh = v.dot(w).real();
        const double norm = w.norm();
        if (norm == 0.0) break;
        v = w / norm;
        if (it > 0 && std::abs(rayleigh - previous) <= tol * std::abs(rayleigh)) {
            est.value = rayleigh;
            est.converged = true;
            return est;
        }
        previous = rayleigh;
    }
    est.value = std::min(bound, squaring_bound(a));
    return est;
}

struct NormalEquations {
    CMatrix a;  // X^H W X
    CVector b;  // X^H W x1
};

inline NormalEquations normal_equations(const BinProblem& prob, const RVector& weights)
{
    if (std::size_t(weights.size()) != prob.frames()) throw ConfigError("weight vector length mismatch");
    const RVector root = weights.cwiseSqrt();
    const CMatrix xw = root.asDiagonal() * prob.regressor;
    const CVector yw = root.cwiseProduct(prob.x1);

    NormalEquations eq;
    const Eigen::Index n = xw.cols();
    eq.a = CMatrix::Zero(n, n);
    eq.a.selfadjointView<Eigen::Lower>().rankUpdate(xw.adjoint());
    eq.a.triangularView<Eigen::StrictlyUpper>() = eq.a.adjoint();
    eq.b.noalias() = xw.adjoint() * yw;
    return eq;
}

inline double group_penalty(const PredictionFilter& g)
{
    double acc = 0.0;
    for (std::size_t m = 1; m < g.groups(); ++m) acc += g.group(m).norm();
    return acc;
}

// 1/2 ||x1 - X g||_W^2 + lambda * sum_{m >= 2} ||g_m||_2
inline double composite_objective(const BinProblem& prob, const RVector& weights, const PredictionFilter& g,
                                  double lambda)
{
    const CVector d = residual(prob, g.coeffs);
    return 0.5 * weights.dot(d.cwiseAbs2()) + lambda * group_penalty(g);
}

// Extrapolation weight j / (j + 3) of inner iteration j (1-based).
inline double momentum_coefficient(std::size_t j) { return double(j) / double(j + 3); }

// lambda = 2 * lambda_c * ||b||_inf
inline double penalty_weight(double lambda_c, const CVector& b)
{
    return b.size() == 0 ? 0.0 : 2.0 * lambda_c * b.cwiseAbs().maxCoeff();
}

struct FistaOptions {
    bool momentum = true;
};

// J proximal-gradient iterations on (A, b) starting from g_init. The
// momentum counter restarts at 1 on every call. `observer(j, g)` sees the
// iterate after each update.
template <typename Observer>
PredictionFilter fista_iterations(const NormalEquations& eq, double alpha, double lambda, std::size_t iterations,
                                  PredictionFilter g_init, const FistaOptions& options, Observer&& observer)
{
    require(alpha > 0.0, "step size must be > 0");
    require(lambda >= 0.0, "lambda must be >= 0");
    const double threshold = alpha * lambda;

    PredictionFilter current = std::move(g_init);
    CVector previous = current.coeffs;
    CVector y(current.coeffs.size());
    PredictionFilter next{CVector(current.coeffs.size()), current.taps};

    for (std::size_t j = 1; j <= iterations; ++j) {
        if (options.momentum) {
            y = current.coeffs + momentum_coefficient(j) * (current.coeffs - previous);
        } else {
            y = current.coeffs;
        }
        next.coeffs.noalias() = eq.a * y;
        next.coeffs = y - alpha * (next.coeffs - eq.b);
        prox_group_inplace(next, threshold);
        previous.swap(current.coeffs);
        current.coeffs.swap(next.coeffs);
        observer(j, std::as_const(current));
    }
    return current;
}

inline PredictionFilter fista_iterations(const NormalEquations& eq, double alpha, double lambda,
                                         std::size_t iterations, PredictionFilter g_init,
                                         const FistaOptions& options = {})
{
    return fista_iterations(eq, alpha, lambda, iterations, std::move(g_init), options,
                            [](std::size_t, const PredictionFilter&) {});
}

struct FistaResult {
    PredictionFilter filter;
    double alpha = 0.0;
    bool degenerate = false;
};

inline FistaResult fista_solve(const BinProblem& prob, const RVector& weights, double lambda,
                               std::size_t iterations, PredictionFilter g_init, const SolverConfig& cfg = {})
{
    require(weights.size() > 0 && weights.minCoeff() > 0.0, "fista_solve: weights must be positive");
    require(std::size_t(g_init.coeffs.size()) == prob.unknowns(), "fista_solve: initial filter size mismatch");
    const auto eq = normal_equations(prob, weights);
    const auto eig = largest_eigenvalue(eq.a, cfg.eig_iters, cfg.eig_tol);
    if (eig.degenerate) return {PredictionFilter::zeros(prob.mic_count(), prob.taps), 0.0, true};
    const double alpha = 1.0 / eig.value;
    return {fista_iterations(eq, alpha, lambda, iterations, std::move(g_init)), alpha, false};
}

// sum_n |d(n)|^p
inline double lp_power_sum(const CVector& d, double p)
{
    double acc = 0.0;
    for (const auto& v : d) acc += std::pow(std::abs(v), p);
    return acc;
}

struct ReweightResult {
    PredictionFilter filter;
    CVector d;                         // final residual, normalized domain
    double initial_cost = 0.0;         // sum |x1|^p
    std::vector<double> costs;         // sum |d|^p after each outer iteration
    std::vector<double> lambdas;       // penalty weight used in each outer iteration
    bool degenerate = false;
};

// Outer reweighting loop: W from the current residual, then J FISTA steps
// warm-started from the previous filter.
inline ReweightResult reweighted_solve(const BinProblem& prob, const SolverConfig& cfg)
{
    validate(cfg);
    ReweightResult out;
    out.filter = PredictionFilter::zeros(prob.mic_count(), prob.taps);
    out.d = prob.x1;
    out.initial_cost = lp_power_sum(prob.x1, cfg.p);
    if (prob.degenerate) {
        out.degenerate = true;
        return out;
    }

    for (std::size_t i = 0; i < cfg.reweight_iters; ++i) {
        const RVector w = compute_weights(out.d, cfg.p, cfg.epsilon);
        const auto eq = normal_equations(prob, w);
        const auto eig = largest_eigenvalue(eq.a, cfg.eig_iters, cfg.eig_tol);
        if (eig.degenerate) {
            out.filter = PredictionFilter::zeros(prob.mic_count(), prob.taps);
            out.d = prob.x1;
            out.degenerate = true;
            out.costs.clear();
            out.lambdas.clear();
            return out;
        }
        const double alpha = 1.0 / eig.value;
        const double lambda = penalty_weight(cfg.lambda_c, eq.b);
        out.filter = fista_iterations(eq, alpha, lambda, cfg.fista_iters, std::move(out.filter));
        out.d = residual(prob, out.filter.coeffs);
        out.costs.push_back(lp_power_sum(out.d, cfg.p));
        out.lambdas.push_back(lambda);
    }
    return out;
}

}  // namespace wpe_gs
