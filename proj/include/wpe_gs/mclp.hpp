#pragma once

// Per-bin multichannel linear prediction model: d = x1 - X_tau g, where
// X_tau stacks one delayed convolution matrix per microphone.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wpe_gs/core.hpp"
#include "wpe_gs/spectral.hpp"

namespace wpe_gs {

// Per-microphone prediction delays in frames; tau[0] is the reference delay.
struct DelayProfile {
    std::vector<std::size_t> tau;

    static DelayProfile uniform(std::size_t mics, std::size_t base_tau)
    {
        return DelayProfile{std::vector<std::size_t>(mics, base_tau)};
    }
};

struct LpNormalized {
    CVector values;
    double scale = 1.0;
    bool degenerate = false;
};

inline double lp_norm(const CVector& x, double p)
{
    double acc = 0.0;
    for (const auto& v : x) acc += std::pow(std::abs(v), p);
    return std::pow(acc, 1.0 / p);
}

// Scales x so that its lp-norm equals its length. An all-zero x is returned
// unchanged with scale 1 and flagged degenerate.
inline LpNormalized lp_normalize(const CVector& x, double p)
{
    require(x.size() >= 1, "lp_normalize: empty sequence");
    require(p > 0.0, "lp_normalize: p must be positive");
    if (!x.allFinite()) throw InputError("lp_normalize: non-finite input");

    const double norm = lp_norm(x, p);
    if (norm == 0.0) return {x, 1.0, true};
    const double scale = double(x.size()) / norm;
    return {x * scale, scale, false};
}

// Entry (n, l) = x(n - tau - l), zero for indices before the first frame.
inline CMatrix build_delayed_convolution_matrix(const CVector& x, std::size_t tau, std::size_t taps)
{
    require(taps >= 1, "convolution matrix needs at least one tap");
    const Eigen::Index n_frames = x.size();
    CMatrix out = CMatrix::Zero(n_frames, Eigen::Index(taps));
    for (Eigen::Index l = 0; l < Eigen::Index(taps); ++l) {
        const Eigen::Index shift = Eigen::Index(tau) + l;
        if (shift >= n_frames) break;
        out.col(l).tail(n_frames - shift) = x.head(n_frames - shift);
    }
    return out;
}

inline CVector delay_sequence(const CVector& x, std::size_t tau)
{
    CVector out = CVector::Zero(x.size());
    const Eigen::Index shift = std::min<Eigen::Index>(Eigen::Index(tau), x.size());
    out.tail(x.size() - shift) = x.head(x.size() - shift);
    return out;
}

struct BinProblem {
    std::size_t bin = 0;
    std::size_t taps = 0;
    std::vector<MicIndex> mics;   // original microphone indices, mics[0] is the reference
    DelayProfile delays;          // one entry per element of `mics`
    CVector x1;                   // normalized reference sequence
    CMatrix regressor;            // N x (mics.size() * taps)
    double x1_scale = 1.0;        // factor applied to the raw reference
    std::vector<double> norm_scale;  // factor applied to each delayed sequence
    bool degenerate = false;

    std::size_t mic_count() const { return mics.size(); }
    std::size_t frames() const { return std::size_t(x1.size()); }
    std::size_t unknowns() const { return mics.size() * taps; }
};

// Builds the normalized problem of one bin over the listed microphones.
// `delays` is indexed by original microphone index.
inline BinProblem build_bin_problem(const MultichannelSpectrogram& spec, std::size_t bin,
                                    const std::vector<MicIndex>& mics, const DelayProfile& delays,
                                    std::size_t taps, double p)
{
    require(!mics.empty() && mics.front() == kReferenceMic, "microphone list must start with the reference");
    require(bin < spec.bins(), "bin index out of range");
    require(taps >= 1, "filter length must be >= 1");
    require(delays.tau.size() == spec.mic_count(), "delay profile size must match microphone count");

    BinProblem prob;
    prob.bin = bin;
    prob.taps = taps;
    prob.mics = mics;

    auto ref = lp_normalize(spec.sequence(kReferenceMic, bin), p);
    prob.x1 = std::move(ref.values);
    prob.x1_scale = ref.scale;
    prob.degenerate = ref.degenerate;

    const Eigen::Index n_frames = prob.x1.size();
    prob.regressor = CMatrix::Zero(n_frames, Eigen::Index(mics.size() * taps));
    for (std::size_t k = 0; k < mics.size(); ++k) {
        const MicIndex m = mics[k];
        require(m < spec.mic_count(), "microphone index out of range");
        const std::size_t tau = delays.tau[m];
        prob.delays.tau.push_back(tau);
        auto delayed = lp_normalize(delay_sequence(spec.sequence(m, bin), tau), p);
        prob.norm_scale.push_back(delayed.scale);
        prob.regressor.middleCols(Eigen::Index(k * taps), Eigen::Index(taps)) =
            build_delayed_convolution_matrix(delayed.values, 0, taps);
    }
    return prob;
}

inline std::vector<MicIndex> all_mics(std::size_t count)
{
    std::vector<MicIndex> mics(count);
    for (std::size_t m = 0; m < count; ++m) mics[m] = m;
    return mics;
}

// Keeps only the column blocks of the listed original microphones.
inline BinProblem restrict_to(const BinProblem& full, const std::vector<MicIndex>& mics)
{
    require(!mics.empty() && mics.front() == kReferenceMic, "subset must start with the reference");
    BinProblem out;
    out.bin = full.bin;
    out.taps = full.taps;
    out.mics = mics;
    out.x1 = full.x1;
    out.x1_scale = full.x1_scale;
    out.degenerate = full.degenerate;
    out.regressor.resize(full.x1.size(), Eigen::Index(mics.size() * full.taps));
    for (std::size_t k = 0; k < mics.size(); ++k) {
        const auto it = std::find(full.mics.begin(), full.mics.end(), mics[k]);
        require(it != full.mics.end(), "subset microphone not present in problem");
        const std::size_t src = std::size_t(it - full.mics.begin());
        out.delays.tau.push_back(full.delays.tau[src]);
        out.norm_scale.push_back(full.norm_scale[src]);
        out.regressor.middleCols(Eigen::Index(k * full.taps), Eigen::Index(full.taps)) =
            full.regressor.middleCols(Eigen::Index(src * full.taps), Eigen::Index(full.taps));
    }
    return out;
}

inline CVector residual(const BinProblem& prob, const CVector& g)
{
    if (std::size_t(g.size()) != prob.unknowns()) throw ConfigError("residual: filter length mismatch");
    return prob.x1 - prob.regressor * g;
}

}  // namespace wpe_gs
