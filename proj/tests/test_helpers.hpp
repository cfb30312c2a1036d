#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wpe_gs/core.hpp"
#include "wpe_gs/mclp.hpp"
#include "wpe_gs/spectral.hpp"

namespace testing {

using wpe_gs::CMatrix;
using wpe_gs::Complex;
using wpe_gs::CVector;

inline CVector random_cvector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    CVector v(n);
    for (auto& x : v) x = Complex(g(rng), g(rng));
    return v;
}

inline CMatrix random_cmatrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0)
{
    std::normal_distribution<double> g(0.0, scale);
    CMatrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = Complex(g(rng), g(rng));
    return m;
}

inline std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n)
{
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(n);
    for (auto& v : x) v = g(rng);
    return x;
}

// Spectrogram with given per-mic bin sequences (bins x frames), bypassing the STFT.
inline wpe_gs::MultichannelSpectrogram make_spectrogram(std::vector<CMatrix> channels)
{
    wpe_gs::MultichannelSpectrogram spec;
    spec.channels = std::move(channels);
    spec.config.frame_size = 2 * (std::size_t(spec.channels.front().rows()) - 1);
    spec.config.frame_shift = spec.config.frame_size / 4;
    return spec;
}

// A problem assembled directly from a regressor, for solver-level tests.
inline wpe_gs::BinProblem make_problem(const CVector& x1, const CMatrix& regressor, std::size_t taps)
{
    wpe_gs::BinProblem prob;
    prob.taps = taps;
    prob.x1 = x1;
    prob.regressor = regressor;
    const std::size_t groups = std::size_t(regressor.cols()) / taps;
    prob.mics = wpe_gs::all_mics(groups);
    prob.delays = wpe_gs::DelayProfile::uniform(groups, 2);
    prob.norm_scale.assign(groups, 1.0);
    return prob;
}

}  // namespace testing
