#pragma once

// GCC-PHAT time-difference-of-arrival estimation and its mapping to
// integer-frame prediction delays.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "wpe_gs/core.hpp"
#include "wpe_gs/mclp.hpp"

namespace wpe_gs {

struct PairTdoa {
    long delay = 0;           // samples; positive when x_m lags x_ref
    double confidence = 0.0;  // main peak over strongest peak outside its neighbourhood
    bool silent = false;
};

struct TdoaEstimate {
    std::vector<long> delay;  // per microphone, delay[0] == 0
    std::vector<double> confidence;
    std::vector<bool> silent;
};

inline std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

inline PairTdoa gcc_phat(std::span<const double> x_m, std::span<const double> x_ref, std::size_t max_lag)
{
    require(x_m.size() == x_ref.size(), "gcc_phat: signals must have equal length");
    require(max_lag >= 1 && x_m.size() >= 4 * max_lag, "gcc_phat: signals must be at least 4 * max_lag long");

    auto energy = [](std::span<const double> x) {
        double e = 0.0;
        for (double v : x) e += v * v;
        return e;
    };
    if (energy(x_m) == 0.0 || energy(x_ref) == 0.0) return {0, 0.0, true};

    const std::size_t n_fft = next_pow2(2 * x_m.size());
    std::vector<double> a(n_fft, 0.0), b(n_fft, 0.0);
    std::copy(x_m.begin(), x_m.end(), a.begin());
    std::copy(x_ref.begin(), x_ref.end(), b.begin());

    Eigen::FFT<double> fft;
    std::vector<Complex> fa, fb;
    fft.fwd(fa, a);
    fft.fwd(fb, b);
    std::vector<Complex> cross(n_fft);
    for (std::size_t k = 0; k < n_fft; ++k) {
        const Complex c = fa[k] * std::conj(fb[k]);
        cross[k] = c / std::max(std::abs(c), 1e-12);
    }
    std::vector<Complex> corr;
    fft.inv(corr, cross);

    auto at = [&](long lag) {
        const std::size_t idx = lag >= 0 ? std::size_t(lag) : n_fft - std::size_t(-lag);
        return corr[idx].real();
    };

    const long span = long(max_lag);
    long best = 0;
    double peak = -std::numeric_limits<double>::infinity();
    for (long lag = -span; lag <= span; ++lag) {
        const double v = at(lag);
        if (v > peak) {
            peak = v;
            best = lag;
        }
    }
    double secondary = 0.0;
    for (long lag = -span; lag <= span; ++lag) {
        if (std::abs(lag - best) <= 2) continue;
        secondary = std::max(secondary, at(lag));
    }
    const double confidence = secondary > 0.0 ? peak / secondary : std::numeric_limits<double>::max();
    return {best, confidence, false};
}

inline TdoaEstimate estimate_tdoa(const std::vector<std::vector<double>>& signals, std::size_t max_lag)
{
    require(!signals.empty(), "estimate_tdoa: no channels");
    TdoaEstimate est;
    est.delay.push_back(0);
    est.confidence.push_back(std::numeric_limits<double>::max());
    est.silent.push_back(false);
    for (std::size_t m = 1; m < signals.size(); ++m) {
        const auto pair = gcc_phat(signals[m], signals[kReferenceMic], max_lag);
        est.delay.push_back(pair.delay);
        est.confidence.push_back(pair.confidence);
        est.silent.push_back(pair.silent);
    }
    return est;
}

// tau_m = max(0, base_tau + round(tdoa_m / frame_shift)), tau_ref = base_tau.
inline DelayProfile to_frame_delays(const TdoaEstimate& tdoa, std::size_t base_tau, std::size_t frame_shift)
{
    require(base_tau >= 1, "base prediction delay must be >= 1");
    require(frame_shift >= 1, "frame shift must be >= 1");
    DelayProfile out;
    for (std::size_t m = 0; m < tdoa.delay.size(); ++m) {
        if (m == kReferenceMic) {
            out.tau.push_back(base_tau);
            continue;
        }
        const long frames = std::lround(double(tdoa.delay[m]) / double(frame_shift));
        out.tau.push_back(std::size_t(std::max(0L, long(base_tau) + frames)));
    }
    return out;
}

}  // namespace wpe_gs
