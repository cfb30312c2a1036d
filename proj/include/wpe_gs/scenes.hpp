#pragma once

// Synthetic reverberant scenes with known desired component, and the
// evaluation metrics computed on them.
//
// Room responses are a direct-path impulse followed by seeded Gaussian noise
// under an exponential envelope that decays by 60 dB over T60.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "wpe_gs/core.hpp"
#include "wpe_gs/delays.hpp"

namespace wpe_gs {

struct SourceSpec {
    double duration_s = 3.0;
    std::uint64_t seed = 1;
};

struct SceneSpec {
    std::size_t mics = 0;
    double t60_ms = 600.0;
    std::size_t rir_length = 0;            // L_h in samples
    std::vector<std::size_t> direct_delay;  // samples, per mic
    std::vector<double> direct_gain;        // per mic
    double tail_level = 0.03;               // std of the tail at its onset
    std::uint64_t decay_seed = 1;
    SourceSpec source;
    std::vector<double> source_samples;     // used instead of `source` when non-empty
    std::string source_wav;                 // where source_samples came from, if a file
    std::size_t early_cutoff = 512;         // L_d in samples after the direct path
    double sample_rate = 16000.0;
};

inline void validate(const SceneSpec& s)
{
    require(s.mics >= 2, "scene needs at least two microphones");
    require(s.t60_ms >= 0.0, "T60 must be >= 0");
    require(s.rir_length >= 1, "RIR length must be >= 1");
    require(s.direct_delay.size() == s.mics, "direct_delay needs one entry per microphone");
    require(s.direct_gain.size() == s.mics, "direct_gain needs one entry per microphone");
    for (auto d : s.direct_delay) require(d < s.rir_length, "direct delay must lie inside the RIR");
    require(s.tail_level >= 0.0, "tail level must be >= 0");
    require(s.sample_rate > 0.0, "sample rate must be positive");
}

// Amplitude envelope 10^(-3 t / T60) evaluated at lag t samples after the direct path.
inline double decay_envelope(double t_samples, double t60_samples)
{
    if (t60_samples <= 0.0) return 0.0;
    return std::pow(10.0, -3.0 * t_samples / t60_samples);
}

inline std::vector<double> synth_rir(const SceneSpec& spec, std::size_t mic)
{
    validate(spec);
    require(mic < spec.mics, "synth_rir: microphone index out of range");
    std::vector<double> h(spec.rir_length, 0.0);
    const std::size_t onset = spec.direct_delay[mic];
    h[onset] = spec.direct_gain[mic];

    const double t60_samples = spec.t60_ms * 1e-3 * spec.sample_rate;
    std::seed_seq seq{std::uint64_t(spec.decay_seed), std::uint64_t(mic), std::uint64_t(0x52495200)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t t = onset + 1; t < spec.rir_length; ++t) {
        const double env = decay_envelope(double(t - onset), t60_samples);
        h[t] = spec.tail_level * env * noise(rng);
    }
    return h;
}

// Linear convolution truncated to out_len samples.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b, std::size_t out_len)
{
    if (a.empty() || b.empty()) return std::vector<double>(out_len, 0.0);
    const std::size_t n_fft = next_pow2(a.size() + b.size() - 1);
    std::vector<double> pa(n_fft, 0.0), pb(n_fft, 0.0);
    std::copy(a.begin(), a.end(), pa.begin());
    std::copy(b.begin(), b.end(), pb.begin());
    Eigen::FFT<double> fft;
    std::vector<Complex> fa, fb;
    fft.fwd(fa, pa);
    fft.fwd(fb, pb);
    for (std::size_t k = 0; k < n_fft; ++k) fa[k] *= fb[k];
    std::vector<Complex> prod;
    fft.inv(prod, fa);
    std::vector<double> out(out_len, 0.0);
    const std::size_t valid = std::min(out_len, a.size() + b.size() - 1);
    for (std::size_t t = 0; t < valid; ++t) out[t] = prod[t].real();
    return out;
}

// Direct summation for short kernels (exact for impulses), FFT otherwise.
inline std::vector<double> convolve(std::span<const double> a, std::span<const double> b, std::size_t out_len)
{
    if (std::min(a.size(), b.size()) > 64) return fft_convolve(a, b, out_len);
    const auto& kernel = a.size() <= b.size() ? a : b;
    const auto& signal = a.size() <= b.size() ? b : a;
    std::vector<double> out(out_len, 0.0);
    for (std::size_t t = 0; t < out_len; ++t) {
        double acc = 0.0;
        for (std::size_t l = 0; l < kernel.size() && l <= t; ++l)
            if (t - l < signal.size()) acc += kernel[l] * signal[t - l];
        out[t] = acc;
    }
    return out;
}

// Speech-like excitation: bursts of resonant noise and pitched pulses with
// raised-cosine onsets, separated by pauses.
inline std::vector<double> speech_like_source(const SourceSpec& src, double sample_rate)
{
    require(src.duration_s > 0.0, "source duration must be positive");
    const std::size_t length = std::size_t(std::llround(src.duration_s * sample_rate));
    std::vector<double> out(length, 0.0);
    std::seed_seq seq{std::uint64_t(src.seed), std::uint64_t(0x535243)};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::size_t t = std::size_t(uni(rng) * 0.1 * sample_rate);
    while (t < length) {
        const std::size_t seg = std::size_t((0.08 + 0.22 * uni(rng)) * sample_rate);
        const double amp = 0.3 + 0.7 * uni(rng);
        const double formant = 300.0 + 2700.0 * uni(rng);
        const double pitch = 100.0 + 120.0 * uni(rng);
        const bool voiced = uni(rng) < 0.7;
        const double r = 0.97;
        const double a1 = 2.0 * r * std::cos(2.0 * std::numbers::pi * formant / sample_rate);
        const double a2 = -r * r;
        double y1 = 0.0, y2 = 0.0, phase = 0.0;
        for (std::size_t k = 0; k < seg && t + k < length; ++k) {
            double excitation = 0.3 * noise(rng);
            if (voiced) {
                phase += pitch / sample_rate;
                if (phase >= 1.0) {
                    phase -= 1.0;
                    excitation += 4.0;
                }
            }
            const double y = excitation + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(k) / double(seg));
            out[t + k] += amp * env * y;
        }
        t += seg + std::size_t((0.03 + 0.22 * uni(rng)) * sample_rate);
    }

    double peak = 0.0;
    for (double v : out) peak = std::max(peak, std::abs(v));
    if (peak > 0.0)
        for (double& v : out) v *= 0.5 / peak;
    return out;
}

struct RenderedScene {
    std::vector<std::vector<double>> mics;
    std::vector<double> desired;  // early part of the reference response applied to the source
    std::vector<std::vector<double>> rirs;
    std::vector<double> source;
};

inline RenderedScene render_scene(const SceneSpec& spec)
{
    validate(spec);
    RenderedScene out;
    out.source = spec.source_samples.empty() ? speech_like_source(spec.source, spec.sample_rate)
                                             : spec.source_samples;
    require(out.source.size() >= spec.rir_length, "source must be at least as long as the RIR");
    const std::size_t length = out.source.size();
    for (std::size_t m = 0; m < spec.mics; ++m) {
        out.rirs.push_back(synth_rir(spec, m));
        out.mics.push_back(convolve(out.rirs.back(), out.source, length));
    }
    const std::size_t keep = std::min(spec.rir_length, spec.direct_delay[kReferenceMic] + spec.early_cutoff);
    std::vector<double> early(out.rirs[kReferenceMic].begin(), out.rirs[kReferenceMic].begin() + std::ptrdiff_t(keep));
    out.desired = convolve(early, out.source, length);
    return out;
}

// Random distributed-array scenes: microphone distances drawn uniformly, with
// direct-path gain 1/distance and delay distance/c. The tail level is chosen
// so that a microphone at 1 m has the requested direct-to-reverberant ratio.
struct SceneBatchSpec {
    std::size_t count = 10;
    std::size_t mics = 5;
    double t60_ms = 600.0;
    double duration_s = 3.0;
    double min_distance_m = 0.5;
    double max_distance_m = 4.0;
    double drr_at_1m_db = 3.0;
    std::size_t early_cutoff = 512;
    double sample_rate = 16000.0;
    std::uint64_t seed = 1;
};

inline std::vector<SceneSpec> make_scene_batch(const SceneBatchSpec& batch)
{
    require(batch.count >= 1, "scene batch needs at least one scene");
    require(batch.mics >= 2, "scene batch needs at least two microphones");
    require(batch.min_distance_m > 0.0 && batch.max_distance_m >= batch.min_distance_m, "invalid distance range");
    constexpr double speed_of_sound = 343.0;

    const double t60_samples = batch.t60_ms * 1e-3 * batch.sample_rate;
    const std::size_t max_delay =
        std::size_t(std::ceil(batch.max_distance_m / speed_of_sound * batch.sample_rate));
    const std::size_t rir_length = std::size_t(std::ceil(t60_samples)) + max_delay + 1;
    double tail_energy = 0.0;
    for (std::size_t t = 1; t < std::size_t(std::ceil(t60_samples)); ++t)
        tail_energy += std::pow(decay_envelope(double(t), t60_samples), 2);
    const double tail_level =
        tail_energy > 0.0 ? std::sqrt(std::pow(10.0, -batch.drr_at_1m_db / 10.0) / tail_energy) : 0.0;

    std::vector<SceneSpec> scenes;
    for (std::size_t i = 0; i < batch.count; ++i) {
        std::seed_seq seq{std::uint64_t(batch.seed), std::uint64_t(i), std::uint64_t(0x5343454e)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> dist(batch.min_distance_m, batch.max_distance_m);

        SceneSpec s;
        s.mics = batch.mics;
        s.t60_ms = batch.t60_ms;
        s.rir_length = rir_length;
        s.tail_level = tail_level;
        s.early_cutoff = batch.early_cutoff;
        s.sample_rate = batch.sample_rate;
        for (std::size_t m = 0; m < batch.mics; ++m) {
            const double d = dist(rng);
            s.direct_gain.push_back(1.0 / d);
            s.direct_delay.push_back(std::size_t(std::llround(d / speed_of_sound * batch.sample_rate)));
        }
        s.decay_seed = rng();
        s.source = SourceSpec{batch.duration_s, rng()};
        scenes.push_back(std::move(s));
    }
    return scenes;
}

struct LpCostReport {
    std::vector<double> per_bin;       // sum_n |d(f, n)|^p
    std::vector<double> per_bin_norm;  // (sum_n |d(f, n)|^p)^(1/p)
    double total = 0.0;
    double total_norm = 0.0;
};

inline LpCostReport lp_cost(const CMatrix& d, double p)
{
    require(p > 0.0, "lp_cost: p must be positive");
    LpCostReport r;
    for (Eigen::Index f = 0; f < d.rows(); ++f) {
        double acc = 0.0;
        for (Eigen::Index n = 0; n < d.cols(); ++n) acc += std::pow(std::abs(d(f, n)), p);
        r.per_bin.push_back(acc);
        r.per_bin_norm.push_back(std::pow(acc, 1.0 / p));
        r.total += acc;
    }
    r.total_norm = std::pow(r.total, 1.0 / p);
    return r;
}

inline constexpr double kRatioFloorDb = -100.0;

// 10 log10(||processed - desired||^2 / ||desired||^2), floored at -100 dB.
inline double late_early_ratio(std::span<const double> processed, std::span<const double> desired)
{
    require(processed.size() == desired.size(), "late_early_ratio: length mismatch");
    double err = 0.0, ref = 0.0;
    for (std::size_t t = 0; t < desired.size(); ++t) {
        const double e = processed[t] - desired[t];
        err += e * e;
        ref += desired[t] * desired[t];
    }
    if (ref == 0.0) throw InputError("late_early_ratio: desired signal has zero energy");
    if (err == 0.0) return kRatioFloorDb;
    return std::max(kRatioFloorDb, 10.0 * std::log10(err / ref));
}

}  // namespace wpe_gs
