#pragma once

// STFT analysis/synthesis with square-root Hann windows.
//
// Framing convention: the signal is zero-padded by (frame_size - frame_shift)
// samples on both sides, so every input sample is covered by the full set of
// overlapping windows and synthesize(analyze(x)) reproduces x everywhere, not
// only in the interior. Frame n starts at padded sample n * frame_shift.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "wpe_gs/core.hpp"

namespace wpe_gs {

enum class WindowKind { SqrtHann };

struct StftConfig {
    std::size_t frame_size = 1024;
    std::size_t frame_shift = 256;
    WindowKind window = WindowKind::SqrtHann;
    double sample_rate = 16000.0;

    std::size_t bins() const { return frame_size / 2 + 1; }
    std::size_t padding() const { return frame_size - frame_shift; }
};

// Periodic square-root Hann; analysis and synthesis share it.
inline std::vector<double> make_window(const StftConfig& cfg)
{
    std::vector<double> w(cfg.frame_size);
    for (std::size_t k = 0; k < cfg.frame_size; ++k) {
        const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(k) / double(cfg.frame_size));
        w[k] = std::sqrt(hann);
    }
    return w;
}

// Sum of analysis*synthesis window products over all overlapping frames at
// each phase. Throws unless it is constant to 1e-10 relative deviation.
inline double overlap_add_gain(const StftConfig& cfg)
{
    const auto w = make_window(cfg);
    std::vector<double> sums(cfg.frame_shift, 0.0);
    for (std::size_t k = 0; k < cfg.frame_size; ++k) sums[k % cfg.frame_shift] += w[k] * w[k];
    const double gain = sums.front();
    for (double s : sums) {
        if (std::abs(s - gain) > 1e-10 * std::abs(gain))
            throw ConfigError("window does not satisfy constant overlap-add at the configured shift");
    }
    return gain;
}

inline void validate(const StftConfig& cfg)
{
    require(cfg.frame_size >= 2 && cfg.frame_size % 2 == 0, "frame_size must be even and >= 2");
    require(cfg.frame_shift >= 1 && cfg.frame_size % cfg.frame_shift == 0,
            "frame_shift must divide frame_size");
    require(cfg.sample_rate > 0.0, "sample_rate must be positive");
    overlap_add_gain(cfg);
}

inline std::size_t frame_count(std::size_t length, const StftConfig& cfg)
{
    const std::size_t padded = length + 2 * cfg.padding();
    return (padded - cfg.frame_size + cfg.frame_shift - 1) / cfg.frame_shift + 1;
}

struct MultichannelSpectrogram {
    std::vector<CMatrix> channels;  // one bins x frames matrix per microphone
    StftConfig config;
    std::size_t signal_length = 0;

    std::size_t mic_count() const { return channels.size(); }
    std::size_t bins() const { return channels.empty() ? 0 : std::size_t(channels.front().rows()); }
    std::size_t frames() const { return channels.empty() ? 0 : std::size_t(channels.front().cols()); }

    // Time sequence x_m(f, .) of one microphone at one bin.
    CVector sequence(MicIndex mic, std::size_t bin) const
    {
        return channels.at(mic).row(Eigen::Index(bin)).transpose();
    }
};

inline CMatrix analyze_channel(std::span<const double> signal, const StftConfig& cfg)
{
    const auto window = make_window(cfg);
    const std::size_t frames = frame_count(signal.size(), cfg);
    const std::size_t pad = cfg.padding();
    CMatrix out(Eigen::Index(cfg.bins()), Eigen::Index(frames));

    Eigen::FFT<double> fft;
    std::vector<double> buf(cfg.frame_size);
    std::vector<Complex> spectrum;
    for (std::size_t n = 0; n < frames; ++n) {
        for (std::size_t k = 0; k < cfg.frame_size; ++k) {
            // padded index n*shift + k maps to signal index n*shift + k - pad
            const std::size_t p = n * cfg.frame_shift + k;
            buf[k] = (p >= pad && p - pad < signal.size()) ? signal[p - pad] * window[k] : 0.0;
        }
        fft.fwd(spectrum, buf);
        for (std::size_t f = 0; f < cfg.bins(); ++f) out(Eigen::Index(f), Eigen::Index(n)) = spectrum[f];
    }
    return out;
}

inline MultichannelSpectrogram analyze(const std::vector<std::vector<double>>& signals, const StftConfig& cfg)
{
    validate(cfg);
    if (signals.empty()) throw InputError("analyze: no channels");
    const std::size_t length = signals.front().size();
    if (length == 0) throw InputError("analyze: empty input");
    for (const auto& ch : signals)
        if (ch.size() != length) throw InputError("analyze: channel length mismatch");
    if (length < cfg.frame_size) throw InputError("analyze: signal shorter than one frame");

    MultichannelSpectrogram spec;
    spec.config = cfg;
    spec.signal_length = length;
    spec.channels.reserve(signals.size());
    for (const auto& ch : signals) spec.channels.push_back(analyze_channel(ch, cfg));
    return spec;
}

// Overlap-add resynthesis of one channel. `length` defaults to the longest
// signal consistent with the frame count.
inline std::vector<double> synthesize(const CMatrix& spec, const StftConfig& cfg, std::size_t length = 0)
{
    validate(cfg);
    if (std::size_t(spec.rows()) != cfg.bins())
        throw ConfigError("synthesize: bin count does not match frame_size");

    const std::size_t frames = std::size_t(spec.cols());
    const std::size_t pad = cfg.padding();
    const std::size_t padded = frames == 0 ? 0 : (frames - 1) * cfg.frame_shift + cfg.frame_size;
    const std::size_t max_length = padded > 2 * pad ? padded - 2 * pad : 0;
    if (length == 0) length = max_length;
    if (length > max_length) throw ConfigError("synthesize: requested length exceeds frame coverage");

    const auto window = make_window(cfg);
    const double gain = overlap_add_gain(cfg);
    const std::size_t n_fft = cfg.frame_size;

    Eigen::FFT<double> fft;
    std::vector<Complex> full(n_fft);
    std::vector<Complex> frame;
    std::vector<double> acc(padded, 0.0);
    for (std::size_t n = 0; n < frames; ++n) {
        for (std::size_t f = 0; f < cfg.bins(); ++f) full[f] = spec(Eigen::Index(f), Eigen::Index(n));
        for (std::size_t f = 1; f < n_fft / 2; ++f) full[n_fft - f] = std::conj(full[f]);
        fft.inv(frame, full);
        for (std::size_t k = 0; k < n_fft; ++k) acc[n * cfg.frame_shift + k] += window[k] * frame[k].real();
    }

    std::vector<double> out(length);
    for (std::size_t t = 0; t < length; ++t) out[t] = acc[t + pad] / gain;
    return out;
}

// Energy of the windowed frames as seen through the one-sided spectrum
// (Parseval with conjugate-symmetric completion).
inline double spectrogram_energy(const MultichannelSpectrogram& spec)
{
    const double n_fft = double(spec.config.frame_size);
    const Eigen::Index last = Eigen::Index(spec.bins()) - 1;
    double total = 0.0;
    for (const auto& ch : spec.channels) {
        double e = 2.0 * ch.cwiseAbs2().sum();
        e -= ch.row(0).cwiseAbs2().sum();
        e -= ch.row(last).cwiseAbs2().sum();
        total += e / n_fft;
    }
    return total;
}

}  // namespace wpe_gs
