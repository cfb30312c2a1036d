#pragma once

// Batch experiment runner: delays -> per-bin group-sparse solve -> subset
// selection -> final WPE pass -> metrics, over synthetic or recorded scenes.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wpe_gs/core.hpp"
#include "wpe_gs/delays.hpp"
#include "wpe_gs/mclp.hpp"
#include "wpe_gs/parallel.hpp"
#include "wpe_gs/scenes.hpp"
#include "wpe_gs/selection.hpp"
#include "wpe_gs/solver.hpp"
#include "wpe_gs/spectral.hpp"
#include "wpe_gs/wav.hpp"

namespace wpe_gs {

inline constexpr const char* kVersion = "0.1.0";

enum class ModeSet { FrequencyDependent, FrequencyIndependent, Both };

struct Baselines {
    bool exhaustive = true;
    bool random = true;
    bool full = true;
};

struct ExperimentConfig {
    // exactly one input kind is used: wav_inputs, scenes, or scene_batch
    std::vector<std::vector<std::string>> wav_inputs;
    std::vector<SceneSpec> scenes;
    std::optional<SceneBatchSpec> scene_batch;

    SolverConfig solver;
    StftConfig stft;
    std::vector<std::size_t> subset_sizes{2, 3};
    std::vector<double> lambda_c{1e-2};
    ModeSet mode = ModeSet::Both;
    Baselines baselines;
    bool gcc_phat_delays = true;
    std::size_t max_lag = 0;  // 0: frame_size
    std::string output_dir = "out";
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
    bool emit_wav = false;
};

inline bool wants_fd(ModeSet m) { return m != ModeSet::FrequencyIndependent; }
inline bool wants_fi(ModeSet m) { return m != ModeSet::FrequencyDependent; }

// ---------------------------------------------------------------------------
// Configuration (JSON)

namespace detail {

using nlohmann::json;

template <typename T>
T get_or(const json& j, const char* key, T fallback)
{
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

inline SceneSpec scene_from_json(const json& j)
{
    reject_unknown(j, {"mics", "t60_ms", "rir_length", "direct_delay", "direct_gain", "tail_level", "decay_seed",
                       "source", "source_wav", "early_cutoff", "sample_rate"},
                   "scene");
    SceneSpec s;
    s.mics = get_or<std::size_t>(j, "mics", 0);
    s.t60_ms = get_or(j, "t60_ms", s.t60_ms);
    s.sample_rate = get_or(j, "sample_rate", s.sample_rate);
    s.rir_length = get_or<std::size_t>(j, "rir_length", std::size_t(std::ceil(s.t60_ms * 1e-3 * s.sample_rate)) + 1);
    s.direct_delay = get_or(j, "direct_delay", std::vector<std::size_t>(s.mics, 0));
    s.direct_gain = get_or(j, "direct_gain", std::vector<double>(s.mics, 1.0));
    s.tail_level = get_or(j, "tail_level", s.tail_level);
    s.decay_seed = get_or(j, "decay_seed", s.decay_seed);
    s.early_cutoff = get_or(j, "early_cutoff", s.early_cutoff);
    if (j.contains("source")) {
        const auto& src = j.at("source");
        reject_unknown(src, {"duration_s", "seed"}, "scene source");
        s.source.duration_s = get_or(src, "duration_s", s.source.duration_s);
        s.source.seed = get_or(src, "seed", s.source.seed);
    }
    if (j.contains("source_wav")) {
        s.source_wav = j.at("source_wav").get<std::string>();
        const auto wav = read_wav(s.source_wav);
        if (wav.sample_rate != s.sample_rate) throw InputError("source WAV sample rate mismatch");
        s.source_samples = wav.channels.front();
    }
    validate(s);
    return s;
}

inline json scene_to_json(const SceneSpec& s)
{
    json j{{"mics", s.mics},
           {"t60_ms", s.t60_ms},
           {"rir_length", s.rir_length},
           {"direct_delay", s.direct_delay},
           {"direct_gain", s.direct_gain},
           {"tail_level", s.tail_level},
           {"decay_seed", s.decay_seed},
           {"source", {{"duration_s", s.source.duration_s}, {"seed", s.source.seed}}},
           {"early_cutoff", s.early_cutoff},
           {"sample_rate", s.sample_rate}};
    if (!s.source_wav.empty()) j["source_wav"] = s.source_wav;
    return j;
}

inline const char* mode_name(ModeSet m)
{
    switch (m) {
    case ModeSet::FrequencyDependent: return "frequency_dependent";
    case ModeSet::FrequencyIndependent: return "frequency_independent";
    case ModeSet::Both: return "both";
    }
    return "both";
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& root)
{
    using detail::get_or;
    // a run manifest carries the effective config under "config"
    const auto& j = root.contains("config") && root.contains("manifest_version") ? root.at("config") : root;
    detail::reject_unknown(j, {"input", "solver", "stft", "K", "lambda_c", "mode", "baselines", "delays", "max_lag",
                               "output_dir", "seed", "jobs", "emit_wav"},
                           "config");
    ExperimentConfig cfg;
    cfg.seed = get_or(j, "seed", cfg.seed);
    cfg.jobs = get_or(j, "jobs", cfg.jobs);
    cfg.output_dir = get_or(j, "output_dir", cfg.output_dir);
    cfg.emit_wav = get_or(j, "emit_wav", cfg.emit_wav);
    cfg.subset_sizes = get_or(j, "K", cfg.subset_sizes);
    cfg.lambda_c = get_or(j, "lambda_c", cfg.lambda_c);
    cfg.max_lag = get_or(j, "max_lag", cfg.max_lag);

    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        detail::reject_unknown(s, {"p", "I", "J", "epsilon", "L_g", "tau", "eig_iters", "eig_tol"}, "solver");
        cfg.solver.p = get_or(s, "p", cfg.solver.p);
        cfg.solver.reweight_iters = get_or(s, "I", cfg.solver.reweight_iters);
        cfg.solver.fista_iters = get_or(s, "J", cfg.solver.fista_iters);
        cfg.solver.epsilon = get_or(s, "epsilon", cfg.solver.epsilon);
        cfg.solver.taps = get_or(s, "L_g", cfg.solver.taps);
        cfg.solver.base_tau = get_or(s, "tau", cfg.solver.base_tau);
        cfg.solver.eig_iters = get_or(s, "eig_iters", cfg.solver.eig_iters);
        cfg.solver.eig_tol = get_or(s, "eig_tol", cfg.solver.eig_tol);
    }
    if (j.contains("stft")) {
        const auto& s = j.at("stft");
        detail::reject_unknown(s, {"frame_size", "frame_shift", "window", "sample_rate"}, "stft");
        cfg.stft.frame_size = get_or(s, "frame_size", cfg.stft.frame_size);
        cfg.stft.frame_shift = get_or(s, "frame_shift", cfg.stft.frame_shift);
        cfg.stft.sample_rate = get_or(s, "sample_rate", cfg.stft.sample_rate);
        if (get_or<std::string>(s, "window", "sqrt_hann") != "sqrt_hann")
            throw ConfigError("only the sqrt_hann window is supported");
    }
    if (j.contains("mode")) {
        const auto m = j.at("mode").get<std::string>();
        if (m == "frequency_dependent") cfg.mode = ModeSet::FrequencyDependent;
        else if (m == "frequency_independent") cfg.mode = ModeSet::FrequencyIndependent;
        else if (m == "both") cfg.mode = ModeSet::Both;
        else throw ConfigError("unknown selection mode '" + m + "'");
    }
    if (j.contains("baselines")) {
        const auto& b = j.at("baselines");
        detail::reject_unknown(b, {"exhaustive", "random", "full"}, "baselines");
        cfg.baselines.exhaustive = get_or(b, "exhaustive", cfg.baselines.exhaustive);
        cfg.baselines.random = get_or(b, "random", cfg.baselines.random);
        cfg.baselines.full = get_or(b, "full", cfg.baselines.full);
    }
    if (j.contains("delays")) {
        const auto d = j.at("delays").get<std::string>();
        if (d == "gcc_phat") cfg.gcc_phat_delays = true;
        else if (d == "uniform") cfg.gcc_phat_delays = false;
        else throw ConfigError("delays must be 'gcc_phat' or 'uniform'");
    }

    if (!j.contains("input")) throw ConfigError("config needs an 'input' section");
    const auto& in = j.at("input");
    detail::reject_unknown(in, {"wav", "scenes", "scene_batch"}, "input");
    if (in.size() != 1) throw ConfigError("input must contain exactly one of wav, scenes, scene_batch");
    if (in.contains("wav")) {
        for (const auto& scene : in.at("wav")) {
            std::vector<std::string> paths;
            if (scene.is_string()) paths.push_back(scene.get<std::string>());
            else paths = scene.get<std::vector<std::string>>();
            cfg.wav_inputs.push_back(std::move(paths));
        }
        if (cfg.wav_inputs.empty()) throw ConfigError("input.wav is empty");
    } else if (in.contains("scenes")) {
        for (const auto& s : in.at("scenes")) cfg.scenes.push_back(detail::scene_from_json(s));
        if (cfg.scenes.empty()) throw ConfigError("input.scenes is empty");
    } else {
        const auto& b = in.at("scene_batch");
        detail::reject_unknown(b, {"count", "mics", "t60_ms", "duration_s", "min_distance_m", "max_distance_m",
                                   "drr_at_1m_db", "early_cutoff", "seed"},
                               "scene_batch");
        SceneBatchSpec batch;
        batch.count = get_or(b, "count", batch.count);
        batch.mics = get_or(b, "mics", batch.mics);
        batch.t60_ms = get_or(b, "t60_ms", batch.t60_ms);
        batch.duration_s = get_or(b, "duration_s", batch.duration_s);
        batch.min_distance_m = get_or(b, "min_distance_m", batch.min_distance_m);
        batch.max_distance_m = get_or(b, "max_distance_m", batch.max_distance_m);
        batch.drr_at_1m_db = get_or(b, "drr_at_1m_db", batch.drr_at_1m_db);
        batch.early_cutoff = get_or(b, "early_cutoff", batch.early_cutoff);
        batch.seed = get_or(b, "seed", cfg.seed);
        batch.sample_rate = cfg.stft.sample_rate;
        cfg.scene_batch = batch;
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg)
{
    using nlohmann::json;
    json input;
    if (!cfg.wav_inputs.empty()) {
        input["wav"] = cfg.wav_inputs;
    } else if (!cfg.scenes.empty()) {
        json list = json::array();
        for (const auto& s : cfg.scenes) list.push_back(detail::scene_to_json(s));
        input["scenes"] = list;
    } else if (cfg.scene_batch) {
        const auto& b = *cfg.scene_batch;
        input["scene_batch"] = {{"count", b.count},
                                {"mics", b.mics},
                                {"t60_ms", b.t60_ms},
                                {"duration_s", b.duration_s},
                                {"min_distance_m", b.min_distance_m},
                                {"max_distance_m", b.max_distance_m},
                                {"drr_at_1m_db", b.drr_at_1m_db},
                                {"early_cutoff", b.early_cutoff},
                                {"seed", b.seed}};
    }
    return json{{"input", input},
                {"solver",
                 {{"p", cfg.solver.p},
                  {"I", cfg.solver.reweight_iters},
                  {"J", cfg.solver.fista_iters},
                  {"epsilon", cfg.solver.epsilon},
                  {"L_g", cfg.solver.taps},
                  {"tau", cfg.solver.base_tau},
                  {"eig_iters", cfg.solver.eig_iters},
                  {"eig_tol", cfg.solver.eig_tol}}},
                {"stft",
                 {{"frame_size", cfg.stft.frame_size},
                  {"frame_shift", cfg.stft.frame_shift},
                  {"window", "sqrt_hann"},
                  {"sample_rate", cfg.stft.sample_rate}}},
                {"K", cfg.subset_sizes},
                {"lambda_c", cfg.lambda_c},
                {"mode", detail::mode_name(cfg.mode)},
                {"baselines",
                 {{"exhaustive", cfg.baselines.exhaustive},
                  {"random", cfg.baselines.random},
                  {"full", cfg.baselines.full}}},
                {"delays", cfg.gcc_phat_delays ? "gcc_phat" : "uniform"},
                {"max_lag", cfg.max_lag},
                {"output_dir", cfg.output_dir},
                {"seed", cfg.seed},
                {"jobs", cfg.jobs},
                {"emit_wav", cfg.emit_wav}};
}

// Everything except the input section, which evaluate() receives directly.
inline void validate_settings(const ExperimentConfig& cfg)
{
    validate(cfg.solver);
    validate(cfg.stft);
    require(!cfg.subset_sizes.empty(), "at least one subset size K is required");
    for (auto k : cfg.subset_sizes) require(k >= 2, "subset sizes must be >= 2");
    require(!cfg.lambda_c.empty(), "at least one lambda_c value is required");
    for (double l : cfg.lambda_c) require(l >= 0.0, "lambda_c values must be >= 0");
    require(cfg.jobs >= 1, "jobs must be >= 1");
}

inline void validate(const ExperimentConfig& cfg)
{
    validate_settings(cfg);
    const int inputs = int(!cfg.wav_inputs.empty()) + int(!cfg.scenes.empty()) + int(cfg.scene_batch.has_value());
    require(inputs == 1, "exactly one input kind is required");
}

// ---------------------------------------------------------------------------
// Per-scene evaluation

struct SceneInput {
    std::string id;
    std::vector<std::vector<double>> signals;
    std::optional<std::vector<double>> desired;
};

struct MethodResult {
    std::string method;  // unprocessed, full, gs_fd, gs_fi, exhaustive_fd, exhaustive_fi, random_fd, random_fi
    std::size_t k = 0;
    std::optional<double> lambda_c;
    std::vector<double> cost;                 // per bin, normalized domain
    std::vector<std::vector<MicIndex>> subset;  // per bin
    CMatrix d;                                // bins x frames, original scale
    double broadband_cost = 0.0;              // over non-degenerate bins
    std::optional<double> relative_gap;       // vs the exhaustive optimum of the same mode and K
    std::optional<double> ler_db;             // late/early ratio of the resynthesized output

    std::string label() const
    {
        std::ostringstream os;
        os << method << "_K" << k;
        if (lambda_c) os << "_lc" << *lambda_c;
        return os.str();
    }
};

struct GsRun {
    double lambda_c = 0.0;
    std::vector<GroupVector> per_bin;
    GroupVector broadband;
};

struct SceneResult {
    std::string id;
    std::size_t length = 0;  // samples per channel
    TdoaEstimate tdoa;
    DelayProfile delays;
    std::vector<bool> degenerate;
    std::vector<GsRun> gs_runs;
    std::vector<MethodResult> methods;
    std::optional<double> unprocessed_ler_db;

    const MethodResult* find(const std::string& method, std::size_t k, std::optional<double> lambda_c = {}) const
    {
        for (const auto& m : methods)
            if (m.method == method && m.k == k && m.lambda_c == lambda_c) return &m;
        return nullptr;
    }
};

inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c)
{
    return mix_seed(mix_seed(mix_seed(mix_seed(seed) ^ a) ^ b) ^ c);
}

// Group-sparse solve of every bin of the full array; group vectors of
// degenerate bins are left at zero and skipped in the broadband sum.
inline GsRun group_sparse_selection_run(const SceneProblems& problems, SolverConfig cfg, double lambda_c,
                                        std::size_t jobs)
{
    cfg.lambda_c = lambda_c;
    const std::size_t bins = problems.bins.size();
    GsRun run;
    run.lambda_c = lambda_c;
    run.per_bin.resize(bins);
    parallel_for(bins, jobs, [&](std::size_t f) {
        const auto res = reweighted_solve(problems.bins[f], cfg);
        run.per_bin[f] = group_vector(res.filter, f);
    });
    std::vector<GroupVector> valid;
    for (std::size_t f = 0; f < bins; ++f)
        if (!problems.bins[f].degenerate) valid.push_back(run.per_bin[f]);
    run.broadband = broadband_group_vector(valid);
    return run;
}

class SceneEvaluator {
public:
    SceneEvaluator(const ExperimentConfig& cfg, std::size_t scene_index) : cfg_(cfg), scene_index_(scene_index) {}

    SceneResult run(const SceneInput& input)
    {
        SceneResult out;
        out.id = input.id;
        out.length = input.signals.front().size();
        const std::size_t mics = input.signals.size();
        require(mics >= 2, "scene " + input.id + " needs at least two microphones");
        for (auto k : cfg_.subset_sizes)
            require(k <= mics, "subset size K exceeds the microphone count of scene " + input.id);

        const std::size_t max_lag = cfg_.max_lag == 0 ? cfg_.stft.frame_size : cfg_.max_lag;
        if (cfg_.gcc_phat_delays) {
            out.tdoa = estimate_tdoa(input.signals, max_lag);
            out.delays = to_frame_delays(out.tdoa, cfg_.solver.base_tau, cfg_.stft.frame_shift);
        } else {
            out.tdoa.delay.assign(mics, 0);
            out.tdoa.confidence.assign(mics, 0.0);
            out.tdoa.silent.assign(mics, false);
            out.delays = DelayProfile::uniform(mics, cfg_.solver.base_tau);
        }

        const auto spec = analyze(input.signals, cfg_.stft);
        problems_ = build_scene_problems(spec, out.delays, cfg_.solver, cfg_.jobs);
        const std::size_t bins = problems_.bins.size();
        out.degenerate.resize(bins);
        bool any_valid = false;
        for (std::size_t f = 0; f < bins; ++f) {
            out.degenerate[f] = problems_.bins[f].degenerate;
            any_valid = any_valid || !out.degenerate[f];
        }
        if (!any_valid) throw DegenerateError("all frequency bins of scene " + input.id + " are degenerate");

        SubsetCostCache cache(problems_, cfg_.solver, cfg_.jobs);
        const auto full_set = all_mics(mics);

        // unprocessed reference
        {
            MethodResult m = blank("unprocessed", 1, std::nullopt);
            m.d = spec.channels[kReferenceMic];
            for (std::size_t f = 0; f < bins; ++f) {
                m.cost[f] = lp_power_sum(problems_.bins[f].x1, cfg_.solver.p);
                m.subset[f] = {kReferenceMic};
            }
            finish(m, out);
            out.methods.push_back(std::move(m));
        }
        if (cfg_.baselines.full) out.methods.push_back(fixed_subset("full", mics, std::nullopt, full_set, cache, out));

        std::map<std::size_t, ExhaustiveResult> optimum;
        for (auto k : cfg_.subset_sizes) {
            if (cfg_.baselines.exhaustive) {
                optimum[k] = exhaustive_search(cache, mics, k, bins);
                const auto& ex = optimum[k];
                if (wants_fd(cfg_.mode)) {
                    std::vector<std::vector<MicIndex>> per_bin(bins);
                    for (std::size_t f = 0; f < bins; ++f) per_bin[f] = ex.best[f].mics;
                    out.methods.push_back(per_bin_subsets("exhaustive_fd", k, std::nullopt, per_bin, cache, out));
                }
                if (wants_fi(cfg_.mode))
                    out.methods.push_back(fixed_subset("exhaustive_fi", k, std::nullopt, ex.best_broadband, cache, out));
            }
            if (cfg_.baselines.random) {
                if (wants_fd(cfg_.mode)) {
                    std::vector<std::vector<MicIndex>> per_bin(bins);
                    for (std::size_t f = 0; f < bins; ++f)
                        per_bin[f] = random_selection(mics, k, derive_seed(cfg_.seed, scene_index_, k, f)).mics;
                    out.methods.push_back(per_bin_subsets("random_fd", k, std::nullopt, per_bin, cache, out));
                }
                if (wants_fi(cfg_.mode)) {
                    const auto s = random_selection(mics, k, derive_seed(cfg_.seed, scene_index_, k, ~0ULL));
                    out.methods.push_back(fixed_subset("random_fi", k, std::nullopt, s.mics, cache, out));
                }
            }
        }

        for (double lc : cfg_.lambda_c) {
            out.gs_runs.push_back(group_sparse_selection_run(problems_, cfg_.solver, lc, cfg_.jobs));
            const auto& run = out.gs_runs.back();
            for (auto k : cfg_.subset_sizes) {
                if (wants_fd(cfg_.mode)) {
                    std::vector<std::vector<MicIndex>> per_bin(bins);
                    for (std::size_t f = 0; f < bins; ++f) per_bin[f] = select_subset(run.per_bin[f], k).mics;
                    auto m = per_bin_subsets("gs_fd", k, lc, per_bin, cache, out);
                    if (auto it = optimum.find(k); it != optimum.end()) m.relative_gap = per_bin_gap(m, it->second);
                    out.methods.push_back(std::move(m));
                }
                if (wants_fi(cfg_.mode)) {
                    const auto s = select_subset(run.broadband, k, SelectionMode::FrequencyIndependent);
                    out.methods.push_back(fixed_subset("gs_fi", k, lc, s.mics, cache, out));
                }
            }
        }

        // gaps of the baselines against the optimum
        for (auto& m : out.methods) {
            auto it = optimum.find(m.k);
            if (it == optimum.end() || m.relative_gap) continue;
            if (m.method == "random_fd" || m.method == "exhaustive_fd") m.relative_gap = per_bin_gap(m, it->second);
            if (m.method == "random_fi" || m.method == "exhaustive_fi" || m.method == "gs_fi")
                m.relative_gap = (m.broadband_cost - it->second.best_broadband_cost) / it->second.best_broadband_cost;
        }

        if (input.desired) {
            for (auto& m : out.methods) {
                const auto y = synthesize(m.d, cfg_.stft, input.signals.front().size());
                m.ler_db = late_early_ratio(y, *input.desired);
                if (m.method == "unprocessed") out.unprocessed_ler_db = m.ler_db;
            }
        }
        return out;
    }

    const SceneProblems& problems() const { return problems_; }

private:
    MethodResult blank(const std::string& method, std::size_t k, std::optional<double> lc) const
    {
        MethodResult m;
        m.method = method;
        m.k = k;
        m.lambda_c = lc;
        m.cost.assign(problems_.bins.size(), 0.0);
        m.subset.resize(problems_.bins.size());
        return m;
    }

    void finish(MethodResult& m, const SceneResult& scene) const
    {
        m.broadband_cost = 0.0;
        for (std::size_t f = 0; f < m.cost.size(); ++f)
            if (!scene.degenerate[f]) m.broadband_cost += m.cost[f];
    }

    MethodResult fixed_subset(const std::string& method, std::size_t k, std::optional<double> lc,
                              const std::vector<MicIndex>& mics, SubsetCostCache& cache, const SceneResult& scene)
    {
        MethodResult m = blank(method, k, lc);
        const auto& res = cache.get(mics);
        m.cost = res.cost;
        m.d = res.d;
        for (auto& s : m.subset) s = mics;
        finish(m, scene);
        return m;
    }

    // Costs come from the cache when the exhaustive baseline has filled it;
    // otherwise each bin is solved once for its own subset. Both routes run
    // the identical per-bin solve.
    MethodResult per_bin_subsets(const std::string& method, std::size_t k, std::optional<double> lc,
                                 const std::vector<std::vector<MicIndex>>& per_bin, SubsetCostCache& cache,
                                 const SceneResult& scene)
    {
        MethodResult m = blank(method, k, lc);
        m.subset = per_bin;
        m.d = CMatrix::Zero(Eigen::Index(per_bin.size()), Eigen::Index(problems_.frames));
        if (cfg_.baselines.exhaustive) {
            for (std::size_t f = 0; f < per_bin.size(); ++f) {
                const auto& res = cache.get(per_bin[f]);
                m.cost[f] = res.cost[f];
                m.d.row(Eigen::Index(f)) = res.d.row(Eigen::Index(f));
            }
        } else {
            std::vector<SubsetSelection> subsets(per_bin.size());
            for (std::size_t f = 0; f < per_bin.size(); ++f)
                subsets[f] = SubsetSelection{per_bin[f], SelectionMode::FrequencyDependent, f};
            auto res = wpe_on_subsets(problems_, subsets, cfg_.solver, cfg_.jobs);
            m.cost = std::move(res.cost);
            m.d = std::move(res.d);
        }
        finish(m, scene);
        return m;
    }

    double per_bin_gap(const MethodResult& m, const ExhaustiveResult& ex) const
    {
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t f = 0; f < m.cost.size(); ++f) {
            if (problems_.bins[f].degenerate || ex.best_cost[f] <= 0.0) continue;
            acc += (m.cost[f] - ex.best_cost[f]) / ex.best_cost[f];
            ++count;
        }
        return count ? acc / double(count) : 0.0;
    }

    const ExperimentConfig& cfg_;
    std::size_t scene_index_;
    SceneProblems problems_;
};

// ---------------------------------------------------------------------------
// Batch orchestration and reports

struct MetricsSummary {
    std::string method;
    std::size_t k = 0;
    std::optional<double> lambda_c;
    std::vector<double> broadband_cost;  // per scene
    std::vector<double> relative_gap;    // per scene, when available
    std::vector<double> ler_improvement_db;
};

struct MetricsReport {
    std::vector<SceneResult> scenes;
    std::vector<MetricsSummary> summaries;
    std::vector<std::string> warnings;
};

inline std::pair<double, double> mean_and_stderr(const std::vector<double>& v)
{
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= double(v.size() - 1);
    return {mean, std::sqrt(var / double(v.size()))};
}

inline std::vector<SceneInput> load_inputs(const ExperimentConfig& cfg, std::vector<std::string>& warnings)
{
    std::vector<SceneInput> inputs;
    auto scene_id = [](const char* prefix, std::size_t i) {
        std::ostringstream os;
        os << prefix << (i < 10 ? "00" : i < 100 ? "0" : "") << i;
        return os.str();
    };
    if (!cfg.wav_inputs.empty()) {
        for (std::size_t i = 0; i < cfg.wav_inputs.size(); ++i) {
            auto audio = load_wav(cfg.wav_inputs[i], cfg.stft.sample_rate, cfg.stft.frame_size);
            for (auto& w : audio.warnings) warnings.push_back(scene_id("wav", i) + ": " + w);
            inputs.push_back({scene_id("wav", i), std::move(audio.channels), std::nullopt});
        }
        return inputs;
    }
    const auto specs = cfg.scene_batch ? make_scene_batch(*cfg.scene_batch) : cfg.scenes;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        require(specs[i].sample_rate == cfg.stft.sample_rate, "scene sample rate differs from the STFT sample rate");
        auto rendered = render_scene(specs[i]);
        inputs.push_back({scene_id("scene", i), std::move(rendered.mics), std::move(rendered.desired)});
    }
    return inputs;
}

inline std::string subset_string(const std::vector<MicIndex>& mics)
{
    std::string s;
    for (std::size_t i = 0; i < mics.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(mics[i] + 1);
    }
    return s;
}

inline std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_per_bin_csv(const std::string& path, const MetricsReport& report)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << "scene_id,bin,method,K,lambda_c,cost_p,subset\n";
    for (const auto& scene : report.scenes) {
        for (const auto& m : scene.methods) {
            for (std::size_t f = 0; f < m.cost.size(); ++f) {
                out << scene.id << ',' << f << ',' << m.method << ',' << m.k << ','
                    << (m.lambda_c ? format_double(*m.lambda_c) : std::string()) << ',' << format_double(m.cost[f])
                    << ',' << subset_string(m.subset[f]) << '\n';
            }
        }
    }
}

inline nlohmann::json summary_json(const MetricsReport& report)
{
    using nlohmann::json;
    json methods = json::array();
    for (const auto& s : report.summaries) {
        json entry{{"method", s.method}, {"K", s.k}};
        entry["lambda_c"] = s.lambda_c ? json(*s.lambda_c) : json(nullptr);
        const auto [cost_mean, cost_se] = mean_and_stderr(s.broadband_cost);
        entry["broadband_cost"] = {{"mean", cost_mean}, {"stderr", cost_se}, {"per_scene", s.broadband_cost}};
        if (!s.relative_gap.empty()) {
            const auto [gap_mean, gap_se] = mean_and_stderr(s.relative_gap);
            entry["relative_cost_gap"] = {{"mean", gap_mean}, {"stderr", gap_se}, {"per_scene", s.relative_gap}};
        }
        if (!s.ler_improvement_db.empty()) {
            const auto [ler_mean, ler_se] = mean_and_stderr(s.ler_improvement_db);
            entry["late_early_improvement_db"] = {
                {"mean", ler_mean}, {"stderr", ler_se}, {"per_scene", s.ler_improvement_db}};
        }
        methods.push_back(entry);
    }

    json scenes = json::array();
    for (const auto& sc : report.scenes) {
        json entry{{"scene_id", sc.id}, {"tdoa_samples", sc.tdoa.delay}, {"frame_delays", sc.delays.tau}};
        std::size_t degenerate = 0;
        for (bool d : sc.degenerate) degenerate += d ? 1 : 0;
        entry["degenerate_bins"] = degenerate;
        json fi = json::array();
        for (const auto& m : sc.methods) {
            if (m.method.size() > 3 && m.method.compare(m.method.size() - 3, 3, "_fi") == 0) {
                std::vector<std::size_t> one_based;
                for (auto mic : m.subset.front()) one_based.push_back(mic + 1);
                json sel{{"method", m.method}, {"K", m.k}, {"subset", one_based}};
                sel["lambda_c"] = m.lambda_c ? json(*m.lambda_c) : json(nullptr);
                fi.push_back(sel);
            }
        }
        entry["frequency_independent_subsets"] = fi;
        if (sc.unprocessed_ler_db) entry["unprocessed_late_early_db"] = *sc.unprocessed_ler_db;
        scenes.push_back(entry);
    }
    return json{{"scenes", scenes}, {"methods", methods}, {"scene_count", report.scenes.size()}};
}

inline MetricsReport evaluate(const ExperimentConfig& cfg, const std::vector<SceneInput>& inputs,
                              std::ostream* log = nullptr)
{
    validate_settings(cfg);
    MetricsReport report;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (log) *log << "scene " << inputs[i].id << " (" << i + 1 << "/" << inputs.size() << ")\n";
        SceneEvaluator evaluator(cfg, i);
        report.scenes.push_back(evaluator.run(inputs[i]));
    }

    // summaries keyed in first-seen order
    for (const auto& scene : report.scenes) {
        for (const auto& m : scene.methods) {
            MetricsSummary* target = nullptr;
            for (auto& s : report.summaries)
                if (s.method == m.method && s.k == m.k && s.lambda_c == m.lambda_c) target = &s;
            if (!target) {
                report.summaries.push_back({m.method, m.k, m.lambda_c, {}, {}, {}});
                target = &report.summaries.back();
            }
            target->broadband_cost.push_back(m.broadband_cost);
            if (m.relative_gap) target->relative_gap.push_back(*m.relative_gap);
            if (m.ler_db && scene.unprocessed_ler_db)
                target->ler_improvement_db.push_back(*scene.unprocessed_ler_db - *m.ler_db);
        }
    }
    return report;
}

inline void write_json(const std::string& path, const nlohmann::json& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out << j.dump(2) << '\n';
}

// Runs the experiment and writes manifest.json, per_bin.csv, summary.json and,
// when enabled, processed_<scene>_<method>.wav into cfg.output_dir.
inline MetricsReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr)
{
    validate(cfg);
    std::vector<std::string> warnings;
    const auto inputs = load_inputs(cfg, warnings);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec || !fs::is_directory(cfg.output_dir))
        throw ConfigError("output directory is not writable: " + cfg.output_dir);
    const fs::path dir(cfg.output_dir);
    if (log)
        for (const auto& w : warnings) *log << "warning: " << w << '\n';
    auto report = evaluate(cfg, inputs, log);
    report.warnings = std::move(warnings);

    nlohmann::json manifest{{"manifest_version", 1},
                            {"tool", "wpe_gs"},
                            {"version", kVersion},
                            {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                  std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                  std::to_string(EIGEN_MINOR_VERSION)},
                            {"config", config_to_json(cfg)}};
    if (cfg.scene_batch) {
        nlohmann::json seeds = nlohmann::json::array();
        for (const auto& s : make_scene_batch(*cfg.scene_batch))
            seeds.push_back({{"decay_seed", s.decay_seed}, {"source_seed", s.source.seed}});
        manifest["scene_seeds"] = seeds;
    }
    write_json((dir / "manifest.json").string(), manifest);
    write_per_bin_csv((dir / "per_bin.csv").string(), report);
    write_json((dir / "summary.json").string(), summary_json(report));

    if (cfg.emit_wav) {
        for (std::size_t i = 0; i < report.scenes.size(); ++i) {
            const auto& scene = report.scenes[i];
            for (const auto& m : scene.methods) {
                const auto y = synthesize(m.d, cfg.stft, scene.length);
                write_wav((dir / ("processed_" + scene.id + "_" + m.label() + ".wav")).string(), {y},
                          cfg.stft.sample_rate);
            }
            if (inputs[i].desired) {
                write_wav((dir / ("scene_" + scene.id + "_mics.wav")).string(), inputs[i].signals,
                          cfg.stft.sample_rate);
                write_wav((dir / ("scene_" + scene.id + "_desired.wav")).string(), {*inputs[i].desired},
                          cfg.stft.sample_rate);
            }
        }
    }
    return report;
}

}  // namespace wpe_gs
