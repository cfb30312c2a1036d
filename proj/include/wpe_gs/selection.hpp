#pragma once

// Microphone subset selection from group-sparse prediction filters, the final
// WPE pass on a chosen subset, and the exhaustive and random baselines.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "wpe_gs/core.hpp"
#include "wpe_gs/mclp.hpp"
#include "wpe_gs/parallel.hpp"
#include "wpe_gs/solver.hpp"

namespace wpe_gs {

// Entry m-1 holds ||g_m||_2 for microphone m >= 1 (0-based, reference excluded).
struct GroupVector {
    std::vector<double> values;
    std::optional<std::size_t> bin;  // empty for the broadband vector
};

enum class SelectionMode { FrequencyDependent, FrequencyIndependent };

struct SubsetSelection {
    std::vector<MicIndex> mics;  // ascending, mics.front() == kReferenceMic
    SelectionMode mode = SelectionMode::FrequencyDependent;
    std::optional<std::size_t> bin;

    std::size_t size() const { return mics.size(); }
};

inline GroupVector group_vector(const PredictionFilter& g, std::optional<std::size_t> bin = std::nullopt)
{
    GroupVector u;
    u.bin = bin;
    for (std::size_t m = 1; m < g.groups(); ++m) u.values.push_back(g.group(m).norm());
    return u;
}

// Reference plus the K-1 largest entries of u; ties go to the lower index.
inline SubsetSelection select_subset(const GroupVector& u, std::size_t k,
                                     SelectionMode mode = SelectionMode::FrequencyDependent)
{
    const std::size_t mics = u.values.size() + 1;
    if (k < 2 || k > mics) throw ConfigError("select_subset: K must lie in [2, M]");

    std::vector<std::size_t> order(u.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return u.values[a] > u.values[b]; });

    SubsetSelection s;
    s.mode = mode;
    s.bin = mode == SelectionMode::FrequencyDependent ? u.bin : std::nullopt;
    s.mics.push_back(kReferenceMic);
    for (std::size_t i = 0; i + 1 < k; ++i) s.mics.push_back(order[i] + 1);
    std::sort(s.mics.begin(), s.mics.end());
    return s;
}

inline GroupVector broadband_group_vector(const std::vector<GroupVector>& per_bin)
{
    if (per_bin.empty()) throw ConfigError("broadband_group_vector: no bins");
    GroupVector out;
    out.values.assign(per_bin.front().values.size(), 0.0);
    for (const auto& u : per_bin) {
        if (u.values.size() != out.values.size()) throw ConfigError("broadband_group_vector: length mismatch");
        for (std::size_t i = 0; i < u.values.size(); ++i) out.values[i] += u.values[i];
    }
    return out;
}

// Uniform over the K-subsets that contain the reference; deterministic in seed.
inline SubsetSelection random_selection(std::size_t mics, std::size_t k, std::uint64_t seed,
                                        SelectionMode mode = SelectionMode::FrequencyIndependent)
{
    if (k < 2 || k > mics) throw ConfigError("random_selection: K must lie in [2, M]");
    std::mt19937_64 rng(seed);
    std::vector<MicIndex> pool(mics - 1);
    std::iota(pool.begin(), pool.end(), MicIndex{1});
    // partial Fisher-Yates over the candidates
    for (std::size_t i = 0; i + 1 < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    SubsetSelection s;
    s.mode = mode;
    s.mics.push_back(kReferenceMic);
    s.mics.insert(s.mics.end(), pool.begin(), pool.begin() + std::ptrdiff_t(k - 1));
    std::sort(s.mics.begin(), s.mics.end());
    return s;
}

// All K-subsets containing the reference, in lexicographic order.
inline std::vector<std::vector<MicIndex>> reference_subsets(std::size_t mics, std::size_t k)
{
    if (k < 2 || k > mics) throw ConfigError("K must lie in [2, M]");
    std::vector<std::vector<MicIndex>> out;
    std::vector<MicIndex> pick(k - 1);
    std::iota(pick.begin(), pick.end(), MicIndex{1});
    for (;;) {
        std::vector<MicIndex> s{kReferenceMic};
        s.insert(s.end(), pick.begin(), pick.end());
        out.push_back(std::move(s));
        std::size_t i = pick.size();
        while (i > 0 && pick[i - 1] == mics - (pick.size() - i) - 1) --i;
        if (i == 0) break;
        ++pick[i - 1];
        for (std::size_t j = i; j < pick.size(); ++j) pick[j] = pick[j - 1] + 1;
    }
    return out;
}

inline std::size_t binomial(std::size_t n, std::size_t k)
{
    if (k > n) return 0;
    std::size_t r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Full-array problems of every bin of one scene.
struct SceneProblems {
    std::vector<BinProblem> bins;
    std::size_t mic_count = 0;
    std::size_t frames = 0;
    double p = 0.5;
};

inline SceneProblems build_scene_problems(const MultichannelSpectrogram& spec, const DelayProfile& delays,
                                          const SolverConfig& cfg, std::size_t jobs = 1)
{
    validate(cfg);
    require(spec.mic_count() >= 2, "at least two microphones are required");
    SceneProblems out;
    out.mic_count = spec.mic_count();
    out.frames = spec.frames();
    out.p = cfg.p;
    out.bins.resize(spec.bins());
    const auto mics = all_mics(spec.mic_count());
    parallel_for(spec.bins(), jobs,
                 [&](std::size_t f) { out.bins[f] = build_bin_problem(spec, f, mics, delays, cfg.taps, cfg.p); });
    return out;
}

// Output of a plain WPE pass; d is in the original (unnormalized) scale, the
// cost is sum |d|^p on the normalized problem of each bin.
struct SubsetWpeResult {
    CMatrix d;
    std::vector<double> cost;
    std::vector<bool> degenerate;
};

// Final WPE pass (lambda_c = 0) with a possibly different subset per bin.
inline SubsetWpeResult wpe_on_subsets(const SceneProblems& problems, const std::vector<SubsetSelection>& per_bin,
                                      SolverConfig cfg, std::size_t jobs = 1)
{
    require(per_bin.size() == problems.bins.size(), "one subset per bin required");
    cfg.lambda_c = 0.0;
    const std::size_t bins = problems.bins.size();
    SubsetWpeResult out;
    out.d = CMatrix::Zero(Eigen::Index(bins), Eigen::Index(problems.frames));
    out.cost.assign(bins, 0.0);
    out.degenerate.assign(bins, false);
    // std::vector<bool> is not safe for concurrent writes to distinct elements
    std::vector<char> degenerate(bins, 0);

    parallel_for(bins, jobs, [&](std::size_t f) {
        const auto& s = per_bin[f];
        require(s.size() >= 2 && s.mics.front() == kReferenceMic, "invalid subset");
        const BinProblem sub = restrict_to(problems.bins[f], s.mics);
        const auto res = reweighted_solve(sub, cfg);
        out.d.row(Eigen::Index(f)) = (res.d / sub.x1_scale).transpose();
        out.cost[f] = lp_power_sum(res.d, cfg.p);
        degenerate[f] = res.degenerate ? 1 : 0;
    });
    for (std::size_t f = 0; f < bins; ++f) out.degenerate[f] = degenerate[f] != 0;
    return out;
}

inline SubsetWpeResult wpe_on_subset(const SceneProblems& problems, const SubsetSelection& s,
                                     const SolverConfig& cfg, std::size_t jobs = 1)
{
    return wpe_on_subsets(problems, std::vector<SubsetSelection>(problems.bins.size(), s), cfg, jobs);
}

inline SubsetWpeResult wpe_on_subset(const MultichannelSpectrogram& spec, const DelayProfile& delays,
                                     const SubsetSelection& s, const SolverConfig& cfg, std::size_t jobs = 1)
{
    return wpe_on_subset(build_scene_problems(spec, delays, cfg, jobs), s, cfg, jobs);
}

// Memoizes full-band WPE passes by subset so that baselines and the proposed
// selection share identical solves.
class SubsetCostCache {
public:
    SubsetCostCache(const SceneProblems& problems, SolverConfig cfg, std::size_t jobs)
        : problems_(&problems), cfg_(cfg), jobs_(jobs)
    {
    }

    const SubsetWpeResult& get(const std::vector<MicIndex>& mics)
    {
        auto it = cache_.find(mics);
        if (it == cache_.end()) {
            SubsetSelection s{mics, SelectionMode::FrequencyIndependent, std::nullopt};
            it = cache_.emplace(mics, wpe_on_subset(*problems_, s, cfg_, jobs_)).first;
        }
        return it->second;
    }

    std::size_t size() const { return cache_.size(); }

private:
    const SceneProblems* problems_;
    SolverConfig cfg_;
    std::size_t jobs_;
    std::map<std::vector<MicIndex>, SubsetWpeResult> cache_;
};

struct ExhaustiveResult {
    std::vector<SubsetSelection> best;  // per bin
    std::vector<double> best_cost;      // per bin
    std::vector<MicIndex> best_broadband;  // minimizer of the cost summed over bins
    double best_broadband_cost = 0.0;
};

inline constexpr std::size_t kExhaustiveBudget = 10000;

// Per-bin minimizer over all K-subsets containing the reference. Ties keep the
// lexicographically smallest subset.
inline ExhaustiveResult exhaustive_search(SubsetCostCache& cache, std::size_t mics, std::size_t k,
                                          std::size_t bins, std::size_t budget = kExhaustiveBudget)
{
    if (k < 2 || k > mics) throw ConfigError("exhaustive_search: K must lie in [2, M]");
    if (binomial(mics - 1, k - 1) > budget) throw ConfigError("exhaustive_search: subset budget exceeded");

    ExhaustiveResult out;
    out.best.resize(bins);
    out.best_cost.assign(bins, 0.0);
    bool first = true;
    for (const auto& subset : reference_subsets(mics, k)) {
        const auto& res = cache.get(subset);
        double broadband = 0.0;
        for (std::size_t f = 0; f < bins; ++f) {
            if (!res.degenerate[f]) broadband += res.cost[f];
            if (first || res.cost[f] < out.best_cost[f]) {
                out.best[f] = SubsetSelection{subset, SelectionMode::FrequencyDependent, f};
                out.best_cost[f] = res.cost[f];
            }
        }
        if (first || broadband < out.best_broadband_cost) {
            out.best_broadband = subset;
            out.best_broadband_cost = broadband;
        }
        first = false;
    }
    return out;
}

inline ExhaustiveResult exhaustive_search(const SceneProblems& problems, std::size_t k, const SolverConfig& cfg,
                                          std::size_t jobs = 1, std::size_t budget = kExhaustiveBudget)
{
    SubsetCostCache cache(problems, cfg, jobs);
    return exhaustive_search(cache, problems.mic_count, k, problems.bins.size(), budget);
}

}  // namespace wpe_gs
