#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

#include "test_helpers.hpp"
#include "wpe_gs/selection.hpp"

using namespace wpe_gs;

namespace {

GroupVector gv(std::vector<double> v) { return {std::move(v), std::nullopt}; }

// Bin sequences where x1 = small early term + filtered, delayed copy of mic
// `source` (0-based). Other mics carry unrelated noise.
MultichannelSpectrogram predictable_scene(std::mt19937_64& rng, std::size_t mics, std::size_t source,
                                          Eigen::Index bins, Eigen::Index frames)
{
    std::vector<CMatrix> ch;
    for (std::size_t m = 0; m < mics; ++m) ch.push_back(testing::random_cmatrix(rng, bins, frames));
    for (Eigen::Index f = 0; f < bins; ++f) {
        const CVector h = testing::random_cvector(rng, 4);
        const CVector early = testing::random_cvector(rng, frames, 1e-3);
        for (Eigen::Index n = 0; n < frames; ++n) {
            Complex acc = early[n];
            for (Eigen::Index l = 0; l < 4; ++l)
                if (n - 2 - l >= 0) acc += h[l] * ch[source](f, n - 2 - l);
            ch[0](f, n) = acc;
        }
    }
    return testing::make_spectrogram(std::move(ch));
}

SolverConfig small_config()
{
    SolverConfig cfg;
    cfg.taps = 4;
    return cfg;
}

}  // namespace

TEST_CASE("group vector", "[selection]")
{
    REQUIRE(group_vector(PredictionFilter::zeros(4, 3)).values == std::vector<double>{0.0, 0.0, 0.0});

    PredictionFilter g = PredictionFilter::zeros(3, 1);
    g.coeffs << 1.0, Complex(3.0, 4.0), 0.0;
    REQUIRE(group_vector(g).values == std::vector<double>{5.0, 0.0});

    SECTION("homogeneity")
    {
        std::mt19937_64 rng(50);
        PredictionFilter r{testing::random_cvector(rng, 12), 3};
        const auto u = group_vector(r).values;
        PredictionFilter scaled = r;
        scaled.coeffs *= 4.0;  // power of two: exact
        const auto u4 = group_vector(scaled).values;
        for (std::size_t i = 0; i < u.size(); ++i) REQUIRE(u4[i] == 4.0 * u[i]);
        scaled.coeffs = r.coeffs * 2.7;
        const auto uc = group_vector(scaled).values;
        for (std::size_t i = 0; i < u.size(); ++i) REQUIRE(std::abs(uc[i] - 2.7 * u[i]) <= 1e-15 * uc[i]);
    }
}

TEST_CASE("subset from group vector", "[selection]")
{
    REQUIRE(select_subset(gv({0.5, 0.1, 0.9}), 2).mics == std::vector<MicIndex>{0, 3});
    REQUIRE(select_subset(gv({0.5, 0.5}), 2).mics == std::vector<MicIndex>{0, 1});
    REQUIRE(select_subset(gv({0.0, 0.0, 0.0}), 3).mics == std::vector<MicIndex>{0, 1, 2});
    REQUIRE(select_subset(gv({0.5, 0.1, 0.9}), 4).mics == std::vector<MicIndex>{0, 1, 2, 3});
    REQUIRE_THROWS_AS(select_subset(gv({0.5, 0.1}), 1), ConfigError);
    REQUIRE_THROWS_AS(select_subset(gv({0.5, 0.1}), 4), ConfigError);

    auto u = gv({1.0, 2.0});
    u.bin = 7;
    REQUIRE(select_subset(u, 2).bin == std::optional<std::size_t>(7));
    REQUIRE_FALSE(select_subset(u, 2, SelectionMode::FrequencyIndependent).bin.has_value());
}

TEST_CASE("subset selection properties", "[selection][property]")
{
    std::mt19937_64 rng(51);
    std::uniform_int_distribution<std::size_t> msize(2, 12);
    std::uniform_int_distribution<int> level(0, 3);  // coarse levels force ties
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t m = msize(rng);
        std::uniform_int_distribution<std::size_t> kdist(2, m);
        const std::size_t k = kdist(rng);
        std::vector<double> v(m - 1);
        for (auto& x : v) x = level(rng);
        const auto s = select_subset(gv(v), k);

        REQUIRE(s.size() == k);
        REQUIRE(s.mics.front() == kReferenceMic);
        REQUIRE(std::is_sorted(s.mics.begin(), s.mics.end()));
        REQUIRE(std::adjacent_find(s.mics.begin(), s.mics.end()) == s.mics.end());

        // every chosen entry beats every dropped one; ties resolved to lower index
        for (std::size_t a = 1; a < m; ++a) {
            const bool in_a = std::binary_search(s.mics.begin(), s.mics.end(), a);
            for (std::size_t b = 1; b < m; ++b) {
                if (!in_a || std::binary_search(s.mics.begin(), s.mics.end(), b)) continue;
                REQUIRE(v[a - 1] >= v[b - 1]);
                if (v[a - 1] == v[b - 1]) REQUIRE(a < b);
            }
        }

        const double c = scale(rng);
        auto scaled = v;
        for (auto& x : scaled) x *= c;
        REQUIRE(select_subset(gv(scaled), k).mics == s.mics);
    }
}

TEST_CASE("broadband group vector", "[selection]")
{
    REQUIRE(broadband_group_vector({gv({1.0, 0.0}), gv({0.0, 2.0})}).values == std::vector<double>{1.0, 2.0});
    REQUIRE(broadband_group_vector({gv({0.3, 0.7})}).values == std::vector<double>{0.3, 0.7});
    REQUIRE_THROWS_AS(broadband_group_vector({}), ConfigError);
    REQUIRE_THROWS_AS(broadband_group_vector({gv({1.0}), gv({1.0, 2.0})}), ConfigError);

    SECTION("matches reverse-order summation")
    {
        std::mt19937_64 rng(52);
        std::uniform_real_distribution<double> u(0.0, 10.0);
        std::vector<GroupVector> bins(513);
        for (auto& b : bins) b = gv({u(rng), u(rng), u(rng), u(rng)});
        const auto total = broadband_group_vector(bins).values;
        for (std::size_t i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (auto it = bins.rbegin(); it != bins.rend(); ++it) acc += it->values[i];
            REQUIRE(std::abs(total[i] - acc) <= 1e-12 * acc);
        }
    }
}

TEST_CASE("random selection", "[selection]")
{
    REQUIRE(random_selection(5, 5, 1).mics == std::vector<MicIndex>{0, 1, 2, 3, 4});
    REQUIRE(random_selection(6, 3, 99).mics == random_selection(6, 3, 99).mics);
    REQUIRE_THROWS_AS(random_selection(4, 1, 0), ConfigError);
    REQUIRE_THROWS_AS(random_selection(4, 5, 0), ConfigError);

    SECTION("uniform inclusion frequency")
    {
        const std::size_t m = 5, k = 3, draws = 100000;
        std::vector<std::size_t> hits(m, 0);
        std::map<std::vector<MicIndex>, std::size_t> subsets;
        for (std::size_t i = 0; i < draws; ++i) {
            const auto s = random_selection(m, k, i);
            REQUIRE(s.size() == k);
            REQUIRE(s.mics.front() == kReferenceMic);
            for (auto mic : s.mics) ++hits[mic];
            ++subsets[s.mics];
        }
        REQUIRE(hits[0] == draws);
        const double expected = double(k - 1) / double(m - 1);
        for (std::size_t mic = 1; mic < m; ++mic)
            REQUIRE(std::abs(double(hits[mic]) / double(draws) - expected) <= 0.01);
        REQUIRE(subsets.size() == binomial(m - 1, k - 1));
    }
}

TEST_CASE("reference subset enumeration", "[selection]")
{
    const auto s = reference_subsets(5, 3);
    REQUIRE(s.size() == 6);
    REQUIRE(s.front() == std::vector<MicIndex>{0, 1, 2});
    REQUIRE(s.back() == std::vector<MicIndex>{0, 3, 4});
    REQUIRE(std::is_sorted(s.begin(), s.end()));
    REQUIRE(reference_subsets(2, 2) == std::vector<std::vector<MicIndex>>{{0, 1}});
    for (std::size_t m = 2; m <= 9; ++m)
        for (std::size_t k = 2; k <= m; ++k) {
            const auto all = reference_subsets(m, k);
            REQUIRE(all.size() == binomial(m - 1, k - 1));
            REQUIRE(std::set<std::vector<MicIndex>>(all.begin(), all.end()).size() == all.size());
        }
    REQUIRE(binomial(19, 9) == 92378);
}

TEST_CASE("WPE on a subset", "[selection]")
{
    std::mt19937_64 rng(53);
    const auto cfg = small_config();
    const auto spec = predictable_scene(rng, 4, 2, 3, 300);
    const auto problems = build_scene_problems(spec, DelayProfile::uniform(4, 2), cfg);

    SECTION("the generating microphone predicts the late part")
    {
        const auto good = wpe_on_subset(problems, {{0, 2}}, cfg);
        const auto bad = wpe_on_subset(problems, {{0, 1}}, cfg);
        for (std::size_t f = 0; f < 3; ++f) {
            const double initial = lp_power_sum(problems.bins[f].x1, cfg.p);
            REQUIRE(good.cost[f] < 0.1 * initial);
            REQUIRE(bad.cost[f] > 0.5 * initial);
        }
    }

    SECTION("matches a direct restricted solve bit for bit")
    {
        auto plain = cfg;
        plain.lambda_c = 0.0;
        const auto res = wpe_on_subset(problems, {{0, 1, 3}}, cfg);
        for (std::size_t f = 0; f < 3; ++f) {
            const auto sub = restrict_to(problems.bins[f], {0, 1, 3});
            const auto direct = reweighted_solve(sub, plain);
            REQUIRE(res.cost[f] == lp_power_sum(direct.d, cfg.p));
            REQUIRE(res.d.row(Eigen::Index(f)).transpose() == direct.d / sub.x1_scale);
        }
    }

    SECTION("penalty setting is ignored")
    {
        auto penalized = cfg;
        penalized.lambda_c = 1.0;
        REQUIRE(wpe_on_subset(problems, {{0, 2}}, penalized).cost == wpe_on_subset(problems, {{0, 2}}, cfg).cost);
    }

    SECTION("results do not depend on the worker count")
    {
        const auto one = wpe_on_subset(problems, {{0, 1, 2}}, cfg, 1);
        const auto many = wpe_on_subset(problems, {{0, 1, 2}}, cfg, 4);
        REQUIRE(one.cost == many.cost);
        REQUIRE(one.d == many.d);
    }

    SECTION("invalid subsets")
    {
        REQUIRE_THROWS(wpe_on_subset(problems, {{0}}, cfg));
        REQUIRE_THROWS(wpe_on_subset(problems, {{1, 2}}, cfg));
    }
}

TEST_CASE("duplicated channels give identical costs", "[selection]")
{
    std::mt19937_64 rng(54);
    const CMatrix shared = testing::random_cmatrix(rng, 2, 120);
    const auto spec = testing::make_spectrogram({testing::random_cmatrix(rng, 2, 120), shared, shared});
    const auto cfg = small_config();
    const auto problems = build_scene_problems(spec, DelayProfile::uniform(3, 2), cfg);
    REQUIRE(wpe_on_subset(problems, {{0, 1}}, cfg).cost == wpe_on_subset(problems, {{0, 2}}, cfg).cost);
}

TEST_CASE("degenerate bins pass through", "[selection]")
{
    std::mt19937_64 rng(55);
    CMatrix ref = testing::random_cmatrix(rng, 3, 80);
    ref.row(1).setZero();
    const auto spec = testing::make_spectrogram({ref, testing::random_cmatrix(rng, 3, 80)});
    const auto cfg = small_config();
    const auto res = wpe_on_subset(build_scene_problems(spec, DelayProfile::uniform(2, 2), cfg), {{0, 1}}, cfg);
    REQUIRE(res.degenerate == std::vector<bool>{false, true, false});
    REQUIRE(res.d.row(1).isZero(0.0));
    REQUIRE(res.cost[1] == 0.0);
}

TEST_CASE("exhaustive search", "[selection]")
{
    std::mt19937_64 rng(56);
    const auto cfg = small_config();

    SECTION("two microphones have a single candidate")
    {
        const auto spec = testing::make_spectrogram({testing::random_cmatrix(rng, 2, 100), testing::random_cmatrix(rng, 2, 100)});
        const auto problems = build_scene_problems(spec, DelayProfile::uniform(2, 2), cfg);
        const auto ex = exhaustive_search(problems, 2, cfg);
        for (const auto& s : ex.best) REQUIRE(s.mics == std::vector<MicIndex>{0, 1});
        REQUIRE(ex.best_broadband == std::vector<MicIndex>{0, 1});
        REQUIRE(ex.best_cost == wpe_on_subset(problems, {{0, 1}}, cfg).cost);
    }

    SECTION("minimal over re-evaluated candidates")
    {
        const auto spec = predictable_scene(rng, 4, 3, 4, 200);
        const auto problems = build_scene_problems(spec, DelayProfile::uniform(4, 2), cfg);
        const auto ex = exhaustive_search(problems, 2, cfg, 2);
        double best_broadband = INFINITY;
        std::vector<MicIndex> arg;
        for (const auto& subset : reference_subsets(4, 2)) {
            const auto res = wpe_on_subset(problems, {subset}, cfg);
            double total = 0.0;
            for (std::size_t f = 0; f < 4; ++f) {
                REQUIRE(ex.best_cost[f] <= res.cost[f]);
                total += res.cost[f];
            }
            if (total < best_broadband) {
                best_broadband = total;
                arg = subset;
            }
        }
        for (std::size_t f = 0; f < 4; ++f) {
            REQUIRE(ex.best[f].mics == std::vector<MicIndex>{0, 3});
            REQUIRE(ex.best[f].bin == std::optional<std::size_t>(f));
        }
        REQUIRE(ex.best_broadband == arg);
        REQUIRE(ex.best_broadband_cost == best_broadband);
    }

    SECTION("ties keep the lexicographically first subset")
    {
        const CMatrix shared = testing::random_cmatrix(rng, 2, 100);
        const auto spec = testing::make_spectrogram({testing::random_cmatrix(rng, 2, 100), shared, shared});
        const auto problems = build_scene_problems(spec, DelayProfile::uniform(3, 2), cfg);
        const auto ex = exhaustive_search(problems, 2, cfg);
        for (const auto& s : ex.best) REQUIRE(s.mics == std::vector<MicIndex>{0, 1});
        REQUIRE(ex.best_broadband == std::vector<MicIndex>{0, 1});
    }

    SECTION("budget guard")
    {
        SceneProblems big;
        big.mic_count = 20;
        big.bins.resize(1);
        REQUIRE_THROWS_AS(exhaustive_search(big, 10, cfg), ConfigError);
        REQUIRE_THROWS_AS(exhaustive_search(big, 1, cfg), ConfigError);
    }

    SECTION("cache shares solves")
    {
        const auto spec = predictable_scene(rng, 3, 1, 2, 100);
        const auto problems = build_scene_problems(spec, DelayProfile::uniform(3, 2), cfg);
        SubsetCostCache cache(problems, cfg, 1);
        const auto& a = cache.get({0, 1});
        const auto& b = cache.get({0, 1});
        REQUIRE(&a == &b);
        exhaustive_search(cache, 3, 2, 2);
        REQUIRE(cache.size() == 2);
    }
}
