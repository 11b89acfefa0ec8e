#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "symbiotic/attack.hpp"
#include "symbiotic/synthetic.hpp"
#include "testing.hpp"

using namespace symbiotic;
using namespace symbiotic::ad;

namespace {

AttackConfig tiny_config() {
    AttackConfig c;
    c.iterations = 4;
    c.final_samples = 8;
    c.inner_iterations = 2;
    c.unrolled.epochs = 6;
    c.surrogate.epochs = 30;
    c.surrogate.early_stopping = false;
    return c;
}

Graph csbm(std::size_t n, std::uint64_t seed) {
    CsbmConfig c;
    c.num_nodes = n;
    c.feature_dim = 12;
    c.p_in = 0.2;
    c.p_out = 0.03;
    return make_csbm(c, seed);
}

ModelSpec small_spec(const Graph& g) {
    ModelSpec s = ModelSpec::defaults(Arch::gcn, g.feature_dim(), g.num_classes);
    s.hidden = 8;
    return s;
}

PerturbationState manual_state(std::vector<std::uint64_t> idx, std::vector<double> vals, std::size_t budget) {
    PerturbationState s;
    s.indices = std::move(idx);
    s.values = std::move(vals);
    s.budget = budget;
    s.rng = Rng(1);
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Block sampling

TEST(SampleBlock, Examples) {
    EXPECT_THROW(sample_block(4, 6, {}, 1), std::invalid_argument);
    const std::vector<std::uint64_t> ex = {0, 1, 2};
    auto got = sample_block(6, 3, ex, 7);
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, (std::vector<std::uint64_t>{3, 4, 5}));
    EXPECT_TRUE(sample_block(10, 0, {}, 1).empty());
}

TEST(SampleBlock, DistinctAndDisjointFromExclusions) {
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
        const std::uint64_t universe = 1 + rng.below(t % 2 ? 40 : 1000000);
        std::vector<std::uint64_t> ex;
        for (std::uint64_t k = rng.below(std::min<std::uint64_t>(universe, 10)); k > 0; --k) ex.push_back(rng.below(universe));
        std::sort(ex.begin(), ex.end());
        ex.erase(std::unique(ex.begin(), ex.end()), ex.end());
        const std::size_t b = rng.below(std::min<std::uint64_t>(universe - ex.size(), 50) + 1);
        const auto got = sample_block(universe, b, ex, rng);
        ASSERT_EQ(got.size(), b);
        std::set<std::uint64_t> s(got.begin(), got.end());
        ASSERT_EQ(s.size(), b);
        for (auto v : got) {
            ASSERT_LT(v, universe);
            ASSERT_FALSE(std::binary_search(ex.begin(), ex.end(), v));
        }
    }
}

TEST(SampleBlock, UniformByChiSquare) {
    // 20 cells, 5 drawn per trial, 1e5 trials: expected count 25000 per cell.
    // 19 degrees of freedom; 43.8 is the 0.999 quantile.
    for (std::uint64_t universe : {20ull}) {
        std::vector<double> counts(universe, 0.0);
        Rng rng(99);
        const int trials = 100000;
        for (int t = 0; t < trials; ++t)
            for (auto v : sample_block(universe, 5, {}, rng)) counts[v] += 1.0;
        const double expect = trials * 5.0 / static_cast<double>(universe);
        double chi2 = 0.0;
        for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
        EXPECT_LT(chi2, 43.8);
    }
}

// ---------------------------------------------------------------------------
// Projection

TEST(Projection, Examples) {
    const auto a = project(std::vector<double>{0.5, 0.7}, 1.0);
    EXPECT_NEAR(a[0], 0.4, 1e-9);
    EXPECT_NEAR(a[1], 0.6, 1e-9);
    const auto b = project(std::vector<double>{0.9, 0.8, 0.5}, 1.0);
    EXPECT_NEAR(b[0], 0.5, 1e-9);
    EXPECT_NEAR(b[1], 0.4, 1e-9);
    EXPECT_NEAR(b[2], 0.1, 1e-9);
    EXPECT_EQ(project(std::vector<double>{0.2, 0.3}, 1.0), (std::vector<double>{0.2, 0.3}));
    EXPECT_EQ(project(std::vector<double>{-0.5, 1.7}, 5.0), (std::vector<double>{0.0, 1.0}));
    const auto z = project(std::vector<double>{0.4, 0.9}, 0.0);
    EXPECT_EQ(z[0], 0.0);
    EXPECT_NEAR(z[1], 0.0, 1e-10);
    EXPECT_THROW(project(std::vector<double>{0.4}, -1.0), std::invalid_argument);
}

TEST(Projection, MatchesBreakpointOracle) {
    Rng rng(5);
    for (int t = 0; t < 2000; ++t) {
        const std::size_t k = 1 + rng.below(40);
        std::vector<double> v(k);
        for (auto& x : v) x = -1.0 + 3.0 * rng.uniform();
        const double budget = static_cast<double>(rng.below(k + 1));
        const auto got = project(v, budget);
        const auto want = oracle::capped_simplex_oracle(v, budget);
        for (std::size_t i = 0; i < k; ++i) ASSERT_NEAR(got[i], want[i], 1e-8);
    }
}

TEST(Projection, IdempotentAndOrderPreserving) {
    Rng rng(6);
    for (int t = 0; t < 2000; ++t) {
        const std::size_t k = 1 + rng.below(30);
        std::vector<double> v(k);
        for (auto& x : v) x = -1.0 + 3.0 * rng.uniform();
        const double budget = 1.0 + static_cast<double>(rng.below(5));
        const auto once = project(v, budget);
        const auto twice = project(once, budget);
        double sum = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            ASSERT_NEAR(once[i], twice[i], 1e-8);
            ASSERT_GE(once[i], 0.0);
            ASSERT_LE(once[i], 1.0);
            sum += once[i];
            for (std::size_t j = 0; j < k; ++j)
                if (v[i] <= v[j]) ASSERT_LE(once[i], once[j] + 1e-12);
        }
        ASSERT_LE(sum, budget + 1e-8);
    }
}

// ---------------------------------------------------------------------------
// Resampling and schedule

TEST(Resample, EvictsAndRefillsBelowThreshold) {
    const PairSpace space = PairSpace::all(6);  // 15 pairs
    PerturbationState s = manual_state({0, 1, 2}, {0.5, 0.5, 0.5}, 1);
    resample_step(s, std::vector<double>{1.0, 0.0, -10.0}, 1.0, space);
    // Pre-projection (1.5, 0.5, -9.5) projects to (1, 0, 0).
    EXPECT_EQ(s.indices[0], 0u);
    EXPECT_NEAR(s.values[0], 1.0, 1e-9);
    EXPECT_EQ(s.values[1], 0.0);
    EXPECT_EQ(s.values[2], 0.0);
    std::set<std::uint64_t> idx(s.indices.begin(), s.indices.end());
    EXPECT_EQ(idx.size(), 3u);
    for (auto i : s.indices) EXPECT_LT(i, 15u);
}

TEST(Resample, KeepsEntriesAboveThreshold) {
    const PairSpace space = PairSpace::all(6);
    PerturbationState s = manual_state({3, 7}, {0.2, 0.3}, 2);
    resample_step(s, std::vector<double>{0.1, 0.1}, 1.0, space);
    EXPECT_EQ(s.indices, (std::vector<std::uint64_t>{3, 7}));
    EXPECT_NEAR(s.values[0], 0.3, 1e-12);
    EXPECT_NEAR(s.values[1], 0.4, 1e-12);
    EXPECT_THROW(resample_step(s, std::vector<double>{0.1}, 1.0, space), std::invalid_argument);
}

TEST(Resample, BudgetHoldsOverRandomSteps) {
    Rng rng(8);
    const PairSpace space = PairSpace::all(30);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t budget = 1 + rng.below(10);
        const Graph g = oracle::random_graph(30, 2, 2, 0.1, rng.next());
        PerturbationState s = init_state(space, g, budget, 40, rng.next());
        for (int step = 1; step <= 20; ++step) {
            std::vector<double> grad(s.size());
            for (auto& x : grad) x = rng.uniform() * 2 - 0.5;
            resample_step(s, grad, step_size_schedule(1.0, budget, step), space);
            ASSERT_LE(s.mass(), budget + 1e-8);
            std::set<std::uint64_t> idx(s.indices.begin(), s.indices.end());
            ASSERT_EQ(idx.size(), s.size());
        }
    }
}

TEST(StepSize, Examples) {
    EXPECT_DOUBLE_EQ(step_size_schedule(0.1, 10, 1), 1.0);
    EXPECT_DOUBLE_EQ(step_size_schedule(0.1, 10, 4), 0.5);
    EXPECT_DOUBLE_EQ(step_size_schedule(0.1, 0, 1), 0.1);
    EXPECT_THROW(step_size_schedule(0.1, 10, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Losses

TEST(AttackLoss, CrossEntropyClosedForm) {
    const Tensor z(2, 2, std::vector<double>{2.0, 0.5, -1.0, 1.0});
    const std::vector<NodeId> nodes = {0, 1};
    const std::vector<int> labels = {0, 0};
    const double want = 0.5 * (std::log1p(std::exp(0.5 - 2.0)) + std::log1p(std::exp(1.0 - -1.0)));
    EXPECT_NEAR(attack_loss_value(z, labels, nodes, LossKind::cross_entropy), want, 1e-12);
    Tape t;
    EXPECT_NEAR(attack_loss(t.constant(z), labels, nodes, LossKind::cross_entropy).value().item(), want, 1e-12);
}

TEST(AttackLoss, MarginExamples) {
    const Tensor tie(1, 3, 0.7);
    EXPECT_EQ(attack_loss_value(tie, std::vector<int>{1}, std::vector<NodeId>{0}, LossKind::tanh_margin), 0.0);
    const Tensor z(2, 3, std::vector<double>{2.0, 0.0, 1.0, 0.0, 3.0, -1.0});
    const std::vector<NodeId> nodes = {0, 1};
    const std::vector<int> labels = {0, 2};
    const double want = 0.5 * (std::tanh(1.0 - 2.0) + std::tanh(3.0 - -1.0));
    EXPECT_NEAR(attack_loss_value(z, labels, nodes, LossKind::tanh_margin), want, 1e-12);
    Tape t;
    EXPECT_NEAR(attack_loss(t.constant(z), labels, nodes, LossKind::tanh_margin).value().item(), want, 1e-12);
    EXPECT_THROW(attack_loss_value(Tensor(1, 1), std::vector<int>{0}, std::vector<NodeId>{0}, LossKind::tanh_margin),
                 std::invalid_argument);
    EXPECT_EQ(loss_kind_from_string("margin"), LossKind::tanh_margin);
    EXPECT_EQ(loss_kind_from_string("ce"), LossKind::cross_entropy);
}

TEST(AttackLoss, EvasionGradientMatchesFiniteDifference) {
    const Graph g = csbm(16, 2);
    const ModelParams m = init_model(small_spec(g), 3);
    const CsrPtr x = make_features(g);
    const PairSpace space = PairSpace::all(g.num_nodes);
    const PerturbationState s = init_state(space, g, 3, 30, 5);
    const std::vector<NodeId> targets = {1, 4, 7, 10, 13};
    std::vector<int> labels;
    for (NodeId v : targets) labels.push_back(g.labels[v]);
    Rng rng(1);
    const Tensor p0 = oracle::random_tensor(s.size(), 1, rng, 0.1, 0.9);
    for (LossKind kind : {LossKind::cross_entropy, LossKind::tanh_margin}) {
        const double err = finite_diff_check(
            [&](Tape& t, const Var& p) {
                const Adjacency adj = build_adjacency(relaxed_weights(graph_pairs(t, g), s, space, p));
                return attack_loss(forward(m.spec, place(t, m), adj, x), labels, targets, kind);
            },
            p0, 1e-6);
        EXPECT_LE(err, 1e-3);
    }
}

// ---------------------------------------------------------------------------
// Final sampling

TEST(SampleFinal, BinaryValuesWithinBudgetAreReturnedExactly) {
    const Graph g = oracle::random_graph(6, 2, 2, 0.3, 1);
    const PairSpace space = PairSpace::all(6);
    const PerturbationState s = manual_state({2, 5, 9}, {1.0, 0.0, 1.0}, 2);
    const LossEval eval = [](const EdgeFlipSet& f) { return static_cast<double>(f.size()); };
    const EdgeFlipSet got = sample_final(s, space, g, 2, 10, eval, 4);
    EXPECT_EQ(got.flips, (std::vector<NodePair>{tri_decode(2, 6), tri_decode(9, 6)}));
    EXPECT_EQ(got.relative_to, g.id());
}

TEST(SampleFinal, ZeroBudgetAndErrors) {
    const Graph g = oracle::random_graph(6, 2, 2, 0.3, 1);
    const PairSpace space = PairSpace::all(6);
    const PerturbationState s = manual_state({2, 5}, {0.5, 0.5}, 1);
    const LossEval eval = [](const EdgeFlipSet&) { return 0.0; };
    EXPECT_TRUE(sample_final(s, space, g, 0, 10, eval, 4).empty());
    EXPECT_THROW(sample_final(s, space, g, 1, 0, eval, 4), std::invalid_argument);
}

TEST(SampleFinal, FallsBackToTopEntriesWhenEverySampleIsOverBudget) {
    const Graph g = oracle::random_graph(6, 2, 2, 0.3, 1);
    const PairSpace space = PairSpace::all(6);
    const PerturbationState s = manual_state({1, 4, 8}, {1.0, 1.0, 1.0}, 2);
    int calls = 0;
    const LossEval eval = [&](const EdgeFlipSet&) { return static_cast<double>(++calls); };
    const EdgeFlipSet got = sample_final(s, space, g, 2, 5, eval, 3);
    EXPECT_EQ(calls, 0);
    EXPECT_EQ(got.flips, (std::vector<NodePair>{tri_decode(1, 6), tri_decode(4, 6)}));
}

TEST(SampleFinal, FindsBruteForceOptimumOnFiveNodes) {
    // Ten pairs, budget 2: 56 admissible sets. With every value at 0.15 each
    // set has probability at least 0.15^2 * 0.85^8, so 5000 draws cover all.
    const Graph g = oracle::random_graph(5, 2, 2, 0.4, 3);
    const PairSpace space = PairSpace::all(5);
    std::vector<std::uint64_t> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    const PerturbationState s = manual_state(idx, std::vector<double>(10, 0.15), 2);
    Rng rng(10);
    std::vector<double> score(10);
    for (auto& x : score) x = rng.uniform() - 0.3;
    const LossEval eval = [&](const EdgeFlipSet& f) {
        double total = 0.0;
        for (const auto& [i, j] : f.flips) total += score[tri_encode(i, j, 5)];
        return f.size() == 2 ? total - 0.1 : total;
    };
    double best = eval(EdgeFlipSet{});
    for (std::uint64_t a = 0; a < 10; ++a) {
        best = std::max(best, eval(EdgeFlipSet{{tri_decode(a, 5)}, 0}));
        for (std::uint64_t b = a + 1; b < 10; ++b) best = std::max(best, eval(EdgeFlipSet{{tri_decode(a, 5), tri_decode(b, 5)}, 0}));
    }
    const EdgeFlipSet got = sample_final(s, space, g, 2, 5000, eval, 12, 2);
    EXPECT_LE(got.size(), 2u);
    EXPECT_DOUBLE_EQ(eval(got), best);
}

// ---------------------------------------------------------------------------
// Attacks

class AttackFixture : public ::testing::Test {
protected:
    Graph g = csbm(36, 4);
    Splits splits = make_splits(g, 4, 0.25, SplitMode::transductive, 2);
    ModelSpec spec = small_spec(g);
};

TEST_F(AttackFixture, ZeroBudgetReturnsNothing) {
    const AttackConfig c = tiny_config();
    const ModelParams m = init_model(spec, 1);
    EXPECT_TRUE(evasion_attack(m, g, splits, 0, c, 1).empty());
    EXPECT_TRUE(poison_attack(spec, g, splits, 0, c, 1).empty());
}

TEST_F(AttackFixture, EvasionRespectsBudgetAndIsDeterministic) {
    const AttackConfig c = tiny_config();
    const ModelParams m = train_victim(spec, g, splits, c.surrogate, 1);
    AttackTrace trace;
    const EdgeFlipSet a = evasion_attack(m, g, splits, 5, c, 7, &trace);
    EXPECT_LE(a.size(), 5u);
    EXPECT_EQ(a.relative_to, g.id());
    EXPECT_EQ(trace.loss.size(), c.iterations);
    for (double mass : trace.mass) EXPECT_LE(mass, 5.0 + 1e-8);
    EXPECT_EQ(evasion_attack(m, g, splits, 5, c, 7).flips, a.flips);
    EXPECT_NO_THROW(apply_flips(g, a));
}

TEST_F(AttackFixture, PoisoningRespectsBudget) {
    const AttackConfig c = tiny_config();
    const EdgeFlipSet a = poison_attack(spec, g, splits, 4, c, 3);
    EXPECT_LE(a.size(), 4u);
    EXPECT_EQ(poison_attack(spec, g, splits, 4, c, 3).flips, a.flips);
}

TEST_F(AttackFixture, InductivePoisoningNeverTouchesTestNodes) {
    const Splits ind = make_splits(g, 4, 0.25, SplitMode::inductive, 2);
    const std::set<NodeId> test(ind.test.begin(), ind.test.end());
    const auto targets = poisoning_targets(ind);
    for (NodeId v : targets) EXPECT_FALSE(test.count(v));
    AttackConfig c = tiny_config();
    c.final_samples = 1;
    const EdgeFlipSet a = poison_attack(spec, g, ind, 6, c, 3);
    for (const auto& [i, j] : a.flips) EXPECT_FALSE(test.count(i) || test.count(j));
}

TEST_F(AttackFixture, SequentialSplitsBudget) {
    AttackConfig c = tiny_config();
    EXPECT_EQ(poison_share(6, 0.5), 3u);
    EXPECT_EQ(poison_share(5, 0.5), 2u);
    EXPECT_EQ(poison_share(10, 0.3), 3u);

    c.alpha = 0.0;
    const SymbioticFlips evasion_only = sequential_attack(spec, g, splits, 4, c, 5, 6);
    EXPECT_TRUE(evasion_only.poison.empty());
    EXPECT_LE(evasion_only.evasion.size(), 4u);

    c.alpha = 1.0;
    const SymbioticFlips poison_only = sequential_attack(spec, g, splits, 4, c, 5, 6);
    EXPECT_TRUE(poison_only.evasion.empty());
    EXPECT_LE(poison_only.poison.size(), 4u);
    EXPECT_EQ(poison_only.evasion.relative_to, apply_flips(g, poison_only.poison).id());
}

TEST_F(AttackFixture, JointWithoutInnerStepsEqualsSequential) {
    AttackConfig c = tiny_config();
    c.inner_iterations = 0;
    const SymbioticFlips seq = sequential_attack(spec, g, splits, 6, c, 9, 10);
    const SymbioticFlips joint = joint_attack(spec, g, splits, 6, c, 9, 10);
    EXPECT_EQ(seq.poison.flips, joint.poison.flips);
    EXPECT_EQ(seq.evasion.flips, joint.evasion.flips);
}

TEST_F(AttackFixture, JointRespectsBudget) {
    AttackConfig c = tiny_config();
    AttackTrace trace;
    const SymbioticFlips j = joint_attack(spec, g, splits, 6, c, 9, 10, &trace);
    EXPECT_LE(j.poison.size(), 3u);
    EXPECT_LE(j.evasion.size(), 3u);
    EXPECT_EQ(trace.loss.size(), c.iterations);
}

TEST(AttackConfig, Validation) {
    AttackConfig c;
    c.alpha = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = AttackConfig{};
    c.final_samples = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = AttackConfig{};
    c.unrolled.optimizer = Optimizer::adam;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(PairSpaceTest, SubsetKeysMapToGlobalPairs) {
    const PairSpace s = PairSpace::among(10, {7, 2, 5, 2});
    EXPECT_EQ(s.size(), 3u);
    EXPECT_EQ(s.pair(0), (NodePair{2, 5}));
    EXPECT_EQ(s.pair(2), (NodePair{5, 7}));
    EXPECT_EQ(s.key(1), tri_encode(2, 7, 10));
    EXPECT_THROW(PairSpace::among(4, {1, 4}), std::out_of_range);
}

// ---------------------------------------------------------------------------
// Flip files

TEST(FlipFile, RoundTrip) {
    std::vector<FlipRecord> records(2);
    records[0] = {"poison", 3, 11, {{{0, 4}, {2, 9}}, 0xabcdef0123456789ull}};
    records[1] = {"evasion", 2, 12, {{}, 0x42}};
    std::stringstream ss;
    write_flips(ss, records);
    EXPECT_EQ(ss.str(),
              "# base_graph=abcdef0123456789 stage=poison budget=3 seed=11\n0,4\n2,9\n"
              "# base_graph=0000000000000042 stage=evasion budget=2 seed=12\n");
    const auto back = read_flips(ss);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].stage, "poison");
    EXPECT_EQ(back[0].budget, 3u);
    EXPECT_EQ(back[0].seed, 11u);
    EXPECT_EQ(back[0].flips.flips, records[0].flips.flips);
    EXPECT_EQ(back[0].flips.relative_to, records[0].flips.relative_to);
    EXPECT_TRUE(back[1].flips.empty());
}

TEST(FlipFile, Errors) {
    std::stringstream orphan("1,2\n");
    EXPECT_THROW(read_flips(orphan), std::runtime_error);
    std::stringstream bad("# base_graph=00 stage=x budget=1 seed=1\n1;2\n");
    EXPECT_THROW(read_flips(bad), std::runtime_error);
    std::stringstream num("# base_graph=zz stage=x budget=1 seed=1\n");
    EXPECT_THROW(read_flips(num), std::runtime_error);
}
