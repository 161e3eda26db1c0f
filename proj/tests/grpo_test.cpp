#include "mom/grpo.hpp"
#include "mom/san.hpp"

#include "toy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace mom::grpo
{
namespace
{

using chess::Position;

// Plain recursive edit distance, independent of the library's DP.
std::size_t edit_distance(const std::string& a, const std::string& b)
{
    if (a.empty())
        return b.size();
    if (b.empty())
        return a.size();
    const std::size_t sub = edit_distance(a.substr(1), b.substr(1)) + (a[0] != b[0]);
    const std::size_t del = edit_distance(a.substr(1), b) + 1;
    const std::size_t ins = edit_distance(a, b.substr(1)) + 1;
    return std::min({sub, del, ins});
}

TEST(Reward, LegalMove)
{
    const auto r = reward(Position::initial(), "e4");
    EXPECT_EQ(r.rho_synt, 0.0);
    ASSERT_TRUE(r.rho_leg);
    EXPECT_EQ(*r.rho_leg, 1.0);
    EXPECT_EQ(r.total, 1.0);
}

TEST(Reward, Malformed)
{
    const auto r = reward(Position::initial(), "Zx9");
    EXPECT_EQ(r.rho_synt, -1.0);
    EXPECT_FALSE(r.rho_leg);
    EXPECT_EQ(r.total, -1.0);
}

TEST(Reward, IllegalUsesNearestEditDistance)
{
    const Position pos = Position::initial();
    double best = 1.0;
    for (const auto& san : chess::legal_sans(pos))
        best = std::min(best, static_cast<double>(edit_distance("e5", san)) /
                                  static_cast<double>(std::max<std::size_t>(2, san.size())));
    const auto r = reward(pos, "e5");
    ASSERT_TRUE(r.rho_leg);
    EXPECT_NEAR(*r.rho_leg, 0.5 - best, 1e-12);
    EXPECT_NEAR(r.total, 0.5 - best, 1e-12);
}

TEST(Reward, TerminalPositionThrows)
{
    const Position mate = Position::from_fen("k7/1Q6/1K6/8/8/8/8/8 b - - 0 1");
    EXPECT_THROW(reward(mate, "Ka7"), TerminalPosition);
}

TEST(Reward, RangePartition)
{
    const Position pos = Position::initial();
    for (const char* c : {"e4", "Nf3", "e5", "Ke2", "Qxh7#", "O-O", "a9", "xx", "", "e4e5", "h3+"})
    {
        const auto r = reward(pos, c);
        EXPECT_GE(r.total, -1.0);
        EXPECT_LE(r.total, 1.0);
        if (!chess::is_well_formed_san(c))
            EXPECT_EQ(r.total, -1.0) << c;
        else if (r.legal())
            EXPECT_EQ(r.total, 1.0) << c;
        else
        {
            EXPECT_GE(r.total, -0.5) << c;
            EXPECT_LT(r.total, 0.5) << c;
        }
    }
}

TEST(Advantages, Examples)
{
    EXPECT_EQ(group_advantages({1, -1}), (std::vector<double>{1, -1}));
    EXPECT_EQ(group_advantages({0.5, 0.5, 0.5}), (std::vector<double>{0, 0, 0}));
    const std::vector<double> r = {1.0, 0.2, -1.0, -1.0};
    const double mean = (1.0 + 0.2 - 1.0 - 1.0) / 4.0;
    const double sd = std::sqrt(((1.0 - mean) * (1.0 - mean) + (0.2 - mean) * (0.2 - mean) +
                                 2 * (-1.0 - mean) * (-1.0 - mean)) / 4.0);
    const auto a = group_advantages(r);
    for (std::size_t i = 0; i < r.size(); ++i)
        EXPECT_NEAR(a[i], (r[i] - mean) / sd, 1e-12);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-9);
    double var = 0;
    for (double v : a)
        var += v * v / 4.0;
    EXPECT_NEAR(var, 1.0, 1e-6);
    EXPECT_THROW(group_advantages({1.0}), std::invalid_argument);
}

GrpoConfig small_config()
{
    GrpoConfig c;
    c.group_size = 4;
    c.groups = 2;
    return c;
}

TEST(Collect, ShapeAndReplay)
{
    const Model m = Model::init(toy::tiny_config(16, 1, 2, 64), 3);
    const auto games = toy::games(6);
    GrpoConfig c;
    const auto a = collect_groups(m, games, c, Rng(960));
    const auto b = collect_groups(m, games, c, Rng(960));
    ASSERT_EQ(a.size(), 8u);
    std::size_t evaluations = 0;
    for (std::size_t g = 0; g < a.size(); ++g)
    {
        evaluations += a[g].candidates.size();
        EXPECT_EQ(a[g].prefix, b[g].prefix);
        for (std::size_t i = 0; i < a[g].candidates.size(); ++i)
        {
            EXPECT_EQ(a[g].candidates[i].tokens, b[g].candidates[i].tokens);
            EXPECT_EQ(a[g].candidates[i].logprob_old, b[g].candidates[i].logprob_old);
        }
    }
    EXPECT_EQ(evaluations, 64u);
}

TEST(Collect, CollapsedModelGivesZeroAdvantages)
{
    const Model m = Model::init(toy::tiny_config(16, 1, 2, 64), 3);
    GrpoConfig c = small_config();
    c.temperature = 1e-6;
    for (const Group& g : collect_groups(m, toy::games(4), c, Rng(1)))
        for (const Candidate& cand : g.candidates)
        {
            EXPECT_EQ(cand.tokens, g.candidates.front().tokens);
            EXPECT_EQ(cand.advantage, 0.0);
        }
}

TEST(Step, RatioIdentityAtOldPolicy)
{
    const Model m = Model::init(toy::tiny_config(16, 1, 2, 64), 3);
    const auto batch = collect_groups(m, toy::games(4), small_config(), Rng(2));
    const auto t = grpo_objective(m, batch, small_config(), false);
    EXPECT_NEAR(t.kl, 0.0, 1e-12);
    EXPECT_EQ(t.clip_fraction, 0.0);
    double mean_adv = 0;
    std::size_t n = 0;
    for (const auto& g : batch)
        for (const auto& c : g.candidates)
        {
            mean_adv += c.advantage;
            ++n;
        }
    EXPECT_NEAR(t.objective, mean_adv / static_cast<double>(n), 1e-9);
}

TEST(Step, ZeroAdvantagesAndNoKlIsExactNoOp)
{
    Model m = Model::init(toy::tiny_config(16, 1, 2, 64), 3);
    GrpoConfig c = small_config();
    c.beta = 0.0;
    auto batch = collect_groups(m, toy::games(4), c, Rng(2));
    for (auto& g : batch)
        for (auto& cand : g.candidates)
        {
            cand.reward = RewardBreakdown{0.0, 0.5, 0.5};
            cand.advantage = 0.0;
        }
    const Model before = m;
    const auto rep = grpo_step(m, batch, c);
    EXPECT_FALSE(rep.updated);
    EXPECT_EQ(m.params, before.params);
    EXPECT_EQ(m.adam.step, before.adam.step);
}

TEST(Step, ZeroAdvantagesLeaveOnlyKlGradient)
{
    const Model old = Model::init(toy::tiny_config(8, 1, 2, 48), 3);
    GrpoConfig c = small_config();
    auto batch = collect_groups(old, toy::games(3), c, Rng(5));
    for (auto& g : batch)
        for (auto& cand : g.candidates)
            cand.advantage = 0.0;
    Model moved = old;
    for (double& v : moved.params.at("head.w").data)
        v *= 1.5;
    const auto with_kl = grpo_objective(moved, batch, c);
    EXPECT_GT(with_kl.kl, 0.0);
    EXPECT_NEAR(with_kl.objective, -c.beta * with_kl.kl, 1e-12);
    c.beta = 0.0;
    const auto without = grpo_objective(moved, batch, c);
    for (const auto& [_, t] : without.grads)
        for (double v : t.data)
            EXPECT_EQ(v, 0.0);
}

TEST(Step, EmptyBatchThrows)
{
    Model m = Model::init(toy::tiny_config(8, 1, 2, 48));
    EXPECT_THROW(grpo_step(m, {}, small_config()), EmptyBatch);
}

TEST(Step, GradientMatchesFiniteDifferences)
{
    const Model old = Model::init(toy::tiny_config(8, 1, 2, 48), 7);
    ASSERT_LE(old.parameter_count(), 10000u);
    GrpoConfig c = small_config();
    c.clip_eps = 0.5;
    const auto batch = collect_groups(old, toy::games(3), c, Rng(11));
    Model m = old;
    Rng jitter(4);
    for (auto& [_, t] : m.params)
        for (double& v : t.data)
            v += 0.02 * (jitter.uniform() - 0.5);
    const auto analytic = grpo_objective(m, batch, c, true);
    double worst = 0;
    const double eps = 1e-5;
    for (auto& [name, t] : m.params)
        for (std::size_t i = 0; i < t.size(); ++i)
        {
            const double saved = t.data[i];
            t.data[i] = saved + eps;
            const double up = grpo_objective(m, batch, c, false).objective;
            t.data[i] = saved - eps;
            const double down = grpo_objective(m, batch, c, false).objective;
            t.data[i] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double a = analytic.grads.at(name).data[i];
            worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
        }
    EXPECT_LT(worst, 1e-3);
}

TEST(Step, LogLinesAreJson)
{
    StepReport r;
    r.step = 3;
    r.mean_reward = 0.25;
    const std::string line = to_json_line(r);
    EXPECT_EQ(line.front(), '{');
    EXPECT_NE(line.find("\"step\":3"), std::string::npos);
    EXPECT_NE(line.find("\"legality_fraction\""), std::string::npos);
}

} // namespace
} // namespace mom::grpo
