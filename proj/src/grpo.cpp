#include "mom/grpo.hpp"

#include "mom/dataset.hpp"
#include "mom/san.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mom::grpo
{

using chess::GameRecord;
using chess::Position;

RewardBreakdown reward(const Position& pos, const std::string& candidate)
{
    const auto sans = chess::legal_sans(pos);
    if (sans.empty())
        throw TerminalPosition("no legal moves");
    RewardBreakdown r;
    if (!chess::is_well_formed_san(candidate))
    {
        r.rho_synt = -1.0;
        r.total = -1.0;
        return r;
    }
    if (std::find(sans.begin(), sans.end(), candidate) != sans.end())
        r.rho_leg = 1.0;
    else
        r.rho_leg = 0.5 - chess::nearest_legal_distance(pos, candidate).distance;
    r.total = r.rho_synt + *r.rho_leg;
    return r;
}

std::vector<double> group_advantages(const std::vector<double>& rewards)
{
    if (rewards.size() < 2)
        throw std::invalid_argument("a group needs at least two candidates");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards)
        var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (sd < 1e-8)
        return out;
    for (std::size_t i = 0; i < rewards.size(); ++i)
        out[i] = (rewards[i] - mean) / sd;
    return out;
}

void GrpoConfig::validate() const
{
    if (group_size < 2)
        throw std::invalid_argument("group size must be at least 2");
    if (groups < 1)
        throw std::invalid_argument("need at least one group per step");
    if (!(clip_eps > 0.0 && clip_eps < 1.0))
        throw std::invalid_argument("clip epsilon must lie in (0, 1)");
    if (beta < 0.0)
        throw std::invalid_argument("beta must be non-negative");
    if (!(temperature > 0.0))
        throw std::invalid_argument("sampling temperature must be positive");
}

void score_group(Group& group)
{
    std::vector<double> totals;
    for (Candidate& c : group.candidates)
    {
        if (c.terminated)
            c.reward = reward(group.position, c.text);
        else
        {
            if (group.position.legal_moves().empty())
                throw TerminalPosition("no legal moves");
            c.reward = RewardBreakdown{-1.0, std::nullopt, -1.0};
        }
        totals.push_back(c.reward.total);
    }
    const auto adv = group_advantages(totals);
    for (std::size_t i = 0; i < adv.size(); ++i)
        group.candidates[i].advantage = adv[i];
}

namespace
{

struct PrefixChoice
{
    std::size_t game;
    std::size_t ply;
};

// Target-player decision points whose prefix leaves room for a full move.
std::vector<PrefixChoice> decision_points(const std::vector<GameRecord>& games, int context_len)
{
    std::vector<PrefixChoice> out;
    for (std::size_t g = 0; g < games.size(); ++g)
    {
        const GameRecord& r = games[g];
        if (!r.tag("FEN").empty())
            continue;
        const std::size_t first = r.target_color == chess::Color::White ? 0 : 1;
        for (std::size_t ply = first; ply < r.plies(); ply += 2)
        {
            const std::size_t len = dataset::prefix_text(r, ply).size();
            if (static_cast<int>(len) + kMaxMoveTokens > context_len)
                break;
            out.push_back({g, ply});
        }
    }
    return out;
}

Position position_at(const GameRecord& r, std::size_t ply)
{
    Position pos = Position::initial();
    for (std::size_t i = 0; i < ply; ++i)
        pos = pos.play(r.moves[i]);
    return pos;
}

} // namespace

GroupBatch collect_groups(const Model& model, const std::vector<GameRecord>& games, const GrpoConfig& config, Rng rng)
{
    config.validate();
    const auto points = decision_points(games, model.config.context_len);
    GroupBatch batch;
    if (points.empty())
        return batch;
    Rng pick = rng.split("prefix");
    for (int gi = 0; gi < config.groups; ++gi)
    {
        const PrefixChoice choice = points[pick.below(points.size())];
        const GameRecord& r = games[choice.game];
        Group group;
        group.position = position_at(r, choice.ply);
        if (group.position.legal_moves().empty())
            continue;
        group.prefix = Vocab::instance().encode(dataset::prefix_text(r, choice.ply));
        group.candidates.resize(static_cast<std::size_t>(config.group_size));
        Decoder primed(model);
        primed.feed(group.prefix);
        const Rng group_rng = rng.split(static_cast<std::uint64_t>(gi));
#pragma omp parallel for schedule(dynamic)
        for (int m = 0; m < config.group_size; ++m)
        {
            Decoder dec = primed;
            Rng cand_rng = group_rng.split(static_cast<std::uint64_t>(m));
            const GeneratedMove mv = generate_move(dec, DecodePolicy::Temperature(config.temperature), cand_rng);
            Candidate& c = group.candidates[static_cast<std::size_t>(m)];
            c.text = mv.text;
            c.tokens = mv.tokens;
            c.logprobs_old = mv.logprobs;
            c.logprob_old = std::accumulate(mv.logprobs.begin(), mv.logprobs.end(), 0.0);
            c.terminated = mv.terminated;
        }
        score_group(group);
        batch.push_back(std::move(group));
    }
    return batch;
}

ObjectiveTerms grpo_objective(const Model& model, const GroupBatch& batch, const GrpoConfig& config, bool with_grad)
{
    std::size_t n = 0;
    for (const Group& g : batch)
        n += g.candidates.size();
    if (n == 0)
        throw EmptyBatch("no candidates to optimize");
    ObjectiveTerms out;
    if (with_grad)
        for (const auto& [name, t] : model.params)
            out.grads[name] = Tensor(t.rows, t.cols);
    const double inv = 1.0 / static_cast<double>(n);
    std::size_t clipped = 0;
    for (const Group& group : batch)
        for (const Candidate& c : group.candidates)
        {
            std::vector<TokenId> seq = group.prefix;
            seq.insert(seq.end(), c.tokens.begin(), c.tokens.end() - 1);
            std::vector<int> rows, targets;
            for (std::size_t i = 0; i < c.tokens.size(); ++i)
            {
                rows.push_back(static_cast<int>(group.prefix.size() + i) - 1);
                targets.push_back(c.tokens[i]);
            }
            Graph g;
            TapeForward fwd = forward_tape(g, model, seq);
            Var lp = g.token_logprobs(fwd.logits, rows, targets);
            Var ratio = g.exp(g.add_scalar(g.sum(lp), -c.logprob_old));
            Var clip = g.clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
            Var surrogate = g.minimum(g.scale(ratio, c.advantage), g.scale(clip, c.advantage));
            Tensor old(static_cast<int>(c.tokens.size()), 1);
            old.data = c.logprobs_old;
            Var log_r = g.add_const(g.scale(lp, -1.0), old); // log(p_old / p_new)
            Var k3 = g.mean(g.sub(g.add_scalar(g.exp(log_r), -1.0), log_r));
            Var term = g.scale(g.sub(surrogate, g.scale(k3, config.beta)), inv);
            const double r = g.scalar(ratio);
            if (r < 1.0 - config.clip_eps || r > 1.0 + config.clip_eps)
                ++clipped;
            out.kl += g.scalar(k3) * inv;
            out.objective += g.scalar(term);
            if (!with_grad)
                continue;
            g.backward(term);
            for (const auto& [name, v] : fwd.leaves)
            {
                const Tensor& gv = g.grad(v);
                Tensor& acc = out.grads.at(name);
                for (std::size_t i = 0; i < gv.size(); ++i)
                    acc.data[i] += gv.data[i];
            }
        }
    out.clip_fraction = static_cast<double>(clipped) * inv;
    return out;
}

StepReport grpo_step(Model& model, const GroupBatch& batch, const GrpoConfig& config)
{
    ObjectiveTerms terms = grpo_objective(model, batch, config, true);
    StepReport rep;
    rep.step = model.adam.step;
    rep.objective = terms.objective;
    rep.kl = terms.kl;
    rep.clip_fraction = terms.clip_fraction;
    std::size_t n = 0, legal = 0;
    for (const Group& g : batch)
        for (const Candidate& c : g.candidates)
        {
            rep.mean_reward += c.reward.total;
            rep.mean_abs_advantage += std::abs(c.advantage);
            legal += c.reward.legal();
            ++n;
        }
    rep.mean_reward /= static_cast<double>(n);
    rep.mean_abs_advantage /= static_cast<double>(n);
    rep.legality_fraction = static_cast<double>(legal) / static_cast<double>(n);

    bool any = false;
    for (auto& [_, t] : terms.grads)
        for (double& v : t.data)
        {
            any = any || v != 0.0;
            v = -v;
        }
    if (!any)
        return rep;
    adamw_update(model, terms.grads);
    rep.updated = true;
    return rep;
}

std::string to_json_line(const StepReport& r)
{
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["mean_reward"] = r.mean_reward;
    j["mean_abs_advantage"] = r.mean_abs_advantage;
    j["kl"] = r.kl;
    j["clip_fraction"] = r.clip_fraction;
    j["legality_fraction"] = r.legality_fraction;
    j["objective"] = r.objective;
    j["updated"] = r.updated;
    return j.dump();
}

std::vector<StepReport> train(Model& model, const std::vector<GameRecord>& games, const GrpoConfig& config, Rng rng,
                              std::ostream* log)
{
    config.validate();
    model.optim.lr = config.lr;
    std::vector<StepReport> out;
    for (int s = 0; s < config.steps; ++s)
    {
        const GroupBatch batch = collect_groups(model, games, config, rng.split(static_cast<std::uint64_t>(s)));
        if (batch.empty())
            throw EmptyBatch("no usable prefixes in the training games");
        StepReport rep = grpo_step(model, batch, config);
        rep.step = s;
        if (log)
            *log << to_json_line(rep) << '\n';
        out.push_back(rep);
    }
    return out;
}

double greedy_legality(const Model& model, const std::vector<GameRecord>& games, std::size_t max_positions)
{
    const auto points = decision_points(games, model.config.context_len);
    const std::size_t n = std::min(points.size(), max_positions);
    if (n == 0)
        return 0.0;
    std::size_t legal = 0;
#pragma omp parallel for reduction(+ : legal) schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i)
    {
        const GameRecord& r = games[points[i].game];
        Rng unused(0);
        const auto mv = generate_move(model, Vocab::instance().encode(dataset::prefix_text(r, points[i].ply)),
                                      DecodePolicy::Greedy(), unused);
        legal += mv.terminated && reward(position_at(r, points[i].ply), mv.text).legal();
    }
    return static_cast<double>(legal) / static_cast<double>(n);
}

} // namespace mom::grpo
