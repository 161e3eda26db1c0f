#include "mom/moe.hpp"

#include "mom/dataset.hpp"

#include "json.hpp"

#include <cmath>
#include <set>

namespace mom::moe
{

using chess::GameRecord;

std::string merge_algo_name(MergeAlgo a)
{
    switch (a)
    {
    case MergeAlgo::Uniform: return "uniform";
    case MergeAlgo::TaskArithmetic: return "task_arithmetic";
    case MergeAlgo::Fisher: return "fisher";
    }
    return "uniform";
}

MergeAlgo parse_merge_algo(const std::string& s)
{
    if (s == "uniform")
        return MergeAlgo::Uniform;
    if (s == "task_arithmetic")
        return MergeAlgo::TaskArithmetic;
    if (s == "fisher")
        return MergeAlgo::Fisher;
    throw std::invalid_argument("unknown merge algorithm '" + s + "'");
}

namespace
{

void check_layout(const Model& ref, const Model& other, const std::string& who)
{
    if (other.config != ref.config)
        throw LayoutMismatch(who + " has a different model configuration");
    if (other.params.size() != ref.params.size())
        throw LayoutMismatch(who + " has a different parameter set");
    for (const auto& [name, t] : ref.params)
    {
        auto it = other.params.find(name);
        if (it == other.params.end() || it->second.rows != t.rows || it->second.cols != t.cols)
            throw LayoutMismatch(who + " differs at " + name);
    }
}

void check_experts(const std::vector<Model>& experts)
{
    if (experts.empty())
        throw LayoutMismatch("no experts");
    if (experts.front().config.n_experts != 0)
        throw LayoutMismatch("experts must be dense models");
    for (std::size_t i = 1; i < experts.size(); ++i)
        check_layout(experts.front(), experts[i], "expert " + std::to_string(i));
}

} // namespace

ParamMap merge_uniform(const std::vector<Model>& experts)
{
    check_experts(experts);
    const double inv = 1.0 / static_cast<double>(experts.size());
    ParamMap out;
    for (const auto& [name, t] : experts.front().params)
    {
        if (is_gated_param(name))
            continue;
        Tensor acc(t.rows, t.cols);
        for (const Model& e : experts)
        {
            const Tensor& x = e.params.at(name);
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc.data[i] += x.data[i];
        }
        for (double& v : acc.data)
            v *= inv;
        out[name] = std::move(acc);
    }
    return out;
}

ParamMap merge_task_arithmetic(const Model& seed, const std::vector<Model>& experts, double lambda)
{
    check_experts(experts);
    check_layout(seed, experts.front(), "seed");
    const double inv = 1.0 / static_cast<double>(experts.size());
    ParamMap out;
    for (const auto& [name, base] : seed.params)
    {
        if (is_gated_param(name))
            continue;
        Tensor delta(base.rows, base.cols);
        for (const Model& e : experts)
        {
            const Tensor& x = e.params.at(name);
            for (std::size_t i = 0; i < delta.size(); ++i)
                delta.data[i] += x.data[i] - base.data[i];
        }
        Tensor r = base;
        for (std::size_t i = 0; i < r.size(); ++i)
            r.data[i] += lambda * delta.data[i] * inv;
        out[name] = std::move(r);
    }
    return out;
}

ParamMap estimate_fisher(const Model& model, const std::vector<TokenMask>& batch)
{
    ParamMap f;
    for (const auto& [name, t] : model.params)
        f[name] = Tensor(t.rows, t.cols);
    std::size_t used = 0;
    for (const TokenMask& tm : batch)
    {
        if (tm.masked_count() == 0)
            continue;
        const LossAndGrad lg = ssl_loss_and_grad(model, {tm});
        for (const auto& [name, g] : lg.grads)
        {
            Tensor& acc = f.at(name);
            for (std::size_t i = 0; i < g.size(); ++i)
                acc.data[i] += g.data[i] * g.data[i];
        }
        ++used;
    }
    if (used == 0)
        throw EmptyFisherBatch("Fisher estimation needs at least one sequence with masked tokens");
    for (auto& [_, t] : f)
        for (double& v : t.data)
            v /= static_cast<double>(used);
    return f;
}

ParamMap merge_fisher_weighted(const std::vector<Model>& experts, const std::vector<ParamMap>& fishers, double eps_f)
{
    check_experts(experts);
    if (fishers.size() != experts.size())
        throw LayoutMismatch("one Fisher estimate per expert is required");
    ParamMap out;
    for (const auto& [name, t] : experts.front().params)
    {
        if (is_gated_param(name))
            continue;
        Tensor acc(t.rows, t.cols), norm(t.rows, t.cols);
        for (std::size_t p = 0; p < experts.size(); ++p)
        {
            auto fit = fishers[p].find(name);
            if (fit == fishers[p].end() || fit->second.size() != t.size())
                throw LayoutMismatch("Fisher estimate " + std::to_string(p) + " lacks " + name);
            const Tensor& x = experts[p].params.at(name);
            for (std::size_t i = 0; i < t.size(); ++i)
            {
                const double w = fit->second.data[i] + eps_f;
                acc.data[i] += w * x.data[i];
                norm.data[i] += w;
            }
        }
        for (std::size_t i = 0; i < t.size(); ++i)
            acc.data[i] = norm.data[i] > 0 ? acc.data[i] / norm.data[i] : 0.0;
        out[name] = std::move(acc);
    }
    return out;
}

ParamMap merge_fisher(const Model& seed, const std::vector<Model>& experts,
                      const std::vector<std::vector<TokenMask>>& fisher_batches, double eps_f)
{
    check_experts(experts);
    check_layout(seed, experts.front(), "seed");
    if (fisher_batches.size() != experts.size())
        throw EmptyFisherBatch("one Fisher batch per expert is required");
    std::vector<ParamMap> fishers;
    for (std::size_t p = 0; p < experts.size(); ++p)
        fishers.push_back(estimate_fisher(experts[p], fisher_batches[p]));
    return merge_fisher_weighted(experts, fishers, eps_f);
}

bool is_expert_tensor(const std::string& name)
{
    if (name.size() < 3 || name[0] != 'e' || !std::isdigit(static_cast<unsigned char>(name[1])))
        return false;
    const auto dot = name.find('.');
    return dot != std::string::npos && is_gated_param(name.substr(dot + 1));
}

Model stitch(const std::vector<Model>& experts, int k, const MergeOptions& merge, std::uint64_t gate_seed)
{
    check_experts(experts);
    if (experts.size() < 2)
        throw LayoutMismatch("stitching needs at least two experts");
    ModelConfig cfg = experts.front().config;
    cfg.n_experts = static_cast<int>(experts.size());
    cfg.top_k = k;
    cfg.validate();

    ParamMap shared;
    switch (merge.algo)
    {
    case MergeAlgo::Uniform: shared = merge_uniform(experts); break;
    case MergeAlgo::TaskArithmetic:
        if (!merge.seed)
            throw std::invalid_argument("task arithmetic needs the seed model");
        shared = merge_task_arithmetic(*merge.seed, experts, merge.lambda);
        break;
    case MergeAlgo::Fisher:
        if (!merge.seed)
            throw std::invalid_argument("Fisher merging needs the seed model");
        shared = merge_fisher(*merge.seed, experts, merge.fisher_batches, merge.fisher_eps);
        break;
    }

    Model m = Model::init(cfg, gate_seed);
    m.optim = experts.front().optim;
    for (auto& [name, t] : shared)
    {
        quantize_f32(t);
        m.params.at(name) = std::move(t);
    }
    for (std::size_t p = 0; p < experts.size(); ++p)
        for (const auto& [name, t] : experts[p].params)
            if (is_gated_param(name))
                m.params.at(expert_param(static_cast<int>(p), name)) = t;
    return m;
}

double AnnealSchedule::tau(int step) const
{
    const double horizon = std::max(1.0, floor_fraction * steps);
    const double gamma = std::pow(floor / tau0, 1.0 / horizon);
    return std::max(floor, tau0 * std::pow(gamma, step));
}

std::vector<RouterStep> train_router(Model& stitched, const std::vector<TokenMask>& mixture, const RouterConfig& config,
                                     Rng rng, std::ostream* log)
{
    if (stitched.config.n_experts == 0)
        throw std::invalid_argument("router training needs a stitched model");
    if (mixture.empty())
        throw std::invalid_argument("empty mixture dataset");
    stitched.optim.lr = config.lr;
    std::vector<RouterStep> out;
    Rng pick = rng.split("batch");
    for (int s = 0; s < config.steps; ++s)
    {
        std::vector<TokenMask> batch;
        for (int i = 0; i < config.batch_size; ++i)
            batch.push_back(mixture[pick.below(mixture.size())]);
        Rng gumbel = rng.split(static_cast<std::uint64_t>(s));
        ForwardOptions opts;
        opts.routing = RoutingMode::Gumbel;
        opts.tau = config.schedule.tau(s);
        opts.gumbel_rng = &gumbel;
        opts.trainable = [](const std::string& name) { return !is_expert_tensor(name); };
        const LossAndGrad lg = ssl_loss_and_grad(stitched, batch, opts);
        RouterStep rep{s, opts.tau, lg.loss};
        if (lg.masked > 0)
            adamw_update(stitched, lg.grads);
        if (log)
            *log << nlohmann::ordered_json{{"step", s}, {"tau", rep.tau}, {"loss", rep.loss}}.dump() << '\n';
        out.push_back(rep);
    }
    return out;
}

std::vector<GameRecord> mixture_dataset(const std::vector<GameRecord>& seed_games,
                                        const std::vector<std::vector<GameRecord>>& expert_games, std::size_t total,
                                        Rng rng)
{
    if (expert_games.empty())
        throw std::invalid_argument("mixture needs at least one expert corpus");
    auto draw = [](const std::vector<GameRecord>& pool, std::size_t n, Rng r, std::vector<GameRecord>& out) {
        if (pool.empty())
            return;
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
        r.shuffle(idx);
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(pool[idx[i % idx.size()]]);
    };
    std::vector<GameRecord> out;
    const std::size_t half = total / 2;
    draw(seed_games, seed_games.empty() ? 0 : total - half, rng.split("seed"), out);
    const std::size_t rest = total - out.size();
    const std::size_t share = rest / expert_games.size();
    for (std::size_t p = 0; p < expert_games.size(); ++p)
        draw(expert_games[p], p + 1 == expert_games.size() ? rest - share * p : share, rng.split(p), out);
    rng.split("order").shuffle(out);
    return out;
}

RouteTrace route_trace(const Model& stitched, const GameRecord& game)
{
    const ModelConfig& c = stitched.config;
    if (c.n_experts == 0)
        throw std::invalid_argument("route trace needs a stitched model");
    const std::string text = dataset::sequence_text(game);
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    {
        std::size_t cursor = 1;
        for (std::size_t i = 0; i < game.plies(); ++i)
        {
            if (i > 0)
                ++cursor;
            if (i % 2 == 0)
                cursor += std::to_string(i / 2 + 1).size() + 2;
            spans.emplace_back(cursor, game.sans[i].size());
            cursor += game.sans[i].size();
        }
    }
    const std::size_t window = std::min(text.size(), static_cast<std::size_t>(c.context_len));
    auto ids = Vocab::instance().encode(text);
    ids.resize(window);

    std::vector<std::vector<RouteEntry>> per_pos;
    Graph g;
    ForwardOptions opts;
    opts.trace = &per_pos;
    forward_tape(g, stitched, ids, opts);

    RouteTrace out;
    for (std::size_t i = 0; i < spans.size(); ++i)
    {
        const auto [start, len] = spans[i];
        if (start + len > window)
            break;
        MoveRoute mr;
        mr.ply = i;
        mr.san = game.sans[i];
        for (int l = 0; l < c.n_layers; ++l)
        {
            RouteEntry avg;
            avg.full.assign(static_cast<std::size_t>(c.n_experts), 0.0);
            for (std::size_t q = start; q < start + len; ++q)
                for (int e = 0; e < c.n_experts; ++e)
                    avg.full[e] += per_pos[q - 1][l].full[e] / static_cast<double>(len);
            avg.experts = top_k_indices(avg.full, c.top_k);
            for (int e : avg.experts)
                avg.probs.push_back(avg.full[e]);
            mr.layers.push_back(std::move(avg));
        }
        out.push_back(std::move(mr));
    }
    return out;
}

std::string route_trace_json(const RouteTrace& trace)
{
    std::string out;
    for (const MoveRoute& m : trace)
    {
        nlohmann::ordered_json j;
        j["ply"] = m.ply;
        j["san"] = m.san;
        nlohmann::json layers = nlohmann::json::array();
        for (const RouteEntry& r : m.layers)
            layers.push_back({{"experts", r.experts}, {"probs", r.probs}});
        j["layers"] = layers;
        out += j.dump() + "\n";
    }
    return out;
}

} // namespace mom::moe
