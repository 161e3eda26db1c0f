// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include "mom/arena.hpp"
#include "mom/grpo.hpp"
#include "mom/moe.hpp"
#include "mom/pipeline.hpp"
#include "mom/san.hpp"
#include "mom/stylometry.hpp"

#include "finite_diff.hpp"
#include "reference_movegen.hpp"
#include "toy.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

using namespace mom;
namespace fs = std::filesystem;

namespace
{

struct Verdict
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::unique_ptr<uci::UciSession> stub(const std::vector<std::string>& args = {},
                                      const std::map<std::string, std::string>& options = {})
{
    auto s = std::make_unique<uci::UciSession>(std::make_unique<uci::ProcessChannel>(MOM_STUB_ENGINE, args));
    s->handshake(options);
    return s;
}

// ---------------------------------------------------------------------------------------------

Verdict movegen_oracle()
{
    const std::uint64_t expected[] = {20, 400, 8902, 197281};
    const auto pos = chess::Position::initial();
    const auto ref = reference::from_fen(chess::Position::initial().fen());
    std::string got;
    bool ok = true;
    for (int d = 1; d <= 4; ++d)
    {
        const std::uint64_t ours = chess::perft(pos, d);
        const std::uint64_t brute = reference::perft(ref, d);
        ok = ok && ours == brute && ours == expected[d - 1] && chess::perft_parallel(pos, d) == ours;
        got += (d > 1 ? "," : "") + std::to_string(ours);
    }
    return {ok, "perft 1..4 = {" + got + "}, brute-force reference agrees"};
}

Verdict reward_partition()
{
    Rng rng(960);
    const std::string alphabet = "abcdefghKQRBNx12345678=+#O-";
    int pairs = 0, legal = 0, malformed = 0, illegal = 0, bad = 0;
    while (pairs < 1000)
    {
        chess::Position pos = chess::Position::initial();
        const int plies = static_cast<int>(rng.below(60));
        for (int i = 0; i < plies; ++i)
        {
            const auto ms = pos.legal_moves();
            if (ms.empty())
                break;
            pos = pos.play(ms[rng.below(ms.size())]);
        }
        const auto moves = pos.legal_moves();
        if (moves.empty())
            continue;
        std::set<std::string> sans;
        for (const auto& m : moves)
            sans.insert(chess::to_san(pos, m));

        std::string cand;
        switch (rng.below(4))
        {
        case 0: cand = chess::to_san(pos, moves[rng.below(moves.size())]); break;
        case 1: // a legal move's text with one character replaced
            cand = chess::to_san(pos, moves[rng.below(moves.size())]);
            cand[rng.below(cand.size())] = alphabet[rng.below(alphabet.size())];
            break;
        case 2: // a move from some other position
        {
            chess::Position other = chess::Position::initial();
            for (int i = 0, n = static_cast<int>(rng.below(30)); i < n; ++i)
            {
                const auto ms = other.legal_moves();
                if (ms.empty())
                    break;
                other = other.play(ms[rng.below(ms.size())]);
            }
            const auto ms = other.legal_moves();
            cand = ms.empty() ? "e4" : chess::to_san(other, ms[rng.below(ms.size())]);
            break;
        }
        default:
            for (int i = 0, n = 1 + static_cast<int>(rng.below(6)); i < n; ++i)
                cand += alphabet[rng.below(alphabet.size())];
        }
        const auto r = grpo::reward(pos, cand);
        const bool is_legal = sans.count(cand) > 0;
        const bool in_minus_one = r.total == -1.0;
        const bool in_middle = r.total >= -0.5 && r.total < 0.5;
        const bool in_one = r.total == 1.0 && r.legal();
        if (in_minus_one + in_middle + in_one != 1 || r.legal() != is_legal || in_one != is_legal ||
            in_minus_one != !chess::is_well_formed_san(cand))
            ++bad;
        legal += is_legal;
        malformed += in_minus_one;
        illegal += in_middle;
        ++pairs;
    }
    return {bad == 0 && legal > 0 && malformed > 0 && illegal > 0,
            fmt("1000 pairs: %d legal, %d illegal, %d malformed; %d violations", legal, illegal, malformed, bad)};
}

double grpo_gradient_error()
{
    const Model old = Model::init(toy::tiny_config(8, 1, 2, 48), 7);
    grpo::GrpoConfig c;
    c.group_size = 4;
    c.groups = 2;
    c.clip_eps = 0.5;
    const auto batch = grpo::collect_groups(old, toy::games(3), c, Rng(11));
    Model m = old;
    Rng jitter(4);
    for (auto& [_, t] : m.params)
        for (double& v : t.data)
            v += 0.02 * (jitter.uniform() - 0.5);
    const auto analytic = grpo::grpo_objective(m, batch, c, true);
    double worst = 0;
    const double eps = 1e-5;
    for (auto& [name, t] : m.params)
        for (std::size_t i = 0; i < t.size(); ++i)
        {
            const double saved = t.data[i];
            t.data[i] = saved + eps;
            const double up = grpo::grpo_objective(m, batch, c, false).objective;
            t.data[i] = saved - eps;
            const double down = grpo::grpo_objective(m, batch, c, false).objective;
            t.data[i] = saved;
            worst = std::max(worst, testing_support::relative_error(analytic.grads.at(name).data[i],
                                                                    (up - down) / (2 * eps), 1e-6));
        }
    return worst;
}

double stylo_gradient_error(int term)
{
    stylo::StyloConfig cfg;
    cfg.token_dim = 4;
    cfg.embed_dim = 3;
    cfg.frames = 2;
    cfg.skip_opening_moves = 0;
    cfg.games_per_player = 2;
    const stylo::Encoder enc = stylo::Encoder::init(cfg, 11);
    std::vector<stylo::Window> ws;
    for (const auto& g : toy::games(4, 40, 60, 5))
    {
        const auto f = stylo::game_frames(g);
        ws.emplace_back(f.begin() + 10, f.begin() + 12);
    }
    std::vector<std::string> names;
    std::vector<Tensor> params;
    for (const auto& [name, t] : enc.params)
    {
        names.push_back(name);
        params.push_back(t);
    }
    auto build = [&](Graph& g, const std::vector<Var>& leaves) {
        std::map<std::string, Var> byname;
        for (std::size_t i = 0; i < names.size(); ++i)
            byname[names[i]] = leaves[i];
        std::vector<Var> rows;
        for (const auto& w : ws)
            rows.push_back(stylo::embed_tape(g, byname, enc, w));
        const auto v =
            stylo::loss_tape(g, g.concat_rows(rows), byname.at("sim.w"), byname.at("sim.b"), 2, 2, {0.8, 0.7, 0.5});
        return term == 0 ? v.infonce : term == 1 ? v.margin : v.centroid;
    };
    return testing_support::max_relative_error(params, build, 1e-6, 1e-7);
}

Verdict gradient_checks()
{
    const auto t0 = std::chrono::steady_clock::now();
    const Model m = Model::init(toy::tiny_config(8, 2, 2, 24), 4);
    const double ssl = gradient_check(m, toy::masks(toy::games(2, 6, 8, 5)), 1e-5);
    const double grpo = grpo_gradient_error();
    double stylo = 0;
    for (int term = 0; term < 3; ++term)
        stylo = std::max(stylo, stylo_gradient_error(term));
    const double secs = seconds_since(t0);
    return {ssl < 1e-3 && grpo < 1e-3 && stylo < 1e-3 && secs < 60 && m.parameter_count() <= 10000,
            fmt("max rel error: SSL %.1e, GRPO %.1e, stylometry terms %.1e; %.1fs", ssl, grpo, stylo, secs)};
}

// Shared by the GRPO and legality criteria.
struct GrpoPair
{
    Model ssl, tuned;
    std::vector<grpo::StepReport> steps;
    double seconds = 0;
};

GrpoPair train_grpo_pair()
{
    const auto t0 = std::chrono::steady_clock::now();
    Model m = Model::init(toy::tiny_config(32, 2, 2, 64), 960);
    m.optim.lr = 3e-3;
    const auto games = toy::games(200, 12, 40, 960);
    const auto corpus = toy::masks(games);
    Rng rng(960);
    for (int s = 0; s < 200; ++s)
    {
        std::vector<TokenMask> b;
        for (int i = 0; i < 8; ++i)
            b.push_back(corpus[rng.below(corpus.size())]);
        ssl_step(m, b);
    }
    GrpoPair p{m, m, {}, 0};
    grpo::GrpoConfig c;
    c.steps = 500;
    c.lr = 3e-4;
    p.steps = grpo::train(p.tuned, games, c, Rng(960));
    p.seconds = seconds_since(t0);
    return p;
}

Verdict grpo_reproduction(const GrpoPair& p)
{
    const std::size_t n = p.steps.size() / 10;
    double first = 0, last = 0, legal_first = 0;
    for (std::size_t i = 0; i < n; ++i)
    {
        first += p.steps[i].mean_reward / n;
        legal_first += p.steps[i].legality_fraction / n;
        last += p.steps[p.steps.size() - n + i].mean_reward / n;
    }
    const double illegal = 1.0 - legal_first;
    return {p.steps.size() == 500 && last - first >= 0.1 && illegal >= 0.2 && p.seconds < 900,
            fmt("mean reward first 10%% %.3f, last 10%% %.3f (gain %.3f); initial illegal rate %.1f%%; %.0fs", first,
                last, last - first, 100 * illegal, p.seconds)};
}

Verdict legality_direction(const GrpoPair& p)
{
    const auto t0 = std::chrono::steady_clock::now();
    arena::BattleConfig bc;
    bc.node_limit = 2000;
    auto rate = [&](const Model& m, double& mean_plies) {
        const auto rep = arena::run_games([&] { return std::make_unique<arena::ModelPlayer>(m); },
                                          [] { return stub({}, {{"Skill Level", "0"}}); }, bc, 100, Rng(960), 1);
        mean_plies = 0;
        for (const auto& o : rep.outcomes)
        {
            const auto g = chess::parse_pgn(o.pgn).games;
            mean_plies += g.empty() ? 0.0 : static_cast<double>(g.front().plies()) / rep.outcomes.size();
        }
        return rep.outcomes.size() == 100 ? arena::legality_rate(rep.outcomes) : -1.0;
    };
    double plies_ssl = 0, plies_grpo = 0;
    const double ssl = rate(p.ssl, plies_ssl);
    const double tuned = rate(p.tuned, plies_grpo);
    const double secs = seconds_since(t0) + p.seconds;
    std::string detail =
        fmt("legality SSL+GRPO %.1f%% vs SSL %.1f%% (margin %+.1f); mean plies before game end %.1f vs %.1f; %.0fs",
            tuned, ssl, tuned - ssl, plies_grpo, plies_ssl, secs);
    if (ssl == 0.0 && tuned == 0.0)
        detail += "; degenerate: every game of both models ends in a forfeit";
    return {ssl >= 0 && tuned >= ssl && secs < 1200, detail};
}

std::vector<TokenId> random_prefix(Rng& rng, int len)
{
    std::vector<TokenId> ids{Vocab::instance().id(';')};
    for (int i = 1; i < len; ++i)
        ids.push_back(static_cast<TokenId>(rng.below(Vocab::kSize)));
    return ids;
}

double max_abs(const Tensor& a, const Tensor& b)
{
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

Verdict stitching_identity()
{
    const Model e = Model::init(toy::tiny_config(16, 2, 2, 64), 7);
    const Model seed = Model::init(toy::tiny_config(16, 2, 2, 64), 8);
    const auto fisher_batch = toy::masks(toy::games(2, 8, 12, 3));
    double worst = 0;
    Rng rng(5);
    for (auto algo : {moe::MergeAlgo::Uniform, moe::MergeAlgo::TaskArithmetic, moe::MergeAlgo::Fisher})
        for (int k = 1; k <= 3; ++k)
        {
            moe::MergeOptions o;
            o.algo = algo;
            o.seed = &seed;
            o.fisher_batches = {fisher_batch, fisher_batch, fisher_batch};
            const Model s = moe::stitch({e, e, e}, k, o);
            for (int i = 0; i < 100; ++i)
            {
                const auto ids = random_prefix(rng, 1 + static_cast<int>(rng.below(40)));
                worst = std::max(worst, max_abs(forward_logits(s, ids), forward_logits(e, ids)));
            }
        }
    std::vector<Model> distinct;
    for (std::uint64_t s : {1, 2, 3})
        distinct.push_back(Model::init(toy::tiny_config(16, 2, 2, 64), s));
    const ParamMap ta = moe::merge_task_arithmetic(seed, distinct, 1.0);
    const ParamMap un = moe::merge_uniform(distinct);
    double ta_gap = 0;
    for (const auto& [name, t] : un)
        ta_gap = std::max(ta_gap, max_abs(t, ta.at(name)));
    return {worst <= 1e-5 && ta_gap <= 1e-6,
            fmt("identical experts: max |logit diff| %.1e over 3 algorithms x k=1..3 x 100 prefixes; "
                "task arithmetic(1) vs uniform %.1e",
                worst, ta_gap)};
}

std::vector<RouteEntry> route_once(const Model& m, ForwardOptions o, const std::vector<TokenId>& ids)
{
    std::vector<std::vector<RouteEntry>> trace;
    o.trace = &trace;
    Graph g;
    forward_tape(g, m, ids, o);
    return trace.back();
}

Verdict routing_contracts()
{
    // Softmax normalisation and exact-k selection on a stitched model with random gates.
    std::vector<Model> experts;
    for (std::uint64_t s : {1, 2, 3, 4})
        experts.push_back(Model::init(toy::tiny_config(16, 2, 2, 64), s));
    double sum_err = 0;
    bool exact_k = true;
    Rng rng(7);
    for (int k = 1; k <= 4; ++k)
    {
        Model s = moe::stitch(experts, k);
        for (auto& [name, t] : s.params)
            if (name.find("gate") != std::string::npos)
                for (double& v : t.data)
                    v = rng.normal();
        for (int i = 0; i < 20; ++i)
        {
            std::vector<std::vector<RouteEntry>> trace;
            ForwardOptions o;
            o.trace = &trace;
            Graph g;
            forward_tape(g, s, random_prefix(rng, 20), o);
            for (const auto& pos : trace)
                for (const auto& r : pos)
                {
                    double total = 0;
                    for (double p : r.full)
                        total += p;
                    sum_err = std::max(sum_err, std::abs(total - 1.0));
                    std::size_t nonzero = 0;
                    for (double w : r.mix)
                        nonzero += w > 0;
                    exact_k = exact_k && r.experts.size() == static_cast<std::size_t>(k) &&
                              std::set<int>(r.experts.begin(), r.experts.end()).size() == r.experts.size() &&
                              nonzero <= static_cast<std::size_t>(k);
                }
        }
    }

    // Gumbel sampling in the zero-temperature limit follows the gate distribution.
    const std::vector<double> p = {0.5, 0.3, 0.2};
    ModelConfig pc = toy::tiny_config(8, 1, 2, 8);
    pc.n_experts = 3;
    pc.top_k = 2;
    Model probe = Model::init(pc, 2);
    probe.params.at("h0.gate.w").data.assign(probe.params.at("h0.gate.w").size(), 0.0);
    probe.params.at("h0.gate.b").data = {std::log(p[0]), std::log(p[1]), std::log(p[2])};
    Rng grng(960);
    ForwardOptions go;
    go.routing = RoutingMode::Gumbel;
    go.tau = 1e-4;
    go.gumbel_rng = &grng;
    const int n = 10000;
    std::vector<double> count(3, 0.0);
    for (int i = 0; i < n; ++i)
    {
        const auto r = route_once(probe, go, {Vocab::instance().id(';')})[0];
        count[static_cast<std::size_t>(std::max_element(r.mix.begin(), r.mix.end()) - r.mix.begin())] += 1;
    }
    double worst_sigma = 0;
    for (int e = 0; e < 3; ++e)
        worst_sigma = std::max(worst_sigma, std::abs(count[e] - n * p[e]) / std::sqrt(n * p[e] * (1 - p[e])));

    // Router training leaves expert tensors untouched.
    Model s = moe::stitch({experts[0], experts[1]}, 2);
    const Model before = s;
    moe::RouterConfig rc;
    rc.steps = 5;
    rc.batch_size = 2;
    rc.lr = 1e-2;
    rc.schedule.steps = 5;
    moe::train_router(s, toy::masks(toy::games(6)), rc, Rng(960));
    bool frozen = true, moved = false;
    for (const auto& [name, t] : s.params)
    {
        if (moe::is_expert_tensor(name))
            frozen = frozen && t.data == before.params.at(name).data;
        else
            moved = moved || t.data != before.params.at(name).data;
    }
    return {sum_err <= 1e-6 && exact_k && worst_sigma <= 3.0 && frozen && moved,
            fmt("softmax sum error %.1e; exactly k selected: %s; Gumbel frequencies within %.2f sigma; "
                "expert tensors byte-identical after router training: %s",
                sum_err, exact_k ? "yes" : "no", worst_sigma, frozen ? "yes" : "no")};
}

void ssl_steps(Model& m, const std::vector<TokenMask>& corpus, int steps, Rng rng)
{
    for (int s = 0; s < steps; ++s)
    {
        std::vector<TokenMask> b;
        for (int i = 0; i < 8; ++i)
            b.push_back(corpus[rng.below(corpus.size())]);
        ssl_step(m, b);
    }
}

Verdict router_label_recovery()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto a = toy::games(120, 12, 30, 1, 0);
    const auto b = toy::games(120, 12, 30, 2, 1);
    std::vector<chess::GameRecord> seed_games(a.begin(), a.begin() + 60);
    seed_games.insert(seed_games.end(), b.begin(), b.begin() + 60);
    Model seed = Model::init(toy::tiny_config(32, 2, 2, 64), 960);
    seed.optim.lr = 3e-3;
    ssl_steps(seed, toy::masks(seed_games), 150, Rng(1));
    Model ea = seed, eb = seed;
    ssl_steps(ea, toy::masks(a), 300, Rng(2));
    ssl_steps(eb, toy::masks(b), 300, Rng(3));
    Model st = moe::stitch({ea, eb}, 2);
    const auto mix = moe::mixture_dataset(seed_games, {a, b}, 240, Rng(960));
    moe::RouterConfig rc;
    rc.steps = 300;
    rc.lr = 1e-3;
    rc.schedule.steps = 300;
    moe::train_router(st, toy::masks(mix), rc, Rng(4));

    const std::vector<chess::GameRecord> held[2] = {toy::games(30, 12, 30, 11, 0), toy::games(30, 12, 30, 12, 1)};
    double agree = 0, total = 0, per_style[2] = {0, 0};
    for (int style = 0; style < 2; ++style)
    {
        double a_s = 0, n_s = 0;
        for (const auto& g : held[style])
            for (const auto& mv : moe::route_trace(st, g))
            {
                if ((mv.ply % 2 == 0) != (g.target_color == chess::Color::White))
                    continue;
                for (const auto& layer : mv.layers)
                {
                    a_s += layer.experts.front() == style;
                    n_s += 1;
                }
            }
        per_style[style] = a_s / n_s;
        agree += a_s;
        total += n_s;
    }
    const double secs = seconds_since(t0);
    return {agree / total > 0.6 && secs < 1800,
            fmt("top-1 expert agreement with generating style %.1f%% (style A %.1f%%, style B %.1f%%; chance 50%%); %.0fs",
                100 * agree / total, 100 * per_style[0], 100 * per_style[1], secs)};
}

Verdict battle_conformance()
{
    arena::BattleConfig c;
    c.node_limit = 2000;
    bool ok = true;
    std::string notes;

    auto s = stub();
    arena::ScriptedPlayer illegal({"e4", "Ke2", "Ke2"});
    const auto f = arena::play_game(illegal, *s, c, chess::Color::White, Rng(1));
    const bool forfeit = f.result == arena::Result::ForfeitIllegal && f.offending_move == "Ke2" &&
                         chess::parse_pgn(f.pgn).games.front().plies() == 4;
    ok = ok && forfeit;

    double p0 = -1, p100 = -1;
    bool ninety = true;
    for (int cp : {0, 100})
    {
        auto q = stub({"--random", "--fixed-cp", std::to_string(cp)});
        arena::RandomPlayer rp;
        const auto o = arena::play_game(rp, *q, c, chess::Color::White, Rng(4));
        ninety = ninety && o.termination == arena::Termination::Adjudicated && o.final_cp == cp &&
                 chess::parse_pgn(o.pgn).games.front().plies() == 180;
        (cp == 0 ? p0 : p100) = arena::win_probability(*o.final_cp);
        ninety = ninety && o.result == (cp == 0 ? arena::Result::Draw : arena::Result::ModelWin);
    }
    ok = ok && ninety && p0 == 50.0 && std::abs(p100 - 59.1) <= 0.05;

    arena::BattleConfig sc = c;
    sc.max_turns = 4;
    bool seats = true;
    for (int n : {1, 4, 7})
    {
        const auto rep = arena::run_games([] { return std::make_unique<arena::RandomPlayer>(); },
                                          [] { return stub({}, {{"Skill Level", "5"}}); }, sc, n, Rng(960), 1);
        int whites = 0;
        for (const auto& o : rep.outcomes)
            whites += o.model_color == chess::Color::White;
        seats = seats && whites == (n + 1) / 2;
    }
    ok = ok && seats;

    Rng rng(960);
    bool identity = true;
    for (int t = 0; t < 200; ++t)
    {
        std::vector<arena::GameOutcome> os(1 + rng.below(50));
        for (auto& o : os)
        {
            o.result = static_cast<arena::Result>(rng.below(5));
            if (o.result == arena::Result::ForfeitIllegal || o.result == arena::Result::ForfeitMalformed)
                o.termination = arena::Termination::Forfeit;
        }
        identity = identity && arena::fide_score(os) == arena::win_rate(os) + 0.5 * arena::draw_rate(os);
    }
    ok = ok && identity;
    return {ok, fmt("forfeit on first illegal: %s; 90-turn adjudication: %s (cp 0 -> %.4f, cp 100 -> %.4f); "
                    "seat swap ceil(n/2): %s; fide = win + draw/2 exactly: %s",
                    forfeit ? "yes" : "no", ninety ? "yes" : "no", p0, p100, seats ? "yes" : "no",
                    identity ? "yes" : "no")};
}

Verdict stylometry_oracles()
{
    const auto t0 = std::chrono::steady_clock::now();
    // Leave-one-out centroids against an explicit average.
    double loo_err = 0;
    Rng zr(3);
    for (auto [n, m] : {std::pair{2, 2}, {3, 4}, {5, 7}})
    {
        Tensor z(n * m, 6);
        for (double& v : z.data)
            v = zr.normal();
        const auto c = stylo::centroids(z, n, m);
        for (int r = 0; r < n * m; ++r)
            for (int i = 0; i < 6; ++i)
            {
                double brute = 0;
                for (int g = 0; g < m; ++g)
                    if ((r / m) * m + g != r)
                        brute += z((r / m) * m + g, i);
                loo_err = std::max(loo_err, std::abs(c.loo(r, i) - brute / (m - 1)));
            }
    }
    double logn_err = 0;
    for (int n : {2, 3, 5})
    {
        Tensor z(n * 3, 4);
        for (int r = 0; r < z.rows; ++r)
            z.row(r)[0] = 1.0;
        logn_err = std::max(logn_err,
                            std::abs(stylo::stylometry_loss(z, n, 3, 8.5, -10, {}).infonce - std::log(double(n))));
    }

    // Three synthetic styles: train, build centroids from reference games, score held-out games.
    stylo::StyloConfig cfg;
    const auto styles = synth::builtin_styles();
    std::vector<stylo::PlayerGames> train, ref, eval;
    for (int s = 0; s < 3; ++s)
    {
        const auto all = synth::generate_corpus(styles[s], 100, 40, 80, Rng(960).split(s), styles[s].name);
        train.push_back({styles[s].name, {all.begin(), all.begin() + 40}});
        ref.push_back({styles[s].name, {all.begin() + 40, all.begin() + 70}});
        eval.push_back({styles[s].name, {all.begin() + 70, all.end()}});
    }
    stylo::Encoder enc = stylo::Encoder::init(cfg, 960);
    stylo::train(enc, train, Rng(960));
    std::vector<std::vector<double>> cents;
    for (int s = 0; s < 3; ++s)
    {
        std::vector<std::vector<double>> zs;
        for (const auto& r : stylo::embed_games(enc, "ref", ref[s].games, Rng(1).split(s)))
            zs.push_back(r.z);
        cents.push_back(stylo::mean_embedding(zs));
    }
    double recall = 0;
    for (int s = 0; s < 3; ++s)
    {
        std::vector<std::vector<double>> zs;
        for (const auto& r : stylo::embed_games(enc, "eval", eval[s].games, Rng(2).split(s)))
            zs.push_back(r.z);
        recall += stylo::acquisition_recall(zs, cents, static_cast<std::size_t>(s), 1) / 3;
    }
    const double secs = seconds_since(t0);
    return {loo_err <= 1e-9 && logn_err <= 1e-9 && recall > 1.0 / 3 && secs < 600,
            fmt("leave-one-out error %.1e; degenerate InfoNCE - ln N %.1e; 3-style recall@1 %.3f (chance 0.333); %.0fs",
                loo_err, logn_err, recall, secs)};
}

std::map<std::string, std::string> manifests(const fs::path& out)
{
    std::map<std::string, std::string> m;
    for (auto s : pipeline::all_stages())
        m[pipeline::stage_name(s)] = pipeline::read_file(out / pipeline::stage_name(s) / "manifest.json");
    return m;
}

Verdict end_to_end()
{
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path root = fs::temp_directory_path() / ("mom_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    pipeline::RunConfig c = pipeline::toy_config();
    const pipeline::Environment env{MOM_STUB_ENGINE, {}, 1, nullptr};
    std::map<std::string, std::string> runs[2];
    std::string report;
    for (int i = 0; i < 2; ++i)
    {
        c.out_dir = (root / ("run" + std::to_string(i))).string();
        pipeline::run_all(c, env);
        runs[i] = manifests(c.out_dir);
        report = pipeline::read_file(fs::path(c.out_dir) / "report" / "report.txt");
    }
    fs::remove_all(root);
    const double secs = seconds_since(t0);
    const bool identical = runs[0] == runs[1];
    return {identical && report.find("FIDEScore") != std::string::npos && c.data.players.size() == 2 &&
                c.data.players[0].games == 50 && secs < 1800,
            fmt("two toy runs (2 experts x 50 games, stub engine): %zu manifests %s; FIDEScore table %s; %.0fs",
                runs[0].size(), identical ? "byte-identical" : "DIFFER",
                report.find("FIDEScore") != std::string::npos ? "present" : "missing", secs)};
}

} // namespace

int main()
{
    int failures = 0;
    auto run = [&](const char* name, const std::function<Verdict()>& f) {
        Verdict v;
        try
        {
            v = f();
        }
        catch (const std::exception& e)
        {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += !v.pass;
        std::printf("%s  %-26s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
    };
    run("movegen-oracle", movegen_oracle);
    run("reward-partition", reward_partition);
    run("gradient-checks", gradient_checks);
    std::optional<GrpoPair> pair;
    run("grpo-reward-gain", [&] {
        pair = train_grpo_pair();
        return grpo_reproduction(*pair);
    });
    run("grpo-legality-direction", [&] {
        if (!pair)
            return Verdict{false, "GRPO training did not complete"};
        return legality_direction(*pair);
    });
    run("stitching-identity", stitching_identity);
    run("routing-contracts", routing_contracts);
    run("router-label-recovery", router_label_recovery);
    run("battle-conformance", battle_conformance);
    run("stylometry-oracles", stylometry_oracles);
    run("end-to-end-smoke", end_to_end);
    std::printf("%d of 11 criteria passed\n", 11 - failures);
    return failures == 0 ? 0 : 1;
}
