#include "mom/arena.hpp"

#include "mom/dataset.hpp"
#include "mom/san.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <thread>

namespace mom::arena
{

using chess::Color;
using chess::GameResult;
using chess::GameRecord;
using chess::Move;
using chess::Position;

namespace
{

constexpr int kMateCp = 100000;

} // namespace

std::string result_name(Result r)
{
    switch (r)
    {
    case Result::ModelWin: return "model_win";
    case Result::ModelLoss: return "model_loss";
    case Result::Draw: return "draw";
    case Result::ForfeitIllegal: return "forfeit_illegal";
    case Result::ForfeitMalformed: return "forfeit_malformed";
    }
    return "draw";
}

std::string termination_name(Termination t)
{
    switch (t)
    {
    case Termination::Mate: return "mate";
    case Termination::Stalemate: return "stalemate";
    case Termination::Repetition: return "repetition";
    case Termination::FiftyMove: return "fifty_move";
    case Termination::Adjudicated: return "adjudicated";
    case Termination::Forfeit: return "forfeit";
    }
    return "adjudicated";
}

void BattleConfig::validate() const
{
    if (node_limit <= 0 || max_turns <= 0 || games_per_run <= 0 || runs <= 0 || opening_plies < 0 ||
        opening_top_n <= 0 || !(opening_temp > 0) || draw_margin < 0)
        throw std::invalid_argument("battle configuration values must be positive");
}

std::vector<TokenId> context_window(const GameRecord& history, std::size_t ply, int context_len)
{
    const auto limit = static_cast<std::size_t>(context_len - kMaxMoveTokens);
    std::size_t start = 0;
    std::string text;
    for (std::size_t q = 0; q <= ply; ++q)
    {
        text = dataset::prefix_text(history, q);
        if (text.size() - start > limit)
            start = text.size() - static_cast<std::size_t>(context_len / 2);
    }
    return Vocab::instance().encode(std::string_view(text).substr(start));
}

ModelPlayer::ModelPlayer(const Model& model, DecodePolicy policy) : model_(model), policy_(policy), decoder_(model) {}

MovePlayer::Proposal ModelPlayer::propose(const GameRecord& history, const Position&, Rng& rng)
{
    const auto want = context_window(history, history.plies(), model_.config.context_len);
    const bool extends = fed_.size() <= want.size() && std::equal(fed_.begin(), fed_.end(), want.begin());
    if (!extends)
    {
        decoder_.reset();
        fed_.clear();
    }
    for (std::size_t i = fed_.size(); i < want.size(); ++i)
        decoder_.feed(want[i]);
    fed_ = want;
    const GeneratedMove mv = generate_move(decoder_, policy_, rng);
    fed_.insert(fed_.end(), mv.tokens.begin(), mv.tokens.end());
    return {mv.text, mv.terminated};
}

MovePlayer::Proposal RandomPlayer::propose(const GameRecord&, const Position& pos, Rng& rng)
{
    const auto moves = pos.legal_moves();
    if (moves.empty())
        return {"", false};
    return {chess::to_san(pos, moves[rng.below(moves.size())]), true};
}

MovePlayer::Proposal ScriptedPlayer::propose(const GameRecord& history, const Position&, Rng&)
{
    if (moves_.empty())
        return {"", false};
    const std::size_t own = history.plies() / 2;
    return {moves_[std::min(own, moves_.size() - 1)], true};
}

double win_probability(double cp)
{
    return 100.0 / (1.0 + std::exp(-0.00368208 * cp));
}

std::size_t sample_candidate(const std::vector<uci::InfoLine>& lines, double temp, Rng& rng)
{
    if (lines.empty())
        throw std::invalid_argument("no candidates to sample from");
    std::vector<double> score;
    for (const auto& l : lines)
        score.push_back(l.mate ? (*l.mate > 0 ? 10000.0 : -10000.0) : static_cast<double>(l.cp.value_or(0)));
    const double mx = *std::max_element(score.begin(), score.end());
    std::vector<double> w;
    for (double s : score)
        w.push_back(std::exp((s - mx) / 100.0 / temp));
    return rng.categorical(w);
}

std::string condition_opening(uci::UciSession& session, const std::string& position_command, int top_n, double temp,
                              long node_limit, Rng& rng)
{
    session.set_option("MultiPV", std::to_string(top_n));
    const uci::SearchResult res = session.search(position_command, "go nodes " + std::to_string(node_limit));
    session.set_option("MultiPV", "1");
    std::vector<uci::InfoLine> lines;
    for (const auto& l : res.lines)
        if (!l.pv.empty())
            lines.push_back(l);
    if (lines.empty())
        return res.bestmove;
    return lines[sample_candidate(lines, temp, rng)].pv.front();
}

GameOutcome play_game(MovePlayer& player, uci::UciSession& session, const BattleConfig& config, Color model_color,
                      Rng rng)
{
    session.new_game();
    GameRecord rec;
    rec.set_tag("Event", "battle");
    rec.set_tag("White", model_color == Color::White ? "model" : "engine");
    rec.set_tag("Black", model_color == Color::Black ? "model" : "engine");
    rec.target_color = model_color;
    Position pos = Position::initial();
    std::map<std::string, int> seen{{pos.repetition_key(), 1}};
    std::vector<std::string> uci_moves;
    int engine_moves = 0;
    Rng opening_rng = rng.split("opening");
    Rng player_rng = rng.split("player");

    GameOutcome out;
    out.model_color = model_color;
    auto finish = [&](Result r, Termination t) {
        out.result = r;
        out.termination = t;
        GameResult gr = GameResult::Draw;
        if (r == Result::ModelWin)
            gr = model_color == Color::White ? GameResult::WhiteWin : GameResult::BlackWin;
        else if (r != Result::Draw)
            gr = model_color == Color::White ? GameResult::BlackWin : GameResult::WhiteWin;
        rec.result = gr;
        rec.set_tag("Result", chess::result_string(gr));
        rec.set_tag("Termination", termination_name(t));
        out.pgn = chess::write_pgn(rec);
        return out;
    };

    while (true)
    {
        const bool model_to_move = pos.side_to_move() == model_color;
        if (pos.legal_moves().empty())
        {
            if (!pos.in_check())
                return finish(Result::Draw, Termination::Stalemate);
            return finish(model_to_move ? Result::ModelLoss : Result::ModelWin, Termination::Mate);
        }
        if (seen[pos.repetition_key()] >= 3)
            return finish(Result::Draw, Termination::Repetition);
        if (pos.halfmove_clock() >= 100)
            return finish(Result::Draw, Termination::FiftyMove);
        if (rec.plies() >= 2 * static_cast<std::size_t>(config.max_turns))
        {
            const auto res = session.search(uci::position_command(uci_moves),
                                            "go nodes " + std::to_string(config.node_limit));
            int cp = 0;
            if (!res.lines.empty())
            {
                const auto& l = res.lines.front();
                cp = l.mate ? (*l.mate > 0 ? kMateCp : -kMateCp) : l.cp.value_or(0);
            }
            if (!model_to_move)
                cp = -cp;
            out.final_cp = cp;
            const double p = win_probability(cp);
            const Result r = p > 50.0 + config.draw_margin   ? Result::ModelWin
                             : p < 50.0 - config.draw_margin ? Result::ModelLoss
                                                             : Result::Draw;
            return finish(r, Termination::Adjudicated);
        }

        Move m;
        if (model_to_move)
        {
            const auto prop = player.propose(rec, pos, player_rng);
            if (!prop.terminated || !chess::is_well_formed_san(prop.text))
            {
                out.offending_move = prop.text;
                return finish(Result::ForfeitMalformed, Termination::Forfeit);
            }
            try
            {
                m = chess::parse_san(pos, prop.text);
            }
            catch (const chess::SanError&)
            {
                out.offending_move = prop.text;
                return finish(Result::ForfeitIllegal, Termination::Forfeit);
            }
        }
        else
        {
            std::string u;
            const std::string position = uci::position_command(uci_moves);
            if (engine_moves < config.opening_plies)
                u = condition_opening(session, position, config.opening_top_n, config.opening_temp, config.node_limit,
                                      opening_rng);
            else
                u = session.search(position, "go nodes " + std::to_string(config.node_limit)).bestmove;
            const auto parsed = chess::parse_uci(pos, u);
            if (!parsed)
                throw uci::ProtocolViolation("engine played an illegal move: " + u);
            m = *parsed;
            ++engine_moves;
        }
        rec.push(pos, m);
        uci_moves.push_back(m.uci());
        pos = pos.play(m);
        ++seen[pos.repetition_key()];
    }
}

RunReport run_games(const PlayerFactory& player, const SessionFactory& engine, const BattleConfig& config, int games,
                    Rng rng, int jobs)
{
    config.validate();
    jobs = std::clamp(jobs, 1, std::max(games, 1));
    std::vector<std::optional<GameOutcome>> results(static_cast<std::size_t>(std::max(games, 0)));
    std::vector<AbortedGame> aborted;
    std::mutex mu;
    auto worker = [&](int w) {
        std::unique_ptr<uci::UciSession> session;
        auto me = player();
        for (int i = w; i < games; i += jobs)
        {
            try
            {
                if (!session)
                    session = engine();
                const Color c = i % 2 == 0 ? Color::White : Color::Black;
                results[static_cast<std::size_t>(i)] = play_game(*me, *session, config, c, rng.split(i));
            }
            catch (const std::runtime_error& e)
            {
                session.reset();
                std::lock_guard lock(mu);
                aborted.push_back({i, e.what()});
            }
        }
    };
    if (jobs == 1)
        worker(0);
    else
    {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w)
            pool.emplace_back(worker, w);
        for (auto& t : pool)
            t.join();
    }
    RunReport rep;
    for (int i = 0; i < games; ++i)
        if (results[static_cast<std::size_t>(i)])
        {
            rep.outcomes.push_back(*results[static_cast<std::size_t>(i)]);
            rep.game_index.push_back(i);
        }
    std::sort(aborted.begin(), aborted.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    rep.aborted = std::move(aborted);
    return rep;
}

namespace
{

double share(const std::vector<GameOutcome>& outcomes, double win, double draw)
{
    if (outcomes.empty())
        throw EmptyInput("no games");
    double s = 0.0;
    for (const auto& o : outcomes)
        s += o.result == Result::ModelWin ? win : o.result == Result::Draw ? draw : 0.0;
    return 100.0 * s / static_cast<double>(outcomes.size());
}

} // namespace

double win_rate(const std::vector<GameOutcome>& outcomes)
{
    return share(outcomes, 1.0, 0.0);
}

double draw_rate(const std::vector<GameOutcome>& outcomes)
{
    return share(outcomes, 0.0, 1.0);
}

double fide_score(const std::vector<GameOutcome>& outcomes)
{
    return win_rate(outcomes) + 0.5 * draw_rate(outcomes);
}

double legality_rate(const std::vector<GameOutcome>& outcomes)
{
    if (outcomes.empty())
        throw EmptyInput("no games");
    const auto ok = std::count_if(outcomes.begin(), outcomes.end(),
                                  [](const GameOutcome& o) { return o.termination != Termination::Forfeit; });
    return 100.0 * static_cast<double>(ok) / static_cast<double>(outcomes.size());
}

double master_accuracy(MovePlayer& player, const std::vector<GameRecord>& test_set, int skip_opening_moves, Rng rng)
{
    std::size_t total = 0, hits = 0;
    for (const GameRecord& g : test_set)
    {
        Position pos = Position::initial();
        GameRecord history = g;
        for (std::size_t ply = 0; ply < g.plies(); ++ply)
        {
            if (pos.side_to_move() == g.target_color && pos.fullmove_number() > skip_opening_moves)
            {
                history.moves.assign(g.moves.begin(), g.moves.begin() + static_cast<std::ptrdiff_t>(ply));
                history.sans.assign(g.sans.begin(), g.sans.begin() + static_cast<std::ptrdiff_t>(ply));
                const auto prop = player.propose(history, pos, rng);
                ++total;
                hits += prop.terminated && prop.text == g.sans[ply];
            }
            pos = pos.play(g.moves[ply]);
        }
    }
    if (total == 0)
        throw EmptyEvaluationSet("no positions past the opening threshold");
    return 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

} // namespace mom::arena
