// Minimal deterministic UCI engine used by the test suite and toy pipelines.
//
// Flags:
//   --garbage        print noise lines before "uciok"
//   --die-in-handshake  exit as soon as "uci" arrives
//   --fixed-cp N     report every score as N centipawns
//   --random         play a uniformly random legal move (seeded)

#include "mom/chess.hpp"
#include "mom/hash.hpp"
#include "mom/rng.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace mom;
using namespace mom::chess;

namespace
{

constexpr int kMate = 100000;

struct Flags
{
    bool garbage = false;
    bool die_in_handshake = false;
    bool random = false;
    std::optional<int> fixed_cp;
};

int piece_value(PieceType t)
{
    switch (t)
    {
    case PieceType::Pawn: return 100;
    case PieceType::Knight: return 300;
    case PieceType::Bishop: return 310;
    case PieceType::Rook: return 500;
    case PieceType::Queen: return 900;
    default: return 0;
    }
}

// Material plus a small centralisation term, from the side to move's view.
int evaluate(const Position& pos)
{
    int score = 0;
    for (int sq = 0; sq < 64; ++sq)
    {
        const Piece p = pos.piece_at(sq);
        if (p == Piece::None)
            continue;
        const int f = file_of(sq), r = rank_of(sq);
        const int centre = 6 - (std::abs(2 * f - 7) + std::abs(2 * r - 7)) / 2;
        int v = piece_value(type_of(p));
        if (type_of(p) == PieceType::Knight || type_of(p) == PieceType::Bishop || type_of(p) == PieceType::Pawn)
            v += 2 * centre;
        score += color_of(p) == pos.side_to_move() ? v : -v;
    }
    return score;
}

class Engine
{
public:
    explicit Engine(Flags flags) : flags_(flags) {}

    void run()
    {
        std::string line;
        while (std::getline(std::cin, line))
        {
            std::istringstream in(line);
            std::string cmd;
            in >> cmd;
            if (cmd == "uci")
            {
                if (flags_.die_in_handshake)
                    std::exit(0);
                if (flags_.garbage)
                    out("hello from a chatty engine\n\x01\x02 garbage ~~~\ninfo string warming up");
                out("id name mom-stub\nid author mom\n"
                    "option name Skill Level type spin default 20 min 0 max 20\n"
                    "option name MultiPV type spin default 1 min 1 max 5\n"
                    "option name Seed type spin default 0 min 0 max 2147483647\n"
                    "uciok");
            }
            else if (cmd == "isready")
                out("readyok");
            else if (cmd == "setoption")
                set_option(line);
            else if (cmd == "ucinewgame")
                pos_ = Position::initial();
            else if (cmd == "position")
            {
                try
                {
                    set_position(in);
                }
                catch (const std::exception& e)
                {
                    out(std::string("info string bad position: ") + e.what());
                }
            }
            else if (cmd == "go")
                go(in);
            else if (cmd == "quit")
                return;
        }
    }

private:
    static void out(const std::string& s) { std::cout << s << std::endl; }

    void set_option(const std::string& line)
    {
        const auto n = line.find("name ");
        const auto v = line.find(" value ");
        if (n == std::string::npos || v == std::string::npos)
            return;
        const std::string name = line.substr(n + 5, v - n - 5);
        const long value = std::atol(line.c_str() + v + 7);
        if (name == "Skill Level")
            skill_ = static_cast<int>(std::clamp(value, 0L, 20L));
        else if (name == "MultiPV")
            multipv_ = static_cast<int>(std::clamp(value, 1L, 5L));
        else if (name == "Seed")
            seed_ = static_cast<std::uint64_t>(value);
    }

    void set_position(std::istringstream& in)
    {
        std::string word;
        in >> word;
        if (word == "startpos")
        {
            pos_ = Position::initial();
            in >> word;
        }
        else if (word == "fen")
        {
            std::string fen, part;
            while (in >> part && part != "moves")
                fen += (fen.empty() ? "" : " ") + part;
            pos_ = Position::from_fen(fen);
            word = part;
        }
        if (word == "moves")
        {
            std::string mv;
            while (in >> mv)
            {
                auto m = parse_uci(pos_, mv);
                if (!m)
                {
                    out("info string illegal move " + mv);
                    return;
                }
                pos_ = pos_.play(*m);
            }
        }
    }

    int negamax(const Position& pos, int depth, int alpha, int beta, int ply)
    {
        ++nodes_;
        const auto moves = pos.legal_moves();
        if (moves.empty())
            return pos.in_check() ? -(kMate - ply) : 0;
        if (depth == 0)
            return evaluate(pos);
        for (const Move& m : moves)
        {
            const int s = -negamax(pos.play(m), depth - 1, -beta, -alpha, ply + 1);
            if (s >= beta)
                return s;
            alpha = std::max(alpha, s);
        }
        return alpha;
    }

    // True if the side to move mates within `plies` (odd) plies; fills the first move.
    bool mates_within(const Position& pos, int plies, Move* first)
    {
        if (plies <= 0 || ++nodes_ > kMateNodeBudget)
            return false;
        for (const Move& m : pos.legal_moves())
        {
            const Position next = pos.play(m);
            const auto replies = next.legal_moves();
            if (replies.empty())
            {
                if (next.in_check())
                {
                    if (first)
                        *first = m;
                    return true;
                }
                continue;
            }
            if (plies < 3)
                continue;
            bool all = true;
            for (const Move& r : replies)
                if (!mates_within(next.play(r), plies - 2, nullptr))
                {
                    all = false;
                    break;
                }
            if (all)
            {
                if (first)
                    *first = m;
                return true;
            }
        }
        return false;
    }

    // Shortest mate (in moves) for the side to move, capped by max_moves and the node budget.
    std::optional<int> shortest_mate(const Position& pos, int max_moves, Move* first)
    {
        for (int n = 1; n <= max_moves; ++n)
        {
            if (nodes_ > kMateNodeBudget)
                return std::nullopt;
            if (mates_within(pos, 2 * n - 1, first))
                return n;
        }
        return std::nullopt;
    }

    void go_mate(int max_moves)
    {
        nodes_ = 0;
        Move first;
        auto n = shortest_mate(pos_, max_moves, &first);
        if (!n)
        {
            nodes_ = 0;
            go_search(2);
            return;
        }
        // Principal variation: defender prolongs the mate as long as possible.
        std::vector<std::string> pv;
        Position p = pos_;
        int left = *n;
        Move attack = first;
        while (true)
        {
            pv.push_back(attack.uci());
            p = p.play(attack);
            const auto replies = p.legal_moves();
            if (replies.empty() || left == 1)
                break;
            Move best_reply = replies.front(), best_attack;
            int longest = 0;
            for (const Move& r : replies)
            {
                nodes_ = 0;
                Move a;
                const auto k = shortest_mate(p.play(r), left - 1, &a);
                if (k && *k > longest)
                {
                    longest = *k;
                    best_reply = r;
                    best_attack = a;
                }
            }
            if (longest == 0)
                break;
            pv.push_back(best_reply.uci());
            p = p.play(best_reply);
            attack = best_attack;
            left = longest;
        }
        std::string line = "info depth " + std::to_string(2 * *n - 1) + " score mate " + std::to_string(*n) + " pv";
        for (const auto& m : pv)
            line += " " + m;
        out(line);
        out("bestmove " + pv.front());
    }

    std::string score_text(int s) const
    {
        if (std::abs(s) >= kMate - 1000)
        {
            const int plies = kMate - std::abs(s);
            const int moves = (plies + 1) / 2;
            return "mate " + std::to_string(s > 0 ? moves : -moves);
        }
        return "cp " + std::to_string(flags_.fixed_cp ? *flags_.fixed_cp : s);
    }

    void go_search(int depth)
    {
        const auto moves = pos_.legal_moves();
        if (moves.empty())
        {
            out("info depth 0 score " + score_text(pos_.in_check() ? -kMate : 0));
            out("bestmove (none)");
            return;
        }
        Rng rng = Rng(seed_).split(fnv1a64(pos_.fen()));
        if (flags_.random)
        {
            const Move& m = moves[rng.below(moves.size())];
            out("info depth 1 score " + score_text(0) + " pv " + m.uci());
            out("bestmove " + m.uci());
            return;
        }
        struct Scored
        {
            Move move;
            int score;
            double noisy;
        };
        std::vector<Scored> scored;
        const double noise = (20 - skill_) * 15.0;
        for (const Move& m : moves)
        {
            const int s = -negamax(pos_.play(m), depth - 1, -kMate - 1, kMate + 1, 1);
            scored.push_back({m, s, s + noise * rng.uniform()});
            if (nodes_ > node_limit_)
                break;
        }
        std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.noisy > b.noisy; });
        const int n = std::min<int>(multipv_, static_cast<int>(scored.size()));
        for (int i = 0; i < n; ++i)
            out("info depth " + std::to_string(depth) + " multipv " + std::to_string(i + 1) + " score " +
                score_text(scored[i].score) + " nodes " + std::to_string(nodes_) + " pv " + scored[i].move.uci());
        out("bestmove " + scored.front().move.uci());
    }

    void go(std::istringstream& in)
    {
        std::string word;
        std::optional<int> mate, depth;
        node_limit_ = 100000;
        while (in >> word)
        {
            long v = 0;
            if (word == "nodes" && in >> v)
                node_limit_ = v;
            else if (word == "mate" && in >> v)
                mate = static_cast<int>(v);
            else if (word == "depth" && in >> v)
                depth = static_cast<int>(v);
        }
        nodes_ = 0;
        if (mate)
            go_mate(*mate);
        else
            go_search(depth.value_or(skill_ >= 10 ? 2 : 1));
    }

    static constexpr long kMateNodeBudget = 30000;
    Flags flags_;
    Position pos_ = Position::initial();
    int skill_ = 20;
    int multipv_ = 1;
    std::uint64_t seed_ = 0;
    long nodes_ = 0;
    long node_limit_ = 100000;
};

} // namespace

int main(int argc, char** argv)
{
    Flags flags;
    for (int i = 1; i < argc; ++i)
    {
        const std::string a = argv[i];
        if (a == "--garbage")
            flags.garbage = true;
        else if (a == "--die-in-handshake")
            flags.die_in_handshake = true;
        else if (a == "--random")
            flags.random = true;
        else if (a == "--fixed-cp" && i + 1 < argc)
            flags.fixed_cp = std::atoi(argv[++i]);
        else
        {
            std::cerr << "unknown flag " << a << "\n";
            return 2;
        }
    }
    std::ios::sync_with_stdio(false);
    Engine(flags).run();
    return 0;
}
