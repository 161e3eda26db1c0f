#include "mom/synth.hpp"

#include "mom/san.hpp"

#include <cmath>

namespace mom::synth
{

using chess::Color;
using chess::GameRecord;
using chess::GameResult;
using chess::Move;
using chess::Position;

std::vector<Style> builtin_styles()
{
    Style a{"aggressor", {"e4", "e5", "Nf3", "Nc6"}, 2.5, 2.0, 0.0, 0.6, 0.5, 0.5};
    Style b{"builder", {"d4", "d5", "c4", "e6"}, -1.0, -0.5, 1.5, 0.2, -0.8, 0.5};
    Style c{"shuffler", {"c4", "c5", "g3", "g6"}, 0.0, 0.0, -1.5, -0.8, 0.8, 0.5};
    return {a, b, c};
}

namespace
{

double features(const Style& s, const Position& pos, const Move& m)
{
    const chess::Piece mover = pos.piece_at(m.from);
    const bool capture = pos.piece_at(m.to) != chess::Piece::None ||
                         (chess::type_of(mover) == chess::PieceType::Pawn && chess::file_of(m.from) != chess::file_of(m.to));
    const Position next = pos.play(m);
    const int forward = pos.side_to_move() == Color::White ? chess::rank_of(m.to) - chess::rank_of(m.from)
                                                           : chess::rank_of(m.from) - chess::rank_of(m.to);
    double score = 0.0;
    score += s.capture * capture;
    score += s.check * next.in_check();
    score += s.pawn * (chess::type_of(mover) == chess::PieceType::Pawn);
    score += s.advance * forward;
    score += s.king_side * (chess::file_of(m.to) >= 4);
    return score;
}

GameResult terminal_result(const Position& pos)
{
    if (pos.is_checkmate())
        return pos.side_to_move() == Color::White ? GameResult::BlackWin : GameResult::WhiteWin;
    if (pos.is_stalemate())
        return GameResult::Draw;
    return GameResult::Unfinished;
}

} // namespace

GameRecord generate_game(const Style& style, Color target, int max_plies, Rng& rng, const std::string& player_name)
{
    GameRecord g;
    g.set_tag("Event", "synthetic");
    g.set_tag("White", target == Color::White ? player_name : "opponent");
    g.set_tag("Black", target == Color::Black ? player_name : "opponent");
    g.target_color = target;
    Position pos = Position::initial();
    for (int ply = 0; ply < max_plies; ++ply)
    {
        const auto moves = pos.legal_moves();
        if (moves.empty())
            break;
        Move chosen;
        if (ply < static_cast<int>(style.opening.size()))
            chosen = chess::parse_san(pos, style.opening[ply]);
        else if (pos.side_to_move() == target)
        {
            std::vector<double> w(moves.size());
            double mx = -INFINITY;
            for (std::size_t i = 0; i < moves.size(); ++i)
                mx = std::max(mx, w[i] = features(style, pos, moves[i]) / style.temperature);
            for (double& v : w)
                v = std::exp(v - mx);
            chosen = moves[rng.categorical(w)];
        }
        else
            chosen = moves[rng.below(moves.size())];
        g.push(pos, chosen);
        pos = pos.play(chosen);
    }
    g.result = terminal_result(pos);
    g.set_tag("Result", chess::result_string(g.result));
    return g;
}

std::vector<GameRecord> generate_corpus(const Style& style, int count, int min_plies, int max_plies, Rng rng,
                                        const std::string& player_name)
{
    std::vector<GameRecord> out;
    for (int i = 0; i < count; ++i)
    {
        Rng game_rng = rng.split(static_cast<std::uint64_t>(i));
        const int plies = min_plies + static_cast<int>(game_rng.below(static_cast<std::uint64_t>(max_plies - min_plies + 1)));
        out.push_back(generate_game(style, i % 2 == 0 ? Color::White : Color::Black, plies, game_rng, player_name));
    }
    return out;
}

} // namespace mom::synth
