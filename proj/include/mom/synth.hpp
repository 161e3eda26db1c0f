#pragma once

#include "mom/pgn.hpp"
#include "mom/rng.hpp"

#include <string>
#include <vector>

namespace mom::synth
{

/// A scripted playing style: a fixed opening line followed by moves sampled from a softmax
/// over simple move features.
struct Style
{
    std::string name;
    std::vector<std::string> opening; // SAN plies from the initial position, both colors
    double capture = 0.0;
    double check = 0.0;
    double pawn = 0.0;
    double advance = 0.0;  // rank progress toward the opponent
    double king_side = 0.0; // destination on files e-h
    double temperature = 1.0;
};

/// Three clearly separated built-in styles: "aggressor", "builder", "shuffler".
std::vector<Style> builtin_styles();

/// Plays a game where the target side follows `style` and the opponent plays uniformly random
/// legal moves (both sides follow the opening line). Ends at mate, stalemate, or `max_plies`.
chess::GameRecord generate_game(const Style& style, chess::Color target, int max_plies, Rng& rng,
                                const std::string& player_name);

/// `count` games alternating target color, with plies drawn from [min_plies, max_plies].
std::vector<chess::GameRecord> generate_corpus(const Style& style, int count, int min_plies, int max_plies, Rng rng,
                                               const std::string& player_name);

} // namespace mom::synth
