#pragma once

#include "mom/chess.hpp"

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mom::chess
{

enum class GameResult
{
    WhiteWin,
    BlackWin,
    Draw,
    Unfinished
};

std::string result_string(GameResult r);

struct GameRecord
{
    std::vector<std::pair<std::string, std::string>> tags; // in file order
    std::vector<Move> moves;
    std::vector<std::string> sans; // canonical SAN, parallel to `moves`
    Color target_color = Color::White;
    GameResult result = GameResult::Unfinished;

    std::string tag(std::string_view key) const;
    void set_tag(const std::string& key, const std::string& value);

    std::size_t plies() const { return moves.size(); }
    /// Completed full moves: a White move followed by a Black reply.
    std::size_t full_moves() const { return moves.size() / 2; }

    Position final_position() const;
    void push(const Position& before, const Move& m);
};

struct PgnError
{
    std::size_t game_index = 0; // 0-based index of the game in the stream
    std::string message;
};

struct PgnParseResult
{
    std::vector<GameRecord> games;
    std::vector<PgnError> errors;
};

/// Parses a stream of PGN games. Comments, variations, NAGs and move-quality glyphs are
/// dropped; a game that fails to replay is reported in `errors` and skipped. When
/// `target_player` is non-empty, a record's target color is the side whose White/Black
/// tag equals it.
PgnParseResult parse_pgn(std::string_view text, std::string_view target_player = {});

/// Movetext without result token: "1. e4 e5 2. Nf3".
std::string movetext(const GameRecord& game);
std::string write_pgn(const GameRecord& game);

} // namespace mom::chess
