#pragma once

// Brute-force move generator used only as a test oracle. It shares no code with
// mom::chess: every (from, to, promotion) triple is tried against plain geometric rules
// and then filtered by an exhaustive "can any enemy piece reach my king" scan.

#include <cstdint>
#include <string>
#include <vector>

namespace reference
{

struct Board
{
    char sq[64]; // FEN letters, '.' for empty; index 0 = a1
    bool white_to_move = true;
    bool castle[4] = {false, false, false, false}; // K Q k q
    int ep = -1;
};

struct RefMove
{
    int from, to;
    char promo; // 0 or one of "qrbn"
    std::string uci() const;
};

Board from_fen(const std::string& fen);
std::vector<RefMove> legal_moves(const Board& b);
Board apply(const Board& b, const RefMove& m);
std::uint64_t perft(const Board& b, int depth);

} // namespace reference
