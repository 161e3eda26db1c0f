#include "reference_movegen.hpp"

#include <cctype>
#include <cstdlib>
#include <sstream>

namespace reference
{
namespace
{

bool is_white(char c) { return c >= 'A' && c <= 'Z'; }
bool is_black(char c) { return c >= 'a' && c <= 'z'; }
bool own(char c, bool white) { return white ? is_white(c) : is_black(c); }

// Squares strictly between a and b along a line must be empty.
bool path_clear(const Board& b, int from, int to)
{
    const int df = (to % 8) - (from % 8), dr = (to / 8) - (from / 8);
    const int sf = (df > 0) - (df < 0), sr = (dr > 0) - (dr < 0);
    int f = from % 8 + sf, r = from / 8 + sr;
    while (f + 8 * r != to)
    {
        if (b.sq[f + 8 * r] != '.')
            return false;
        f += sf;
        r += sr;
    }
    return true;
}

// Can the piece on `from` capture/move onto `to` ignoring pins and castling?
bool reaches(const Board& b, int from, int to, bool for_capture)
{
    const char p = b.sq[from];
    const bool white = is_white(p);
    const int df = (to % 8) - (from % 8), dr = (to / 8) - (from / 8);
    const int adf = std::abs(df), adr = std::abs(dr);
    if (from == to)
        return false;
    switch (std::tolower(p))
    {
    case 'n': return (adf == 1 && adr == 2) || (adf == 2 && adr == 1);
    case 'k': return adf <= 1 && adr <= 1;
    case 'r': return (df == 0 || dr == 0) && path_clear(b, from, to);
    case 'b': return adf == adr && path_clear(b, from, to);
    case 'q': return (df == 0 || dr == 0 || adf == adr) && path_clear(b, from, to);
    case 'p': {
        const int fwd = white ? 1 : -1;
        if (for_capture)
            return adf == 1 && dr == fwd;
        if (df != 0)
            return false;
        if (dr == fwd)
            return b.sq[to] == '.';
        const int start = white ? 1 : 6;
        return dr == 2 * fwd && from / 8 == start && b.sq[from + 8 * fwd] == '.' && b.sq[to] == '.';
    }
    default: return false;
    }
}

bool square_attacked(const Board& b, int target, bool by_white)
{
    for (int s = 0; s < 64; ++s)
        if (b.sq[s] != '.' && own(b.sq[s], by_white) && reaches(b, s, target, true))
            return true;
    return false;
}

int find_king(const Board& b, bool white)
{
    for (int s = 0; s < 64; ++s)
        if (b.sq[s] == (white ? 'K' : 'k'))
            return s;
    return -1;
}

} // namespace

std::string RefMove::uci() const
{
    std::string s;
    s += static_cast<char>('a' + from % 8);
    s += static_cast<char>('1' + from / 8);
    s += static_cast<char>('a' + to % 8);
    s += static_cast<char>('1' + to / 8);
    if (promo)
        s += promo;
    return s;
}

Board from_fen(const std::string& fen)
{
    Board b;
    for (char& c : b.sq)
        c = '.';
    std::istringstream in(fen);
    std::string placement, side, castling, ep;
    in >> placement >> side >> castling >> ep;
    int rank = 7, file = 0;
    for (char c : placement)
    {
        if (c == '/')
        {
            --rank;
            file = 0;
        }
        else if (std::isdigit(static_cast<unsigned char>(c)))
            file += c - '0';
        else
            b.sq[rank * 8 + file++] = c;
    }
    b.white_to_move = side == "w";
    for (char c : castling)
    {
        if (c == 'K') b.castle[0] = true;
        if (c == 'Q') b.castle[1] = true;
        if (c == 'k') b.castle[2] = true;
        if (c == 'q') b.castle[3] = true;
    }
    if (ep != "-")
        b.ep = (ep[1] - '1') * 8 + (ep[0] - 'a');
    return b;
}

Board apply(const Board& b, const RefMove& m)
{
    Board n = b;
    const char p = b.sq[m.from];
    const bool white = is_white(p);
    n.sq[m.to] = m.promo ? (white ? static_cast<char>(std::toupper(m.promo)) : m.promo) : p;
    n.sq[m.from] = '.';
    if (std::tolower(p) == 'p' && m.to == b.ep)
        n.sq[m.to + (white ? -8 : 8)] = '.';
    if (std::tolower(p) == 'k' && std::abs(m.to - m.from) == 2)
    {
        const int rook_from = m.to > m.from ? m.from + 3 : m.from - 4;
        const int rook_to = m.to > m.from ? m.from + 1 : m.from - 1;
        n.sq[rook_to] = n.sq[rook_from];
        n.sq[rook_from] = '.';
    }
    n.ep = (std::tolower(p) == 'p' && std::abs(m.to - m.from) == 16) ? (m.from + m.to) / 2 : -1;
    for (int s : {m.from, m.to})
    {
        if (s == 4) n.castle[0] = n.castle[1] = false;
        if (s == 60) n.castle[2] = n.castle[3] = false;
        if (s == 7) n.castle[0] = false;
        if (s == 0) n.castle[1] = false;
        if (s == 63) n.castle[2] = false;
        if (s == 56) n.castle[3] = false;
    }
    n.white_to_move = !b.white_to_move;
    return n;
}

std::vector<RefMove> legal_moves(const Board& b)
{
    const bool white = b.white_to_move;
    std::vector<RefMove> out;
    for (int from = 0; from < 64; ++from)
    {
        const char p = b.sq[from];
        if (p == '.' || !own(p, white))
            continue;
        for (int to = 0; to < 64; ++to)
        {
            if (to == from || (b.sq[to] != '.' && own(b.sq[to], white)))
                continue;
            bool ok;
            if (std::tolower(p) == 'p' && to % 8 != from % 8)
                ok = reaches(b, from, to, true) && (b.sq[to] != '.' || to == b.ep);
            else
                ok = reaches(b, from, to, false);
            if (!ok)
                continue;
            const bool promotes = std::tolower(p) == 'p' && (to / 8 == 0 || to / 8 == 7);
            const char* promos = promotes ? "qrbn" : "";
            const int n_promos = promotes ? 4 : 1;
            for (int i = 0; i < n_promos; ++i)
            {
                RefMove m{from, to, promotes ? promos[i] : static_cast<char>(0)};
                const Board after = apply(b, m);
                if (!square_attacked(after, find_king(after, white), !white))
                    out.push_back(m);
            }
        }
        // Castling.
        if (std::tolower(p) == 'k')
        {
            const int home = white ? 4 : 60;
            const char rook = white ? 'R' : 'r';
            if (from != home)
                continue;
            const bool ks = b.castle[white ? 0 : 2], qs = b.castle[white ? 1 : 3];
            if (ks && b.sq[home + 3] == rook && b.sq[home + 1] == '.' && b.sq[home + 2] == '.' &&
                !square_attacked(b, home, !white) && !square_attacked(b, home + 1, !white) &&
                !square_attacked(b, home + 2, !white))
                out.push_back({home, home + 2, 0});
            if (qs && b.sq[home - 4] == rook && b.sq[home - 1] == '.' && b.sq[home - 2] == '.' &&
                b.sq[home - 3] == '.' && !square_attacked(b, home, !white) && !square_attacked(b, home - 1, !white) &&
                !square_attacked(b, home - 2, !white))
                out.push_back({home, home - 2, 0});
        }
    }
    return out;
}

std::uint64_t perft(const Board& b, int depth)
{
    if (depth == 0)
        return 1;
    const auto moves = legal_moves(b);
    if (depth == 1)
        return moves.size();
    std::uint64_t n = 0;
    for (const auto& m : moves)
        n += perft(apply(b, m), depth - 1);
    return n;
}

} // namespace reference
