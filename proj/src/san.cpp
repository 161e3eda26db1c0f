#include "mom/san.hpp"

#include <algorithm>

namespace mom::chess
{
namespace
{

bool is_file(char c) { return c >= 'a' && c <= 'h'; }
bool is_rank(char c) { return c >= '1' && c <= '8'; }

PieceType piece_letter(char c)
{
    switch (c)
    {
    case 'N': return PieceType::Knight;
    case 'B': return PieceType::Bishop;
    case 'R': return PieceType::Rook;
    case 'Q': return PieceType::Queen;
    case 'K': return PieceType::King;
    default: return PieceType::None;
    }
}

char letter_of(PieceType t)
{
    switch (t)
    {
    case PieceType::Knight: return 'N';
    case PieceType::Bishop: return 'B';
    case PieceType::Rook: return 'R';
    case PieceType::Queen: return 'Q';
    case PieceType::King: return 'K';
    default: return '?';
    }
}

struct SanParts
{
    bool castle_long = false;
    bool castle_short = false;
    PieceType piece = PieceType::Pawn;
    int from_file = -1;
    int from_rank = -1;
    bool capture = false;
    int to = -1;
    PieceType promotion = PieceType::None;
};

// Grammar parse of a SAN body (suffixes already stripped). Returns false on mismatch.
bool parse_body(std::string_view s, SanParts& out)
{
    if (s == "O-O")
    {
        out.castle_short = true;
        return true;
    }
    if (s == "O-O-O")
    {
        out.castle_long = true;
        return true;
    }
    if (s.empty())
        return false;

    std::size_t i = 0;
    const PieceType piece = piece_letter(s[0]);
    if (piece != PieceType::None)
    {
        out.piece = piece;
        i = 1;
        // [file][rank][x] file rank
        const std::string_view rest = s.substr(i);
        // Destination is always the last two characters.
        if (rest.size() < 2)
            return false;
        const char tf = rest[rest.size() - 2], tr = rest[rest.size() - 1];
        if (!is_file(tf) || !is_rank(tr))
            return false;
        out.to = make_square(tf - 'a', tr - '1');
        std::string_view mid = rest.substr(0, rest.size() - 2);
        if (!mid.empty() && mid.back() == 'x')
        {
            out.capture = true;
            mid.remove_suffix(1);
        }
        if (mid.size() > 2)
            return false;
        if (mid.size() == 2)
        {
            if (!is_file(mid[0]) || !is_rank(mid[1]))
                return false;
            out.from_file = mid[0] - 'a';
            out.from_rank = mid[1] - '1';
        }
        else if (mid.size() == 1)
        {
            if (is_file(mid[0]))
                out.from_file = mid[0] - 'a';
            else if (is_rank(mid[0]))
                out.from_rank = mid[0] - '1';
            else
                return false;
        }
        return true;
    }

    // Pawn: [file x] file rank [= piece]
    out.piece = PieceType::Pawn;
    std::string_view body = s;
    if (body.size() >= 2 && body[body.size() - 2] == '=')
    {
        const PieceType promo = piece_letter(body.back());
        if (promo == PieceType::None || promo == PieceType::King)
            return false;
        out.promotion = promo;
        body.remove_suffix(2);
    }
    if (body.size() == 2)
    {
        if (!is_file(body[0]) || !is_rank(body[1]))
            return false;
        out.to = make_square(body[0] - 'a', body[1] - '1');
    }
    else if (body.size() == 4)
    {
        if (!is_file(body[0]) || body[1] != 'x' || !is_file(body[2]) || !is_rank(body[3]))
            return false;
        out.capture = true;
        out.from_file = body[0] - 'a';
        out.to = make_square(body[2] - 'a', body[3] - '1');
    }
    else
    {
        return false;
    }
    if (out.promotion != PieceType::None)
    {
        const int r = rank_of(out.to);
        if (r != 0 && r != 7)
            return false;
    }
    return true;
}

std::string_view strip_annotations(std::string_view s)
{
    while (!s.empty() && (s.back() == '!' || s.back() == '?'))
        s.remove_suffix(1);
    while (!s.empty() && (s.back() == '+' || s.back() == '#'))
        s.remove_suffix(1);
    return s;
}

} // namespace

bool is_well_formed_san(std::string_view text)
{
    std::string_view body = text;
    if (!body.empty() && (body.back() == '+' || body.back() == '#'))
        body.remove_suffix(1);
    SanParts parts;
    return parse_body(body, parts);
}

std::string to_san(const Position& pos, const Move& move)
{
    const Piece moving = pos.piece_at(move.from);
    const PieceType t = type_of(moving);
    std::string san;

    if (t == PieceType::King && std::abs(move.to - move.from) == 2)
    {
        san = move.to > move.from ? "O-O" : "O-O-O";
    }
    else if (t == PieceType::Pawn)
    {
        if (file_of(move.from) != file_of(move.to))
        {
            san += static_cast<char>('a' + file_of(move.from));
            san += 'x';
        }
        san += square_name(move.to);
        if (move.promotion != PieceType::None)
        {
            san += '=';
            san += letter_of(move.promotion);
        }
    }
    else
    {
        san += letter_of(t);
        bool ambiguous = false, same_file = false, same_rank = false;
        for (const Move& other : pos.legal_moves())
        {
            if (other.to != move.to || other.from == move.from || pos.piece_at(other.from) != moving)
                continue;
            ambiguous = true;
            if (file_of(other.from) == file_of(move.from))
                same_file = true;
            if (rank_of(other.from) == rank_of(move.from))
                same_rank = true;
        }
        if (ambiguous)
        {
            if (!same_file)
                san += static_cast<char>('a' + file_of(move.from));
            else if (!same_rank)
                san += static_cast<char>('1' + rank_of(move.from));
            else
                san += square_name(move.from);
        }
        if (pos.piece_at(move.to) != Piece::None)
            san += 'x';
        san += square_name(move.to);
    }

    const Position next = pos.play(move);
    if (next.in_check())
        san += next.legal_moves().empty() ? '#' : '+';
    return san;
}

std::vector<std::string> legal_sans(const Position& pos)
{
    std::vector<std::string> out;
    for (const Move& m : pos.legal_moves())
        out.push_back(to_san(pos, m));
    return out;
}

Move parse_san(const Position& pos, std::string_view text)
{
    const std::string_view body = strip_annotations(text);
    SanParts parts;
    if (!parse_body(body, parts))
        throw SanError(SanErrorKind::Malformed, "malformed SAN '" + std::string(text) + "'");

    const auto legal = pos.legal_moves();
    const Color us = pos.side_to_move();
    if (parts.castle_short || parts.castle_long)
    {
        const int home = us == Color::White ? 0 : 56;
        const Move want{static_cast<Square>(home + 4), static_cast<Square>(home + (parts.castle_short ? 6 : 2)),
                        PieceType::None};
        if (pos.piece_at(home + 4) == make_piece(us, PieceType::King) &&
            std::find(legal.begin(), legal.end(), want) != legal.end())
            return want;
        throw SanError(SanErrorKind::Illegal, "illegal castling '" + std::string(text) + "'");
    }

    std::vector<Move> matches;
    for (const Move& m : legal)
    {
        const Piece p = pos.piece_at(m.from);
        if (type_of(p) != parts.piece || m.to != parts.to || m.promotion != parts.promotion)
            continue;
        if (parts.piece == PieceType::King && std::abs(m.to - m.from) == 2)
            continue;
        if (parts.from_file >= 0 && file_of(m.from) != parts.from_file)
            continue;
        if (parts.from_rank >= 0 && rank_of(m.from) != parts.from_rank)
            continue;
        if (parts.piece == PieceType::Pawn && parts.capture != (file_of(m.from) != file_of(m.to)))
            continue;
        matches.push_back(m);
    }
    if (matches.empty())
        throw SanError(SanErrorKind::Illegal, "illegal move '" + std::string(text) + "'");
    if (matches.size() > 1)
        throw SanError(SanErrorKind::Ambiguous, "ambiguous move '" + std::string(text) + "'");
    return matches.front();
}

Position apply_san(const Position& pos, std::string_view text)
{
    return pos.play(parse_san(pos, text));
}

std::size_t levenshtein(std::string_view a, std::string_view b)
{
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j)
        prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i)
    {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
        {
            const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

NearestLegal nearest_legal_distance(const Position& pos, std::string_view candidate)
{
    if (!is_well_formed_san(candidate))
        throw NotWellFormed("candidate is not well-formed SAN: '" + std::string(candidate) + "'");
    const auto legal = pos.legal_moves();
    if (legal.empty())
        throw NoLegalMoves("no legal moves in " + pos.fen());

    NearestLegal best;
    bool have = false;
    for (const Move& m : legal)
    {
        std::string san = to_san(pos, m);
        const double norm = static_cast<double>(std::max(candidate.size(), san.size()));
        const double d = static_cast<double>(levenshtein(candidate, san)) / norm;
        if (!have || d < best.distance || (d == best.distance && san < best.closest_san))
        {
            best = {d, m, std::move(san)};
            have = true;
        }
    }
    return best;
}

} // namespace mom::chess
