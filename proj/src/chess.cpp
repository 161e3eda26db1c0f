#include "mom/chess.hpp"

#include <cstdlib>
#include <sstream>

namespace mom::chess
{
namespace
{

constexpr std::array<std::array<int, 2>, 8> kKnightSteps{{{1, 2}, {2, 1}, {2, -1}, {1, -2}, {-1, -2}, {-2, -1}, {-2, 1}, {-1, 2}}};
constexpr std::array<std::array<int, 2>, 8> kKingSteps{{{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
constexpr std::array<std::array<int, 2>, 4> kRookDirs{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
constexpr std::array<std::array<int, 2>, 4> kBishopDirs{{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};

constexpr bool on_board(int f, int r) { return f >= 0 && f < 8 && r >= 0 && r < 8; }

char piece_char(Piece p)
{
    static constexpr char kChars[] = " PNBRQK";
    const char c = kChars[static_cast<int>(type_of(p))];
    return color_of(p) == Color::White ? c : static_cast<char>(c - 'A' + 'a');
}

Piece piece_from_char(char c)
{
    const Color color = (c >= 'a' && c <= 'z') ? Color::Black : Color::White;
    switch (c & ~0x20)
    {
    case 'P': return make_piece(color, PieceType::Pawn);
    case 'N': return make_piece(color, PieceType::Knight);
    case 'B': return make_piece(color, PieceType::Bishop);
    case 'R': return make_piece(color, PieceType::Rook);
    case 'Q': return make_piece(color, PieceType::Queen);
    case 'K': return make_piece(color, PieceType::King);
    default: throw FenError(std::string("bad piece char '") + c + "'");
    }
}

} // namespace

std::string square_name(int sq)
{
    return {static_cast<char>('a' + file_of(sq)), static_cast<char>('1' + rank_of(sq))};
}

std::string Move::uci() const
{
    std::string s = square_name(from) + square_name(to);
    switch (promotion)
    {
    case PieceType::Knight: s += 'n'; break;
    case PieceType::Bishop: s += 'b'; break;
    case PieceType::Rook: s += 'r'; break;
    case PieceType::Queen: s += 'q'; break;
    default: break;
    }
    return s;
}

Position Position::initial()
{
    return from_fen("rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1");
}

Position Position::from_fen(std::string_view fen)
{
    std::istringstream in{std::string(fen)};
    std::string placement, side, castling, ep;
    int halfmove = 0, fullmove = 1;
    if (!(in >> placement >> side >> castling >> ep))
        throw FenError("truncated FEN: " + std::string(fen));
    if (!(in >> halfmove))
        halfmove = 0;
    if (!(in >> fullmove))
        fullmove = 1;

    Position pos;
    int rank = 7, file = 0;
    for (char c : placement)
    {
        if (c == '/')
        {
            if (file != 8)
                throw FenError("short rank in FEN");
            --rank;
            file = 0;
        }
        else if (c >= '1' && c <= '8')
        {
            file += c - '0';
        }
        else
        {
            if (file > 7 || rank < 0)
                throw FenError("placement overflow in FEN");
            pos.board_[make_square(file, rank)] = piece_from_char(c);
            ++file;
        }
        if (file > 8)
            throw FenError("placement overflow in FEN");
    }
    if (rank != 0 || file != 8)
        throw FenError("incomplete placement in FEN");

    if (side == "w")
        pos.side_ = Color::White;
    else if (side == "b")
        pos.side_ = Color::Black;
    else
        throw FenError("bad side to move: " + side);

    if (castling != "-")
    {
        for (char c : castling)
        {
            switch (c)
            {
            case 'K': pos.castling_ |= kWhiteKingSide; break;
            case 'Q': pos.castling_ |= kWhiteQueenSide; break;
            case 'k': pos.castling_ |= kBlackKingSide; break;
            case 'q': pos.castling_ |= kBlackQueenSide; break;
            default: throw FenError("bad castling field: " + castling);
            }
        }
    }
    if (ep != "-")
    {
        if (ep.size() != 2 || ep[0] < 'a' || ep[0] > 'h' || ep[1] < '1' || ep[1] > '8')
            throw FenError("bad en-passant field: " + ep);
        pos.ep_ = make_square(ep[0] - 'a', ep[1] - '1');
    }
    if (halfmove < 0 || fullmove < 1)
        throw FenError("bad move counters");
    pos.halfmove_ = halfmove;
    pos.fullmove_ = fullmove;
    pos.validate();
    return pos;
}

void Position::validate() const
{
    int white_kings = 0, black_kings = 0;
    for (Piece p : board_)
    {
        if (p == Piece::WhiteKing)
            ++white_kings;
        if (p == Piece::BlackKing)
            ++black_kings;
    }
    if (white_kings != 1 || black_kings != 1)
        throw FenError("each side needs exactly one king");
    if (ep_ >= 0)
    {
        const int want_rank = side_ == Color::White ? 5 : 2;
        if (rank_of(ep_) != want_rank)
            throw FenError("en-passant square inconsistent with side to move");
    }
    if (attacked_by(king_square(opposite(side_)), side_))
        throw FenError("side not to move is in check");
}

std::string Position::repetition_key() const
{
    std::string out;
    for (int rank = 7; rank >= 0; --rank)
    {
        int empty = 0;
        for (int file = 0; file < 8; ++file)
        {
            const Piece p = board_[make_square(file, rank)];
            if (p == Piece::None)
            {
                ++empty;
                continue;
            }
            if (empty)
                out += static_cast<char>('0' + empty);
            empty = 0;
            out += piece_char(p);
        }
        if (empty)
            out += static_cast<char>('0' + empty);
        if (rank)
            out += '/';
    }
    out += side_ == Color::White ? " w " : " b ";
    if (!castling_)
        out += '-';
    if (castling_ & kWhiteKingSide)
        out += 'K';
    if (castling_ & kWhiteQueenSide)
        out += 'Q';
    if (castling_ & kBlackKingSide)
        out += 'k';
    if (castling_ & kBlackQueenSide)
        out += 'q';
    out += ' ';
    out += ep_ >= 0 ? square_name(ep_) : "-";
    return out;
}

std::string Position::fen() const
{
    return repetition_key() + " " + std::to_string(halfmove_) + " " + std::to_string(fullmove_);
}

int Position::king_square(Color c) const
{
    const Piece king = make_piece(c, PieceType::King);
    for (int sq = 0; sq < 64; ++sq)
        if (board_[sq] == king)
            return sq;
    return -1;
}

bool Position::attacked_by(int sq, Color by) const
{
    const int f = file_of(sq), r = rank_of(sq);

    // A pawn of `by` attacks sq from one rank behind (relative to its own direction).
    const int pawn_rank = by == Color::White ? r - 1 : r + 1;
    for (int df : {-1, 1})
    {
        if (on_board(f + df, pawn_rank) && board_[make_square(f + df, pawn_rank)] == make_piece(by, PieceType::Pawn))
            return true;
    }
    for (const auto& s : kKnightSteps)
    {
        if (on_board(f + s[0], r + s[1]) && board_[make_square(f + s[0], r + s[1])] == make_piece(by, PieceType::Knight))
            return true;
    }
    for (const auto& s : kKingSteps)
    {
        if (on_board(f + s[0], r + s[1]) && board_[make_square(f + s[0], r + s[1])] == make_piece(by, PieceType::King))
            return true;
    }
    const Piece queen = make_piece(by, PieceType::Queen);
    const Piece rook = make_piece(by, PieceType::Rook);
    const Piece bishop = make_piece(by, PieceType::Bishop);
    for (const auto& d : kRookDirs)
    {
        for (int nf = f + d[0], nr = r + d[1]; on_board(nf, nr); nf += d[0], nr += d[1])
        {
            const Piece p = board_[make_square(nf, nr)];
            if (p == Piece::None)
                continue;
            if (p == rook || p == queen)
                return true;
            break;
        }
    }
    for (const auto& d : kBishopDirs)
    {
        for (int nf = f + d[0], nr = r + d[1]; on_board(nf, nr); nf += d[0], nr += d[1])
        {
            const Piece p = board_[make_square(nf, nr)];
            if (p == Piece::None)
                continue;
            if (p == bishop || p == queen)
                return true;
            break;
        }
    }
    return false;
}

bool Position::in_check() const
{
    return attacked_by(king_square(side_), opposite(side_));
}

void Position::generate_pseudo(std::vector<Move>& out) const
{
    const Color us = side_;
    const Color them = opposite(us);
    auto add_pawn_move = [&](int from, int to) {
        if (rank_of(to) == 0 || rank_of(to) == 7)
        {
            for (PieceType promo : {PieceType::Queen, PieceType::Rook, PieceType::Bishop, PieceType::Knight})
                out.push_back({static_cast<Square>(from), static_cast<Square>(to), promo});
        }
        else
        {
            out.push_back({static_cast<Square>(from), static_cast<Square>(to), PieceType::None});
        }
    };

    for (int sq = 0; sq < 64; ++sq)
    {
        const Piece p = board_[sq];
        if (p == Piece::None || color_of(p) != us)
            continue;
        const int f = file_of(sq), r = rank_of(sq);
        switch (type_of(p))
        {
        case PieceType::Pawn: {
            const int dir = us == Color::White ? 1 : -1;
            const int start_rank = us == Color::White ? 1 : 6;
            if (on_board(f, r + dir) && board_[make_square(f, r + dir)] == Piece::None)
            {
                add_pawn_move(sq, make_square(f, r + dir));
                if (r == start_rank && board_[make_square(f, r + 2 * dir)] == Piece::None)
                    out.push_back({static_cast<Square>(sq), make_square(f, r + 2 * dir), PieceType::None});
            }
            for (int df : {-1, 1})
            {
                if (!on_board(f + df, r + dir))
                    continue;
                const int to = make_square(f + df, r + dir);
                const Piece target = board_[to];
                if ((target != Piece::None && color_of(target) == them) || to == ep_)
                    add_pawn_move(sq, to);
            }
            break;
        }
        case PieceType::Knight:
        case PieceType::King: {
            const auto& steps = type_of(p) == PieceType::Knight ? kKnightSteps : kKingSteps;
            for (const auto& s : steps)
            {
                if (!on_board(f + s[0], r + s[1]))
                    continue;
                const int to = make_square(f + s[0], r + s[1]);
                const Piece target = board_[to];
                if (target == Piece::None || color_of(target) == them)
                    out.push_back({static_cast<Square>(sq), static_cast<Square>(to), PieceType::None});
            }
            break;
        }
        default: {
            const PieceType t = type_of(p);
            auto slide = [&](const auto& dirs) {
                for (const auto& d : dirs)
                {
                    for (int nf = f + d[0], nr = r + d[1]; on_board(nf, nr); nf += d[0], nr += d[1])
                    {
                        const int to = make_square(nf, nr);
                        const Piece target = board_[to];
                        if (target != Piece::None && color_of(target) == us)
                            break;
                        out.push_back({static_cast<Square>(sq), static_cast<Square>(to), PieceType::None});
                        if (target != Piece::None)
                            break;
                    }
                }
            };
            if (t == PieceType::Rook || t == PieceType::Queen)
                slide(kRookDirs);
            if (t == PieceType::Bishop || t == PieceType::Queen)
                slide(kBishopDirs);
            break;
        }
        }
    }

    // Castling: rights, empty path, and no attacked square on the king's path.
    const int home = us == Color::White ? 0 : 56;
    const std::uint8_t king_side = us == Color::White ? kWhiteKingSide : kBlackKingSide;
    const std::uint8_t queen_side = us == Color::White ? kWhiteQueenSide : kBlackQueenSide;
    const Piece king = make_piece(us, PieceType::King);
    const Piece rook = make_piece(us, PieceType::Rook);
    if (board_[home + 4] == king)
    {
        if ((castling_ & king_side) && board_[home + 7] == rook && board_[home + 5] == Piece::None &&
            board_[home + 6] == Piece::None && !attacked_by(home + 4, them) && !attacked_by(home + 5, them) &&
            !attacked_by(home + 6, them))
        {
            out.push_back({static_cast<Square>(home + 4), static_cast<Square>(home + 6), PieceType::None});
        }
        if ((castling_ & queen_side) && board_[home] == rook && board_[home + 1] == Piece::None &&
            board_[home + 2] == Piece::None && board_[home + 3] == Piece::None && !attacked_by(home + 4, them) &&
            !attacked_by(home + 3, them) && !attacked_by(home + 2, them))
        {
            out.push_back({static_cast<Square>(home + 4), static_cast<Square>(home + 2), PieceType::None});
        }
    }
}

Position Position::play(const Move& m) const
{
    Position next = *this;
    const Piece moving = board_[m.from];
    const Piece captured = board_[m.to];
    const Color us = side_;
    const PieceType t = type_of(moving);

    next.board_[m.from] = Piece::None;
    next.board_[m.to] = m.promotion != PieceType::None ? make_piece(us, m.promotion) : moving;

    if (t == PieceType::Pawn && m.to == ep_)
    {
        const int victim = us == Color::White ? m.to - 8 : m.to + 8;
        next.board_[victim] = Piece::None;
    }
    if (t == PieceType::King && std::abs(m.to - m.from) == 2)
    {
        if (m.to > m.from)
        {
            next.board_[m.from + 1] = next.board_[m.from + 3];
            next.board_[m.from + 3] = Piece::None;
        }
        else
        {
            next.board_[m.from - 1] = next.board_[m.from - 4];
            next.board_[m.from - 4] = Piece::None;
        }
    }

    next.ep_ = -1;
    if (t == PieceType::Pawn && std::abs(m.to - m.from) == 16)
        next.ep_ = static_cast<Square>((m.from + m.to) / 2);

    auto clear_rights = [&](int sq) {
        switch (sq)
        {
        case 0: next.castling_ &= ~kWhiteQueenSide; break;
        case 7: next.castling_ &= ~kWhiteKingSide; break;
        case 4: next.castling_ &= ~(kWhiteKingSide | kWhiteQueenSide); break;
        case 56: next.castling_ &= ~kBlackQueenSide; break;
        case 63: next.castling_ &= ~kBlackKingSide; break;
        case 60: next.castling_ &= ~(kBlackKingSide | kBlackQueenSide); break;
        default: break;
        }
    };
    clear_rights(m.from);
    clear_rights(m.to);

    next.halfmove_ = (t == PieceType::Pawn || captured != Piece::None) ? 0 : halfmove_ + 1;
    if (us == Color::Black)
        ++next.fullmove_;
    next.side_ = opposite(us);
    return next;
}

std::vector<Move> Position::legal_moves() const
{
    std::vector<Move> pseudo;
    pseudo.reserve(64);
    generate_pseudo(pseudo);
    std::vector<Move> legal;
    legal.reserve(pseudo.size());
    for (const Move& m : pseudo)
    {
        const Position next = play(m);
        if (!next.attacked_by(next.king_square(side_), next.side_))
            legal.push_back(m);
    }
    return legal;
}

bool Position::is_legal(const Move& m) const
{
    for (const Move& l : legal_moves())
        if (l == m)
            return true;
    return false;
}

bool Position::is_checkmate() const
{
    return in_check() && legal_moves().empty();
}

bool Position::is_stalemate() const
{
    return !in_check() && legal_moves().empty();
}

bool Position::insufficient_material() const
{
    int minors = 0;
    for (Piece p : board_)
    {
        switch (type_of(p))
        {
        case PieceType::Pawn:
        case PieceType::Rook:
        case PieceType::Queen: return false;
        case PieceType::Knight:
        case PieceType::Bishop: ++minors; break;
        default: break;
        }
    }
    return minors <= 1;
}

std::uint64_t perft(const Position& pos, int depth)
{
    if (depth == 0)
        return 1;
    const auto moves = pos.legal_moves();
    if (depth == 1)
        return moves.size();
    std::uint64_t nodes = 0;
    for (const Move& m : moves)
        nodes += perft(pos.play(m), depth - 1);
    return nodes;
}

std::uint64_t perft_parallel(const Position& pos, int depth)
{
    if (depth <= 1)
        return perft(pos, depth);
    const auto moves = pos.legal_moves();
    std::uint64_t nodes = 0;
#pragma omp parallel for reduction(+ : nodes) schedule(dynamic)
    for (std::size_t i = 0; i < moves.size(); ++i)
        nodes += perft(pos.play(moves[i]), depth - 1);
    return nodes;
}

std::optional<Move> parse_uci(const Position& pos, std::string_view text)
{
    for (const Move& m : pos.legal_moves())
        if (m.uci() == text)
            return m;
    return std::nullopt;
}

} // namespace mom::chess
