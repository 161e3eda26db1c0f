#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mom::chess
{

enum class Color : std::uint8_t
{
    White = 0,
    Black = 1
};

constexpr Color opposite(Color c)
{
    return c == Color::White ? Color::Black : Color::White;
}

enum class PieceType : std::uint8_t
{
    None = 0,
    Pawn = 1,
    Knight = 2,
    Bishop = 3,
    Rook = 4,
    Queen = 5,
    King = 6
};

// Low three bits carry the type, bit 3 the color.
enum class Piece : std::uint8_t
{
    None = 0,
    WhitePawn = 1,
    WhiteKnight = 2,
    WhiteBishop = 3,
    WhiteRook = 4,
    WhiteQueen = 5,
    WhiteKing = 6,
    BlackPawn = 9,
    BlackKnight = 10,
    BlackBishop = 11,
    BlackRook = 12,
    BlackQueen = 13,
    BlackKing = 14
};

constexpr PieceType type_of(Piece p)
{
    return static_cast<PieceType>(static_cast<std::uint8_t>(p) & 7);
}

constexpr Color color_of(Piece p)
{
    return static_cast<Color>(static_cast<std::uint8_t>(p) >> 3);
}

constexpr Piece make_piece(Color c, PieceType t)
{
    return static_cast<Piece>((static_cast<std::uint8_t>(c) << 3) | static_cast<std::uint8_t>(t));
}

/// Square index: 0 = a1, 7 = h1, 56 = a8, 63 = h8.
using Square = std::int8_t;

constexpr int file_of(int sq) { return sq & 7; }
constexpr int rank_of(int sq) { return sq >> 3; }
constexpr Square make_square(int file, int rank) { return static_cast<Square>(rank * 8 + file); }

std::string square_name(int sq);

struct Move
{
    Square from = 0;
    Square to = 0;
    PieceType promotion = PieceType::None;

    auto operator<=>(const Move&) const = default;

    /// Long algebraic form used on the UCI wire ("e2e4", "e7e8q").
    std::string uci() const;
};

enum CastlingRight : std::uint8_t
{
    kWhiteKingSide = 1,
    kWhiteQueenSide = 2,
    kBlackKingSide = 4,
    kBlackQueenSide = 8
};

class FenError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class Position
{
public:
    static Position initial();
    static Position from_fen(std::string_view fen);

    std::string fen() const;
    /// FEN without the clocks; equal keys mean the same position for repetition purposes.
    std::string repetition_key() const;

    Piece piece_at(int sq) const { return board_[sq]; }
    Color side_to_move() const { return side_; }
    std::uint8_t castling() const { return castling_; }
    std::optional<Square> en_passant() const
    {
        if (ep_ < 0)
            return std::nullopt;
        return ep_;
    }
    int halfmove_clock() const { return halfmove_; }
    int fullmove_number() const { return fullmove_; }

    std::vector<Move> legal_moves() const;
    bool is_legal(const Move& m) const;

    /// Successor position; `m` must be legal (unchecked).
    Position play(const Move& m) const;

    bool in_check() const;
    bool is_checkmate() const;
    bool is_stalemate() const;
    bool insufficient_material() const;

    bool attacked_by(int sq, Color by) const;
    int king_square(Color c) const;

    bool operator==(const Position&) const = default;

private:
    void generate_pseudo(std::vector<Move>& out) const;
    void validate() const;

    std::array<Piece, 64> board_{};
    Color side_ = Color::White;
    std::uint8_t castling_ = 0;
    Square ep_ = -1;
    int halfmove_ = 0;
    int fullmove_ = 1;
};

/// The legal move whose UCI spelling is `text`, if any.
std::optional<Move> parse_uci(const Position& pos, std::string_view text);

std::uint64_t perft(const Position& pos, int depth);
/// Root moves split across OpenMP threads; same count as `perft`.
std::uint64_t perft_parallel(const Position& pos, int depth);

} // namespace mom::chess
