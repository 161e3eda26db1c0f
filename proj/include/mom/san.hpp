#pragma once

#include "mom/chess.hpp"

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mom::chess
{

enum class SanErrorKind
{
    Malformed,
    Illegal,
    Ambiguous
};

class SanError : public std::runtime_error
{
public:
    SanError(SanErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    SanErrorKind kind() const { return kind_; }

private:
    SanErrorKind kind_;
};

/// True iff `text` matches the SAN grammar (castling, piece move, pawn move with optional
/// promotion, optional check/mate suffix). Says nothing about legality.
bool is_well_formed_san(std::string_view text);

/// Canonical SAN of a legal move: minimal disambiguation, '+' / '#' suffix.
std::string to_san(const Position& pos, const Move& move);

/// SAN of every legal move, in `legal_moves()` order.
std::vector<std::string> legal_sans(const Position& pos);

/// Parses SAN leniently: check/mate suffixes and trailing annotation glyphs are ignored,
/// over-disambiguation is accepted. Throws SanError.
Move parse_san(const Position& pos, std::string_view text);

Position apply_san(const Position& pos, std::string_view text);

std::size_t levenshtein(std::string_view a, std::string_view b);

class NotWellFormed : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class NoLegalMoves : public std::logic_error
{
public:
    using std::logic_error::logic_error;
};

struct NearestLegal
{
    double distance = 0.0; // normalized edit distance in [0, 1]
    Move closest;
    std::string closest_san;
};

/// Minimum normalized Levenshtein distance from `candidate` to the canonical SAN of any legal
/// move, normalized by the longer string; ties go to the lexicographically smallest SAN.
/// Throws NotWellFormed for non-SAN input and NoLegalMoves in terminal positions.
NearestLegal nearest_legal_distance(const Position& pos, std::string_view candidate);

} // namespace mom::chess
