#pragma once

#include "mom/pgn.hpp"
#include "mom/rng.hpp"
#include "mom/tokenizer.hpp"
#include "mom/uci.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mom::dataset
{

using chess::Color;
using chess::GameRecord;

class IllegalReplay : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

enum class Split
{
    Train,
    Test
};

struct PlayerDataset
{
    std::string player_id;
    std::vector<GameRecord> records;
    std::vector<Split> split; // parallel to records; empty until assigned

    std::vector<GameRecord> subset(Split s) const;
    std::size_t count(Color c) const;
};

constexpr std::size_t kMinFullMoves = 5;

/// Drops games shorter than five full moves and repeated movetexts (first copy kept).
std::vector<GameRecord> filter_corpus(const std::vector<GameRecord>& records, std::size_t min_full_moves = kMinFullMoves);

/// Downsamples the more frequent target color (seeded) so the counts differ by at most one.
/// Surviving records keep their relative order.
PlayerDataset balance_colors(const PlayerDataset& data, Rng rng);

/// 80/20 train/test split, stratified by target color.
void assign_splits(PlayerDataset& data, Rng rng, double train_fraction = 0.8);

/// Filters, balances and splits one player's games.
PlayerDataset prepare_player(const std::string& player_id, const std::vector<GameRecord>& records, Rng rng);

constexpr int kMaxMateMoves = 10;

/// Appends the engine's principal mating line when it reports a forced mate of at most
/// `max_mate` moves for the side to move; otherwise returns the record unchanged.
/// Throws uci::EngineUnavailable when the engine cannot be queried.
GameRecord mate_complete(const GameRecord& record, uci::UciSession& engine, int max_mate = kMaxMateMoves);

/// ";" followed by the movetext; requires a game from the standard initial position.
std::string sequence_text(const GameRecord& record);

/// Sequence text of the first `ply` moves followed by the separator that precedes move
/// `ply`: ";1. " for ply 0, ";1. e4 " for ply 1, ";1. e4 e5 2. " for ply 2.
std::string prefix_text(const GameRecord& record, std::size_t ply);

/// Token ids of the game with the loss mask on the target player's SAN characters and the
/// space that follows each of them. Throws IllegalReplay.
TokenMask player_mask(const GameRecord& record);

/// One line per record: player, split, color, plies, content hash.
std::string manifest(const PlayerDataset& data);

std::string color_name(Color c);

} // namespace mom::dataset
