#pragma once

#include "mom/model.hpp"
#include "mom/pgn.hpp"
#include "mom/uci.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom::arena
{

class EmptyInput : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyEvaluationSet : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

enum class Result
{
    ModelWin,
    ModelLoss,
    Draw,
    ForfeitIllegal,
    ForfeitMalformed
};

enum class Termination
{
    Mate,
    Stalemate,
    Repetition,
    FiftyMove,
    Adjudicated,
    Forfeit
};

std::string result_name(Result r);
std::string termination_name(Termination t);

struct GameOutcome
{
    Result result = Result::Draw;
    Termination termination = Termination::Adjudicated;
    std::optional<int> final_cp; // model's perspective, adjudicated games only
    chess::Color model_color = chess::Color::White;
    std::string offending_move;  // forfeits only
    std::string pgn;
};

struct BattleConfig
{
    int engine_level = 0;      // Skill Level option
    long node_limit = 100000;
    int max_turns = 90;
    int games_per_run = 100;
    int runs = 10;
    int opening_plies = 5;     // engine moves drawn from its top candidates
    int opening_top_n = 5;
    double opening_temp = 1.0;
    double draw_margin = 5.0;  // win-probability points around 50
    std::uint64_t seed = Rng::kDefaultSeed;

    void validate() const;
};

/// Anything that proposes a move text for the side to move.
class MovePlayer
{
public:
    virtual ~MovePlayer() = default;
    struct Proposal
    {
        std::string text;
        bool terminated = true; // false when the decoder ran out of tokens
    };
    virtual Proposal propose(const chess::GameRecord& history, const chess::Position& pos, Rng& rng) = 0;
};

/// Greedy (or sampled) decoding from a model, keeping a key/value cache across calls. When the
/// game outgrows the context, the most recent half window is re-fed.
class ModelPlayer : public MovePlayer
{
public:
    explicit ModelPlayer(const Model& model, DecodePolicy policy = DecodePolicy::Greedy());
    Proposal propose(const chess::GameRecord& history, const chess::Position& pos, Rng& rng) override;

private:
    const Model& model_;
    DecodePolicy policy_;
    Decoder decoder_;
    std::vector<TokenId> fed_;
};

class RandomPlayer : public MovePlayer
{
public:
    Proposal propose(const chess::GameRecord& history, const chess::Position& pos, Rng& rng) override;
};

/// Replays a fixed list of move texts, then repeats the last one.
class ScriptedPlayer : public MovePlayer
{
public:
    explicit ScriptedPlayer(std::vector<std::string> moves) : moves_(std::move(moves)) {}
    Proposal propose(const chess::GameRecord& history, const chess::Position& pos, Rng& rng) override;

private:
    std::vector<std::string> moves_;
};

/// Token ids the model sees before the move at `ply`: the full prefix, or its trailing half
/// window when prefix plus a move would not fit.
std::vector<TokenId> context_window(const chess::GameRecord& history, std::size_t ply, int context_len);

/// 100 / (1 + exp(-0.00368208 · cp)).
double win_probability(double cp);

/// Samples one candidate with weights softmax(cp / 100 / temp). Mate scores count as ±10000 cp.
std::size_t sample_candidate(const std::vector<uci::InfoLine>& lines, double temp, Rng& rng);

/// Asks the engine for its top `top_n` moves and samples one of them. Returns a UCI move.
std::string condition_opening(uci::UciSession& session, const std::string& position_command, int top_n, double temp,
                              long node_limit, Rng& rng);

/// One game between the player and an engine that has completed its handshake.
GameOutcome play_game(MovePlayer& player, uci::UciSession& session, const BattleConfig& config,
                      chess::Color model_color, Rng rng);

struct AbortedGame
{
    int index = 0;
    std::string reason;
};

struct RunReport
{
    std::vector<GameOutcome> outcomes; // indexed by game, aborted games omitted
    std::vector<int> game_index;
    std::vector<AbortedGame> aborted;
};

using PlayerFactory = std::function<std::unique_ptr<MovePlayer>()>;
using SessionFactory = std::function<std::unique_ptr<uci::UciSession>()>;

/// `games` games, model White in even-numbered ones, spread over `jobs` workers each owning one
/// engine session. Game i uses rng.split(i), so results do not depend on `jobs`.
RunReport run_games(const PlayerFactory& player, const SessionFactory& engine, const BattleConfig& config, int games,
                    Rng rng, int jobs = 1);

/// 100 · (wins + 0.5 · draws) / n; forfeits count as losses.
double fide_score(const std::vector<GameOutcome>& outcomes);
/// 100 · (games not ended by forfeit) / n.
double legality_rate(const std::vector<GameOutcome>& outcomes);
double win_rate(const std::vector<GameOutcome>& outcomes);
double draw_rate(const std::vector<GameOutcome>& outcomes);

/// Share of target-player positions after the first `skip_opening_moves` full moves where the
/// player's proposal equals the recorded SAN.
double master_accuracy(MovePlayer& player, const std::vector<chess::GameRecord>& test_set, int skip_opening_moves = 16,
                       Rng rng = Rng());

} // namespace mom::arena
