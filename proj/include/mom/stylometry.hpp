#pragma once

#include "mom/autograd.hpp"
#include "mom/model.hpp"
#include "mom/pgn.hpp"

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom::stylo
{

class WrongWindowLength : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class DegenerateCentroid : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

class TooFewGames : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

constexpr int kPatches = 16;   // 2×2-square regions
constexpr int kPlanes = 14;    // 6 own pieces, 6 opponent pieces, from-square, to-square
constexpr int kPatchDim = 4 * kPlanes;

/// Board after one target-player move, as kPatches × kPatchDim features. The board is rotated so
/// the target player sits at the bottom.
struct FrameFeatures
{
    Tensor patches{kPatches, kPatchDim};
};

using Window = std::vector<FrameFeatures>;

/// One frame per move of the game's target player.
std::vector<FrameFeatures> game_frames(const chess::GameRecord& game);

struct StyloConfig
{
    int token_dim = 32;          // patch embedding width
    int embed_dim = 32;          // LSTM hidden size = game embedding size
    int frames = 5;              // F
    int skip_opening_moves = 8;  // windows start after this many target moves
    int games_per_player = 4;    // M per batch
    double sim_w = 8.5;
    double sim_b = -10.0;
    double lambda_m = 0.8;
    double lambda_c = 0.7;
    double mu = 0.5;
    double lr = 1e-3;
    int steps = 200;

    void validate() const;
};

struct Encoder
{
    StyloConfig config;
    ParamMap params;
    AdamState adam;

    static Encoder init(const StyloConfig& config, std::uint64_t seed = Rng::kDefaultSeed);
    double sim_w() const { return params.at("sim.w").data[0]; }
    double sim_b() const { return params.at("sim.b").data[0]; }
};

/// Start index of a uniformly drawn post-opening window; nullopt if the game is too short.
std::optional<std::size_t> sample_window_start(std::size_t n_frames, const StyloConfig& config, Rng& rng);

/// Leaves for every encoder parameter; name → Var.
std::map<std::string, Var> encoder_leaves(Graph& g, const Encoder& enc, bool trainable = true);

/// Unit-norm embedding of one window (1 × embed_dim) on the tape.
Var embed_tape(Graph& g, const std::map<std::string, Var>& leaves, const Encoder& enc, const Window& window);

/// Throws WrongWindowLength unless the window has exactly `frames` frames.
std::vector<double> embed_game(const Encoder& enc, const Window& window);

struct Centroids
{
    Tensor full; // N × d
    Tensor loo;  // (N·M) × d, row g of player p omits g itself
};

/// Z holds N·M embeddings grouped by player (rows p·M .. p·M+M−1). Requires N ≥ 2, M ≥ 2.
Centroids centroids(const Tensor& z, int n_players, int m_games);

/// S[g, q] = W · cos(z_g, c^q_g) + b with the leave-one-out centroid on the player's own column.
Tensor similarity_matrix(const Tensor& z, int n_players, int m_games, double w, double b);

struct LossHyper
{
    double lambda_m = 0.8;
    double lambda_c = 0.7;
    double mu = 0.5;
};

struct LossTerms
{
    double infonce = 0.0;
    double margin = 0.0;
    double centroid = 0.0;
    double total = 0.0;
};

struct LossVars
{
    Var infonce, margin, centroid, total;
};

LossVars loss_tape(Graph& g, Var z, Var w, Var b, int n_players, int m_games, const LossHyper& hyper);
LossTerms stylometry_loss(const Tensor& z, int n_players, int m_games, double w, double b, const LossHyper& hyper);

struct PlayerGames
{
    std::string name;
    std::vector<chess::GameRecord> games;
};

struct TrainStep
{
    int step = 0;
    LossTerms loss;
    double w = 0.0;
    double b = 0.0;
};

/// Loss and encoder gradients for one batch of windows (players × games, grouped by player).
struct BatchGrad
{
    LossTerms loss;
    ParamMap grads;
};
BatchGrad batch_loss_and_grad(const Encoder& enc, const std::vector<std::vector<Window>>& batch);

/// Samples N = all players × M games with one post-opening window each per step.
std::vector<TrainStep> train(Encoder& enc, const std::vector<PlayerGames>& players, Rng rng,
                             std::ostream* log = nullptr);

struct EmbeddingRecord
{
    std::string player;
    std::size_t game = 0;
    std::size_t window_start = 0;
    std::vector<double> z;
};

/// One embedding per game long enough for a window.
std::vector<EmbeddingRecord> embed_games(const Encoder& enc, const std::string& player,
                                         const std::vector<chess::GameRecord>& games, Rng rng);

std::vector<double> mean_embedding(const std::vector<std::vector<double>>& zs);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

struct DriftPoint
{
    int split_pct = 0;
    double distance = 0.0;    // mean over resamples
    double relative = 0.0;    // (distance − distance at 30%) / distance at 30%
    double relative_sd = 0.0; // spread of the distance over resamples, same scale
};

/// Cosine distance between the centroid of a random split_pct% subsample and the centroid of the
/// whole collection, relative to the 30% split.
std::vector<DriftPoint> style_consistency(const std::vector<std::vector<double>>& embeddings,
                                          const std::vector<int>& split_pcts, int resamples, Rng rng);

/// Fraction of `embeddings` whose `target` centroid ranks among the k most cosine-similar.
double acquisition_recall(const std::vector<std::vector<double>>& embeddings,
                          const std::vector<std::vector<double>>& centroids, std::size_t target, int k);

void save_encoder(const std::string& path, const Encoder& enc);
Encoder load_encoder(const std::string& path);

/// Text manifest (player, game, window per line) followed by a float32 payload.
void write_embeddings(std::ostream& out, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings(std::istream& in);

std::string to_json_line(const TrainStep& s);

} // namespace mom::stylo
