#pragma once

#include "mom/model.hpp"
#include "mom/pgn.hpp"

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom::moe
{

class LayoutMismatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyFisherBatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

enum class MergeAlgo
{
    Uniform,
    TaskArithmetic,
    Fisher
};

std::string merge_algo_name(MergeAlgo a);
MergeAlgo parse_merge_algo(const std::string& s);

/// Elementwise mean of every non-gated tensor.
ParamMap merge_uniform(const std::vector<Model>& experts);

/// seed + λ · mean(expert − seed) over every non-gated tensor.
ParamMap merge_task_arithmetic(const Model& seed, const std::vector<Model>& experts, double lambda);

/// Diagonal empirical Fisher: per-sequence squared gradient of the masked loss, averaged.
ParamMap estimate_fisher(const Model& model, const std::vector<TokenMask>& batch);

/// Per-entry Fisher-weighted mean with weights (F + eps_f) normalised across experts.
ParamMap merge_fisher_weighted(const std::vector<Model>& experts, const std::vector<ParamMap>& fishers,
                               double eps_f = 1e-8);

/// Estimates each expert's Fisher on its batch, then merges. `seed` fixes the reference layout.
ParamMap merge_fisher(const Model& seed, const std::vector<Model>& experts,
                      const std::vector<std::vector<TokenMask>>& fisher_batches, double eps_f = 1e-8);

struct MergeOptions
{
    MergeAlgo algo = MergeAlgo::Uniform;
    const Model* seed = nullptr; // task arithmetic and Fisher
    double lambda = 1.0;
    std::vector<std::vector<TokenMask>> fisher_batches;
    double fisher_eps = 1e-8;
};

/// Builds the mixture: per-expert copies of every attention projection, merged shared tensors,
/// fresh near-uniform gates (N(0, 1e-3) weights, zero bias) drawn from `gate_seed`.
Model stitch(const std::vector<Model>& experts, int k, const MergeOptions& merge = {},
             std::uint64_t gate_seed = Rng::kDefaultSeed);

/// True for the per-expert gated tensors of a stitched model.
bool is_expert_tensor(const std::string& name);

struct AnnealSchedule
{
    double tau0 = 1.0;
    double floor = 0.1;
    double floor_fraction = 0.8; // share of the run after which the floor is reached
    int steps = 100;

    double tau(int step) const;
};

struct RouterConfig
{
    int steps = 100;
    int batch_size = 8;
    double lr = 3e-4;
    AnnealSchedule schedule;
};

struct RouterStep
{
    int step = 0;
    double tau = 1.0;
    double loss = 0.0;
};

/// Trains gates and shared tensors on the mixture with Gumbel routing; expert tensors stay
/// bit-identical.
std::vector<RouterStep> train_router(Model& stitched, const std::vector<TokenMask>& mixture, const RouterConfig& config,
                                     Rng rng, std::ostream* log = nullptr);

/// Half the games from the seed corpus, the other half split evenly between expert corpora.
/// Sampling without replacement where possible.
std::vector<chess::GameRecord> mixture_dataset(const std::vector<chess::GameRecord>& seed_games,
                                               const std::vector<std::vector<chess::GameRecord>>& expert_games,
                                               std::size_t total, Rng rng);

struct MoveRoute
{
    std::size_t ply = 0;
    std::string san;
    std::vector<RouteEntry> layers; // averaged over the move's character positions
};

using RouteTrace = std::vector<MoveRoute>;

/// Routing of every move in the game (eval mode). Moves past the context window are omitted.
RouteTrace route_trace(const Model& stitched, const chess::GameRecord& game);

/// Newline-delimited JSON records, one per move.
std::string route_trace_json(const RouteTrace& trace);

} // namespace mom::moe
