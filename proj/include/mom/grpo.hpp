#pragma once

#include "mom/model.hpp"
#include "mom/pgn.hpp"

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom::grpo
{

class TerminalPosition : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyBatch : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

struct RewardBreakdown
{
    double rho_synt = 0.0;          // 0 or -1
    std::optional<double> rho_leg;  // absent for malformed candidates
    double total = 0.0;
    bool legal() const { return rho_leg && *rho_leg == 1.0; }
};

/// Syntactic plus legality reward of a candidate move text in `pos`.
/// Legal means equal to the canonical SAN of some legal move.
RewardBreakdown reward(const chess::Position& pos, const std::string& candidate);

/// (r - mean) / population std; all zeros when std < 1e-8.
std::vector<double> group_advantages(const std::vector<double>& rewards);

struct GrpoConfig
{
    int group_size = 8;   // M
    int groups = 8;       // prefixes per step
    double clip_eps = 0.2;
    double beta = 0.06;
    double temperature = 1.0;
    double lr = 1e-4;
    int steps = 100;

    void validate() const;
};

struct Candidate
{
    std::string text;
    std::vector<TokenId> tokens;          // emitted tokens, terminator included
    std::vector<double> logprobs_old;     // per token, under the sampling snapshot
    double logprob_old = 0.0;             // sum of logprobs_old
    bool terminated = false;
    RewardBreakdown reward;
    double advantage = 0.0;
};

struct Group
{
    std::vector<TokenId> prefix;
    chess::Position position;
    std::vector<Candidate> candidates;
};

using GroupBatch = std::vector<Group>;

/// Samples `config.groups` prefixes ending before a target-player move and draws M candidates
/// for each from `model` at the sampling temperature. Prefixes that leave no room for a move
/// or end in a terminal position are skipped. Deterministic given `rng`.
GroupBatch collect_groups(const Model& model, const std::vector<chess::GameRecord>& games, const GrpoConfig& config,
                          Rng rng);

/// Scores every candidate of an already sampled group and fills in the advantages.
void score_group(Group& group);

struct ObjectiveTerms
{
    double objective = 0.0;   // J
    double kl = 0.0;          // mean per-candidate k3 estimate
    double clip_fraction = 0.0;
    ParamMap grads;           // dJ/dθ (ascent direction); empty unless requested
};

/// Clipped surrogate minus β·KL averaged over every candidate of the batch.
ObjectiveTerms grpo_objective(const Model& model, const GroupBatch& batch, const GrpoConfig& config,
                              bool with_grad = true);

struct StepReport
{
    long step = 0;
    double mean_reward = 0.0;
    double mean_abs_advantage = 0.0;
    double kl = 0.0;
    double clip_fraction = 0.0;
    double legality_fraction = 0.0;
    double objective = 0.0;
    bool updated = false;
};

/// One optimizer step on -J. A batch whose gradient is identically zero leaves the model
/// (parameters and optimizer state) untouched.
StepReport grpo_step(Model& model, const GroupBatch& batch, const GrpoConfig& config);

/// One JSON object per line.
std::string to_json_line(const StepReport& report);

/// Runs `config.steps` on-policy iterations: sample with the current model, then update.
std::vector<StepReport> train(Model& model, const std::vector<chess::GameRecord>& games, const GrpoConfig& config,
                              Rng rng, std::ostream* log = nullptr);

/// Fraction of greedy moves that are legal over every target-player prefix that fits.
double greedy_legality(const Model& model, const std::vector<chess::GameRecord>& games, std::size_t max_positions);

} // namespace mom::grpo
