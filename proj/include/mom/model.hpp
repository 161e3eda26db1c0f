#pragma once

#include "mom/autograd.hpp"
#include "mom/rng.hpp"
#include "mom/tensor.hpp"
#include "mom/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom
{

class ContextOverflow : public std::length_error
{
public:
    using std::length_error::length_error;
};

class AllMasksEmpty : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct ModelConfig
{
    int n_layers = 4;
    int n_heads = 4;
    int d_model = 128;
    int d_ff = 512;
    int context_len = 512;
    int vocab_size = static_cast<int>(Vocab::kSize);
    double dropout = 0.0;
    // Routed mixture: 0 means a plain dense model.
    int n_experts = 0;
    int top_k = 2;

    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct OptimConfig
{
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    int warmup_steps = 0;
    double grad_clip = 1.0; // global norm; <= 0 disables

    bool operator==(const OptimConfig&) const = default;
};

using ParamMap = std::map<std::string, Tensor>;

struct AdamState
{
    ParamMap m;
    ParamMap v;
    long step = 0;
};

/// A decoder-only transformer over the 32-token vocabulary. With n_experts > 0 every layer's
/// qkv and output projections exist once per expert (prefixed "e{p}.") and a per-layer gate
/// "h{l}.gate.{w,b}" routes tokens between them.
struct Model
{
    ModelConfig config;
    OptimConfig optim;
    ParamMap params;
    AdamState adam;
    std::uint64_t seed = Rng::kDefaultSeed;

    /// Fresh parameters: N(0, 0.02) matrices, residual projections scaled by 1/sqrt(2L), zero
    /// biases, unit LayerNorm gains. Values are rounded to float32.
    static Model init(const ModelConfig& config, std::uint64_t seed = Rng::kDefaultSeed);

    std::size_t parameter_count() const;
    const Tensor& param(const std::string& name) const;
};

/// Names of the projections that become per-expert when stitching.
bool is_gated_param(const std::string& name);
std::string layer_param(int layer, const std::string& suffix);
std::string expert_param(int expert, const std::string& name);

enum class RoutingMode
{
    Eval,  // top-k by probability, weights renormalised over the selection
    Gumbel // softmax((logits + Gumbel noise) / tau) over all experts
};

struct RouteEntry
{
    std::vector<int> experts;  // selected, by descending probability
    std::vector<double> probs; // full-softmax probability of each selected expert
    std::vector<double> full;  // full softmax over all experts
    std::vector<double> mix;   // mixing weight actually applied to each expert
};

struct ForwardOptions
{
    Rng* dropout_rng = nullptr; // dropout is active only when set
    RoutingMode routing = RoutingMode::Eval;
    double tau = 1.0;
    Rng* gumbel_rng = nullptr;
    /// Parameters for which this returns false enter the tape as frozen leaves.
    std::function<bool(const std::string&)> trainable;
    /// When set, receives [position][layer] routing decisions.
    std::vector<std::vector<RouteEntry>>* trace = nullptr;
};

struct TapeForward
{
    Var logits; // T × vocab
    std::map<std::string, Var> leaves;
};

TapeForward forward_tape(Graph& g, const Model& model, const std::vector<TokenId>& ids,
                         const ForwardOptions& opts = {});

/// Logits for every position (len × 32). Throws ContextOverflow when len > context_len.
Tensor forward_logits(const Model& model, const std::vector<TokenId>& ids);

/// Top-k selection per the eval routing rule: indices by descending probability, ties to the
/// lower index.
std::vector<int> top_k_indices(const std::vector<double>& probs, int k);

/// Clips to context and builds the loss weights of one sequence (1 per masked target).
struct SequenceTargets
{
    std::vector<TokenId> inputs;
    std::vector<int> targets;
    std::vector<double> weights;
    std::size_t masked = 0;
};
SequenceTargets sequence_targets(const TokenMask& seq, int context_len);

struct LossReport
{
    double ssl_loss = 0.0; // mean negative log-likelihood per masked token
    std::size_t masked_token_count = 0;
    double grad_norm = 0.0;
};

/// Mean masked cross-entropy over the batch and its gradient.
struct LossAndGrad
{
    double loss = 0.0;
    std::size_t masked = 0;
    ParamMap grads;
};
LossAndGrad ssl_loss_and_grad(const Model& model, const std::vector<TokenMask>& batch,
                              const ForwardOptions& opts = {});
double ssl_loss(const Model& model, const std::vector<TokenMask>& batch);

/// One AdamW update from `grads` (missing names are untouched). Returns the pre-clip global
/// gradient norm. Weight decay applies to matrices only.
double adamw_update(Model& model, const ParamMap& grads);
double adamw_update(ParamMap& params, AdamState& state, const OptimConfig& optim, const ParamMap& grads);

/// Loss, one optimizer update, pre-update loss report.
LossReport ssl_step(Model& model, const std::vector<TokenMask>& batch, Rng* dropout_rng = nullptr);

/// `steps` updates on batches drawn uniformly with replacement; one JSON line per step to `log`.
std::vector<LossReport> ssl_train(Model& model, const std::vector<TokenMask>& corpus, int steps, int batch_size, Rng rng,
                                  std::ostream* log = nullptr);

/// Largest |analytic − numeric| / max(|analytic|, |numeric|, floor) over every parameter entry.
double gradient_check(const Model& model, const std::vector<TokenMask>& batch, double eps = 1e-5,
                      double floor = 1e-6);

/// Incremental decoder with a key/value cache; numerically matches forward_tape in eval mode.
class Decoder
{
public:
    explicit Decoder(const Model& model);

    /// Appends one token and returns the next-token logits.
    const std::vector<double>& feed(TokenId token);
    const std::vector<double>& feed(const std::vector<TokenId>& tokens);
    void reset();
    int length() const { return pos_; }
    int capacity() const { return model_.config.context_len; }
    const std::vector<double>& logits() const { return logits_; }
    /// Routing decisions of the last fed token, one per layer (mixture models only).
    const std::vector<RouteEntry>& last_routes() const { return routes_; }

private:
    const Model& model_;
    int pos_ = 0;
    std::vector<Tensor> keys_, values_; // per layer, context_len × d
    std::vector<double> logits_;
    std::vector<RouteEntry> routes_;
};

struct DecodePolicy
{
    bool greedy = true;
    double temperature = 1.0;

    static DecodePolicy Greedy() { return {true, 1.0}; }
    static DecodePolicy Temperature(double t) { return {false, t}; }
};

struct GeneratedMove
{
    std::string text;            // emitted characters without the terminating space
    std::vector<TokenId> tokens; // every emitted token, terminator included
    std::vector<double> logprobs; // log p(token) under the model at temperature 1
    bool terminated = false;      // ended on ' ' or '#'
};

constexpr int kMaxMoveTokens = 12;

/// Decodes one move after `prefix`. Throws ContextOverflow if the move cannot fit.
GeneratedMove generate_move(const Model& model, const std::vector<TokenId>& prefix, const DecodePolicy& policy,
                            Rng& rng);
/// Continues from a decoder already primed with the prefix.
GeneratedMove generate_move(Decoder& decoder, const DecodePolicy& policy, Rng& rng);

void write_checkpoint(std::ostream& out, const Model& model, bool with_optimizer = true,
                      const std::map<std::string, std::string>& meta = {});
Model read_checkpoint(std::istream& in, std::map<std::string, std::string>* meta = nullptr);
void save_checkpoint(const std::string& path, const Model& model, bool with_optimizer = true,
                     const std::map<std::string, std::string>& meta = {});
Model load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta = nullptr);

/// Rounds every entry to the nearest float32.
void quantize_f32(Tensor& t);

} // namespace mom
