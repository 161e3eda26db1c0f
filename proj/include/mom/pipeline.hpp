#pragma once

#include "mom/arena.hpp"
#include "mom/grpo.hpp"
#include "mom/model.hpp"
#include "mom/moe.hpp"
#include "mom/stylometry.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mom::pipeline
{

class MissingArtifact : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class ConfigInvalid : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// A player's games: a PGN file, or a synthetic corpus drawn from a built-in style.
struct PlayerSource
{
    std::string name;
    std::string pgn;   // path, relative to the config file
    std::string style; // builtin synthetic style when pgn is empty
    int games = 100;
    int min_plies = 40;
    int max_plies = 80;

    bool operator==(const PlayerSource&) const = default;
};

struct DataSection
{
    std::vector<PlayerSource> players;
    bool mate_complete = false;
    double train_fraction = 0.8;

    bool operator==(const DataSection&) const = default;
};

struct SslSection
{
    int seed_steps = 300;
    int expert_steps = 300;
    int batch_size = 8;
    double lr = 3e-3;
    double weight_decay = 0.01;

    bool operator==(const SslSection&) const = default;
};

struct GrpoSection
{
    bool enabled = true;
    grpo::GrpoConfig config;
};

struct StitchSection
{
    std::string merge = "uniform";
    int top_k = 2;
    double lambda = 1.0;
    int fisher_games = 16;

    bool operator==(const StitchSection&) const = default;
};

struct RouterSection
{
    int steps = 300;
    int batch_size = 8;
    double lr = 1e-3;
    double tau0 = 1.0;
    double tau_floor = 0.1;
    int mixture_games = 200;

    bool operator==(const RouterSection&) const = default;
};

struct BattleSection
{
    arena::BattleConfig config;
    int accuracy_skip_moves = 16;
};

struct StylometrySection
{
    bool enabled = true;
    stylo::StyloConfig config;
    std::vector<int> recall_k{1, 2};
    std::vector<int> split_pcts{30, 50, 70, 90};
    int resamples = 100;
};

struct RunConfig
{
    std::uint64_t seed = Rng::kDefaultSeed;
    std::string out_dir = "runs/default";
    DataSection data;
    ModelConfig model;
    SslSection ssl;
    GrpoSection grpo;
    StitchSection stitch;
    RouterSection router;
    BattleSection battle;
    StylometrySection stylometry;

    void validate() const;
    /// Compares the serialized forms.
    bool operator==(const RunConfig& o) const;
};

nlohmann::ordered_json to_json(const RunConfig& c);
/// Strict: unknown keys and wrong types throw ConfigInvalid. Missing keys keep their defaults.
RunConfig from_json(const nlohmann::json& j);
std::string serialize(const RunConfig& c);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// A small configuration that runs the whole pipeline in minutes on synthetic players.
RunConfig toy_config();

enum class Stage
{
    Ingest,
    TrainExpert,
    Grpo,
    Stitch,
    TrainRouter,
    Battle,
    Stylometry,
    Report
};

const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);

struct Environment
{
    std::string engine;      // UCI engine binary
    std::vector<std::string> engine_args;
    int jobs = 1;
    std::ostream* log = nullptr; // progress lines
};

struct StageResult
{
    Stage stage = Stage::Ingest;
    bool skipped = false; // manifest already matched the stage hash
    std::string stage_hash;
    std::filesystem::path manifest;
};

/// Runs one stage; upstream manifests must exist. Artifacts are written to temporary files and
/// renamed into place.
StageResult run_stage(const RunConfig& config, Stage stage, const Environment& env);

/// Every stage in order.
std::vector<StageResult> run_all(const RunConfig& config, const Environment& env);

/// Mean and sample standard deviation (0 for a single value).
struct MeanStd
{
    double mean = 0.0;
    double std = 0.0;
};
MeanStd mean_std(const std::vector<double>& xs);

struct ModelSummary
{
    std::string model;
    MeanStd win, draw, fide;
    double legality = 0.0;
    std::optional<double> master_accuracy;
    int games = 0;
    int aborted = 0;
};

/// Per-model rows from per-run outcome lists.
ModelSummary summarize_runs(const std::string& model, const std::vector<std::vector<arena::GameOutcome>>& runs);

struct Report
{
    std::string text;
    nlohmann::ordered_json json;
};

/// Builds the summary tables from the battle (required), router and stylometry artifacts.
Report build_report(const std::filesystem::path& out_dir);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

} // namespace mom::pipeline
