#include "mom/pipeline.hpp"

#include "mom/dataset.hpp"
#include "mom/hash.hpp"
#include "mom/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

namespace mom::pipeline
{

namespace fs = std::filesystem;
using chess::GameRecord;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------------------------
// Files

void write_file_atomic(const fs::path& path, const std::string& content)
{
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        if (!out)
            throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MissingArtifact("missing " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------------------------
// Configuration

namespace
{

// Reads known keys from one JSON object and rejects the rest.
class Strict
{
public:
    Strict(const json& j, std::string path) : j_(j), path_(std::move(path))
    {
        if (!j.is_object())
            throw ConfigInvalid(path_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        if (!j_.contains(key))
            return;
        try
        {
            out = j_.at(key).get<T>();
        }
        catch (const json::exception&)
        {
            throw ConfigInvalid(path_ + "." + key + " has the wrong type");
        }
    }

    const json* object(const char* key)
    {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

    ~Strict() noexcept(false)
    {
        if (std::uncaught_exceptions() > 0)
            return;
        for (const auto& [k, _] : j_.items())
            if (!seen_.count(k))
                throw ConfigInvalid("unknown key " + path_ + "." + k);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

ojson model_json(const ModelConfig& m)
{
    return {{"n_layers", m.n_layers}, {"n_heads", m.n_heads},         {"d_model", m.d_model},
            {"d_ff", m.d_ff},         {"context_len", m.context_len}, {"dropout", m.dropout}};
}

ojson player_json(const PlayerSource& p)
{
    return {{"name", p.name},   {"pgn", p.pgn},           {"style", p.style},
            {"games", p.games}, {"min_plies", p.min_plies}, {"max_plies", p.max_plies}};
}

} // namespace

ojson to_json(const RunConfig& c)
{
    ojson j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    ojson players = ojson::array();
    for (const auto& p : c.data.players)
        players.push_back(player_json(p));
    j["data"] = {{"players", players}, {"mate_complete", c.data.mate_complete}, {"train_fraction", c.data.train_fraction}};
    j["model"] = model_json(c.model);
    j["ssl"] = {{"seed_steps", c.ssl.seed_steps}, {"expert_steps", c.ssl.expert_steps}, {"batch_size", c.ssl.batch_size},
                {"lr", c.ssl.lr},                 {"weight_decay", c.ssl.weight_decay}};
    const auto& g = c.grpo.config;
    j["grpo"] = {{"enabled", c.grpo.enabled}, {"steps", g.steps},   {"group_size", g.group_size},
                 {"groups", g.groups},        {"clip_eps", g.clip_eps}, {"beta", g.beta},
                 {"temperature", g.temperature}, {"lr", g.lr}};
    j["stitch"] = {{"merge", c.stitch.merge},
                   {"top_k", c.stitch.top_k},
                   {"lambda", c.stitch.lambda},
                   {"fisher_games", c.stitch.fisher_games}};
    j["router"] = {{"steps", c.router.steps}, {"batch_size", c.router.batch_size}, {"lr", c.router.lr},
                   {"tau0", c.router.tau0},   {"tau_floor", c.router.tau_floor},   {"mixture_games", c.router.mixture_games}};
    const auto& b = c.battle.config;
    j["battle"] = {{"engine_level", b.engine_level},   {"node_limit", b.node_limit},
                   {"max_turns", b.max_turns},         {"games_per_run", b.games_per_run},
                   {"runs", b.runs},                   {"opening_plies", b.opening_plies},
                   {"opening_top_n", b.opening_top_n}, {"opening_temp", b.opening_temp},
                   {"draw_margin", b.draw_margin},     {"accuracy_skip_moves", c.battle.accuracy_skip_moves}};
    const auto& s = c.stylometry.config;
    j["stylometry"] = {{"enabled", c.stylometry.enabled},
                       {"token_dim", s.token_dim},
                       {"embed_dim", s.embed_dim},
                       {"frames", s.frames},
                       {"skip_opening_moves", s.skip_opening_moves},
                       {"games_per_player", s.games_per_player},
                       {"sim_w", s.sim_w},
                       {"sim_b", s.sim_b},
                       {"lambda_m", s.lambda_m},
                       {"lambda_c", s.lambda_c},
                       {"mu", s.mu},
                       {"lr", s.lr},
                       {"steps", s.steps},
                       {"recall_k", c.stylometry.recall_k},
                       {"split_pcts", c.stylometry.split_pcts},
                       {"resamples", c.stylometry.resamples}};
    return j;
}

RunConfig from_json(const json& j)
{
    RunConfig c;
    Strict top(j, "config");
    top.get("seed", c.seed);
    top.get("out_dir", c.out_dir);
    if (const json* d = top.object("data"))
    {
        Strict r(*d, "data");
        r.get("mate_complete", c.data.mate_complete);
        r.get("train_fraction", c.data.train_fraction);
        if (const json* ps = r.object("players"))
        {
            if (!ps->is_array())
                throw ConfigInvalid("data.players must be an array");
            for (std::size_t i = 0; i < ps->size(); ++i)
            {
                PlayerSource p;
                Strict pr(ps->at(i), "data.players[" + std::to_string(i) + "]");
                pr.get("name", p.name);
                pr.get("pgn", p.pgn);
                pr.get("style", p.style);
                pr.get("games", p.games);
                pr.get("min_plies", p.min_plies);
                pr.get("max_plies", p.max_plies);
                c.data.players.push_back(p);
            }
        }
    }
    if (const json* m = top.object("model"))
    {
        Strict r(*m, "model");
        r.get("n_layers", c.model.n_layers);
        r.get("n_heads", c.model.n_heads);
        r.get("d_model", c.model.d_model);
        r.get("d_ff", c.model.d_ff);
        r.get("context_len", c.model.context_len);
        r.get("dropout", c.model.dropout);
    }
    if (const json* m = top.object("ssl"))
    {
        Strict r(*m, "ssl");
        r.get("seed_steps", c.ssl.seed_steps);
        r.get("expert_steps", c.ssl.expert_steps);
        r.get("batch_size", c.ssl.batch_size);
        r.get("lr", c.ssl.lr);
        r.get("weight_decay", c.ssl.weight_decay);
    }
    if (const json* m = top.object("grpo"))
    {
        Strict r(*m, "grpo");
        auto& g = c.grpo.config;
        r.get("enabled", c.grpo.enabled);
        r.get("steps", g.steps);
        r.get("group_size", g.group_size);
        r.get("groups", g.groups);
        r.get("clip_eps", g.clip_eps);
        r.get("beta", g.beta);
        r.get("temperature", g.temperature);
        r.get("lr", g.lr);
    }
    if (const json* m = top.object("stitch"))
    {
        Strict r(*m, "stitch");
        r.get("merge", c.stitch.merge);
        r.get("top_k", c.stitch.top_k);
        r.get("lambda", c.stitch.lambda);
        r.get("fisher_games", c.stitch.fisher_games);
    }
    if (const json* m = top.object("router"))
    {
        Strict r(*m, "router");
        r.get("steps", c.router.steps);
        r.get("batch_size", c.router.batch_size);
        r.get("lr", c.router.lr);
        r.get("tau0", c.router.tau0);
        r.get("tau_floor", c.router.tau_floor);
        r.get("mixture_games", c.router.mixture_games);
    }
    if (const json* m = top.object("battle"))
    {
        Strict r(*m, "battle");
        auto& b = c.battle.config;
        r.get("engine_level", b.engine_level);
        r.get("node_limit", b.node_limit);
        r.get("max_turns", b.max_turns);
        r.get("games_per_run", b.games_per_run);
        r.get("runs", b.runs);
        r.get("opening_plies", b.opening_plies);
        r.get("opening_top_n", b.opening_top_n);
        r.get("opening_temp", b.opening_temp);
        r.get("draw_margin", b.draw_margin);
        r.get("accuracy_skip_moves", c.battle.accuracy_skip_moves);
    }
    if (const json* m = top.object("stylometry"))
    {
        Strict r(*m, "stylometry");
        auto& s = c.stylometry.config;
        r.get("enabled", c.stylometry.enabled);
        r.get("token_dim", s.token_dim);
        r.get("embed_dim", s.embed_dim);
        r.get("frames", s.frames);
        r.get("skip_opening_moves", s.skip_opening_moves);
        r.get("games_per_player", s.games_per_player);
        r.get("sim_w", s.sim_w);
        r.get("sim_b", s.sim_b);
        r.get("lambda_m", s.lambda_m);
        r.get("lambda_c", s.lambda_c);
        r.get("mu", s.mu);
        r.get("lr", s.lr);
        r.get("steps", s.steps);
        r.get("recall_k", c.stylometry.recall_k);
        r.get("split_pcts", c.stylometry.split_pcts);
        r.get("resamples", c.stylometry.resamples);
    }
    return c;
}

bool RunConfig::operator==(const RunConfig& o) const
{
    return to_json(*this) == to_json(o);
}

void RunConfig::validate() const
{
    try
    {
        const auto& ps = data.players;
        if (ps.size() < 2)
            throw ConfigInvalid("need at least two players");
        static const std::regex name_re("[A-Za-z0-9_-]+");
        std::set<std::string> names;
        const auto styles = synth::builtin_styles();
        for (const auto& p : ps)
        {
            if (!std::regex_match(p.name, name_re) || p.name == "mom")
                throw ConfigInvalid("player name '" + p.name + "' must be [A-Za-z0-9_-]+ and not 'mom'");
            if (!names.insert(p.name).second)
                throw ConfigInvalid("duplicate player " + p.name);
            if (p.pgn.empty())
            {
                if (std::none_of(styles.begin(), styles.end(), [&](const auto& s) { return s.name == p.style; }))
                    throw ConfigInvalid("player " + p.name + " needs a pgn path or a builtin style");
                if (p.games < 1 || p.min_plies < 1 || p.max_plies < p.min_plies)
                    throw ConfigInvalid("player " + p.name + " has invalid synthetic corpus sizes");
            }
        }
        if (!(data.train_fraction > 0 && data.train_fraction < 1))
            throw ConfigInvalid("data.train_fraction must lie in (0, 1)");
        ModelConfig m = model;
        m.n_experts = 0;
        m.validate();
        if (ssl.seed_steps < 0 || ssl.expert_steps < 0 || ssl.batch_size < 1 || !(ssl.lr > 0) || ssl.weight_decay < 0)
            throw ConfigInvalid("invalid ssl section");
        grpo.config.validate();
        if (grpo.config.steps < 0)
            throw ConfigInvalid("grpo.steps must be non-negative");
        moe::parse_merge_algo(stitch.merge);
        if (stitch.top_k < 1 || stitch.top_k > static_cast<int>(ps.size()))
            throw ConfigInvalid("stitch.top_k must lie in [1, number of players]");
        if (stitch.fisher_games < 1)
            throw ConfigInvalid("stitch.fisher_games must be positive");
        if (router.steps < 0 || router.batch_size < 1 || !(router.lr > 0) || !(router.tau0 > 0) ||
            !(router.tau_floor > 0) || router.tau_floor > router.tau0 || router.mixture_games < 2)
            throw ConfigInvalid("invalid router section");
        battle.config.validate();
        if (battle.accuracy_skip_moves < 0)
            throw ConfigInvalid("battle.accuracy_skip_moves must be non-negative");
        stylometry.config.validate();
        for (int k : stylometry.recall_k)
            if (k < 1)
                throw ConfigInvalid("stylometry.recall_k entries must be positive");
        for (int s : stylometry.split_pcts)
            if (s < 1 || s > 100)
                throw ConfigInvalid("stylometry.split_pcts entries must lie in [1, 100]");
        if (stylometry.resamples < 1)
            throw ConfigInvalid("stylometry.resamples must be positive");
    }
    catch (const ConfigInvalid&)
    {
        throw;
    }
    catch (const std::invalid_argument& e)
    {
        throw ConfigInvalid(e.what());
    }
}

std::string serialize(const RunConfig& c)
{
    return to_json(c).dump(2) + "\n";
}

RunConfig parse_config(const std::string& text)
{
    json j;
    try
    {
        j = json::parse(text);
    }
    catch (const json::parse_error& e)
    {
        throw ConfigInvalid(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = from_json(j);
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigInvalid("cannot read config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    RunConfig c = parse_config(ss.str());
    const fs::path base = fs::path(path).parent_path();
    for (auto& p : c.data.players)
        if (!p.pgn.empty() && fs::path(p.pgn).is_relative())
            p.pgn = (base / p.pgn).lexically_normal().string();
    return c;
}

RunConfig toy_config()
{
    RunConfig c;
    c.out_dir = "runs/toy";
    c.data.players = {{"aggressor", "", "aggressor", 50, 40, 80}, {"builder", "", "builder", 50, 40, 80}};
    c.model.n_layers = 2;
    c.model.n_heads = 2;
    c.model.d_model = 32;
    c.model.d_ff = 128;
    c.model.context_len = 96;
    c.model.dropout = 0.0;
    c.ssl.seed_steps = 150;
    c.ssl.expert_steps = 100;
    c.grpo.config.steps = 20;
    c.grpo.config.group_size = 4;
    c.grpo.config.groups = 4;
    c.grpo.config.lr = 3e-4;
    c.router.steps = 60;
    c.router.mixture_games = 80;
    c.battle.config.node_limit = 2000;
    c.battle.config.max_turns = 40;
    c.battle.config.games_per_run = 4;
    c.battle.config.runs = 2;
    c.stylometry.config.token_dim = 16;
    c.stylometry.config.embed_dim = 16;
    c.stylometry.config.steps = 40;
    c.stylometry.resamples = 20;
    return c;
}

// ---------------------------------------------------------------------------------------------
// Stages

const std::vector<Stage>& all_stages()
{
    static const std::vector<Stage> s{Stage::Ingest,      Stage::TrainExpert, Stage::Grpo,       Stage::Stitch,
                                      Stage::TrainRouter, Stage::Battle,      Stage::Stylometry, Stage::Report};
    return s;
}

std::string stage_name(Stage s)
{
    switch (s)
    {
    case Stage::Ingest: return "ingest";
    case Stage::TrainExpert: return "train-expert";
    case Stage::Grpo: return "grpo";
    case Stage::Stitch: return "stitch";
    case Stage::TrainRouter: return "train-router";
    case Stage::Battle: return "battle";
    case Stage::Stylometry: return "stylometry";
    case Stage::Report: return "report";
    }
    return "?";
}

Stage parse_stage(const std::string& name)
{
    for (Stage s : all_stages())
        if (stage_name(s) == name)
            return s;
    throw ConfigInvalid("unknown stage " + name);
}

namespace
{

fs::path stage_dir(const RunConfig& c, Stage s)
{
    return fs::path(c.out_dir) / stage_name(s);
}

ojson read_manifest(const RunConfig& c, Stage s)
{
    const fs::path p = stage_dir(c, s) / "manifest.json";
    if (!fs::exists(p))
        throw MissingArtifact("stage " + stage_name(s) + " has not been run (no " + p.string() + ")");
    return ojson::parse(read_file(p));
}

std::vector<Stage> upstream_of(Stage s)
{
    switch (s)
    {
    case Stage::Ingest: return {};
    case Stage::TrainExpert: return {Stage::Ingest};
    case Stage::Grpo: return {Stage::TrainExpert};
    case Stage::Stitch: return {Stage::Grpo};
    case Stage::TrainRouter: return {Stage::Stitch};
    case Stage::Battle: return {Stage::TrainRouter};
    case Stage::Stylometry: return {Stage::Battle};
    case Stage::Report: return {Stage::Battle};
    }
    return {};
}

// Configuration that a stage's artifacts depend on directly; upstream stages enter through
// their hashes.
ojson stage_section(const RunConfig& c, Stage s)
{
    const ojson all = to_json(c);
    switch (s)
    {
    case Stage::Ingest: return {{"seed", c.seed}, {"data", all["data"]}};
    case Stage::TrainExpert: return {{"model", all["model"]}, {"ssl", all["ssl"]}};
    case Stage::Grpo: return {{"grpo", all["grpo"]}};
    case Stage::Stitch: return {{"stitch", all["stitch"]}};
    case Stage::TrainRouter: return {{"router", all["router"]}};
    case Stage::Battle: return {{"battle", all["battle"]}};
    case Stage::Stylometry: return {{"stylometry", all["stylometry"]}};
    case Stage::Report: return ojson::object();
    }
    return {};
}

std::string engine_label(const Environment& env)
{
    std::string label = fs::path(env.engine).filename().string();
    for (const auto& a : env.engine_args)
        label += " " + a;
    return label;
}

struct StageContext
{
    const RunConfig& config;
    const Environment& env;
    Stage stage;
    fs::path dir;
    std::string hash;
    ojson upstream = ojson::object();
    std::vector<std::string> artifacts; // relative to dir
    ojson summary = ojson::object();
    Rng rng;

    void log(const std::string& line) const
    {
        if (env.log)
            *env.log << "[" << stage_name(stage) << "] " << line << std::endl;
    }

    fs::path path(const std::string& name) const { return dir / name; }

    void write(const std::string& name, const std::string& content)
    {
        write_file_atomic(path(name), content);
        artifacts.push_back(name);
    }

    void add(const std::string& name) { artifacts.push_back(name); }
};

std::string compute_hash(const RunConfig& c, Stage s, const Environment& env, ojson& upstream)
{
    std::string key = stage_name(s) + "\n" + stage_section(c, s).dump() + "\n";
    for (Stage u : upstream_of(s))
    {
        const ojson m = read_manifest(c, u);
        upstream[stage_name(u)] = m.at("stage_hash");
        key += stage_name(u) + "=" + m.at("stage_hash").get<std::string>() + "\n";
    }
    if (s == Stage::Report)
    {
        for (Stage opt : {Stage::Stylometry})
            if (fs::exists(stage_dir(c, opt) / "manifest.json"))
            {
                const ojson m = read_manifest(c, opt);
                upstream[stage_name(opt)] = m.at("stage_hash");
                key += stage_name(opt) + "=" + m.at("stage_hash").get<std::string>() + "\n";
            }
    }
    if (s == Stage::Battle || (s == Stage::Ingest && c.data.mate_complete))
        key += "engine=" + engine_label(env) + "\n";
    return content_hash(key);
}

bool up_to_date(const fs::path& dir, const std::string& hash)
{
    const fs::path mp = dir / "manifest.json";
    if (!fs::exists(mp))
        return false;
    ojson m;
    try
    {
        m = ojson::parse(read_file(mp));
    }
    catch (const json::exception&)
    {
        return false;
    }
    if (m.value("stage_hash", "") != hash)
        return false;
    for (const auto& a : m.at("artifacts"))
    {
        const fs::path p = dir / a.at("path").get<std::string>();
        if (!fs::exists(p) || content_hash(read_file(p)) != a.at("hash").get<std::string>())
            return false;
    }
    return true;
}

void write_manifest(StageContext& ctx)
{
    ojson m;
    m["stage"] = stage_name(ctx.stage);
    m["stage_hash"] = ctx.hash;
    m["seed"] = ctx.config.seed;
    ojson resolved = to_json(ctx.config);
    resolved.erase("out_dir");
    m["config_hash"] = content_hash(resolved.dump());
    m["config"] = stage_section(ctx.config, ctx.stage);
    m["upstream"] = ctx.upstream;
    ojson arts = ojson::array();
    for (const auto& a : ctx.artifacts)
    {
        const std::string bytes = read_file(ctx.path(a));
        arts.push_back({{"path", a}, {"bytes", bytes.size()}, {"hash", content_hash(bytes)}});
    }
    m["artifacts"] = arts;
    m["summary"] = ctx.summary;
    write_file_atomic(ctx.path("manifest.json"), m.dump(2) + "\n");
}

Rng stage_rng(const RunConfig& c, Stage s)
{
    return Rng(c.seed).split(stage_name(s));
}

// --- shared loaders ---

std::string split_name(dataset::Split s)
{
    return s == dataset::Split::Train ? "train" : "test";
}

struct PlayerData
{
    std::string name;
    std::vector<GameRecord> train, test;
};

std::vector<PlayerData> load_players(const RunConfig& c)
{
    std::vector<PlayerData> out;
    for (const auto& p : c.data.players)
    {
        const auto parsed = chess::parse_pgn(read_file(stage_dir(c, Stage::Ingest) / (p.name + ".pgn")), p.name);
        PlayerData d{p.name, {}, {}};
        for (const auto& g : parsed.games)
            (g.tag("Split") == "test" ? d.test : d.train).push_back(g);
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<TokenMask> masks_of(const std::vector<GameRecord>& games)
{
    std::vector<TokenMask> out;
    for (const auto& g : games)
        out.push_back(dataset::player_mask(g));
    return out;
}

std::vector<GameRecord> all_train(const std::vector<PlayerData>& ps)
{
    std::vector<GameRecord> out;
    for (const auto& p : ps)
        out.insert(out.end(), p.train.begin(), p.train.end());
    return out;
}

Model load_model(const fs::path& p)
{
    if (!fs::exists(p))
        throw MissingArtifact("missing checkpoint " + p.string());
    return load_checkpoint(p.string());
}

fs::path expert_path(const RunConfig& c, const std::string& name)
{
    return c.grpo.enabled ? stage_dir(c, Stage::Grpo) / (name + ".ckpt")
                          : stage_dir(c, Stage::TrainExpert) / (name + ".ckpt");
}

struct BattleModel
{
    std::string label;
    fs::path checkpoint;
    std::vector<std::size_t> players; // whose test games measure master accuracy
};

std::vector<BattleModel> battle_models(const RunConfig& c)
{
    std::vector<BattleModel> out;
    std::vector<std::size_t> everyone;
    for (std::size_t i = 0; i < c.data.players.size(); ++i)
    {
        const std::string& n = c.data.players[i].name;
        out.push_back({n + ".ssl", stage_dir(c, Stage::TrainExpert) / (n + ".ckpt"), {i}});
        if (c.grpo.enabled)
            out.push_back({n + ".grpo", stage_dir(c, Stage::Grpo) / (n + ".ckpt"), {i}});
        everyone.push_back(i);
    }
    out.push_back({"mom", stage_dir(c, Stage::TrainRouter) / "mom.ckpt", everyone});
    return out;
}

std::unique_ptr<uci::UciSession> open_engine(const Environment& env, int level)
{
    if (env.engine.empty())
        throw uci::EngineUnavailable("no engine configured");
    auto s = std::make_unique<uci::UciSession>(std::make_unique<uci::ProcessChannel>(env.engine, env.engine_args));
    s->handshake({{"Skill Level", std::to_string(level)}});
    return s;
}

double mean_of(const std::vector<double>& xs, std::size_t from, std::size_t to)
{
    double s = 0;
    for (std::size_t i = from; i < to; ++i)
        s += xs[i];
    return to > from ? s / static_cast<double>(to - from) : 0.0;
}

// --- stage bodies ---

void run_ingest(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    std::unique_ptr<uci::UciSession> engine;
    if (c.data.mate_complete)
        engine = open_engine(ctx.env, 20);
    const auto styles = synth::builtin_styles();
    for (const auto& p : c.data.players)
    {
        std::vector<GameRecord> raw;
        std::size_t parse_errors = 0;
        if (!p.pgn.empty())
        {
            auto parsed = chess::parse_pgn(read_file(p.pgn), p.name);
            raw = std::move(parsed.games);
            parse_errors = parsed.errors.size();
        }
        else
        {
            const auto& style = *std::find_if(styles.begin(), styles.end(), [&](const auto& s) { return s.name == p.style; });
            raw = synth::generate_corpus(style, p.games, p.min_plies, p.max_plies, ctx.rng.split("synth").split(p.name),
                                         p.name);
        }
        if (engine)
            for (auto& g : raw)
                g = dataset::mate_complete(g, *engine);
        dataset::PlayerDataset d{p.name, dataset::filter_corpus(raw), {}};
        d = dataset::balance_colors(d, ctx.rng.split("balance").split(p.name));
        dataset::assign_splits(d, ctx.rng.split("split").split(p.name), c.data.train_fraction);
        std::string pgn;
        std::size_t train = 0;
        for (std::size_t i = 0; i < d.records.size(); ++i)
        {
            GameRecord g = d.records[i];
            g.set_tag("Split", split_name(d.split[i]));
            train += d.split[i] == dataset::Split::Train;
            pgn += chess::write_pgn(g);
        }
        ctx.write(p.name + ".pgn", pgn);
        ctx.write(p.name + ".manifest.txt", dataset::manifest(d));
        ctx.summary[p.name] = {{"raw", raw.size()},
                               {"parse_errors", parse_errors},
                               {"kept", d.records.size()},
                               {"white", d.count(chess::Color::White)},
                               {"black", d.count(chess::Color::Black)},
                               {"train", train},
                               {"test", d.records.size() - train}};
        ctx.log(p.name + ": " + std::to_string(d.records.size()) + " games kept of " + std::to_string(raw.size()));
        if (train == 0)
            throw ConfigInvalid("player " + p.name + " has no training games after filtering");
    }
}

void run_train_expert(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    const auto players = load_players(c);
    ModelConfig mc = c.model;
    mc.n_experts = 0;
    Model seed = Model::init(mc, Rng(c.seed).split("init").next_u64());
    seed.optim.lr = c.ssl.lr;
    seed.optim.weight_decay = c.ssl.weight_decay;
    std::ostringstream log;
    auto rep = ssl_train(seed, masks_of(all_train(players)), c.ssl.seed_steps, c.ssl.batch_size,
                         ctx.rng.split("seed"), &log);
    save_checkpoint(ctx.path("seed.ckpt").string(), seed);
    ctx.add("seed.ckpt");
    ctx.write("seed.jsonl", log.str());
    auto last_loss = [](const std::vector<LossReport>& r) { return r.empty() ? 0.0 : r.back().ssl_loss; };
    ctx.summary["seed"] = {{"steps", rep.size()}, {"final_loss", last_loss(rep)}};
    ctx.log("seed model: final loss " + std::to_string(last_loss(rep)));
    for (const auto& p : players)
    {
        Model m = seed;
        m.adam = AdamState{};
        std::ostringstream plog;
        auto r = ssl_train(m, masks_of(p.train), c.ssl.expert_steps, c.ssl.batch_size,
                           ctx.rng.split("expert").split(p.name), &plog);
        save_checkpoint(ctx.path(p.name + ".ckpt").string(), m);
        ctx.add(p.name + ".ckpt");
        ctx.write(p.name + ".jsonl", plog.str());
        const double legal = grpo::greedy_legality(m, p.test, 200);
        ctx.summary[p.name] = {{"steps", r.size()}, {"final_loss", last_loss(r)}, {"greedy_legality", legal}};
        ctx.log(p.name + ": final loss " + std::to_string(last_loss(r)) + ", greedy legality " + std::to_string(legal));
    }
}

void run_grpo(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    ctx.summary["enabled"] = c.grpo.enabled;
    if (!c.grpo.enabled)
        return;
    const auto players = load_players(c);
    for (const auto& p : players)
    {
        Model m = load_model(stage_dir(c, Stage::TrainExpert) / (p.name + ".ckpt"));
        m.adam = AdamState{};
        std::ostringstream log;
        const auto steps = grpo::train(m, p.train, c.grpo.config, ctx.rng.split(p.name), &log);
        save_checkpoint(ctx.path(p.name + ".ckpt").string(), m);
        ctx.add(p.name + ".ckpt");
        ctx.write(p.name + ".jsonl", log.str());
        std::vector<double> rewards;
        for (const auto& s : steps)
            rewards.push_back(s.mean_reward);
        const std::size_t tenth = std::max<std::size_t>(1, rewards.size() / 10);
        const double first = mean_of(rewards, 0, std::min(tenth, rewards.size()));
        const double last = mean_of(rewards, rewards.size() - std::min(tenth, rewards.size()), rewards.size());
        const double legal = grpo::greedy_legality(m, p.test, 200);
        ctx.summary[p.name] = {{"steps", steps.size()},
                               {"reward_first_10pct", first},
                               {"reward_last_10pct", last},
                               {"greedy_legality", legal}};
        ctx.log(p.name + ": mean reward " + std::to_string(first) + " -> " + std::to_string(last));
    }
}

void run_stitch(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    const auto players = load_players(c);
    std::vector<Model> experts;
    for (const auto& p : players)
        experts.push_back(load_model(expert_path(c, p.name)));
    const Model seed = load_model(stage_dir(c, Stage::TrainExpert) / "seed.ckpt");
    moe::MergeOptions opts;
    opts.algo = moe::parse_merge_algo(c.stitch.merge);
    opts.seed = &seed;
    opts.lambda = c.stitch.lambda;
    if (opts.algo == moe::MergeAlgo::Fisher)
        for (const auto& p : players)
        {
            const std::size_t n = std::min<std::size_t>(p.train.size(), static_cast<std::size_t>(c.stitch.fisher_games));
            opts.fisher_batches.push_back(masks_of({p.train.begin(), p.train.begin() + static_cast<std::ptrdiff_t>(n)}));
        }
    Model mom = moe::stitch(experts, c.stitch.top_k, opts, ctx.rng.split("gate").next_u64());
    mom.optim.weight_decay = c.ssl.weight_decay;
    save_checkpoint(ctx.path("mom.ckpt").string(), mom, false);
    ctx.add("mom.ckpt");
    ctx.summary = {{"experts", experts.size()},
                   {"top_k", c.stitch.top_k},
                   {"merge", c.stitch.merge},
                   {"parameters", mom.parameter_count()}};
    ctx.log("stitched " + std::to_string(experts.size()) + " experts, " + std::to_string(mom.parameter_count()) +
            " parameters");
}

void run_router(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    const auto players = load_players(c);
    Model mom = load_model(stage_dir(c, Stage::Stitch) / "mom.ckpt");
    std::vector<std::vector<GameRecord>> expert_games;
    for (const auto& p : players)
        expert_games.push_back(p.train);
    const auto mixture = moe::mixture_dataset(all_train(players), expert_games,
                                              static_cast<std::size_t>(c.router.mixture_games), ctx.rng.split("mixture"));
    moe::RouterConfig rc;
    rc.steps = c.router.steps;
    rc.batch_size = c.router.batch_size;
    rc.lr = c.router.lr;
    rc.schedule.tau0 = c.router.tau0;
    rc.schedule.floor = c.router.tau_floor;
    rc.schedule.steps = std::max(1, c.router.steps);
    std::ostringstream log;
    const auto steps = moe::train_router(mom, masks_of(mixture), rc, ctx.rng.split("train"), &log);
    save_checkpoint(ctx.path("mom.ckpt").string(), mom, false);
    ctx.add("mom.ckpt");
    ctx.write("router.jsonl", log.str());

    // Route digest: how often each expert is the top choice on each player's own moves.
    std::string traces;
    ojson digest = ojson::object();
    for (const auto& p : players)
    {
        std::vector<std::vector<double>> share(static_cast<std::size_t>(mom.config.n_layers),
                                               std::vector<double>(players.size(), 0.0));
        std::size_t moves = 0;
        for (std::size_t gi = 0; gi < p.test.size(); ++gi)
        {
            const GameRecord& g = p.test[gi];
            const auto trace = moe::route_trace(mom, g);
            std::istringstream lines(moe::route_trace_json(trace));
            std::string line;
            while (std::getline(lines, line))
            {
                ojson j = ojson::parse(line);
                ojson row;
                row["player"] = p.name;
                row["game"] = gi;
                for (auto& [k, v] : j.items())
                    row[k] = v;
                traces += row.dump() + "\n";
            }
            for (const auto& mv : trace)
            {
                if ((mv.ply % 2 == 0) != (g.target_color == chess::Color::White))
                    continue;
                for (std::size_t l = 0; l < mv.layers.size(); ++l)
                    share[l][static_cast<std::size_t>(mv.layers[l].experts.front())] += 1.0;
                ++moves;
            }
        }
        if (moves > 0)
            for (auto& layer : share)
                for (double& v : layer)
                    v /= static_cast<double>(moves);
        digest[p.name] = {{"moves", moves}, {"top_expert_share", share}};
    }
    ctx.write("traces.jsonl", traces);
    ctx.summary = {{"steps", steps.size()},
                   {"loss_first", steps.empty() ? 0.0 : steps.front().loss},
                   {"loss_last", steps.empty() ? 0.0 : steps.back().loss},
                   {"experts", players.size()},
                   {"route_digest", digest}};
    if (!steps.empty())
        ctx.log("router loss " + std::to_string(steps.front().loss) + " -> " + std::to_string(steps.back().loss));
}

ojson outcome_row(int run, int game, const arena::GameOutcome& o)
{
    ojson j;
    j["run"] = run;
    j["game"] = game;
    j["model_color"] = dataset::color_name(o.model_color);
    j["result"] = arena::result_name(o.result);
    j["termination"] = arena::termination_name(o.termination);
    j["final_cp"] = o.final_cp ? ojson(*o.final_cp) : ojson(nullptr);
    j["offending_move"] = o.offending_move;
    return j;
}

void run_battle(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    const auto players = load_players(c);
    const arena::BattleConfig& bc = c.battle.config;
    ojson models = ojson::array();
    for (const auto& bm : battle_models(c))
    {
        const Model model = load_model(bm.checkpoint);
        std::string pgn, rows;
        ojson runs = ojson::array();
        std::vector<std::vector<arena::GameOutcome>> per_run;
        int aborted = 0;
        for (int r = 0; r < bc.runs; ++r)
        {
            const auto report = arena::run_games([&] { return std::make_unique<arena::ModelPlayer>(model); },
                                                 [&] { return open_engine(ctx.env, bc.engine_level); }, bc,
                                                 bc.games_per_run, ctx.rng.split(bm.label).split(static_cast<std::uint64_t>(r)),
                                                 ctx.env.jobs);
            for (std::size_t i = 0; i < report.outcomes.size(); ++i)
            {
                pgn += report.outcomes[i].pgn;
                rows += outcome_row(r, report.game_index[i], report.outcomes[i]).dump() + "\n";
            }
            for (const auto& a : report.aborted)
                rows += ojson{{"run", r}, {"game", a.index}, {"aborted", a.reason}}.dump() + "\n";
            aborted += static_cast<int>(report.aborted.size());
            per_run.push_back(report.outcomes);
        }
        std::vector<GameRecord> test;
        for (std::size_t i : bm.players)
            test.insert(test.end(), players[i].test.begin(), players[i].test.end());
        arena::ModelPlayer greedy(model);
        ojson accuracy = nullptr;
        try
        {
            accuracy = arena::master_accuracy(greedy, test, c.battle.accuracy_skip_moves, ctx.rng.split("accuracy"));
        }
        catch (const arena::EmptyEvaluationSet&)
        {
        }
        ctx.write(bm.label + ".pgn", pgn);
        ctx.write(bm.label + ".jsonl", rows);
        ModelSummary s = summarize_runs(bm.label, per_run);
        s.aborted = aborted;
        models.push_back({{"model", bm.label},
                          {"games", s.games},
                          {"aborted", aborted},
                          {"win", {s.win.mean, s.win.std}},
                          {"draw", {s.draw.mean, s.draw.std}},
                          {"fide", {s.fide.mean, s.fide.std}},
                          {"legality", s.legality},
                          {"master_accuracy", accuracy}});
        ctx.log(bm.label + ": FIDE " + std::to_string(s.fide.mean) + ", legality " + std::to_string(s.legality));
    }
    ctx.summary = {{"engine", engine_label(ctx.env)},
                   {"engine_level", bc.engine_level},
                   {"runs", bc.runs},
                   {"games_per_run", bc.games_per_run},
                   {"models", models}};
}

void run_stylometry(StageContext& ctx)
{
    const RunConfig& c = ctx.config;
    ctx.summary["enabled"] = c.stylometry.enabled;
    if (!c.stylometry.enabled)
        return;
    const auto players = load_players(c);
    std::vector<stylo::PlayerGames> train;
    for (const auto& p : players)
        train.push_back({p.name, p.train});
    stylo::Encoder enc = stylo::Encoder::init(c.stylometry.config, ctx.rng.split("init").next_u64());
    std::ostringstream log;
    const auto steps = stylo::train(enc, train, ctx.rng.split("train"), &log);
    stylo::save_encoder(ctx.path("encoder.bin").string(), enc);
    ctx.add("encoder.bin");
    ctx.write("train.jsonl", log.str());

    std::vector<stylo::EmbeddingRecord> dump;
    auto vectors = [](const std::vector<stylo::EmbeddingRecord>& rs) {
        std::vector<std::vector<double>> out;
        for (const auto& r : rs)
            out.push_back(r.z);
        return out;
    };
    std::vector<std::vector<double>> centroids;
    std::vector<std::vector<std::vector<double>>> real_train;
    for (const auto& p : players)
    {
        const auto test = stylo::embed_games(enc, "real." + p.name, p.test, ctx.rng.split("test").split(p.name));
        if (test.empty())
            throw stylo::TooFewGames("no held-out game of " + p.name + " is long enough for a window");
        centroids.push_back(stylo::mean_embedding(vectors(test)));
        dump.insert(dump.end(), test.begin(), test.end());
        const auto tr = stylo::embed_games(enc, "real." + p.name, p.train, ctx.rng.split("train-emb").split(p.name));
        real_train.push_back(vectors(tr));
    }

    ojson recall = ojson::array();
    auto recall_row = [&](const std::string& label, std::size_t target, const std::vector<std::vector<double>>& zs) {
        ojson row{{"source", label}, {"target", players[target].name}, {"games", zs.size()}};
        ojson ks = ojson::object();
        for (int k : c.stylometry.recall_k)
            ks[std::to_string(k)] = zs.empty() ? ojson(nullptr) : ojson(stylo::acquisition_recall(zs, centroids, target, k));
        row["recall"] = ks;
        if (zs.size() >= 10)
        {
            ojson drift = ojson::array();
            for (const auto& d : stylo::style_consistency(zs, c.stylometry.split_pcts, c.stylometry.resamples,
                                                          ctx.rng.split("drift").split(label)))
                drift.push_back({{"split_pct", d.split_pct}, {"relative", d.relative}, {"spread", d.relative_sd}});
            row["drift"] = drift;
        }
        else
            row["drift"] = nullptr;
        recall.push_back(row);
    };
    for (std::size_t i = 0; i < players.size(); ++i)
        recall_row("real." + players[i].name, i, real_train[i]);
    for (const auto& bm : battle_models(c))
    {
        if (bm.players.size() != 1)
            continue;
        const auto games = chess::parse_pgn(read_file(stage_dir(c, Stage::Battle) / (bm.label + ".pgn")), "model").games;
        const auto recs = stylo::embed_games(enc, bm.label, games, ctx.rng.split("battle").split(bm.label));
        dump.insert(dump.end(), recs.begin(), recs.end());
        recall_row(bm.label, bm.players.front(), vectors(recs));
    }
    std::ostringstream emb;
    stylo::write_embeddings(emb, dump);
    ctx.write("embeddings.bin", emb.str());
    ctx.summary["steps"] = steps.size();
    ctx.summary["loss_first"] = steps.empty() ? 0.0 : steps.front().loss.total;
    ctx.summary["loss_last"] = steps.empty() ? 0.0 : steps.back().loss.total;
    ctx.summary["recall_k"] = c.stylometry.recall_k;
    ctx.summary["rows"] = recall;
    ctx.log("encoder trained, " + std::to_string(dump.size()) + " embeddings");
}

void run_report(StageContext& ctx)
{
    const Report r = build_report(ctx.config.out_dir);
    ctx.write("report.txt", r.text);
    ctx.write("report.json", r.json.dump(2) + "\n");
    ctx.summary = {{"models", r.json.at("battle").at("models").size()}};
    if (ctx.env.log)
        *ctx.env.log << r.text;
}

} // namespace

StageResult run_stage(const RunConfig& config, Stage stage, const Environment& env)
{
    config.validate();
    StageContext ctx{config, env, stage, stage_dir(config, stage), "", ojson::object(), {}, ojson::object(),
                     stage_rng(config, stage)};
    ctx.hash = compute_hash(config, stage, env, ctx.upstream);
    StageResult res{stage, false, ctx.hash, ctx.path("manifest.json")};
    if (up_to_date(ctx.dir, ctx.hash))
    {
        ctx.log("up to date (" + ctx.hash + ")");
        res.skipped = true;
        return res;
    }
    fs::create_directories(ctx.dir);
    write_file_atomic(fs::path(config.out_dir) / "config.json", serialize(config));
    switch (stage)
    {
    case Stage::Ingest: run_ingest(ctx); break;
    case Stage::TrainExpert: run_train_expert(ctx); break;
    case Stage::Grpo: run_grpo(ctx); break;
    case Stage::Stitch: run_stitch(ctx); break;
    case Stage::TrainRouter: run_router(ctx); break;
    case Stage::Battle: run_battle(ctx); break;
    case Stage::Stylometry: run_stylometry(ctx); break;
    case Stage::Report: run_report(ctx); break;
    }
    write_manifest(ctx);
    return res;
}

std::vector<StageResult> run_all(const RunConfig& config, const Environment& env)
{
    std::vector<StageResult> out;
    for (Stage s : all_stages())
        out.push_back(run_stage(config, s, env));
    return out;
}

// ---------------------------------------------------------------------------------------------
// Reporting

MeanStd mean_std(const std::vector<double>& xs)
{
    MeanStd r;
    if (xs.empty())
        return r;
    for (double x : xs)
        r.mean += x;
    r.mean /= static_cast<double>(xs.size());
    if (xs.size() < 2)
        return r;
    double ss = 0;
    for (double x : xs)
        ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return r;
}

ModelSummary summarize_runs(const std::string& model, const std::vector<std::vector<arena::GameOutcome>>& runs)
{
    ModelSummary s;
    s.model = model;
    std::vector<double> win, draw, fide;
    std::vector<arena::GameOutcome> all;
    for (const auto& r : runs)
    {
        if (r.empty())
            continue;
        win.push_back(arena::win_rate(r));
        draw.push_back(arena::draw_rate(r));
        fide.push_back(arena::fide_score(r));
        all.insert(all.end(), r.begin(), r.end());
    }
    s.win = mean_std(win);
    s.draw = mean_std(draw);
    s.fide = mean_std(fide);
    s.games = static_cast<int>(all.size());
    s.legality = all.empty() ? 0.0 : arena::legality_rate(all);
    return s;
}

namespace
{

std::string pm(const json& pair)
{
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(1) << pair.at(0).get<double>() << " ± " << pair.at(1).get<double>();
    return ss.str();
}

std::string pct(const json& v)
{
    if (v.is_null())
        return "n/a";
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(1) << v.get<double>();
    return ss.str();
}

std::string pad(std::string s, std::size_t w)
{
    // width in code points, so "±" counts once
    std::size_t cps = 0;
    for (unsigned char ch : s)
        cps += (ch & 0xC0) != 0x80;
    if (cps < w)
        s.append(w - cps, ' ');
    return s + " ";
}

} // namespace

Report build_report(const fs::path& out_dir)
{
    RunConfig locate;
    locate.out_dir = out_dir.string();
    const ojson battle = read_manifest(locate, Stage::Battle);
    Report rep;
    std::ostringstream t;
    const auto& bs = battle.at("summary");
    t << "Battle results: engine " << bs.at("engine").get<std::string>() << " level " << bs.at("engine_level")
      << ", " << bs.at("runs") << " runs x " << bs.at("games_per_run") << " games\n\n";
    t << pad("model", 18) << pad("win %", 14) << pad("draw %", 14) << pad("FIDEScore", 14) << pad("legal %", 9)
      << pad("master acc %", 13) << "games\n";
    for (const auto& m : bs.at("models"))
        t << pad(m.at("model").get<std::string>(), 18) << pad(pm(m.at("win")), 14) << pad(pm(m.at("draw")), 14)
          << pad(pm(m.at("fide")), 14) << pad(pct(m.at("legality")), 9) << pad(pct(m.at("master_accuracy")), 13)
          << m.at("games").get<int>() << "\n";
    rep.json["battle"] = bs;

    const fs::path router_manifest = out_dir / stage_name(Stage::TrainRouter) / "manifest.json";
    if (fs::exists(router_manifest))
    {
        const ojson rm = ojson::parse(read_file(router_manifest));
        const auto& digest = rm.at("summary").at("route_digest");
        t << "\nRouting (share of a player's moves where each expert is the top choice, per layer)\n";
        for (const auto& [player, d] : digest.items())
        {
            t << "  " << pad(player, 14);
            const auto& layers = d.at("top_expert_share");
            for (std::size_t l = 0; l < layers.size(); ++l)
            {
                t << "L" << l << " [";
                for (std::size_t e = 0; e < layers[l].size(); ++e)
                    t << (e ? " " : "") << pct(layers[l][e].get<double>() * 100.0);
                t << "] ";
            }
            t << "\n";
        }
        rep.json["routing"] = digest;
    }

    const fs::path stylo_manifest = out_dir / stage_name(Stage::Stylometry) / "manifest.json";
    const ojson sm = fs::exists(stylo_manifest) ? ojson::parse(read_file(stylo_manifest)) : ojson();
    if (sm.is_null() || !sm.at("summary").value("enabled", false))
    {
        t << "\nStylometry: omitted (no stylometry artifacts in " << out_dir.string() << ")\n";
        rep.json["stylometry"] = nullptr;
    }
    else
    {
        const auto& ss = sm.at("summary");
        t << "\nStyle acquisition (recall@k of each source's games against held-out centroids)\n";
        t << pad("source", 18) << pad("target", 14) << pad("games", 6);
        for (const auto& k : ss.at("recall_k"))
            t << pad("@" + std::to_string(k.get<int>()), 7);
        t << "\n";
        for (const auto& row : ss.at("rows"))
        {
            t << pad(row.at("source").get<std::string>(), 18) << pad(row.at("target").get<std::string>(), 14)
              << pad(std::to_string(row.at("games").get<int>()), 6);
            for (const auto& [_, v] : row.at("recall").items())
                t << pad(v.is_null() ? "n/a" : pct(v.get<double>() * 100.0), 7);
            t << "\n";
        }
        rep.json["stylometry"] = ss;
    }
    rep.text = t.str();
    return rep;
}

} // namespace mom::pipeline
