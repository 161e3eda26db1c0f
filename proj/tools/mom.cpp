// mom: command-line driver for the mixture-of-masters pipeline.
#include "mom/chess.hpp"
#include "mom/pgn.hpp"
#include "mom/pipeline.hpp"
#include "mom/synth.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <fstream>
#include <iostream>

#ifndef MOM_STUB_ENGINE
#define MOM_STUB_ENGINE ""
#endif

namespace
{

using namespace mom;

struct Common
{
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string engine = MOM_STUB_ENGINE;
    std::vector<std::string> engine_args;
    int jobs = 1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c)
{
    cmd->add_option("-c,--config", c.config_path, "JSON run configuration (default: built-in toy configuration)");
    cmd->add_option("-o,--out", c.out, "output directory (overrides out_dir)");
    cmd->add_option("--seed", c.seed, "master seed (overrides seed)");
    cmd->add_option("--engine", c.engine, "UCI engine binary")->capture_default_str();
    cmd->add_option("--engine-arg", c.engine_args, "extra engine argument (repeatable)");
    cmd->add_option("-j,--jobs", c.jobs, "parallel battle workers")->check(CLI::PositiveNumber);
    cmd->add_flag("-q,--quiet", c.quiet, "suppress progress lines");
}

pipeline::RunConfig resolve(const Common& c)
{
    pipeline::RunConfig cfg = c.config_path.empty() ? pipeline::toy_config() : pipeline::load_config(c.config_path);
    if (!c.out.empty())
        cfg.out_dir = c.out;
    if (c.seed)
        cfg.seed = *c.seed;
    cfg.validate();
    return cfg;
}

pipeline::Environment environment(const Common& c)
{
    return {c.engine, c.engine_args, c.jobs, c.quiet ? nullptr : &std::cerr};
}

void print_results(const std::vector<pipeline::StageResult>& rs)
{
    for (const auto& r : rs)
        std::cout << pipeline::stage_name(r.stage) << (r.skipped ? " skipped " : " done ") << r.stage_hash << " "
                  << r.manifest.string() << "\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mixture-of-masters chess pipeline"};
    app.require_subcommand(1);

    Common common;
    std::vector<std::pair<std::string, pipeline::Stage>> stage_cmds;
    for (auto s : pipeline::all_stages())
    {
        auto* cmd = app.add_subcommand(pipeline::stage_name(s), "run the " + pipeline::stage_name(s) + " stage");
        add_common(cmd, common);
        stage_cmds.emplace_back(pipeline::stage_name(s), s);
    }

    auto* run = app.add_subcommand("run", "run every stage in order, skipping up-to-date ones");
    add_common(run, common);
    std::string only_stage;
    run->add_option("--stage", only_stage, "run a single stage");

    auto* init = app.add_subcommand("init-config", "print the toy configuration as JSON");
    std::string init_out;
    init->add_option("-o,--out", init_out, "write to a file instead of stdout");

    auto* synth_cmd = app.add_subcommand("synth-corpus", "write a synthetic corpus as PGN");
    std::string style = "aggressor", player = "player", synth_out;
    int games = 100, min_plies = 40, max_plies = 80;
    std::uint64_t synth_seed = Rng::kDefaultSeed;
    synth_cmd->add_option("--style", style, "aggressor, builder or shuffler")->capture_default_str();
    synth_cmd->add_option("--player", player, "player name in the tags")->capture_default_str();
    synth_cmd->add_option("-n,--games", games)->capture_default_str()->check(CLI::PositiveNumber);
    synth_cmd->add_option("--min-plies", min_plies)->capture_default_str();
    synth_cmd->add_option("--max-plies", max_plies)->capture_default_str();
    synth_cmd->add_option("--seed", synth_seed)->capture_default_str();
    synth_cmd->add_option("-o,--out", synth_out, "output PGN (default stdout)");

    auto* perft_cmd = app.add_subcommand("perft", "count leaf nodes of the legal move tree");
    std::string fen = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1";
    int depth = 4;
    bool divide = false;
    perft_cmd->add_option("--fen", fen)->capture_default_str();
    perft_cmd->add_option("-d,--depth", depth)->capture_default_str()->check(CLI::Range(0, 10));
    perft_cmd->add_flag("--divide", divide, "per-move counts at the root");

    CLI11_PARSE(app, argc, argv);

    try
    {
        for (const auto& [name, stage] : stage_cmds)
            if (app.got_subcommand(name))
            {
                const auto cfg = resolve(common);
                print_results({pipeline::run_stage(cfg, stage, environment(common))});
                return 0;
            }
        if (run->parsed())
        {
            const auto cfg = resolve(common);
            const auto env = environment(common);
            if (!only_stage.empty())
                print_results({pipeline::run_stage(cfg, pipeline::parse_stage(only_stage), env)});
            else
                print_results(pipeline::run_all(cfg, env));
            return 0;
        }
        if (init->parsed())
        {
            const std::string text = pipeline::serialize(pipeline::toy_config());
            if (init_out.empty())
                std::cout << text;
            else
                pipeline::write_file_atomic(init_out, text);
            return 0;
        }
        if (synth_cmd->parsed())
        {
            const auto styles = synth::builtin_styles();
            auto it = std::find_if(styles.begin(), styles.end(), [&](const auto& s) { return s.name == style; });
            if (it == styles.end())
                throw std::invalid_argument("unknown style " + style);
            if (min_plies < 1 || max_plies < min_plies)
                throw std::invalid_argument("need 1 <= min-plies <= max-plies");
            std::string text;
            for (const auto& g : synth::generate_corpus(*it, games, min_plies, max_plies, Rng(synth_seed), player))
                text += chess::write_pgn(g);
            if (synth_out.empty())
                std::cout << text;
            else
                pipeline::write_file_atomic(synth_out, text);
            return 0;
        }
        if (perft_cmd->parsed())
        {
            const auto pos = chess::Position::from_fen(fen);
            const auto t0 = std::chrono::steady_clock::now();
            std::uint64_t total = 0;
            if (divide)
            {
                for (const auto& m : pos.legal_moves())
                {
                    const std::uint64_t n = depth > 0 ? chess::perft(pos.play(m), depth - 1) : 0;
                    std::cout << m.uci() << ": " << n << "\n";
                    total += n;
                }
            }
            else
                total = chess::perft_parallel(pos, depth);
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::cout << "nodes " << total << " time " << s << "s\n";
            return 0;
        }
    }
    catch (const pipeline::ConfigInvalid& e)
    {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
