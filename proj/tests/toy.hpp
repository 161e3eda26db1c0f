#pragma once

#include "mom/dataset.hpp"
#include "mom/model.hpp"
#include "mom/synth.hpp"

#include <vector>

namespace mom::toy
{

inline ModelConfig tiny_config(int d = 16, int layers = 2, int heads = 2, int ctx = 96)
{
    ModelConfig c;
    c.n_layers = layers;
    c.n_heads = heads;
    c.d_model = d;
    c.d_ff = 4 * d;
    c.context_len = ctx;
    c.n_experts = 0;
    return c;
}

inline std::vector<chess::GameRecord> games(int n, int min_plies = 12, int max_plies = 30, std::uint64_t seed = 960,
                                            int style = 0)
{
    return synth::generate_corpus(synth::builtin_styles()[style], n, min_plies, max_plies, Rng(seed), "toy");
}

inline std::vector<TokenMask> masks(const std::vector<chess::GameRecord>& gs)
{
    std::vector<TokenMask> out;
    for (const auto& g : gs)
        out.push_back(dataset::player_mask(g));
    return out;
}

} // namespace mom::toy
