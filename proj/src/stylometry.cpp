#include "mom/stylometry.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mom::stylo
{

using chess::Color;
using chess::GameRecord;
using chess::Position;

std::vector<FrameFeatures> game_frames(const GameRecord& game)
{
    const Color me = game.target_color;
    std::vector<FrameFeatures> out;
    Position pos = game.tag("FEN").empty() ? Position::initial() : Position::from_fen(game.tag("FEN"));
    for (const auto& m : game.moves)
    {
        const bool mine = pos.side_to_move() == me;
        pos = pos.play(m);
        if (!mine)
            continue;
        FrameFeatures f;
        auto oriented = [me](int sq) { return me == Color::White ? sq : 63 - sq; };
        auto put = [&f](int sq, int plane) {
            const int file = sq % 8, rank = sq / 8;
            const int patch = (rank / 2) * 4 + file / 2;
            const int cell = (rank % 2) * 2 + file % 2;
            f.patches(patch, cell * kPlanes + plane) = 1.0;
        };
        for (int sq = 0; sq < 64; ++sq)
        {
            const chess::Piece p = pos.piece_at(sq);
            if (p == chess::Piece::None)
                continue;
            const int type = static_cast<int>(chess::type_of(p)) - 1;
            put(oriented(sq), (chess::color_of(p) == me ? 0 : 6) + type);
        }
        put(oriented(m.from), 12);
        put(oriented(m.to), 13);
        out.push_back(std::move(f));
    }
    return out;
}

void StyloConfig::validate() const
{
    if (token_dim < 1 || embed_dim < 1)
        throw std::invalid_argument("encoder widths must be positive");
    if (frames < 1)
        throw std::invalid_argument("window needs at least one frame");
    if (skip_opening_moves < 0)
        throw std::invalid_argument("negative opening skip");
    if (games_per_player < 2)
        throw std::invalid_argument("need at least two games per player");
    if (!(sim_w > 0))
        throw std::invalid_argument("similarity scale must be positive");
    if (lambda_m < 0 || lambda_c < 0)
        throw std::invalid_argument("loss weights must be non-negative");
    if (mu < 0 || mu > 1)
        throw std::invalid_argument("margin must lie in [0, 1]");
}

namespace
{

Tensor normal(int rows, int cols, double sd, Rng rng)
{
    Tensor t(rows, cols);
    for (double& v : t.data)
        v = sd * rng.normal();
    quantize_f32(t);
    return t;
}

Tensor scalar(double v)
{
    return Tensor(1, 1, v);
}

void check_batch(int n_players, int m_games, const Tensor& z)
{
    if (n_players < 2 || m_games < 2)
        throw std::invalid_argument("need N >= 2 players and M >= 2 games");
    if (z.rows != n_players * m_games)
        throw std::invalid_argument("embedding count is not N*M");
}

} // namespace

Encoder Encoder::init(const StyloConfig& config, std::uint64_t seed)
{
    config.validate();
    Encoder e;
    e.config = config;
    const int d = config.token_dim, h = config.embed_dim;
    const Rng rng(seed);
    e.params["patch.w"] = normal(kPatchDim, d, 1.0 / std::sqrt(static_cast<double>(kPatchDim)), rng.split("patch"));
    e.params["patch.b"] = Tensor(1, d);
    e.params["pos"] = normal(config.frames, d, 0.1, rng.split("pos"));
    e.params["attn.q"] = normal(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng.split("q"));
    e.params["attn.k"] = normal(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng.split("k"));
    e.params["attn.v"] = normal(d, d, 1.0 / std::sqrt(static_cast<double>(d)), rng.split("v"));
    e.params["lstm.wx"] = normal(d, 4 * h, 1.0 / std::sqrt(static_cast<double>(d)), rng.split("wx"));
    e.params["lstm.wh"] = normal(h, 4 * h, 1.0 / std::sqrt(static_cast<double>(h)), rng.split("wh"));
    Tensor bias(1, 4 * h);
    for (int i = h; i < 2 * h; ++i)
        bias.data[static_cast<std::size_t>(i)] = 1.0; // forget gate
    e.params["lstm.b"] = bias;
    e.params["sim.w"] = scalar(config.sim_w);
    e.params["sim.b"] = scalar(config.sim_b);
    for (auto& [_, t] : e.params)
        quantize_f32(t);
    return e;
}

std::optional<std::size_t> sample_window_start(std::size_t n_frames, const StyloConfig& config, Rng& rng)
{
    const std::size_t first = static_cast<std::size_t>(config.skip_opening_moves);
    const std::size_t f = static_cast<std::size_t>(config.frames);
    if (n_frames < first + f)
        return std::nullopt;
    return first + rng.below(n_frames - first - f + 1);
}

std::map<std::string, Var> encoder_leaves(Graph& g, const Encoder& enc, bool trainable)
{
    std::map<std::string, Var> out;
    for (const auto& [name, t] : enc.params)
        out[name] = g.leaf(t, trainable);
    return out;
}

Var embed_tape(Graph& g, const std::map<std::string, Var>& p, const Encoder& enc, const Window& window)
{
    const StyloConfig& c = enc.config;
    if (static_cast<int>(window.size()) != c.frames)
        throw WrongWindowLength("window has " + std::to_string(window.size()) + " frames, expected " +
                                std::to_string(c.frames));
    const int f = c.frames, d = c.token_dim, h = c.embed_dim;
    Tensor x(f * kPatches, kPatchDim);
    for (int j = 0; j < f; ++j)
        std::copy(window[static_cast<std::size_t>(j)].patches.data.begin(),
                  window[static_cast<std::size_t>(j)].patches.data.end(),
                  x.data.begin() + static_cast<std::ptrdiff_t>(j) * kPatches * kPatchDim);
    const Var tokens = g.tanh(g.linear(g.constant(std::move(x)), p.at("patch.w"), p.at("patch.b")));

    Var r = g.slice_rows(tokens, 0, kPatches);
    for (int j = 1; j < f; ++j)
        r = g.add(r, g.slice_rows(tokens, j * kPatches, kPatches));
    r = g.scale(r, 1.0 / f);

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Var hidden = g.constant(Tensor(1, h));
    Var cell = g.constant(Tensor(1, h));
    for (int j = 0; j < f; ++j)
    {
        const Var hj = g.mean_rows(g.slice_rows(tokens, j * kPatches, kPatches));
        const Var keys_in = g.add_row(r, g.slice_rows(p.at("pos"), j, 1));
        const Var q = g.matmul(hj, p.at("attn.q"));
        const Var k = g.matmul(keys_in, p.at("attn.k"));
        const Var v = g.matmul(keys_in, p.at("attn.v"));
        const Var attn = g.softmax_rows(g.scale(g.matmul_nt(q, k), inv_sqrt_d));
        const Var e = g.add(hj, g.matmul(attn, v));

        const Var gates = g.add_row(g.add(g.matmul(e, p.at("lstm.wx")), g.matmul(hidden, p.at("lstm.wh"))),
                                    p.at("lstm.b"));
        const Var in = g.sigmoid(g.slice_cols(gates, 0, h));
        const Var forget = g.sigmoid(g.slice_cols(gates, h, h));
        const Var out = g.sigmoid(g.slice_cols(gates, 2 * h, h));
        const Var cand = g.tanh(g.slice_cols(gates, 3 * h, h));
        cell = g.add(g.mul(forget, cell), g.mul(in, cand));
        hidden = g.mul(out, g.tanh(cell));
    }
    return g.l2_normalize_rows(hidden);
}

std::vector<double> embed_game(const Encoder& enc, const Window& window)
{
    Graph g;
    const auto leaves = encoder_leaves(g, enc, false);
    return g.value(embed_tape(g, leaves, enc, window)).data;
}

Centroids centroids(const Tensor& z, int n_players, int m_games)
{
    check_batch(n_players, m_games, z);
    Centroids c{Tensor(n_players, z.cols), Tensor(z.rows, z.cols)};
    for (int p = 0; p < n_players; ++p)
    {
        for (int g = 0; g < m_games; ++g)
            for (int i = 0; i < z.cols; ++i)
                c.full(p, i) += z(p * m_games + g, i);
        for (int i = 0; i < z.cols; ++i)
            c.full(p, i) /= m_games;
        for (int g = 0; g < m_games; ++g)
            for (int i = 0; i < z.cols; ++i)
                c.loo(p * m_games + g, i) = (m_games * c.full(p, i) - z(p * m_games + g, i)) / (m_games - 1);
    }
    return c;
}

LossVars loss_tape(Graph& g, Var z, Var w, Var b, int n_players, int m_games, const LossHyper& hyper)
{
    const Tensor& zv = g.value(z);
    check_batch(n_players, m_games, zv);
    if (!(g.scalar(w) > 0))
        throw std::invalid_argument("similarity scale W must be positive");
    const int n = n_players, m = m_games, rows = n * m;
    const Centroids cv = centroids(zv, n, m);
    for (const Tensor* t : {&cv.full, &cv.loo})
        for (int r = 0; r < t->rows; ++r)
        {
            double sq = 0;
            for (double x : t->row(r))
                sq += x * x;
            if (sq < 1e-24)
                throw DegenerateCentroid("centroid is the zero vector");
        }

    std::vector<Var> cents;
    std::vector<int> owner(static_cast<std::size_t>(rows));
    for (int p = 0; p < n; ++p)
    {
        cents.push_back(g.mean_rows(g.slice_rows(z, p * m, m)));
        for (int k = 0; k < m; ++k)
            owner[static_cast<std::size_t>(p * m + k)] = p;
    }
    const Var c_full = g.concat_rows(cents);
    const Var loo = g.add(g.scale(g.gather_rows(c_full, owner), static_cast<double>(m) / (m - 1)),
                          g.scale(z, -1.0 / (m - 1)));
    const Var zn = g.l2_normalize_rows(z);
    const Var cn = g.l2_normalize_rows(c_full);
    const Var cos_cross = g.matmul_nt(zn, cn);
    const Var cos_self = g.sum_cols(g.mul(zn, g.l2_normalize_rows(loo)));

    Tensor self_mask(rows, n), cross_mask(rows, n, 1.0);
    for (int r = 0; r < rows; ++r)
    {
        self_mask(r, owner[static_cast<std::size_t>(r)]) = 1.0;
        cross_mask(r, owner[static_cast<std::size_t>(r)]) = 0.0;
    }
    const Var ones_rows = g.constant(Tensor(rows, 1, 1.0));
    const Var ones_cols = g.constant(Tensor(1, n, 1.0));
    const Var cos = g.add(g.mul_const(cos_cross, cross_mask), g.mul_const(g.matmul(cos_self, ones_cols), self_mask));
    const Var w_full = g.matmul(g.matmul(ones_rows, w), ones_cols);
    const Var b_full = g.matmul(g.matmul(ones_rows, b), ones_cols);
    const Var s = g.add(g.mul(cos, w_full), b_full);

    std::vector<int> idx(static_cast<std::size_t>(rows));
    std::iota(idx.begin(), idx.end(), 0);
    LossVars out;
    out.infonce = g.scale(g.sum(g.token_logprobs(s, idx, owner)), -1.0 / rows);

    Tensor off_diag(n, n, 1.0);
    for (int p = 0; p < n; ++p)
        off_diag(p, p) = 0.0;
    const Var cc = g.matmul_nt(cn, cn);
    out.margin = g.scale(g.sum(g.mul_const(g.relu(g.add_scalar(cc, hyper.mu)), off_diag)), 1.0 / (n * (n - 1)));
    out.centroid = g.scale(g.sum(g.add_scalar(g.scale(cos_self, -1.0), 1.0)), 1.0 / rows);
    out.total = g.add(out.infonce, g.add(g.scale(out.margin, hyper.lambda_m), g.scale(out.centroid, hyper.lambda_c)));
    return out;
}

namespace
{

LossTerms read_terms(const Graph& g, const LossVars& v)
{
    return {g.scalar(v.infonce), g.scalar(v.margin), g.scalar(v.centroid), g.scalar(v.total)};
}

} // namespace

Tensor similarity_matrix(const Tensor& z, int n_players, int m_games, double w, double b)
{
    if (!(w > 0))
        throw std::invalid_argument("similarity scale W must be positive");
    const Centroids c = centroids(z, n_players, m_games);
    auto norm = [](std::span<const double> v) {
        double sq = 0;
        for (double x : v)
            sq += x * x;
        return std::sqrt(sq);
    };
    Tensor s(z.rows, n_players);
    for (int r = 0; r < z.rows; ++r)
        for (int q = 0; q < n_players; ++q)
        {
            const auto cent = q == r / m_games ? c.loo.row(r) : c.full.row(q);
            const double nc = norm(cent), nz = norm(z.row(r));
            if (nc < 1e-12)
                throw DegenerateCentroid("centroid is the zero vector");
            double dot = 0;
            for (int i = 0; i < z.cols; ++i)
                dot += z(r, i) * cent[static_cast<std::size_t>(i)];
            s(r, q) = w * dot / (nz * nc) + b;
        }
    return s;
}

LossTerms stylometry_loss(const Tensor& z, int n_players, int m_games, double w, double b, const LossHyper& hyper)
{
    Graph g;
    const Var zv = g.constant(z);
    const LossVars v = loss_tape(g, zv, g.constant(scalar(w)), g.constant(scalar(b)), n_players, m_games, hyper);
    return read_terms(g, v);
}

BatchGrad batch_loss_and_grad(const Encoder& enc, const std::vector<std::vector<Window>>& batch)
{
    const int n = static_cast<int>(batch.size());
    const int m = n > 0 ? static_cast<int>(batch.front().size()) : 0;
    Graph g;
    const auto leaves = encoder_leaves(g, enc, true);
    std::vector<Var> rows;
    for (const auto& player : batch)
    {
        if (static_cast<int>(player.size()) != m)
            throw std::invalid_argument("every player needs the same number of games");
        for (const Window& w : player)
            rows.push_back(embed_tape(g, leaves, enc, w));
    }
    const Var z = g.concat_rows(rows);
    const LossHyper hyper{enc.config.lambda_m, enc.config.lambda_c, enc.config.mu};
    const LossVars v = loss_tape(g, z, leaves.at("sim.w"), leaves.at("sim.b"), n, m, hyper);
    BatchGrad out;
    out.loss = read_terms(g, v);
    g.backward(v.total);
    for (const auto& [name, var] : leaves)
        out.grads[name] = g.grad(var);
    return out;
}

std::vector<TrainStep> train(Encoder& enc, const std::vector<PlayerGames>& players, Rng rng, std::ostream* log)
{
    const StyloConfig& c = enc.config;
    c.validate();
    if (players.size() < 2)
        throw std::invalid_argument("stylometry training needs at least two players");
    std::vector<std::vector<std::vector<FrameFeatures>>> frames(players.size());
    for (std::size_t p = 0; p < players.size(); ++p)
    {
        for (const GameRecord& g : players[p].games)
        {
            auto f = game_frames(g);
            if (f.size() >= static_cast<std::size_t>(c.skip_opening_moves + c.frames))
                frames[p].push_back(std::move(f));
        }
        if (frames[p].size() < static_cast<std::size_t>(c.games_per_player))
            throw TooFewGames("player " + players[p].name + " has too few games long enough for a window");
    }
    OptimConfig optim;
    optim.lr = c.lr;
    optim.weight_decay = 0.0;
    optim.grad_clip = 0.0;
    std::vector<TrainStep> out;
    for (int s = 0; s < c.steps; ++s)
    {
        Rng step_rng = rng.split(static_cast<std::uint64_t>(s));
        std::vector<std::vector<Window>> batch(players.size());
        for (std::size_t p = 0; p < players.size(); ++p)
        {
            std::vector<std::size_t> order(frames[p].size());
            std::iota(order.begin(), order.end(), 0);
            step_rng.shuffle(order);
            for (int k = 0; k < c.games_per_player; ++k)
            {
                const auto& f = frames[p][order[static_cast<std::size_t>(k)]];
                const std::size_t start = *sample_window_start(f.size(), c, step_rng);
                batch[p].emplace_back(f.begin() + static_cast<std::ptrdiff_t>(start),
                                      f.begin() + static_cast<std::ptrdiff_t>(start) + c.frames);
            }
        }
        const BatchGrad bg = batch_loss_and_grad(enc, batch);
        adamw_update(enc.params, enc.adam, optim, bg.grads);
        double& w = enc.params.at("sim.w").data[0];
        w = std::max(w, 1e-3);
        TrainStep st{s, bg.loss, enc.sim_w(), enc.sim_b()};
        if (log)
            *log << to_json_line(st) << '\n';
        out.push_back(st);
    }
    return out;
}

std::vector<EmbeddingRecord> embed_games(const Encoder& enc, const std::string& player,
                                         const std::vector<GameRecord>& games, Rng rng)
{
    std::vector<EmbeddingRecord> out(games.size());
    std::vector<char> ok(games.size(), 0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < games.size(); ++i)
    {
        Rng r = rng.split(static_cast<std::uint64_t>(i));
        const auto f = game_frames(games[i]);
        const auto start = sample_window_start(f.size(), enc.config, r);
        if (!start)
            continue;
        const Window w(f.begin() + static_cast<std::ptrdiff_t>(*start),
                       f.begin() + static_cast<std::ptrdiff_t>(*start) + enc.config.frames);
        out[i] = {player, i, *start, embed_game(enc, w)};
        ok[i] = 1;
    }
    std::vector<EmbeddingRecord> kept;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (ok[i])
            kept.push_back(std::move(out[i]));
    return kept;
}

std::vector<double> mean_embedding(const std::vector<std::vector<double>>& zs)
{
    if (zs.empty())
        throw std::invalid_argument("no embeddings to average");
    std::vector<double> c(zs.front().size(), 0.0);
    for (const auto& z : zs)
        for (std::size_t i = 0; i < c.size(); ++i)
            c[i] += z[i];
    for (double& v : c)
        v /= static_cast<double>(zs.size());
    return c;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b)
{
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na < 1e-24 || nb < 1e-24)
        throw DegenerateCentroid("cosine of a zero vector");
    return dot / std::sqrt(na * nb);
}

std::vector<DriftPoint> style_consistency(const std::vector<std::vector<double>>& embeddings,
                                          const std::vector<int>& split_pcts, int resamples, Rng rng)
{
    const std::size_t n = embeddings.size();
    if (n < 10)
        throw TooFewGames("style consistency needs at least 10 games");
    if (resamples < 1)
        throw std::invalid_argument("need at least one resample");
    for (int s : split_pcts)
        if (s < 1 || s > 100)
            throw std::invalid_argument("split percentages must lie in [1, 100]");
    const std::vector<double> whole = mean_embedding(embeddings);
    auto distance = [&](const std::vector<std::size_t>& order, int pct) {
        const std::size_t k = std::max<std::size_t>(1, (n * static_cast<std::size_t>(pct) + 50) / 100);
        std::vector<std::vector<double>> sub;
        for (std::size_t i = 0; i < k; ++i)
            sub.push_back(embeddings[order[i]]);
        return std::max(0.0, 1.0 - cosine(mean_embedding(sub), whole));
    };
    std::vector<std::vector<double>> dist(split_pcts.size());
    double base = 0.0;
    for (int r = 0; r < resamples; ++r)
    {
        Rng rr = rng.split(static_cast<std::uint64_t>(r));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        rr.shuffle(order);
        base += distance(order, 30) / resamples;
        for (std::size_t i = 0; i < split_pcts.size(); ++i)
            dist[i].push_back(distance(order, split_pcts[i]));
    }
    std::vector<DriftPoint> out;
    for (std::size_t i = 0; i < split_pcts.size(); ++i)
    {
        DriftPoint p;
        p.split_pct = split_pcts[i];
        p.distance = std::accumulate(dist[i].begin(), dist[i].end(), 0.0) / resamples;
        double var = 0;
        for (double v : dist[i])
            var += (v - p.distance) * (v - p.distance);
        if (base > 1e-12)
        {
            p.relative = (p.distance - base) / base;
            p.relative_sd = std::sqrt(var / resamples) / base;
        }
        out.push_back(p);
    }
    return out;
}

double acquisition_recall(const std::vector<std::vector<double>>& embeddings,
                          const std::vector<std::vector<double>>& centroids, std::size_t target, int k)
{
    if (target >= centroids.size())
        throw std::out_of_range("target centroid index");
    if (k < 1)
        throw std::invalid_argument("k must be positive");
    if (embeddings.empty())
        throw std::invalid_argument("no embeddings to evaluate");
    std::size_t hits = 0;
    for (const auto& z : embeddings)
    {
        const double own = cosine(z, centroids[target]);
        int better = 0;
        for (std::size_t q = 0; q < centroids.size(); ++q)
            if (q != target && cosine(z, centroids[q]) > own)
                ++better;
        hits += better < k;
    }
    return static_cast<double>(hits) / static_cast<double>(embeddings.size());
}

namespace
{

constexpr const char* kEncoderMagic = "MOMSTYLO 1";
constexpr const char* kEmbeddingMagic = "MOMEMB 1";

void write_f32(std::ostream& out, const std::vector<double>& v)
{
    std::vector<float> buf(v.begin(), v.end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

std::vector<double> read_f32(std::istream& in, std::size_t n)
{
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in)
        throw CheckpointError("truncated payload");
    return {buf.begin(), buf.end()};
}

std::string line_or_throw(std::istream& in)
{
    std::string s;
    if (!std::getline(in, s))
        throw CheckpointError("unexpected end of file");
    return s;
}

} // namespace

void save_encoder(const std::string& path, const Encoder& enc)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw CheckpointError("cannot write " + tmp);
        const StyloConfig& c = enc.config;
        nlohmann::ordered_json j{{"token_dim", c.token_dim},       {"embed_dim", c.embed_dim},
                                 {"frames", c.frames},             {"skip_opening_moves", c.skip_opening_moves},
                                 {"games_per_player", c.games_per_player}, {"lambda_m", c.lambda_m},
                                 {"lambda_c", c.lambda_c},         {"mu", c.mu},
                                 {"lr", c.lr},                     {"steps", c.steps}};
        out << kEncoderMagic << "\n" << j.dump() << "\n" << enc.params.size() << "\n";
        for (const auto& [name, t] : enc.params)
            out << name << " " << t.rows << " " << t.cols << "\n";
        for (const auto& [_, t] : enc.params)
            write_f32(out, t.data);
        if (!out)
            throw CheckpointError("failed to write " + tmp);
    }
    std::rename(tmp.c_str(), path.c_str());
}

Encoder load_encoder(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open " + path);
    if (line_or_throw(in) != kEncoderMagic)
        throw CheckpointError("not a stylometry encoder");
    Encoder e;
    try
    {
        const auto j = nlohmann::json::parse(line_or_throw(in));
        StyloConfig& c = e.config;
        c.token_dim = j.at("token_dim");
        c.embed_dim = j.at("embed_dim");
        c.frames = j.at("frames");
        c.skip_opening_moves = j.at("skip_opening_moves");
        c.games_per_player = j.at("games_per_player");
        c.lambda_m = j.at("lambda_m");
        c.lambda_c = j.at("lambda_c");
        c.mu = j.at("mu");
        c.lr = j.at("lr");
        c.steps = j.at("steps");
    }
    catch (const nlohmann::json::exception& ex)
    {
        throw CheckpointError(std::string("bad encoder header: ") + ex.what());
    }
    const std::size_t count = std::stoul(line_or_throw(in));
    std::vector<std::string> names;
    for (std::size_t i = 0; i < count; ++i)
    {
        std::istringstream ls(line_or_throw(in));
        std::string name;
        int r = 0, c = 0;
        if (!(ls >> name >> r >> c) || r < 0 || c < 0)
            throw CheckpointError("bad tensor entry");
        e.params[name] = Tensor(r, c);
        names.push_back(name);
    }
    for (const auto& name : names)
    {
        Tensor& t = e.params[name];
        t.data = read_f32(in, t.size());
    }
    const Encoder fresh = Encoder::init(e.config);
    for (const auto& [name, t] : fresh.params)
        if (!e.params.count(name) || !e.params.at(name).same_shape(t))
            throw CheckpointError("encoder tensor " + name + " missing or misshapen");
    e.config.sim_w = e.sim_w();
    e.config.sim_b = e.sim_b();
    return e;
}

void write_embeddings(std::ostream& out, const std::vector<EmbeddingRecord>& records)
{
    const std::size_t dim = records.empty() ? 0 : records.front().z.size();
    out << kEmbeddingMagic << "\n" << records.size() << " " << dim << "\n";
    for (const auto& r : records)
    {
        if (r.z.size() != dim)
            throw std::invalid_argument("embeddings of mixed dimension");
        if (r.player.find_first_of(" \n") != std::string::npos)
            throw std::invalid_argument("player names may not contain whitespace");
        out << r.player << " " << r.game << " " << r.window_start << "\n";
    }
    for (const auto& r : records)
        write_f32(out, r.z);
}

std::vector<EmbeddingRecord> read_embeddings(std::istream& in)
{
    if (line_or_throw(in) != kEmbeddingMagic)
        throw CheckpointError("not an embedding dump");
    std::istringstream head(line_or_throw(in));
    std::size_t n = 0, dim = 0;
    if (!(head >> n >> dim))
        throw CheckpointError("bad embedding header");
    std::vector<EmbeddingRecord> out(n);
    for (auto& r : out)
    {
        std::istringstream ls(line_or_throw(in));
        if (!(ls >> r.player >> r.game >> r.window_start))
            throw CheckpointError("bad embedding manifest line");
    }
    for (auto& r : out)
        r.z = read_f32(in, dim);
    return out;
}

std::string to_json_line(const TrainStep& s)
{
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["infonce"] = s.loss.infonce;
    j["margin"] = s.loss.margin;
    j["centroid"] = s.loss.centroid;
    j["total"] = s.loss.total;
    j["w"] = s.w;
    j["b"] = s.b;
    return j.dump();
}

} // namespace mom::stylo
