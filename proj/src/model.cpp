#include "mom/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mom
{

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

void ModelConfig::validate() const
{
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || context_len < 1)
        throw std::invalid_argument("model dimensions must be positive");
    if (d_model % n_heads != 0)
        throw std::invalid_argument("d_model must be divisible by n_heads");
    if (context_len > 1023)
        throw std::invalid_argument("context_len must not exceed 1023");
    if (vocab_size != static_cast<int>(Vocab::kSize))
        throw std::invalid_argument("vocab_size must be 32");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("dropout must lie in [0, 1)");
    if (n_experts < 0 || (n_experts > 0 && (top_k < 1 || top_k > n_experts)))
        throw std::invalid_argument("top_k must lie in [1, n_experts]");
}

std::string layer_param(int layer, const std::string& suffix)
{
    return "h" + std::to_string(layer) + "." + suffix;
}

std::string expert_param(int expert, const std::string& name)
{
    return "e" + std::to_string(expert) + "." + name;
}

bool is_gated_param(const std::string& name)
{
    auto ends_with = [&](std::string_view s) {
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return name.starts_with("h") &&
           (ends_with(".attn.qkv.w") || ends_with(".attn.qkv.b") || ends_with(".attn.out.w") || ends_with(".attn.out.b"));
}

void quantize_f32(Tensor& t)
{
    for (double& v : t.data)
        v = static_cast<double>(static_cast<float>(v));
}

namespace
{

Tensor normal_tensor(int rows, int cols, double stddev, Rng rng)
{
    Tensor t(rows, cols);
    for (double& v : t.data)
        v = stddev * rng.normal();
    quantize_f32(t);
    return t;
}

} // namespace

Model Model::init(const ModelConfig& config, std::uint64_t seed)
{
    config.validate();
    Model m;
    m.config = config;
    m.seed = seed;
    const Rng root(seed);
    const int d = config.d_model, v = config.vocab_size, ff = config.d_ff;
    const double std0 = 0.02;
    const double std_resid = std0 / std::sqrt(2.0 * config.n_layers);
    auto add = [&](const std::string& name, int rows, int cols, double stddev) {
        m.params[name] = stddev > 0 ? normal_tensor(rows, cols, stddev, root.split(name)) : Tensor(rows, cols);
    };
    add("tok_emb", v, d, std0);
    add("pos_emb", config.context_len, d, std0);
    const int copies = std::max(config.n_experts, 1);
    for (int l = 0; l < config.n_layers; ++l)
    {
        m.params[layer_param(l, "ln1.g")] = Tensor(1, d, 1.0);
        add(layer_param(l, "ln1.b"), 1, d, 0);
        for (int e = 0; e < copies; ++e)
        {
            auto name = [&](const std::string& s) {
                return config.n_experts > 0 ? expert_param(e, layer_param(l, s)) : layer_param(l, s);
            };
            add(name("attn.qkv.w"), d, 3 * d, std0);
            add(name("attn.qkv.b"), 1, 3 * d, 0);
            add(name("attn.out.w"), d, d, std_resid);
            add(name("attn.out.b"), 1, d, 0);
        }
        if (config.n_experts > 0)
        {
            add(layer_param(l, "gate.w"), d, config.n_experts, 1e-3);
            add(layer_param(l, "gate.b"), 1, config.n_experts, 0);
        }
        m.params[layer_param(l, "ln2.g")] = Tensor(1, d, 1.0);
        add(layer_param(l, "ln2.b"), 1, d, 0);
        add(layer_param(l, "ffn.fc.w"), d, ff, std0);
        add(layer_param(l, "ffn.fc.b"), 1, ff, 0);
        add(layer_param(l, "ffn.proj.w"), ff, d, std_resid);
        add(layer_param(l, "ffn.proj.b"), 1, d, 0);
    }
    m.params["ln_f.g"] = Tensor(1, d, 1.0);
    add("ln_f.b", 1, d, 0);
    add("head.w", d, v, std0);
    add("head.b", 1, v, 0);
    return m;
}

std::size_t Model::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& [_, t] : params)
        n += t.size();
    return n;
}

const Tensor& Model::param(const std::string& name) const
{
    auto it = params.find(name);
    if (it == params.end())
        throw std::out_of_range("missing parameter " + name);
    return it->second;
}

std::vector<int> top_k_indices(const std::vector<double>& probs, int k)
{
    std::vector<int> idx(probs.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        idx[i] = static_cast<int>(i);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    idx.resize(std::min<std::size_t>(k, idx.size()));
    return idx;
}

namespace
{

std::vector<double> softmax(std::span<const double> z)
{
    const double mx = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i)
        s += p[i] = std::exp(z[i] - mx);
    for (double& v : p)
        v /= s;
    return p;
}

RouteEntry make_route(std::span<const double> gate_logits, int k)
{
    RouteEntry r;
    r.full = softmax(gate_logits);
    r.experts = top_k_indices(r.full, k);
    for (int e : r.experts)
        r.probs.push_back(r.full[e]);
    return r;
}

} // namespace

TapeForward forward_tape(Graph& g, const Model& model, const std::vector<TokenId>& ids, const ForwardOptions& opts)
{
    const ModelConfig& c = model.config;
    const int t_len = static_cast<int>(ids.size());
    if (t_len == 0)
        throw std::invalid_argument("forward on an empty sequence");
    if (t_len > c.context_len)
        throw ContextOverflow("sequence of " + std::to_string(t_len) + " tokens exceeds context " +
                              std::to_string(c.context_len));
    TapeForward out;
    auto p = [&](const std::string& name) {
        auto it = out.leaves.find(name);
        if (it != out.leaves.end())
            return it->second;
        const bool trainable = !opts.trainable || opts.trainable(name);
        Var v = g.leaf(model.param(name), trainable);
        out.leaves.emplace(name, v);
        return v;
    };
    auto drop = [&](Var v) { return opts.dropout_rng && c.dropout > 0 ? g.dropout(v, c.dropout, *opts.dropout_rng) : v; };

    std::vector<int> rows(ids.begin(), ids.end());
    Var x = g.add(g.gather_rows(p("tok_emb"), rows), g.slice_rows(p("pos_emb"), 0, t_len));
    if (opts.trace)
        opts.trace->assign(t_len, std::vector<RouteEntry>(c.n_layers));

    for (int l = 0; l < c.n_layers; ++l)
    {
        Var a = g.layer_norm(x, p(layer_param(l, "ln1.g")), p(layer_param(l, "ln1.b")));
        Var attn_out;
        if (c.n_experts == 0)
        {
            Var qkv = g.linear(a, p(layer_param(l, "attn.qkv.w")), p(layer_param(l, "attn.qkv.b")));
            Var att = g.causal_attention(qkv, c.n_heads);
            attn_out = g.linear(att, p(layer_param(l, "attn.out.w")), p(layer_param(l, "attn.out.b")));
        }
        else
        {
            const int ne = c.n_experts;
            Var z = g.linear(a, p(layer_param(l, "gate.w")), p(layer_param(l, "gate.b")));
            const Tensor zv = g.value(z);
            Var weights;
            if (opts.routing == RoutingMode::Gumbel)
            {
                if (!opts.gumbel_rng)
                    throw std::invalid_argument("Gumbel routing needs an rng");
                if (!(opts.tau > 0))
                    throw std::invalid_argument("Gumbel temperature must be positive");
                Tensor noise(t_len, ne);
                for (double& v : noise.data)
                    v = opts.gumbel_rng->gumbel();
                weights = g.softmax_rows(g.scale(g.add_const(z, noise), 1.0 / opts.tau));
            }
            else
            {
                Tensor mask(t_len, ne);
                for (int t = 0; t < t_len; ++t)
                    for (int e : top_k_indices(softmax(zv.row(t)), c.top_k))
                        mask(t, e) = 1.0;
                weights = g.masked_softmax_rows(z, mask);
            }
            const Tensor wv = g.value(weights);
            if (opts.trace)
                for (int t = 0; t < t_len; ++t)
                {
                    RouteEntry& r = (*opts.trace)[t][l];
                    r = make_route(zv.row(t), c.top_k);
                    const auto w = wv.row(t);
                    r.mix.assign(w.begin(), w.end());
                }

            std::vector<int> active;
            for (int e = 0; e < ne; ++e)
            {
                bool any = false;
                for (int t = 0; t < t_len && !any; ++t)
                    any = wv(t, e) != 0.0;
                if (any)
                    active.push_back(e);
            }
            auto mix = [&](Var input, const std::string& site) {
                Var acc;
                for (int e : active)
                {
                    Var y = g.linear(input, p(expert_param(e, layer_param(l, site + ".w"))),
                                     p(expert_param(e, layer_param(l, site + ".b"))));
                    y = g.scale_rows(y, g.slice_cols(weights, e, 1));
                    acc = acc.valid() ? g.add(acc, y) : y;
                }
                return acc;
            };
            Var att = g.causal_attention(mix(a, "attn.qkv"), c.n_heads);
            attn_out = mix(att, "attn.out");
        }
        x = g.add(x, drop(attn_out));
        Var b = g.layer_norm(x, p(layer_param(l, "ln2.g")), p(layer_param(l, "ln2.b")));
        Var h = g.gelu(g.linear(b, p(layer_param(l, "ffn.fc.w")), p(layer_param(l, "ffn.fc.b"))));
        x = g.add(x, drop(g.linear(h, p(layer_param(l, "ffn.proj.w")), p(layer_param(l, "ffn.proj.b")))));
    }
    Var f = g.layer_norm(x, p("ln_f.g"), p("ln_f.b"));
    out.logits = g.linear(f, p("head.w"), p("head.b"));
    return out;
}

Tensor forward_logits(const Model& model, const std::vector<TokenId>& ids)
{
    Graph g;
    ForwardOptions opts;
    opts.trainable = [](const std::string&) { return false; };
    return g.value(forward_tape(g, model, ids, opts).logits);
}

SequenceTargets sequence_targets(const TokenMask& seq, int context_len)
{
    if (seq.ids.size() != seq.loss_mask.size())
        throw std::invalid_argument("mask length differs from sequence length");
    SequenceTargets s;
    const std::size_t n = std::min(seq.ids.size(), static_cast<std::size_t>(context_len) + 1);
    if (n < 2)
        return s;
    s.inputs.assign(seq.ids.begin(), seq.ids.begin() + static_cast<std::ptrdiff_t>(n - 1));
    for (std::size_t t = 1; t < n; ++t)
    {
        s.targets.push_back(seq.ids[t]);
        s.weights.push_back(seq.loss_mask[t] ? 1.0 : 0.0);
        s.masked += seq.loss_mask[t];
    }
    return s;
}

LossAndGrad ssl_loss_and_grad(const Model& model, const std::vector<TokenMask>& batch, const ForwardOptions& opts)
{
    LossAndGrad r;
    std::vector<SequenceTargets> seqs;
    for (const TokenMask& tm : batch)
    {
        seqs.push_back(sequence_targets(tm, model.config.context_len));
        r.masked += seqs.back().masked;
    }
    for (const auto& [name, t] : model.params)
        if (!opts.trainable || opts.trainable(name))
            r.grads[name] = Tensor(t.rows, t.cols);
    if (r.masked == 0)
        return r;
    const double inv = 1.0 / static_cast<double>(r.masked);
    for (const SequenceTargets& s : seqs)
    {
        if (s.masked == 0)
            continue;
        Graph g;
        TapeForward fwd = forward_tape(g, model, s.inputs, opts);
        Var loss = g.scale(g.weighted_nll(fwd.logits, s.targets, s.weights), inv);
        r.loss += g.scalar(loss);
        g.backward(loss);
        for (const auto& [name, v] : fwd.leaves)
        {
            auto it = r.grads.find(name);
            if (it == r.grads.end())
                continue;
            const Tensor& gv = g.grad(v);
            for (std::size_t i = 0; i < gv.size(); ++i)
                it->second.data[i] += gv.data[i];
        }
    }
    return r;
}

double ssl_loss(const Model& model, const std::vector<TokenMask>& batch)
{
    double total = 0.0;
    std::size_t masked = 0;
    for (const TokenMask& tm : batch)
    {
        const SequenceTargets s = sequence_targets(tm, model.config.context_len);
        if (s.masked == 0)
            continue;
        masked += s.masked;
        Graph g;
        ForwardOptions opts;
        opts.trainable = [](const std::string&) { return false; };
        total += g.scalar(g.weighted_nll(forward_tape(g, model, s.inputs, opts).logits, s.targets, s.weights));
    }
    return masked ? total / static_cast<double>(masked) : 0.0;
}

double adamw_update(Model& model, const ParamMap& grads)
{
    return adamw_update(model.params, model.adam, model.optim, grads);
}

double adamw_update(ParamMap& params, AdamState& st, const OptimConfig& o, const ParamMap& grads)
{
    double sq = 0.0;
    for (const auto& [_, gt] : grads)
        for (double v : gt.data)
            sq += v * v;
    const double norm = std::sqrt(sq);
    const double clip = (o.grad_clip > 0 && norm > o.grad_clip) ? o.grad_clip / norm : 1.0;

    ++st.step;
    const double lr = o.warmup_steps > 0 ? o.lr * std::min(1.0, static_cast<double>(st.step) / o.warmup_steps) : o.lr;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.step));
    for (const auto& [name, gt] : grads)
    {
        Tensor& p = params.at(name);
        Tensor& m = st.m[name];
        Tensor& v = st.v[name];
        if (!m.same_shape(p))
            m = Tensor(p.rows, p.cols);
        if (!v.same_shape(p))
            v = Tensor(p.rows, p.cols);
        const bool decay = p.rows > 1 && p.cols > 1;
        for (std::size_t i = 0; i < p.size(); ++i)
        {
            const double gi = gt.data[i] * clip;
            m.data[i] = o.beta1 * m.data[i] + (1 - o.beta1) * gi;
            v.data[i] = o.beta2 * v.data[i] + (1 - o.beta2) * gi * gi;
            const double step = (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + o.eps);
            p.data[i] -= lr * (step + (decay ? o.weight_decay * p.data[i] : 0.0));
        }
        quantize_f32(p);
    }
    return norm;
}

LossReport ssl_step(Model& model, const std::vector<TokenMask>& batch, Rng* dropout_rng)
{
    if (batch.empty())
        throw AllMasksEmpty("empty batch");
    ForwardOptions opts;
    opts.dropout_rng = dropout_rng;
    LossAndGrad lg = ssl_loss_and_grad(model, batch, opts);
    if (lg.masked == 0)
        throw AllMasksEmpty("no masked tokens in batch");
    LossReport r;
    r.ssl_loss = lg.loss;
    r.masked_token_count = lg.masked;
    r.grad_norm = adamw_update(model, lg.grads);
    return r;
}

namespace
{
std::string fmt_double(double v);
} // namespace

std::vector<LossReport> ssl_train(Model& model, const std::vector<TokenMask>& corpus, int steps, int batch_size, Rng rng,
                                  std::ostream* log)
{
    if (corpus.empty())
        throw AllMasksEmpty("empty training corpus");
    if (batch_size < 1)
        throw std::invalid_argument("batch size must be positive");
    std::vector<LossReport> out;
    Rng dropout = rng.split("dropout");
    for (int s = 0; s < steps; ++s)
    {
        std::vector<TokenMask> batch;
        for (int i = 0; i < batch_size; ++i)
            batch.push_back(corpus[rng.below(corpus.size())]);
        out.push_back(ssl_step(model, batch, model.config.dropout > 0 ? &dropout : nullptr));
        if (log)
            *log << "{\"step\":" << s << ",\"loss\":" << fmt_double(out.back().ssl_loss)
                 << ",\"grad_norm\":" << fmt_double(out.back().grad_norm) << "}\n";
    }
    return out;
}

double gradient_check(const Model& model, const std::vector<TokenMask>& batch, double eps, double floor)
{
    Model probe = model;
    const LossAndGrad analytic = ssl_loss_and_grad(probe, batch);
    double worst = 0.0;
    for (auto& [name, t] : probe.params)
    {
        const Tensor& ga = analytic.grads.at(name);
        for (std::size_t i = 0; i < t.size(); ++i)
        {
            const double saved = t.data[i];
            t.data[i] = saved + eps;
            const double up = ssl_loss(probe, batch);
            t.data[i] = saved - eps;
            const double down = ssl_loss(probe, batch);
            t.data[i] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double denom = std::max({std::abs(ga.data[i]), std::abs(numeric), floor});
            worst = std::max(worst, std::abs(ga.data[i] - numeric) / denom);
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------------------
// Decoder

namespace
{

// y = x · W + b for a single row.
void row_linear(const std::vector<double>& x, const Tensor& w, const Tensor& b, std::vector<double>& y)
{
    y.assign(w.cols, 0.0);
    for (int i = 0; i < w.rows; ++i)
    {
        const double xi = x[i];
        const double* wr = w.data.data() + static_cast<std::size_t>(i) * w.cols;
        for (int j = 0; j < w.cols; ++j)
            y[j] += xi * wr[j];
    }
    for (int j = 0; j < w.cols; ++j)
        y[j] += b.data[j];
}

void row_layer_norm(const std::vector<double>& x, const Tensor& g, const Tensor& b, std::vector<double>& y)
{
    const int n = static_cast<int>(x.size());
    double mu = 0.0;
    for (double v : x)
        mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : x)
        var += (v - mu) * (v - mu);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    y.resize(n);
    for (int j = 0; j < n; ++j)
        y[j] = g.data[j] * ((x[j] - mu) * inv) + b.data[j];
}

double gelu(double x)
{
    return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

} // namespace

Decoder::Decoder(const Model& model) : model_(model)
{
    const ModelConfig& c = model.config;
    keys_.assign(c.n_layers, Tensor(c.context_len, c.d_model));
    values_.assign(c.n_layers, Tensor(c.context_len, c.d_model));
}

void Decoder::reset()
{
    pos_ = 0;
    logits_.clear();
    routes_.clear();
}

const std::vector<double>& Decoder::feed(const std::vector<TokenId>& tokens)
{
    for (TokenId t : tokens)
        feed(t);
    return logits_;
}

const std::vector<double>& Decoder::feed(TokenId token)
{
    const ModelConfig& c = model_.config;
    if (pos_ >= c.context_len)
        throw ContextOverflow("decoder context is full");
    if (token >= c.vocab_size)
        throw InvalidTokenId("token id out of range");
    const int d = c.d_model, hd = d / c.n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<double> x(d), a, qkv, att(d), o, b, h, f, tmp;
    const Tensor& tok = model_.param("tok_emb");
    const Tensor& pos = model_.param("pos_emb");
    for (int j = 0; j < d; ++j)
        x[j] = tok(token, j) + pos(pos_, j);
    routes_.assign(c.n_experts > 0 ? c.n_layers : 0, RouteEntry{});

    for (int l = 0; l < c.n_layers; ++l)
    {
        row_layer_norm(x, model_.param(layer_param(l, "ln1.g")), model_.param(layer_param(l, "ln1.b")), a);
        std::vector<double> weights;
        auto site = [&](const std::vector<double>& in, const std::string& name, std::vector<double>& out) {
            if (c.n_experts == 0)
            {
                row_linear(in, model_.param(layer_param(l, name + ".w")), model_.param(layer_param(l, name + ".b")), out);
                return;
            }
            out.clear();
            for (int e = 0; e < c.n_experts; ++e)
            {
                if (weights[e] == 0.0)
                    continue;
                row_linear(in, model_.param(expert_param(e, layer_param(l, name + ".w"))),
                           model_.param(expert_param(e, layer_param(l, name + ".b"))), tmp);
                if (out.empty())
                {
                    out.resize(tmp.size());
                    for (std::size_t j = 0; j < tmp.size(); ++j)
                        out[j] = tmp[j] * weights[e];
                }
                else
                    for (std::size_t j = 0; j < tmp.size(); ++j)
                        out[j] += tmp[j] * weights[e];
            }
        };
        if (c.n_experts > 0)
        {
            std::vector<double> z;
            row_linear(a, model_.param(layer_param(l, "gate.w")), model_.param(layer_param(l, "gate.b")), z);
            routes_[l] = make_route(z, c.top_k);
            // Renormalised softmax over the selected experts, as masked_softmax_rows does.
            double mx = -INFINITY;
            for (int e : routes_[l].experts)
                mx = std::max(mx, z[e]);
            weights.assign(c.n_experts, 0.0);
            double s = 0.0;
            for (int e = 0; e < c.n_experts; ++e)
                if (std::find(routes_[l].experts.begin(), routes_[l].experts.end(), e) != routes_[l].experts.end())
                    s += weights[e] = std::exp(z[e] - mx);
            for (double& w : weights)
                w /= s;
            routes_[l].mix = weights;
        }
        site(a, "attn.qkv", qkv);
        Tensor& keys = keys_[l];
        Tensor& vals = values_[l];
        for (int j = 0; j < d; ++j)
        {
            keys(pos_, j) = qkv[d + j];
            vals(pos_, j) = qkv[2 * d + j];
        }
        std::vector<double> scores(pos_ + 1);
        for (int hh = 0; hh < c.n_heads; ++hh)
        {
            const int off = hh * hd;
            double mx = -INFINITY;
            for (int t = 0; t <= pos_; ++t)
            {
                double s = 0.0;
                for (int k = 0; k < hd; ++k)
                    s += qkv[off + k] * keys(t, off + k);
                scores[t] = s * inv_sqrt;
                mx = std::max(mx, scores[t]);
            }
            double total = 0.0;
            for (int t = 0; t <= pos_; ++t)
                total += scores[t] = std::exp(scores[t] - mx);
            for (int k = 0; k < hd; ++k)
                att[off + k] = 0.0;
            for (int t = 0; t <= pos_; ++t)
            {
                const double w = scores[t] / total;
                for (int k = 0; k < hd; ++k)
                    att[off + k] += w * vals(t, off + k);
            }
        }
        site(att, "attn.out", o);
        for (int j = 0; j < d; ++j)
            x[j] += o[j];
        row_layer_norm(x, model_.param(layer_param(l, "ln2.g")), model_.param(layer_param(l, "ln2.b")), b);
        row_linear(b, model_.param(layer_param(l, "ffn.fc.w")), model_.param(layer_param(l, "ffn.fc.b")), h);
        for (double& v : h)
            v = gelu(v);
        row_linear(h, model_.param(layer_param(l, "ffn.proj.w")), model_.param(layer_param(l, "ffn.proj.b")), f);
        for (int j = 0; j < d; ++j)
            x[j] += f[j];
    }
    row_layer_norm(x, model_.param("ln_f.g"), model_.param("ln_f.b"), a);
    row_linear(a, model_.param("head.w"), model_.param("head.b"), logits_);
    ++pos_;
    return logits_;
}

// ---------------------------------------------------------------------------------------
// Generation

GeneratedMove generate_move(Decoder& decoder, const DecodePolicy& policy, Rng& rng)
{
    if (decoder.length() == 0)
        throw std::invalid_argument("decoder has not been primed with a prefix");
    if (decoder.length() + kMaxMoveTokens > decoder.capacity())
        throw ContextOverflow("prefix leaves no room for a move");
    GeneratedMove out;
    const Vocab& vocab = Vocab::instance();
    const TokenId space = vocab.id(' '), mate = vocab.id('#');
    for (int i = 0; i < kMaxMoveTokens; ++i)
    {
        const std::vector<double>& z = decoder.logits();
        const double mx = *std::max_element(z.begin(), z.end());
        double s = 0.0;
        for (double v : z)
            s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        TokenId tok;
        if (policy.greedy)
            tok = static_cast<TokenId>(std::max_element(z.begin(), z.end()) - z.begin());
        else
        {
            if (!(policy.temperature > 0))
                throw std::invalid_argument("temperature must be positive");
            std::vector<double> w(z.size());
            for (std::size_t j = 0; j < z.size(); ++j)
                w[j] = std::exp((z[j] - mx) / policy.temperature);
            tok = static_cast<TokenId>(rng.categorical(w));
        }
        out.tokens.push_back(tok);
        out.logprobs.push_back(z[tok] - lse);
        if (tok != space)
            out.text += vocab.token(tok);
        decoder.feed(tok);
        if (tok == space || tok == mate)
        {
            out.terminated = true;
            break;
        }
    }
    return out;
}

GeneratedMove generate_move(const Model& model, const std::vector<TokenId>& prefix, const DecodePolicy& policy,
                            Rng& rng)
{
    if (prefix.empty())
        throw std::invalid_argument("empty prefix");
    if (static_cast<int>(prefix.size()) + kMaxMoveTokens > model.config.context_len)
        throw ContextOverflow("prefix leaves no room for a move");
    Decoder dec(model);
    dec.feed(prefix);
    return generate_move(dec, policy, rng);
}

// ---------------------------------------------------------------------------------------
// Checkpoints

namespace
{

std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::map<std::string, std::string> parse_kv(const std::string& line)
{
    std::map<std::string, std::string> kv;
    std::istringstream in(line);
    std::string tok;
    in >> tok; // section word
    while (in >> tok)
    {
        const auto eq = tok.find('=');
        if (eq == std::string::npos)
            throw CheckpointError("malformed key=value token: " + tok);
        kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

std::string getline_or_throw(std::istream& in)
{
    std::string line;
    if (!std::getline(in, line))
        throw CheckpointError("truncated checkpoint header");
    return line;
}

} // namespace

void write_checkpoint(std::ostream& out, const Model& model, bool with_optimizer,
                      const std::map<std::string, std::string>& meta)
{
    const ModelConfig& c = model.config;
    const OptimConfig& o = model.optim;
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    for (const auto& [name, t] : model.params)
        tensors.emplace_back(name, &t);
    if (with_optimizer)
    {
        for (const auto& [name, t] : model.adam.m)
            tensors.emplace_back("adam.m/" + name, &t);
        for (const auto& [name, t] : model.adam.v)
            tensors.emplace_back("adam.v/" + name, &t);
    }
    out << "MOMCKPT 1\n";
    out << "config n_layers=" << c.n_layers << " n_heads=" << c.n_heads << " d_model=" << c.d_model
        << " d_ff=" << c.d_ff << " context_len=" << c.context_len << " vocab_size=" << c.vocab_size
        << " dropout=" << fmt_double(c.dropout) << " n_experts=" << c.n_experts << " top_k=" << c.top_k << "\n";
    out << "optim lr=" << fmt_double(o.lr) << " beta1=" << fmt_double(o.beta1) << " beta2=" << fmt_double(o.beta2)
        << " eps=" << fmt_double(o.eps) << " weight_decay=" << fmt_double(o.weight_decay)
        << " warmup_steps=" << o.warmup_steps << " grad_clip=" << fmt_double(o.grad_clip) << "\n";
    out << "state seed=" << model.seed << " adam_step=" << (with_optimizer ? model.adam.step : 0) << "\n";
    for (const auto& [k, v] : meta)
    {
        if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
            throw CheckpointError("meta keys may not contain whitespace");
        out << "meta " << k << " " << v << "\n";
    }
    out << "vocab " << Vocab::kSize << "\n" << Vocab::instance().dump();
    out << "tensors " << tensors.size() << "\n";
    std::size_t offset = 0;
    for (const auto& [name, t] : tensors)
    {
        out << name << " " << t->rows << " " << t->cols << " " << offset << "\n";
        offset += t->size();
    }
    out << "end\n";
    std::vector<float> buf;
    for (const auto& [_, t] : tensors)
    {
        buf.resize(t->size());
        for (std::size_t i = 0; i < t->size(); ++i)
            buf[i] = static_cast<float>(t->data[i]);
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!out)
        throw CheckpointError("failed to write checkpoint");
}

Model read_checkpoint(std::istream& in, std::map<std::string, std::string>* meta)
{
    if (getline_or_throw(in) != "MOMCKPT 1")
        throw CheckpointError("not a checkpoint (bad magic or version)");
    Model m;
    auto cfg = parse_kv(getline_or_throw(in));
    auto opt = parse_kv(getline_or_throw(in));
    auto state = parse_kv(getline_or_throw(in));
    try
    {
        m.config.n_layers = std::stoi(cfg.at("n_layers"));
        m.config.n_heads = std::stoi(cfg.at("n_heads"));
        m.config.d_model = std::stoi(cfg.at("d_model"));
        m.config.d_ff = std::stoi(cfg.at("d_ff"));
        m.config.context_len = std::stoi(cfg.at("context_len"));
        m.config.vocab_size = std::stoi(cfg.at("vocab_size"));
        m.config.dropout = std::stod(cfg.at("dropout"));
        m.config.n_experts = std::stoi(cfg.at("n_experts"));
        m.config.top_k = std::stoi(cfg.at("top_k"));
        m.optim.lr = std::stod(opt.at("lr"));
        m.optim.beta1 = std::stod(opt.at("beta1"));
        m.optim.beta2 = std::stod(opt.at("beta2"));
        m.optim.eps = std::stod(opt.at("eps"));
        m.optim.weight_decay = std::stod(opt.at("weight_decay"));
        m.optim.warmup_steps = std::stoi(opt.at("warmup_steps"));
        m.optim.grad_clip = std::stod(opt.at("grad_clip"));
        m.seed = std::stoull(state.at("seed"));
        m.adam.step = std::stol(state.at("adam_step"));
    }
    catch (const std::exception& e)
    {
        throw CheckpointError(std::string("bad checkpoint header field: ") + e.what());
    }
    m.config.validate();
    std::string line = getline_or_throw(in);
    while (line.starts_with("meta "))
    {
        const auto sp = line.find(' ', 5);
        if (meta)
            (*meta)[line.substr(5, sp - 5)] = sp == std::string::npos ? "" : line.substr(sp + 1);
        line = getline_or_throw(in);
    }
    if (line != "vocab " + std::to_string(Vocab::kSize))
        throw CheckpointError("unexpected vocabulary section");
    std::string dump;
    for (std::size_t i = 0; i < Vocab::kSize; ++i)
        dump += getline_or_throw(in) + "\n";
    try
    {
        Vocab::check_dump(dump);
    }
    catch (const std::exception& e)
    {
        throw CheckpointError(e.what());
    }
    line = getline_or_throw(in);
    std::size_t count = 0;
    if (std::sscanf(line.c_str(), "tensors %zu", &count) != 1)
        throw CheckpointError("missing tensor manifest");
    struct Entry
    {
        std::string name;
        int rows, cols;
        std::size_t offset;
    };
    std::vector<Entry> entries;
    std::size_t expected = 0;
    for (std::size_t i = 0; i < count; ++i)
    {
        std::istringstream ls(getline_or_throw(in));
        Entry e;
        if (!(ls >> e.name >> e.rows >> e.cols >> e.offset) || e.rows < 0 || e.cols < 0 || e.offset != expected)
            throw CheckpointError("bad manifest line");
        expected += static_cast<std::size_t>(e.rows) * e.cols;
        entries.push_back(e);
    }
    if (getline_or_throw(in) != "end")
        throw CheckpointError("missing end of header");
    std::vector<float> buf;
    for (const Entry& e : entries)
    {
        Tensor t(e.rows, e.cols);
        buf.resize(t.size());
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float)))
            throw CheckpointError("truncated payload");
        for (std::size_t i = 0; i < buf.size(); ++i)
            t.data[i] = buf[i];
        if (e.name.starts_with("adam.m/"))
            m.adam.m[e.name.substr(7)] = std::move(t);
        else if (e.name.starts_with("adam.v/"))
            m.adam.v[e.name.substr(7)] = std::move(t);
        else
            m.params[e.name] = std::move(t);
    }
    return m;
}

void save_checkpoint(const std::string& path, const Model& model, bool with_optimizer,
                     const std::map<std::string, std::string>& meta)
{
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw CheckpointError("cannot open " + tmp);
        write_checkpoint(out, model, with_optimizer, meta);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw CheckpointError("cannot rename " + tmp + " to " + path);
}

Model load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open " + path);
    return read_checkpoint(in, meta);
}

} // namespace mom
