#include "mom/autograd.hpp"

#include "mom/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mom
{
namespace
{

void require_same_shape(const Tensor& a, const Tensor& b, const char* op)
{
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)

} // namespace

Var Graph::push(Tensor value, bool needs_grad, std::function<void(Graph&, int)> backward)
{
    Node n;
    n.own = std::move(value);
    n.needs_grad = needs_grad;
    if (needs_grad)
        n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(Tensor value)
{
    return push(std::move(value), false, nullptr);
}

Var Graph::leaf(const Tensor& value, bool trainable)
{
    Node n;
    n.external = &value;
    n.needs_grad = trainable;
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Var v) const
{
    return nodes_.at(v.id).value();
}

Tensor& Graph::grad_ref(int id)
{
    Node& n = nodes_[id];
    if (n.grad.size() != n.value().size() || n.grad.rows != n.value().rows)
        n.grad = Tensor(n.value().rows, n.value().cols);
    return n.grad;
}

const Tensor& Graph::grad(Var v)
{
    return grad_ref(v.id);
}

void Graph::backward(Var out)
{
    if (value(out).size() != 1)
        throw std::invalid_argument("backward target must be 1x1");
    for (Node& n : nodes_)
        n.grad = Tensor();
    grad_ref(out.id).data[0] = 1.0;
    for (int id = out.id; id >= 0; --id)
    {
        Node& n = nodes_[id];
        if (n.backward && n.grad.size() == n.value().size() && n.grad.size() > 0)
            n.backward(*this, id);
    }
}

// ---------------------------------------------------------------------------------------
// Elementwise

Var Graph::add(Var a, Var b)
{
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "add");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] += y.data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        for (Var p : {a, b})
        {
            if (!g.needs(p))
                continue;
            Tensor& gp = g.grad_ref(p.id);
            for (std::size_t i = 0; i < go.size(); ++i)
                gp.data[i] += go.data[i];
        }
    });
}

Var Graph::sub(Var a, Var b)
{
    return add(a, scale(b, -1.0));
}

Var Graph::mul(Var a, Var b)
{
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "mul");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] *= y.data[i];
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.value(a);
        const Tensor& y = g.value(b);
        if (g.needs(a))
        {
            Tensor& ga = g.grad_ref(a.id);
            for (std::size_t i = 0; i < go.size(); ++i)
                ga.data[i] += go.data[i] * y.data[i];
        }
        if (g.needs(b))
        {
            Tensor& gb = g.grad_ref(b.id);
            for (std::size_t i = 0; i < go.size(); ++i)
                gb.data[i] += go.data[i] * x.data[i];
        }
    });
}

Var Graph::scale(Var a, double s)
{
    Tensor out = value(a);
    for (double& v : out.data)
        v *= s;
    return push(std::move(out), needs(a), [a, s](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[i] += s * go.data[i];
    });
}

Var Graph::add_scalar(Var a, double s)
{
    Tensor out = value(a);
    for (double& v : out.data)
        v += s;
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[i] += go.data[i];
    });
}

Var Graph::add_const(Var a, const Tensor& c)
{
    require_same_shape(value(a), c, "add_const");
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] += c.data[i];
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[i] += go.data[i];
    });
}

Var Graph::mul_const(Var a, const Tensor& c)
{
    require_same_shape(value(a), c, "mul_const");
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] *= c.data[i];
    return push(std::move(out), needs(a), [a, c](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[i] += go.data[i] * c.data[i];
    });
}

#define MOM_UNARY(NAME, FWD, DERIV)                                                                 \
    Var Graph::NAME(Var a)                                                                          \
    {                                                                                               \
        Tensor out = value(a);                                                                      \
        for (double& v : out.data)                                                                  \
        {                                                                                           \
            const double x = v;                                                                     \
            v = (FWD);                                                                              \
        }                                                                                           \
        return push(std::move(out), needs(a), [a](Graph& g, int self) {                             \
            const Tensor& go = g.nodes_[self].grad;                                                 \
            const Tensor& xs = g.value(a);                                                          \
            const Tensor& ys = g.nodes_[self].value();                                              \
            Tensor& ga = g.grad_ref(a.id);                                                          \
            for (std::size_t i = 0; i < go.size(); ++i)                                             \
            {                                                                                       \
                const double x = xs.data[i];                                                        \
                const double y = ys.data[i];                                                        \
                (void)x;                                                                            \
                (void)y;                                                                            \
                ga.data[i] += go.data[i] * (DERIV);                                                 \
            }                                                                                       \
        });                                                                                         \
    }

MOM_UNARY(exp, std::exp(x), y)
MOM_UNARY(log, std::log(x), 1.0 / x)
MOM_UNARY(tanh, std::tanh(x), 1.0 - y * y)
MOM_UNARY(sigmoid, 1.0 / (1.0 + std::exp(-x)), y * (1.0 - y))
MOM_UNARY(relu, x > 0.0 ? x : 0.0, x > 0.0 ? 1.0 : 0.0)
MOM_UNARY(gelu, 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))),
          0.5 * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))) +
              0.5 * x * (1.0 - std::pow(std::tanh(kGeluC * (x + 0.044715 * x * x * x)), 2)) * kGeluC *
                  (1.0 + 3.0 * 0.044715 * x * x))

#undef MOM_UNARY

Var Graph::minimum(Var a, Var b)
{
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "minimum");
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = std::min(x.data[i], y.data[i]);
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.value(a);
        const Tensor& y = g.value(b);
        for (std::size_t i = 0; i < go.size(); ++i)
        {
            const Var target = x.data[i] <= y.data[i] ? a : b;
            if (g.needs(target))
                g.grad_ref(target.id).data[i] += go.data[i];
        }
    });
}

Var Graph::clamp(Var a, double lo, double hi)
{
    Tensor out = value(a);
    for (double& v : out.data)
        v = std::clamp(v, lo, hi);
    return push(std::move(out), needs(a), [a, lo, hi](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.value(a);
        Tensor& ga = g.grad_ref(a.id);
        for (std::size_t i = 0; i < go.size(); ++i)
            if (x.data[i] >= lo && x.data[i] <= hi)
                ga.data[i] += go.data[i];
    });
}

Var Graph::dropout(Var a, double p, Rng& rng)
{
    if (p <= 0.0)
        return a;
    const Tensor& x = value(a);
    Tensor mask(x.rows, x.cols);
    for (double& m : mask.data)
        m = rng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
    return mul_const(a, mask);
}

// ---------------------------------------------------------------------------------------
// Linear algebra

Var Graph::matmul(Var a, Var b)
{
    const Tensor& x = value(a);
    const Tensor& w = value(b);
    if (x.cols != w.rows)
        throw std::invalid_argument("matmul: shape mismatch");
    Tensor out(x.rows, w.cols);
    kernels::gemm_nn(x.data.data(), w.data.data(), out.data.data(), x.rows, x.cols, w.cols, false);
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.value(a);
        const Tensor& w = g.value(b);
        if (g.needs(a))
            kernels::gemm_nt(go.data.data(), w.data.data(), g.grad_ref(a.id).data.data(), x.rows, w.cols, x.cols, true);
        if (g.needs(b))
            kernels::gemm_tn(x.data.data(), go.data.data(), g.grad_ref(b.id).data.data(), x.cols, x.rows, w.cols, true);
    });
}

Var Graph::matmul_nt(Var a, Var b)
{
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.cols != y.cols)
        throw std::invalid_argument("matmul_nt: shape mismatch");
    Tensor out(x.rows, y.rows);
    kernels::gemm_nt(x.data.data(), y.data.data(), out.data.data(), x.rows, x.cols, y.rows, false);
    return push(std::move(out), needs(a) || needs(b), [a, b](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad; // x.rows × y.rows
        const Tensor& x = g.value(a);
        const Tensor& y = g.value(b);
        if (g.needs(a)) // dX = dO · Y
            kernels::gemm_nn(go.data.data(), y.data.data(), g.grad_ref(a.id).data.data(), x.rows, y.rows, x.cols, true);
        if (g.needs(b)) // dY = dOᵀ · X
            kernels::gemm_tn(go.data.data(), x.data.data(), g.grad_ref(b.id).data.data(), y.rows, x.rows, x.cols, true);
    });
}

Var Graph::linear(Var x, Var w, Var bias)
{
    return add_row(matmul(x, w), bias);
}

Var Graph::add_row(Var a, Var row)
{
    const Tensor& x = value(a);
    const Tensor& r = value(row);
    if (r.rows != 1 || r.cols != x.cols)
        throw std::invalid_argument("add_row: shape mismatch");
    Tensor out = x;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j)
            out(i, j) += r.data[j];
    return push(std::move(out), needs(a) || needs(row), [a, row](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        if (g.needs(a))
        {
            Tensor& ga = g.grad_ref(a.id);
            for (std::size_t i = 0; i < go.size(); ++i)
                ga.data[i] += go.data[i];
        }
        if (g.needs(row))
        {
            Tensor& gr = g.grad_ref(row.id);
            for (int i = 0; i < go.rows; ++i)
                for (int j = 0; j < go.cols; ++j)
                    gr.data[j] += go(i, j);
        }
    });
}

Var Graph::scale_rows(Var a, Var w)
{
    const Tensor& x = value(a);
    const Tensor& s = value(w);
    if (s.rows != x.rows || s.cols != 1)
        throw std::invalid_argument("scale_rows: shape mismatch");
    Tensor out = x;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j)
            out(i, j) *= s.data[i];
    return push(std::move(out), needs(a) || needs(w), [a, w](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& x = g.value(a);
        const Tensor& s = g.value(w);
        if (g.needs(a))
        {
            Tensor& ga = g.grad_ref(a.id);
            for (int i = 0; i < go.rows; ++i)
                for (int j = 0; j < go.cols; ++j)
                    ga(i, j) += go(i, j) * s.data[i];
        }
        if (g.needs(w))
        {
            Tensor& gw = g.grad_ref(w.id);
            for (int i = 0; i < go.rows; ++i)
            {
                double acc = 0.0;
                for (int j = 0; j < go.cols; ++j)
                    acc += go(i, j) * x(i, j);
                gw.data[i] += acc;
            }
        }
    });
}

// ---------------------------------------------------------------------------------------
// Shapes and reductions

Var Graph::slice_rows(Var a, int start, int count)
{
    const Tensor& x = value(a);
    if (start < 0 || count < 0 || start + count > x.rows)
        throw std::out_of_range("slice_rows out of range");
    Tensor out(count, x.cols);
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(start) * x.cols,
              x.data.begin() + static_cast<std::ptrdiff_t>(start + count) * x.cols, out.data.begin());
    return push(std::move(out), needs(a), [a, start](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        const std::size_t offset = static_cast<std::size_t>(start) * ga.cols;
        for (std::size_t i = 0; i < go.size(); ++i)
            ga.data[offset + i] += go.data[i];
    });
}

Var Graph::slice_cols(Var a, int start, int count)
{
    const Tensor& x = value(a);
    if (start < 0 || count < 0 || start + count > x.cols)
        throw std::out_of_range("slice_cols out of range");
    Tensor out(x.rows, count);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < count; ++j)
            out(i, j) = x(i, start + j);
    return push(std::move(out), needs(a), [a, start](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        for (int i = 0; i < go.rows; ++i)
            for (int j = 0; j < go.cols; ++j)
                ga(i, start + j) += go(i, j);
    });
}

Var Graph::concat_rows(const std::vector<Var>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat_rows: no inputs");
    const int cols = value(parts[0]).cols;
    int rows = 0;
    bool any = false;
    for (Var p : parts)
    {
        if (value(p).cols != cols)
            throw std::invalid_argument("concat_rows: column mismatch");
        rows += value(p).rows;
        any = any || needs(p);
    }
    Tensor out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts)
    {
        const Tensor& x = value(p);
        std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += x.size();
    }
    return push(std::move(out), any, [parts](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        std::size_t offset = 0;
        for (Var p : parts)
        {
            const std::size_t n = g.value(p).size();
            if (g.needs(p))
            {
                Tensor& gp = g.grad_ref(p.id);
                for (std::size_t i = 0; i < n; ++i)
                    gp.data[i] += go.data[offset + i];
            }
            offset += n;
        }
    });
}

Var Graph::gather_rows(Var table, const std::vector<int>& rows)
{
    const Tensor& t = value(table);
    Tensor out(static_cast<int>(rows.size()), t.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
    {
        if (rows[i] < 0 || rows[i] >= t.rows)
            throw std::out_of_range("gather_rows index out of range");
        std::copy(t.row(rows[i]).begin(), t.row(rows[i]).end(), out.row(static_cast<int>(i)).begin());
    }
    return push(std::move(out), needs(table), [table, rows](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gt = g.grad_ref(table.id);
        for (std::size_t i = 0; i < rows.size(); ++i)
            for (int j = 0; j < go.cols; ++j)
                gt(rows[i], j) += go(static_cast<int>(i), j);
    });
}

Var Graph::sum(Var a)
{
    double s = 0.0;
    for (double v : value(a).data)
        s += v;
    return push(Tensor(1, 1, s), needs(a), [a](Graph& g, int self) {
        const double go = g.nodes_[self].grad.data[0];
        for (double& v : g.grad_ref(a.id).data)
            v += go;
    });
}

Var Graph::mean(Var a)
{
    const double n = static_cast<double>(value(a).size());
    return scale(sum(a), 1.0 / n);
}

Var Graph::mean_rows(Var a)
{
    const Tensor& x = value(a);
    Tensor out(1, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j)
            out.data[j] += x(i, j);
    for (double& v : out.data)
        v /= x.rows;
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        const double inv = 1.0 / ga.rows;
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < ga.cols; ++j)
                ga(i, j) += go.data[j] * inv;
    });
}

Var Graph::sum_cols(Var a)
{
    const Tensor& x = value(a);
    Tensor out(x.rows, 1);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j)
            out.data[i] += x(i, j);
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& ga = g.grad_ref(a.id);
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < ga.cols; ++j)
                ga(i, j) += go.data[i];
    });
}

Var Graph::mean_cols(Var a)
{
    return scale(sum_cols(a), 1.0 / value(a).cols);
}

// ---------------------------------------------------------------------------------------
// Normalisation and probability

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps)
{
    const Tensor& in = value(x);
    const Tensor& gn = value(gain);
    const Tensor& bs = value(bias);
    if (gn.rows != 1 || gn.cols != in.cols || !gn.same_shape(bs))
        throw std::invalid_argument("layer_norm: shape mismatch");
    const int rows = in.rows, cols = in.cols;
    Tensor xhat(rows, cols);
    std::vector<double> inv_std(rows);
    Tensor out(rows, cols);
    for (int i = 0; i < rows; ++i)
    {
        double mu = 0.0;
        for (int j = 0; j < cols; ++j)
            mu += in(i, j);
        mu /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j)
            var += (in(i, j) - mu) * (in(i, j) - mu);
        var /= cols;
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < cols; ++j)
        {
            xhat(i, j) = (in(i, j) - mu) * inv_std[i];
            out(i, j) = gn.data[j] * xhat(i, j) + bs.data[j];
        }
    }
    return push(std::move(out), needs(x) || needs(gain) || needs(bias),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, int self) {
                    const Tensor& go = g.nodes_[self].grad;
                    const Tensor& gn = g.value(gain);
                    const int rows = go.rows, cols = go.cols;
                    if (g.needs(gain) || g.needs(bias))
                    {
                        for (int i = 0; i < rows; ++i)
                        {
                            for (int j = 0; j < cols; ++j)
                            {
                                if (g.needs(gain))
                                    g.grad_ref(gain.id).data[j] += go(i, j) * xhat(i, j);
                                if (g.needs(bias))
                                    g.grad_ref(bias.id).data[j] += go(i, j);
                            }
                        }
                    }
                    if (g.needs(x))
                    {
                        Tensor& gx = g.grad_ref(x.id);
                        for (int i = 0; i < rows; ++i)
                        {
                            double mean_d = 0.0, mean_dx = 0.0;
                            for (int j = 0; j < cols; ++j)
                            {
                                const double d = go(i, j) * gn.data[j];
                                mean_d += d;
                                mean_dx += d * xhat(i, j);
                            }
                            mean_d /= cols;
                            mean_dx /= cols;
                            for (int j = 0; j < cols; ++j)
                            {
                                const double d = go(i, j) * gn.data[j];
                                gx(i, j) += inv_std[i] * (d - mean_d - xhat(i, j) * mean_dx);
                            }
                        }
                    }
                });
}

namespace
{

void softmax_row(std::span<const double> in, std::span<double> out, const double* mask)
{
    double mx = -INFINITY;
    for (std::size_t j = 0; j < in.size(); ++j)
        if (!mask || mask[j] != 0.0)
            mx = std::max(mx, in[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j)
    {
        out[j] = (!mask || mask[j] != 0.0) ? std::exp(in[j] - mx) : 0.0;
        s += out[j];
    }
    for (double& v : out)
        v /= s;
}

void softmax_backward(const Tensor& y, const Tensor& go, Tensor& gx)
{
    for (int i = 0; i < y.rows; ++i)
    {
        double dot = 0.0;
        for (int j = 0; j < y.cols; ++j)
            dot += go(i, j) * y(i, j);
        for (int j = 0; j < y.cols; ++j)
            gx(i, j) += y(i, j) * (go(i, j) - dot);
    }
}

} // namespace

Var Graph::softmax_rows(Var a)
{
    const Tensor& x = value(a);
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
        softmax_row(x.row(i), out.row(i), nullptr);
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        softmax_backward(g.nodes_[self].value(), g.nodes_[self].grad, g.grad_ref(a.id));
    });
}

Var Graph::masked_softmax_rows(Var a, const Tensor& mask)
{
    const Tensor& x = value(a);
    require_same_shape(x, mask, "masked_softmax_rows");
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
        softmax_row(x.row(i), out.row(i), mask.row(i).data());
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        softmax_backward(g.nodes_[self].value(), g.nodes_[self].grad, g.grad_ref(a.id));
    });
}

Var Graph::log_softmax_rows(Var a)
{
    const Tensor& x = value(a);
    Tensor out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
    {
        double mx = -INFINITY;
        for (int j = 0; j < x.cols; ++j)
            mx = std::max(mx, x(i, j));
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j)
            s += std::exp(x(i, j) - mx);
        const double lse = mx + std::log(s);
        for (int j = 0; j < x.cols; ++j)
            out(i, j) = x(i, j) - lse;
    }
    return push(std::move(out), needs(a), [a](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& y = g.nodes_[self].value();
        Tensor& ga = g.grad_ref(a.id);
        for (int i = 0; i < y.rows; ++i)
        {
            double s = 0.0;
            for (int j = 0; j < y.cols; ++j)
                s += go(i, j);
            for (int j = 0; j < y.cols; ++j)
                ga(i, j) += go(i, j) - std::exp(y(i, j)) * s;
        }
    });
}

Var Graph::l2_normalize_rows(Var a, double eps)
{
    const Tensor& x = value(a);
    Tensor out(x.rows, x.cols);
    std::vector<double> norms(x.rows);
    for (int i = 0; i < x.rows; ++i)
    {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j)
            s += x(i, j) * x(i, j);
        norms[i] = std::max(std::sqrt(s), eps);
        for (int j = 0; j < x.cols; ++j)
            out(i, j) = x(i, j) / norms[i];
    }
    return push(std::move(out), needs(a), [a, norms = std::move(norms)](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& y = g.nodes_[self].value();
        Tensor& ga = g.grad_ref(a.id);
        for (int i = 0; i < y.rows; ++i)
        {
            double dot = 0.0;
            for (int j = 0; j < y.cols; ++j)
                dot += go(i, j) * y(i, j);
            for (int j = 0; j < y.cols; ++j)
                ga(i, j) += (go(i, j) - y(i, j) * dot) / norms[i];
        }
    });
}

// ---------------------------------------------------------------------------------------
// Attention and losses

Var Graph::causal_attention(Var qkv, int n_heads)
{
    const Tensor& in = value(qkv);
    if (in.cols % 3 != 0 || (in.cols / 3) % n_heads != 0)
        throw std::invalid_argument("causal_attention: bad packed width");
    const int t_len = in.rows;
    const int d = in.cols / 3;
    const int hd = d / n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    // probs[h] is T×T lower-triangular.
    std::vector<Tensor> probs(n_heads, Tensor(t_len, t_len));
    Tensor out(t_len, d);
    for (int h = 0; h < n_heads; ++h)
    {
        const int qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
        Tensor& p = probs[h];
        for (int i = 0; i < t_len; ++i)
        {
            double mx = -INFINITY;
            for (int j = 0; j <= i; ++j)
            {
                double s = 0.0;
                for (int c = 0; c < hd; ++c)
                    s += in(i, qo + c) * in(j, ko + c);
                p(i, j) = s * inv_sqrt;
                mx = std::max(mx, p(i, j));
            }
            double total = 0.0;
            for (int j = 0; j <= i; ++j)
            {
                p(i, j) = std::exp(p(i, j) - mx);
                total += p(i, j);
            }
            for (int j = 0; j <= i; ++j)
            {
                p(i, j) /= total;
                for (int c = 0; c < hd; ++c)
                    out(i, qo + c) += p(i, j) * in(j, vo + c);
            }
        }
    }
    return push(std::move(out), needs(qkv), [qkv, n_heads, probs = std::move(probs), inv_sqrt](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        const Tensor& in = g.value(qkv);
        Tensor& gi = g.grad_ref(qkv.id);
        const int t_len = in.rows;
        const int d = in.cols / 3;
        const int hd = d / n_heads;
        std::vector<double> dp(t_len);
        for (int h = 0; h < n_heads; ++h)
        {
            const int qo = h * hd, ko = d + h * hd, vo = 2 * d + h * hd;
            const Tensor& p = probs[h];
            for (int i = 0; i < t_len; ++i)
            {
                double dot = 0.0;
                for (int j = 0; j <= i; ++j)
                {
                    double s = 0.0;
                    for (int c = 0; c < hd; ++c)
                    {
                        s += go(i, qo + c) * in(j, vo + c);
                        gi(j, vo + c) += p(i, j) * go(i, qo + c);
                    }
                    dp[j] = s;
                    dot += p(i, j) * s;
                }
                for (int j = 0; j <= i; ++j)
                {
                    const double ds = p(i, j) * (dp[j] - dot) * inv_sqrt;
                    for (int c = 0; c < hd; ++c)
                    {
                        gi(i, qo + c) += ds * in(j, ko + c);
                        gi(j, ko + c) += ds * in(i, qo + c);
                    }
                }
            }
        }
    });
}

Var Graph::weighted_nll(Var logits, const std::vector<int>& targets, const std::vector<double>& weights)
{
    const Tensor& x = value(logits);
    if (static_cast<int>(targets.size()) != x.rows || targets.size() != weights.size())
        throw std::invalid_argument("weighted_nll: size mismatch");
    double loss = 0.0;
    Tensor probs(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i)
    {
        if (weights[i] == 0.0)
            continue;
        softmax_row(x.row(i), probs.row(i), nullptr);
        loss -= weights[i] * std::log(probs(i, targets[i]));
    }
    return push(Tensor(1, 1, loss), needs(logits),
                [logits, targets, weights, probs = std::move(probs)](Graph& g, int self) {
                    const double go = g.nodes_[self].grad.data[0];
                    Tensor& gl = g.grad_ref(logits.id);
                    for (int i = 0; i < gl.rows; ++i)
                    {
                        if (weights[i] == 0.0)
                            continue;
                        const double s = go * weights[i];
                        for (int j = 0; j < gl.cols; ++j)
                            gl(i, j) += s * probs(i, j);
                        gl(i, targets[i]) -= s;
                    }
                });
}

Var Graph::token_logprobs(Var logits, const std::vector<int>& rows, const std::vector<int>& targets)
{
    const Tensor& x = value(logits);
    if (rows.size() != targets.size())
        throw std::invalid_argument("token_logprobs: size mismatch");
    const int n = static_cast<int>(rows.size());
    Tensor out(n, 1);
    Tensor probs(n, x.cols);
    for (int i = 0; i < n; ++i)
    {
        softmax_row(x.row(rows[i]), probs.row(i), nullptr);
        // Log through log-sum-exp for accuracy on confident rows.
        double mx = -INFINITY;
        for (int j = 0; j < x.cols; ++j)
            mx = std::max(mx, x(rows[i], j));
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j)
            s += std::exp(x(rows[i], j) - mx);
        out.data[i] = x(rows[i], targets[i]) - mx - std::log(s);
    }
    return push(std::move(out), needs(logits), [logits, rows, targets, probs = std::move(probs)](Graph& g, int self) {
        const Tensor& go = g.nodes_[self].grad;
        Tensor& gl = g.grad_ref(logits.id);
        for (std::size_t i = 0; i < rows.size(); ++i)
        {
            const double s = go.data[i];
            for (int j = 0; j < gl.cols; ++j)
                gl(rows[i], j) -= s * probs(static_cast<int>(i), j);
            gl(rows[i], targets[i]) += s;
        }
    });
}

} // namespace mom
