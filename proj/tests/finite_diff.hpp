#pragma once

#include "mom/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace mom::testing_support
{

/// Relative error used by all gradient checks: |a − n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-8)
{
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Builds the scalar `build(graph, leaves)` over `params`, then compares every analytic
/// gradient entry with a central difference of step `eps`.
inline double max_relative_error(std::vector<Tensor>& params,
                                 const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                                 double eps = 1e-5, double floor = 1e-8)
{
    auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
        Graph g;
        std::vector<Var> leaves;
        for (const Tensor& p : params)
            leaves.push_back(g.leaf(p));
        Var out = build(g, leaves);
        const double v = g.scalar(out);
        if (with_grad)
        {
            g.backward(out);
            for (Var l : leaves)
                grads->push_back(g.grad(l));
        }
        return v;
    };
    std::vector<Tensor> grads;
    evaluate(true, &grads);
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        for (std::size_t j = 0; j < params[i].size(); ++j)
        {
            const double saved = params[i].data[j];
            params[i].data[j] = saved + eps;
            const double up = evaluate(false, nullptr);
            params[i].data[j] = saved - eps;
            const double down = evaluate(false, nullptr);
            params[i].data[j] = saved;
            const double numeric = (up - down) / (2 * eps);
            worst = std::max(worst, relative_error(grads[i].data[j], numeric, floor));
        }
    }
    return worst;
}

} // namespace mom::testing_support
