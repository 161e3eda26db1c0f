#include "mom/tensor.hpp"

#include <algorithm>

namespace mom
{
namespace kernels
{
namespace
{

// Below this many multiply-adds the fork/join cost dominates.
constexpr long kParallelThreshold = 1L << 16;

bool worth_parallel(int m, int k, int n)
{
    return static_cast<long>(m) * k * n >= kParallelThreshold;
}

} // namespace

namespace serial
{

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate)
{
    for (int i = 0; i < m; ++i)
    {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate)
            std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p)
        {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate)
{
    for (int i = 0; i < m; ++i)
    {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate)
            std::fill(crow, crow + n, 0.0);
        for (int p = 0; p < k; ++p)
        {
            const double av = a[static_cast<std::size_t>(p) * m + i];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate)
{
    for (int i = 0; i < m; ++i)
    {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j)
        {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

} // namespace serial

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate)
{
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
    for (int i = 0; i < m; ++i)
    {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate)
            std::fill(crow, crow + n, 0.0);
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p)
        {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate)
{
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
    for (int i = 0; i < m; ++i)
    {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate)
            std::fill(crow, crow + n, 0.0);
        for (int p = 0; p < k; ++p)
        {
            const double av = a[static_cast<std::size_t>(p) * m + i];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j)
                crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate)
{
#pragma omp parallel for schedule(static) if (worth_parallel(m, k, n))
    for (int i = 0; i < m; ++i)
    {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j)
        {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

} // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.cols != b.rows)
        throw std::invalid_argument("matmul shape mismatch");
    Tensor c(a.rows, b.cols);
    kernels::gemm_nn(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols, b.cols, false);
    return c;
}

} // namespace mom
