#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mom
{

/// Dense row-major matrix of doubles. Vectors are 1×n rows.
struct Tensor
{
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill)
    {
        if (r < 0 || c < 0)
            throw std::invalid_argument("negative tensor shape");
    }

    std::size_t size() const { return data.size(); }
    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const
    {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool operator==(const Tensor&) const = default;
};

namespace kernels
{

// C (m×n) [+]= A (m×k) · B (k×n)
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
// C (m×n) [+]= Aᵀ · B, A is (k×m), B is (k×n)
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
// C (m×n) [+]= A · Bᵀ, A is (m×k), B is (n×k)
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);

/// Single-threaded reference versions. Each output element is reduced in the same order
/// as the parallel kernels, so results are bitwise identical.
namespace serial
{
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate);
} // namespace serial

} // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b);

} // namespace mom
