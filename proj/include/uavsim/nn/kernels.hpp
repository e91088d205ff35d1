#pragma once

#include <cstddef>

namespace uavsim::nn {

// Dense kernels. Each has a serial reference implementation and an
// OpenMP-parallel one; the parallel versions split work along independent
// output rows so results are bitwise identical to the serial ones.
// The bench target times both.

// C[m,n] = A[m,k] * B[k,n]
void matmul_serial(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);
void matmul(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n);

// C[m,n] += A^T[m,k] * B[k,n] where A is stored [k,m]
void matmul_tn_acc_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t k, std::size_t n);

// C[m,n] = A[m,k] * B^T[k,n] where B is stored [n,k]
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n);

}  // namespace uavsim::nn
