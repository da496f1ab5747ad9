#pragma once

#include <Eigen/Core>
#include <complex>
#include <vector>

// Data-parallel inner loops shared by the FIR transfer-matrix algebra.
//
// Every kernel has a serial reference implementation and an OpenMP variant.
// Each output element (one convolution coefficient, one grid point) is owned
// by exactly one thread and accumulated in a fixed order, so the two variants
// produce bit-identical results; tests assert that and tools/fir_bench.cpp
// compares their timings.

namespace parametrix::kernels {

using MatrixList = std::vector<Eigen::MatrixXd>;
using ComplexMatrixList = std::vector<Eigen::MatrixXcd>;

// out[k] = sum_{i+j=k} a[i]*b[j] for k = 0..horizon, missing coefficients
// treated as zero. a: p x q each, b: q x r each.
void conv_serial(const MatrixList& a, const MatrixList& b, int horizon, MatrixList& out);
void conv_parallel(const MatrixList& a, const MatrixList& b, int horizon, MatrixList& out);
// Dispatches on problem size (bit-identical either way).
void conv(const MatrixList& a, const MatrixList& b, int horizon, MatrixList& out);

// out[p] = sum_k coeffs[k] * points[p]^{-k}.
void eval_grid_serial(const MatrixList& coeffs, const std::vector<std::complex<double>>& points,
                      ComplexMatrixList& out);
void eval_grid_parallel(const MatrixList& coeffs, const std::vector<std::complex<double>>& points,
                        ComplexMatrixList& out);
void eval_grid(const MatrixList& coeffs, const std::vector<std::complex<double>>& points,
               ComplexMatrixList& out);

// Max absolute entry over a coefficient range [first, last]; exact under
// parallel reduction because max is associative and commutative on doubles.
double max_abs_serial(const MatrixList& coeffs, int first, int last);
double max_abs_parallel(const MatrixList& coeffs, int first, int last);

}  // namespace parametrix::kernels
