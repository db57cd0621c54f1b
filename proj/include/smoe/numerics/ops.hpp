#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smoe/numerics/tensor.hpp"
#include "smoe/util/random.hpp"

// Differentiable tensor operations. Matrices are rank-2 row-major; vectors
// (biases, layer-norm gains) are rank-1. Broadcasting is limited to adding a
// vector to every row of a matrix. Each op records a backward rule on the
// active Tape when any input requires gradients.
namespace smoe::num {

using TokenId = std::int32_t;

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x[t×n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);

// Row-wise softmax. `allowed` (rows×cols, 1 = visible) may be empty; masked
// entries get exactly zero probability. A row with nothing visible is all zero.
Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> allowed);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

// Rows of `table` selected by `ids`.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

// Sub-block rows [r0, r1) × cols [c0, c1).
Tensor slice(const Tensor& x, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
inline Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  return slice(x, r0, r1, 0, x.cols());
}
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
// Inverse of gathering: output row rows[p][i] is row i of parts[p]. Every
// output row must be covered exactly once.
Tensor scatter_rows(const std::vector<Tensor>& parts,
                    const std::vector<std::vector<std::size_t>>& rows, std::size_t total_rows);

// Inverted dropout: surviving entries are scaled by 1/(1-rate).
Tensor dropout(const Tensor& x, double rate, Rng& rng);

Tensor sum(const Tensor& x);

// Mean of -log softmax(logits[i])[targets[i]] over positions whose target is
// not `ignore_id`; exactly 0 when every position is ignored.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             TokenId ignore_id);

}  // namespace smoe::num
