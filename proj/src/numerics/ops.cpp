#include "smoe/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "smoe/error.hpp"
#include "smoe/numerics/tape.hpp"

namespace smoe::num {

namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) {
    throw ShapeError(fmt::format("{}: expected a matrix, got {}", op,
                                 t.defined() ? shape_string(t.shape()) : "<undefined>"));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(fmt::format("{}: shapes {} and {} differ", op, shape_string(a.shape()),
                                 shape_string(b.shape())));
  }
}

// Wraps the forward result and, when recording, attaches the backward rule.
Tensor emit(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
            Tape::BackwardFn fn) {
  Tensor out(std::move(shape), std::move(values));
  bool record = false;
  if (Tape::active()) {
    for (const auto& in : inputs) record = record || in.requires_grad();
  }
  if (record) {
    out.set_requires_grad(true);
    Tape::active()->record(std::move(inputs), out, std::move(fn));
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError(fmt::format("matmul: inner dimensions of {} and {} disagree",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  std::vector<double> c(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return emit({m, n}, std::move(c), {a, b}, [a, b, m, k, n](std::span<const double> g) {
    const double* A = a.data().data();
    const double* B = b.data().data();
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* brow = B + p * n;
          const double* grow = g.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const auto m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw ShapeError(fmt::format("matmul_nt: inner dimensions of {} and {}ᵀ disagree",
                                 shape_string(a.shape()), shape_string(b.shape())));
  }
  std::vector<double> c(m * n);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
      c[i * n + j] = acc;
    }
  }
  return emit({m, n}, std::move(c), {a, b}, [a, b, m, k, n](std::span<const double> g) {
    const double* A = a.data().data();
    const double* B = b.data().data();
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = g[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gv * B[j * k + p];
        }
      }
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          const double gv = g[i * n + j];
          if (gv == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gv * A[i * k + p];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return emit(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    for (const Tensor* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gt = t->grad_buffer();
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] += g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return emit(a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * b[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * a[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return emit(x.shape(), std::move(out), {x}, [x, factor](std::span<const double> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  const auto t = x.rows(), n = x.cols();
  if (bias.rank() != 1 || bias.size() != n) {
    throw ShapeError(fmt::format("add_bias: bias {} does not match rows of {}",
                                 shape_string(bias.shape()), shape_string(x.shape())));
  }
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < t; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x[r * n + c] + bias[c];
  }
  return emit(x.shape(), std::move(out), {x, bias},
              [x, bias, t, n](std::span<const double> g) {
                if (x.requires_grad()) {
                  auto gx = x.grad_buffer();
                  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                }
                if (bias.requires_grad()) {
                  auto gb = bias.grad_buffer();
                  for (std::size_t r = 0; r < t; ++r) {
                    for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
                  }
                }
              });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / (1.0 + std::exp(-x[i]));
  return emit(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = 1.0 / (1.0 + std::exp(-x[i]));
      gx[i] += g[i] * s * (1.0 + x[i] * (1.0 - s));
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return emit(x.shape(), std::move(out), {x}, [x](std::span<const double> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (x[i] > 0.0) gx[i] += g[i];
    }
  });
}

Tensor masked_softmax(const Tensor& scores, std::span<const std::uint8_t> allowed) {
  require_matrix(scores, "masked_softmax");
  const auto t = scores.rows(), n = scores.cols();
  if (!allowed.empty() && allowed.size() != t * n) {
    throw ShapeError(fmt::format("masked_softmax: mask of {} entries for scores {}",
                                 allowed.size(), shape_string(scores.shape())));
  }
  auto visible = [&](std::size_t i) { return allowed.empty() || allowed[i] != 0; };
  std::vector<double> p(t * n, 0.0);
  for (std::size_t r = 0; r < t; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c) {
      if (visible(r * n + c)) mx = std::max(mx, scores[r * n + c]);
    }
    if (!std::isfinite(mx)) continue;
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (!visible(r * n + c)) continue;
      p[r * n + c] = std::exp(scores[r * n + c] - mx);
      z += p[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) p[r * n + c] /= z;
  }
  auto probs = p;
  return emit(scores.shape(), std::move(p), {scores},
              [scores, probs = std::move(probs), t, n](std::span<const double> g) {
                auto gs = scores.grad_buffer();
                for (std::size_t r = 0; r < t; ++r) {
                  double dot = 0.0;
                  for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * probs[r * n + c];
                  for (std::size_t c = 0; c < n; ++c) {
                    gs[r * n + c] += probs[r * n + c] * (g[r * n + c] - dot);
                  }
                }
              });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_matrix(x, "layer_norm");
  const auto t = x.rows(), d = x.cols();
  if (gain.size() != d || bias.size() != d) {
    throw ShapeError(fmt::format("layer_norm: gain {} / bias {} for input {}",
                                 shape_string(gain.shape()), shape_string(bias.shape()),
                                 shape_string(x.shape())));
  }
  std::vector<double> xhat(t * d), rstd(t), out(t * d);
  for (std::size_t r = 0; r < t; ++r) {
    const double* row = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(d);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) {
      xhat[r * d + c] = (row[c] - mean) * rstd[r];
      out[r * d + c] = xhat[r * d + c] * gain[c] + bias[c];
    }
  }
  return emit(x.shape(), std::move(out), {x, gain, bias},
              [x, gain, bias, xhat = std::move(xhat), rstd = std::move(rstd), t,
               d](std::span<const double> g) {
                if (gain.requires_grad()) {
                  auto gg = gain.grad_buffer();
                  for (std::size_t r = 0; r < t; ++r) {
                    for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * xhat[r * d + c];
                  }
                }
                if (bias.requires_grad()) {
                  auto gb = bias.grad_buffer();
                  for (std::size_t r = 0; r < t; ++r) {
                    for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
                  }
                }
                if (x.requires_grad()) {
                  auto gx = x.grad_buffer();
                  const double inv_d = 1.0 / static_cast<double>(d);
                  for (std::size_t r = 0; r < t; ++r) {
                    double mean_dy = 0.0, mean_dy_xhat = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dy = g[r * d + c] * gain[c];
                      mean_dy += dy;
                      mean_dy_xhat += dy * xhat[r * d + c];
                    }
                    mean_dy *= inv_d;
                    mean_dy_xhat *= inv_d;
                    for (std::size_t c = 0; c < d; ++c) {
                      const double dy = g[r * d + c] * gain[c];
                      gx[r * d + c] += rstd[r] * (dy - mean_dy - xhat[r * d + c] * mean_dy_xhat);
                    }
                  }
                }
              });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_matrix(table, "embedding");
  const auto v = table.rows(), d = table.cols();
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  std::vector<TokenId> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= v) {
      throw IndexError(fmt::format("embedding: id {} outside vocabulary of {}", idx[r], v));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(idx[r]) * d, d, out.data() + r * d);
  }
  const Shape shape{idx.size(), d};
  return emit(shape, std::move(out), {table},
              [table, idx = std::move(idx), d](std::span<const double> g) {
                auto gt = table.grad_buffer();
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  double* dst = gt.data() + static_cast<std::size_t>(idx[r]) * d;
                  for (std::size_t c = 0; c < d; ++c) dst[c] += g[r * d + c];
                }
              });
}

Tensor slice(const Tensor& x, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  require_matrix(x, "slice");
  const auto n = x.cols();
  if (r0 >= r1 || c0 >= c1 || r1 > x.rows() || c1 > n) {
    throw ShapeError(fmt::format("slice [{}:{}, {}:{}] out of bounds for {}", r0, r1, c0, c1,
                                 shape_string(x.shape())));
  }
  const auto rows = r1 - r0, cols = c1 - c0;
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().data() + (r0 + r) * n + c0, cols, out.data() + r * cols);
  }
  return emit({rows, cols}, std::move(out), {x},
              [x, r0, c0, rows, cols, n](std::span<const double> g) {
                auto gx = x.grad_buffer();
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t c = 0; c < cols; ++c) gx[(r0 + r) * n + c0 + c] += g[r * cols + c];
                }
              });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  if (parts.size() == 1) return parts.front();
  const auto n = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != n) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return emit({total, n}, std::move(out), parts, [parts](std::span<const double> g) {
    std::size_t offset = 0;
    for (auto& p : parts) {
      if (p.requires_grad()) {
        auto gp = p.grad_buffer();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset + i];
      }
      offset += p.size();
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  if (parts.size() == 1) return parts.front();
  const auto t = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != t) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  std::vector<double> out(t * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto w = p.cols();
    for (std::size_t r = 0; r < t; ++r) {
      std::copy_n(p.data().data() + r * w, w, out.data() + r * total + offset);
    }
    offset += w;
  }
  return emit({t, total}, std::move(out), parts,
              [parts, t, total](std::span<const double> g) {
                std::size_t offset = 0;
                for (auto& p : parts) {
                  const auto w = p.cols();
                  if (p.requires_grad()) {
                    auto gp = p.grad_buffer();
                    for (std::size_t r = 0; r < t; ++r) {
                      for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * total + offset + c];
                    }
                  }
                  offset += w;
                }
              });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const auto n = x.cols();
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  std::vector<double> out(idx.size() * n);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= x.rows()) throw IndexError(fmt::format("gather_rows: row {} of {}", idx[r], x.rows()));
    std::copy_n(x.data().data() + idx[r] * n, n, out.data() + r * n);
  }
  const Shape shape{idx.size(), n};
  return emit(shape, std::move(out), {x},
              [x, idx = std::move(idx), n](std::span<const double> g) {
                auto gx = x.grad_buffer();
                for (std::size_t r = 0; r < idx.size(); ++r) {
                  for (std::size_t c = 0; c < n; ++c) gx[idx[r] * n + c] += g[r * n + c];
                }
              });
}

Tensor scatter_rows(const std::vector<Tensor>& parts,
                    const std::vector<std::vector<std::size_t>>& rows, std::size_t total_rows) {
  if (parts.empty() || parts.size() != rows.size()) {
    throw ShapeError("scatter_rows: parts and row lists disagree");
  }
  const auto n = parts.front().cols();
  std::vector<std::uint8_t> covered(total_rows, 0);
  std::vector<double> out(total_rows * n, 0.0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    require_matrix(parts[p], "scatter_rows");
    if (parts[p].cols() != n || parts[p].rows() != rows[p].size()) {
      throw ShapeError("scatter_rows: part shape does not match its row list");
    }
    for (std::size_t r = 0; r < rows[p].size(); ++r) {
      const auto dst = rows[p][r];
      if (dst >= total_rows || covered[dst]) {
        throw IndexError(fmt::format("scatter_rows: row {} invalid or duplicated", dst));
      }
      covered[dst] = 1;
      std::copy_n(parts[p].data().data() + r * n, n, out.data() + dst * n);
    }
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end()) {
    throw IndexError("scatter_rows: some output rows are not covered");
  }
  return emit({total_rows, n}, std::move(out), parts,
              [parts, rows, n](std::span<const double> g) {
                for (std::size_t p = 0; p < parts.size(); ++p) {
                  if (!parts[p].requires_grad()) continue;
                  auto gp = parts[p].grad_buffer();
                  for (std::size_t r = 0; r < rows[p].size(); ++r) {
                    for (std::size_t c = 0; c < n; ++c) gp[r * n + c] += g[rows[p][r] * n + c];
                  }
                }
              });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ContractError(fmt::format("dropout rate {} not in [0,1)", rate));
  if (rate == 0.0) return x;
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = u(rng) < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return emit(x.shape(), std::move(out), {x},
              [x, mask = std::move(mask)](std::span<const double> g) {
                auto gx = x.grad_buffer();
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * mask[i];
              });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return emit({1}, {s}, {x}, [x](std::span<const double> g) {
    auto gx = x.grad_buffer();
    for (auto& v : gx) v += g[0];
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                             TokenId ignore_id) {
  require_matrix(logits, "softmax_cross_entropy");
  const auto t = logits.rows(), v = logits.cols();
  if (targets.size() != t) {
    throw ShapeError(fmt::format("softmax_cross_entropy: {} targets for logits {}", targets.size(),
                                 shape_string(logits.shape())));
  }
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  std::vector<double> lse(t, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < t; ++r) {
    if (tgt[r] == ignore_id) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= v) {
      throw IndexError(fmt::format("softmax_cross_entropy: target {} outside [0, {})", tgt[r], v));
    }
    const double* row = logits.data().data() + r * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t c = 0; c < v; ++c) z += std::exp(row[c] - mx);
    lse[r] = mx + std::log(z);
    total += lse[r] - row[tgt[r]];
    ++counted;
  }
  const double loss = counted ? total / static_cast<double>(counted) : 0.0;
  return emit({1}, {loss}, {logits},
              [logits, tgt = std::move(tgt), lse = std::move(lse), counted, ignore_id, t,
               v](std::span<const double> g) {
                if (!counted) return;
                auto gl = logits.grad_buffer();
                const double w = g[0] / static_cast<double>(counted);
                for (std::size_t r = 0; r < t; ++r) {
                  if (tgt[r] == ignore_id) continue;
                  const double* row = logits.data().data() + r * v;
                  for (std::size_t c = 0; c < v; ++c) gl[r * v + c] += w * std::exp(row[c] - lse[r]);
                  gl[r * v + static_cast<std::size_t>(tgt[r])] -= w;
                }
              });
}

}  // namespace smoe::num
