#include "nl2code/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nl2code {

namespace {

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2-d tensor, got " + t.shape_str());
  }
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " and " + b.shape_str();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree for " + shapes(a, b));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    const double* arow = av.data() + static_cast<std::size_t>(i) * k;
    double* crow = out.data() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aik = arow[p];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  Tensor pa = a, pb = b;
  return make_op_result(
      "matmul", {m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](TensorImpl& self) mutable {
        const auto& g = self.grad;
        if (pa.requires_grad()) {
          auto& ga = pa.grad();
          const auto& bv = pb.values();
          for (int i = 0; i < m; ++i) {
            const double* grow = g.data() + static_cast<std::size_t>(i) * n;
            double* garow = ga.data() + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
              const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
              garow[p] += acc;
            }
          }
        }
        if (pb.requires_grad()) {
          auto& gb = pb.grad();
          const auto& av = pa.values();
          for (int i = 0; i < m; ++i) {
            const double* grow = g.data() + static_cast<std::size_t>(i) * n;
            const double* arow = av.data() + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
              const double aik = arow[p];
              if (aik == 0.0) continue;
              double* gbrow = gb.data() + static_cast<std::size_t>(p) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
            }
          }
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Tensor pa = a, pb = b;
    return make_op_result("add", a.shape(), std::move(out), {a, b},
                          [pa, pb](TensorImpl& self) mutable {
                            if (pa.requires_grad()) accumulate_grad(pa, self.grad);
                            if (pb.requires_grad()) accumulate_grad(pb, self.grad);
                          });
  }
  // broadcast a 1-d right operand over the rows of a 2-d left operand
  if (a.ndim() == 2 && b.ndim() == 1 && a.cols() == b.cols()) {
    const int rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (int i = 0; i < rows; ++i) {
      double* row = out.data() + static_cast<std::size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) row[j] += bv[j];
    }
    Tensor pa = a, pb = b;
    return make_op_result(
        "add_rows", a.shape(), std::move(out), {a, b}, [pa, pb, rows, cols](TensorImpl& self) mutable {
          if (pa.requires_grad()) accumulate_grad(pa, self.grad);
          if (pb.requires_grad()) {
            auto& gb = pb.grad();
            for (int i = 0; i < rows; ++i) {
              const double* grow = self.grad.data() + static_cast<std::size_t>(i) * cols;
              for (int j = 0; j < cols; ++j) gb[j] += grow[j];
            }
          }
        });
  }
  throw std::invalid_argument("add: shapes not broadcastable: " + shapes(a, b));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch: " + shapes(a, b));
  }
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tensor pa = a, pb = b;
  return make_op_result("mul", a.shape(), std::move(out), {a, b},
                        [pa, pb](TensorImpl& self) mutable {
                          const auto& g = self.grad;
                          if (pa.requires_grad()) {
                            auto& ga = pa.grad();
                            const auto& bvv = pb.values();
                            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bvv[i];
                          }
                          if (pb.requires_grad()) {
                            auto& gb = pb.grad();
                            const auto& avv = pa.values();
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * avv[i];
                          }
                        });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= factor;
  Tensor pa = a;
  return make_op_result("scale", a.shape(), std::move(out), {a},
                        [pa, factor](TensorImpl& self) mutable {
                          if (!pa.requires_grad()) return;
                          auto& ga = pa.grad();
                          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * self.grad[i];
                        });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Tensor pa = a;
  return make_op_result("relu", a.shape(), std::move(out), {a}, [pa](TensorImpl& self) mutable {
    if (!pa.requires_grad()) return;
    auto& ga = pa.grad();
    const auto& av = pa.values();
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (av[i] > 0.0) ga[i] += self.grad[i];
    }
  });
}

Tensor exp(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::exp(v);
  Tensor pa = a;
  return make_op_result("exp", a.shape(), std::move(out), {a}, [pa](TensorImpl& self) mutable {
    if (!pa.requires_grad()) return;
    auto& ga = pa.grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * self.values[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& v : out) v = std::log(v);
  Tensor pa = a;
  return make_op_result("log", a.shape(), std::move(out), {a}, [pa](TensorImpl& self) mutable {
    if (!pa.requires_grad()) return;
    auto& ga = pa.grad();
    const auto& av = pa.values();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] / av[i];
  });
}

Tensor softmax(const Tensor& a) {
  const int rows = a.ndim() == 2 ? a.rows() : 1;
  const int cols = a.ndim() == 2 ? a.cols() : static_cast<int>(a.numel());
  std::vector<double> out(a.values());
  for (int i = 0; i < rows; ++i) {
    double* row = out.data() + static_cast<std::size_t>(i) * cols;
    double mx = row[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (int j = 0; j < cols; ++j) row[j] /= total;
  }
  Tensor pa = a;
  return make_op_result(
      "softmax", a.shape(), std::move(out), {a}, [pa, rows, cols](TensorImpl& self) mutable {
        if (!pa.requires_grad()) return;
        auto& ga = pa.grad();
        for (int i = 0; i < rows; ++i) {
          const double* y = self.values.data() + static_cast<std::size_t>(i) * cols;
          const double* gy = self.grad.data() + static_cast<std::size_t>(i) * cols;
          double* gx = ga.data() + static_cast<std::size_t>(i) * cols;
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
          for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
      });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int pad_id) {
  require_2d(logits, "cross_entropy");
  const int T = logits.rows(), V = logits.cols();
  if (static_cast<int>(targets.size()) != T) {
    throw std::invalid_argument("cross_entropy: got " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(T) + " logit rows");
  }
  int live = 0;
  for (int t : targets) {
    if (t == pad_id) continue;
    if (t < 0 || t >= V) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) +
                              " outside vocabulary of size " + std::to_string(V));
    }
    ++live;
  }
  if (live == 0) throw std::invalid_argument("cross_entropy: every target position is pad");

  // cache the softmax rows for the backward pass
  std::vector<double> probs(logits.values());
  double loss = 0.0;
  for (int i = 0; i < T; ++i) {
    double* row = probs.data() + static_cast<std::size_t>(i) * V;
    double mx = row[0];
    for (int j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (int j = 0; j < V; ++j) {
      row[j] = std::exp(row[j] - mx);
      total += row[j];
    }
    for (int j = 0; j < V; ++j) row[j] /= total;
    if (targets[i] != pad_id) loss -= std::log(row[targets[i]]);
  }
  loss /= live;

  Tensor pl = logits;
  return make_op_result(
      "cross_entropy", {1}, {loss}, {logits},
      [pl, probs = std::move(probs), targets, pad_id, T, V, live](TensorImpl& self) mutable {
        if (!pl.requires_grad()) return;
        const double upstream = self.grad[0] / live;
        auto& gl = pl.grad();
        for (int i = 0; i < T; ++i) {
          if (targets[i] == pad_id) continue;
          const double* prow = probs.data() + static_cast<std::size_t>(i) * V;
          double* grow = gl.data() + static_cast<std::size_t>(i) * V;
          for (int j = 0; j < V; ++j) grow[j] += upstream * prow[j];
          grow[targets[i]] -= upstream;
        }
      });
}

Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& targets, int pad_id) {
  require_2d(probs, "nll_from_probs");
  const int T = probs.rows(), V = probs.cols();
  if (static_cast<int>(targets.size()) != T) {
    throw std::invalid_argument("nll_from_probs: got " + std::to_string(targets.size()) +
                                " targets for " + std::to_string(T) + " rows");
  }
  constexpr double floor = 1e-12;
  int live = 0;
  double loss = 0.0;
  for (int i = 0; i < T; ++i) {
    if (targets[i] == pad_id) continue;
    if (targets[i] < 0 || targets[i] >= V) {
      throw std::out_of_range("nll_from_probs: target id " + std::to_string(targets[i]) +
                              " outside vocabulary of size " + std::to_string(V));
    }
    loss -= std::log(std::max(probs.at(i, targets[i]), floor));
    ++live;
  }
  if (live == 0) throw std::invalid_argument("nll_from_probs: every target position is pad");
  loss /= live;

  Tensor pp = probs;
  return make_op_result("nll_from_probs", {1}, {loss}, {probs},
                        [pp, targets, pad_id, V, live](TensorImpl& self) mutable {
                          if (!pp.requires_grad()) return;
                          const double prob_floor = 1e-12;
                          const double upstream = self.grad[0] / live;
                          auto& gp = pp.grad();
                          const auto& pv = pp.values();
                          for (std::size_t i = 0; i < targets.size(); ++i) {
                            if (targets[i] == pad_id) continue;
                            const std::size_t idx = i * V + targets[i];
                            gp[idx] -= upstream / std::max(pv[idx], prob_floor);
                          }
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int rows = x.ndim() == 2 ? x.rows() : 1;
  const int d = x.ndim() == 2 ? x.cols() : static_cast<int>(x.numel());
  if (static_cast<int>(gamma.numel()) != d || static_cast<int>(beta.numel()) != d) {
    throw std::invalid_argument("layer_norm: gamma/beta must match the last axis of " +
                                x.shape_str());
  }
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (int i = 0; i < rows; ++i) {
    const double* row = xv.data() + static_cast<std::size_t>(i) * d;
    double mean_v = 0.0;
    for (int j = 0; j < d; ++j) mean_v += row[j];
    mean_v /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mean_v) * (row[j] - mean_v);
    var /= d;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[i] = istd;
    double* xh = xhat.data() + static_cast<std::size_t>(i) * d;
    double* orow = out.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      xh[j] = (row[j] - mean_v) * istd;
      orow[j] = gv[j] * xh[j] + bv[j];
    }
  }
  Tensor px = x, pg = gamma, pb = beta;
  return make_op_result(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), rows,
       d](TensorImpl& self) mutable {
        const auto& g = self.grad;
        const auto& gv = pg.values();
        for (int i = 0; i < rows; ++i) {
          const double* grow = g.data() + static_cast<std::size_t>(i) * d;
          const double* xh = xhat.data() + static_cast<std::size_t>(i) * d;
          if (pg.requires_grad()) {
            auto& gg = pg.grad();
            for (int j = 0; j < d; ++j) gg[j] += grow[j] * xh[j];
          }
          if (pb.requires_grad()) {
            auto& gb = pb.grad();
            for (int j = 0; j < d; ++j) gb[j] += grow[j];
          }
          if (px.requires_grad()) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (int j = 0; j < d; ++j) {
              const double dxh = grow[j] * gv[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xh[j];
            }
            mean_dxhat /= d;
            mean_dxhat_xhat /= d;
            auto& gx = px.grad();
            double* gxrow = gx.data() + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) {
              const double dxh = grow[j] * gv[j];
              gxrow[j] += inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(a.numel());
  const auto& av = a.values();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      out[static_cast<std::size_t>(j) * m + i] = av[static_cast<std::size_t>(i) * n + j];
    }
  }
  Tensor pa = a;
  return make_op_result("transpose", {n, m}, std::move(out), {a},
                        [pa, m, n](TensorImpl& self) mutable {
                          if (!pa.requires_grad()) return;
                          auto& ga = pa.grad();
                          for (int j = 0; j < n; ++j) {
                            for (int i = 0; i < m; ++i) {
                              ga[static_cast<std::size_t>(i) * n + j] +=
                                  self.grad[static_cast<std::size_t>(j) * m + i];
                            }
                          }
                        });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "gather_rows");
  const int rows = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * static_cast<std::size_t>(d));
  const auto& tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= rows) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[i]) +
                              " outside table with " + std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * static_cast<std::size_t>(d));
  }
  Tensor pt = table;
  return make_op_result("gather_rows", {static_cast<int>(ids.size()), d}, std::move(out), {table},
                        [pt, ids, d](TensorImpl& self) mutable {
                          if (!pt.requires_grad()) return;
                          auto& gt = pt.grad();
                          for (std::size_t i = 0; i < ids.size(); ++i) {
                            const double* grow = self.grad.data() + i * static_cast<std::size_t>(d);
                            double* trow = gt.data() + static_cast<std::size_t>(ids[i]) * d;
                            for (int j = 0; j < d; ++j) trow[j] += grow[j];
                          }
                        });
}

Tensor slice_rows(const Tensor& a, int first, int count) {
  require_2d(a, "slice_rows");
  if (first < 0 || count <= 0 || first + count > a.rows()) {
    throw std::out_of_range("slice_rows: range [" + std::to_string(first) + ", " +
                            std::to_string(first + count) + ") outside " + a.shape_str());
  }
  const int d = a.cols();
  std::vector<double> out(static_cast<std::size_t>(count) * d);
  std::copy_n(a.values().data() + static_cast<std::size_t>(first) * d, out.size(), out.data());
  Tensor pa = a;
  return make_op_result("slice_rows", {count, d}, std::move(out), {a},
                        [pa, first, count, d](TensorImpl& self) mutable {
                          if (!pa.requires_grad()) return;
                          auto& ga = pa.grad();
                          for (int i = 0; i < count; ++i) {
                            const double* grow = self.grad.data() + static_cast<std::size_t>(i) * d;
                            double* garow = ga.data() + static_cast<std::size_t>(first + i) * d;
                            for (int j = 0; j < d; ++j) garow[j] += grow[j];
                          }
                        });
}

Tensor slice_cols(const Tensor& a, int first, int count) {
  require_2d(a, "slice_cols");
  if (first < 0 || count <= 0 || first + count > a.cols()) {
    throw std::out_of_range("slice_cols: range [" + std::to_string(first) + ", " +
                            std::to_string(first + count) + ") outside " + a.shape_str());
  }
  const int m = a.rows(), n = a.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * count);
  const auto& av = a.values();
  for (int i = 0; i < m; ++i) {
    std::copy_n(av.data() + static_cast<std::size_t>(i) * n + first, count,
                out.data() + static_cast<std::size_t>(i) * count);
  }
  Tensor pa = a;
  return make_op_result("slice_cols", {m, count}, std::move(out), {a},
                        [pa, first, count, m, n](TensorImpl& self) mutable {
                          if (!pa.requires_grad()) return;
                          auto& ga = pa.grad();
                          for (int i = 0; i < m; ++i) {
                            const double* grow =
                                self.grad.data() + static_cast<std::size_t>(i) * count;
                            double* garow = ga.data() + static_cast<std::size_t>(i) * n + first;
                            for (int j = 0; j < count; ++j) garow[j] += grow[j];
                          }
                        });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int d = parts[0].cols();
  int total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (p.cols() != d) {
      throw std::invalid_argument("concat_rows: column mismatch: " + shapes(parts[0], p));
    }
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total) * d);
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  std::vector<Tensor> copies = parts;
  return make_op_result("concat_rows", {total, d}, std::move(out), parts,
                        [copies, d](TensorImpl& self) mutable {
                          std::size_t offset = 0;
                          for (Tensor& p : copies) {
                            const std::size_t n = p.numel();
                            if (p.requires_grad()) {
                              auto& gp = p.grad();
                              for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[offset + i];
                            }
                            offset += n;
                          }
                        });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (p.rows() != m) {
      throw std::invalid_argument("concat_cols: row mismatch: " + shapes(parts[0], p));
    }
    total += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(m) * total);
  int col = 0;
  for (const Tensor& p : parts) {
    const int pc = p.cols();
    const auto& pv = p.values();
    for (int i = 0; i < m; ++i) {
      std::copy_n(pv.data() + static_cast<std::size_t>(i) * pc, pc,
                  out.data() + static_cast<std::size_t>(i) * total + col);
    }
    col += pc;
  }
  std::vector<Tensor> copies = parts;
  return make_op_result("concat_cols", {m, total}, std::move(out), parts,
                        [copies, m, total](TensorImpl& self) mutable {
                          int col = 0;
                          for (Tensor& p : copies) {
                            const int pc = p.cols();
                            if (p.requires_grad()) {
                              auto& gp = p.grad();
                              for (int i = 0; i < m; ++i) {
                                const double* grow = self.grad.data() +
                                                     static_cast<std::size_t>(i) * total + col;
                                double* prow = gp.data() + static_cast<std::size_t>(i) * pc;
                                for (int j = 0; j < pc; ++j) prow[j] += grow[j];
                              }
                            }
                            col += pc;
                          }
                        });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor pa = a;
  return make_op_result("sum", {1}, {total}, {a}, [pa](TensorImpl& self) mutable {
    if (!pa.requires_grad()) return;
    auto& ga = pa.grad();
    for (double& g : ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double total = 0.0;
  for (double v : a.values()) total += v;
  Tensor pa = a;
  return make_op_result("mean", {1}, {total / n}, {a}, [pa, n](TensorImpl& self) mutable {
    if (!pa.requires_grad()) return;
    auto& ga = pa.grad();
    for (double& g : ga) g += self.grad[0] / n;
  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng, bool train) {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (!train || p == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(a.numel());
  for (double& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  std::vector<double> out(a.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Tensor pa = a;
  return make_op_result("dropout", a.shape(), std::move(out), {a},
                        [pa, mask = std::move(mask)](TensorImpl& self) mutable {
                          if (!pa.requires_grad()) return;
                          auto& ga = pa.grad();
                          for (std::size_t i = 0; i < ga.size(); ++i) {
                            ga[i] += self.grad[i] * mask[i];
                          }
                        });
}

}  // namespace nl2code
