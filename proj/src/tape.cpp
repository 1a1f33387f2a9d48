#include "sdbert/tape.hpp"

#include <cmath>
#include <string>

namespace sdbert {

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kGeluScale = std::sqrt(2.0 / M_PI);
}  // namespace

Tape::Ref Tape::watch(Tensor& t) {
  ensure_finite(t.values, "watch");
  Node n;
  n.bound = &t;
  n.needs_grad = t.requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size()) - 1;
}

Tape::Ref Tape::constant(Tensor t) {
  Node n;
  n.owned = std::move(t);
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size()) - 1;
}

Tape::Ref Tape::view(const Tensor& t) {
  Node n;
  n.bound_view = &t;
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size()) - 1;
}

void Tape::check_ref(Ref r) const {
  if (r < 0 || r >= size()) throw DimensionError("tape reference out of range");
}

const Tensor& Tape::value(Ref r) const {
  check_ref(r);
  return tensor_of(nodes_[r]);
}

double Tape::scalar_value(Ref r) const {
  const Tensor& t = value(r);
  if (t.numel() != 1) throw DimensionError("expected a scalar node, got " + t.shape_str());
  return t.values[0];
}

const Tensor& Tape::input2d(Ref r, const char* op) const {
  const Tensor& t = value(r);
  if (t.ndim() != 2) {
    throw DimensionError(std::string(op) + " requires a 2-D input, got " + t.shape_str());
  }
  return t;
}

Tape::Ref Tape::push(Tensor value, const std::vector<Ref>& inputs) {
  ensure_finite(value.values, "tape operation");
  Node n;
  n.owned = std::move(value);
  for (Ref in : inputs) {
    check_ref(in);
    n.needs_grad = n.needs_grad || nodes_[in].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return static_cast<Ref>(nodes_.size()) - 1;
}

bool Tape::wants_grad(Ref r) const {
  check_ref(r);
  return nodes_[r].needs_grad;
}

std::vector<double>& Tape::grad_buffer(Ref r) {
  check_ref(r);
  Node& n = nodes_[r];
  if (n.grad.empty()) n.grad.assign(tensor_of(n).numel(), 0.0);
  return n.grad;
}

const std::vector<double>& Tape::grad_at(Ref r) const {
  check_ref(r);
  return nodes_[r].grad;
}

Tape::Ref Tape::custom(Tensor output, std::vector<Ref> inputs,
                       std::function<void(Tape&, Ref)> backprop) {
  Ref r = push(std::move(output), inputs);
  if (nodes_[r].needs_grad) nodes_[r].backprop = std::move(backprop);
  return r;
}

// ---------------------------------------------------------------------------
// Operations. Each records a closure implementing its local gradient rule.
// ---------------------------------------------------------------------------

Tape::Ref Tape::matmul(Ref a, Ref b) {
  const Tensor& ta = input2d(a, "matmul");
  const Tensor& tb = input2d(b, "matmul");
  if (ta.cols() != tb.rows()) {
    throw DimensionError("matmul inner extents disagree: " + ta.shape_str() + " vs " +
                         tb.shape_str());
  }
  const int m = ta.rows(), k = ta.cols(), p = tb.cols();
  Tensor out = Tensor::zeros({m, p});
  kernels::matmul_nn(ta.values.data(), tb.values.data(), out.values.data(), m, k, p);
  Ref r = push(std::move(out), {a, b});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [a, b, m, k, p](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      if (t.wants_grad(a)) {
        kernels::matmul_nt_acc(g.data(), t.value(b).values.data(),
                               t.grad_buffer(a).data(), m, p, k);
      }
      if (t.wants_grad(b)) {
        kernels::matmul_tn_acc(t.value(a).values.data(), g.data(),
                               t.grad_buffer(b).data(), m, k, p);
      }
    };
  }
  return r;
}

Tape::Ref Tape::matmul_nt(Ref a, Ref b) {
  const Tensor& ta = input2d(a, "matmul_nt");
  const Tensor& tb = input2d(b, "matmul_nt");
  if (ta.cols() != tb.cols()) {
    throw DimensionError("matmul_nt shared extents disagree: " + ta.shape_str() + " vs " +
                         tb.shape_str());
  }
  const int m = ta.rows(), k = ta.cols(), p = tb.rows();
  Tensor out = Tensor::zeros({m, p});
  kernels::matmul_nt(ta.values.data(), tb.values.data(), out.values.data(), m, k, p);
  Ref r = push(std::move(out), {a, b});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [a, b, m, k, p](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);  // [m x p]
      if (t.wants_grad(a)) {
        kernels::matmul_nn_acc(g.data(), t.value(b).values.data(),
                               t.grad_buffer(a).data(), m, p, k);
      }
      if (t.wants_grad(b)) {
        kernels::matmul_tn_acc(g.data(), t.value(a).values.data(),
                               t.grad_buffer(b).data(), m, p, k);
      }
    };
  }
  return r;
}

Tape::Ref Tape::add(Ref a, Ref b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw DimensionError("add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out = ta;
  out.requires_grad = false;
  out.grad.clear();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += tb.values[i];
  Ref r = push(std::move(out), {a, b});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [a, b](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      for (Ref in : {a, b}) {
        if (!t.wants_grad(in)) continue;
        auto& gi = t.grad_buffer(in);
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    };
  }
  return r;
}

Tape::Ref Tape::sub(Ref a, Ref b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw DimensionError("sub shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out = ta;
  out.requires_grad = false;
  out.grad.clear();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= tb.values[i];
  Ref r = push(std::move(out), {a, b});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [a, b](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      if (t.wants_grad(a)) {
        auto& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.wants_grad(b)) {
        auto& gb = t.grad_buffer(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return r;
}

Tape::Ref Tape::mul(Ref a, Ref b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (!ta.same_shape(tb)) {
    throw DimensionError("mul shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out = ta;
  out.requires_grad = false;
  out.grad.clear();
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= tb.values[i];
  Ref r = push(std::move(out), {a, b});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [a, b](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      if (t.wants_grad(a)) {
        auto& ga = t.grad_buffer(a);
        const auto& vb = t.value(b).values;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
      }
      if (t.wants_grad(b)) {
        auto& gb = t.grad_buffer(b);
        const auto& va = t.value(a).values;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    };
  }
  return r;
}

Tape::Ref Tape::scale(Ref a, double s) {
  if (!std::isfinite(s)) throw NumericError("scale factor must be finite");
  Tensor out = value(a);
  out.requires_grad = false;
  out.grad.clear();
  for (double& v : out.values) v *= s;
  Ref r = push(std::move(out), {a});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [a, s](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      auto& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
    };
  }
  return r;
}

Tape::Ref Tape::add_bias(Ref x, Ref bias) {
  const Tensor& tx = input2d(x, "add_bias");
  const Tensor& tb = value(bias);
  if (tb.ndim() != 1 || tb.shape[0] != tx.cols()) {
    throw DimensionError("add_bias expects bias [" + std::to_string(tx.cols()) +
                         "], got " + tb.shape_str());
  }
  const int m = tx.rows(), n = tx.cols();
  Tensor out = tx;
  out.requires_grad = false;
  out.grad.clear();
  for (int i = 0; i < m; ++i) {
    double* row = out.values.data() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) row[j] += tb.values[j];
  }
  Ref r = push(std::move(out), {x, bias});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [x, bias, m, n](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      if (t.wants_grad(x)) {
        auto& gx = t.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (t.wants_grad(bias)) {
        auto& gb = t.grad_buffer(bias);
        for (int i = 0; i < m; ++i) {
          const double* row = g.data() + static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) gb[j] += row[j];
        }
      }
    };
  }
  return r;
}

Tape::Ref Tape::sum(Ref x) {
  const Tensor& tx = value(x);
  double total = 0.0;
  for (double v : tx.values) total += v;
  Ref r = push(Tensor::scalar(total), {x});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [x](Tape& t, Ref self) {
      const double g = t.grad_at(self)[0];
      auto& gx = t.grad_buffer(x);
      for (double& v : gx) v += g;
    };
  }
  return r;
}

Tape::Ref Tape::softmax_rows(Ref x, std::shared_ptr<const Tensor> additive_mask) {
  const Tensor& tx = input2d(x, "softmax_rows");
  Tensor out = sdbert::softmax_rows(tx, additive_mask.get());
  const int m = tx.rows(), n = tx.cols();
  Ref r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    // dL/dx_j = p_j * (g_j - sum_l p_l g_l); masked positions have p_j == 0.
    nodes_[r].backprop = [x, m, n](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      const auto& p = t.value(self).values;
      auto& gx = t.grad_buffer(x);
      for (int i = 0; i < m; ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += p[off + j] * g[off + j];
        for (int j = 0; j < n; ++j) gx[off + j] += p[off + j] * (g[off + j] - dot);
      }
    };
  }
  return r;
}

Tape::Ref Tape::layer_norm(Ref x, Ref gain, Ref shift, double eps) {
  const Tensor& tx = input2d(x, "layer_norm");
  const int m = tx.rows(), n = tx.cols();
  const Tensor& tg = value(gain);
  const Tensor& ts = value(shift);
  if (tg.ndim() != 1 || tg.shape[0] != n || ts.ndim() != 1 || ts.shape[0] != n) {
    throw DimensionError("layer_norm gain/shift must be [" + std::to_string(n) + "]");
  }
  Tensor out = Tensor::zeros({m, n});
  auto normalized = std::make_shared<std::vector<double>>(tx.values.size());
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (int i = 0; i < m; ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += tx.values[off + j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = tx.values[off + j] - mean;
      var += d * d;
    }
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (int j = 0; j < n; ++j) {
      const double xhat = (tx.values[off + j] - mean) * inv;
      (*normalized)[off + j] = xhat;
      out.values[off + j] = tg.values[j] * xhat + ts.values[j];
    }
  }
  Ref r = push(std::move(out), {x, gain, shift});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [x, gain, shift, m, n, normalized, inv_std](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      const auto& gv = t.value(gain).values;
      if (t.wants_grad(gain)) {
        auto& gg = t.grad_buffer(gain);
        for (int i = 0; i < m; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) gg[j] += g[off + j] * (*normalized)[off + j];
        }
      }
      if (t.wants_grad(shift)) {
        auto& gs = t.grad_buffer(shift);
        for (int i = 0; i < m; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * n;
          for (int j = 0; j < n; ++j) gs[j] += g[off + j];
        }
      }
      if (t.wants_grad(x)) {
        auto& gx = t.grad_buffer(x);
        for (int i = 0; i < m; ++i) {
          const std::size_t off = static_cast<std::size_t>(i) * n;
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int j = 0; j < n; ++j) {
            const double dxhat = g[off + j] * gv[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * (*normalized)[off + j];
          }
          mean_dxhat /= n;
          mean_dxhat_xhat /= n;
          const double inv = (*inv_std)[i];
          for (int j = 0; j < n; ++j) {
            const double dxhat = g[off + j] * gv[j];
            gx[off + j] +=
                inv * (dxhat - mean_dxhat - (*normalized)[off + j] * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return r;
}

Tape::Ref Tape::gelu(Ref x) {
  const Tensor& tx = value(x);
  Tensor out = tx;
  out.requires_grad = false;
  out.grad.clear();
  for (double& v : out.values) {
    const double u = kGeluScale * (v + kGeluCoeff * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  Ref r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [x](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      const auto& xv = t.value(x).values;
      auto& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double u = kGeluScale * (v + kGeluCoeff * v * v * v);
        const double th = std::tanh(u);
        const double du = kGeluScale * (1.0 + 3.0 * kGeluCoeff * v * v);
        gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
      }
    };
  }
  return r;
}

Tape::Ref Tape::embed(Ref table, std::vector<int> ids) {
  const Tensor& tt = input2d(table, "embed");
  const int vocab = tt.rows(), d = tt.cols();
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw ConfigError("embed: token id " + std::to_string(id) +
                        " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  const int m = static_cast<int>(ids.size());
  if (m == 0) throw DimensionError("embed: empty id list");
  Tensor out = Tensor::zeros({m, d});
  for (int i = 0; i < m; ++i) {
    const double* src = tt.values.data() + static_cast<std::size_t>(ids[i]) * d;
    std::copy(src, src + d, out.values.data() + static_cast<std::size_t>(i) * d);
  }
  Ref r = push(std::move(out), {table});
  if (nodes_[r].needs_grad) {
    auto ids_ptr = std::make_shared<std::vector<int>>(std::move(ids));
    nodes_[r].backprop = [table, d, ids_ptr](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      auto& gt = t.grad_buffer(table);
      for (std::size_t i = 0; i < ids_ptr->size(); ++i) {
        double* dst = gt.data() + static_cast<std::size_t>((*ids_ptr)[i]) * d;
        const double* src = g.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return r;
}

Tape::Ref Tape::gather_rows(Ref x, std::vector<int> rows) {
  const Tensor& tx = input2d(x, "gather_rows");
  const int m = tx.rows(), d = tx.cols();
  for (int i : rows) {
    if (i < 0 || i >= m) throw DimensionError("gather_rows: row index out of range");
  }
  const int k = static_cast<int>(rows.size());
  if (k == 0) throw DimensionError("gather_rows: empty row list");
  Tensor out = Tensor::zeros({k, d});
  for (int i = 0; i < k; ++i) {
    const double* src = tx.values.data() + static_cast<std::size_t>(rows[i]) * d;
    std::copy(src, src + d, out.values.data() + static_cast<std::size_t>(i) * d);
  }
  Ref r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    auto rows_ptr = std::make_shared<std::vector<int>>(std::move(rows));
    nodes_[r].backprop = [x, d, rows_ptr](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      auto& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < rows_ptr->size(); ++i) {
        double* dst = gx.data() + static_cast<std::size_t>((*rows_ptr)[i]) * d;
        const double* src = g.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return r;
}

Tape::Ref Tape::slice(Ref x, int r0, int nr, int c0, int nc) {
  const Tensor& tx = input2d(x, "slice");
  const int m = tx.rows(), n = tx.cols();
  if (r0 < 0 || nr <= 0 || r0 + nr > m || c0 < 0 || nc <= 0 || c0 + nc > n) {
    throw DimensionError("slice block out of range for " + tx.shape_str());
  }
  Tensor out = Tensor::zeros({nr, nc});
  for (int i = 0; i < nr; ++i) {
    const double* src = tx.values.data() + static_cast<std::size_t>(r0 + i) * n + c0;
    std::copy(src, src + nc, out.values.data() + static_cast<std::size_t>(i) * nc);
  }
  Ref r = push(std::move(out), {x});
  if (nodes_[r].needs_grad) {
    nodes_[r].backprop = [x, r0, nr, c0, nc, n](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      auto& gx = t.grad_buffer(x);
      for (int i = 0; i < nr; ++i) {
        double* dst = gx.data() + static_cast<std::size_t>(r0 + i) * n + c0;
        const double* src = g.data() + static_cast<std::size_t>(i) * nc;
        for (int j = 0; j < nc; ++j) dst[j] += src[j];
      }
    };
  }
  return r;
}

Tape::Ref Tape::assemble_blocks(const std::vector<Ref>& blocks, int grid_rows,
                                int grid_cols) {
  if (grid_rows <= 0 || grid_cols <= 0 ||
      static_cast<int>(blocks.size()) != grid_rows * grid_cols) {
    throw DimensionError("assemble_blocks: block count does not match grid");
  }
  const Tensor& first = input2d(blocks[0], "assemble_blocks");
  const int br = first.rows(), bc = first.cols();
  for (Ref b : blocks) {
    const Tensor& tb = input2d(b, "assemble_blocks");
    if (tb.rows() != br || tb.cols() != bc) {
      throw DimensionError("assemble_blocks: blocks have unequal shapes");
    }
  }
  const int m = grid_rows * br, n = grid_cols * bc;
  Tensor out = Tensor::zeros({m, n});
  for (int gr = 0; gr < grid_rows; ++gr) {
    for (int gc = 0; gc < grid_cols; ++gc) {
      const Tensor& tb = value(blocks[gr * grid_cols + gc]);
      for (int i = 0; i < br; ++i) {
        const double* src = tb.values.data() + static_cast<std::size_t>(i) * bc;
        double* dst =
            out.values.data() + static_cast<std::size_t>(gr * br + i) * n + gc * bc;
        std::copy(src, src + bc, dst);
      }
    }
  }
  Ref r = push(std::move(out), blocks);
  if (nodes_[r].needs_grad) {
    auto blocks_ptr = std::make_shared<std::vector<Ref>>(blocks);
    nodes_[r].backprop = [blocks_ptr, grid_rows, grid_cols, br, bc, n](Tape& t, Ref self) {
      const auto& g = t.grad_at(self);
      for (int gr = 0; gr < grid_rows; ++gr) {
        for (int gc = 0; gc < grid_cols; ++gc) {
          const Ref b = (*blocks_ptr)[gr * grid_cols + gc];
          if (!t.wants_grad(b)) continue;
          auto& gb = t.grad_buffer(b);
          for (int i = 0; i < br; ++i) {
            const double* src =
                g.data() + static_cast<std::size_t>(gr * br + i) * n + gc * bc;
            double* dst = gb.data() + static_cast<std::size_t>(i) * bc;
            for (int j = 0; j < bc; ++j) dst[j] += src[j];
          }
        }
      }
    };
  }
  return r;
}

void Tape::backward(Ref loss) {
  check_ref(loss);
  if (backward_done_) throw Error("backward already ran on this tape");
  backward_done_ = true;
  if (value(loss).numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got " +
                         value(loss).shape_str());
  }
  if (nodes_[loss].needs_grad) {
    grad_buffer(loss)[0] = 1.0;
    for (Ref r = loss; r >= 0; --r) {
      Node& n = nodes_[r];
      if (!n.grad.empty() && n.backprop) n.backprop(*this, r);
    }
  }
  // Populate grads on watched tensors; off-path tensors get zeros.
  for (Node& n : nodes_) {
    if (n.bound == nullptr || !n.bound->requires_grad) continue;
    if (n.grad.empty()) {
      n.bound->grad.assign(n.bound->numel(), 0.0);
    } else {
      n.bound->grad = n.grad;
    }
  }
}

}  // namespace sdbert
