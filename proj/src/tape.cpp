#include "structmark/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "structmark/common.hpp"

namespace structmark::net {

namespace {
inline void check_2d_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}
}  // namespace

Tensor rbf_feature_values(const Tensor& coords, const FeaturePlan& plan) {
  const int n = coords.rows();
  if (coords.cols() != 3)
    throw std::invalid_argument("rbf_features: coords must be [n x 3]");
  Tensor out({n, plan.feature_dim()});
  const int block = plan.n_rbf + 1;
  const double inv2w2 = 1.0 / (2.0 * plan.rbf_width * plan.rbf_width);
  for (int i = 0; i < n; ++i) {
    int slot = 0;
    for (int off = -plan.k_half; off <= plan.k_half; ++off) {
      if (off == 0) continue;
      const int j = i + off;
      double* f = &out.data[static_cast<size_t>(i) * plan.feature_dim() +
                            static_cast<size_t>(slot) * block];
      if (j >= 0 && j < n) {
        const double dx = coords.at(i, 0) - coords.at(j, 0);
        const double dy = coords.at(i, 1) - coords.at(j, 1);
        const double dz = coords.at(i, 2) - coords.at(j, 2);
        const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
        for (int c = 0; c < plan.n_rbf; ++c) {
          const double u = d - plan.center(c);
          f[c] = std::exp(-u * u * inv2w2);
        }
        f[plan.n_rbf] = 1.0;
      }
      ++slot;
    }
  }
  return out;
}

Tape::Id Tape::push(Tensor value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
#ifndef NDEBUG
  n.value.check_finite("tape node");
#endif
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tensor& Tape::grad_buf(Id id) {
  Node& n = nodes_[id];
  if (!n.grad_live) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_live = true;
  }
  return n.grad;
}

Tape::Id Tape::constant(Tensor v) { return push(std::move(v), false); }

Tape::Id Tape::param(Parameter* p) {
  const Id id = push(p->value, true);
  nodes_[id].bound = p;
  return id;
}

Tape::Id Tape::input(Tensor v) { return push(std::move(v), true); }

Tape::Id Tape::linear(Id x, Id w, Id b) {
  const Tensor& xv = nodes_[x].value;
  const Tensor& wv = nodes_[w].value;
  const Tensor& bv = nodes_[b].value;
  const int n = xv.rows(), in = xv.cols(), out = wv.rows();
  if (wv.cols() != in)
    throw std::invalid_argument("linear: weight/input mismatch " + wv.shape_str() +
                                " vs " + xv.shape_str());
  if (static_cast<int>(bv.data.size()) != out)
    throw std::invalid_argument("linear: bias size mismatch");

  Tensor y({n, out});
  matmul_into(xv, false, wv, true, y, false);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out; ++j) y.at(i, j) += bv.data[j];

  const bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, x, w, b] {
    const Tensor& g = nodes_[id].grad;
    if (nodes_[x].needs_grad)
      matmul_into(g, false, nodes_[w].value, false, grad_buf(x), true);
    if (nodes_[w].needs_grad)
      matmul_into(g, true, nodes_[x].value, false, grad_buf(w), true);
    if (nodes_[b].needs_grad) {
      Tensor& gb = grad_buf(b);
      const int n = g.rows(), out = g.cols();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out; ++j) gb.data[j] += g.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::matmul(Id a, Id b, bool trans_b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  const int m = av.rows();
  const int n = trans_b ? bv.rows() : bv.cols();
  Tensor y({m, n});
  matmul_into(av, false, bv, trans_b, y, false);
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, b, trans_b] {
    const Tensor& g = nodes_[id].grad;
    if (nodes_[a].needs_grad)
      matmul_into(g, false, nodes_[b].value, !trans_b, grad_buf(a), true);
    if (nodes_[b].needs_grad) {
      if (trans_b)
        matmul_into(g, true, nodes_[a].value, false, grad_buf(b), true);
      else
        matmul_into(nodes_[a].value, true, g, false, grad_buf(b), true);
    }
  };
  return id;
}

Tape::Id Tape::matvec(Id w, Id v) {
  const Tensor& wv = nodes_[w].value;
  const Tensor& vv = nodes_[v].value;
  const int n = wv.rows(), m = wv.cols();
  if (static_cast<int>(vv.data.size()) != m)
    throw std::invalid_argument("matvec: size mismatch");
  Tensor y({n});
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < m; ++j) s += wv.at(i, j) * vv.data[j];
    y.data[i] = s;
  }
  const bool ng = nodes_[w].needs_grad || nodes_[v].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, w, v] {
    const Tensor& g = nodes_[id].grad;
    const Tensor& wv = nodes_[w].value;
    const Tensor& vv = nodes_[v].value;
    const int n = wv.rows(), m = wv.cols();
    if (nodes_[w].needs_grad) {
      Tensor& gw = grad_buf(w);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gw.at(i, j) += g.data[i] * vv.data[j];
    }
    if (nodes_[v].needs_grad) {
      Tensor& gv = grad_buf(v);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) gv.data[j] += g.data[i] * wv.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::add(Id a, Id b) { return add_scaled(a, b, 1.0); }

Tape::Id Tape::sub(Id a, Id b) { return add_scaled(a, b, -1.0); }

Tape::Id Tape::add_scaled(Id a, Id b, double s) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  check_2d_same(av, bv, "add");
  Tensor y = av;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += s * bv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, b, s] {
    const Tensor& g = nodes_[id].grad;
    if (nodes_[a].needs_grad) add_into(grad_buf(a), g);
    if (nodes_[b].needs_grad) {
      Tensor& gb = grad_buf(b);
      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += s * g.data[i];
    }
  };
  return id;
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  check_2d_same(av, bv, "mul");
  Tensor y = av;
  for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= bv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, b] {
    const Tensor& g = nodes_[id].grad;
    if (nodes_[a].needs_grad) {
      Tensor& ga = grad_buf(a);
      const Tensor& bv = nodes_[b].value;
      for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
    }
    if (nodes_[b].needs_grad) {
      Tensor& gb = grad_buf(b);
      const Tensor& av = nodes_[a].value;
      for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
    }
  };
  return id;
}

Tape::Id Tape::scale(Id a, double s) {
  Tensor y = nodes_[a].value;
  for (double& v : y.data) v *= s;
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, s] {
    const Tensor& g = nodes_[id].grad;
    Tensor& ga = grad_buf(a);
    for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += s * g.data[i];
  };
  return id;
}

Tape::Id Tape::row_broadcast_add(Id a, Id v) {
  const Tensor& av = nodes_[a].value;
  const Tensor& vv = nodes_[v].value;
  const int n = av.rows(), d = av.cols();
  if (static_cast<int>(vv.data.size()) != d)
    throw std::invalid_argument("row_broadcast_add: size mismatch");
  Tensor y = av;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) y.at(i, j) += vv.data[j];
  const bool ng = nodes_[a].needs_grad || nodes_[v].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, v] {
    const Tensor& g = nodes_[id].grad;
    if (nodes_[a].needs_grad) add_into(grad_buf(a), g);
    if (nodes_[v].needs_grad) {
      Tensor& gv = grad_buf(v);
      const int n = g.rows(), d = g.cols();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gv.data[j] += g.at(i, j);
    }
  };
  return id;
}

Tape::Id Tape::row_scale(Id a, Id g) {
  const Tensor& av = nodes_[a].value;
  const Tensor& gv = nodes_[g].value;
  const int n = av.rows(), d = av.cols();
  if (static_cast<int>(gv.data.size()) != n)
    throw std::invalid_argument("row_scale: gate size mismatch");
  Tensor y = av;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) y.at(i, j) *= gv.data[i];
  const bool ng = nodes_[a].needs_grad || nodes_[g].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, g] {
    const Tensor& gy = nodes_[id].grad;
    const Tensor& av = nodes_[a].value;
    const Tensor& gv = nodes_[g].value;
    const int n = av.rows(), d = av.cols();
    if (nodes_[a].needs_grad) {
      Tensor& ga = grad_buf(a);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) ga.at(i, j) += gy.at(i, j) * gv.data[i];
    }
    if (nodes_[g].needs_grad) {
      Tensor& gg = grad_buf(g);
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += gy.at(i, j) * av.at(i, j);
        gg.data[i] += s;
      }
    }
  };
  return id;
}

Tape::Id Tape::tanh_(Id a) {
  Tensor y = nodes_[a].value;
  for (double& v : y.data) v = std::tanh(v);
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a] {
    const Tensor& g = nodes_[id].grad;
    const Tensor& y = nodes_[id].value;
    Tensor& ga = grad_buf(a);
    for (size_t i = 0; i < ga.data.size(); ++i)
      ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  };
  return id;
}

Tape::Id Tape::softmax_rows(Id a) {
  Tensor y = nodes_[a].value;
  const int n = y.rows(), d = y.cols();
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < d; ++j) mx = std::max(mx, y.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      y.at(i, j) = std::exp(y.at(i, j) - mx);
      sum += y.at(i, j);
    }
    for (int j = 0; j < d; ++j) y.at(i, j) /= sum;
  }
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a] {
    const Tensor& g = nodes_[id].grad;
    const Tensor& y = nodes_[id].value;
    Tensor& ga = grad_buf(a);
    const int n = y.rows(), d = y.cols();
    for (int i = 0; i < n; ++i) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += g.at(i, j) * y.at(i, j);
      for (int j = 0; j < d; ++j)
        ga.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  };
  return id;
}

Tape::Id Tape::col_slice(Id a, int off, int len) {
  const Tensor& av = nodes_[a].value;
  const int n = av.rows(), d = av.cols();
  if (off < 0 || off + len > d) throw std::invalid_argument("col_slice: out of range");
  Tensor y({n, len});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < len; ++j) y.at(i, j) = av.at(i, off + j);
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, off, len] {
    const Tensor& g = nodes_[id].grad;
    Tensor& ga = grad_buf(a);
    const int n = g.rows();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < len; ++j) ga.at(i, off + j) += g.at(i, j);
  };
  return id;
}

Tape::Id Tape::row_slice(Id a, int off, int len) {
  const Tensor& av = nodes_[a].value;
  const int n = av.rows(), d = av.cols();
  if (off < 0 || off + len > n) throw std::invalid_argument("row_slice: out of range");
  Tensor y({len, d});
  for (int i = 0; i < len; ++i)
    for (int j = 0; j < d; ++j) y.at(i, j) = av.at(off + i, j);
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, off, len] {
    const Tensor& g = nodes_[id].grad;
    Tensor& ga = grad_buf(a);
    const int d = g.cols();
    for (int i = 0; i < len; ++i)
      for (int j = 0; j < d; ++j) ga.at(off + i, j) += g.at(i, j);
  };
  return id;
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int n = nodes_[parts[0]].value.rows();
  int d = 0;
  bool ng = false;
  for (Id p : parts) {
    if (nodes_[p].value.rows() != n)
      throw std::invalid_argument("concat_cols: row mismatch");
    d += nodes_[p].value.cols();
    ng = ng || nodes_[p].needs_grad;
  }
  Tensor y({n, d});
  int off = 0;
  for (Id p : parts) {
    const Tensor& pv = nodes_[p].value;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < pv.cols(); ++j) y.at(i, off + j) = pv.at(i, j);
    off += pv.cols();
  }
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  std::vector<Id> ps = parts;
  nodes_[id].back = [this, id, ps] {
    const Tensor& g = nodes_[id].grad;
    const int n = g.rows();
    int off = 0;
    for (Id p : ps) {
      const int pc = nodes_[p].value.cols();
      if (nodes_[p].needs_grad) {
        Tensor& gp = grad_buf(p);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < pc; ++j) gp.at(i, j) += g.at(i, off + j);
      }
      off += pc;
    }
  };
  return id;
}

Tape::Id Tape::mean_rows(Id a) {
  const Tensor& av = nodes_[a].value;
  const int n = av.rows(), d = av.cols();
  Tensor y({1, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) y.at(0, j) += av.at(i, j);
  for (int j = 0; j < d; ++j) y.at(0, j) /= n;
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, n] {
    const Tensor& g = nodes_[id].grad;
    Tensor& ga = grad_buf(a);
    const int d = g.cols();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) ga.at(i, j) += g.at(0, j) / n;
  };
  return id;
}

Tape::Id Tape::pair_bias(Id table, int head, int n, int clip) {
  const Tensor& tv = nodes_[table].value;
  const int nb = tv.cols();
  if (nb != 2 * clip + 1) throw std::invalid_argument("pair_bias: table size mismatch");
  Tensor y({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int b = std::clamp(j - i, -clip, clip) + clip;
      y.at(i, j) = tv.at(head, b);
    }
  const bool ng = nodes_[table].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, table, head, n, clip] {
    const Tensor& g = nodes_[id].grad;
    Tensor& gt = grad_buf(table);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const int b = std::clamp(j - i, -clip, clip) + clip;
        gt.at(head, b) += g.at(i, j);
      }
  };
  return id;
}

Tape::Id Tape::rbf_features(Id coords, const FeaturePlan& plan) {
  const Tensor& cv = nodes_[coords].value;
  Tensor y = rbf_feature_values(cv, plan);
  const bool ng = nodes_[coords].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, coords, plan] {
    const Tensor& g = nodes_[id].grad;
    const Tensor& cv = nodes_[coords].value;
    Tensor& gc = grad_buf(coords);
    const int n = cv.rows();
    const int block = plan.n_rbf + 1;
    const double inv2w2 = 1.0 / (2.0 * plan.rbf_width * plan.rbf_width);
    const double invw2 = 1.0 / (plan.rbf_width * plan.rbf_width);
    for (int i = 0; i < n; ++i) {
      int slot = 0;
      for (int off = -plan.k_half; off <= plan.k_half; ++off) {
        if (off == 0) continue;
        const int j = i + off;
        if (j >= 0 && j < n) {
          const double dx = cv.at(i, 0) - cv.at(j, 0);
          const double dy = cv.at(i, 1) - cv.at(j, 1);
          const double dz = cv.at(i, 2) - cv.at(j, 2);
          const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
          if (d > 1e-9) {
            double dd = 0.0;  // dL/dd
            const double* gf = &g.data[static_cast<size_t>(i) * plan.feature_dim() +
                                       static_cast<size_t>(slot) * block];
            for (int c = 0; c < plan.n_rbf; ++c) {
              const double u = d - plan.center(c);
              const double f = std::exp(-u * u * inv2w2);
              dd += gf[c] * f * (-u * invw2);
            }
            const double sx = dd * dx / d, sy = dd * dy / d, sz = dd * dz / d;
            gc.at(i, 0) += sx;
            gc.at(i, 1) += sy;
            gc.at(i, 2) += sz;
            gc.at(j, 0) -= sx;
            gc.at(j, 1) -= sy;
            gc.at(j, 2) -= sz;
          }
        }
        ++slot;
      }
    }
  };
  return id;
}

Tape::Id Tape::frame_apply(Id raw, const std::vector<geom::Mat3>& frames) {
  const Tensor& rv = nodes_[raw].value;
  const int n = rv.rows();
  if (rv.cols() != 3 || static_cast<int>(frames.size()) != n)
    throw std::invalid_argument("frame_apply: shape mismatch");
  Tensor y({n, 3});
  for (int i = 0; i < n; ++i) {
    const geom::Vec3 v{rv.at(i, 0), rv.at(i, 1), rv.at(i, 2)};
    const geom::Vec3 o = frames[i] * v;
    y.at(i, 0) = o.x;
    y.at(i, 1) = o.y;
    y.at(i, 2) = o.z;
  }
  const bool ng = nodes_[raw].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, raw, frames] {
    const Tensor& g = nodes_[id].grad;
    Tensor& gr = grad_buf(raw);
    const int n = g.rows();
    for (int i = 0; i < n; ++i) {
      const geom::Vec3 go{g.at(i, 0), g.at(i, 1), g.at(i, 2)};
      const geom::Vec3 gi = frames[i].transposed() * go;
      gr.at(i, 0) += gi.x;
      gr.at(i, 1) += gi.y;
      gr.at(i, 2) += gi.z;
    }
  };
  return id;
}

Tape::Id Tape::rigid_apply(Id x, const geom::Mat3& rot, const geom::Vec3& trans) {
  const Tensor& xv = nodes_[x].value;
  const int n = xv.rows();
  if (xv.cols() != 3) throw std::invalid_argument("rigid_apply: coords must be [n x 3]");
  Tensor y({n, 3});
  for (int i = 0; i < n; ++i) {
    const geom::Vec3 v{xv.at(i, 0), xv.at(i, 1), xv.at(i, 2)};
    const geom::Vec3 o = rot * v + trans;
    y.at(i, 0) = o.x;
    y.at(i, 1) = o.y;
    y.at(i, 2) = o.z;
  }
  const bool ng = nodes_[x].needs_grad;
  const Id id = push(std::move(y), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, x, rot] {
    const Tensor& g = nodes_[id].grad;
    Tensor& gx = grad_buf(x);
    const int n = g.rows();
    for (int i = 0; i < n; ++i) {
      const geom::Vec3 go{g.at(i, 0), g.at(i, 1), g.at(i, 2)};
      const geom::Vec3 gi = rot.transposed() * go;
      gx.at(i, 0) += gi.x;
      gx.at(i, 1) += gi.y;
      gx.at(i, 2) += gi.z;
    }
  };
  return id;
}

Tape::Id Tape::bce_with_logits(Id logits, const Tensor& targets) {
  const Tensor& zv = nodes_[logits].value;
  const int l = static_cast<int>(zv.data.size());
  if (static_cast<int>(targets.data.size()) != l)
    throw std::invalid_argument("bce_with_logits: target size mismatch");
  double loss = 0.0;
  for (int i = 0; i < l; ++i) {
    const double z = zv.data[i];
    const double y = targets.data[i];
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= l;
  const bool ng = nodes_[logits].needs_grad;
  const Id id = push(Tensor::scalar(loss), ng);
  if (!ng) return id;
  Tensor t = targets;
  nodes_[id].back = [this, id, logits, t, l] {
    const double g = nodes_[id].grad.data[0];
    Tensor& gz = grad_buf(logits);
    const Tensor& zv = nodes_[logits].value;
    for (int i = 0; i < l; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-zv.data[i]));
      gz.data[i] += g * (sig - t.data[i]) / l;
    }
  };
  return id;
}

Tape::Id Tape::mse_rows(Id a, Id b) {
  const Tensor& av = nodes_[a].value;
  const Tensor& bv = nodes_[b].value;
  check_2d_same(av, bv, "mse_rows");
  const int n = av.rows();
  double loss = 0.0;
  for (size_t i = 0; i < av.data.size(); ++i) {
    const double d = av.data[i] - bv.data[i];
    loss += d * d;
  }
  loss /= n;
  const bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
  const Id id = push(Tensor::scalar(loss), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, b, n] {
    const double g = nodes_[id].grad.data[0];
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    const double c = 2.0 * g / n;
    if (nodes_[a].needs_grad) {
      Tensor& ga = grad_buf(a);
      for (size_t i = 0; i < av.data.size(); ++i)
        ga.data[i] += c * (av.data[i] - bv.data[i]);
    }
    if (nodes_[b].needs_grad) {
      Tensor& gb = grad_buf(b);
      for (size_t i = 0; i < av.data.size(); ++i)
        gb.data[i] -= c * (av.data[i] - bv.data[i]);
    }
  };
  return id;
}

Tape::Id Tape::mean_row_norm(Id a) {
  const Tensor& av = nodes_[a].value;
  const int n = av.rows(), d = av.cols();
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += av.at(i, j) * av.at(i, j);
    loss += std::sqrt(s);
  }
  loss /= n;
  const bool ng = nodes_[a].needs_grad;
  const Id id = push(Tensor::scalar(loss), ng);
  if (!ng) return id;
  nodes_[id].back = [this, id, a, n, d] {
    const double g = nodes_[id].grad.data[0];
    const Tensor& av = nodes_[a].value;
    Tensor& ga = grad_buf(a);
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += av.at(i, j) * av.at(i, j);
      const double nrm = std::sqrt(s);
      if (nrm > 1e-30) {
        const double c = g / (n * nrm);
        for (int j = 0; j < d; ++j) ga.at(i, j) += c * av.at(i, j);
      }
    }
  };
  return id;
}

Tape::Id Tape::weighted_sum(const std::vector<std::pair<Id, double>>& terms) {
  double total = 0.0;
  bool ng = false;
  for (const auto& [tid, w] : terms) {
    if (nodes_[tid].value.data.size() != 1)
      throw std::invalid_argument("weighted_sum: terms must be scalar");
    total += w * nodes_[tid].value.data[0];
    ng = ng || nodes_[tid].needs_grad;
  }
  const Id id = push(Tensor::scalar(total), ng);
  if (!ng) return id;
  auto ts = terms;
  nodes_[id].back = [this, id, ts] {
    const double g = nodes_[id].grad.data[0];
    for (const auto& [tid, w] : ts) {
      if (nodes_[tid].needs_grad) grad_buf(tid).data[0] += g * w;
    }
  };
  return id;
}

void Tape::backward(Id root) {
  if (nodes_[root].value.data.size() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  grad_buf(root).data[0] = 1.0;
  for (Id id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad_live && n.back) n.back();
  }
  for (auto& n : nodes_) {
    if (n.bound && n.grad_live) add_into(n.bound->grad, n.grad);
  }
}

Tensor Tape::input_grad(Id id) const {
  const Node& n = nodes_[id];
  if (n.grad_live) return n.grad;
  return Tensor::zeros(n.value.shape);
}

Tensor sinusoidal_embedding(int t, int dim) {
  Tensor e({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    e.at(0, 2 * i) = std::sin(t * freq);
    e.at(0, 2 * i + 1) = std::cos(t * freq);
  }
  return e;
}

}  // namespace structmark::net
