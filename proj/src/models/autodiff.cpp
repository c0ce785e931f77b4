#include "trackbench/models/autodiff.hpp"

#include "trackbench/core/error.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace trackbench::models::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<RowMatrix const>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<Eigen::VectorXd const>;

ConstMatMap as_matrix(Tensor const & t, int rows, int cols) { return {t.data(), rows, cols}; }
MatMap as_matrix(Tensor & t, int rows, int cols) { return {t.data(), rows, cols}; }

void require_rank(Tensor const & t, std::size_t rank, char const * op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + t.shape_string());
    }
}

} // namespace

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(std::string const & name) {
    if (params_ == nullptr) throw StateError("graph has no parameter store");
    nodes_.push_back(Node{params_->at(name).value, {}, {}, name, true});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor & Graph::grad(Var v) {
    Node & n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) {
        n.grad = Tensor(n.value.shape());
    }
    return n.grad;
}

Var Graph::record(Tensor value, std::vector<Var> const & inputs, Backward backward) {
    bool needs = false;
    for (Var in : inputs) {
        if (in.id >= 0) needs = needs || nodes_.at(static_cast<std::size_t>(in.id)).requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, {}, needs});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Graph::backward(Var loss) {
    if (consumed_) throw StateError("backward called twice on the same recorded forward pass");
    if (loss.id < 0 || static_cast<std::size_t>(loss.id) >= nodes_.size()) throw StateError("no recorded graph for loss");
    if (value(loss).size() != 1) throw ShapeError("backward expects a scalar loss, got " + value(loss).shape_string());
    consumed_ = true;
    grad(loss)[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node & n = nodes_[static_cast<std::size_t>(id)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) {
            n.backward(*this, Var{id});
        } else if (!n.param_name.empty()) {
            auto & dst = params_->at(n.param_name).grad;
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad[i];
        }
    }
}

// ---------------------------------------------------------------------------

Var conv2d(Graph & g, Var input, Var weight, Var bias, int stride, int padding) {
    Tensor const & x = g.value(input);
    Tensor const & w = g.value(weight);
    require_rank(x, 3, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    int const c_in = x.dim(0), h = x.dim(1), wd = x.dim(2);
    int const c_out = w.dim(0), k = w.dim(2);
    if (w.dim(1) != c_in || w.dim(3) != k) {
        throw ShapeError("conv2d: weight " + w.shape_string() + " incompatible with input " + x.shape_string());
    }
    if (g.value(bias).size() != static_cast<std::size_t>(c_out)) throw ShapeError("conv2d: bias size mismatch");
    int const ho = (h + 2 * padding - k) / stride + 1;
    int const wo = (wd + 2 * padding - k) / stride + 1;
    int const kk = c_in * k * k;
    int const n = ho * wo;

    // im2col: row (c, ky, kx), column (oy, ox)
    auto cols = std::make_shared<Tensor>(std::vector<int>{kk, n});
    for (int c = 0; c < c_in; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double * row = cols->data() + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
                for (int oy = 0; oy < ho; ++oy) {
                    int const iy = oy * stride - padding + ky;
                    for (int ox = 0; ox < wo; ++ox) {
                        int const ix = ox * stride - padding + kx;
                        row[oy * wo + ox] =
                            (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? x.at(c, iy, ix) : 0.0;
                    }
                }
            }
        }
    }
    Tensor out({c_out, ho, wo});
    {
        auto o = as_matrix(out, c_out, n);
        o.noalias() = as_matrix(w, c_out, kk) * as_matrix(*cols, kk, n);
        ConstVecMap b(g.value(bias).data(), c_out);
        o.colwise() += b;
    }
    return g.record(std::move(out), {input, weight, bias},
                      [=](Graph & gr, Var result) {
                          Tensor const & dout = gr.grad(result);
                          auto const d = as_matrix(dout, c_out, n);
                          if (gr.requires_grad(weight)) {
                              as_matrix(gr.grad(weight), c_out, kk).noalias() += d * as_matrix(*cols, kk, n).transpose();
                          }
                          if (gr.requires_grad(bias)) {
                              VecMap(gr.grad(bias).data(), c_out) += d.rowwise().sum();
                          }
                          if (gr.requires_grad(input)) {
                              RowMatrix dcols = as_matrix(gr.value(weight), c_out, kk).transpose() * d;
                              Tensor & dx = gr.grad(input);
                              for (int c = 0; c < c_in; ++c) {
                                  for (int ky = 0; ky < k; ++ky) {
                                      for (int kx = 0; kx < k; ++kx) {
                                          double const * row = dcols.data() + static_cast<std::size_t>((c * k + ky) * k + kx) * n;
                                          for (int oy = 0; oy < ho; ++oy) {
                                              int const iy = oy * stride - padding + ky;
                                              if (iy < 0 || iy >= h) continue;
                                              for (int ox = 0; ox < wo; ++ox) {
                                                  int const ix = ox * stride - padding + kx;
                                                  if (ix >= 0 && ix < wd) dx.at(c, iy, ix) += row[oy * wo + ox];
                                              }
                                          }
                                      }
                                  }
                              }
                          }
                      });
}

Var conv1x1(Graph & g, Var input, Var weight, Var bias) {
    Tensor const & x = g.value(input);
    Tensor const & w = g.value(weight);
    require_rank(x, 3, "conv1x1 input");
    require_rank(w, 2, "conv1x1 weight");
    int const c_in = x.dim(0), h = x.dim(1), wd = x.dim(2), c_out = w.dim(0);
    if (w.dim(1) != c_in) throw ShapeError("conv1x1: weight " + w.shape_string() + " vs input " + x.shape_string());
    int const n = h * wd;
    Tensor out({c_out, h, wd});
    auto o = as_matrix(out, c_out, n);
    o.noalias() = as_matrix(w, c_out, c_in) * as_matrix(x, c_in, n);
    bool const has_bias = bias.id >= 0;
    if (has_bias) o.colwise() += ConstVecMap(g.value(bias).data(), c_out);
    std::vector<Var> inputs{input, weight};
    if (has_bias) inputs.push_back(bias);
    return g.record(std::move(out), inputs, [=](Graph & gr, Var result) {
        auto const d = as_matrix(gr.grad(result), c_out, n);
        if (gr.requires_grad(weight))
            as_matrix(gr.grad(weight), c_out, c_in).noalias() += d * as_matrix(gr.value(input), c_in, n).transpose();
        if (has_bias && gr.requires_grad(bias)) VecMap(gr.grad(bias).data(), c_out) += d.rowwise().sum();
        if (gr.requires_grad(input))
            as_matrix(gr.grad(input), c_in, n).noalias() += as_matrix(gr.value(weight), c_out, c_in).transpose() * d;
    });
}

Var linear(Graph & g, Var x, Var weight, Var bias) {
    Tensor const & xv = g.value(x);
    Tensor const & w = g.value(weight);
    require_rank(xv, 2, "linear input");
    require_rank(w, 2, "linear weight");
    int const rows = xv.dim(0), in = xv.dim(1), out_dim = w.dim(0);
    if (w.dim(1) != in) throw ShapeError("linear: weight " + w.shape_string() + " vs input " + xv.shape_string());
    bool const has_bias = bias.id >= 0;
    Tensor out({rows, out_dim});
    auto o = as_matrix(out, rows, out_dim);
    o.noalias() = as_matrix(xv, rows, in) * as_matrix(w, out_dim, in).transpose();
    if (has_bias) o.rowwise() += ConstVecMap(g.value(bias).data(), out_dim).transpose();
    std::vector<Var> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    return g.record(std::move(out), inputs, [=](Graph & gr, Var result) {
        auto const d = as_matrix(gr.grad(result), rows, out_dim);
        if (gr.requires_grad(weight))
            as_matrix(gr.grad(weight), out_dim, in).noalias() += d.transpose() * as_matrix(gr.value(x), rows, in);
        if (has_bias && gr.requires_grad(bias)) VecMap(gr.grad(bias).data(), out_dim) += d.colwise().sum().transpose();
        if (gr.requires_grad(x))
            as_matrix(gr.grad(x), rows, in).noalias() += d * as_matrix(gr.value(weight), out_dim, in);
    });
}

namespace {

/// Elementwise unary op given f(x) and f'(x) expressed through (x, y).
template <typename F, typename DF>
Var unary(Graph & g, Var x, F f, DF df) {
    Tensor const & xv = g.value(x);
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return g.record(std::move(out), {x}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        Tensor const & xin = gr.value(x);
        Tensor const & y = gr.value(result);
        Tensor & dx = gr.grad(x);
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += d[i] * df(xin[i], y[i]);
    });
}

void require_same_shape(Tensor const & a, Tensor const & b, char const * op) {
    if (a.shape() != b.shape()) throw ShapeError(std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
}

} // namespace

Var relu(Graph & g, Var x) {
    return unary(g, x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Graph & g, Var x) {
    return unary(g, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Graph & g, Var x) {
    return unary(g, x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var add(Graph & g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "add");
    Tensor out = g.value(a);
    Tensor const & bv = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return g.record(std::move(out), {a, b}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        for (Var v : {a, b}) {
            if (!gr.requires_grad(v)) continue;
            Tensor & dv = gr.grad(v);
            for (std::size_t i = 0; i < d.size(); ++i) dv[i] += d[i];
        }
    });
}

Var mul(Graph & g, Var a, Var b) {
    require_same_shape(g.value(a), g.value(b), "mul");
    Tensor out = g.value(a);
    Tensor const & bv = g.value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return g.record(std::move(out), {a, b}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        if (gr.requires_grad(a)) {
            Tensor & da = gr.grad(a);
            Tensor const & bval = gr.value(b);
            for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * bval[i];
        }
        if (gr.requires_grad(b)) {
            Tensor & db = gr.grad(b);
            Tensor const & aval = gr.value(a);
            for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * aval[i];
        }
    });
}

Var sum(Graph & g, Var x) {
    double s = 0.0;
    for (double v : g.value(x).values()) s += v;
    return g.record(Tensor({1}, std::vector<double>{s}), {x}, [=](Graph & gr, Var result) {
        double const d = gr.grad(result)[0];
        Tensor & dx = gr.grad(x);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += d;
    });
}

Var gather_cells(Graph & g, Var x, std::vector<GridIndex> const & cells) {
    Tensor const & xv = g.value(x);
    require_rank(xv, 3, "gather_cells");
    int const c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    int const n = static_cast<int>(cells.size());
    for (auto const & cell : cells) {
        if (cell.ix < 0 || cell.ix >= w || cell.iy < 0 || cell.iy >= h) throw ShapeError("gather_cells: cell outside grid");
    }
    Tensor out({n, c});
    for (int i = 0; i < n; ++i) {
        for (int ch = 0; ch < c; ++ch) out[static_cast<std::size_t>(i * c + ch)] = xv.at(ch, cells[static_cast<std::size_t>(i)].iy, cells[static_cast<std::size_t>(i)].ix);
    }
    return g.record(std::move(out), {x}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        Tensor & dx = gr.grad(x);
        for (int i = 0; i < n; ++i) {
            for (int ch = 0; ch < c; ++ch) dx.at(ch, cells[static_cast<std::size_t>(i)].iy, cells[static_cast<std::size_t>(i)].ix) += d[static_cast<std::size_t>(i * c + ch)];
        }
    });
}

Var concat_cols(Graph & g, Var a, Var b) {
    Tensor const & av = g.value(a);
    Tensor const & bv = g.value(b);
    require_rank(av, 2, "concat_cols");
    require_rank(bv, 2, "concat_cols");
    if (av.dim(0) != bv.dim(0)) throw ShapeError("concat_cols: row count mismatch");
    int const n = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
    Tensor out({n, ca + cb});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < ca; ++j) out[static_cast<std::size_t>(i * (ca + cb) + j)] = av[static_cast<std::size_t>(i * ca + j)];
        for (int j = 0; j < cb; ++j) out[static_cast<std::size_t>(i * (ca + cb) + ca + j)] = bv[static_cast<std::size_t>(i * cb + j)];
    }
    return g.record(std::move(out), {a, b}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        if (gr.requires_grad(a)) {
            Tensor & da = gr.grad(a);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < ca; ++j) da[static_cast<std::size_t>(i * ca + j)] += d[static_cast<std::size_t>(i * (ca + cb) + j)];
        }
        if (gr.requires_grad(b)) {
            Tensor & db = gr.grad(b);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < cb; ++j) db[static_cast<std::size_t>(i * cb + j)] += d[static_cast<std::size_t>(i * (ca + cb) + ca + j)];
        }
    });
}

Var concat_channels(Graph & g, Var a, Var b) {
    Tensor const & av = g.value(a);
    Tensor const & bv = g.value(b);
    require_rank(av, 3, "concat_channels");
    require_rank(bv, 3, "concat_channels");
    if (av.dim(1) != bv.dim(1) || av.dim(2) != bv.dim(2)) throw ShapeError("concat_channels: spatial mismatch");
    Tensor out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
    std::copy(av.values().begin(), av.values().end(), out.values().begin());
    std::copy(bv.values().begin(), bv.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(av.size()));
    std::size_t const split = av.size();
    return g.record(std::move(out), {a, b}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        if (gr.requires_grad(a)) {
            Tensor & da = gr.grad(a);
            for (std::size_t i = 0; i < split; ++i) da[i] += d[i];
        }
        if (gr.requires_grad(b)) {
            Tensor & db = gr.grad(b);
            for (std::size_t i = 0; i < db.size(); ++i) db[i] += d[split + i];
        }
    });
}

Var slice_cols(Graph & g, Var x, int begin, int count) {
    Tensor const & xv = g.value(x);
    require_rank(xv, 2, "slice_cols");
    int const n = xv.dim(0), c = xv.dim(1);
    if (begin < 0 || count < 0 || begin + count > c) throw ShapeError("slice_cols: range outside columns");
    Tensor out({n, count});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < count; ++j) out[static_cast<std::size_t>(i * count + j)] = xv[static_cast<std::size_t>(i * c + begin + j)];
    return g.record(std::move(out), {x}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        Tensor & dx = gr.grad(x);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < count; ++j) dx[static_cast<std::size_t>(i * c + begin + j)] += d[static_cast<std::size_t>(i * count + j)];
    });
}

Var positive_diversity(Graph & g, Var x, int axis) {
    Tensor const & xv = g.value(x);
    // Flat-index predicate for "is a diversity entry".
    std::size_t block = 1;
    int channels = 0;
    if (axis == 0) {
        require_rank(xv, 3, "positive_diversity");
        channels = xv.dim(0);
        block = static_cast<std::size_t>(xv.dim(1)) * static_cast<std::size_t>(xv.dim(2));
    } else {
        require_rank(xv, 2, "positive_diversity");
        channels = xv.dim(1);
    }
    if (channels % 4 != 0) throw ShapeError("positive_diversity: channel count must be a multiple of 4");
    auto is_diversity = [=](std::size_t i) {
        std::size_t const ch = axis == 0 ? i / block : i % static_cast<std::size_t>(channels);
        return ch % 4 >= 2;
    };
    Tensor out = xv;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (is_diversity(i)) out[i] = std::exp(out[i]);
    }
    return g.record(std::move(out), {x}, [=](Graph & gr, Var result) {
        Tensor const & d = gr.grad(result);
        Tensor const & y = gr.value(result);
        Tensor & dx = gr.grad(x);
        for (std::size_t i = 0; i < d.size(); ++i) dx[i] += is_diversity(i) ? d[i] * y[i] : d[i];
    });
}

} // namespace trackbench::models::ad
