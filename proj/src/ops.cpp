#include "moevl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace moevl::ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require_rank(const Tensor& t, int rank, const char* op, const char* arg) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": " + arg + " must be rank " +
                         std::to_string(rank) + ", got " + shape_str(t.shape));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
    }
}

// a*b with a [m x k] row-major, b [k x n] row-major, into out [m x n].
void matmul_into(const std::vector<double>& a, const std::vector<double>& b,
                 std::vector<double>& out, int m, int k, int n) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double av = a[static_cast<std::size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &b[static_cast<std::size_t>(p) * n];
            double* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul", "lhs");
    require_rank(b, 2, "matmul", "rhs");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape) +
                         " vs " + shape_str(b.shape));
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    matmul_into(a.data, b.data, out.data, m, k, n);

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pa = tp->node_for(a);
    auto pb = tp->node_for(b);
    if (pa < 0 && pb < 0) return out;
    tp->record(out, {pa, pb},
               [pa, pb, m, k, n, adata = a.data, bdata = b.data](
                   const std::vector<double>& og, Tape& t) {
                   if (pa >= 0) {
                       // dA = dOut * B^T
                       std::vector<double> da(static_cast<std::size_t>(m) * k, 0.0);
                       for (int i = 0; i < m; ++i)
                           for (int j = 0; j < n; ++j) {
                               double gv = og[static_cast<std::size_t>(i) * n + j];
                               if (gv == 0.0) continue;
                               for (int p = 0; p < k; ++p)
                                   da[static_cast<std::size_t>(i) * k + p] +=
                                       gv * bdata[static_cast<std::size_t>(p) * n + j];
                           }
                       t.accumulate(pa, da);
                   }
                   if (pb >= 0) {
                       // dB = A^T * dOut
                       std::vector<double> db(static_cast<std::size_t>(k) * n, 0.0);
                       for (int i = 0; i < m; ++i)
                           for (int p = 0; p < k; ++p) {
                               double av = adata[static_cast<std::size_t>(i) * k + p];
                               if (av == 0.0) continue;
                               for (int j = 0; j < n; ++j)
                                   db[static_cast<std::size_t>(p) * n + j] +=
                                       av * og[static_cast<std::size_t>(i) * n + j];
                           }
                       t.accumulate(pb, db);
                   }
               });
    return out;
}

Tensor transpose(const Tensor& x) {
    require_rank(x, 2, "transpose", "input");
    const int m = x.rows(), n = x.cols();
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.data[static_cast<std::size_t>(j) * m + i] = x.data[static_cast<std::size_t>(i) * n + j];

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, m, n](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(static_cast<std::size_t>(m) * n);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i)
                dx[static_cast<std::size_t>(i) * n + j] = og[static_cast<std::size_t>(j) * m + i];
        t.accumulate(px, dx);
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pa = tp->node_for(a);
    auto pb = tp->node_for(b);
    if (pa < 0 && pb < 0) return out;
    tp->record(out, {pa, pb}, [pa, pb](const std::vector<double>& og, Tape& t) {
        t.accumulate(pa, og);
        t.accumulate(pb, og);
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= b.data[i];
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pa = tp->node_for(a);
    auto pb = tp->node_for(b);
    if (pa < 0 && pb < 0) return out;
    tp->record(out, {pa, pb},
               [pa, pb, adata = a.data, bdata = b.data](
                   const std::vector<double>& og, Tape& t) {
                   if (pa >= 0) {
                       std::vector<double> da(og.size());
                       for (std::size_t i = 0; i < og.size(); ++i) da[i] = og[i] * bdata[i];
                       t.accumulate(pa, da);
                   }
                   if (pb >= 0) {
                       std::vector<double> db(og.size());
                       for (std::size_t i = 0; i < og.size(); ++i) db[i] = og[i] * adata[i];
                       t.accumulate(pb, db);
                   }
               });
    return out;
}

Tensor affine(const Tensor& x, double scale, double shift) {
    Tensor out = x;
    for (double& v : out.data) v = scale * v + shift;
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, scale](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(og.size());
        for (std::size_t i = 0; i < og.size(); ++i) dx[i] = scale * og[i];
        t.accumulate(px, dx);
    });
    return out;
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    require_rank(m, 2, "add_rowvec", "matrix");
    require_rank(v, 1, "add_rowvec", "vector");
    if (m.cols() != v.shape[0]) {
        throw ShapeError("add_rowvec: widths differ: " + shape_str(m.shape) + " vs " +
                         shape_str(v.shape));
    }
    const int rows = m.rows(), cols = m.cols();
    Tensor out = m;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i) * cols + j] += v.data[static_cast<std::size_t>(j)];
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pm = tp->node_for(m);
    auto pv = tp->node_for(v);
    if (pm < 0 && pv < 0) return out;
    tp->record(out, {pm, pv},
               [pm, pv, rows, cols](const std::vector<double>& og, Tape& t) {
                   t.accumulate(pm, og);
                   if (pv >= 0) {
                       std::vector<double> dv(static_cast<std::size_t>(cols), 0.0);
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < cols; ++j) dv[static_cast<std::size_t>(j)] += og[static_cast<std::size_t>(i) * cols + j];
                       t.accumulate(pv, dv);
                   }
               });
    return out;
}

Tensor scale_rows(const Tensor& m, const Tensor& col) {
    require_rank(m, 2, "scale_rows", "matrix");
    require_rank(col, 2, "scale_rows", "column");
    if (col.cols() != 1 || col.rows() != m.rows()) {
        throw ShapeError("scale_rows: column must be [" + std::to_string(m.rows()) +
                         "x1] for matrix " + shape_str(m.shape) + ", got " +
                         shape_str(col.shape));
    }
    const int rows = m.rows(), cols = m.cols();
    Tensor out = m;
    for (int i = 0; i < rows; ++i) {
        double c = col.data[static_cast<std::size_t>(i)];
        for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(i) * cols + j] *= c;
    }
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pm = tp->node_for(m);
    auto pc = tp->node_for(col);
    if (pm < 0 && pc < 0) return out;
    tp->record(out, {pm, pc},
               [pm, pc, rows, cols, mdata = m.data, cdata = col.data](
                   const std::vector<double>& og, Tape& t) {
                   if (pm >= 0) {
                       std::vector<double> dm(og.size());
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < cols; ++j)
                               dm[static_cast<std::size_t>(i) * cols + j] =
                                   og[static_cast<std::size_t>(i) * cols + j] * cdata[static_cast<std::size_t>(i)];
                       t.accumulate(pm, dm);
                   }
                   if (pc >= 0) {
                       std::vector<double> dc(static_cast<std::size_t>(rows), 0.0);
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < cols; ++j)
                               dc[static_cast<std::size_t>(i)] +=
                                   og[static_cast<std::size_t>(i) * cols + j] * mdata[static_cast<std::size_t>(i) * cols + j];
                       t.accumulate(pc, dc);
                   }
               });
    return out;
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data) total += v;
    Tensor out = Tensor::scalar(total);

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, n = x.size()](const std::vector<double>& og, Tape& t) {
        t.accumulate(px, std::vector<double>(n, og[0]));
    });
    return out;
}

Tensor mean_rows(const Tensor& x) {
    require_rank(x, 2, "mean_rows", "input");
    const int rows = x.rows(), cols = x.cols();
    Tensor out = Tensor::zeros({1, cols});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) out.data[static_cast<std::size_t>(j)] += x.data[static_cast<std::size_t>(i) * cols + j];
    for (double& v : out.data) v /= rows;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, rows, cols](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(static_cast<std::size_t>(rows) * cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) dx[static_cast<std::size_t>(i) * cols + j] = og[static_cast<std::size_t>(j)] / rows;
        t.accumulate(px, dx);
    });
    return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "concat_rows", "first");
    require_rank(b, 2, "concat_rows", "second");
    if (a.cols() != b.cols()) {
        throw ShapeError("concat_rows: widths differ: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    }
    const int na = a.rows(), nb = b.rows(), cols = a.cols();
    Tensor out = Tensor::zeros({na + nb, cols});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pa = tp->node_for(a);
    auto pb = tp->node_for(b);
    if (pa < 0 && pb < 0) return out;
    tp->record(out, {pa, pb},
               [pa, pb, na, nb, cols](const std::vector<double>& og, Tape& t) {
                   std::size_t split = static_cast<std::size_t>(na) * cols;
                   if (pa >= 0) t.accumulate(pa, {og.begin(), og.begin() + split});
                   if (pb >= 0) t.accumulate(pb, {og.begin() + split, og.end()});
                   (void)nb;
               });
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    require_rank(table, 2, "gather_rows", "table");
    if (ids.empty()) throw ContractError("gather_rows: empty index list");
    const int vocab = table.rows(), cols = table.cols();
    for (int id : ids) {
        if (id < 0 || id >= vocab) {
            throw IndexError("gather_rows: row " + std::to_string(id) + " outside table " +
                             shape_str(table.shape));
        }
    }
    Tensor out = Tensor::zeros({static_cast<int>(ids.size()), cols});
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data.begin() + static_cast<std::size_t>(ids[i]) * cols, cols,
                    out.data.begin() + i * cols);

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pt = tp->node_for(table);
    if (pt < 0) return out;
    tp->record(out, {pt},
               [pt, ids, vocab, cols](const std::vector<double>& og, Tape& t) {
                   std::vector<double> dt(static_cast<std::size_t>(vocab) * cols, 0.0);
                   for (std::size_t i = 0; i < ids.size(); ++i)
                       for (int j = 0; j < cols; ++j)
                           dt[static_cast<std::size_t>(ids[i]) * cols + j] += og[i * cols + j];
                   t.accumulate(pt, dt);
               });
    return out;
}

Tensor select_col(const Tensor& x, int j) {
    require_rank(x, 2, "select_col", "input");
    if (j < 0 || j >= x.cols()) {
        throw IndexError("select_col: column " + std::to_string(j) + " outside " +
                         shape_str(x.shape));
    }
    const int rows = x.rows(), cols = x.cols();
    Tensor out = Tensor::zeros({rows, 1});
    for (int i = 0; i < rows; ++i) out.data[static_cast<std::size_t>(i)] = x.data[static_cast<std::size_t>(i) * cols + j];

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, j, rows, cols](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(static_cast<std::size_t>(rows) * cols, 0.0);
        for (int i = 0; i < rows; ++i) dx[static_cast<std::size_t>(i) * cols + j] = og[static_cast<std::size_t>(i)];
        t.accumulate(px, dx);
    });
    return out;
}

Tensor merge_rows(const Tensor& x, int k) {
    require_rank(x, 2, "merge_rows", "input");
    if (k <= 0) throw ConfigError("merge_rows: merge factor must be positive, got " + std::to_string(k));
    const int n = x.rows(), d = x.cols();
    const int padded = (n + k - 1) / k * k;
    const int groups = padded / k;
    Tensor out = Tensor::zeros({groups, k * d});
    for (int g = 0; g < groups; ++g)
        for (int c = 0; c < k; ++c) {
            int src = std::min(g * k + c, n - 1);
            std::copy_n(x.data.begin() + static_cast<std::size_t>(src) * d, d,
                        out.data.begin() + (static_cast<std::size_t>(g) * k + c) * d);
        }

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, n, d, k, groups](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(static_cast<std::size_t>(n) * d, 0.0);
        for (int g = 0; g < groups; ++g)
            for (int c = 0; c < k; ++c) {
                int src = std::min(g * k + c, n - 1);
                for (int j = 0; j < d; ++j)
                    dx[static_cast<std::size_t>(src) * d + j] +=
                        og[(static_cast<std::size_t>(g) * k + c) * d + j];
            }
        t.accumulate(px, dx);
    });
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, xdata = x.data](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(og.size());
        for (std::size_t i = 0; i < og.size(); ++i) dx[i] = xdata[i] > 0.0 ? og[i] : 0.0;
        t.accumulate(px, dx);
    });
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, xdata = x.data](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(og.size());
        for (std::size_t i = 0; i < og.size(); ++i) {
            double v = xdata[i];
            double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            dx[i] = og[i] * (cdf + v * pdf);
        }
        t.accumulate(px, dx);
    });
    return out;
}

Tensor logistic(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) {
        v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                     : std::exp(v) / (1.0 + std::exp(v));
    }
    out.requires_grad = false;

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, ydata = out.data](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(og.size());
        for (std::size_t i = 0; i < og.size(); ++i) dx[i] = og[i] * ydata[i] * (1.0 - ydata[i]);
        t.accumulate(px, dx);
    });
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank()) {
        throw IndexError("softmax: axis " + std::to_string(axis) + " outside rank " +
                         std::to_string(x.rank()) + " tensor " + shape_str(x.shape));
    }
    // View the tensor as [outer x len x inner] with `len` along the softmax axis.
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.shape[i]);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= static_cast<std::size_t>(x.shape[i]);
    const std::size_t len = static_cast<std::size_t>(x.shape[axis]);

    Tensor out = x;
    out.requires_grad = false;
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = out.data[base];
            for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, out.data[base + l * inner]);
            double total = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
                double e = std::exp(out.data[base + l * inner] - mx);
                out.data[base + l * inner] = e;
                total += e;
            }
            for (std::size_t l = 0; l < len; ++l) out.data[base + l * inner] /= total;
        }
    }

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px},
               [px, outer, inner, len, p = out.data](const std::vector<double>& og, Tape& t) {
                   // dx = p * (dy - sum(dy * p)) along each slice
                   std::vector<double> dx(og.size());
                   for (std::size_t o = 0; o < outer; ++o) {
                       for (std::size_t in = 0; in < inner; ++in) {
                           const std::size_t base = o * len * inner + in;
                           double dot = 0.0;
                           for (std::size_t l = 0; l < len; ++l) {
                               std::size_t idx = base + l * inner;
                               dot += og[idx] * p[idx];
                           }
                           for (std::size_t l = 0; l < len; ++l) {
                               std::size_t idx = base + l * inner;
                               dx[idx] = p[idx] * (og[idx] - dot);
                           }
                       }
                   }
                   t.accumulate(px, dx);
               });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(x, 2, "layer_norm", "input");
    require_rank(gamma, 1, "layer_norm", "gamma");
    require_rank(beta, 1, "layer_norm", "beta");
    if (gamma.shape[0] != x.cols() || beta.shape[0] != x.cols()) {
        throw ShapeError("layer_norm: gamma " + shape_str(gamma.shape) + " / beta " +
                         shape_str(beta.shape) + " do not match input " + shape_str(x.shape));
    }
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");

    const int rows = x.rows(), d = x.cols();
    Tensor out = Tensor::zeros({rows, d});
    std::vector<double> xhat(x.data.size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const double* row = &x.data[static_cast<std::size_t>(i) * d];
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        for (int j = 0; j < d; ++j) {
            double xh = (row[j] - mean) * is;
            xhat[static_cast<std::size_t>(i) * d + j] = xh;
            out.data[static_cast<std::size_t>(i) * d + j] = gamma.data[static_cast<std::size_t>(j)] * xh + beta.data[static_cast<std::size_t>(j)];
        }
    }

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    auto pg = tp->node_for(gamma);
    auto pb = tp->node_for(beta);
    if (px < 0 && pg < 0 && pb < 0) return out;
    tp->record(out, {px, pg, pb},
               [px, pg, pb, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std),
                gdata = gamma.data](const std::vector<double>& og, Tape& t) {
                   if (pg >= 0) {
                       std::vector<double> dg(static_cast<std::size_t>(d), 0.0);
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < d; ++j)
                               dg[static_cast<std::size_t>(j)] += og[static_cast<std::size_t>(i) * d + j] * xhat[static_cast<std::size_t>(i) * d + j];
                       t.accumulate(pg, dg);
                   }
                   if (pb >= 0) {
                       std::vector<double> db(static_cast<std::size_t>(d), 0.0);
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < d; ++j) db[static_cast<std::size_t>(j)] += og[static_cast<std::size_t>(i) * d + j];
                       t.accumulate(pb, db);
                   }
                   if (px >= 0) {
                       std::vector<double> dx(static_cast<std::size_t>(rows) * d);
                       for (int i = 0; i < rows; ++i) {
                           double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                           for (int j = 0; j < d; ++j) {
                               std::size_t idx = static_cast<std::size_t>(i) * d + j;
                               double dxh = og[idx] * gdata[static_cast<std::size_t>(j)];
                               mean_dxhat += dxh;
                               mean_dxhat_xhat += dxh * xhat[idx];
                           }
                           mean_dxhat /= d;
                           mean_dxhat_xhat /= d;
                           for (int j = 0; j < d; ++j) {
                               std::size_t idx = static_cast<std::size_t>(i) * d + j;
                               double dxh = og[idx] * gdata[static_cast<std::size_t>(j)];
                               dx[idx] = inv_std[static_cast<std::size_t>(i)] *
                                         (dxh - mean_dxhat - xhat[idx] * mean_dxhat_xhat);
                           }
                       }
                       t.accumulate(px, dx);
                   }
               });
    return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    require_rank(logits, 2, "cross_entropy", "logits");
    const int b = logits.rows(), c = logits.cols();
    if (static_cast<int>(targets.size()) != b) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(b) + " logit rows");
    }
    for (int t : targets) {
        if (t < 0 || t >= c) {
            throw IndexError("cross_entropy: target class " + std::to_string(t) +
                             " outside [0," + std::to_string(c) + ")");
        }
    }

    std::vector<double> probs(logits.data.size());
    double loss = 0.0;
    for (int i = 0; i < b; ++i) {
        const double* row = &logits.data[static_cast<std::size_t>(i) * c];
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double total = 0.0;
        for (int j = 0; j < c; ++j) total += std::exp(row[j] - mx);
        double lse = mx + std::log(total);
        loss += lse - row[targets[static_cast<std::size_t>(i)]];
        for (int j = 0; j < c; ++j)
            probs[static_cast<std::size_t>(i) * c + j] = std::exp(row[j] - lse);
    }
    loss /= b;
    Tensor out = Tensor::scalar(loss);

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto pl = tp->node_for(logits);
    if (pl < 0) return out;
    tp->record(out, {pl},
               [pl, b, c, targets, probs = std::move(probs)](
                   const std::vector<double>& og, Tape& t) {
                   std::vector<double> dl(probs.size());
                   for (int i = 0; i < b; ++i)
                       for (int j = 0; j < c; ++j) {
                           std::size_t idx = static_cast<std::size_t>(i) * c + j;
                           double indicator = j == targets[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                           dl[idx] = og[0] * (probs[idx] - indicator) / b;
                       }
                   t.accumulate(pl, dl);
               });
    return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw ConfigError("dropout: probability must be in [0,1), got " + std::to_string(p));
    }
    if (p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.size());
    for (double& m : mask) m = rng.next_uniform() < p ? 0.0 : keep_scale;

    Tensor out = x;
    out.requires_grad = false;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask[i];

    Tape* tp = Tape::active();
    if (!tp) return out;
    auto px = tp->node_for(x);
    if (px < 0) return out;
    tp->record(out, {px}, [px, mask = std::move(mask)](const std::vector<double>& og, Tape& t) {
        std::vector<double> dx(og.size());
        for (std::size_t i = 0; i < og.size(); ++i) dx[i] = og[i] * mask[i];
        t.accumulate(px, dx);
    });
    return out;
}

Tensor self_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                      const Tensor& wv) {
    require_rank(x, 2, "self_attention", "input");
    const int d = x.cols();
    for (const auto* w : {&wq, &wk, &wv}) {
        if (w->rank() != 2 || w->rows() != d || w->cols() != d) {
            throw ShapeError("self_attention: projections must be [" + std::to_string(d) +
                             "x" + std::to_string(d) + "] for input " + shape_str(x.shape) +
                             ", got " + shape_str(w->shape));
        }
    }
    return attention(matmul(x, wq), matmul(x, wk), matmul(x, wv));
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    require_rank(q, 2, "attention", "queries");
    require_rank(k, 2, "attention", "keys");
    require_rank(v, 2, "attention", "values");
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw ShapeError("attention: q " + shape_str(q.shape) + ", k " + shape_str(k.shape) +
                         ", v " + shape_str(v.shape) + " do not conform");
    }
    Tensor scores =
        affine(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())), 0.0);
    Tensor weights = softmax(scores, 1);
    return matmul(weights, v);
}

}  // namespace moevl::ops
