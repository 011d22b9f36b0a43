#include "haaseg/ops.hpp"

#include "haaseg/errors.hpp"
#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace haaseg::ops {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

std::size_t window_extent(std::size_t in, std::size_t k, std::size_t s, std::size_t p, const char* op) {
    if (k == 0 || s == 0)
        throw ShapeError(std::string(op) + ": kernel and stride must be >= 1");
    const std::size_t padded = in + 2 * p;
    if (padded < k || (padded - k) % s != 0)
        throw ShapeError(std::string(op) + ": output extent (" + std::to_string(in) + " + 2*" + std::to_string(p) +
                         " - " + std::to_string(k) + ") / " + std::to_string(s) + " + 1 is not integral");
    return (padded - k) / s + 1;
}

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
    Tensor out(x.shape());
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < xd.size(); ++i)
        od[i] = fwd(xd[i]);
    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr(), deriv] {
            if (on->grad.empty() || !xn->requires_grad)
                return;
            auto gx = grad_of(*xn);
            for (std::size_t i = 0; i < gx.size(); ++i)
                gx[i] += on->grad[i] * deriv(xn->data[i], on->data[i]);
        });
    }
    return out;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    kernels::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.mutable_data().data());
    if (wants_grad(out, {&a, &b})) {
        Tape::current()->record([an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr(), m, n, k] {
            if (on->grad.empty())
                return;
            if (an->requires_grad)
                kernels::gemm_nt(m, k, n, on->grad.data(), bn->data.data(), grad_of(*an).data());
            if (bn->requires_grad)
                kernels::gemm_tn(k, n, m, an->data.data(), on->grad.data(), grad_of(*bn).data());
        });
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Tensor out(x.shape());
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xd.data() + r * n;
        double* yr = od.data() + r * n;
        const double mx = *std::max_element(xr, xr + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j)
            yr[j] /= total;
    }
    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr(), rows, n] {
            if (on->grad.empty())
                return;
            auto gx = grad_of(*xn);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = on->data.data() + r * n;
                const double* gy = on->grad.data() + r * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    dot += gy[j] * y[j];
                for (std::size_t j = 0; j < n; ++j)
                    gx[r * n + j] += y[j] * (gy[j] - dot);
            }
        });
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::size_t stride, std::size_t padding) {
    require_rank(x, 3, "conv2d input");
    require_rank(kernel, 4, "conv2d kernel");
    const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(1) != cin || kernel.dim(3) != k)
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " does not fit input " +
                         shape_str(x.shape()));
    if (bias.defined() && bias.shape() != Shape{cout})
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " for " + std::to_string(cout) +
                         " output channels");
    const std::size_t oh = window_extent(h, k, stride, padding, "conv2d");
    const std::size_t ow = window_extent(w, k, stride, padding, "conv2d");
    const std::size_t ckk = cin * k * k, hw = oh * ow;

    // im2col
    auto cols = std::make_shared<std::vector<double>>(ckk * hw, 0.0);
    auto xd = x.data();
    for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t kj = 0; kj < k; ++kj) {
                double* row = cols->data() + ((c * k + ki) * k + kj) * hw;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
                    if (iy < 0 || iy >= static_cast<long>(h))
                        continue;
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
                        if (ix < 0 || ix >= static_cast<long>(w))
                            continue;
                        row[oy * ow + ox] = xd[(c * h + iy) * w + ix];
                    }
                }
            }

    Tensor out({cout, oh, ow});
    auto od = out.mutable_data();
    if (bias.defined())
        for (std::size_t o = 0; o < cout; ++o)
            std::fill_n(od.data() + o * hw, hw, bias.data()[o]);
    kernels::gemm_nn(cout, hw, ckk, kernel.data().data(), cols->data(), od.data());

    if (wants_grad(out, {&x, &kernel, &bias})) {
        Tape::current()->record([xn = x.node_ptr(), kn = kernel.node_ptr(), bn = bias.node_ptr(),
                                 on = out.node_ptr(), cols, cin, h, w, cout, k, oh, ow, stride, padding] {
            if (on->grad.empty())
                return;
            const std::size_t ckk = cin * k * k, hw = oh * ow;
            const double* gy = on->grad.data();
            if (kn->requires_grad)
                kernels::gemm_nt(cout, ckk, hw, gy, cols->data(), grad_of(*kn).data());
            if (bn && bn->requires_grad) {
                auto gb = grad_of(*bn);
                for (std::size_t o = 0; o < cout; ++o)
                    for (std::size_t i = 0; i < hw; ++i)
                        gb[o] += gy[o * hw + i];
            }
            if (xn->requires_grad) {
                std::vector<double> dcols(ckk * hw, 0.0);
                kernels::gemm_tn(ckk, hw, cout, kn->data.data(), gy, dcols.data());
                auto gx = grad_of(*xn);
                for (std::size_t c = 0; c < cin; ++c)
                    for (std::size_t ki = 0; ki < k; ++ki)
                        for (std::size_t kj = 0; kj < k; ++kj) {
                            const double* row = dcols.data() + ((c * k + ki) * k + kj) * hw;
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                                const long iy = static_cast<long>(oy * stride + ki) - static_cast<long>(padding);
                                if (iy < 0 || iy >= static_cast<long>(h))
                                    continue;
                                for (std::size_t ox = 0; ox < ow; ++ox) {
                                    const long ix = static_cast<long>(ox * stride + kj) - static_cast<long>(padding);
                                    if (ix < 0 || ix >= static_cast<long>(w))
                                        continue;
                                    gx[(c * h + iy) * w + ix] += row[oy * ow + ox];
                                }
                            }
                        }
            }
        });
    }
    return out;
}

Tensor avg_pool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
    require_rank(x, 3, "avg_pool2d");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = window_extent(h, kernel, stride, padding, "avg_pool2d");
    const std::size_t ow = window_extent(w, kernel, stride, padding, "avg_pool2d");

    // Valid window bounds per output row / column.
    struct Span1 {
        std::size_t lo, hi;
    };
    auto bounds = [&](std::size_t out_n, std::size_t in_n) {
        std::vector<Span1> b(out_n);
        for (std::size_t o = 0; o < out_n; ++o) {
            const long start = static_cast<long>(o * stride) - static_cast<long>(padding);
            const long lo = std::max<long>(start, 0);
            const long hi = std::min<long>(start + static_cast<long>(kernel), static_cast<long>(in_n));
            b[o] = {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
        }
        return b;
    };
    auto rows = bounds(oh, h);
    auto colsb = bounds(ow, w);

    Tensor out({c, oh, ow});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (std::size_t iy = rows[oy].lo; iy < rows[oy].hi; ++iy)
                    for (std::size_t ix = colsb[ox].lo; ix < colsb[ox].hi; ++ix)
                        acc += xd[(ch * h + iy) * w + ix];
                const double count = static_cast<double>((rows[oy].hi - rows[oy].lo) * (colsb[ox].hi - colsb[ox].lo));
                od[(ch * oh + oy) * ow + ox] = acc / count;
            }

    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr(), rows, colsb, c, h, w, oh, ow] {
            if (on->grad.empty())
                return;
            auto gx = grad_of(*xn);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t oy = 0; oy < oh; ++oy)
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const double count =
                            static_cast<double>((rows[oy].hi - rows[oy].lo) * (colsb[ox].hi - colsb[ox].lo));
                        const double g = on->grad[(ch * oh + oy) * ow + ox] / count;
                        for (std::size_t iy = rows[oy].lo; iy < rows[oy].hi; ++iy)
                            for (std::size_t ix = colsb[ox].lo; ix < colsb[ox].hi; ++ix)
                                gx[(ch * h + iy) * w + ix] += g;
                    }
        });
    }
    return out;
}

namespace {
struct Interp {
    std::size_t lo, hi;
    double t;
};

// Corner-aligned source coordinates for one axis.
std::vector<Interp> interp_axis(std::size_t in_n, std::size_t out_n) {
    std::vector<Interp> r(out_n);
    for (std::size_t o = 0; o < out_n; ++o) {
        if (in_n == 1 || out_n == 1) {
            r[o] = {0, 0, 0.0};
            continue;
        }
        const double src = static_cast<double>(o * (in_n - 1)) / static_cast<double>(out_n - 1);
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in_n - 1);
        const std::size_t hi = std::min(lo + 1, in_n - 1);
        r[o] = {lo, hi, src - static_cast<double>(lo)};
    }
    return r;
}
} // namespace

Tensor bilinear_upsample(const Tensor& x, std::size_t factor) {
    require_rank(x, 3, "bilinear_upsample");
    if (factor == 0)
        throw ShapeError("bilinear_upsample: factor must be >= 1");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = h * factor, ow = w * factor;
    auto ry = interp_axis(h, oh);
    auto rx = interp_axis(w, ow);

    Tensor out({c, oh, ow});
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = xd.data() + ch * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto [y0, y1, ty] = ry[oy];
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto [x0, x1, tx] = rx[ox];
                const double a = plane[y0 * w + x0], b = plane[y0 * w + x1];
                const double cc = plane[y1 * w + x0], d = plane[y1 * w + x1];
                // a + t*(b - a) keeps constant planes bit-exact.
                const double top = a + tx * (b - a);
                const double bot = cc + tx * (d - cc);
                od[(ch * oh + oy) * ow + ox] = top + ty * (bot - top);
            }
        }
    }

    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr(), ry, rx, c, h, w, oh, ow] {
            if (on->grad.empty())
                return;
            auto gx = grad_of(*xn);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double* gplane = gx.data() + ch * h * w;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    const auto [y0, y1, ty] = ry[oy];
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const auto [x0, x1, tx] = rx[ox];
                        const double g = on->grad[(ch * oh + oy) * ow + ox];
                        gplane[y0 * w + x0] += g * (1 - tx) * (1 - ty);
                        gplane[y0 * w + x1] += g * tx * (1 - ty);
                        gplane[y1 * w + x0] += g * (1 - tx) * ty;
                        gplane[y1 * w + x1] += g * tx * ty;
                    }
                }
            }
        });
    }
    return out;
}

Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(x, 3, "channel_norm");
    const std::size_t c = x.dim(0), n = x.dim(1) * x.dim(2);
    if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
        throw ShapeError("channel_norm: gamma/beta must be [" + std::to_string(c) + "], got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    if (eps < 0)
        throw ContractError("channel_norm: eps must be nonnegative");

    Tensor out(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto inv_std = std::make_shared<std::vector<double>>(c);
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* xs = xd.data() + ch * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            mu += xs[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            var += (xs[i] - mu) * (xs[i] - mu);
        var /= static_cast<double>(n);
        const double is = var + eps > 0 ? 1.0 / std::sqrt(var + eps) : 0.0;
        (*inv_std)[ch] = is;
        const double g = gamma.data()[ch], b = beta.data()[ch];
        for (std::size_t i = 0; i < n; ++i) {
            const double xh = (xs[i] - mu) * is;
            (*xhat)[ch * n + i] = xh;
            od[ch * n + i] = g * xh + b;
        }
    }

    if (wants_grad(out, {&x, &gamma, &beta})) {
        Tape::current()->record([xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr(),
                                 on = out.node_ptr(), xhat, inv_std, c, n] {
            if (on->grad.empty())
                return;
            const double nn = static_cast<double>(n);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double* gy = on->grad.data() + ch * n;
                const double* xh = xhat->data() + ch * n;
                double sum_gy = 0.0, sum_gy_xh = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sum_gy += gy[i];
                    sum_gy_xh += gy[i] * xh[i];
                }
                if (gn->requires_grad)
                    grad_of(*gn)[ch] += sum_gy_xh;
                if (bn->requires_grad)
                    grad_of(*bn)[ch] += sum_gy;
                if (xn->requires_grad) {
                    auto gx = grad_of(*xn);
                    const double scale = gn->data[ch] * (*inv_std)[ch] / nn;
                    for (std::size_t i = 0; i < n; ++i)
                        gx[ch * n + i] += scale * (nn * gy[i] - sum_gy - xh[i] * sum_gy_xh);
                }
            }
        });
    }
    return out;
}

namespace {
thread_local ReluMarginMonitor* active_monitor = nullptr;
} // namespace

ReluMarginMonitor::ReluMarginMonitor() : previous_(active_monitor), min_margin_(INFINITY) { active_monitor = this; }
ReluMarginMonitor::~ReluMarginMonitor() { active_monitor = previous_; }

void ReluMarginMonitor::observe(double v) {
    min_margin_ = std::min(min_margin_, std::abs(v));
    if (previous_)
        previous_->observe(v);
}

Tensor relu(const Tensor& x) {
    if (active_monitor)
        for (double v : x.data())
            active_monitor->observe(v);
    return unary(
        x, [](double v) { return v > 0 ? v : 0.0; }, [](double in, double) { return in > 0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0)
                return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor scale(const Tensor& x, double c) {
    return unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

namespace {
// a (+/-) b elementwise
Tensor add_signed(const Tensor& a, const Tensor& b, double sign, const char* op) {
    require_same_shape(a, b, op);
    Tensor out(a.shape());
    auto ad = a.data(), bd = b.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < od.size(); ++i)
        od[i] = ad[i] + sign * bd[i];
    if (wants_grad(out, {&a, &b})) {
        Tape::current()->record([an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr(), sign] {
            if (on->grad.empty())
                return;
            if (an->requires_grad) {
                auto g = grad_of(*an);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                auto g = grad_of(*bn);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += sign * on->grad[i];
            }
        });
    }
    return out;
}
} // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_signed(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_signed(a, b, -1.0, "sub"); }

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    auto ad = a.data(), bd = b.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < od.size(); ++i)
        od[i] = ad[i] * bd[i];
    if (wants_grad(out, {&a, &b})) {
        Tape::current()->record([an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr()] {
            if (on->grad.empty())
                return;
            if (an->requires_grad) {
                auto g = grad_of(*an);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += on->grad[i] * bn->data[i];
            }
            if (bn->requires_grad) {
                auto g = grad_of(*bn);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += on->grad[i] * an->data[i];
            }
        });
    }
    return out;
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    if (s.numel() != 1)
        throw ShapeError("mul_scalar: scale must have one element, got " + shape_str(s.shape()));
    const double sv = s.data()[0];
    Tensor out(x.shape());
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t i = 0; i < od.size(); ++i)
        od[i] = sv * xd[i];
    if (wants_grad(out, {&x, &s})) {
        Tape::current()->record([xn = x.node_ptr(), sn = s.node_ptr(), on = out.node_ptr()] {
            if (on->grad.empty())
                return;
            if (xn->requires_grad) {
                auto g = grad_of(*xn);
                for (std::size_t i = 0; i < g.size(); ++i)
                    g[i] += sn->data[0] * on->grad[i];
            }
            if (sn->requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < on->grad.size(); ++i)
                    acc += on->grad[i] * xn->data[i];
                grad_of(*sn)[0] += acc;
            }
        });
    }
    return out;
}

namespace {
// For each flat output index, the flat input index under a permutation.
std::vector<std::size_t> permutation_map(const Shape& in_shape, const std::vector<std::size_t>& axes) {
    const std::size_t r = in_shape.size();
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t d = r; d-- > 1;)
        in_strides[d - 1] = in_strides[d] * in_shape[d];
    Shape out_shape(r);
    for (std::size_t d = 0; d < r; ++d)
        out_shape[d] = in_shape[axes[d]];

    const std::size_t n = shape_numel(in_shape);
    std::vector<std::size_t> map(n);
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < n; ++o) {
        std::size_t src = 0;
        for (std::size_t d = 0; d < r; ++d)
            src += idx[d] * in_strides[axes[d]];
        map[o] = src;
        for (std::size_t d = r; d-- > 0;) {
            if (++idx[d] < out_shape[d])
                break;
            idx[d] = 0;
        }
    }
    return map;
}
} // namespace

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
    const std::size_t r = x.rank();
    std::vector<bool> seen(r, false);
    if (axes.size() != r)
        throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for tensor " + shape_str(x.shape()));
    for (auto a : axes) {
        if (a >= r || seen[a])
            throw ShapeError("permute: axes are not a permutation of 0.." + std::to_string(r - 1));
        seen[a] = true;
    }
    Shape out_shape(r);
    for (std::size_t d = 0; d < r; ++d)
        out_shape[d] = x.dim(axes[d]);
    auto map = std::make_shared<std::vector<std::size_t>>(permutation_map(x.shape(), axes));

    Tensor out(out_shape);
    auto xd = x.data();
    auto od = out.mutable_data();
    for (std::size_t o = 0; o < od.size(); ++o)
        od[o] = xd[(*map)[o]];
    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr(), map] {
            if (on->grad.empty())
                return;
            auto g = grad_of(*xn);
            for (std::size_t o = 0; o < map->size(); ++o)
                g[(*map)[o]] += on->grad[o];
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr()] {
            if (on->grad.empty())
                return;
            auto g = grad_of(*xn);
            for (std::size_t i = 0; i < g.size(); ++i)
                g[i] += on->grad[i];
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data())
        acc += v;
    Tensor out = Tensor::scalar(acc);
    if (wants_grad(out, {&x})) {
        Tape::current()->record([xn = x.node_ptr(), on = out.node_ptr()] {
            if (on->grad.empty())
                return;
            auto g = grad_of(*xn);
            for (auto& v : g)
                v += on->grad[0];
        });
    }
    return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor project_channels(const Tensor& x, const Tensor& weight) {
    require_rank(x, 3, "project_channels");
    require_rank(weight, 2, "project_channels weight");
    if (weight.dim(1) != x.dim(0))
        throw ShapeError("project_channels: weight " + shape_str(weight.shape()) + " does not fit input " +
                         shape_str(x.shape()));
    const std::size_t h = x.dim(1), w = x.dim(2);
    Tensor flat = reshape(x, {x.dim(0), h * w});
    return reshape(matmul(weight, flat), {weight.dim(0), h, w});
}

} // namespace haaseg::ops
