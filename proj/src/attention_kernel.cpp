#include "haaseg/attention_kernel.hpp"

#include "haaseg/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace haaseg {

SliceLayout SliceLayout::axial(const Shape& chw, Axis axis) {
    if (chw.size() != 3)
        throw ShapeError("axial layout needs a [C,H,W] tensor, got " + shape_str(chw));
    const std::size_t c = chw[0], h = chw[1], w = chw[2];
    if (axis == Axis::Height)
        return {.slices = w, .length = h, .channels = c, .slice_stride = 1, .position_stride = w,
                .channel_stride = h * w};
    return {.slices = h, .length = w, .channels = c, .slice_stride = w, .position_stride = 1,
            .channel_stride = h * w};
}

SliceLayout SliceLayout::sequence(const Shape& ld) {
    if (ld.size() != 2)
        throw ShapeError("sequence layout needs an [L,d] tensor, got " + shape_str(ld));
    return {.slices = 1, .length = ld[0], .channels = ld[1], .slice_stride = 0, .position_stride = ld[1],
            .channel_stride = 1};
}

namespace {

using detail::TensorNode;

std::size_t rel_index(std::size_t i, std::size_t j, std::size_t k_clip) {
    const long d = static_cast<long>(j) - static_cast<long>(i);
    const long kc = static_cast<long>(k_clip);
    return static_cast<std::size_t>(std::clamp(d, -kc, kc) + kc);
}

struct Gathered {
    std::vector<double> buf;
    void gather(const double* src, const SliceLayout& l, std::size_t s) {
        buf.resize(l.length * l.channels);
        const double* base = src + s * l.slice_stride;
        for (std::size_t i = 0; i < l.length; ++i)
            for (std::size_t c = 0; c < l.channels; ++c)
                buf[i * l.channels + c] = base[i * l.position_stride + c * l.channel_stride];
    }
    void scatter_add(double* dst, const SliceLayout& l, std::size_t s) const {
        double* base = dst + s * l.slice_stride;
        for (std::size_t i = 0; i < l.length; ++i)
            for (std::size_t c = 0; c < l.channels; ++c)
                base[i * l.position_stride + c * l.channel_stride] += buf[i * l.channels + c];
    }
};

const double* table_ptr(const Tensor& t) { return t.defined() ? t.data().data() : nullptr; }

} // namespace

Tensor sliced_attention(const Tensor& q, const Tensor& k, const Tensor& v, const SliceLayout& layout,
                        const RelativeTerms& terms) {
    if (q.shape() != k.shape() || q.shape() != v.shape())
        throw ShapeError("attention: q/k/v shapes differ: " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                         ", " + shape_str(v.shape()));
    const std::size_t L = layout.length, d = layout.channels, kc = terms.k_clip;
    const Shape table_shape{2 * kc + 1, d};
    for (const Tensor* t : {&terms.query_bias, &terms.key_bias, &terms.value_bias})
        if (t->defined() && t->shape() != table_shape)
            throw ShapeError("attention: relative table " + shape_str(t->shape()) + ", expected " +
                             shape_str(table_shape));

    const double* A = table_ptr(terms.query_bias);
    const double* B = table_ptr(terms.key_bias);
    const double* C = table_ptr(terms.value_bias);

    Tensor out(v.shape());
    auto weights = std::make_shared<std::vector<double>>(layout.slices * L * L);
    Gathered Q, K, V, O;
    std::vector<double> logits(L);
    for (std::size_t s = 0; s < layout.slices; ++s) {
        Q.gather(q.data().data(), layout, s);
        K.gather(k.data().data(), layout, s);
        V.gather(v.data().data(), layout, s);
        O.buf.assign(L * d, 0.0);
        double* W = weights->data() + s * L * L;
        for (std::size_t i = 0; i < L; ++i) {
            const double* qi = &Q.buf[i * d];
            double mx = -INFINITY;
            for (std::size_t j = 0; j < L; ++j) {
                const double* kj = &K.buf[j * d];
                const std::size_t r = rel_index(i, j, kc);
                double acc = 0.0;
                for (std::size_t c = 0; c < d; ++c)
                    acc += qi[c] * kj[c];
                if (A)
                    for (std::size_t c = 0; c < d; ++c)
                        acc += qi[c] * A[r * d + c];
                if (B)
                    for (std::size_t c = 0; c < d; ++c)
                        acc += kj[c] * B[r * d + c];
                logits[j] = acc;
                mx = std::max(mx, acc);
            }
            double total = 0.0;
            for (std::size_t j = 0; j < L; ++j) {
                logits[j] = std::exp(logits[j] - mx);
                total += logits[j];
            }
            double* oi = &O.buf[i * d];
            for (std::size_t j = 0; j < L; ++j) {
                const double wij = logits[j] / total;
                W[i * L + j] = wij;
                const double* vj = &V.buf[j * d];
                for (std::size_t c = 0; c < d; ++c)
                    oi[c] += wij * vj[c];
                if (C) {
                    const double* cr = C + rel_index(i, j, kc) * d;
                    for (std::size_t c = 0; c < d; ++c)
                        oi[c] += wij * cr[c];
                }
            }
        }
        O.scatter_add(out.mutable_data().data(), layout, s);
    }

    if (wants_grad(out, {&q, &k, &v, &terms.query_bias, &terms.key_bias, &terms.value_bias})) {
        Tape::current()->record([qn = q.node_ptr(), kn = k.node_ptr(), vn = v.node_ptr(),
                                 an = terms.query_bias.node_ptr(), bn = terms.key_bias.node_ptr(),
                                 cn = terms.value_bias.node_ptr(), on = out.node_ptr(), weights, layout, kc] {
            if (on->grad.empty())
                return;
            const std::size_t L = layout.length, d = layout.channels;
            const double* A = an ? an->data.data() : nullptr;
            const double* B = bn ? bn->data.data() : nullptr;
            const double* C = cn ? cn->data.data() : nullptr;
            double* gA = an && an->requires_grad ? grad_of(*an).data() : nullptr;
            double* gB = bn && bn->requires_grad ? grad_of(*bn).data() : nullptr;
            double* gC = cn && cn->requires_grad ? grad_of(*cn).data() : nullptr;

            Gathered Q, K, V, G, dQ, dK, dV;
            std::vector<double> dw(L);
            for (std::size_t s = 0; s < layout.slices; ++s) {
                Q.gather(qn->data.data(), layout, s);
                K.gather(kn->data.data(), layout, s);
                V.gather(vn->data.data(), layout, s);
                G.gather(on->grad.data(), layout, s);
                dQ.buf.assign(L * d, 0.0);
                dK.buf.assign(L * d, 0.0);
                dV.buf.assign(L * d, 0.0);
                const double* W = weights->data() + s * L * L;
                for (std::size_t i = 0; i < L; ++i) {
                    const double* gi = &G.buf[i * d];
                    const double* qi = &Q.buf[i * d];
                    double weighted = 0.0;
                    for (std::size_t j = 0; j < L; ++j) {
                        const double wij = W[i * L + j];
                        const double* vj = &V.buf[j * d];
                        const std::size_t r = rel_index(i, j, kc);
                        double acc = 0.0;
                        for (std::size_t c = 0; c < d; ++c)
                            acc += gi[c] * vj[c];
                        if (C)
                            for (std::size_t c = 0; c < d; ++c)
                                acc += gi[c] * C[r * d + c];
                        dw[j] = acc;
                        weighted += wij * acc;
                        for (std::size_t c = 0; c < d; ++c)
                            dV.buf[j * d + c] += wij * gi[c];
                        if (gC)
                            for (std::size_t c = 0; c < d; ++c)
                                gC[r * d + c] += wij * gi[c];
                    }
                    for (std::size_t j = 0; j < L; ++j) {
                        const double dl = W[i * L + j] * (dw[j] - weighted);
                        if (dl == 0.0)
                            continue;
                        const double* kj = &K.buf[j * d];
                        const std::size_t r = rel_index(i, j, kc);
                        double* dqi = &dQ.buf[i * d];
                        double* dkj = &dK.buf[j * d];
                        for (std::size_t c = 0; c < d; ++c) {
                            dqi[c] += dl * kj[c];
                            dkj[c] += dl * qi[c];
                        }
                        if (A) {
                            for (std::size_t c = 0; c < d; ++c)
                                dqi[c] += dl * A[r * d + c];
                            if (gA)
                                for (std::size_t c = 0; c < d; ++c)
                                    gA[r * d + c] += dl * qi[c];
                        }
                        if (B) {
                            for (std::size_t c = 0; c < d; ++c)
                                dkj[c] += dl * B[r * d + c];
                            if (gB)
                                for (std::size_t c = 0; c < d; ++c)
                                    gB[r * d + c] += dl * kj[c];
                        }
                    }
                }
                if (qn->requires_grad)
                    dQ.scatter_add(grad_of(*qn).data(), layout, s);
                if (kn->requires_grad)
                    dK.scatter_add(grad_of(*kn).data(), layout, s);
                if (vn->requires_grad)
                    dV.scatter_add(grad_of(*vn).data(), layout, s);
            }
        });
    }
    return out;
}

} // namespace haaseg
