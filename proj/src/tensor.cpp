#include "tba/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tba/kernels.hpp"
#include "tba/rng.hpp"

namespace tba {

namespace ker = kernels;
using detail::Node;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

namespace {

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
}

void check_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

// Result node; parents/backprop dropped when no parent tracks gradients, so
// inference-only chains never build a graph.
Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(Node&)> backprop) {
    bool track = false;
    for (const Tensor& p : parents) track = track || p.requires_grad();
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = track;
    if (track) {
        for (const Tensor& p : parents) n->parents.push_back(p.node_ptr());
        n->backprop = std::move(backprop);
    }
    return Tensor::wrap(std::move(n));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    for (double v : data)
        if (!std::isfinite(v)) throw std::invalid_argument("from_data: non-finite value rejected");
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    if (!std::isfinite(v)) throw std::invalid_argument("scalar: non-finite value rejected");
    return Tensor(make_leaf(Shape{}, std::vector<double>{v}, requires_grad));
}

Tensor Tensor::gaussian(Rng& rng, Shape shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) data[i] = rng.normal();
    return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }
std::span<const double> Tensor::values() const { return node_->value; }
std::span<double> Tensor::values_mut() { return node_->value; }

std::span<const double> Tensor::grad() const {
    if (node_->grad.size() != node_->value.size()) return {};
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const {
    return Tensor(make_leaf(node_->shape, node_->value, false));
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
    check_defined("add", a);
    check_defined("add", b);
    if (a.shape() != b.shape()) shape_fail("add", a.shape(), b.shape());
    std::vector<double> out(a.size());
    ker::add(out.data(), a.values().data(), b.values().data(), out.size());
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        for (int i = 0; i < 2; ++i) {
            Node& p = *self.parents[i];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            ker::axpy(p.grad.data(), self.grad.data(), 1.0, p.grad.size());
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_defined("sub", a);
    check_defined("sub", b);
    if (a.shape() != b.shape()) shape_fail("sub", a.shape(), b.shape());
    std::vector<double> out(a.size());
    ker::sub(out.data(), a.values().data(), b.values().data(), out.size());
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            ker::axpy(pa.grad.data(), self.grad.data(), 1.0, pa.grad.size());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            ker::axpy(pb.grad.data(), self.grad.data(), -1.0, pb.grad.size());
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_defined("mul", a);
    check_defined("mul", b);
    if (a.shape() != b.shape()) shape_fail("mul", a.shape(), b.shape());
    std::vector<double> out(a.size());
    ker::mul(out.data(), a.values().data(), b.values().data(), out.size());
    return make_op(a.shape(), std::move(out), {a, b}, [](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (std::size_t i = 0; i < pa.grad.size(); ++i)
                pa.grad[i] += self.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (std::size_t i = 0; i < pb.grad.size(); ++i)
                pb.grad[i] += self.grad[i] * pa.value[i];
        }
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
    check_defined("scale", a);
    std::vector<double> out(a.size());
    ker::scale(out.data(), a.values().data(), c, out.size());
    return make_op(a.shape(), std::move(out), {a}, [c](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        ker::axpy(p.grad.data(), self.grad.data(), c, p.grad.size());
    });
}

Tensor relu(const Tensor& x) {
    check_defined("relu", x);
    std::vector<double> out(x.size());
    ker::relu(out.data(), x.values().data(), out.size());
    return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        ker::relu_grad_acc(p.grad.data(), p.value.data(), self.grad.data(), p.grad.size());
    });
}

Tensor softplus(const Tensor& x) {
    check_defined("softplus", x);
    std::vector<double> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = xv[i];
        if (v > 30.0)
            out[i] = v;
        else if (v < -30.0)
            out[i] = std::exp(v);
        else
            out[i] = std::log1p(std::exp(v));
    }
    return make_op(x.shape(), std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-p.value[i]));
            p.grad[i] += self.grad[i] * s;
        }
    });
}

Tensor sign(const Tensor& x) {
    check_defined("sign", x);
    std::vector<double> out(x.size());
    ker::sign(out.data(), x.values().data(), out.size());
    return Tensor::from_data(x.shape(), std::move(out), false);
}

Tensor clip(const Tensor& x, double lo, double hi) {
    check_defined("clip", x);
    if (!(lo <= hi)) throw std::invalid_argument("clip: lo > hi");
    std::vector<double> out(x.size());
    ker::clamp(out.data(), x.values().data(), lo, hi, out.size());
    return make_op(x.shape(), std::move(out), {x}, [lo, hi](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < p.grad.size(); ++i) {
            double v = p.value[i];
            if (v >= lo && v <= hi) p.grad[i] += self.grad[i];
        }
    });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
    check_defined("sum", x);
    double s = ker::sum(x.values().data(), x.size());
    return make_op(Shape{}, {s}, {x}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        double g = self.grad[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += g;
    });
}

Tensor sum_squares(const Tensor& x) {
    check_defined("sum_squares", x);
    double s = ker::dot(x.values().data(), x.values().data(), x.size());
    return make_op(Shape{}, {s}, {x}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        ker::axpy(p.grad.data(), p.value.data(), 2.0 * self.grad[0], p.grad.size());
    });
}

Tensor global_avg_pool(const Tensor& x) {
    check_defined("global_avg_pool", x);
    const Shape& s = x.shape();
    if (s.size() != 3) throw ShapeError("global_avg_pool: expected [C,H,W], got " + shape_str(s));
    const int C = s[0];
    const std::size_t hw = static_cast<std::size_t>(s[1]) * s[2];
    std::vector<double> out(C);
    for (int c = 0; c < C; ++c)
        out[c] = ker::sum(x.values().data() + c * hw, hw) / static_cast<double>(hw);
    return make_op(Shape{C}, std::move(out), {x}, [C, hw](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int c = 0; c < C; ++c) {
            double g = self.grad[c] / static_cast<double>(hw);
            double* dst = p.grad.data() + c * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] += g;
        }
    });
}

// ---- structure ----

Tensor concat(const Tensor& a, const Tensor& b) {
    check_defined("concat", a);
    check_defined("concat", b);
    if (a.shape().size() != 1 || b.shape().size() != 1)
        shape_fail("concat (rank-1 only)", a.shape(), b.shape());
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    int na = static_cast<int>(a.size());
    int nb = static_cast<int>(b.size());
    return make_op(Shape{na + nb}, std::move(out), {a, b}, [na, nb](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            ker::axpy(pa.grad.data(), self.grad.data(), 1.0, na);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            ker::axpy(pb.grad.data(), self.grad.data() + na, 1.0, nb);
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    check_defined("reshape", x);
    if (shape_numel(shape) != x.size()) shape_fail("reshape", x.shape(), shape);
    std::vector<double> out(x.values().begin(), x.values().end());
    return make_op(std::move(shape), std::move(out), {x}, [](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        ker::axpy(p.grad.data(), self.grad.data(), 1.0, p.grad.size());
    });
}

Tensor row_select(const Tensor& table, int row) {
    check_defined("row_select", table);
    const Shape& s = table.shape();
    if (s.size() != 2) throw ShapeError("row_select: expected [R,D], got " + shape_str(s));
    if (row < 0 || row >= s[0])
        throw std::out_of_range("row_select: row " + std::to_string(row) + " outside table with " +
                                std::to_string(s[0]) + " rows");
    const int D = s[1];
    std::vector<double> out(table.values().begin() + static_cast<std::size_t>(row) * D,
                            table.values().begin() + static_cast<std::size_t>(row + 1) * D);
    return make_op(Shape{D}, std::move(out), {table}, [row, D](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        ker::axpy(p.grad.data() + static_cast<std::size_t>(row) * D, self.grad.data(), 1.0, D);
    });
}

Tensor upsample2(const Tensor& x) {
    check_defined("upsample2", x);
    const Shape& s = x.shape();
    if (s.size() != 3) throw ShapeError("upsample2: expected [C,H,W], got " + shape_str(s));
    const int C = s[0], H = s[1], W = s[2];
    std::vector<double> out(static_cast<std::size_t>(C) * 2 * H * 2 * W);
    auto xv = x.values();
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double v = xv[(static_cast<std::size_t>(c) * H + h) * W + w];
                std::size_t base = (static_cast<std::size_t>(c) * 2 * H + 2 * h) * 2 * W + 2 * w;
                out[base] = v;
                out[base + 1] = v;
                out[base + 2 * W] = v;
                out[base + 2 * W + 1] = v;
            }
    return make_op(Shape{C, 2 * H, 2 * W}, std::move(out), {x}, [C, H, W](Node& self) {
        Node& p = *self.parents[0];
        p.ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    std::size_t base = (static_cast<std::size_t>(c) * 2 * H + 2 * h) * 2 * W + 2 * w;
                    p.grad[(static_cast<std::size_t>(c) * H + h) * W + w] +=
                        (self.grad[base] + self.grad[base + 1]) +
                        (self.grad[base + 2 * W] + self.grad[base + 2 * W + 1]);
                }
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    check_defined("add_channel_bias", x);
    check_defined("add_channel_bias", bias);
    const Shape& s = x.shape();
    if (s.size() != 3 || bias.shape() != Shape{s[0]})
        shape_fail("add_channel_bias", s, bias.shape());
    const int C = s[0];
    const std::size_t hw = static_cast<std::size_t>(s[1]) * s[2];
    std::vector<double> out(x.size());
    auto xv = x.values();
    auto bv = bias.values();
    for (int c = 0; c < C; ++c) {
        const double b = bv[c];
        const double* src = xv.data() + c * hw;
        double* dst = out.data() + c * hw;
        for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + b;
    }
    return make_op(s, std::move(out), {x, bias}, [C, hw](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.requires_grad) {
            px.ensure_grad();
            ker::axpy(px.grad.data(), self.grad.data(), 1.0, px.grad.size());
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (int c = 0; c < C; ++c)
                pb.grad[c] += ker::sum(self.grad.data() + c * hw, hw);
        }
    });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined("matmul", a);
    check_defined("matmul", b);
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2) throw ShapeError("matmul: lhs must be rank 2, got " + shape_str(sa));
    const bool vec = sb.size() == 1;
    if (!vec && sb.size() != 2) shape_fail("matmul", sa, sb);
    const int m = sa[0], k = sa[1];
    const int n = vec ? 1 : sb[1];
    if (sb[0] != k) shape_fail("matmul", sa, sb);
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    auto av = a.values();
    auto bv = b.values();
    for (int i = 0; i < m; ++i)
        for (int kk = 0; kk < k; ++kk)
            ker::axpy(out.data() + static_cast<std::size_t>(i) * n,
                      bv.data() + static_cast<std::size_t>(kk) * n, av[static_cast<std::size_t>(i) * k + kk], n);
    Shape os = vec ? Shape{m} : Shape{m, n};
    return make_op(std::move(os), std::move(out), {a, b}, [m, k, n](Node& self) {
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (int i = 0; i < m; ++i) {
            const double* g = self.grad.data() + static_cast<std::size_t>(i) * n;
            for (int kk = 0; kk < k; ++kk) {
                if (pa.requires_grad)
                    pa.grad[static_cast<std::size_t>(i) * k + kk] +=
                        ker::dot(g, pb.value.data() + static_cast<std::size_t>(kk) * n, n);
                if (pb.requires_grad)
                    ker::axpy(pb.grad.data() + static_cast<std::size_t>(kk) * n, g,
                              pa.value[static_cast<std::size_t>(i) * k + kk], n);
            }
        }
    });
}

namespace {

std::vector<double> pad_image(const double* x, int C, int H, int W, int pad) {
    const int Hp = H + 2 * pad, Wp = W + 2 * pad;
    std::vector<double> out(static_cast<std::size_t>(C) * Hp * Wp, 0.0);
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h) {
            const double* src = x + (static_cast<std::size_t>(c) * H + h) * W;
            double* dst = out.data() + (static_cast<std::size_t>(c) * Hp + h + pad) * Wp + pad;
            for (int w = 0; w < W; ++w) dst[w] = src[w];
        }
    return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    check_defined("conv2d", x);
    check_defined("conv2d", w);
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0]) shape_fail("conv2d", xs, ws);
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
    const int Cin = xs[0], H = xs[1], W = xs[2];
    const int Cout = ws[0], KH = ws[2], KW = ws[3];
    const int Hp = H + 2 * pad, Wp = W + 2 * pad;
    const int Ho = (Hp - KH) / stride + 1;
    const int Wo = (Wp - KW) / stride + 1;
    if (KH > Hp || KW > Wp || Ho < 1 || Wo < 1)
        throw ShapeError("conv2d: kernel " + shape_str(ws) + " larger than padded input " + shape_str(xs));
    if (bias.defined() && bias.shape() != Shape{Cout}) shape_fail("conv2d bias", ws, bias.shape());

    std::vector<double> xp = pad_image(x.values().data(), Cin, H, W, pad);
    std::vector<double> out(static_cast<std::size_t>(Cout) * Ho * Wo, 0.0);
    const std::size_t hw_out = static_cast<std::size_t>(Ho) * Wo;
    const std::size_t hw_pad = static_cast<std::size_t>(Hp) * Wp;
    if (bias.defined()) {
        auto bv = bias.values();
        for (int co = 0; co < Cout; ++co) {
            double* dst = out.data() + co * hw_out;
            for (std::size_t i = 0; i < hw_out; ++i) dst[i] = bv[co];
        }
    }
    auto wv = w.values();
    for (int co = 0; co < Cout; ++co)
        for (int ci = 0; ci < Cin; ++ci)
            for (int kh = 0; kh < KH; ++kh)
                for (int kw = 0; kw < KW; ++kw) {
                    const double wt = wv[((static_cast<std::size_t>(co) * Cin + ci) * KH + kh) * KW + kw];
                    for (int ho = 0; ho < Ho; ++ho) {
                        const double* src = xp.data() + ci * hw_pad +
                                            static_cast<std::size_t>(ho * stride + kh) * Wp + kw;
                        double* dst = out.data() + co * hw_out + static_cast<std::size_t>(ho) * Wo;
                        if (stride == 1) {
                            ker::axpy(dst, src, wt, Wo);
                        } else {
                            for (int wo = 0; wo < Wo; ++wo) dst[wo] += wt * src[static_cast<std::size_t>(wo) * stride];
                        }
                    }
                }

    std::vector<Tensor> parents = bias.defined() ? std::vector<Tensor>{x, w, bias}
                                                 : std::vector<Tensor>{x, w};
    const bool has_bias = bias.defined();
    auto back = [Cin, H, W, Cout, KH, KW, stride, pad, Ho, Wo, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        const int Hp = H + 2 * pad, Wp = W + 2 * pad;
        const std::size_t hw_out = static_cast<std::size_t>(Ho) * Wo;
        const std::size_t hw_pad = static_cast<std::size_t>(Hp) * Wp;
        std::vector<double> xp = pad_image(px.value.data(), Cin, H, W, pad);
        std::vector<double> dxp(static_cast<std::size_t>(Cin) * hw_pad, 0.0);
        if (pw.requires_grad) pw.ensure_grad();
        for (int co = 0; co < Cout; ++co)
            for (int ci = 0; ci < Cin; ++ci)
                for (int kh = 0; kh < KH; ++kh)
                    for (int kw = 0; kw < KW; ++kw) {
                        const std::size_t widx =
                            ((static_cast<std::size_t>(co) * Cin + ci) * KH + kh) * KW + kw;
                        const double wt = pw.value[widx];
                        double dw_acc = 0.0;
                        for (int ho = 0; ho < Ho; ++ho) {
                            const double* g = self.grad.data() + co * hw_out + static_cast<std::size_t>(ho) * Wo;
                            const std::size_t off =
                                ci * hw_pad + static_cast<std::size_t>(ho * stride + kh) * Wp + kw;
                            if (stride == 1) {
                                if (px.requires_grad) ker::axpy(dxp.data() + off, g, wt, Wo);
                                if (pw.requires_grad) dw_acc += ker::dot(g, xp.data() + off, Wo);
                            } else {
                                for (int wo = 0; wo < Wo; ++wo) {
                                    const std::size_t j = off + static_cast<std::size_t>(wo) * stride;
                                    if (px.requires_grad) dxp[j] += wt * g[wo];
                                    if (pw.requires_grad) dw_acc += g[wo] * xp[j];
                                }
                            }
                        }
                        if (pw.requires_grad) pw.grad[widx] += dw_acc;
                    }
        if (px.requires_grad) {
            px.ensure_grad();
            for (int c = 0; c < Cin; ++c)
                for (int h = 0; h < H; ++h)
                    ker::axpy(px.grad.data() + (static_cast<std::size_t>(c) * H + h) * W,
                              dxp.data() + (static_cast<std::size_t>(c) * Hp + h + pad) * Wp + pad, 1.0, W);
        }
        if (has_bias) {
            Node& pb = *self.parents[2];
            if (pb.requires_grad) {
                pb.ensure_grad();
                for (int co = 0; co < Cout; ++co)
                    pb.grad[co] += ker::sum(self.grad.data() + co * hw_out, hw_out);
            }
        }
    };
    return make_op(Shape{Cout, Ho, Wo}, std::move(out), std::move(parents), std::move(back));
}

// ---- reverse sweep ----

void backward(const Tensor& root) {
    check_defined("backward", root);
    Node* r = root.node();
    if (r->value.size() != 1)
        throw ShapeError("backward: root must be scalar, got " + shape_str(r->shape));
    if (!std::isfinite(r->value[0]))
        throw std::runtime_error("backward: non-finite root value");
    if (!r->requires_grad) return;

    // iterative postorder DFS over grad-tracking nodes
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(r, 0);
    seen.insert(r);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Node* n : order)
        if (n != r && n->backprop) n->ensure_grad();
    r->ensure_grad();
    r->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backprop) (*it)->backprop(**it);
}

void sgd_step(std::span<Tensor> params, double lr) {
    for (Tensor& p : params) {
        auto g = p.grad();
        if (g.empty()) continue;
        auto v = p.values_mut();
        ker::axpy(v.data(), g.data(), -lr, v.size());
        for (double x : v)
            if (!std::isfinite(x)) throw std::runtime_error("sgd_step: parameter went non-finite");
    }
}

}  // namespace tba
