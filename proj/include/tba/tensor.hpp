#pragma once

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tba {

class Rng;

using Shape = std::vector<int>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized on first use
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Pulls this node's grad into the parents' grads; empty for leaves.
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major float64 tensor participating in a define-by-run reverse-mode
// graph. Handles share the underlying node; detach() produces a fresh leaf.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    // Validates that every entry is finite.
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor gaussian(Rng& rng, Shape shape, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    bool requires_grad() const;
    double item() const;
    double at(std::size_t i) const;
    std::span<const double> values() const;
    // Direct write access to the stored values (leaf initialization and
    // optimizer steps; never call on a node that is part of a live graph).
    std::span<double> values_mut();
    std::span<const double> grad() const;
    void zero_grad();
    Tensor detach() const;

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> node_ptr() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n) { return Tensor(std::move(n)); }

  private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

// ---- differentiable operators ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
// a: [m,k]; b: [k,n] or [k]; result [m,n] or [m]
Tensor matmul(const Tensor& a, const Tensor& b);
// x: [Cin,H,W]; w: [Cout,Cin,KH,KW]; bias: [Cout] or undefined; zero padding
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// [C,H,W] -> [C]
Tensor global_avg_pool(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
// Elementwise sign with sign(0) = 0. Piecewise constant, so the result is
// detached from the graph (zero derivative almost everywhere).
Tensor sign(const Tensor& x);
// Clamp to [lo, hi]; gradient passes through on [lo, hi] (boundaries
// included) and is zero outside.
Tensor clip(const Tensor& x, double lo, double hi);
// rank-1 concatenation
Tensor concat(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);
// table: [R,D]; returns row as [D]
Tensor row_select(const Tensor& table, int row);
// [C,H,W] -> [C,2H,2W], nearest neighbor
Tensor upsample2(const Tensor& x);
// x: [C,H,W] plus per-channel bias [C]
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// Reverse-mode sweep from a scalar root; accumulates into leaf grads.
void backward(const Tensor& root);

// p -= lr * p.grad for every param; throws if any parameter goes non-finite.
void sgd_step(std::span<Tensor> params, double lr);

}  // namespace tba
