#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sfocda/errors.hpp"

namespace sfocda {

/// Dense NCHW shape. Rank-4 throughout; lower-rank data uses size-1 axes.
struct Shape4 {
  int64_t n = 1;
  int64_t c = 1;
  int64_t h = 1;
  int64_t w = 1;

  int64_t numel() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape4 shape;
  std::vector<float> value;
  std::vector<float> grad;  // empty until needed
  bool requires_grad = false;
  uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates d(loss)/d(parent) into each parent's grad, reading this
  // node's grad. Empty for leaves.
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

/// Float32 tensor with taped reverse-mode gradients. Copies share the
/// underlying node; use clone() for an independent leaf copy.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(const Shape4& s, bool requires_grad = false);
  static Tensor full(const Shape4& s, float v, bool requires_grad = false);
  static Tensor from_data(const Shape4& s, std::vector<float> data,
                          bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape4& shape() const;
  int64_t numel() const;

  const std::vector<float>& data() const;
  /// Mutable access to a leaf's values (parameters, data loading). Throws
  /// ContractError on non-leaf nodes: op outputs are immutable.
  std::vector<float>& mutable_data();

  /// Gradient buffer, or nullptr if never allocated.
  const std::vector<float>* grad() const;
  std::vector<float>& grad_buffer();
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool v);

  /// Value of a one-element tensor.
  float item() const;

  /// Deep copy as a fresh leaf (no graph history).
  Tensor clone() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
  std::shared_ptr<detail::Node> node_;
};

/// Create an op node. `parents` are recorded for the tape; `backward_fn`
/// must add this node's grad contribution into each parent that requires
/// grad. Modules outside the core use this to define their own ops.
Tensor make_op_node(const Shape4& out_shape, std::vector<float> value,
                    const std::vector<Tensor>& parents,
                    std::function<void(detail::Node&)> backward_fn);

// ---- ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, float s);
Tensor relu(const Tensor& a);

/// 2D convolution. input [N,Ci,H,W], weight [Co,Ci,kh,kw], bias [1,Co,1,1]
/// (pass an undefined Tensor for no bias). Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

/// Non-overlapping max pooling; H and W must be divisible by factor.
/// Ties route the gradient to the lowest linear index.
Tensor maxpool2d(const Tensor& input, int factor);

Tensor upsample_nearest(const Tensor& input, int factor);

/// Softmax over the channel axis, per (n, h, w) site.
Tensor softmax_channels(const Tensor& input);

/// Sum of all elements as a scalar node. Accumulates in f64, index order.
Tensor sum(const Tensor& a);

/// Backpropagate from a scalar. Non-scalar root throws ContractError.
/// Leaf gradients accumulate across repeated calls.
void backward(const Tensor& loss);

}  // namespace sfocda
