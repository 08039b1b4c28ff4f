#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fttab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  // Allocated lazily on first accumulation.
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  void accumulate(std::span<const double> g);
  std::span<double> grad_buffer();
};

}  // namespace detail

// Dense row-major float64 tensor with reverse-mode gradient tracking.
//
// Tensor is a shared handle: copies alias the same storage. Use clone() for
// an independent leaf. Leaves with requires_grad() == false are frozen; the
// backward pass never writes into them.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const;
  bool has_grad() const;
  // Zero-filled view when no gradient has accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Runs reverse-mode differentiation from this scalar.
  void backward() const;

  Tensor clone(bool requires_grad = false) const;
  Tensor detach() const { return clone(false); }
  Tensor reshape(Shape shape) const;

  const char* op_name() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> node);

 private:
  std::shared_ptr<detail::Node> node_;
};

// Nodes of one backward pass in topological order (inputs before outputs).
class ComputationTape {
 public:
  static ComputationTape record(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return order_; }
  // Seeds d(root)/d(root) = 1 and walks the tape in reverse.
  void backward();

 private:
  std::vector<std::shared_ptr<detail::Node>> order_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Builds an op result. Records parents and the backward closure only when
// gradients are enabled and at least one parent requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward, const char* op);

}  // namespace fttab
