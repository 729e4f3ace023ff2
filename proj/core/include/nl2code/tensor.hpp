#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace nl2code {

class Tensor;

/// One node of the reverse-mode computation graph. Nodes are created by the
/// ops in ops.hpp whenever gradient recording is on and an input requires
/// grad; they form a DAG rooted at the forward result. backward() walks the
/// DAG once in reverse topological order and then severs the links, so the
/// graph of a forward pass lives exactly until its backward pass.
struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty = absent
  bool requires_grad = false;

  // graph linkage (empty for leaves)
  const char* op = "leaf";
  std::vector<Tensor> parents;
  std::function<void(TensorImpl&)> backward_fn;
};

/// Value-semantics handle onto a shared TensorImpl. Copies alias the same
/// storage and gradient, which is what parameters and graph edges need.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const std::vector<int>& shape);
  static Tensor full(const std::vector<int>& shape, double fill);
  static Tensor from(const std::vector<int>& shape, std::vector<double> values);
  static Tensor scalar(double v);

  bool defined() const { return impl_ != nullptr; }

  const std::vector<int>& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int rows() const;
  int cols() const;
  std::size_t numel() const { return impl_->values.size(); }
  bool is_scalar() const;

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }
  double& at(int i, int j);
  double at(int i, int j) const;
  double value() const;  // scalar only

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<double>& grad();              // allocates zeros on first touch
  const std::vector<double>& grad() const;  // requires has_grad()
  void clear_grad() { impl_->grad.clear(); }

  bool has_node() const { return impl_ && impl_->backward_fn != nullptr; }
  const char* op() const { return impl_->op; }

  TensorImpl& impl() { return *impl_; }
  const TensorImpl& impl() const { return *impl_; }
  TensorImpl* impl_ptr() const { return impl_.get(); }

  std::string shape_str() const;

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;

  friend Tensor make_op_result(const char* op, std::vector<int> shape,
                               std::vector<double> values,
                               std::vector<Tensor> parents,
                               std::function<void(TensorImpl&)> backward_fn);
};

/// Builds an op result, wiring it into the graph when recording is enabled
/// and some parent requires grad.
Tensor make_op_result(const char* op, std::vector<int> shape,
                      std::vector<double> values, std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn);

/// Accumulates `delta` into t's grad buffer, allocating zeros first if absent.
void accumulate_grad(Tensor& t, const std::vector<double>& delta);

/// Reverse-mode accumulation from a scalar loss. Populates grad on every
/// reachable tensor that requires grad, accumulating additively when a tensor
/// is used more than once, then frees the graph.
void backward(Tensor& loss);
inline void backward(Tensor&& loss) { backward(loss); }

/// Gradient recording switch. Ops record graph nodes only while enabled;
/// evaluation paths wrap themselves in a NoGradGuard.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace nl2code
