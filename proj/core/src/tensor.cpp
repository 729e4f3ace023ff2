#include "nl2code/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace nl2code {

namespace {
bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape dims must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->values.assign(shape_numel(shape), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(const std::vector<int>& shape, double fill) {
  Tensor t = zeros(shape);
  std::fill(t.values().begin(), t.values().end(), fill);
  return t;
}

Tensor Tensor::from(const std::vector<int>& shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("tensor value count does not match shape");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->values = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

int Tensor::rows() const {
  if (ndim() == 1) return 1;
  if (ndim() == 2) return impl_->shape[0];
  throw std::logic_error("rows(): tensor is not 1-d or 2-d");
}

int Tensor::cols() const {
  if (ndim() == 1) return impl_->shape[0];
  if (ndim() == 2) return impl_->shape[1];
  throw std::logic_error("cols(): tensor is not 1-d or 2-d");
}

bool Tensor::is_scalar() const { return numel() == 1; }

double& Tensor::at(int i, int j) { return impl_->values[static_cast<std::size_t>(i) * cols() + j]; }
double Tensor::at(int i, int j) const {
  return impl_->values[static_cast<std::size_t>(i) * cols() + j];
}

double Tensor::value() const {
  if (!is_scalar()) throw std::logic_error("value(): tensor is not scalar");
  return impl_->values[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(numel(), 0.0);
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) throw std::logic_error("grad(): no gradient present");
  return impl_->grad;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < impl_->shape.size(); ++i) {
    if (i) os << 'x';
    os << impl_->shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_op_result(const char* op, std::vector<int> shape,
                      std::vector<double> values, std::vector<Tensor> parents,
                      std::function<void(TensorImpl&)> backward_fn) {
  Tensor out = Tensor::from(std::move(shape), std::move(values));
  bool any_grad = false;
  for (const Tensor& p : parents) any_grad = any_grad || p.requires_grad();
  if (g_grad_enabled && any_grad) {
    out.impl().requires_grad = true;
    out.impl().op = op;
    out.impl().parents = std::move(parents);
    out.impl().backward_fn = std::move(backward_fn);
  }
  return out;
}

void accumulate_grad(Tensor& t, const std::vector<double>& delta) {
  auto& g = t.grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

namespace {

// iterative post-order DFS; soft-decoding graphs get deep enough that
// recursion is not worth the risk
std::vector<TensorImpl*> topo_order(TensorImpl* root) {
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      TensorImpl* child = node->parents[next_child++].impl_ptr();
      if (child && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

void backward(Tensor& loss) {
  if (!loss.is_scalar()) {
    throw std::invalid_argument("backward: loss must be scalar, got shape " + loss.shape_str());
  }
  std::vector<TensorImpl*> order = topo_order(loss.impl_ptr());

  loss.grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // free the graph; leaves keep their accumulated grads
  for (TensorImpl* node : order) {
    node->parents.clear();
    node->backward_fn = nullptr;
  }
}

}  // namespace nl2code
