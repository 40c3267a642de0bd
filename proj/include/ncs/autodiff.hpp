#pragma once

#include "ncs/common.hpp"

#include <functional>
#include <memory>
#include <vector>

// Small reverse-mode autodiff over row-major matrices. Rows are batch items.
namespace ncs::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows in
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this->grad and accumulates into the parents.
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g);
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    bool defined() const { return node_ != nullptr; }
    const Matrix& value() const { return node_->value; }
    Matrix& value() { return node_->value; }
    // Zero matrix of the value's shape when nothing has flowed in.
    Matrix grad() const;
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

Tensor constant(Matrix value);
// Leaf whose gradient is kept between backward passes until zero_grad.
Tensor parameter(Matrix value);
void zero_grad(const std::vector<Tensor>& params);

bool grad_enabled();
// While alive, new ops record no graph.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// x (B x in) times W^T (W is out x in), plus an optional 1 x out bias.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, double s);
Tensor one_minus(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Row-major reinterpretation.
Tensor reshape(const Tensor& x, Eigen::Index rows, Eigen::Index cols);
Tensor detach(const Tensor& x);
Tensor select_rows(const Tensor& x, const std::vector<int>& rows);
Tensor sum(const Tensor& x);  // 1 x 1

// Op with a hand-written backward. backward receives the output gradient and
// one gradient slot per input, pre-sized to the input's shape and zeroed; slots
// of inputs that need no gradient are null.
using CustomBackward = std::function<void(const Matrix& grad_out, std::vector<Matrix*>& grad_in)>;
Tensor custom(Matrix value, const std::vector<Tensor>& inputs, CustomBackward backward);

// Seeds root with ones (or *seed) and runs the graph in reverse topological order.
void backward(const Tensor& root, const Matrix* seed = nullptr);

}  // namespace ncs::ad
