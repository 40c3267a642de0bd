#include "ncs/autodiff.hpp"

#include <string>
#include <unordered_set>

namespace ncs::ad {

namespace {

thread_local bool g_grad_enabled = true;

std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Graph node for an op's result. Records parents only when gradients are on
// and some input needs one.
Tensor make(Matrix value, std::initializer_list<const Tensor*> inputs,
            std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        for (const Tensor* t : inputs)
            if (t->requires_grad()) node->requires_grad = true;
        if (node->requires_grad) {
            for (const Tensor* t : inputs) node->parents.push_back(t->node());
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

void same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shapes " + shape(a.value()) + " and " +
                         shape(b.value()) + " differ");
}

}  // namespace

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0)
        grad = g;
    else
        grad += g;
}

Matrix Tensor::grad() const {
    if (node_->grad.size() == 0) return Matrix::Zero(rows(), cols());
    return node_->grad;
}

Tensor constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Tensor(std::move(node));
}

Tensor parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Tensor(std::move(node));
}

void zero_grad(const std::vector<Tensor>& params) {
    for (const auto& p : params) p.node()->grad.resize(0, 0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
    if (x.cols() != weight.cols())
        throw ShapeError("linear: input " + shape(x.value()) + " does not match weight " +
                         shape(weight.value()));
    Matrix y(x.rows(), weight.rows());
    y.noalias() = x.value() * weight.value().transpose();
    if (bias) {
        if (bias->rows() != 1 || bias->cols() != weight.rows())
            throw ShapeError("linear: bias " + shape(bias->value()) + " does not match weight " +
                             shape(weight.value()));
        y.rowwise() += bias->value().row(0);
    }
    auto xn = x.node(), wn = weight.node();
    auto bn = bias ? bias->node() : nullptr;
    auto back = [xn, wn, bn](Node& self) {
        const Matrix& g = self.grad;
        if (xn->requires_grad) {
            Matrix gx(g.rows(), wn->value.cols());
            gx.noalias() = g * wn->value;
            xn->accumulate(gx);
        }
        if (wn->requires_grad) {
            Matrix gw(g.cols(), xn->value.cols());
            gw.noalias() = g.transpose() * xn->value;
            wn->accumulate(gw);
        }
        if (bn && bn->requires_grad) bn->accumulate(g.colwise().sum());
    };
    if (bias) return make(std::move(y), {&x, &weight, bias}, back);
    return make(std::move(y), {&x, &weight}, back);
}

Tensor relu(const Tensor& x) {
    auto xn = x.node();
    return make(x.value().cwiseMax(0.0), {&x}, [xn](Node& self) {
        xn->accumulate((xn->value.array() > 0.0).select(self.grad.array(), 0.0).matrix());
    });
}

Tensor sigmoid(const Tensor& x) {
    Matrix y = (1.0 + (-x.value().array()).exp()).inverse().matrix();
    auto xn = x.node();
    return make(std::move(y), {&x}, [xn](Node& self) {
        const auto s = self.value.array();
        xn->accumulate((self.grad.array() * s * (1.0 - s)).matrix());
    });
}

Tensor tanh(const Tensor& x) {
    auto xn = x.node();
    return make(x.value().array().tanh().matrix(), {&x}, [xn](Node& self) {
        const auto t = self.value.array();
        xn->accumulate((self.grad.array() * (1.0 - t * t)).matrix());
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "add");
    auto an = a.node(), bn = b.node();
    return make(a.value() + b.value(), {&a, &b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) bn->accumulate(self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "sub");
    auto an = a.node(), bn = b.node();
    return make(a.value() - b.value(), {&a, &b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad);
        if (bn->requires_grad) bn->accumulate(-self.grad);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    same_shape(a, b, "mul");
    auto an = a.node(), bn = b.node();
    return make(a.value().cwiseProduct(b.value()), {&a, &b}, [an, bn](Node& self) {
        if (an->requires_grad) an->accumulate(self.grad.cwiseProduct(bn->value));
        if (bn->requires_grad) bn->accumulate(self.grad.cwiseProduct(an->value));
    });
}

Tensor scale(const Tensor& x, double s) {
    auto xn = x.node();
    return make(x.value() * s, {&x}, [xn, s](Node& self) { xn->accumulate(self.grad * s); });
}

Tensor one_minus(const Tensor& x) {
    auto xn = x.node();
    return make((1.0 - x.value().array()).matrix(), {&x},
                [xn](Node& self) { xn->accumulate(-self.grad); });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: row counts " + shape(a.value()) + " and " +
                         shape(b.value()) + " differ");
    Matrix y(a.rows(), a.cols() + b.cols());
    y.leftCols(a.cols()) = a.value();
    y.rightCols(b.cols()) = b.value();
    auto an = a.node(), bn = b.node();
    return make(std::move(y), {&a, &b}, [an, bn](Node& self) {
        const auto ca = an->value.cols();
        if (an->requires_grad) an->accumulate(self.grad.leftCols(ca));
        if (bn->requires_grad) bn->accumulate(self.grad.rightCols(self.grad.cols() - ca));
    });
}

Tensor reshape(const Tensor& x, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != x.value().size())
        throw ShapeError("reshape: cannot view " + shape(x.value()) + " as " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    Matrix y = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
    auto xn = x.node();
    return make(std::move(y), {&x}, [xn](Node& self) {
        xn->accumulate(Eigen::Map<const Matrix>(self.grad.data(), xn->value.rows(), xn->value.cols()));
    });
}

Tensor detach(const Tensor& x) { return constant(x.value()); }

Tensor select_rows(const Tensor& x, const std::vector<int>& rows) {
    Matrix y(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= x.rows())
            throw ShapeError("select_rows: row " + std::to_string(rows[i]) + " out of range");
        y.row(static_cast<Eigen::Index>(i)) = x.value().row(rows[i]);
    }
    auto xn = x.node();
    return make(std::move(y), {&x}, [xn, rows](Node& self) {
        Matrix g = Matrix::Zero(xn->value.rows(), xn->value.cols());
        for (std::size_t i = 0; i < rows.size(); ++i)
            g.row(rows[i]) += self.grad.row(static_cast<Eigen::Index>(i));
        xn->accumulate(g);
    });
}

Tensor sum(const Tensor& x) {
    Matrix y(1, 1);
    y(0, 0) = x.value().sum();
    auto xn = x.node();
    return make(std::move(y), {&x}, [xn](Node& self) {
        xn->accumulate(Matrix::Constant(xn->value.rows(), xn->value.cols(), self.grad(0, 0)));
    });
}

Tensor custom(Matrix value, const std::vector<Tensor>& inputs, CustomBackward backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    if (g_grad_enabled) {
        for (const auto& t : inputs)
            if (t.requires_grad()) node->requires_grad = true;
        if (node->requires_grad) {
            for (const auto& t : inputs) node->parents.push_back(t.node());
            node->backward = [backward = std::move(backward)](Node& self) {
                std::vector<Matrix> slots(self.parents.size());
                std::vector<Matrix*> ptrs(self.parents.size(), nullptr);
                for (std::size_t i = 0; i < self.parents.size(); ++i) {
                    const auto& p = self.parents[i];
                    if (!p->requires_grad) continue;
                    slots[i] = Matrix::Zero(p->value.rows(), p->value.cols());
                    ptrs[i] = &slots[i];
                }
                backward(self.grad, ptrs);
                for (std::size_t i = 0; i < self.parents.size(); ++i)
                    if (ptrs[i]) self.parents[i]->accumulate(slots[i]);
            };
        }
    }
    return Tensor(std::move(node));
}

void backward(const Tensor& root, const Matrix* seed) {
    if (!root.requires_grad()) return;
    Node* r = root.node().get();
    if (seed) {
        if (seed->rows() != r->value.rows() || seed->cols() != r->value.cols())
            throw ShapeError("backward: seed shape does not match the root");
        r->accumulate(*seed);
    } else {
        r->accumulate(Matrix::Ones(r->value.rows(), r->value.cols()));
    }

    // Iterative post-order DFS; reversed it is a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{r, 0}};
    visited.insert(r);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && node->grad.size() > 0) node->backward(*node);
    }
}

}  // namespace ncs::ad
