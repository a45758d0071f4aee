#include "moevl/tensor.hpp"

#include <atomic>
#include <sstream>
#include <utility>

namespace moevl {

namespace {

std::atomic<std::uint64_t> g_next_tape_id{1};
thread_local Tape* g_active_tape = nullptr;

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int extent : shape) n *= static_cast<std::size_t>(extent);
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void validate_shape(const Shape& shape, const char* what) {
    if (shape.empty() || shape.size() > 3) {
        throw ShapeError(std::string(what) + ": rank must be 1..3, got " +
                         shape_str(shape));
    }
    for (int extent : shape) {
        if (extent <= 0) {
            throw ShapeError(std::string(what) + ": extents must be positive, got " +
                             shape_str(shape));
        }
    }
}

Tensor::Tensor(Shape s, std::vector<double> values)
    : shape(std::move(s)), data(std::move(values)) {
    validate_shape(shape, "tensor");
    if (data.size() != numel(shape)) {
        throw ShapeError("tensor: " + std::to_string(data.size()) +
                         " values do not fill shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape s) {
    validate_shape(s, "zeros");
    std::vector<double> values(numel(s), 0.0);
    return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::full(Shape s, double value) {
    validate_shape(s, "full");
    std::vector<double> values(numel(s), value);
    return Tensor(std::move(s), std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::uniform(Shape s, Rng& rng, double lo, double hi) {
    validate_shape(s, "uniform");
    std::vector<double> values(numel(s));
    for (double& v : values) v = rng.next_uniform(lo, hi);
    return Tensor(std::move(s), std::move(values));
}

int Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows: tensor is not rank 2: " + shape_str(shape));
    return shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols: tensor is not rank 2: " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(int i) {
    if (rank() != 1) throw ShapeError("at(i): tensor is not rank 1: " + shape_str(shape));
    if (i < 0 || i >= shape[0]) throw IndexError("at(i): index " + std::to_string(i) + " outside " + shape_str(shape));
    return data[static_cast<std::size_t>(i)];
}

double Tensor::at(int i) const { return const_cast<Tensor*>(this)->at(i); }

double& Tensor::at(int i, int j) {
    if (rank() != 2) throw ShapeError("at(i,j): tensor is not rank 2: " + shape_str(shape));
    if (i < 0 || i >= shape[0] || j < 0 || j >= shape[1]) {
        throw IndexError("at(i,j): index (" + std::to_string(i) + "," + std::to_string(j) +
                         ") outside " + shape_str(shape));
    }
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}

double Tensor::at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }

double& Tensor::at(int i, int j, int c) {
    if (rank() != 3) throw ShapeError("at(i,j,c): tensor is not rank 3: " + shape_str(shape));
    if (i < 0 || i >= shape[0] || j < 0 || j >= shape[1] || c < 0 || c >= shape[2]) {
        throw IndexError("at(i,j,c): index (" + std::to_string(i) + "," + std::to_string(j) +
                         "," + std::to_string(c) + ") outside " + shape_str(shape));
    }
    return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + c];
}

double Tensor::at(int i, int j, int c) const {
    return const_cast<Tensor*>(this)->at(i, j, c);
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item: tensor " + shape_str(shape) + " is not a single value");
    }
    return data[0];
}

Tensor& Tensor::set_requires_grad(bool value) {
    requires_grad = value;
    if (value && !grad_) {
        grad_ = std::make_shared<std::vector<double>>(size(), 0.0);
    }
    return *this;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) throw ContractError("grad: tensor has no gradient buffer");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tape::Tape() : id_(g_next_tape_id.fetch_add(1)) {}

Tape* Tape::active() { return g_active_tape; }

std::int64_t Tape::register_leaf(const Tensor& t) {
    if (!t.grad_) {
        // set_requires_grad(true) was bypassed; allocate through the mutable
        // shared pointer so later copies still share the buffer.
        const_cast<Tensor&>(t).grad_ =
            std::make_shared<std::vector<double>>(t.size(), 0.0);
    }
    Node node;
    node.shape = t.shape;
    node.sink = t.grad_;
    nodes_.push_back(std::move(node));
    auto id = static_cast<std::int64_t>(nodes_.size() - 1);
    t.node_ = id;
    t.tape_id_ = id_;
    return id;
}

std::int64_t Tape::node_for(const Tensor& t) {
    if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
    if (t.requires_grad) return register_leaf(t);
    return -1;
}

std::int64_t Tape::record(const Tensor& out, std::vector<std::int64_t> parents,
                          BackwardFn backward) {
    Node node;
    node.shape = out.shape;
    node.parents = std::move(parents);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    auto id = static_cast<std::int64_t>(nodes_.size() - 1);
    out.node_ = id;
    out.tape_id_ = id_;
    return id;
}

void Tape::accumulate(std::int64_t node, const std::vector<double>& g) {
    if (node < 0) return;
    Node& n = nodes_[static_cast<std::size_t>(node)];
    if (n.grad.empty()) n.grad.assign(numel(n.shape), 0.0);
    if (g.size() != n.grad.size()) {
        throw ContractError("accumulate: gradient size " + std::to_string(g.size()) +
                            " does not match node shape " + shape_str(n.shape));
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

std::map<std::int64_t, Tensor> Tape::backward(const Tensor& loss) {
    if (loss.tape_id_ != id_ || loss.node_ < 0) {
        throw ContractError("backward: loss was not recorded on the active tape");
    }
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be a single value, got " +
                            shape_str(loss.shape));
    }

    nodes_[static_cast<std::size_t>(loss.node_)].grad.assign(1, 1.0);

    std::map<std::int64_t, Tensor> leaf_grads;
    for (std::int64_t i = loss.node_; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.empty()) continue;  // not on a path to the loss
        if (n.backward) {
            n.backward(n.grad, *this);
        }
        if (n.sink) {
            for (std::size_t j = 0; j < n.grad.size(); ++j) (*n.sink)[j] += n.grad[j];
            leaf_grads.emplace(i, Tensor(n.shape, n.grad));
        }
    }
    return leaf_grads;
}

TapeGuard::TapeGuard(Tape& tape) : previous_(g_active_tape) {
    g_active_tape = &tape;
}

TapeGuard::~TapeGuard() { g_active_tape = previous_; }

}  // namespace moevl
