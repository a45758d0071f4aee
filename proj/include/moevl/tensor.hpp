#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "moevl/errors.hpp"
#include "moevl/rng.hpp"

namespace moevl {

// Dense row-major tensor of rank 1..3. All in-memory arithmetic is 64-bit;
// values are narrowed to 32-bit only at the checkpoint boundary.
using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
void validate_shape(const Shape& shape, const char* what);

class Tensor {
public:
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double value);
    static Tensor scalar(double value);
    static Tensor uniform(Shape s, Rng& rng, double lo, double hi);

    int rank() const { return static_cast<int>(shape.size()); }
    std::size_t size() const { return data.size(); }
    int rows() const;
    int cols() const;

    double& at(int i);
    double at(int i) const;
    double& at(int i, int j);
    double at(int i, int j) const;
    double& at(int i, int j, int c);
    double at(int i, int j, int c) const;

    // Value of a single-element tensor; contract error otherwise.
    double item() const;

    Tensor& set_requires_grad(bool value);
    // Gradient accumulated by Tape::backward. Shared between copies of the
    // tensor, so a parameter held by the model and the copy a closure captured
    // see the same buffer.
    const std::vector<double>& grad() const;
    bool has_grad() const { return grad_ != nullptr; }
    void zero_grad();

private:
    std::shared_ptr<std::vector<double>> grad_;

    // Tape bookkeeping, written through const references during forward
    // recording. Valid only while tape_id_ matches the active tape.
    mutable std::int64_t node_ = -1;
    mutable std::uint64_t tape_id_ = 0;

    friend class Tape;
};

// Reverse-mode tape. Ops record one node per output while a tape is active;
// backward() replays the nodes in reverse recording order exactly once.
// Recording and backward are single-threaded; there is at most one active
// tape per thread, installed via TapeGuard.
class Tape {
public:
    using BackwardFn =
        std::function<void(const std::vector<double>& out_grad, Tape& tape)>;

    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    std::uint64_t id() const { return id_; }
    std::size_t node_count() const { return nodes_.size(); }

    // Node id of t on this tape: an existing intermediate node, a freshly
    // registered leaf when t requires grad, or -1 for a constant.
    std::int64_t node_for(const Tensor& t);

    // Records an op output. Parents may contain -1 entries for constant
    // inputs; the backward fn must skip them.
    std::int64_t record(const Tensor& out, std::vector<std::int64_t> parents,
                        BackwardFn backward);

    // Adds g into the gradient slot of `node`; no-op when node < 0.
    void accumulate(std::int64_t node, const std::vector<double>& g);

    // Seeds d(loss)/d(loss) = 1, sweeps the tape once in reverse, adds the
    // resulting gradients into every reachable leaf's grad buffer, and
    // returns them keyed by leaf node id.
    std::map<std::int64_t, Tensor> backward(const Tensor& loss);

    static Tape* active();

private:
    struct Node {
        Shape shape;
        std::vector<std::int64_t> parents;
        BackwardFn backward;                          // null for leaves
        std::shared_ptr<std::vector<double>> sink;    // leaf grad buffer
        std::vector<double> grad;
    };

    std::int64_t register_leaf(const Tensor& t);

    std::vector<Node> nodes_;
    std::uint64_t id_;

    friend class TapeGuard;
};

// Installs a tape as the thread's active tape for the guard's lifetime.
class TapeGuard {
public:
    explicit TapeGuard(Tape& tape);
    ~TapeGuard();
    TapeGuard(const TapeGuard&) = delete;
    TapeGuard& operator=(const TapeGuard&) = delete;

private:
    Tape* previous_;
};

}  // namespace moevl
