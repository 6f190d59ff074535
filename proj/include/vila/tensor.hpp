#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace vila {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense rank-<=2 real matrix with optional gradient storage and a backward
// closure. Row-major, double precision. Higher ranks are rejected at
// construction by design: every quantity in the model is a matrix or vector.
class Tensor {
public:
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
    std::vector<double> grad;  // sized rows*cols iff requires_grad
    bool requires_grad = false;

    // set by the op that produced this node; null for leaves
    std::function<void()> backward_fn;

    static TensorPtr create(int rows, int cols, bool requires_grad = false);
    static TensorPtr from(int rows, int cols, std::vector<double> vals,
                          bool requires_grad = false);
    static TensorPtr zeros(int rows, int cols, bool requires_grad = false);

    double& at(int i, int j) { return values[std::size_t(i) * cols + j]; }
    double at(int i, int j) const { return values[std::size_t(i) * cols + j]; }
    double& gat(int i, int j) { return grad[std::size_t(i) * cols + j]; }

    std::size_t size() const { return values.size(); }
    bool is_scalar() const { return rows == 1 && cols == 1; }
    void zero_grad();
    std::string shape_str() const;
};

// Ordered record of produced nodes; reverse iteration replays backward in
// exact reverse recording order (topological by construction).
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    // Backward closures capture their own output node, so each recorded node
    // holds a reference cycle with itself; the tape breaks the cycles when it
    // goes away.
    ~Tape() { clear(); }

    void record(const TensorPtr& t) { nodes_.push_back(t); }
    // Seeds grad(loss) = 1 and propagates. Repeated calls without zeroing
    // parameter grads accumulate.
    void backward(const TensorPtr& loss);
    void clear() {
        for (auto& n : nodes_) n->backward_fn = nullptr;
        nodes_.clear();
    }
    std::size_t size() const { return nodes_.size(); }

private:
    std::vector<TensorPtr> nodes_;
};

// --- differentiable operations ------------------------------------------

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr softmax_rows(Tape& tape, const TensorPtr& x);
TensorPtr layer_norm_rows(Tape& tape, const TensorPtr& x, double eps = 1e-5);
TensorPtr tanh_elem(Tape& tape, const TensorPtr& x);
TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Tape& tape, const TensorPtr& x, double s);
TensorPtr mul_elem(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mean_rows(Tape& tape, const TensorPtr& x);
TensorPtr transpose(Tape& tape, const TensorPtr& x);
TensorPtr row(Tape& tape, const TensorPtr& x, int i);
// builds a 1xN row vector from N scalar nodes
TensorPtr row_from_scalars(Tape& tape, const std::vector<TensorPtr>& xs);
TensorPtr sum_all(Tape& tape, const TensorPtr& x);
// cosine similarity between two 1xd rows; scalar output, differentiable in both
TensorPtr cosine_rows(Tape& tape, const TensorPtr& x, const TensorPtr& y);
// p: 1xC probability row (entries >= 0, sums to 1 within 1e-6); -log p[label]
// with the probability clamped at `floor` before the log
TensorPtr cross_entropy(Tape& tape, const TensorPtr& p, int label,
                        double floor = 1e-12);

}  // namespace vila
