#include "vila/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vila/kernels.hpp"

namespace vila {

TensorPtr Tensor::create(int rows, int cols, bool requires_grad) {
    if (rows < 1 || cols < 1)
        throw std::invalid_argument("Tensor: dimensions must be >= 1, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    auto t = std::make_shared<Tensor>();
    t->rows = rows;
    t->cols = cols;
    t->values.assign(std::size_t(rows) * cols, 0.0);
    t->requires_grad = requires_grad;
    if (requires_grad) t->grad.assign(t->values.size(), 0.0);
    return t;
}

TensorPtr Tensor::from(int rows, int cols, std::vector<double> vals, bool requires_grad) {
    auto t = create(rows, cols, requires_grad);
    if (vals.size() != t->values.size())
        throw std::invalid_argument("Tensor: value count " + std::to_string(vals.size()) +
                                    " does not match shape " + t->shape_str());
    t->values = std::move(vals);
    return t;
}

TensorPtr Tensor::zeros(int rows, int cols, bool requires_grad) {
    return create(rows, cols, requires_grad);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

std::string Tensor::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

void Tape::backward(const TensorPtr& loss) {
    if (!loss->is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got " + loss->shape_str());
    if (nodes_.empty())
        throw std::invalid_argument("backward: empty tape");
    if (!loss->requires_grad)
        throw std::invalid_argument("backward: loss does not require grad");
    loss->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

namespace {

// Sets up the output node for an op: grad storage is allocated whenever any
// parent requires grad, so upstream gradients have somewhere to land.
TensorPtr make_out(Tape& tape, int rows, int cols, bool needs_grad) {
    auto out = Tensor::create(rows, cols, needs_grad);
    tape.record(out);
    return out;
}

}  // namespace

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->cols != b->rows)
        throw std::invalid_argument("matmul: inner dimensions disagree: " +
                                    a->shape_str() + " vs " + b->shape_str());
    const int m = a->rows, k = a->cols, n = b->cols;
    bool ng = a->requires_grad || b->requires_grad;
    auto out = make_out(tape, m, n, ng);
    kernels::matmul_omp(a->values.data(), b->values.data(), out->values.data(), m, k, n);
    if (ng) {
        out->backward_fn = [a, b, out, m, k, n] {
            if (a->requires_grad)  // dA += dC * B^T
                kernels::matmul_acc_nt_omp(out->grad.data(), b->values.data(),
                                           a->grad.data(), m, n, k);
            if (b->requires_grad)  // dB += A^T * dC
                kernels::matmul_acc_tn_omp(a->values.data(), out->grad.data(),
                                           b->grad.data(), m, k, n);
        };
    }
    return out;
}

TensorPtr softmax_rows(Tape& tape, const TensorPtr& x) {
    const int m = x->rows, n = x->cols;
    auto out = make_out(tape, m, n, x->requires_grad);
    for (int i = 0; i < m; ++i) {
        const double* xi = &x->values[std::size_t(i) * n];
        double mx = *std::max_element(xi, xi + n);
        double sum = 0.0;
        double* oi = &out->values[std::size_t(i) * n];
        for (int j = 0; j < n; ++j) {
            oi[j] = std::exp(xi[j] - mx);
            sum += oi[j];
        }
        for (int j = 0; j < n; ++j) oi[j] /= sum;
    }
    if (x->requires_grad) {
        out->backward_fn = [x, out, m, n] {
            for (int i = 0; i < m; ++i) {
                const double* y = &out->values[std::size_t(i) * n];
                const double* dy = &out->grad[std::size_t(i) * n];
                double dot = 0.0;
                for (int j = 0; j < n; ++j) dot += dy[j] * y[j];
                for (int j = 0; j < n; ++j)
                    x->grad[std::size_t(i) * n + j] += y[j] * (dy[j] - dot);
            }
        };
    }
    return out;
}

TensorPtr layer_norm_rows(Tape& tape, const TensorPtr& x, double eps) {
    const int m = x->rows, n = x->cols;
    if (n < 2)
        throw std::invalid_argument("layer_norm_rows: need >= 2 columns, got " + x->shape_str());
    if (eps < 0.0)
        throw std::domain_error("layer_norm_rows: eps must be >= 0");
    auto out = make_out(tape, m, n, x->requires_grad);
    // cached per-row (mean, inv_std) for backward
    auto stats = std::make_shared<std::vector<double>>(std::size_t(m) * 2);
    for (int i = 0; i < m; ++i) {
        const double* xi = &x->values[std::size_t(i) * n];
        double mean = 0.0;
        for (int j = 0; j < n; ++j) mean += xi[j];
        mean /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= n;
        if (var + eps <= 0.0)
            throw std::domain_error("layer_norm_rows: zero variance row with eps = 0");
        double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[std::size_t(i) * 2] = mean;
        (*stats)[std::size_t(i) * 2 + 1] = inv_std;
        for (int j = 0; j < n; ++j)
            out->values[std::size_t(i) * n + j] = (xi[j] - mean) * inv_std;
    }
    if (x->requires_grad) {
        out->backward_fn = [x, out, stats, m, n] {
            for (int i = 0; i < m; ++i) {
                const double inv_std = (*stats)[std::size_t(i) * 2 + 1];
                const double* y = &out->values[std::size_t(i) * n];
                const double* dy = &out->grad[std::size_t(i) * n];
                double mean_dy = 0.0, mean_dyy = 0.0;
                for (int j = 0; j < n; ++j) {
                    mean_dy += dy[j];
                    mean_dyy += dy[j] * y[j];
                }
                mean_dy /= n;
                mean_dyy /= n;
                for (int j = 0; j < n; ++j)
                    x->grad[std::size_t(i) * n + j] +=
                        inv_std * (dy[j] - mean_dy - y[j] * mean_dyy);
            }
        };
    }
    return out;
}

TensorPtr tanh_elem(Tape& tape, const TensorPtr& x) {
    auto out = make_out(tape, x->rows, x->cols, x->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = std::tanh(x->values[i]);
    if (x->requires_grad) {
        out->backward_fn = [x, out] {
            for (std::size_t i = 0; i < x->size(); ++i)
                x->grad[i] += out->grad[i] * (1.0 - out->values[i] * out->values[i]);
        };
    }
    return out;
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rows != b->rows || a->cols != b->cols)
        throw std::invalid_argument("add: shape mismatch: " + a->shape_str() + " vs " +
                                    b->shape_str());
    bool ng = a->requires_grad || b->requires_grad;
    auto out = make_out(tape, a->rows, a->cols, ng);
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] + b->values[i];
    if (ng) {
        out->backward_fn = [a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
        };
    }
    return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& x, double s) {
    auto out = make_out(tape, x->rows, x->cols, x->requires_grad);
    for (std::size_t i = 0; i < x->size(); ++i) out->values[i] = x->values[i] * s;
    if (x->requires_grad) {
        out->backward_fn = [x, out, s] {
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[i] * s;
        };
    }
    return out;
}

TensorPtr mul_elem(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->rows != b->rows || a->cols != b->cols)
        throw std::invalid_argument("mul_elem: shape mismatch: " + a->shape_str() + " vs " +
                                    b->shape_str());
    bool ng = a->requires_grad || b->requires_grad;
    auto out = make_out(tape, a->rows, a->cols, ng);
    for (std::size_t i = 0; i < a->size(); ++i) out->values[i] = a->values[i] * b->values[i];
    if (ng) {
        out->backward_fn = [a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->size(); ++i)
                    a->grad[i] += out->grad[i] * b->values[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i)
                    b->grad[i] += out->grad[i] * a->values[i];
        };
    }
    return out;
}

TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->cols != b->cols)
        throw std::invalid_argument("concat_rows: column mismatch: " + a->shape_str() +
                                    " vs " + b->shape_str());
    bool ng = a->requires_grad || b->requires_grad;
    auto out = make_out(tape, a->rows + b->rows, a->cols, ng);
    std::copy(a->values.begin(), a->values.end(), out->values.begin());
    std::copy(b->values.begin(), b->values.end(), out->values.begin() + a->size());
    if (ng) {
        out->backward_fn = [a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i)
                    b->grad[i] += out->grad[a->size() + i];
        };
    }
    return out;
}

TensorPtr mean_rows(Tape& tape, const TensorPtr& x) {
    const int m = x->rows, n = x->cols;
    auto out = make_out(tape, 1, n, x->requires_grad);
    for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += x->values[std::size_t(i) * n + j];
        out->values[j] = s / m;
    }
    if (x->requires_grad) {
        out->backward_fn = [x, out, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    x->grad[std::size_t(i) * n + j] += out->grad[j] / m;
        };
    }
    return out;
}

TensorPtr transpose(Tape& tape, const TensorPtr& x) {
    const int m = x->rows, n = x->cols;
    auto out = make_out(tape, n, m, x->requires_grad);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            out->values[std::size_t(j) * m + i] = x->values[std::size_t(i) * n + j];
    if (x->requires_grad) {
        out->backward_fn = [x, out, m, n] {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                    x->grad[std::size_t(i) * n + j] += out->grad[std::size_t(j) * m + i];
        };
    }
    return out;
}

TensorPtr row(Tape& tape, const TensorPtr& x, int i) {
    if (i < 0 || i >= x->rows)
        throw std::invalid_argument("row: index " + std::to_string(i) + " out of range for " +
                                    x->shape_str());
    const int n = x->cols;
    auto out = make_out(tape, 1, n, x->requires_grad);
    std::copy(x->values.begin() + std::size_t(i) * n,
              x->values.begin() + std::size_t(i + 1) * n, out->values.begin());
    if (x->requires_grad) {
        out->backward_fn = [x, out, i, n] {
            for (int j = 0; j < n; ++j) x->grad[std::size_t(i) * n + j] += out->grad[j];
        };
    }
    return out;
}

TensorPtr row_from_scalars(Tape& tape, const std::vector<TensorPtr>& xs) {
    if (xs.empty()) throw std::invalid_argument("row_from_scalars: empty input");
    bool ng = false;
    for (const auto& x : xs) {
        if (!x->is_scalar())
            throw std::invalid_argument("row_from_scalars: non-scalar input " + x->shape_str());
        ng = ng || x->requires_grad;
    }
    auto out = make_out(tape, 1, int(xs.size()), ng);
    for (std::size_t j = 0; j < xs.size(); ++j) out->values[j] = xs[j]->values[0];
    if (ng) {
        auto parents = xs;
        out->backward_fn = [parents, out] {
            for (std::size_t j = 0; j < parents.size(); ++j)
                if (parents[j]->requires_grad) parents[j]->grad[0] += out->grad[j];
        };
    }
    return out;
}

TensorPtr sum_all(Tape& tape, const TensorPtr& x) {
    auto out = make_out(tape, 1, 1, x->requires_grad);
    double s = 0.0;
    for (double v : x->values) s += v;
    out->values[0] = s;
    if (x->requires_grad) {
        out->backward_fn = [x, out] {
            for (std::size_t i = 0; i < x->size(); ++i) x->grad[i] += out->grad[0];
        };
    }
    return out;
}

TensorPtr cosine_rows(Tape& tape, const TensorPtr& x, const TensorPtr& y) {
    if (x->rows != 1 || y->rows != 1 || x->cols != y->cols)
        throw std::invalid_argument("cosine_rows: expected matching 1xd rows, got " +
                                    x->shape_str() + " and " + y->shape_str());
    const int n = x->cols;
    double dot = 0.0, nx2 = 0.0, ny2 = 0.0;
    for (int j = 0; j < n; ++j) {
        dot += x->values[j] * y->values[j];
        nx2 += x->values[j] * x->values[j];
        ny2 += y->values[j] * y->values[j];
    }
    if (nx2 == 0.0 || ny2 == 0.0)
        throw std::domain_error("cosine_rows: zero-norm input");
    const double nx = std::sqrt(nx2), ny = std::sqrt(ny2);
    const double cosv = dot / (nx * ny);
    bool ng = x->requires_grad || y->requires_grad;
    auto out = make_out(tape, 1, 1, ng);
    out->values[0] = cosv;
    if (ng) {
        out->backward_fn = [x, y, out, n, nx, ny, cosv] {
            const double g = out->grad[0];
            for (int j = 0; j < n; ++j) {
                if (x->requires_grad)
                    x->grad[j] += g * (y->values[j] / (nx * ny) - cosv * x->values[j] / (nx * nx));
                if (y->requires_grad)
                    y->grad[j] += g * (x->values[j] / (nx * ny) - cosv * y->values[j] / (ny * ny));
            }
        };
    }
    return out;
}

TensorPtr cross_entropy(Tape& tape, const TensorPtr& p, int label, double floor) {
    if (p->rows != 1)
        throw std::invalid_argument("cross_entropy: expected 1xC probability row, got " +
                                    p->shape_str());
    const int c = p->cols;
    if (label < 0 || label >= c)
        throw std::invalid_argument("cross_entropy: label " + std::to_string(label) +
                                    " out of range for C=" + std::to_string(c));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) {
        if (p->values[j] < -1e-9)
            throw std::domain_error("cross_entropy: negative probability entry");
        sum += p->values[j];
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::domain_error("cross_entropy: probabilities sum to " + std::to_string(sum));
    const double pl = std::max(p->values[label], floor);
    auto out = make_out(tape, 1, 1, p->requires_grad);
    out->values[0] = -std::log(pl);
    if (p->requires_grad) {
        out->backward_fn = [p, out, label, pl] {
            p->grad[label] += out->grad[0] * (-1.0 / pl);
        };
    }
    return out;
}

}  // namespace vila
