#include "qase/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "qase/kernels.hpp"

namespace qase {

namespace {
constexpr double kLogClamp = 1e-12;
constexpr double kLnEps = 1e-5;  // layer norm variance epsilon
}  // namespace

std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) os << "x";
        os << t.shape[i];
    }
    os << ")";
    return os.str();
}

Tape::Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
const Tape::Node& Tape::node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!backward_done_) throw std::runtime_error("autodiff: grad() before backward()");
    if (!n.requires_grad) throw std::runtime_error("autodiff: grad() on non-tracked node");
    return n.grad;
}

Tape::Var Tape::leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.requires_grad = t.requires_grad;
    n.value = std::move(t);
    return push(std::move(n));
}

Tape::Var Tape::constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
}

Tape::Var Tape::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(A) + " x " +
                                    shape_str(B));
    const std::size_t m = A.shape[0], k = A.shape[1], nn = B.shape[1];
    Tensor C = Tensor::zeros({m, nn});
    const auto& K = kernels::active();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = C.row_ptr(i);
        const double* arow = A.row_ptr(i);
        for (std::size_t p = 0; p < k; ++p) K.axpy(arow[p], B.row_ptr(p), crow, nn);
    }
    Node n;
    n.op = Op::MatMul;
    n.in = {a.id, b.id};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("add: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
    Tensor C = Tensor::zeros(A.shape);
    kernels::active().add(A.data.data(), B.data.data(), C.data.data(), A.numel());
    Node n;
    n.op = Op::Add;
    n.in = {a.id, b.id};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::mul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (!A.same_shape(B))
        throw std::invalid_argument("mul: shape mismatch " + shape_str(A) + " vs " + shape_str(B));
    Tensor C = Tensor::zeros(A.shape);
    kernels::active().mul(A.data.data(), B.data.data(), C.data.data(), A.numel());
    Node n;
    n.op = Op::Mul;
    n.in = {a.id, b.id};
    n.requires_grad = node(a).requires_grad || node(b).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::add_row(Var a, Var bias) {
    const Tensor& A = value(a);
    const Tensor& B = value(bias);
    if (A.shape.size() != 2 || B.numel() != A.shape[1])
        throw std::invalid_argument("add_row: shape mismatch " + shape_str(A) + " + " +
                                    shape_str(B));
    Tensor C = A;
    C.requires_grad = false;
    const auto& K = kernels::active();
    for (std::size_t i = 0; i < A.shape[0]; ++i)
        K.add(A.row_ptr(i), B.data.data(), C.row_ptr(i), A.shape[1]);
    Node n;
    n.op = Op::AddRow;
    n.in = {a.id, bias.id};
    n.requires_grad = node(a).requires_grad || node(bias).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(A.shape);
    kernels::active().scale(c, A.data.data(), C.data.data(), A.numel());
    Node n;
    n.op = Op::Scale;
    n.in = {a.id};
    n.c = c;
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::relu(Var a) {
    const Tensor& A = value(a);
    Tensor C = Tensor::zeros(A.shape);
    kernels::active().relu(A.data.data(), C.data.data(), A.numel());
    Node n;
    n.op = Op::Relu;
    n.in = {a.id};
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::softmax_rows(Var a) {
    const Tensor& A = value(a);
    const std::size_t m = A.rows(), w = A.cols();
    Tensor C = Tensor::zeros(A.shape);
    const auto& K = kernels::active();
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = A.data.data() + i * w;
        double* y = C.data.data() + i * w;
        const double mx = K.max(x, w);
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < w; ++j) y[j] *= inv;
    }
    Node n;
    n.op = Op::Softmax;
    n.in = {a.id};
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::cross_entropy(Var probs, const std::vector<int>& targets) {
    const Tensor& P = value(probs);
    const std::size_t m = P.rows(), w = P.cols();
    if (targets.size() != m)
        throw std::invalid_argument("cross_entropy: targets length != rows");
    double loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const int t = targets[i];
        if (t < 0 || static_cast<std::size_t>(t) >= w)
            throw std::invalid_argument("cross_entropy: target index out of range");
        loss -= std::log(std::max(P.at(i, static_cast<std::size_t>(t)), kLogClamp));
    }
    loss /= static_cast<double>(m);
    Node n;
    n.op = Op::CrossEntropy;
    n.in = {probs.id};
    n.ids = targets;
    n.requires_grad = node(probs).requires_grad;
    n.value = Tensor::scalar(loss);
    return push(std::move(n));
}

Tape::Var Tape::sum(Var a) {
    const Tensor& A = value(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    Node n;
    n.op = Op::Sum;
    n.in = {a.id};
    n.requires_grad = node(a).requires_grad;
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Tape::Var Tape::mean_rows(Var a) {
    const Tensor& A = value(a);
    const std::size_t m = A.rows(), w = A.cols();
    Tensor C = Tensor::zeros({1, w});
    const auto& K = kernels::active();
    for (std::size_t i = 0; i < m; ++i) K.axpy(1.0, A.row_ptr(i), C.data.data(), w);
    K.scale(1.0 / static_cast<double>(m), C.data.data(), C.data.data(), w);
    Node n;
    n.op = Op::MeanRows;
    n.in = {a.id};
    n.a = m;
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::replicate_row(Var a, std::size_t m) {
    const Tensor& A = value(a);
    if (A.rows() != 1) throw std::invalid_argument("replicate_row: input must have one row");
    const std::size_t w = A.cols();
    Tensor C = Tensor::zeros({m, w});
    for (std::size_t i = 0; i < m; ++i)
        std::copy(A.data.begin(), A.data.end(), C.data.begin() + i * w);
    Node n;
    n.op = Op::ReplicateRow;
    n.in = {a.id};
    n.a = m;
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
    const Tensor& A = value(a);
    if (r0 >= r1 || r1 > A.rows()) throw std::invalid_argument("slice_rows: bad range");
    const std::size_t w = A.cols();
    Tensor C = Tensor::zeros({r1 - r0, w});
    std::copy(A.data.begin() + r0 * w, A.data.begin() + r1 * w, C.data.begin());
    Node n;
    n.op = Op::SliceRows;
    n.in = {a.id};
    n.a = r0;
    n.b = r1;
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
    const Tensor& A = value(a);
    if (c0 >= c1 || c1 > A.cols()) throw std::invalid_argument("slice_cols: bad range");
    const std::size_t m = A.rows();
    Tensor C = Tensor::zeros({m, c1 - c0});
    for (std::size_t i = 0; i < m; ++i)
        std::copy(A.row_ptr(i) + c0, A.row_ptr(i) + c1, C.row_ptr(i));
    Node n;
    n.op = Op::SliceCols;
    n.in = {a.id};
    n.a = c0;
    n.b = c1;
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const std::size_t m = value(parts[0]).rows();
    std::size_t w = 0;
    for (Var p : parts) {
        if (value(p).rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        w += value(p).cols();
    }
    Tensor C = Tensor::zeros({m, w});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& P = value(p);
        for (std::size_t i = 0; i < m; ++i)
            std::copy(P.row_ptr(i), P.row_ptr(i) + P.cols(), C.row_ptr(i) + off);
        off += P.cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    for (Var p : parts) {
        n.in.push_back(p.id);
        n.requires_grad = n.requires_grad || node(p).requires_grad;
    }
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::transpose(Var a) {
    const Tensor& A = value(a);
    const std::size_t m = A.rows(), w = A.cols();
    Tensor C = Tensor::zeros({w, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) C.at(j, i) = A.at(i, j);
    Node n;
    n.op = Op::Transpose;
    n.in = {a.id};
    n.requires_grad = node(a).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::gather_rows(Var table, std::vector<int> ids) {
    const Tensor& T = value(table);
    const std::size_t w = T.cols();
    Tensor C = Tensor::zeros({ids.size(), w});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int r = ids[i];
        if (r < 0 || static_cast<std::size_t>(r) >= T.rows())
            throw std::invalid_argument("gather_rows: index out of range");
        std::copy(T.row_ptr(static_cast<std::size_t>(r)),
                  T.row_ptr(static_cast<std::size_t>(r)) + w, C.row_ptr(i));
    }
    Node n;
    n.op = Op::GatherRows;
    n.in = {table.id};
    n.ids = std::move(ids);
    n.requires_grad = node(table).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

Tape::Var Tape::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& X = value(x);
    const std::size_t m = X.rows(), w = X.cols();
    if (value(gain).numel() != w || value(bias).numel() != w)
        throw std::invalid_argument("layer_norm: gain/bias width mismatch");
    const double* g = value(gain).data.data();
    const double* b = value(bias).data.data();
    Tensor C = Tensor::zeros(X.shape);
    std::vector<double> aux(2 * m);  // per row: mean, inv std
    for (std::size_t i = 0; i < m; ++i) {
        const double* xr = X.row_ptr(i);
        double mu = 0.0;
        for (std::size_t j = 0; j < w; ++j) mu += xr[j];
        mu /= static_cast<double>(w);
        double var = 0.0;
        for (std::size_t j = 0; j < w; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(w);
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        aux[2 * i] = mu;
        aux[2 * i + 1] = inv;
        double* cr = C.row_ptr(i);
        for (std::size_t j = 0; j < w; ++j) cr[j] = g[j] * (xr[j] - mu) * inv + b[j];
    }
    Node n;
    n.op = Op::LayerNorm;
    n.in = {x.id, gain.id, bias.id};
    n.aux = std::move(aux);
    n.requires_grad =
        node(x).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
    n.value = std::move(C);
    return push(std::move(n));
}

void Tape::reset_grads() {
    for (Node& n : nodes_) n.grad = Tensor();
    backward_done_ = false;
}

void Tape::backward(Var loss) {
    Node& top = node(loss);
    if (!top.value.is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(top.value));
    if (backward_done_)
        throw std::runtime_error("backward: called twice without reset_grads()");
    backward_done_ = true;
    if (!top.requires_grad) return;  // nothing reachable requires gradients
    top.grad = Tensor::scalar(1.0);
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || n.grad.data.empty()) continue;
        backward_node(n);
    }
}

namespace {
void accumulate(Tensor& g, const Tensor& shape_like, const double* delta, std::size_t n) {
    if (g.data.empty()) g = Tensor::zeros(shape_like.shape);
    kernels::active().axpy(1.0, delta, g.data.data(), n);
}
}  // namespace

void Tape::backward_node(Node& n) {
    const auto& K = kernels::active();
    auto ensure = [&](int id) -> Tensor& {
        Node& in = nodes_[static_cast<std::size_t>(id)];
        if (in.grad.data.empty()) in.grad = Tensor::zeros(in.value.shape);
        return in.grad;
    };
    auto wants = [&](int id) { return nodes_[static_cast<std::size_t>(id)].requires_grad; };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Tensor& A = nodes_[n.in[0]].value;
            const Tensor& B = nodes_[n.in[1]].value;
            const std::size_t m = A.shape[0], k = A.shape[1], w = B.shape[1];
            if (wants(n.in[0])) {
                Tensor& dA = ensure(n.in[0]);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* grow = n.grad.row_ptr(i);
                    double* darow = dA.row_ptr(i);
                    for (std::size_t p = 0; p < k; ++p)
                        darow[p] += K.dot(grow, B.row_ptr(p), w);
                }
            }
            if (wants(n.in[1])) {
                Tensor& dB = ensure(n.in[1]);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* arow = A.row_ptr(i);
                    const double* grow = n.grad.row_ptr(i);
                    for (std::size_t p = 0; p < k; ++p)
                        K.axpy(arow[p], grow, dB.row_ptr(p), w);
                }
            }
            break;
        }
        case Op::Add: {
            for (int idx : {0, 1})
                if (wants(n.in[idx]))
                    accumulate(ensure(n.in[idx]), nodes_[n.in[idx]].value, n.grad.data.data(),
                               n.grad.numel());
            break;
        }
        case Op::Mul: {
            if (wants(n.in[0])) {
                Tensor tmp = Tensor::zeros(n.grad.shape);
                K.mul(n.grad.data.data(), nodes_[n.in[1]].value.data.data(), tmp.data.data(),
                      tmp.numel());
                accumulate(ensure(n.in[0]), nodes_[n.in[0]].value, tmp.data.data(), tmp.numel());
            }
            if (wants(n.in[1])) {
                Tensor tmp = Tensor::zeros(n.grad.shape);
                K.mul(n.grad.data.data(), nodes_[n.in[0]].value.data.data(), tmp.data.data(),
                      tmp.numel());
                accumulate(ensure(n.in[1]), nodes_[n.in[1]].value, tmp.data.data(), tmp.numel());
            }
            break;
        }
        case Op::AddRow: {
            const std::size_t m = n.value.rows(), w = n.value.cols();
            if (wants(n.in[0]))
                accumulate(ensure(n.in[0]), nodes_[n.in[0]].value, n.grad.data.data(),
                           n.grad.numel());
            if (wants(n.in[1])) {
                Tensor& db = ensure(n.in[1]);
                for (std::size_t i = 0; i < m; ++i)
                    K.axpy(1.0, n.grad.row_ptr(i), db.data.data(), w);
            }
            break;
        }
        case Op::Scale: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                K.axpy(n.c, n.grad.data.data(), dx.data.data(), n.grad.numel());
            }
            break;
        }
        case Op::Relu: {
            if (wants(n.in[0])) {
                const Tensor& X = nodes_[n.in[0]].value;
                Tensor tmp = Tensor::zeros(X.shape);
                K.relu_grad(X.data.data(), n.grad.data.data(), tmp.data.data(), X.numel());
                accumulate(ensure(n.in[0]), X, tmp.data.data(), tmp.numel());
            }
            break;
        }
        case Op::Softmax: {
            if (wants(n.in[0])) {
                const std::size_t m = n.value.rows(), w = n.value.cols();
                Tensor& dx = ensure(n.in[0]);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* y = n.value.row_ptr(i);
                    const double* dy = n.grad.row_ptr(i);
                    const double d = K.dot(dy, y, w);
                    double* dxr = dx.row_ptr(i);
                    for (std::size_t j = 0; j < w; ++j) dxr[j] += y[j] * (dy[j] - d);
                }
            }
            break;
        }
        case Op::CrossEntropy: {
            if (wants(n.in[0])) {
                const Tensor& P = nodes_[n.in[0]].value;
                Tensor& dp = ensure(n.in[0]);
                const std::size_t m = P.rows();
                const double g = n.grad.item() / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i) {
                    const std::size_t t = static_cast<std::size_t>(n.ids[i]);
                    const double p = P.at(i, t);
                    if (p >= kLogClamp) dp.at(i, t) -= g / p;
                }
            }
            break;
        }
        case Op::Sum: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                const double g = n.grad.item();
                for (double& v : dx.data) v += g;
            }
            break;
        }
        case Op::MeanRows: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                const std::size_t m = n.a, w = n.value.cols();
                const double inv = 1.0 / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i)
                    K.axpy(inv, n.grad.data.data(), dx.row_ptr(i), w);
            }
            break;
        }
        case Op::ReplicateRow: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                const std::size_t w = n.value.cols();
                for (std::size_t i = 0; i < n.a; ++i)
                    K.axpy(1.0, n.grad.row_ptr(i), dx.data.data(), w);
            }
            break;
        }
        case Op::SliceRows: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                const std::size_t w = n.value.cols();
                for (std::size_t i = 0; i < n.b - n.a; ++i)
                    K.axpy(1.0, n.grad.row_ptr(i), dx.row_ptr(n.a + i), w);
            }
            break;
        }
        case Op::SliceCols: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                for (std::size_t i = 0; i < n.value.rows(); ++i) {
                    const double* gr = n.grad.row_ptr(i);
                    double* dr = dx.row_ptr(i) + n.a;
                    for (std::size_t j = 0; j < n.b - n.a; ++j) dr[j] += gr[j];
                }
            }
            break;
        }
        case Op::ConcatCols: {
            std::size_t off = 0;
            for (int in_id : n.in) {
                const Tensor& P = nodes_[in_id].value;
                if (wants(in_id)) {
                    Tensor& dp = ensure(in_id);
                    for (std::size_t i = 0; i < P.rows(); ++i) {
                        const double* gr = n.grad.row_ptr(i) + off;
                        double* dr = dp.row_ptr(i);
                        for (std::size_t j = 0; j < P.cols(); ++j) dr[j] += gr[j];
                    }
                }
                off += P.cols();
            }
            break;
        }
        case Op::Transpose: {
            if (wants(n.in[0])) {
                Tensor& dx = ensure(n.in[0]);
                for (std::size_t i = 0; i < n.value.rows(); ++i)
                    for (std::size_t j = 0; j < n.value.cols(); ++j)
                        dx.at(j, i) += n.grad.at(i, j);
            }
            break;
        }
        case Op::GatherRows: {
            if (wants(n.in[0])) {
                Tensor& dt = ensure(n.in[0]);
                const std::size_t w = n.value.cols();
                for (std::size_t i = 0; i < n.ids.size(); ++i)
                    K.axpy(1.0, n.grad.row_ptr(i),
                           dt.row_ptr(static_cast<std::size_t>(n.ids[i])), w);
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = nodes_[n.in[0]].value;
            const double* g = nodes_[n.in[1]].value.data.data();
            const std::size_t m = X.rows(), w = X.cols();
            for (std::size_t i = 0; i < m; ++i) {
                const double mu = n.aux[2 * i];
                const double inv = n.aux[2 * i + 1];
                const double* xr = X.row_ptr(i);
                const double* dyr = n.grad.row_ptr(i);
                // dxhat, and its two row means needed for dx
                double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                for (std::size_t j = 0; j < w; ++j) {
                    const double xh = (xr[j] - mu) * inv;
                    const double dxh = dyr[j] * g[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xh;
                }
                mean_dxh /= static_cast<double>(w);
                mean_dxh_xh /= static_cast<double>(w);
                if (wants(n.in[0])) {
                    Tensor& dx = ensure(n.in[0]);
                    double* dxr = dx.row_ptr(i);
                    for (std::size_t j = 0; j < w; ++j) {
                        const double xh = (xr[j] - mu) * inv;
                        dxr[j] += inv * (dyr[j] * g[j] - mean_dxh - xh * mean_dxh_xh);
                    }
                }
                if (wants(n.in[1])) {
                    Tensor& dg = ensure(n.in[1]);
                    for (std::size_t j = 0; j < w; ++j)
                        dg.data[j] += dyr[j] * (xr[j] - mu) * inv;
                }
                if (wants(n.in[2])) {
                    Tensor& db = ensure(n.in[2]);
                    for (std::size_t j = 0; j < w; ++j) db.data[j] += dyr[j];
                }
            }
            break;
        }
    }
}

}  // namespace qase
