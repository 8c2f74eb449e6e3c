#include "mafgan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace mafgan::ad {

namespace {

thread_local bool t_grad_mode = true;
thread_local KinkProbe* t_kink_probe = nullptr;

class GradModeGuard {
public:
    explicit GradModeGuard(bool enabled) : previous_(t_grad_mode) { t_grad_mode = enabled; }
    ~GradModeGuard() { t_grad_mode = previous_; }
    GradModeGuard(const GradModeGuard&) = delete;
    GradModeGuard& operator=(const GradModeGuard&) = delete;

private:
    bool previous_;
};

std::string shape_of(const Tensor& t) { return t.shape_string(); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " + shape_of(b));
    }
}

std::size_t broadcast_dim(std::size_t a, std::size_t b, const Tensor& ta, const Tensor& tb, const char* op) {
    if (a == b || b == 1) {
        return a;
    }
    if (a == 1) {
        return b;
    }
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_of(ta) + " with " + shape_of(tb));
}

std::pair<Tensor, Tensor> broadcast_pair(const Tensor& a, const Tensor& b, const char* op) {
    const std::size_t r = broadcast_dim(a.rows(), b.rows(), a, b, op);
    const std::size_t c = broadcast_dim(a.cols(), b.cols(), a, b, op);
    return {broadcast_to(a, r, c), broadcast_to(b, r, c)};
}

Matrix to_mask(const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m) {
    return m.cast<double>().matrix();
}

void fold(std::uint64_t& h, std::uint64_t v) {
    h ^= v;
    h *= 1099511628211ULL;
}

// Reverse-topological traversal shared by backward() and gradients().
std::vector<Tensor> topological_order(const Tensor& root) {
    std::vector<Tensor> order;
    if (!root.requires_grad()) {
        return order;
    }
    std::unordered_set<const Node*> visited;
    struct Frame {
        Tensor t;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({root, 0});
    visited.insert(root.node());
    while (!stack.empty()) {
        Frame& top = stack.back();
        const auto& inputs = top.t.node()->inputs;
        if (top.next < inputs.size()) {
            const Tensor& in = inputs[top.next++];
            if (in.requires_grad() && visited.insert(in.node()).second) {
                stack.push_back({in, 0});
            }
            continue;
        }
        order.push_back(top.t);
        stack.pop_back();
    }
    return order;
}

struct PassResult {
    std::unordered_map<const Node*, Tensor> captured;
};

PassResult run_backward(const Tensor& root, const Tensor& seed, bool create_graph, bool accumulate_leaves,
                        const std::unordered_set<const Node*>& capture) {
    PassResult result;
    const std::vector<Tensor> order = topological_order(root);
    std::unordered_map<const Node*, Tensor> grads;
    grads.emplace(root.node(), seed);

    GradModeGuard mode(create_graph);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Tensor& t = *it;
        const Node* node = t.node();
        auto found = grads.find(node);
        if (found == grads.end()) {
            continue;
        }
        Tensor g = found->second;
        if (capture.count(node) != 0) {
            result.captured[node] = g;
        }
        if (node->leaf) {
            if (accumulate_leaves) {
                auto* mutable_node = const_cast<Node*>(node);
                if (mutable_node->grad.defined()) {
                    mutable_node->grad = Tensor::constant(mutable_node->grad.value() + g.value());
                } else {
                    mutable_node->grad = Tensor::constant(g.value());
                }
            }
            continue;
        }
        if (create_graph && !node->supports_double_backward) {
            throw UnsupportedOpError(std::string("op '") + node->op +
                                     "' has no second-derivative support; cannot differentiate through its gradient");
        }
        std::vector<Tensor> input_grads = node->backward_fn(node->inputs, t, g);
        for (std::size_t i = 0; i < node->inputs.size(); ++i) {
            const Tensor& in = node->inputs[i];
            if (!in.requires_grad() || i >= input_grads.size() || !input_grads[i].defined()) {
                continue;
            }
            const Tensor& gi = input_grads[i];
            if (gi.rows() != in.rows() || gi.cols() != in.cols()) {
                throw ContractError(std::string("backward of '") + node->op + "' produced gradient " +
                                    gi.shape_string() + " for input " + in.shape_string());
            }
            auto slot = grads.find(in.node());
            if (slot == grads.end()) {
                grads.emplace(in.node(), gi);
            } else {
                slot->second = add(slot->second, gi);
            }
        }
        grads.erase(node);
    }
    return result;
}

}  // namespace

// ---- Tensor -------------------------------------------------------------

Tensor Tensor::constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Tensor(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    return constant(std::move(m));
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return full(rows, cols, 0.0); }

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
    return constant(Matrix::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), value));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    if (r == 0 || c == 0) {
        throw DimensionError("from_rows: empty tensor");
    }
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("from_rows: ragged rows");
        }
        std::size_t j = 0;
        for (double v : row) {
            m(i, j++) = v;
        }
        ++i;
    }
    return constant(std::move(m));
}

std::size_t Tensor::rows() const { return static_cast<std::size_t>(value().rows()); }
std::size_t Tensor::cols() const { return static_cast<std::size_t>(value().cols()); }

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << '[' << rows() << 'x' << cols() << ']';
    return os.str();
}

const Matrix& Tensor::value() const {
    if (!node_) {
        throw ContractError("access to an undefined tensor");
    }
    return node_->value;
}

Matrix& Tensor::mutable_value() {
    if (!node_) {
        throw ContractError("access to an undefined tensor");
    }
    if (!node_->leaf) {
        throw ContractError("in-place update of a non-leaf tensor");
    }
    return node_->value;
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) {
        throw ContractError("item() on non-scalar tensor " + shape_string());
    }
    return value()(0, 0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    if (!node_ || !node_->leaf) {
        throw ContractError("set_requires_grad on a non-leaf tensor");
    }
    node_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return !node_ || node_->leaf; }

const Tensor& Tensor::grad() const {
    if (!node_) {
        throw ContractError("grad() of an undefined tensor");
    }
    return node_->grad;
}

bool Tensor::has_grad() const { return node_ && node_->grad.defined(); }

void Tensor::zero_grad() {
    if (node_) {
        node_->grad = Tensor();
    }
}

Tensor Tensor::detach() const { return constant(value()); }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

// ---- modes --------------------------------------------------------------

bool grad_mode_enabled() noexcept { return t_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(t_grad_mode) { t_grad_mode = false; }
NoGradGuard::~NoGradGuard() { t_grad_mode = previous_; }

RequiresGradGuard::RequiresGradGuard(std::vector<Tensor> leaves, bool flag) : leaves_(std::move(leaves)) {
    previous_.reserve(leaves_.size());
    for (auto& t : leaves_) {
        previous_.push_back(t.requires_grad());
        t.set_requires_grad(flag);
    }
}

RequiresGradGuard::~RequiresGradGuard() {
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        leaves_[i].set_requires_grad(previous_[i]);
    }
}

KinkProbe::KinkProbe() : previous_(t_kink_probe) { t_kink_probe = this; }
KinkProbe::~KinkProbe() { t_kink_probe = previous_; }

void record_selection(const bool* mask, std::size_t n) {
    KinkProbe* probe = t_kink_probe;
    if (probe == nullptr) {
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        fold(probe->hash_, mask[i] ? 2U : 1U);
    }
}

void record_selection_index(const int* idx, std::size_t n) {
    KinkProbe* probe = t_kink_probe;
    if (probe == nullptr) {
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        fold(probe->hash_, static_cast<std::uint64_t>(idx[i]) + 7U);
    }
}

// ---- graph --------------------------------------------------------------

Tensor make_result(Matrix value, std::vector<Tensor> inputs, BackwardFn fn, const char* op,
                   bool supports_double_backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    const bool track = t_grad_mode && std::any_of(inputs.begin(), inputs.end(),
                                                 [](const Tensor& t) { return t.requires_grad(); });
    if (track) {
        node->requires_grad = true;
        node->leaf = false;
        node->supports_double_backward = supports_double_backward;
        node->inputs = std::move(inputs);
        node->backward_fn = std::move(fn);
    }
    return Tensor(std::move(node));
}

bool Graph::contains(const Tensor& t) const {
    return std::find(nodes.begin(), nodes.end(), t.node()) != nodes.end();
}

std::size_t Graph::index_of(const Tensor& t) const {
    auto it = std::find(nodes.begin(), nodes.end(), t.node());
    if (it == nodes.end()) {
        throw ContractError("tensor not part of graph");
    }
    return static_cast<std::size_t>(it - nodes.begin());
}

Graph trace(const Tensor& root) {
    Graph g;
    for (const Tensor& t : topological_order(root)) {
        g.nodes.push_back(t.node());
    }
    return g;
}

void backward(const Tensor& seed) {
    if (seed.rows() != 1 || seed.cols() != 1) {
        throw ContractError("backward seed must be a scalar, got " + seed.shape_string());
    }
    if (!seed.requires_grad()) {
        return;
    }
    run_backward(seed, Tensor::scalar(1.0), false, true, {});
}

std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> inputs, bool create_graph) {
    if (output.rows() != 1 || output.cols() != 1) {
        throw ContractError("gradients() needs a scalar output, got " + output.shape_string());
    }
    std::unordered_set<const Node*> wanted;
    for (const Tensor& in : inputs) {
        wanted.insert(in.node());
    }
    PassResult pass;
    if (output.requires_grad()) {
        pass = run_backward(output, Tensor::scalar(1.0), create_graph, false, wanted);
    }
    std::vector<Tensor> out;
    out.reserve(inputs.size());
    for (const Tensor& in : inputs) {
        auto it = pass.captured.find(in.node());
        out.push_back(it != pass.captured.end() ? it->second : Tensor::zeros(in.rows(), in.cols()));
    }
    return out;
}

// ---- primitives ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_of(a) + " x " + shape_of(b));
    }
    Matrix out = a.value() * b.value();
    return make_result(
        std::move(out), {a, b},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            std::vector<Tensor> r(2);
            if (in[0].requires_grad()) {
                r[0] = matmul(g, transpose(in[1]));
            }
            if (in[1].requires_grad()) {
                r[1] = matmul(transpose(in[0]), g);
            }
            return r;
        },
        "matmul");
}

Tensor transpose(const Tensor& a) {
    Matrix out = a.value().transpose();
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor>, const Tensor&, const Tensor& g) { return std::vector<Tensor>{transpose(g)}; },
        "transpose");
}

Tensor broadcast_to(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (a.rows() == rows && a.cols() == cols) {
        return a;
    }
    if ((a.rows() != rows && a.rows() != 1) || (a.cols() != cols && a.cols() != 1)) {
        throw DimensionError("broadcast_to: cannot stretch " + shape_of(a) + " to [" + std::to_string(rows) + "x" +
                             std::to_string(cols) + "]");
    }
    Matrix out = a.value().replicate(static_cast<Eigen::Index>(rows / a.rows()),
                                     static_cast<Eigen::Index>(cols / a.cols()));
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{sum_to(g, in[0].rows(), in[0].cols())};
        },
        "broadcast_to");
}

Tensor sum_to(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (a.rows() == rows && a.cols() == cols) {
        return a;
    }
    if ((rows != a.rows() && rows != 1) || (cols != a.cols() && cols != 1)) {
        throw DimensionError("sum_to: cannot reduce " + shape_of(a) + " to [" + std::to_string(rows) + "x" +
                             std::to_string(cols) + "]");
    }
    Matrix out;
    if (rows == 1 && cols == 1) {
        out = Matrix::Constant(1, 1, a.value().sum());
    } else if (rows == 1) {
        out = a.value().colwise().sum();
    } else {
        out = a.value().rowwise().sum();
    }
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{broadcast_to(g, in[0].rows(), in[0].cols())};
        },
        "sum_to");
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        auto [x, y] = broadcast_pair(a, b, "add");
        return add(x, y);
    }
    Matrix out = a.value() + b.value();
    return make_result(
        std::move(out), {a, b},
        [](std::span<const Tensor>, const Tensor&, const Tensor& g) { return std::vector<Tensor>{g, g}; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        auto [x, y] = broadcast_pair(a, b, "sub");
        return sub(x, y);
    }
    Matrix out = a.value() - b.value();
    return make_result(
        std::move(out), {a, b},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            std::vector<Tensor> r(2);
            r[0] = g;
            if (in[1].requires_grad()) {
                r[1] = neg(g);
            }
            return r;
        },
        "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        auto [x, y] = broadcast_pair(a, b, "mul");
        return mul(x, y);
    }
    Matrix out = a.value().cwiseProduct(b.value());
    return make_result(
        std::move(out), {a, b},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            std::vector<Tensor> r(2);
            if (in[0].requires_grad()) {
                r[0] = mul(g, in[1]);
            }
            if (in[1].requires_grad()) {
                r[1] = mul(g, in[0]);
            }
            return r;
        },
        "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        auto [x, y] = broadcast_pair(a, b, "div");
        return div(x, y);
    }
    Matrix out = a.value().cwiseQuotient(b.value());
    return make_result(
        std::move(out), {a, b},
        [](std::span<const Tensor> in, const Tensor& out, const Tensor& g) {
            std::vector<Tensor> r(2);
            if (in[0].requires_grad()) {
                r[0] = div(g, in[1]);
            }
            if (in[1].requires_grad()) {
                r[1] = neg(div(mul(g, out), in[1]));
            }
            return r;
        },
        "div");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
    Matrix out = a.value() * factor;
    return make_result(
        std::move(out), {a},
        [factor](std::span<const Tensor>, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{scale(g, factor)};
        },
        "scale");
}

Tensor add_scalar(const Tensor& a, double offset) {
    Matrix out = a.value().array() + offset;
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor>, const Tensor&, const Tensor& g) { return std::vector<Tensor>{g}; },
        "add_scalar");
}

Tensor mask_mul(const Tensor& a, const Matrix& mask) {
    if (static_cast<std::size_t>(mask.rows()) != a.rows() || static_cast<std::size_t>(mask.cols()) != a.cols()) {
        throw DimensionError("mask_mul: mask shape differs from " + shape_of(a));
    }
    Matrix out = a.value().cwiseProduct(mask);
    return make_result(
        std::move(out), {a},
        [mask](std::span<const Tensor>, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{mask_mul(g, mask)};
        },
        "mask_mul");
}

Tensor relu(const Tensor& a) {
    const auto positive = (a.value().array() > 0.0).eval();
    record_selection(positive.data(), static_cast<std::size_t>(positive.size()));
    Matrix mask = to_mask(positive);
    Matrix out = a.value().cwiseProduct(mask);
    return make_result(
        std::move(out), {a},
        [mask = std::move(mask)](std::span<const Tensor>, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{mask_mul(g, mask)};
        },
        "relu");
}

Tensor sigmoid(const Tensor& a) {
    Matrix out = a.value().unaryExpr([](double x) {
        if (x >= 0.0) {
            return 1.0 / (1.0 + std::exp(-x));
        }
        const double e = std::exp(x);
        return e / (1.0 + e);
    });
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor>, const Tensor& out, const Tensor& g) {
            return std::vector<Tensor>{mul(g, mul(out, add_scalar(neg(out), 1.0)))};
        },
        "sigmoid");
}

Tensor softplus(const Tensor& a) {
    Matrix out =
        a.value().unaryExpr([](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{mul(g, sigmoid(in[0]))};
        },
        "softplus");
}

Tensor log(const Tensor& a) {
    Matrix out = a.value().array().log();
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) { return std::vector<Tensor>{div(g, in[0])}; },
        "log");
}

Tensor exp(const Tensor& a) {
    Matrix out = a.value().array().exp();
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor>, const Tensor& out, const Tensor& g) { return std::vector<Tensor>{mul(g, out)}; },
        "exp");
}

Tensor sqrt(const Tensor& a) {
    Matrix out = a.value().array().sqrt();
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor>, const Tensor& out, const Tensor& g) {
            return std::vector<Tensor>{div(scale(g, 0.5), out)};
        },
        "sqrt");
}

Tensor square(const Tensor& a) {
    Matrix out = a.value().array().square();
    return make_result(
        std::move(out), {a},
        [](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{mul(g, scale(in[0], 2.0))};
        },
        "square");
}

Tensor abs(const Tensor& a) {
    const auto positive = (a.value().array() > 0.0).eval();
    record_selection(positive.data(), static_cast<std::size_t>(positive.size()));
    Matrix sign = a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    Matrix out = a.value().cwiseAbs();
    return make_result(
        std::move(out), {a},
        [sign = std::move(sign)](std::span<const Tensor>, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{mask_mul(g, sign)};
        },
        "abs");
}

Tensor clamp_min(const Tensor& a, double lo) {
    const auto pass = (a.value().array() > lo).eval();
    record_selection(pass.data(), static_cast<std::size_t>(pass.size()));
    Matrix mask = to_mask(pass);
    Matrix out = a.value().cwiseMax(lo);
    return make_result(
        std::move(out), {a},
        [mask = std::move(mask)](std::span<const Tensor>, const Tensor&, const Tensor& g) {
            return std::vector<Tensor>{mask_mul(g, mask)};
        },
        "clamp_min");
}

Tensor sum(const Tensor& a) { return sum_to(a, 1, 1); }

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_rows(const Tensor& a) { return sum_to(a, 1, a.cols()); }

Tensor sum_cols(const Tensor& a) { return sum_to(a, a.rows(), 1); }

Tensor mean_cols(const Tensor& a) { return scale(sum_cols(a), 1.0 / static_cast<double>(a.cols())); }

Tensor elementwise_max(std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw ConfigurationError("elementwise_max: no inputs");
    }
    for (const Tensor& p : parts) {
        require_same_shape(parts[0], p, "elementwise_max");
    }
    const Eigen::Index r = static_cast<Eigen::Index>(parts[0].rows());
    const Eigen::Index c = static_cast<Eigen::Index>(parts[0].cols());
    Matrix out = parts[0].value();
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> winner =
        Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(r, c);
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const Matrix& v = parts[k].value();
        for (Eigen::Index i = 0; i < r; ++i) {
            for (Eigen::Index j = 0; j < c; ++j) {
                if (v(i, j) > out(i, j)) {
                    out(i, j) = v(i, j);
                    winner(i, j) = static_cast<int>(k);
                }
            }
        }
    }
    record_selection_index(winner.data(), static_cast<std::size_t>(winner.size()));
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    return make_result(
        std::move(out), std::move(inputs),
        [winner = std::move(winner)](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            std::vector<Tensor> r(in.size());
            for (std::size_t k = 0; k < in.size(); ++k) {
                if (in[k].requires_grad()) {
                    Matrix mask = (winner.array() == static_cast<int>(k)).cast<double>().matrix();
                    r[k] = mask_mul(g, mask);
                }
            }
            return r;
        },
        "elementwise_max");
}

// ---- composite layers ---------------------------------------------------

Tensor affine(const Tensor& x, const AffineMap& map) {
    if (map.bias.rows() != 1 || map.bias.cols() != map.weight.cols()) {
        throw DimensionError("affine: bias " + shape_of(map.bias) + " does not match weight " + shape_of(map.weight));
    }
    return add(matmul(x, map.weight), map.bias);
}

Tensor linear_maxout(const Tensor& x, std::span<const AffineMap> pieces) {
    if (pieces.size() < 2) {
        throw ConfigurationError("linear_maxout needs at least 2 pieces, got " + std::to_string(pieces.size()));
    }
    std::vector<Tensor> outs;
    outs.reserve(pieces.size());
    for (const AffineMap& p : pieces) {
        outs.push_back(affine(x, p));
    }
    return elementwise_max(outs);
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode) {
    const Eigen::Index b = static_cast<Eigen::Index>(x.rows());
    const Eigen::Index p = static_cast<Eigen::Index>(x.cols());
    if (gamma.rows() != 1 || gamma.cols() != x.cols() || beta.rows() != 1 || beta.cols() != x.cols()) {
        throw DimensionError("batch_norm: gamma " + shape_of(gamma) + " / beta " + shape_of(beta) +
                             " do not match input " + shape_of(x));
    }
    if (stats.running_mean.size() == 0) {
        stats.running_mean = Matrix::Zero(1, p);
        stats.running_var = Matrix::Ones(1, p);
    }
    if (stats.running_mean.cols() != p) {
        throw DimensionError("batch_norm: running statistics sized for a different feature count");
    }

    Eigen::RowVectorXd mu;
    Eigen::RowVectorXd var;
    if (mode == Mode::train) {
        if (b < 2) {
            throw DimensionError("batch_norm: train mode needs a batch of at least 2 rows, got " + std::to_string(b));
        }
        mu = x.value().colwise().mean();
        var = (x.value().rowwise() - mu).array().square().colwise().mean().matrix();
        const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
        stats.running_mean = stats.momentum * stats.running_mean + (1.0 - stats.momentum) * mu;
        stats.running_var = stats.momentum * stats.running_var + (1.0 - stats.momentum) * (var * unbias);
    } else {
        mu = stats.running_mean.row(0);
        var = stats.running_var.row(0);
    }
    const Eigen::RowVectorXd inv = (var.array() + stats.eps).rsqrt().matrix();
    Matrix xhat = ((x.value().rowwise() - mu).array().rowwise() * inv.array()).matrix();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();

    return make_result(
        std::move(out), {x, gamma, beta},
        [xhat = std::move(xhat), inv, mode](std::span<const Tensor> in, const Tensor&, const Tensor& g) {
            const Matrix& gv = g.value();
            const Eigen::RowVectorXd gam = in[1].value().row(0);
            std::vector<Tensor> r(3);
            if (in[0].requires_grad()) {
                Matrix dxhat = (gv.array().rowwise() * gam.array()).matrix();
                if (mode == Mode::train) {
                    const double n = static_cast<double>(gv.rows());
                    const Eigen::RowVectorXd s1 = dxhat.colwise().sum();
                    const Eigen::RowVectorXd s2 = dxhat.cwiseProduct(xhat).colwise().sum();
                    Matrix dx = (((dxhat * n).rowwise() - s1).array() - xhat.array().rowwise() * s2.array()).matrix();
                    dx = (dx.array().rowwise() * (inv.array() / n)).matrix();
                    r[0] = Tensor::constant(std::move(dx));
                } else {
                    r[0] = Tensor::constant((dxhat.array().rowwise() * inv.array()).matrix());
                }
            }
            if (in[1].requires_grad()) {
                r[1] = Tensor::constant(gv.cwiseProduct(xhat).colwise().sum());
            }
            if (in[2].requires_grad()) {
                r[2] = Tensor::constant(gv.colwise().sum());
            }
            return r;
        },
        "batch_norm", false);
}

bool all_finite(const Matrix& m) noexcept { return m.allFinite(); }

}  // namespace mafgan::ad
