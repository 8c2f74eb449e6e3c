#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// Every Tensor is a handle to a node holding a value and, when it was produced
// by a recorded operation, the inputs and the backward rule of that operation.
// Graphs are recorded eagerly while ops execute and are discarded with the
// last handle. Backward rules are themselves written with recorded ops, so a
// gradient can be differentiated again (create_graph) as long as every op on
// the path supports it.

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mafgan::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::array<std::size_t, 2>;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class UnsupportedOpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigurationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Node;
class Tensor;

using BackwardFn =
    std::function<std::vector<Tensor>(std::span<const Tensor> inputs, const Tensor& output, const Tensor& grad_output)>;

class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Matrix value);
    static Tensor parameter(Matrix value);
    static Tensor scalar(double value);
    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor full(std::size_t rows, std::size_t cols, double value);
    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

    [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
    [[nodiscard]] std::size_t rows() const;
    [[nodiscard]] std::size_t cols() const;
    [[nodiscard]] std::size_t size() const { return rows() * cols(); }
    [[nodiscard]] Shape shape() const { return {rows(), cols()}; }
    [[nodiscard]] std::string shape_string() const;

    [[nodiscard]] const Matrix& value() const;
    // In-place access for optimizers and initializers. Only valid on leaves.
    [[nodiscard]] Matrix& mutable_value();
    [[nodiscard]] double item() const;
    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return value()(r, c); }

    [[nodiscard]] bool requires_grad() const;
    void set_requires_grad(bool flag);
    [[nodiscard]] bool is_leaf() const;

    // Accumulated gradient of a leaf after backward(); undefined before.
    [[nodiscard]] const Tensor& grad() const;
    [[nodiscard]] bool has_grad() const;
    void zero_grad();

    // Same value, no history.
    [[nodiscard]] Tensor detach() const;

    [[nodiscard]] const char* op_name() const;
    [[nodiscard]] const Node* node() const noexcept { return node_.get(); }

private:
    friend struct Node;
    friend Tensor make_result(Matrix value, std::vector<Tensor> inputs, BackwardFn fn, const char* op,
                              bool supports_double_backward);
    friend void backward(const Tensor& seed);
    friend std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> inputs, bool create_graph);

    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

struct Node {
    Matrix value;
    bool requires_grad = false;
    bool leaf = true;
    bool supports_double_backward = true;
    const char* op = "leaf";
    std::vector<Tensor> inputs;
    BackwardFn backward_fn;
    Tensor grad;
};

// Recording is on by default; NoGradGuard disables it for the current thread.
[[nodiscard]] bool grad_mode_enabled() noexcept;

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

// Temporarily flips requires_grad on a set of leaves (used to freeze a network).
class RequiresGradGuard {
public:
    RequiresGradGuard(std::vector<Tensor> leaves, bool flag);
    ~RequiresGradGuard();
    RequiresGradGuard(const RequiresGradGuard&) = delete;
    RequiresGradGuard& operator=(const RequiresGradGuard&) = delete;

private:
    std::vector<Tensor> leaves_;
    std::vector<bool> previous_;
};

// Builds the result of a primitive. Records inputs and the backward rule only
// when grad mode is on and some input requires grad.
Tensor make_result(Matrix value, std::vector<Tensor> inputs, BackwardFn fn, const char* op,
                   bool supports_double_backward = true);

// Topologically ordered view of the graph that produced `root`.
struct Graph {
    std::vector<const Node*> nodes;  // inputs precede consumers

    [[nodiscard]] bool contains(const Tensor& t) const;
    [[nodiscard]] std::size_t index_of(const Tensor& t) const;
};

Graph trace(const Tensor& root);

// Accumulates d(seed)/d(leaf) into every reachable leaf with requires_grad.
// The seed must be a 1x1 tensor.
void backward(const Tensor& seed);

// Returns d(output)/d(input) for each input without touching leaf grads.
// Inputs that do not influence output get a zero tensor. With create_graph the
// returned gradients are themselves differentiable.
std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> inputs, bool create_graph);

// Non-smooth ops (relu, maxout, abs, clamp) fold their selection pattern into
// this fingerprint while a KinkProbe is active. Two evaluations with different
// fingerprints straddle a kink.
class KinkProbe {
public:
    KinkProbe();
    ~KinkProbe();
    KinkProbe(const KinkProbe&) = delete;
    KinkProbe& operator=(const KinkProbe&) = delete;
    [[nodiscard]] std::uint64_t fingerprint() const noexcept { return hash_; }

private:
    std::uint64_t hash_ = 1469598103934665603ULL;
    KinkProbe* previous_;
    friend void record_selection(const bool* mask, std::size_t n);
    friend void record_selection_index(const int* idx, std::size_t n);
};

void record_selection(const bool* mask, std::size_t n);
void record_selection_index(const int* idx, std::size_t n);

// ---- primitives ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Broadcasting follows the 2-D rule: a dimension of 1 stretches to match.
Tensor broadcast_to(const Tensor& a, std::size_t rows, std::size_t cols);
// Sums over stretched dimensions to reduce `a` back to rows x cols.
Tensor sum_to(const Tensor& a, std::size_t rows, std::size_t cols);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);  // b x p -> 1 x p
Tensor sum_cols(const Tensor& a);  // b x p -> b x 1
Tensor mean_cols(const Tensor& a);

// Elementwise max over same-shaped tensors; ties go to the lowest index.
Tensor elementwise_max(std::span<const Tensor> parts);

// Multiplies by a constant mask (no gradient flows into the mask).
Tensor mask_mul(const Tensor& a, const Matrix& mask);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }

// ---- composite layers ---------------------------------------------------

struct AffineMap {
    Tensor weight;  // in x out
    Tensor bias;    // 1 x out
};

Tensor affine(const Tensor& x, const AffineMap& map);

// Elementwise max over k >= 2 affine maps of x.
Tensor linear_maxout(const Tensor& x, std::span<const AffineMap> pieces);

enum class Mode { train, eval };

struct BatchNormStats {
    Matrix running_mean;  // 1 x p
    Matrix running_var;   // 1 x p
    double eps = 1e-5;
    double momentum = 0.9;  // weight kept on the old running value
};

// Fused batch normalization. First-order only: it refuses create_graph.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode);

[[nodiscard]] bool all_finite(const Matrix& m) noexcept;

}  // namespace mafgan::ad
