#pragma once

#include "mafgan/autodiff.hpp"
#include "mafgan/gradcheck.hpp"
#include "mafgan/rng.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace mafgan::nn {

using ad::Matrix;
using ad::Mode;
using ad::NamedTensor;
using ad::Tensor;

enum class InitScheme { fan_in_uniform, zeros };

struct GeneratorConfig {
    std::size_t z_dim = 32;
    std::size_t hidden = 128;
    std::size_t depth = 4;  // hidden fully-connected layers
    std::size_t out_dim = 2;
};

struct DiscriminatorConfig {
    std::size_t in_dim = 2;
    std::size_t hidden = 128;
    std::size_t pieces = 2;  // maxout arity
    std::size_t embed_dim = 16;
};

// Hidden layers are affine -> batch norm -> ReLU; the output layer is affine.
class Generator {
public:
    explicit Generator(GeneratorConfig cfg);

    // z: [b x z_dim] -> [b x out_dim]. Train mode uses batch statistics and
    // updates the running ones.
    Tensor forward(const Tensor& z, Mode mode);

    [[nodiscard]] std::vector<NamedTensor> parameters() const;
    [[nodiscard]] std::vector<Tensor> parameter_tensors() const;
    // Parameters followed by batch-norm running statistics, by name.
    [[nodiscard]] std::vector<std::pair<std::string, Matrix*>> state();
    [[nodiscard]] const GeneratorConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t parameter_count() const;

private:
    GeneratorConfig cfg_;
    std::vector<ad::AffineMap> hidden_;
    std::vector<Tensor> gamma_;
    std::vector<Tensor> beta_;
    std::vector<ad::BatchNormStats> bn_stats_;
    ad::AffineMap out_;
};

// Two maxout layers followed by an affine map to the embedding. No
// normalization, so each row's embedding depends only on that row.
class Discriminator {
public:
    explicit Discriminator(DiscriminatorConfig cfg);

    static constexpr std::size_t kLayers = 3;

    // x: [b x in_dim] -> [b x embed_dim]
    [[nodiscard]] Tensor forward(const Tensor& x) const;
    // Output of fully-connected layer `layer` (1-based; kLayers is the embedding).
    [[nodiscard]] Tensor features(const Tensor& x, std::size_t layer) const;

    [[nodiscard]] std::vector<NamedTensor> parameters() const;
    [[nodiscard]] std::vector<Tensor> parameter_tensors() const;
    [[nodiscard]] std::vector<std::pair<std::string, Matrix*>> state();
    [[nodiscard]] const DiscriminatorConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t parameter_count() const;

private:
    DiscriminatorConfig cfg_;
    std::vector<std::vector<ad::AffineMap>> maxout_;
    ad::AffineMap head_;
};

[[nodiscard]] std::size_t analytic_parameter_count(const GeneratorConfig& cfg);
[[nodiscard]] std::size_t analytic_parameter_count(const DiscriminatorConfig& cfg);

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, batch-norm gamma 1
// and beta 0. The zeros scheme sets every parameter to 0.
void init_params(Generator& net, Rng& rng, InitScheme scheme = InitScheme::fan_in_uniform);
void init_params(Discriminator& net, Rng& rng, InitScheme scheme = InitScheme::fan_in_uniform);
void init_params(Generator& net, std::uint64_t seed, InitScheme scheme = InitScheme::fan_in_uniform);
void init_params(Discriminator& net, std::uint64_t seed, InitScheme scheme = InitScheme::fan_in_uniform);

struct ParamSlice {
    std::string name;
    std::string layer;  // name up to the first '.'
    std::size_t offset = 0;
    std::size_t size = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
};

struct FlatParams {
    std::vector<double> values;
    std::vector<ParamSlice> slices;

    [[nodiscard]] std::vector<std::string> layers() const;
    // All values belonging to one layer, in slice order.
    [[nodiscard]] std::vector<double> layer_values(const std::string& layer) const;
};

[[nodiscard]] std::string layer_of(const std::string& param_name);

FlatParams flatten_params(const std::vector<NamedTensor>& params);
// Writes `values` back in the order produced by flatten_params.
void scatter_params(const std::vector<NamedTensor>& params, std::span<const double> values);

template <class Net>
FlatParams flatten_params(const Net& net) {
    return flatten_params(net.parameters());
}

template <class Net>
void scatter_params(const Net& net, std::span<const double> values) {
    scatter_params(net.parameters(), values);
}

}  // namespace mafgan::nn
