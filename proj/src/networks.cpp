#include "mafgan/networks.hpp"

#include <cmath>
#include <set>

namespace mafgan::nn {

namespace {

ad::AffineMap make_affine(std::size_t in, std::size_t out) {
    return {Tensor::parameter(Matrix::Zero(in, out)), Tensor::parameter(Matrix::Zero(1, out))};
}

void init_affine(ad::AffineMap& map, Rng& rng, InitScheme scheme) {
    Matrix& w = map.weight.mutable_value();
    map.bias.mutable_value().setZero();
    if (scheme == InitScheme::zeros) {
        w.setZero();
        return;
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    w = rng.uniform_matrix(w.rows(), w.cols(), -bound, bound);
}

void push_affine(std::vector<NamedTensor>& out, const std::string& prefix, const ad::AffineMap& map) {
    out.push_back({prefix + ".weight", map.weight});
    out.push_back({prefix + ".bias", map.bias});
}

void require_cols(const Tensor& x, std::size_t expected, const char* who) {
    if (x.cols() != expected) {
        throw ad::DimensionError(std::string(who) + ": expected " + std::to_string(expected) + " input columns, got " +
                                 x.shape_string());
    }
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& n : named) {
        out.push_back(n.tensor);
    }
    return out;
}

}  // namespace

// ---- Generator ----------------------------------------------------------

Generator::Generator(GeneratorConfig cfg) : cfg_(cfg) {
    if (cfg_.depth == 0 || cfg_.hidden == 0 || cfg_.z_dim == 0 || cfg_.out_dim == 0) {
        throw ad::ConfigurationError("generator dimensions must be positive");
    }
    std::size_t in = cfg_.z_dim;
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
        hidden_.push_back(make_affine(in, cfg_.hidden));
        gamma_.push_back(Tensor::parameter(Matrix::Ones(1, cfg_.hidden)));
        beta_.push_back(Tensor::parameter(Matrix::Zero(1, cfg_.hidden)));
        ad::BatchNormStats stats;
        stats.running_mean = Matrix::Zero(1, cfg_.hidden);
        stats.running_var = Matrix::Ones(1, cfg_.hidden);
        bn_stats_.push_back(std::move(stats));
        in = cfg_.hidden;
    }
    out_ = make_affine(in, cfg_.out_dim);
}

Tensor Generator::forward(const Tensor& z, Mode mode) {
    require_cols(z, cfg_.z_dim, "generator_forward");
    Tensor h = z;
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
        h = ad::affine(h, hidden_[i]);
        h = ad::batch_norm(h, gamma_[i], beta_[i], bn_stats_[i], mode);
        h = ad::relu(h);
    }
    return ad::affine(h, out_);
}

std::vector<NamedTensor> Generator::parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < hidden_.size(); ++i) {
        push_affine(out, "hidden" + std::to_string(i), hidden_[i]);
        out.push_back({"bn" + std::to_string(i) + ".gamma", gamma_[i]});
        out.push_back({"bn" + std::to_string(i) + ".beta", beta_[i]});
    }
    push_affine(out, "out", out_);
    return out;
}

std::vector<Tensor> Generator::parameter_tensors() const { return tensors_of(parameters()); }

std::vector<std::pair<std::string, Matrix*>> Generator::state() {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (auto& p : parameters()) {
        out.emplace_back(p.name, &p.tensor.mutable_value());
    }
    for (std::size_t i = 0; i < bn_stats_.size(); ++i) {
        out.emplace_back("bn" + std::to_string(i) + ".running_mean", &bn_stats_[i].running_mean);
        out.emplace_back("bn" + std::to_string(i) + ".running_var", &bn_stats_[i].running_var);
    }
    return out;
}

std::size_t Generator::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) {
        n += p.tensor.size();
    }
    return n;
}

// ---- Discriminator ------------------------------------------------------

Discriminator::Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
    if (cfg_.pieces < 2) {
        throw ad::ConfigurationError("discriminator maxout needs at least 2 pieces, got " +
                                     std::to_string(cfg_.pieces));
    }
    if (cfg_.hidden == 0 || cfg_.in_dim == 0 || cfg_.embed_dim == 0) {
        throw ad::ConfigurationError("discriminator dimensions must be positive");
    }
    std::size_t in = cfg_.in_dim;
    for (std::size_t layer = 0; layer + 1 < kLayers; ++layer) {
        std::vector<ad::AffineMap> pieces;
        for (std::size_t k = 0; k < cfg_.pieces; ++k) {
            pieces.push_back(make_affine(in, cfg_.hidden));
        }
        maxout_.push_back(std::move(pieces));
        in = cfg_.hidden;
    }
    head_ = make_affine(in, cfg_.embed_dim);
}

Tensor Discriminator::forward(const Tensor& x) const { return features(x, kLayers); }

Tensor Discriminator::features(const Tensor& x, std::size_t layer) const {
    if (layer < 1 || layer > kLayers) {
        throw ad::ConfigurationError("discriminator layer index must be in [1, " + std::to_string(kLayers) +
                                     "], got " + std::to_string(layer));
    }
    require_cols(x, cfg_.in_dim, "discriminator_forward");
    Tensor h = x;
    for (std::size_t i = 0; i < maxout_.size() && i < layer; ++i) {
        h = ad::linear_maxout(h, maxout_[i]);
    }
    if (layer == kLayers) {
        h = ad::affine(h, head_);
    }
    return h;
}

std::vector<NamedTensor> Discriminator::parameters() const {
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < maxout_.size(); ++i) {
        for (std::size_t k = 0; k < maxout_[i].size(); ++k) {
            push_affine(out, "layer" + std::to_string(i) + ".piece" + std::to_string(k), maxout_[i][k]);
        }
    }
    push_affine(out, "layer" + std::to_string(maxout_.size()), head_);
    return out;
}

std::vector<Tensor> Discriminator::parameter_tensors() const { return tensors_of(parameters()); }

std::vector<std::pair<std::string, Matrix*>> Discriminator::state() {
    std::vector<std::pair<std::string, Matrix*>> out;
    for (auto& p : parameters()) {
        out.emplace_back(p.name, &p.tensor.mutable_value());
    }
    return out;
}

std::size_t Discriminator::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) {
        n += p.tensor.size();
    }
    return n;
}

std::size_t analytic_parameter_count(const GeneratorConfig& c) {
    const std::size_t first = c.z_dim * c.hidden + c.hidden;
    const std::size_t rest = (c.depth - 1) * (c.hidden * c.hidden + c.hidden);
    const std::size_t bn = c.depth * 2 * c.hidden;
    return first + rest + bn + c.hidden * c.out_dim + c.out_dim;
}

std::size_t analytic_parameter_count(const DiscriminatorConfig& c) {
    const std::size_t l0 = c.pieces * (c.in_dim * c.hidden + c.hidden);
    const std::size_t l1 = c.pieces * (c.hidden * c.hidden + c.hidden);
    return l0 + l1 + c.hidden * c.embed_dim + c.embed_dim;
}

// ---- initialization -----------------------------------------------------

void init_params(Generator& net, Rng& rng, InitScheme scheme) {
    for (auto& p : net.parameters()) {
        Matrix& v = p.tensor.mutable_value();
        const std::string& n = p.name;
        if (scheme == InitScheme::zeros || n.ends_with(".bias") || n.ends_with(".beta")) {
            v.setZero();
        } else if (n.ends_with(".gamma")) {
            v.setOnes();
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(v.rows()));
            v = rng.uniform_matrix(v.rows(), v.cols(), -bound, bound);
        }
    }
    for (auto& [name, m] : net.state()) {
        if (name.ends_with(".running_mean")) {
            m->setZero();
        } else if (name.ends_with(".running_var")) {
            m->setOnes();
        }
    }
}

void init_params(Discriminator& net, Rng& rng, InitScheme scheme) {
    auto params = net.parameters();
    for (std::size_t i = 0; i + 1 < params.size(); i += 2) {
        ad::AffineMap map{params[i].tensor, params[i + 1].tensor};
        init_affine(map, rng, scheme);
    }
}

void init_params(Generator& net, std::uint64_t seed, InitScheme scheme) {
    Rng rng(seed, "init.generator");
    init_params(net, rng, scheme);
}

void init_params(Discriminator& net, std::uint64_t seed, InitScheme scheme) {
    Rng rng(seed, "init.discriminator");
    init_params(net, rng, scheme);
}

// ---- flattening ---------------------------------------------------------

std::string layer_of(const std::string& param_name) { return param_name.substr(0, param_name.find('.')); }

std::vector<std::string> FlatParams::layers() const {
    std::vector<std::string> out;
    for (const auto& s : slices) {
        if (out.empty() || out.back() != s.layer) {
            out.push_back(s.layer);
        }
    }
    return out;
}

std::vector<double> FlatParams::layer_values(const std::string& layer) const {
    std::vector<double> out;
    for (const auto& s : slices) {
        if (s.layer == layer) {
            out.insert(out.end(), values.begin() + static_cast<std::ptrdiff_t>(s.offset),
                       values.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size));
        }
    }
    return out;
}

FlatParams flatten_params(const std::vector<NamedTensor>& params) {
    FlatParams flat;
    for (const auto& p : params) {
        const Matrix& v = p.tensor.value();
        ParamSlice slice{p.name, layer_of(p.name), flat.values.size(), static_cast<std::size_t>(v.size()),
                         static_cast<std::size_t>(v.rows()), static_cast<std::size_t>(v.cols())};
        flat.values.insert(flat.values.end(), v.data(), v.data() + v.size());
        flat.slices.push_back(std::move(slice));
    }
    return flat;
}

void scatter_params(const std::vector<NamedTensor>& params, std::span<const double> values) {
    std::size_t total = 0;
    for (const auto& p : params) {
        total += p.tensor.size();
    }
    if (total != values.size()) {
        throw ad::DimensionError("scatter_params: expected " + std::to_string(total) + " values, got " +
                                 std::to_string(values.size()));
    }
    std::size_t offset = 0;
    for (const auto& p : params) {
        Tensor t = p.tensor;
        Matrix& v = t.mutable_value();
        std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
                  values.begin() + static_cast<std::ptrdiff_t>(offset + v.size()), v.data());
        offset += static_cast<std::size_t>(v.size());
    }
}

}  // namespace mafgan::nn
