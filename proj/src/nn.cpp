#include "oseki/nn.hpp"

#include <cmath>

namespace oseki::nn {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Forward pass on a batch of column inputs (d x n), returns N_L x n.
MatrixXd forward(const Architecture &arch, const VectorXd &theta, MatrixXd x) {
    require(theta.size() == param_count(arch), "network: parameter vector has wrong length");
    Index offset = 0, in = arch.input_dim;
    const std::size_t depth = arch.layers.size();
    for (std::size_t l = 0; l < depth; ++l) {
        const Index out = arch.layers[l];
        const Eigen::Map<const RowMajor> w(theta.data() + offset, out, in);
        offset += out * in;
        const Eigen::Map<const VectorXd> b(theta.data() + offset, out);
        offset += out;
        MatrixXd z = w * x;
        z.colwise() += b;
        if (l + 1 < depth) z = z.unaryExpr([](double v) { return sigmoid(v); });
        x = std::move(z);
        in = out;
    }
    return x;
}

} // namespace

void Architecture::validate() const {
    require(input_dim >= 1, "network: input dimension must be positive");
    require(!layers.empty(), "network: at least one layer required");
    for (Index n : layers) require(n >= 1, "network: layer sizes must be positive");
}

Index param_count(const Architecture &arch) {
    arch.validate();
    Index count = 0, prev = arch.input_dim;
    for (Index n : arch.layers) {
        count += (prev + 1) * n;
        prev = n;
    }
    return count;
}

NetworkParams unflatten(const Architecture &arch, const VectorXd &theta) {
    require(theta.size() == param_count(arch), "unflatten: parameter vector has wrong length");
    NetworkParams params;
    Index offset = 0, in = arch.input_dim;
    for (Index out : arch.layers) {
        params.weights.emplace_back(Eigen::Map<const RowMajor>(theta.data() + offset, out, in));
        offset += out * in;
        params.biases.emplace_back(theta.segment(offset, out));
        offset += out;
        in = out;
    }
    return params;
}

VectorXd flatten(const Architecture &arch, const NetworkParams &params) {
    require(params.weights.size() == arch.layers.size() && params.biases.size() == arch.layers.size(),
            "flatten: layer count mismatch");
    VectorXd theta(param_count(arch));
    Index offset = 0, in = arch.input_dim;
    for (std::size_t l = 0; l < arch.layers.size(); ++l) {
        const Index out = arch.layers[l];
        require(params.weights[l].rows() == out && params.weights[l].cols() == in &&
                    params.biases[l].size() == out,
                "flatten: layer shape mismatch");
        Eigen::Map<RowMajor>(theta.data() + offset, out, in) = params.weights[l];
        offset += out * in;
        theta.segment(offset, out) = params.biases[l];
        offset += out;
        in = out;
    }
    return theta;
}

double sigmoid(double z) {
    if (z < -500.0) return 0.0;
    if (z > 500.0) return 1.0;
    return 1.0 / (1.0 + std::exp(-z));
}

double eval_network(const Architecture &arch, const VectorXd &theta, const VectorXd &x) {
    require(x.size() == arch.input_dim, "eval_network: input dimension mismatch");
    return forward(arch, theta, x)(0, 0);
}

VectorXd eval_on_grid(const Architecture &arch, const VectorXd &theta, const MatrixXd &points) {
    require(points.cols() == arch.input_dim, "eval_on_grid: point dimension mismatch");
    return forward(arch, theta, points.transpose()).row(0).transpose();
}

} // namespace oseki::nn
