#pragma once

#include <vector>

#include "oseki/core.hpp"

namespace oseki::nn {

/**
 * Feed-forward network R^d -> R^{N_L}: sigmoid on every hidden layer, affine
 * output layer. `layers` lists N_1 .. N_L.
 */
struct Architecture {
    Index input_dim = 1;
    std::vector<Index> layers{10, 10, 1};

    void validate() const;
};

/// n_theta = sum_l (N_{l-1} + 1) N_l.
Index param_count(const Architecture &arch);

/// Unflattened weights. Flat layout: for each layer, W_l row-major, then b_l.
struct NetworkParams {
    std::vector<MatrixXd> weights; // N_l x N_{l-1}
    std::vector<VectorXd> biases;  // N_l
};

NetworkParams unflatten(const Architecture &arch, const VectorXd &theta);
VectorXd flatten(const Architecture &arch, const NetworkParams &params);

/// 1 / (1 + exp(-z)); 0 below -500 and 1 above 500.
double sigmoid(double z);

/// First output component of the network at x.
double eval_network(const Architecture &arch, const VectorXd &theta, const VectorXd &x);

/// Network output at every row of `points` (n_p x d).
VectorXd eval_on_grid(const Architecture &arch, const VectorXd &theta, const MatrixXd &points);

} // namespace oseki::nn
