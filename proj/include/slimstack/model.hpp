#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "slimstack/matrix.hpp"

namespace slimstack {

enum class Activation { identity, relu };

inline std::string activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "identity";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation: " + s);
}

struct LinearLayer {
    std::string name;
    Matrix w;  // d_out x d_in
    Activation act = Activation::identity;
};

// A plain stack of linear layers: x_{l+1} = act_l(W_l x_l). Columns of each
// activation matrix are samples.
struct LinearModel {
    std::vector<LinearLayer> layers;

    std::size_t d_in() const {
        if (layers.empty()) throw std::invalid_argument("model has no layers");
        return layers.front().w.cols();
    }

    std::size_t d_out() const {
        if (layers.empty()) throw std::invalid_argument("model has no layers");
        return layers.back().w.rows();
    }

    const LinearLayer& layer(const std::string& name) const {
        for (const auto& l : layers) {
            if (l.name == name) return l;
        }
        throw std::invalid_argument("no such layer: " + name);
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.w.rows() * l.w.cols();
        return n;
    }
};

// Validates the dimension chain and name uniqueness; throws on violation.
inline void validate_model(const LinearModel& model) {
    if (model.layers.empty()) throw std::invalid_argument("model has no layers");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const LinearLayer& layer = model.layers[l];
        if (layer.w.rows() == 0 || layer.w.cols() == 0) {
            throw std::invalid_argument("layer " + layer.name + " has an empty weight matrix");
        }
        require_finite(layer.w, "layer " + layer.name);
        if (l > 0 && layer.w.cols() != model.layers[l - 1].w.rows()) {
            throw std::invalid_argument("dimension chain broken at layer " + layer.name);
        }
        for (std::size_t m = l + 1; m < model.layers.size(); ++m) {
            if (model.layers[m].name == layer.name) {
                throw std::invalid_argument("duplicate layer name: " + layer.name);
            }
        }
    }
}

struct CalibrationSet {
    Matrix x0;  // d_in x N, one calibration sample per column
};

inline Matrix apply_activation(Activation act, Matrix x) {
    if (act == Activation::relu) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = std::max(0.0, x(i, j));
        }
    }
    return x;
}

inline Matrix layer_forward(const LinearLayer& layer, const Matrix& x) {
    return apply_activation(layer.act, matmul(layer.w, x));
}

inline Matrix forward(const LinearModel& model, const Matrix& x0) {
    if (model.layers.empty()) throw std::invalid_argument("model has no layers");
    if (x0.rows() != model.d_in()) {
        throw std::invalid_argument("input dimension does not match model");
    }
    Matrix x = x0;
    for (const auto& layer : model.layers) x = layer_forward(layer, x);
    return x;
}

// Activations feeding each layer: result[l] is the input of layer l, so
// result[0] == x0 and result has one entry per layer.
inline std::vector<Matrix> collect_inputs(const LinearModel& model, const Matrix& x0) {
    if (x0.rows() != model.d_in()) {
        throw std::invalid_argument("input dimension does not match model");
    }
    std::vector<Matrix> inputs;
    inputs.reserve(model.layers.size());
    Matrix x = x0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        inputs.push_back(x);
        if (l + 1 < model.layers.size()) x = layer_forward(model.layers[l], x);
    }
    return inputs;
}

}  // namespace slimstack
