// Small dense-math utilities shared by the trainable components: adaptive
// moment descent over a flat parameter vector, activations and their
// derivatives, rank AUC, and the versioned named-array checkpoint format.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "r3/world.hpp"

namespace r3 {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double leaky_relu(double x, double slope = 0.2) { return x >= 0.0 ? x : slope * x; }
inline double leaky_relu_grad(double x, double slope = 0.2) { return x >= 0.0 ? 1.0 : slope; }

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

/// Binary cross-entropy on a sigmoid output, numerically safe.
inline double bce_loss(double p, int label) {
    const double eps = 1e-12;
    p = std::clamp(p, eps, 1.0 - eps);
    return label ? -std::log(p) : -std::log(1.0 - p);
}

/// Rank AUC (Mann-Whitney), ties credited 0.5. Requires both labels present.
inline double auc_score(const std::vector<int>& labels, const std::vector<double>& scores) {
    double pos = 0, neg = 0, wins = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        ++pos;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j] == 1) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    for (int l : labels) neg += (l == 0) ? 1 : 0;
    if (pos == 0 || neg == 0) throw Error("auc: both labels must be present");
    return wins / (pos * neg);
}

/// Adam over a caller-owned flat parameter vector, with optional decoupled
/// weight decay.
class Adam {
public:
    explicit Adam(std::size_t n, double lr = 1e-2, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8, double weight_decay = 0.0)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), decay_(weight_decay), m_(n, 0.0),
          v_(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
            params[i] -= lr_ * ((m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_) + decay_ * params[i]);
        }
    }

private:
    double lr_, beta1_, beta2_, eps_, decay_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Versioned checkpoints: named numeric arrays with recorded dims. Doubles
// round-trip exactly through JSON, so reloaded models are bit-identical.

struct NamedArrays {
    std::string schema;
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> arrays;

    void put(const std::string& name, std::vector<std::size_t> shape, std::vector<double> data) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        if (n != data.size()) throw Error("checkpoint array '" + name + "' shape/data mismatch");
        arrays[name] = {std::move(shape), std::move(data)};
    }

    const std::vector<double>& data(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw Error("checkpoint is missing array '" + name + "'");
        return it->second.second;
    }

    const std::vector<std::size_t>& shape(const std::string& name) const {
        auto it = arrays.find(name);
        if (it == arrays.end()) throw Error("checkpoint is missing array '" + name + "'");
        return it->second.first;
    }

    Json to_json() const {
        Json j;
        j["schema"] = schema;
        Json arr = Json::object();
        for (const auto& [name, sd] : arrays)
            arr[name] = {{"shape", sd.first}, {"data", sd.second}};
        j["arrays"] = std::move(arr);
        return j;
    }

    static NamedArrays from_json(const Json& j, const std::string& expect_schema) {
        NamedArrays out;
        try {
            out.schema = j.at("schema").get<std::string>();
            if (out.schema != expect_schema)
                throw Error("checkpoint schema '" + out.schema + "', expected '" + expect_schema + "'");
            for (const auto& [name, sd] : j.at("arrays").items())
                out.put(name, sd.at("shape").get<std::vector<std::size_t>>(),
                        sd.at("data").get<std::vector<double>>());
        } catch (const Json::exception& e) {
            throw Error(std::string("malformed checkpoint: ") + e.what());
        }
        return out;
    }

    void save(const std::string& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

    static NamedArrays load(const std::string& path, const std::string& expect_schema) {
        Json j;
        try {
            j = Json::parse(read_text_file(path));
        } catch (const Json::exception& e) {
            throw Error(path + ": " + e.what());
        }
        try {
            return from_json(j, expect_schema);
        } catch (const Error& e) {
            throw Error(path + ": " + e.what());
        }
    }
};

}  // namespace r3
