#pragma once

// Named parameter storage and the tensor archive used for checkpoints.
//
// Archive layout (JSON):
//   {"format": "susa-tensors", "version": 1,
//    "tensors": {"<name>": {"shape": [rows, cols], "data": [...]}, ...}}
// Names are dotted paths such as "encoders.pano.layer0.wq"; the full list for
// a model is produced by `ParamStore::names()`.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "susa/tensor.hpp"

namespace susa {

enum class Init { Xavier, Zeros, Ones, Normal };

class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

    // Registers a parameter; the initial values depend only on (seed, name).
    Tensor add(const std::string& name, Shape shape, Init init = Init::Xavier, double scale = 1.0);

    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const Tensor& get(const std::string& name) const;
    std::vector<std::string> names() const;
    std::size_t element_count() const;
    std::uint64_t seed() const { return seed_; }

    void zero_grad();
    // Re-draws the initial values of every parameter whose name starts with prefix.
    void reinitialize(const std::string& prefix);

    nlohmann::json to_json() const;
    // Copies values into the existing parameters so handles stay valid.
    // Missing or mis-shaped entries raise std::runtime_error.
    void load_json(const nlohmann::json& archive);

    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    struct Spec {
        Shape shape;
        Init init;
        double scale;
    };
    std::vector<double> initial_values(const std::string& name, const Spec& spec) const;

    std::uint64_t seed_;
    std::map<std::string, Tensor> params_;
    std::map<std::string, Spec> specs_;
};

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace susa
