#include "susa/params.hpp"

#include <cmath>
#include <fmt/format.h>
#include <stdexcept>

#include "susa/rng.hpp"

namespace susa {

Tensor ParamStore::add(const std::string& name, Shape shape, Init init, double scale) {
    if (params_.count(name) != 0) throw std::logic_error(fmt::format("parameter '{}' registered twice", name));
    Spec spec{shape, init, scale};
    Tensor t = Tensor::parameter(shape, initial_values(name, spec));
    params_.emplace(name, t);
    specs_.emplace(name, spec);
    return t;
}

std::vector<double> ParamStore::initial_values(const std::string& name, const Spec& spec) const {
    std::vector<double> v(spec.shape.size(), 0.0);
    Rng rng(derive(seed_, {tag("param"), tag(name)}));
    switch (spec.init) {
        case Init::Zeros:
            break;
        case Init::Ones:
            std::fill(v.begin(), v.end(), spec.scale);
            break;
        case Init::Xavier: {
            const double limit = spec.scale * std::sqrt(6.0 / double(spec.shape.rows + spec.shape.cols));
            for (double& x : v) x = rng.uniform(-limit, limit);
            break;
        }
        case Init::Normal:
            for (double& x : v) x = spec.scale * rng.normal();
            break;
    }
    return v;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range(fmt::format("unknown parameter '{}'", name));
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, _] : params_) out.push_back(k);
    return out;
}

std::size_t ParamStore::element_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::reinitialize(const std::string& prefix) {
    for (auto& [name, t] : params_) {
        if (name.rfind(prefix, 0) != 0) continue;
        auto fresh = initial_values(name, specs_.at(name));
        auto data = t.mutable_data();
        std::copy(fresh.begin(), fresh.end(), data.begin());
    }
}

nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", {t.rows(), t.cols()}}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    Shape s{j.at("shape").at(0).get<std::size_t>(), j.at("shape").at(1).get<std::size_t>()};
    return Tensor::from(s, j.at("data").get<std::vector<double>>());
}

nlohmann::json ParamStore::to_json() const {
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, t] : params_) tensors[name] = tensor_to_json(t);
    return {{"format", "susa-tensors"}, {"version", 1}, {"tensors", tensors}};
}

void ParamStore::load_json(const nlohmann::json& archive) {
    if (archive.value("format", "") != "susa-tensors")
        throw std::runtime_error("parameter archive: missing or wrong 'format' tag");
    if (archive.value("version", 0) != 1)
        throw std::runtime_error(fmt::format("parameter archive: unsupported version {}", archive.value("version", 0)));
    const auto& tensors = archive.at("tensors");
    for (auto& [name, t] : params_) {
        if (!tensors.contains(name)) throw std::runtime_error(fmt::format("parameter archive: missing '{}'", name));
        Tensor src = tensor_from_json(tensors.at(name));
        if (!(src.shape() == t.shape()))
            throw std::runtime_error(fmt::format("parameter archive: '{}' has shape {}, model expects {}", name,
                                                 src.shape().str(), t.shape().str()));
        auto dst = t.mutable_data();
        std::copy(src.data().begin(), src.data().end(), dst.begin());
    }
}

}  // namespace susa
