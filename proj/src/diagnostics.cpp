#include "susa/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "susa/agent.hpp"
#include "susa/rng.hpp"
#include "susa/trainer.hpp"

namespace susa::diagnostics {
namespace {

Tensor random_param(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(s.size());
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::parameter(s, std::move(v));
}

Tensor random_const(Rng& rng, Shape s) {
    std::vector<double> v(s.size());
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from(s, std::move(v));
}

// Values bounded away from zero (relu kink, division, log).
Tensor away_from_zero(Rng& rng, Shape s, bool positive) {
    std::vector<double> v(s.size());
    for (double& x : v) {
        x = rng.uniform(0.1, 1.5);
        if (!positive && rng.bernoulli(0.5)) x = -x;
    }
    return Tensor::parameter(s, std::move(v));
}

Tensor weighted(const Tensor& y, const Tensor& w) { return sum(elementwise_mul(y, w)); }

struct Case {
    std::string name;
    // Builds inputs and the scalar function for one seed.
    std::function<std::pair<std::vector<Tensor>, ScalarFn>(Rng&)> make;
};

std::size_t dim(Rng& rng) { return std::size_t(rng.between(1, 8)); }

std::vector<Case> cases() {
    std::vector<Case> out;
    auto unary = [&](std::string name, std::function<Tensor(const Tensor&)> op, int domain) {
        // domain: 0 any, 1 nonzero, 2 positive
        out.push_back({name, [op, domain](Rng& rng) {
                           Shape s{dim(rng), dim(rng)};
                           Tensor x = domain == 0 ? random_param(rng, s) : away_from_zero(rng, s, domain == 2);
                           Tensor w = random_const(rng, op(x.detach()).shape());
                           ScalarFn f = [op, w](std::span<const Tensor> in) { return weighted(op(in[0]), w); };
                           return std::pair{std::vector<Tensor>{x}, f};
                       }});
    };
    unary("tanh", [](const Tensor& x) { return tanh(x); }, 0);
    unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, 0);
    unary("relu", [](const Tensor& x) { return relu(x); }, 1);
    unary("exp", [](const Tensor& x) { return exp(x); }, 0);
    unary("log", [](const Tensor& x) { return log(x); }, 2);
    unary("transpose", [](const Tensor& x) { return transpose(x); }, 0);
    unary("scalar_mul", [](const Tensor& x) { return scalar_mul(x, -1.7); }, 0);
    unary("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }, 0);
    unary("softmax_rows", [](const Tensor& x) { return softmax(x, 1); }, 0);
    unary("softmax_cols", [](const Tensor& x) { return softmax(x, 0); }, 0);
    unary("log_softmax", [](const Tensor& x) { return log_softmax(x, 1); }, 0);
    unary("mean_rows", [](const Tensor& x) { return mean(x, 1); }, 0);
    unary("mean_cols", [](const Tensor& x) { return mean(x, 0); }, 0);
    unary("max_rows", [](const Tensor& x) { return max(x, 1); }, 0);
    unary("max_cols", [](const Tensor& x) { return max(x, 0); }, 0);
    unary("sum", [](const Tensor& x) { return scalar_mul(sum(x), 1.0); }, 0);

    out.push_back({"matmul", [](Rng& rng) {
                       const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
                       Tensor a = random_param(rng, {m, k}), b = random_param(rng, {k, n});
                       Tensor w = random_const(rng, {m, n});
                       ScalarFn f = [w](std::span<const Tensor> in) { return weighted(matmul(in[0], in[1]), w); };
                       return std::pair{std::vector<Tensor>{a, b}, f};
                   }});
    auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> op) {
        out.push_back({name, [op](Rng& rng) {
                           Shape s{dim(rng), dim(rng)};
                           Tensor a = random_param(rng, s), b = random_param(rng, s);
                           Tensor w = random_const(rng, s);
                           ScalarFn f = [op, w](std::span<const Tensor> in) { return weighted(op(in[0], in[1]), w); };
                           return std::pair{std::vector<Tensor>{a, b}, f};
                       }});
    };
    binary("add", [](const Tensor& a, const Tensor& b) { return add(a, b); });
    binary("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); });
    binary("elementwise_mul", [](const Tensor& a, const Tensor& b) { return elementwise_mul(a, b); });

    out.push_back({"add_row_broadcast", [](Rng& rng) {
                       const std::size_t m = dim(rng), n = dim(rng);
                       Tensor a = random_param(rng, {m, n}), b = random_param(rng, {1, n});
                       Tensor w = random_const(rng, {m, n});
                       ScalarFn f = [w](std::span<const Tensor> in) { return weighted(add(in[0], in[1]), w); };
                       return std::pair{std::vector<Tensor>{a, b}, f};
                   }});
    out.push_back({"scalar_mul_tensor", [](Rng& rng) {
                       Shape s{dim(rng), dim(rng)};
                       Tensor a = random_param(rng, s), k = random_param(rng, {1, 1});
                       Tensor w = random_const(rng, s);
                       ScalarFn f = [w](std::span<const Tensor> in) { return weighted(scalar_mul(in[0], in[1]), w); };
                       return std::pair{std::vector<Tensor>{a, k}, f};
                   }});
    out.push_back({"scalar_div", [](Rng& rng) {
                       Shape s{dim(rng), dim(rng)};
                       Tensor a = random_param(rng, s), k = away_from_zero(rng, {1, 1}, false);
                       Tensor w = random_const(rng, s);
                       ScalarFn f = [w](std::span<const Tensor> in) { return weighted(scalar_div(in[0], in[1]), w); };
                       return std::pair{std::vector<Tensor>{a, k}, f};
                   }});
    out.push_back({"scale_rows", [](Rng& rng) {
                       const std::size_t m = dim(rng), n = dim(rng);
                       Tensor a = random_param(rng, {m, n}), s = random_param(rng, {m, 1});
                       Tensor w = random_const(rng, {m, n});
                       ScalarFn f = [w](std::span<const Tensor> in) { return weighted(scale_rows(in[0], in[1]), w); };
                       return std::pair{std::vector<Tensor>{a, s}, f};
                   }});
    out.push_back({"concat", [](Rng& rng) {
                       const int axis = int(rng.below(2));
                       const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
                       Shape sa{m, n}, sb = axis == 0 ? Shape{k, n} : Shape{m, k};
                       Tensor a = random_param(rng, sa), b = random_param(rng, sb);
                       Shape so = axis == 0 ? Shape{m + k, n} : Shape{m, n + k};
                       Tensor w = random_const(rng, so);
                       ScalarFn f = [w, axis](std::span<const Tensor> in) {
                           return weighted(concat({in[0], in[1]}, axis), w);
                       };
                       return std::pair{std::vector<Tensor>{a, b}, f};
                   }});
    out.push_back({"layer_norm", [](Rng& rng) {
                       const std::size_t m = dim(rng), n = std::size_t(rng.between(2, 8));
                       Tensor x = random_param(rng, {m, n}), g = random_param(rng, {1, n}), b = random_param(rng, {1, n});
                       Tensor w = random_const(rng, {m, n});
                       ScalarFn f = [w](std::span<const Tensor> in) { return weighted(layer_norm(in[0], in[1], in[2]), w); };
                       return std::pair{std::vector<Tensor>{x, g, b}, f};
                   }});
    out.push_back({"cosine_similarity", [](Rng& rng) {
                       const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
                       Tensor a = random_param(rng, {m, n}), b = random_param(rng, {k, n});
                       Tensor w = random_const(rng, {m, k});
                       ScalarFn f = [w](std::span<const Tensor> in) {
                           return weighted(cosine_similarity(in[0], in[1]), w);
                       };
                       return std::pair{std::vector<Tensor>{a, b}, f};
                   }});
    out.push_back({"cross_entropy", [](Rng& rng) {
                       const std::size_t n = dim(rng);
                       Tensor x = random_param(rng, {1, n});
                       const std::size_t target = rng.below(n);
                       ScalarFn f = [target](std::span<const Tensor> in) { return cross_entropy(in[0], target); };
                       return std::pair{std::vector<Tensor>{x}, f};
                   }});
    out.push_back({"cross_entropy_rows", [](Rng& rng) {
                       const std::size_t m = dim(rng), n = dim(rng);
                       Tensor x = random_param(rng, {m, n});
                       std::vector<std::size_t> targets(m);
                       for (auto& t : targets) t = rng.below(n);
                       ScalarFn f = [targets](std::span<const Tensor> in) { return cross_entropy_rows(in[0], targets); };
                       return std::pair{std::vector<Tensor>{x}, f};
                   }});
    out.push_back({"select_rows", [](Rng& rng) {
                       const std::size_t m = dim(rng), n = dim(rng), k = dim(rng);
                       Tensor x = random_param(rng, {m, n});
                       std::vector<std::size_t> rows(k);
                       for (auto& r : rows) r = rng.below(m);
                       Tensor w = random_const(rng, {k, n});
                       ScalarFn f = [rows, w](std::span<const Tensor> in) { return weighted(select_rows(in[0], rows), w); };
                       return std::pair{std::vector<Tensor>{x}, f};
                   }});
    out.push_back({"reshape", [](Rng& rng) {
                       const std::size_t m = dim(rng), n = dim(rng);
                       Tensor x = random_param(rng, {m, n});
                       Tensor w = random_const(rng, {n, m});
                       ScalarFn f = [w, n, m](std::span<const Tensor> in) { return weighted(reshape(in[0], {n, m}), w); };
                       return std::pair{std::vector<Tensor>{x}, f};
                   }});
    out.push_back({"take", [](Rng& rng) {
                       const std::size_t b = dim(rng), m = dim(rng), n = dim(rng);
                       Tensor table = random_param(rng, {1, b});
                       std::vector<std::size_t> idx(m * n);
                       for (auto& i : idx) i = rng.below(b);
                       Tensor w = random_const(rng, {m, n});
                       ScalarFn f = [idx, w, m, n](std::span<const Tensor> in) {
                           return weighted(take(in[0], idx, {m, n}), w);
                       };
                       return std::pair{std::vector<Tensor>{table}, f};
                   }});
    return out;
}

}  // namespace

std::vector<OpCheck> check_ops(std::size_t seeds, double eps, double tol) {
    std::vector<OpCheck> out;
    for (const Case& c : cases()) {
        OpCheck check{c.name};
        for (std::size_t s = 0; s < seeds; ++s) {
            Rng rng(derive(0x6C4A, {tag(c.name), s}));
            auto [inputs, f] = c.make(rng);
            GradCheckOptions o;
            o.eps = eps;
            o.tol = tol;
            const GradCheckReport r = grad_check(f, inputs, o);
            check.worst = std::max(check.worst, r.worst());
            check.checked += r.checked;
        }
        check.passed = check.worst < tol;
        out.push_back(std::move(check));
    }
    return out;
}

LossCheck check_episode_loss(std::size_t params, std::size_t nodes, std::uint64_t seed, double eps, double tol) {
    WorldParams wp;
    wp.min_nodes = wp.max_nodes = nodes;
    wp.seed = derive(seed, {tag("fixture")});
    ModelConfig mc;
    mc.seed = seed;
    SusaModel model(mc, wp);
    WorldCache worlds(wp);
    const World& world = worlds.get(wp.seed);

    // Longest shortest path in the world for the fine-grained episode; its
    // reverse as the goal-oriented one.
    NodeId a = 0, b = 0;
    double best = -1;
    for (NodeId u = 0; u < world.graph.size(); ++u)
        for (NodeId v = 0; v < world.graph.size(); ++v)
            if (world.graph.geodesic(u, v) > best) {
                best = world.graph.geodesic(u, v);
                a = u;
                b = v;
            }
    std::vector<Episode> batch = {
        make_episode_between(world, a, b, EpisodeMode::FineGrained, "fixture-fine", 1),
        make_episode_between(world, b, a, EpisodeMode::GoalOriented, "fixture-goal", 2),
    };
    for (auto& ep : batch) ep.world_seed = wp.seed;

    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    for (const auto& [name, t] : model.params()) {
        inputs.push_back(t);
        names.push_back(name);
    }
    ScalarFn f = [&](std::span<const Tensor>) {
        return batch_loss(model, worlds, batch, LossWeights{}, true, false, seed).total;
    };

    // Sample among elements that receive gradient; a zero gradient compared
    // with a zero difference quotient checks nothing.
    model.params().zero_grad();
    LossCheck out;
    out.world_nodes = world.graph.size();
    {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = f({});
        out.loss = loss.item();
        tape.backward(loss);
    }
    std::vector<std::pair<std::size_t, std::size_t>> live;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto g = inputs[i].grad();
        for (std::size_t e = 0; e < g.size(); ++e)
            if (std::abs(g[e]) > 1e-9) live.emplace_back(i, e);
    }
    model.params().zero_grad();
    Rng rng(derive(seed, {tag("grad_check")}));
    shuffle(live, rng);
    if (live.size() > params) live.resize(params);

    GradCheckOptions o;
    o.eps = eps;
    o.tol = tol;
    o.elements = live;
    out.report = grad_check(f, inputs, o);
    for (auto [i, e] : live) out.sampled.push_back(fmt::format("{}[{}]", names[i], e));
    model.params().zero_grad();
    return out;
}

}  // namespace susa::diagnostics
