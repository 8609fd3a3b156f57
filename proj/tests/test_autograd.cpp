#include "blend/autograd.hpp"
#include "blend/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace blend;
using blend::testing::check_gradients;
using blend::testing::project;
using blend::testing::random_tensor;

namespace {

// Gradient check of a parameter-free op with a second random operand.
double op_error(std::vector<int> shape, const std::function<Var(Graph&, Var)>& op, std::uint64_t seed = 3)
{
    ParamSet none;
    Rng rng(seed);
    const Tensor x = random_tensor(std::move(shape), rng);
    return check_gradients(none, x, [&](const Scope& s, Var in) { return project(s.g(), op(s.g(), in), 17); })
        .rel_error;
}

} // namespace

TEST_CASE("elementwise and structural ops match finite differences")
{
    Rng rng(2);
    const Tensor other = random_tensor({2, 3, 4}, rng);
    const Tensor vec = random_tensor({6}, rng);
    const Tensor map = random_tensor({1, 3, 4}, rng);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::mul(g, x, g.constant(other)); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::sub(g, g.constant(other), x); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::leaky_relu(g, x, 0.2); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::sigmoid(g, x); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::tanh(g, x); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::softplus(g, x); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::square(g, ops::affine(g, x, 2.0, 0.5)); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::broadcast_mul(g, g.constant(map), x); }) < 1e-7);
    CHECK(op_error({1, 3, 4}, [&](Graph& g, Var m) { return ops::broadcast_mul(g, m, g.constant(other)); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::channel_scale(g, x, g.constant(vec), 3); }) < 1e-7);
    CHECK(op_error({6}, [&](Graph& g, Var v) { return ops::channel_scale(g, g.constant(other), v, 1); }) < 1e-7);
    CHECK(op_error({6}, [&](Graph& g, Var v) { return ops::scale_by_entry(g, g.constant(other), v, 4); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::concat(g, {x, g.constant(other), x}); }) < 1e-7);
    CHECK(op_error({8, 3, 4}, [&](Graph& g, Var x) { return ops::pixel_shuffle(g, x, 2); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::bilinear_resize(g, x, 5, 9); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::global_avg_pool(g, x); }) < 1e-7);
    CHECK(op_error({6}, [&](Graph& g, Var x) { return ops::softmax_columns(g, x, 2, 3); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::l1_loss(g, x, g.constant(other)); }) < 1e-7);
    CHECK(op_error({2, 3, 4}, [&](Graph& g, Var x) { return ops::mean(g, x); }) < 1e-7);
}

TEST_CASE("conv, transposed conv and linear gradients")
{
    Rng rng(4);
    ParamSet ps;
    ps.add("w", random_tensor({3, 2, 3, 3}, rng));
    ps.add("b", random_tensor({3}, rng));
    ps.add("t", random_tensor({2, 3, 3, 3}, rng));
    ps.add("tb", random_tensor({3}, rng));
    ps.add("l", random_tensor({4, 24}, rng));
    ps.add("lb", random_tensor({4}, rng));
    const Tensor x = random_tensor({2, 4, 3}, rng);
    for (ConvSpec spec : {ConvSpec{}, ConvSpec{2, 1, 1, 1}, ConvSpec{1, -1, -1, 2}, ConvSpec{2, 1, 2, 1}}) {
        const auto r = check_gradients(ps, x, [&](const Scope& s, Var in) {
            return project(s.g(), ops::conv2d(s.g(), in, s.p("w"), s.p("b"), spec), 9);
        });
        CHECK(r.rel_error < 1e-7);
    }
    const auto t = check_gradients(ps, x, [&](const Scope& s, Var in) {
        Var y = ops::conv_transpose2d(s.g(), in, s.p("t"), s.p("tb"), 2, 1, 1);
        REQUIRE(s.g().value(y).height() == 8);
        return project(s.g(), y, 9);
    });
    CHECK(t.rel_error < 1e-7);
    const auto l = check_gradients(ps, x, [&](const Scope& s, Var in) {
        return project(s.g(), ops::linear(s.g(), in, s.p("l"), s.p("lb")), 9);
    });
    CHECK(l.rel_error < 1e-7);
}

TEST_CASE("frozen parameters pass gradients but collect none")
{
    ParamSet ps;
    ps.add("a", Tensor({1}, 3.0));
    ps.add("b", Tensor({1}, 5.0));
    Graph g;
    Scope s{&g, &ps, [](const std::string& n) { return n == "a"; }};
    Var x = g.leaf(Tensor({1}, 2.0));
    Var y = ops::mul(g, ops::mul(g, s.p("a"), s.p("b")), x);
    g.backward(y);
    GradMap grads;
    g.collect_grads(ps, grads);
    CHECK(grads.count("a") == 1);
    CHECK(grads.count("b") == 0);
    CHECK(grads["a"][0] == 10.0);
    CHECK(g.grad(x)[0] == 15.0);
}

TEST_CASE("shape errors")
{
    Graph g;
    Var a = g.constant(Tensor({2, 3, 3}));
    Var b = g.constant(Tensor({2, 3, 4}));
    CHECK_THROWS_AS(ops::add(g, a, b), Error);
    CHECK_THROWS_AS(ops::softmax_columns(g, g.constant(Tensor({5})), 2, 3), Error);
}
