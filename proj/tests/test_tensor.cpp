#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "moevl/grad_check.hpp"
#include "moevl/ops.hpp"
#include "moevl/tensor.hpp"

using namespace moevl;

namespace {

Tensor rand_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    return Tensor::uniform(std::move(s), rng, lo, hi);
}

// Values bounded away from zero, for kinked activations under finite differences.
Tensor rand_tensor_nonzero(Rng& rng, Shape s) {
    Tensor t = Tensor::zeros(std::move(s));
    for (double& v : t.data) {
        double sign = rng.next_uniform() < 0.5 ? -1.0 : 1.0;
        v = sign * rng.next_uniform(0.2, 1.2);
    }
    return t;
}

// Nonlinear scalar readout so finite differences exercise the full backward.
Tensor sq_sum(const Tensor& y) { return ops::sum(ops::mul(y, y)); }

int rand_dim(Rng& rng) { return 1 + rng.next_int(8); }

}  // namespace

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor::zeros({}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2, 2, 2, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({3, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK(Tensor::zeros({2, 3, 4}).size() == 24);
    CHECK(Tensor::scalar(5.0).item() == 5.0);
    CHECK_THROWS_AS(Tensor::zeros({2, 2}).item(), ContractError);
}

TEST_CASE("matmul products and shape errors") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {1, 1});
    Tensor c = ops::matmul(a, b);
    CHECK(c.shape == Shape{2, 1});
    CHECK(c.data[0] == 3.0);
    CHECK(c.data[1] == 7.0);

    Tensor wide({3, 2}, std::vector<double>(6, 1.0));
    CHECK_THROWS_WITH_AS(ops::matmul(a, wide) , doctest::Contains("[2x2]"), ShapeError);
    CHECK_THROWS_WITH_AS(ops::matmul(a, wide) , doctest::Contains("[3x2]"), ShapeError);
}

TEST_CASE("gelu fixed points") {
    Tensor x({3}, {0.0, 1.0, -1.0});
    Tensor y = ops::gelu(x);
    CHECK(y.data[0] == 0.0);
    CHECK(y.data[1] == doctest::Approx(0.8413447460685429).epsilon(1e-12));
    CHECK(y.data[1] == doctest::Approx(0.841345).epsilon(1e-6));
    // gelu(-1) = -1 * P(Z <= -1)
    CHECK(y.data[2] == doctest::Approx(-(1.0 - 0.8413447460685429)).epsilon(1e-12));
}

TEST_CASE("softmax values, normalization, shift invariance") {
    Tensor x({2}, {std::log(2.0), 0.0});
    Tensor p = ops::softmax(x, 0);
    CHECK(p.data[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(p.data[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor m = rand_tensor(rng, {1 + rng.next_int(6), 1 + rng.next_int(6)}, -40.0, 40.0);
        Tensor pm = ops::softmax(m, 1);
        for (int i = 0; i < pm.rows(); ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < pm.cols(); ++j) row_sum += pm.at(i, j);
            CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
        }
        Tensor shifted = ops::softmax(ops::affine(m, 1.0, 100.0), 1);
        for (std::size_t i = 0; i < pm.data.size(); ++i) {
            CHECK(shifted.data[i] == doctest::Approx(pm.data[i]).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(ops::softmax(x, 1), IndexError);
    CHECK_THROWS_AS(ops::softmax(x, -1), IndexError);
}

TEST_CASE("layer_norm normalizes rows") {
    Tensor x({1, 2}, {1.0, -1.0});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor y = ops::layer_norm(x, gamma, beta, 1e-12);
    CHECK(y.data[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(y.data[1] == doctest::Approx(-1.0).epsilon(1e-6));

    // Zero row stays zero for any eps.
    Tensor z = ops::layer_norm(Tensor::zeros({1, 4}), Tensor::full({4}, 1.0),
                               Tensor::zeros({4}));
    for (double v : z.data) CHECK(v == 0.0);

    CHECK_THROWS_AS(ops::layer_norm(x, Tensor::full({3}, 1.0), beta), ShapeError);
}

TEST_CASE("cross_entropy closed forms") {
    Tensor uniform({1, 4}, {0.0, 0.0, 0.0, 0.0});
    CHECK(ops::cross_entropy(uniform, {2}).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor peaked({1, 4}, {30.0, 0.0, 0.0, 0.0});
    CHECK(ops::cross_entropy(peaked, {0}).item() < 1e-9);

    Tensor two({2, 3}, {1, 1, 1, 5, 0, 0});
    double row0 = std::log(3.0);
    double row1 = std::log(std::exp(5.0) + 2.0) - 5.0;
    CHECK(ops::cross_entropy(two, {0, 0}).item() ==
          doctest::Approx(0.5 * (row0 + row1)).epsilon(1e-12));

    CHECK_THROWS_AS(ops::cross_entropy(uniform, {4}), IndexError);
    CHECK_THROWS_AS(ops::cross_entropy(uniform, {0, 1}), ShapeError);
}

TEST_CASE("self_attention degenerate forms") {
    Rng rng(3);
    int d = 4;
    Tensor wq = rand_tensor(rng, {d, d});
    Tensor wk = rand_tensor(rng, {d, d});
    Tensor wv = rand_tensor(rng, {d, d});

    // One token: attention weights are [1], output is x Wv.
    Tensor x1 = rand_tensor(rng, {1, d});
    Tensor out1 = ops::self_attention(x1, wq, wk, wv);
    Tensor direct = ops::matmul(x1, wv);
    for (std::size_t i = 0; i < out1.data.size(); ++i) {
        CHECK(out1.data[i] == doctest::Approx(direct.data[i]).epsilon(1e-12));
    }

    // Zero queries/keys give uniform weights: mean pooling of value rows.
    Tensor xn = rand_tensor(rng, {5, d});
    Tensor pooled = ops::self_attention(xn, Tensor::zeros({d, d}), Tensor::zeros({d, d}), wv);
    Tensor mean_v = ops::mean_rows(ops::matmul(xn, wv));
    for (int i = 0; i < pooled.rows(); ++i)
        for (int j = 0; j < pooled.cols(); ++j) {
            CHECK(pooled.at(i, j) == doctest::Approx(mean_v.at(0, j)).epsilon(1e-12));
        }

    CHECK_THROWS_AS(ops::self_attention(xn, Tensor::zeros({d, d + 1}), wk, wv), ShapeError);
}

TEST_CASE("merge_rows grouping and tail padding") {
    Tensor x = Tensor::zeros({8, 4});
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 4; ++j) x.at(i, j) = 10.0 * i + j;

    Tensor merged = ops::merge_rows(x, 4);
    CHECK(merged.shape == Shape{2, 16});
    for (int c = 0; c < 4; ++c)
        for (int j = 0; j < 4; ++j) {
            CHECK(merged.at(0, c * 4 + j) == 10.0 * c + j);
            CHECK(merged.at(1, c * 4 + j) == 10.0 * (4 + c) + j);
        }

    // 10 rows with k=4 pad to 12 by repeating the last row twice.
    Tensor y = Tensor::zeros({10, 2});
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 2; ++j) y.at(i, j) = 10.0 * i + j;
    Tensor padded = ops::merge_rows(y, 4);
    CHECK(padded.shape == Shape{3, 8});
    CHECK(padded.at(2, 0) == 80.0);
    CHECK(padded.at(2, 2) == 90.0);
    CHECK(padded.at(2, 4) == 90.0);
    CHECK(padded.at(2, 6) == 90.0);

    CHECK_THROWS_AS(ops::merge_rows(x, 0), ConfigError);
}

TEST_CASE("backward accumulates over reuse and multiple paths") {
    Tensor x({3}, {1.0, -2.0, 3.0});
    x.set_requires_grad(true);

    Tape tape;
    {
        TapeGuard guard(tape);
        Tensor loss = ops::sum(ops::mul(x, x));
        auto leaf_grads = tape.backward(loss);
        CHECK(leaf_grads.size() == 1);
    }
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(-4.0).epsilon(1e-12));
    CHECK(x.grad()[2] == doctest::Approx(6.0).epsilon(1e-12));

    // x + x: both paths contribute.
    x.zero_grad();
    Tape tape2;
    {
        TapeGuard guard(tape2);
        Tensor loss = ops::sum(ops::add(x, x));
        tape2.backward(loss);
    }
    for (double g : x.grad()) CHECK(g == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("backward contract errors") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);

    Tape tape;
    TapeGuard guard(tape);
    Tensor not_scalar = ops::mul(x, x);
    CHECK_THROWS_AS(tape.backward(not_scalar), ContractError);

    Tensor never_recorded = Tensor::scalar(1.0);
    CHECK_THROWS_AS(tape.backward(never_recorded), ContractError);
}

TEST_CASE("no tape means no graph") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tensor y = ops::mul(x, x);  // no active tape
    Tape tape;
    TapeGuard guard(tape);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    CHECK(tape.node_count() == 0);
}

TEST_CASE("finite differences validate every primitive") {
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(99, "fd-primitives", seed));
        const int m = rand_dim(rng), k = rand_dim(rng), n = rand_dim(rng);

        {
            Tensor a = rand_tensor(rng, {m, k});
            Tensor b = rand_tensor(rng, {k, n});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::matmul(a, b)); }, {{"a", &a}, {"b", &b}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor a = rand_tensor(rng, {m, n});
            Tensor b = rand_tensor(rng, {m, n});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::add(ops::mul(a, b), ops::affine(a, 0.5, -1.0))); },
                {{"a", &a}, {"b", &b}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor(rng, {m, n});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::transpose(x)); }, {{"x", &x}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor mat = rand_tensor(rng, {m, n});
            Tensor vec = rand_tensor(rng, {n});
            Tensor col = rand_tensor(rng, {m, 1});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::scale_rows(ops::add_rowvec(mat, vec), col)); },
                {{"mat", &mat}, {"vec", &vec}, {"col", &col}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor_nonzero(rng, {m, n});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::relu(x)); }, {{"x", &x}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor(rng, {m, n});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::logistic(ops::gelu(x))); }, {{"x", &x}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor(rng, {m, n}, -3.0, 3.0);
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::softmax(x, 1)); }, {{"x", &x}});
            CHECK(report.max_rel_err() < 1e-4);
            report = finite_diff_check(
                [&] { return sq_sum(ops::softmax(x, 0)); }, {{"x", &x}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor(rng, {m, n});
            Tensor gamma = rand_tensor(rng, {n}, 0.5, 1.5);
            Tensor beta = rand_tensor(rng, {n});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::layer_norm(x, gamma, beta)); },
                {{"x", &x}, {"gamma", &gamma}, {"beta", &beta}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            const int classes = 2 + rng.next_int(6);
            Tensor logits = rand_tensor(rng, {m, classes}, -2.0, 2.0);
            std::vector<int> targets;
            for (int i = 0; i < m; ++i) targets.push_back(rng.next_int(classes));
            auto report = finite_diff_check(
                [&] { return ops::cross_entropy(logits, targets); }, {{"logits", &logits}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor(rng, {m, n});
            Tensor table = rand_tensor(rng, {4, n});
            std::vector<int> ids = {rng.next_int(4), rng.next_int(4), rng.next_int(4)};
            auto report = finite_diff_check(
                [&] {
                    Tensor joined = ops::concat_rows(x, ops::gather_rows(table, ids));
                    return sq_sum(ops::mean_rows(joined));
                },
                {{"x", &x}, {"table", &table}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            Tensor x = rand_tensor(rng, {m, n});
            int j = rng.next_int(n);
            int merge = 1 + rng.next_int(3);
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::merge_rows(ops::select_col(x, j), merge)); },
                {{"x", &x}});
            CHECK(report.max_rel_err() < 1e-4);
        }
        {
            const int d = 2 + rng.next_int(4);
            Tensor x = rand_tensor(rng, {m, d});
            Tensor wq = rand_tensor(rng, {d, d});
            Tensor wk = rand_tensor(rng, {d, d});
            Tensor wv = rand_tensor(rng, {d, d});
            auto report = finite_diff_check(
                [&] { return sq_sum(ops::self_attention(x, wq, wk, wv)); },
                {{"x", &x}, {"wq", &wq}, {"wk", &wk}, {"wv", &wv}});
            CHECK(report.max_rel_err() < 1e-4);
        }
    }
}

TEST_CASE("finite differences flag a corrupted backward rule") {
    Tensor x({2, 2}, {0.4, -0.7, 1.1, 0.2});

    auto broken_square = [&x]() {
        Tensor out = x;
        out.requires_grad = false;
        for (double& v : out.data) v = v * v;
        if (Tape* tp = Tape::active()) {
            auto px = tp->node_for(x);
            if (px >= 0) {
                tp->record(out, {px},
                           [px, xdata = x.data](const std::vector<double>& og, Tape& t) {
                               std::vector<double> dx(og.size());
                               // Deliberately wrong: d(x^2)/dx recorded as 3x.
                               for (std::size_t i = 0; i < og.size(); ++i)
                                   dx[i] = og[i] * 3.0 * xdata[i];
                               t.accumulate(px, dx);
                           });
            }
        }
        return out;
    };

    auto report = finite_diff_check([&] { return ops::sum(broken_square()); }, {{"x", &x}});
    CHECK(report.max_rel_err() > 1e-2);
}

TEST_CASE("finite_diff_check input contracts") {
    Tensor x({2}, {1.0, 2.0});
    auto f = [&] { return ops::sum(ops::mul(x, x)); };
    CHECK_THROWS_AS(finite_diff_check(f, {{"x", &x}}, 1e-9), ConfigError);
    CHECK_THROWS_AS(finite_diff_check(f, {{"x", &x}}, 1e-3), ConfigError);

    Tensor bad({1}, {std::numeric_limits<double>::infinity()});
    CHECK_THROWS_AS(
        finite_diff_check([&] { return ops::sum(bad); }, {{"bad", &bad}}),
        NumericError);
}

TEST_CASE("dropout scaling and backward mask reuse") {
    Tensor x = Tensor::full({4, 4}, 1.0);
    x.set_requires_grad(true);

    Rng rng(123);
    Tape tape;
    Tensor dropped;
    {
        TapeGuard guard(tape);
        dropped = ops::dropout(x, 0.4, rng);
        tape.backward(ops::sum(dropped));
    }
    // Surviving entries are scaled by 1/(1-p); the gradient reuses the mask.
    for (std::size_t i = 0; i < dropped.data.size(); ++i) {
        if (dropped.data[i] != 0.0) {
            CHECK(dropped.data[i] == doctest::Approx(1.0 / 0.6).epsilon(1e-12));
        }
        CHECK(x.grad()[i] == dropped.data[i]);
    }

    Rng rng2(5);
    CHECK_THROWS_AS(ops::dropout(x, 1.0, rng2), ConfigError);
    CHECK_THROWS_AS(ops::dropout(x, -0.1, rng2), ConfigError);
}

TEST_CASE("identical op sequences are bit-identical") {
    auto run = [] {
        Rng rng(77);
        Tensor x = rand_tensor(rng, {6, 5});
        Tensor w = rand_tensor(rng, {5, 5});
        Tensor y = ops::self_attention(x, w, w, w);
        return ops::layer_norm(y, Tensor::full({5}, 1.0), Tensor::zeros({5})).data;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);
}
