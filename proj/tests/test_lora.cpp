#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "moevl/errors.hpp"
#include "moevl/grad_check.hpp"
#include "moevl/lora.hpp"
#include "moevl/ops.hpp"
#include "moevl/rng.hpp"

using namespace moevl;

namespace {

double rel_diff(const Tensor& a, const Tensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        num += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

LoraAdapter random_adapter(int d_in, int d_out, int rank, double alpha, Rng& rng) {
    auto adapter = make_adapter("test", "w", d_in, d_out, rank, alpha, 0.0, rng);
    adapter.b = Tensor::uniform({d_out, rank}, rng, -0.5, 0.5);
    return adapter;
}

}  // namespace

TEST_CASE("a fresh adapter is an exact no-op") {
    Rng rng(2);
    for (int seed = 0; seed < 5; ++seed) {
        Rng srng(derive_seed(13, "fresh", static_cast<std::uint64_t>(seed)));
        Tensor w = Tensor::uniform({6, 4}, srng, -1.0, 1.0);
        Tensor x = Tensor::uniform({3, 6}, srng, -2.0, 2.0);
        auto adapter = make_adapter("ver", "w", 6, 4, 2, 4.0, 0.05, srng);

        auto with = lora_forward(x, w, adapter, false, rng);
        auto without = ops::matmul(x, w);
        CHECK(with.data == without.data);

        auto merged = lora_merge("w", w, adapter);
        CHECK(merged.data == w.data);
    }
}

TEST_CASE("alpha zero silences a trained adapter") {
    Rng rng(5);
    Tensor w = Tensor::uniform({4, 4}, rng, -1.0, 1.0);
    Tensor x = Tensor::uniform({2, 4}, rng, -1.0, 1.0);
    auto adapter = random_adapter(4, 4, 2, 0.0, rng);
    CHECK(lora_forward(x, w, adapter, false, rng).data == ops::matmul(x, w).data);
}

TEST_CASE("rank-1 adapter reproduces the hand-computed product") {
    LoraAdapter adapter;
    adapter.adapter_name = "hand";
    adapter.target = "w";
    adapter.rank = 1;
    adapter.alpha = 1.0;
    adapter.a = Tensor({1, 2}, {1.0, 0.0});
    adapter.b = Tensor({2, 1}, {1.0, 0.0});

    Tensor zero_base = Tensor::zeros({2, 2});
    Tensor x({1, 2}, {3.0, 5.0});
    Rng rng(1);
    auto y = lora_forward(x, zero_base, adapter, false, rng);
    CHECK(y.at(0, 0) == 3.0);
    CHECK(y.at(0, 1) == 0.0);
}

TEST_CASE("merged weights reproduce eval-mode forwards") {
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(derive_seed(17, "merge", static_cast<std::uint64_t>(trial)));
        const int d_in = 2 + rng.next_int(6);
        const int d_out = 2 + rng.next_int(6);
        const int rank = 1 + rng.next_int(std::min(d_in, d_out));
        Tensor w = Tensor::uniform({d_in, d_out}, rng, -1.0, 1.0);
        Tensor x = Tensor::uniform({1 + rng.next_int(4), d_in}, rng, -2.0, 2.0);
        auto adapter = random_adapter(d_in, d_out, rank, 1.0 + rng.next_uniform() * 7.0, rng);

        auto direct = lora_forward(x, w, adapter, false, rng);
        auto merged_out = ops::matmul(x, lora_merge("w", w, adapter));
        CHECK(rel_diff(merged_out, direct) < 1e-12);

        auto recovered = ops::add(lora_merge("w", w, adapter),
                                  ops::affine(lora_delta(adapter), -1.0, 0.0));
        CHECK(rel_diff(recovered, w) < 1e-12);
    }
}

TEST_CASE("construction rejects bad ranks and dropout") {
    Rng rng(3);
    CHECK_THROWS_WITH_AS(make_adapter("a", "w", 6, 4, 5, 4.0, 0.0, rng),
                         doctest::Contains("rank"), ConfigError);
    CHECK_THROWS_AS(make_adapter("a", "w", 6, 4, 0, 4.0, 0.0, rng), ConfigError);
    CHECK_THROWS_AS(make_adapter("a", "w", 6, 4, 2, 4.0, 1.0, rng), ConfigError);
    CHECK_THROWS_AS(make_adapter("a", "w", 6, 4, 2, 4.0, -0.1, rng), ConfigError);
    CHECK_NOTHROW(make_adapter("a", "w", 6, 4, 4, 4.0, 0.95, rng));
}

TEST_CASE("merge refuses a foreign target and nonconforming shapes") {
    Rng rng(9);
    Tensor w = Tensor::uniform({6, 4}, rng, -1.0, 1.0);
    auto adapter = make_adapter("ver", "decoder/0/attn/wq", 6, 4, 2, 4.0, 0.0, rng);
    CHECK_THROWS_WITH_AS(lora_merge("decoder/0/attn/wk", w, adapter),
                         doctest::Contains("targets decoder/0/attn/wq"), ContractError);

    Tensor wrong = Tensor::uniform({5, 4}, rng, -1.0, 1.0);
    CHECK_THROWS_AS(lora_merge("decoder/0/attn/wq", wrong, adapter), ShapeError);
    Tensor x = Tensor::uniform({2, 5}, rng, -1.0, 1.0);
    CHECK_THROWS_AS(lora_forward(x, wrong, adapter, false, rng), ShapeError);
}

TEST_CASE("training dropout is unbiased over masks") {
    Rng rng(21);
    Tensor w = Tensor::uniform({6, 4}, rng, -1.0, 1.0);
    Tensor x = Tensor::uniform({3, 6}, rng, 0.5, 2.0);
    auto adapter = random_adapter(6, 4, 3, 4.0, rng);
    adapter.dropout_p = 0.3;

    auto eval_out = lora_forward(x, w, adapter, false, rng);
    auto base_out = ops::matmul(x, w);

    Tensor mean_delta = Tensor::zeros(eval_out.shape);
    const int n_masks = 10000;
    Rng mask_rng(derive_seed(21, "masks"));
    for (int i = 0; i < n_masks; ++i) {
        auto out = lora_forward(x, w, adapter, true, mask_rng);
        for (std::size_t j = 0; j < out.data.size(); ++j) {
            mean_delta.data[j] += (out.data[j] - base_out.data[j]) / n_masks;
        }
    }
    Tensor eval_delta = Tensor::zeros(eval_out.shape);
    for (std::size_t j = 0; j < eval_delta.data.size(); ++j) {
        eval_delta.data[j] = eval_out.data[j] - base_out.data[j];
    }
    CHECK(rel_diff(mean_delta, eval_delta) < 0.02);
}

TEST_CASE("gradients flow through the adapter path") {
    for (int seed = 0; seed < 5; ++seed) {
        Rng rng(derive_seed(29, "lora-grad", static_cast<std::uint64_t>(seed)));
        Tensor w = Tensor::uniform({5, 3}, rng, -1.0, 1.0);
        Tensor x = Tensor::uniform({2, 5}, rng, -1.0, 1.0);
        auto adapter = random_adapter(5, 3, 2, 4.0, rng);

        std::vector<std::pair<std::string, Tensor*>> params = {
            {"a", &adapter.a}, {"b", &adapter.b}, {"x", &x}, {"w", &w}};
        auto loss_fn = [&]() {
            Rng drng(1);
            auto y = lora_forward(x, w, adapter, false, drng);
            return tether_loss(ops::sum(ops::mul(y, y)), params,
                               static_cast<std::uint64_t>(seed));
        };
        auto report = finite_diff_check(loss_fn, params);
        CHECK(report.max_rel_err() < 1e-4);
    }
}

TEST_CASE("the registry keeps named sets disjoint and selectable") {
    Rng rng(31);
    AdapterRegistry registry;

    AdapterSet ver{"ver", {make_adapter("ver", "decoder/0/attn/wq", 4, 4, 2, 4.0, 0.0, rng),
                           make_adapter("ver", "decoder/0/mlp/w1", 4, 8, 2, 4.0, 0.0, rng)}};
    AdapterSet dfew{"dfew", {make_adapter("dfew", "decoder/0/attn/wq", 4, 4, 2, 4.0, 0.0, rng)}};
    registry.add_set(ver);
    registry.add_set(dfew);

    SUBCASE("selection routes find_active to the chosen set only") {
        registry.select("dfew");
        CHECK(registry.active_name() == "dfew");
        REQUIRE(registry.find_active("decoder/0/attn/wq") != nullptr);
        CHECK(registry.find_active("decoder/0/attn/wq")->adapter_name == "dfew");
        CHECK(registry.find_active("decoder/0/mlp/w1") == nullptr);
    }

    SUBCASE("no selection means the bare base model") {
        registry.select("ver");
        registry.select_none();
        CHECK_FALSE(registry.has_active());
        CHECK(registry.find_active("decoder/0/attn/wq") == nullptr);
        CHECK(registry.active_name().empty());
    }

    SUBCASE("unknown names are lookup errors") {
        CHECK_THROWS_WITH_AS(registry.select("mafw"), doctest::Contains("mafw"), LookupError);
    }

    SUBCASE("duplicate set names are rejected") {
        CHECK_THROWS_AS(registry.add_set(AdapterSet{"ver", {}}), ConfigError);
    }

    SUBCASE("mutating one set leaves the others bit-identical") {
        registry.select("ver");
        auto dfew_before = registry.sets()[1].adapters[0];
        auto* wq = registry.find_active("decoder/0/attn/wq");
        REQUIRE(wq != nullptr);
        for (double& v : wq->b.data) v += 1.0;
        CHECK(registry.sets()[1].adapters[0].a.data == dfew_before.a.data);
        CHECK(registry.sets()[1].adapters[0].b.data == dfew_before.b.data);
    }
}
