#include <doctest.h>

#include "helpers.hpp"
#include "tmca/decoder.hpp"
#include "tmca/errors.hpp"

using namespace tmca;

namespace {

DecoderBlockOptions small_options() {
    DecoderBlockOptions o;
    o.in_channels = 16;
    o.out_channels = 8;
    o.skip_channels = 8;
    o.text_dim = 12;
    o.heads = 4;
    o.base_height = o.base_width = 2;
    return o;
}

TextFeatures random_text(int64_t b, int64_t k, int64_t valid_count, int64_t dim) {
    auto valid = torch::zeros({b, k}, torch::kBool);
    valid.narrow(1, 0, valid_count).fill_(true);
    auto words = torch::randn({b, k, dim}) * valid.unsqueeze(-1).to(torch::kFloat32);
    return {words, valid, words.sum(1) / static_cast<double>(valid_count)};
}

}  // namespace

TEST_SUITE("ltem") {
    TEST_CASE("worked 2x2 example") {
        const auto scores = torch::tensor({{std::log(2.0), 0.0, 0.0, 0.0}}, torch::kFloat64);
        const auto m = attention_map_from_scores(scores, 2, 2, 1.0);
        const std::vector<double> w = {0.4, 0.2, 0.2, 0.2}, r = {1.6, 0.8, 0.8, 0.8};
        for (int i = 0; i < 4; ++i) {
            CHECK(m.weights[0][i].item<double>() == doctest::Approx(w[i]).epsilon(1e-4));
            CHECK(m.rescaled.view(-1)[i].item<double>() == doctest::Approx(r[i]).epsilon(1e-4));
        }
        CHECK(m.upsampled.sizes() == std::vector<int64_t>{1, 1, 4, 4});
    }
    TEST_CASE("softmax sums to one, rescale has mean one, x2 shape") {
        torch::manual_seed(3);
        for (double tau : {0.1, 1.0, 5.0}) {
            Ltem ltem(12, 16);
            const auto m = ltem->forward(torch::randn({3, 16, 4, 4}), torch::randn({3, 12}), tau);
            CHECK(torch::allclose(m.weights.sum(1), torch::ones({3}), 0, 1e-6));
            CHECK((m.weights > 0).all().item<bool>());
            CHECK(torch::allclose(m.rescaled.mean({1, 2, 3}), torch::ones({3}), 0, 1e-6));
            CHECK(m.upsampled.sizes() == std::vector<int64_t>{3, 1, 8, 8});
        }
    }
    TEST_CASE("equal scores give an all-ones map") {
        const auto m = attention_map_from_scores(torch::full({2, 9}, 0.37), 3, 3, 0.5);
        CHECK(torch::allclose(m.upsampled, torch::ones({2, 1, 6, 6}), 0, 1e-6));
    }
    TEST_CASE("scores are the scaled dot product with the projected text") {
        torch::manual_seed(6);
        Ltem ltem(5, 4);
        auto feats = torch::randn({1, 4, 2, 2});
        auto tg = torch::randn({1, 5});
        const auto s = ltem->scores(feats, tg);
        const auto q = ltem->projection()->forward(tg)[0];
        for (int i = 0; i < 4; ++i) {
            const auto region = feats[0].flatten(1).select(1, i);
            CHECK(s[0][i].item<float>() == doctest::Approx((region * q).sum().item<float>() / 2.0f).epsilon(1e-5));
        }
    }
    TEST_CASE("non-positive temperature rejected") {
        CHECK_THROWS_AS(attention_map_from_scores(torch::zeros({1, 4}), 2, 2, 0.0), ConfigError);
    }
}

TEST_SUITE("decoder block") {
    TEST_CASE("stride-32 2x2 input gives 4x4 output") {
        torch::manual_seed(1);
        DecoderBlock block(small_options());
        const auto text = random_text(2, 6, 3, 12);
        const auto out = block->forward(torch::randn({2, 16, 2, 2}), &text, torch::randn({2, 8, 4, 4}));
        CHECK(out.sizes() == std::vector<int64_t>{2, 8, 4, 4});
        CHECK(torch::isfinite(out).all().item<bool>());
    }
    TEST_CASE("skip shape mismatch is an error") {
        DecoderBlock block(small_options());
        const auto text = random_text(1, 4, 2, 12);
        CHECK_THROWS_AS(block->forward(torch::randn({1, 16, 2, 2}), &text, torch::randn({1, 8, 2, 2})), ConfigError);
        CHECK_THROWS_AS(block->forward(torch::randn({1, 16, 2, 2}), &text, torch::randn({1, 4, 4, 4})), ConfigError);
    }
    TEST_CASE("uniform LTEM scores leave the block output unchanged") {
        torch::manual_seed(2);
        DecoderBlock block(small_options());
        block->eval();
        {
            torch::NoGradGuard ng;
            block->ltem()->projection()->weight.zero_();
            block->ltem()->projection()->bias.zero_();
        }
        const auto text = random_text(2, 5, 4, 12);
        const auto in = torch::randn({2, 16, 2, 2}), skip = torch::randn({2, 8, 4, 4});
        DecoderTrace trace;
        const auto with = block->forward(in, &text, skip, &trace);
        REQUIRE(trace.attention.has_value());
        block->set_ltem_enabled(false);
        const auto without = block->forward(in, &text, skip);
        CHECK(torch::allclose(with, without, 0, 1e-5));
    }
    TEST_CASE("zero cross-attention and no LTEM reduce to a plain deconv+skip block") {
        torch::manual_seed(3);
        DecoderBlock block(small_options());
        block->eval();
        {
            torch::NoGradGuard ng;
            block->cross_attention()->out_proj->weight.zero_();
            block->cross_attention()->out_proj->bias.zero_();
        }
        block->set_ltem_enabled(false);
        const auto text = random_text(1, 5, 2, 12);
        const auto in = torch::randn({1, 16, 2, 2}), skip = torch::randn({1, 8, 4, 4});
        const auto a = block->forward(in, &text, skip);
        block->set_text_enabled(false);
        const auto b = block->forward(in, nullptr, skip);
        CHECK(torch::allclose(a, b, 0, 1e-6));
        CHECK(torch::isfinite(b).all().item<bool>());
    }
    TEST_CASE("padding tokens do not change the fused features") {
        torch::manual_seed(4);
        DecoderBlock block(small_options());
        block->eval();
        const auto in = torch::randn({1, 16, 2, 2}), skip = torch::randn({1, 8, 4, 4});
        auto short_text = random_text(1, 3, 3, 12);
        TextFeatures long_text{torch::cat({short_text.words, torch::zeros({1, 9, 12})}, 1),
                               torch::cat({short_text.valid, torch::zeros({1, 9}, torch::kBool)}, 1), short_text.global};
        DecoderTrace a, b;
        const auto out_a = block->forward(in, &short_text, skip, &a);
        const auto out_b = block->forward(in, &long_text, skip, &b);
        CHECK(torch::allclose(a.fused, b.fused, 0, 1e-5));
        CHECK(torch::allclose(out_a, out_b, 0, 1e-5));
    }
    TEST_CASE("positional embedding resamples to other grid sizes") {
        DecoderBlock block(small_options());
        const auto text = random_text(1, 4, 2, 12);
        CHECK(block->forward(torch::randn({1, 16, 3, 5}), &text, torch::randn({1, 8, 6, 10})).sizes() ==
              std::vector<int64_t>{1, 8, 6, 10});
    }
}

TEST_SUITE("seg head and loss") {
    TEST_CASE("head upsamples x4 to one logit channel") {
        SegHead head(8, 16);
        head->eval();
        const auto x = torch::randn({2, 8, 16, 16});
        const auto y = head->forward(x);
        CHECK(y.sizes() == std::vector<int64_t>{2, 1, 64, 64});
        CHECK(torch::equal(y, head->forward(x)));
        const auto p = torch::sigmoid(y.to(torch::kFloat64));
        CHECK(((p > 0) & (p < 1)).all().item<bool>());
    }
    TEST_CASE("confident correct logits give near-zero loss") {
        auto g = (torch::rand({2, 1, 8, 8}) > 0.5).to(torch::kFloat64);
        CHECK(seg_loss(g * 40 - 20, g).total.item<double>() < 1e-4);
    }
    TEST_CASE("p = 0.5 on a half-ones mask") {
        auto g = torch::zeros({1, 1, 8, 8}, torch::kFloat64);
        g.narrow(2, 0, 4).fill_(1);
        const auto l = seg_loss(torch::zeros_like(g), g);
        CHECK(l.bce.item<double>() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(l.dice.item<double>() == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(l.total.item<double>() == doctest::Approx(0.5 + std::log(2.0)).epsilon(1e-6));
    }
    TEST_CASE("matches the scalar oracle on random 8x8 instances") {
        std::mt19937_64 rng(19);
        for (int trial = 0; trial < 20; ++trial) {
            const size_t b = 1 + rng() % 3;
            std::vector<oracle::Vec> logits, gt;
            for (size_t i = 0; i < b; ++i) {
                logits.push_back(oracle::random_vec(rng, 64, -4, 4));
                gt.push_back(oracle::random_mask(rng, 64));
            }
            const auto lt = testing::to_tensor(logits).reshape({static_cast<int64_t>(b), 1, 8, 8});
            const auto gtt = testing::to_tensor(gt).reshape({static_cast<int64_t>(b), 1, 8, 8});
            CHECK(std::abs(seg_loss(lt, gtt).total.item<double>() - oracle::seg_loss(logits, gt)) <= 1e-6);
        }
    }
    TEST_CASE("finite-difference gradient w.r.t. logits") {
        for (int trial = 0; trial < 10; ++trial) {
            auto g = (torch::rand({1, 1, 4, 4}, torch::kFloat64) > 0.5).to(torch::kFloat64);
            auto x = torch::randn({1, 1, 4, 4}, torch::kFloat64) * 2;
            CHECK(testing::gradient_error([&](const torch::Tensor& l) { return seg_loss(l, g).total; }, x) < 1e-4);
        }
    }
    TEST_CASE("total loss") {
        CHECK(total_loss(torch::tensor(0.0), torch::tensor(0.0)).item<double>() == 0.0);
        CHECK(total_loss(torch::tensor(0.3, torch::kFloat64), torch::tensor(0.7, torch::kFloat64)).item<double>() ==
              doctest::Approx(1.0));
        const auto seg = torch::tensor(0.42, torch::kFloat64);
        CHECK(total_loss(torch::Tensor(), seg).item<double>() == 0.42);
        CHECK_THROWS_AS(total_loss(torch::tensor(NAN), seg), NumericalError);
        CHECK_THROWS_AS(total_loss(torch::tensor(0.1), torch::tensor(INFINITY)), NumericalError);
    }
}
