#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "tmca/checkpoint.hpp"
#include "tmca/errors.hpp"
#include "tmca/model.hpp"
#include "tmca/synthetic.hpp"
#include "tmca/training.hpp"

using namespace tmca;
using testing::TempDir;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.widths = {8, 16, 16, 32};
    c.text_dim = 16;
    c.text_heads = 2;
    c.attention_heads = 2;
    c.head_channels = 8;
    c.batch_size = 8;
    c.epochs = 2;
    return c;
}

SyntheticCorpus tiny_corpus(int n, Split split = Split::Train) {
    SynthSpec spec;
    spec.n_samples = n;
    return generate_synthetic(spec, split);
}

struct Batch {
    torch::Tensor images, masks;
    TokenBatch tokens;
};

Batch batch_of(const Corpus& c, const Vocabulary& v, int max_len) {
    const auto b = collate(c.samples);
    return {b.images, b.masks, tokenize_batch(b.texts, v, max_len)};
}

bool all_zero(const std::vector<torch::Tensor>& params) {
    for (const auto& p : params) {
        if (p.grad().defined() && p.grad().abs().max().item<double>() != 0.0) return false;
    }
    return true;
}

bool some_nonzero(const std::vector<torch::Tensor>& params) { return !all_zero(params); }

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("flag implications") {
        ModelConfig c;
        c.ablation.text = false;
        auto n = normalized(c);
        CHECK_FALSE(n.ablation.ltem);
        CHECK_FALSE(n.ablation.contrastive);
        CHECK(active_levels(n).empty());

        c = {};
        c.ablation.mas = false;
        n = normalized(c);
        CHECK(n.levels == std::vector<Level>{Level::Global});

        c = {};
        c.ablation = parse_ablation_list("ca,tsdm");
        n = normalized(c);
        CHECK_FALSE(n.ablation.contrastive);
        CHECK_FALSE(n.ablation.tsdm);
        CHECK(active_levels(n).empty());
        CHECK_THROWS_AS(parse_ablation_list("tsdm,bogus"), ConfigError);
    }
    TEST_CASE("validation") {
        ModelConfig c;
        c.tau2 = 0;
        CHECK_THROWS_AS(normalized(c), ConfigError);
        c = {};
        c.text_layers = 1;
        CHECK_THROWS_AS(normalized(c), ConfigError);
        c = {};
        c.image_size = 48;
        CHECK_THROWS_AS(normalized(c), ConfigError);
    }
    TEST_CASE("json and key-value forms agree") {
        const auto a = config_from_json(parse_config_text(R"({"epochs": 3, "tau1": 0.5, "ablation": {"ltem": false}, "levels": ["G", "32"]})"));
        const auto b = config_from_json(parse_config_text("epochs = 3\ntau1 = 0.5  # comment\nlevels = [\"G\", \"32\"]\n[ablation]\nltem = false\n"));
        CHECK(a == b);
        CHECK(a.epochs == 3);
        CHECK_FALSE(a.ablation.ltem);
        CHECK(config_from_json(to_json(a)) == a);
        CHECK_THROWS_AS(config_from_json(parse_config_text("{\"nope\": 1}")), ConfigError);
        CHECK(fingerprint(a) == fingerprint(b));
        CHECK(fingerprint(a) != fingerprint(ModelConfig{}));
    }
}

TEST_SUITE("model") {
    TEST_CASE("forward shapes for sizes divisible by 32") {
        for (int size : {64, 96}) {
            auto c = tiny_config();
            c.image_size = size;
            torch::manual_seed(0);
            TmcaModel model(c, 20);
            auto ids = torch::randint(2, 20, {2, 6}, torch::kLong);
            const auto out = model->forward(torch::rand({2, 1, size, size}), ids, torch::ones({2, 6}, torch::kBool));
            CHECK(out.logits.sizes() == std::vector<int64_t>{2, 1, size, size});
        }
    }
    TEST_CASE("every parameter group receives gradient; ablated groups exactly zero") {
        const auto data = tiny_corpus(8);
        std::vector<std::string> texts;
        for (const auto& s : data.corpus.samples) texts.push_back(s.text);
        const auto vocab = Vocabulary::build(texts);

        struct Case {
            const char* flags;
            std::vector<std::string> zero;
        };
        const std::vector<Case> cases = {
            {"", {}},
            {"ltem", {"ltem"}},
            {"ca", {"projections"}},
            {"mas", {"projections"}},
            {"text", {"text_encoder", "projections", "ltem"}},
        };
        for (const auto& k : cases) {
            CAPTURE(k.flags);
            auto c = tiny_config();
            c.ablation = parse_ablation_list(k.flags);
            torch::manual_seed(1);
            TmcaModel model(c, static_cast<int64_t>(vocab.size()));
            const auto b = batch_of(data.corpus, vocab, c.max_len);
            torch::optim::AdamW opt(model->parameters(), torch::optim::AdamWOptions(1e-3));
            opt.zero_grad();
            auto loss = model->loss(model->forward(b.images, b.tokens.ids, b.tokens.valid), b.masks);
            loss.total.backward();
            for (const auto& [group, params] : model->parameter_groups()) {
                CAPTURE(group);
                const bool should_be_zero = std::find(k.zero.begin(), k.zero.end(), group) != k.zero.end();
                if (should_be_zero) {
                    CHECK(all_zero(params));
                } else {
                    CHECK(some_nonzero(params));
                }
            }
            if (std::string(k.flags) == "ca" || std::string(k.flags) == "text") {
                CHECK(loss.alignment.item<double>() == 0.0);
                CHECK(loss.total.item<double>() == loss.segmentation.item<double>());
            }
            opt.step();
        }
    }
    TEST_CASE("text-off model ignores the prompt") {
        auto c = tiny_config();
        c.ablation.text = false;
        torch::manual_seed(2);
        TmcaModel model(c, 30);
        model->eval();
        const auto img = torch::rand({1, 1, 64, 64});
        const auto a = model->forward(img, torch::tensor({{4, 5, 6}}, torch::kLong), torch::ones({1, 3}, torch::kBool));
        const auto b = model->forward(img, torch::tensor({{9, 9, 7, 8, 2}}, torch::kLong), torch::ones({1, 5}, torch::kBool));
        CHECK(torch::equal(a.logits, b.logits));
    }
    TEST_CASE("text changes the output of the full model") {
        torch::manual_seed(3);
        TmcaModel model(tiny_config(), 30);
        model->eval();
        const auto img = torch::rand({1, 1, 64, 64});
        const auto a = model->forward(img, torch::tensor({{4, 5, 6}}, torch::kLong), torch::ones({1, 3}, torch::kBool));
        const auto b = model->forward(img, torch::tensor({{9, 9, 7}}, torch::kLong), torch::ones({1, 3}, torch::kBool));
        CHECK_FALSE(torch::equal(a.logits, b.logits));
    }
}

TEST_SUITE("schedule") {
    TEST_CASE("endpoints, midpoint, monotone") {
        CHECK(lr_at(0, 1000) == 3e-4);
        CHECK(lr_at(1000, 1000) == 1e-6);
        CHECK(std::abs(lr_at(500, 1000) - 1.505e-4) <= 1e-12);
        double prev = lr_at(0, 777);
        for (int s = 1; s <= 777; ++s) {
            const double cur = lr_at(s, 777);
            CHECK(cur <= prev);
            CHECK(cur == doctest::Approx(oracle::lr(s, 777)).epsilon(1e-12));
            prev = cur;
        }
        CHECK_THROWS_AS(lr_at(11, 10), ConfigError);
        CHECK_THROWS_AS(lr_at(-1, 10), ConfigError);
    }
}

TEST_SUITE("metrics") {
    TEST_CASE("hand-counted cases") {
        auto a = torch::zeros({2, 4}), b = torch::zeros({2, 4});
        a[0].fill_(1);                     // 4 px
        b.view(-1).narrow(0, 2, 4).fill_(1);  // overlaps a on 2 px, union 6
        CHECK(jaccard(a, b) == doctest::Approx(1.0 / 3).epsilon(1e-6));
        CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(jaccard(a, a) == doctest::Approx(1.0));
        CHECK_THROWS_AS(dice(a, torch::zeros({3, 3})), ConfigError);
    }
    TEST_CASE("J = D/(2-D) and D >= J on random pairs") {
        std::mt19937_64 rng(31);
        for (int i = 0; i < 100; ++i) {
            const auto x = oracle::random_mask(rng, 64, 0.1 + 0.008 * i), y = oracle::random_mask(rng, 64, 0.3);
            const auto xt = testing::to_tensor({x}, torch::kFloat32).reshape({8, 8});
            const auto yt = testing::to_tensor({y}, torch::kFloat32).reshape({8, 8});
            const auto m = image_metrics("p", xt, yt);
            CHECK(m.dice >= m.jaccard);
            CHECK(std::abs(m.jaccard - m.dice / (2 - m.dice)) <= 1e-6);
            CHECK(m.dice == doctest::Approx(oracle::dice(x, y)).epsilon(1e-12));
            CHECK(m.jaccard == doctest::Approx(oracle::jaccard(x, y)).epsilon(1e-12));
        }
    }
    TEST_CASE("summary is a per-image percentage average") {
        auto gt = torch::zeros({4, 4});
        gt[0].fill_(1);
        auto half = torch::zeros({4, 4});
        half[0].narrow(0, 0, 2).fill_(1);
        const auto s = summarize({image_metrics("a", gt, gt), image_metrics("b", half, gt)});
        CHECK(s.count == 2);
        CHECK(s.dice == doctest::Approx(100 * (1.0 + 2.0 * 2 / 6) / 2).epsilon(1e-6));
        CHECK(s.accuracy == doctest::Approx(100 * (1.0 + 14.0 / 16) / 2));
    }
}

TEST_SUITE("training") {
    TEST_CASE("2 epochs, 32 samples, batch 8 gives 8 steps and 2 log rows") {
        const auto train_data = tiny_corpus(32);
        const auto val_data = tiny_corpus(8, Split::Val);
        TempDir dir;
        TrainOptions opts;
        opts.out_dir = dir.path();
        const auto r = train(tiny_config(), train_data.corpus, &val_data.corpus, opts);
        CHECK(r.steps == 8);
        CHECK(r.history.size() == 2);
        CHECK(std::filesystem::exists(dir / "best.ckpt"));
        std::ifstream log(dir / "metrics.jsonl");
        std::string line;
        int rows = 0;
        while (std::getline(log, line)) {
            const auto j = nlohmann::json::parse(line);
            for (const char* k : {"epoch", "lr", "loss_total", "loss_seg", "loss_ca", "loss_ca_per_level", "val_jaccard",
                                  "val_dice", "val_acc"}) {
                CHECK(j.contains(k));
            }
            CHECK(j["loss_ca_per_level"].size() == 4);
            ++rows;
        }
        CHECK(rows == 2);
    }
    TEST_CASE("same config and seed reproduce the run; checkpoint round trip is bit-identical") {
        const auto train_data = tiny_corpus(24);
        const auto val_data = tiny_corpus(8, Split::Val);
        TempDir dir;
        TrainOptions opts;
        opts.out_dir = dir.path();
        auto a = train(tiny_config(), train_data.corpus, &val_data.corpus, opts);
        auto b = train(tiny_config(), train_data.corpus, &val_data.corpus);
        REQUIRE(a.history.size() == b.history.size());
        for (size_t i = 0; i < a.history.size(); ++i) {
            CHECK(a.history[i].loss_total == b.history[i].loss_total);
            CHECK(*a.history[i].val_dice == *b.history[i].val_dice);
        }
        const auto ma = evaluate(a.model, a.vocab, val_data.corpus);
        auto loaded = load_checkpoint(dir / "best.ckpt");
        CHECK(loaded.config == normalized(tiny_config()));
        CHECK(loaded.vocab == a.vocab);
        const auto mb = evaluate(loaded.model, loaded.vocab, val_data.corpus);
        CHECK(ma.to_json(true).dump() == mb.to_json(true).dump());
        const auto pa = predict_probabilities(a.model, a.vocab, val_data.corpus.samples);
        const auto pb = predict_probabilities(loaded.model, loaded.vocab, val_data.corpus.samples);
        CHECK(torch::equal(pa, pb));
        CHECK(loaded.fingerprint.size() == 64);
    }
    TEST_CASE("contrastive-off run logs zero alignment loss") {
        const auto train_data = tiny_corpus(16);
        auto c = tiny_config();
        c.ablation.contrastive = false;
        c.epochs = 1;
        const auto r = train(c, train_data.corpus, nullptr);
        CHECK(r.history[0].loss_ca == 0.0);
        CHECK(r.history[0].loss_ca_per_level.empty());
        CHECK(r.history[0].loss_total == r.history[0].loss_seg);
    }
    TEST_CASE("constant-background model: Jaccard 0, accuracy is the background fraction") {
        const auto data = tiny_corpus(10, Split::Test);
        auto c = tiny_config();
        torch::manual_seed(0);
        TmcaModel model(c, 10);
        {
            torch::NoGradGuard ng;
            for (auto& p : model->named_parameters()) {
                if (p.key().rfind("head.", 0) == 0) p.value().zero_();
            }
            auto params = model->named_parameters();
            std::string last_bias;
            for (auto& p : params) {
                if (p.key().rfind("head.", 0) == 0 && p.key().find("bias") != std::string::npos) last_bias = p.key();
            }
            params[last_bias].fill_(-30.0);
        }
        Vocabulary vocab = Vocabulary::build({"one small circle region located in top"});
        const auto m = evaluate(model, vocab, data.corpus);
        double bg = 0;
        for (const auto& s : data.corpus.samples) bg += 1.0 - s.mask.mean().item<double>();
        CHECK(m.jaccard < 1e-3);
        CHECK(m.accuracy == doctest::Approx(100 * bg / 10).epsilon(1e-6));
        CHECK_THROWS_AS(evaluate(model, vocab, Corpus{}), DataError);
    }
    TEST_CASE("snapshot and restore") {
        torch::manual_seed(0);
        TmcaModel model(tiny_config(), 10);
        const auto snap = snapshot_state(*model);
        {
            torch::NoGradGuard ng;
            for (auto& p : model->parameters()) p.add_(1.0);
        }
        restore_state(*model, snap);
        for (const auto& p : model->named_parameters()) CHECK(torch::equal(p.value(), snap.at(p.key())));
    }
}
