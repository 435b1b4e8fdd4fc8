#include <doctest.h>

#include <future>

#include <httplib.h>
#include <openssl/evp.h>

#include "helpers.hpp"
#include "tmca/checkpoint.hpp"
#include "tmca/hashing.hpp"
#include "tmca/image_io.hpp"
#include "tmca/service.hpp"
#include "tmca/synthetic.hpp"

using namespace tmca;
using testing::TempDir;

namespace {

std::string base64_decode(const std::string& in) {
    std::string out(3 * in.size() / 4 + 3, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
    REQUIRE(n >= 0);
    size_t pad = 0;
    if (!in.empty() && in.back() == '=') ++pad;
    if (in.size() > 1 && in[in.size() - 2] == '=') ++pad;
    out.resize(static_cast<size_t>(n) - pad);
    return out;
}

struct Fixture {
    TempDir dir;
    std::filesystem::path checkpoint;
    SyntheticCorpus data;

    Fixture() {
        SynthSpec spec;
        spec.n_samples = 4;
        data = generate_synthetic(spec, Split::Test);
        ModelConfig c;
        c.widths = {8, 16, 16, 32};
        c.text_dim = 16;
        c.text_heads = 2;
        c.attention_heads = 2;
        c.head_channels = 8;
        std::vector<std::string> texts;
        for (const auto& s : data.corpus.samples) texts.push_back(s.text);
        const auto vocab = Vocabulary::build(texts);
        torch::manual_seed(5);
        TmcaModel model(c, static_cast<int64_t>(vocab.size()));
        checkpoint = dir / "model.ckpt";
        save_checkpoint(checkpoint, model, vocab);
    }

    std::string image_png(size_t i, int side = 64) const {
        auto img = data.corpus.samples[i].image;
        if (side != img.size(1)) {
            img = torch::nn::functional::interpolate(
                      img.unsqueeze(0), torch::nn::functional::InterpolateFuncOptions()
                                            .size(std::vector<int64_t>{side, side + 13})
                                            .mode(torch::kBilinear)
                                            .align_corners(false))
                      .squeeze(0);
        }
        return encode_png(img);
    }
};

httplib::MultipartFormDataItems form(const std::string& image, const std::string& text,
                                     const std::vector<httplib::MultipartFormData>& extra = {}) {
    httplib::MultipartFormDataItems items{{"image", image, "image.png", "image/png"}, {"text", text, "", ""}};
    items.insert(items.end(), extra.begin(), extra.end());
    return items;
}

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("in-process contract") {
        Fixture f;
        SegmentationService service;
        CHECK_FALSE(service.loaded());
        SegmentRequest req{f.image_png(0), "one small circle region, located in top"};
        try {
            service.segment(req);
            FAIL("expected 503");
        } catch (const ServiceError& e) {
            CHECK(e.status() == 503);
        }
        service.load(f.checkpoint);
        const auto a = service.segment(req);
        const auto b = service.segment(req);
        CHECK(a.mask_png == b.mask_png);
        const auto mask = decode_gray(a.mask_png);
        CHECK(mask.sizes() == std::vector<int64_t>{64, 64});
        CHECK(((mask == 0) | (mask == 1)).all().item<bool>());

        req.reference_mask = a.mask_png;
        CHECK(*service.segment(req).dice_vs_reference == doctest::Approx(1.0));

        req.text = "   ";
        try {
            service.segment(req);
            FAIL("expected 422");
        } catch (const ServiceError& e) {
            CHECK(e.status() == 422);
        }
        req.text = "x";
        req.image = "not an image";
        try {
            service.segment(req);
            FAIL("expected 400");
        } catch (const ServiceError& e) {
            CHECK(e.status() == 400);
        }
    }

    TEST_CASE("image too large is 413") {
        Fixture f;
        SegmentationService service(ServiceLimits{100, 4096});
        service.load(f.checkpoint);
        try {
            service.segment({f.image_png(0), "one"});
            FAIL("expected 413");
        } catch (const ServiceError& e) {
            CHECK(e.status() == 413);
        }
    }

    TEST_CASE("HTTP endpoints") {
        Fixture f;
        SegmentationService service;
        ServerOptions opts;
        opts.port = 0;
        HttpServer server(service, opts);
        const int port = server.start();
        httplib::Client cli("127.0.0.1", port);
        cli.set_read_timeout(60, 0);

        auto health = cli.Get("/api/v1/health");
        REQUIRE(health);
        CHECK(health->status == 503);
        CHECK(cli.Get("/api/v1/model")->status == 503);
        CHECK(cli.Post("/api/v1/segment", form(f.image_png(0), "one"))->status == 503);

        service.load(f.checkpoint);
        health = cli.Get("/api/v1/health");
        CHECK(health->status == 200);
        CHECK(nlohmann::json::parse(health->body)["model_fingerprint"] == sha256_file(f.checkpoint));
        CHECK(health->get_header_value("Access-Control-Allow-Origin") == "*");

        const auto model = nlohmann::json::parse(cli.Get("/api/v1/model")->body);
        for (const auto& l : model["levels"]) {
            const auto s = l.get<std::string>();
            CHECK((s == "8" || s == "16" || s == "32" || s == "G"));
        }
        CHECK(model["vocab_size"].get<int>() > 2);
        CHECK(model["temperatures"]["tau2"].get<double>() == doctest::Approx(0.07));

        // Non-square, off-size input: mask comes back at the submitted size.
        const auto png = f.image_png(1, 96);
        const auto r1 = cli.Post("/api/v1/segment", form(png, f.data.corpus.samples[1].text));
        REQUIRE(r1->status == 200);
        const auto j1 = nlohmann::json::parse(r1->body);
        const auto mask = decode_gray(base64_decode(j1["mask"].get<std::string>()));
        CHECK(mask.sizes() == std::vector<int64_t>{96, 109});
        CHECK(j1["probabilities_available"] == false);
        CHECK(j1["dice_vs_reference"].is_null());

        const auto r2 = cli.Post("/api/v1/segment", form(png, f.data.corpus.samples[1].text));
        CHECK(nlohmann::json::parse(r2->body)["mask"] == j1["mask"]);

        const auto r3 = cli.Post("/api/v1/segment",
                                 form(png, f.data.corpus.samples[1].text,
                                      {{"reference_mask", base64_decode(j1["mask"].get<std::string>()), "ref.png", "image/png"},
                                       {"probs", "true", "", ""},
                                       {"threshold", "0.5", "", ""}}));
        REQUIRE(r3->status == 200);
        const auto j3 = nlohmann::json::parse(r3->body);
        CHECK(j3["dice_vs_reference"].get<double>() == doctest::Approx(1.0));
        CHECK(j3["probabilities_available"] == true);
        CHECK(decode_gray(base64_decode(j3["probabilities"].get<std::string>())).sizes() == std::vector<int64_t>{96, 109});

        CHECK(cli.Post("/api/v1/segment", form(png, ""))->status == 422);
        CHECK(cli.Post("/api/v1/segment", form(png, "one", {{"threshold", "abc", "", ""}}))->status == 400);
        CHECK(cli.Post("/api/v1/segment", form("garbage", "one"))->status == 400);
        CHECK(cli.Post("/api/v1/segment", "{}", "application/json")->status == 400);
        CHECK(cli.Options("/api/v1/segment")->status == 204);

        // Concurrent identical requests agree.
        std::vector<std::future<std::string>> futures;
        for (int i = 0; i < 6; ++i) {
            futures.push_back(std::async(std::launch::async, [&] {
                httplib::Client c("127.0.0.1", port);
                c.set_read_timeout(60, 0);
                auto r = c.Post("/api/v1/segment", form(png, f.data.corpus.samples[1].text));
                return r && r->status == 200 ? nlohmann::json::parse(r->body)["mask"].get<std::string>() : std::string();
            }));
        }
        for (auto& fut : futures) CHECK(fut.get() == j1["mask"].get<std::string>());
        server.stop();
    }
}
