#include "test_util.hpp"

#include "neuroseq/core/error.hpp"
#include "neuroseq/train/config.hpp"

#include <doctest.h>

using namespace neuroseq;
using nlohmann::json;

TEST_CASE("defaults")
{
    const train::RunConfig c;
    CHECK(c.model.d == 64);
    CHECK(c.model.enc_layers == 2);
    CHECK(c.model.dec_layers == 2);
    CHECK(c.model.heads == 4);
    CHECK(c.model.dropout == 0.1);
    CHECK(c.model.ffn_mult == 4);
    CHECK(c.model.narrative == model::NarrativeMode::cross_attention);
    CHECK(c.model.subject_conditioning == model::SubjectConditioning::add);
    CHECK(c.model.gaussian_sigma == 30.0);
    CHECK(c.train.learning_rate == 1e-3);
    CHECK(c.train.beta1 == 0.9);
    CHECK(c.train.beta2 == 0.999);
    CHECK(c.train.weight_decay == 0.0);
    CHECK(c.train.lambda_corr == 1.0);
    CHECK(c.train.gamma.start == 1.0);
    CHECK(c.train.gamma.end == 0.2);
    CHECK(c.train.gamma.anneal_epochs == 10);
    CHECK(c.train.window.w_in == 40);
    CHECK(c.train.window.w_out == 35);
    CHECK(c.train.window.delay == 5);
    CHECK(c.train.window.stride == 1);
}

TEST_CASE("json round trip")
{
    train::RunConfig c;
    c.model.d = 32;
    c.model.modality_dims = {4, 5};
    c.model.narrative = model::NarrativeMode::gaussian;
    c.model.subject_conditioning = model::SubjectConditioning::concat;
    c.train.seed = 99;
    c.train.gamma.end = 0.3;
    const json j = train::to_json(c);
    CHECK(train::to_json(train::run_config_from_json(j)) == j);
}

TEST_CASE("unknown keys are rejected")
{
    json j = train::to_json(train::RunConfig{});
    j["model"]["depth"] = 3;
    CHECK_THROWS_AS(train::run_config_from_json(j), ConfigError);
    j = train::to_json(train::RunConfig{});
    j["extra"] = json::object();
    CHECK_THROWS_AS(train::run_config_from_json(j), ConfigError);
    j = train::to_json(train::RunConfig{});
    j["model"]["narrative"] = "sideways";
    CHECK_THROWS_AS(train::run_config_from_json(j), ConfigError);
    j = train::to_json(train::RunConfig{});
    j["train"]["epochs"] = "many";
    CHECK_THROWS_AS(train::run_config_from_json(j), ConfigError);
}

TEST_CASE("partial files keep defaults")
{
    const auto c = train::run_config_from_json(json::parse(R"({"train": {"epochs": 3}})"));
    CHECK(c.train.epochs == 3);
    CHECK(c.model.d == 64);
}

TEST_CASE("overrides")
{
    json j = train::to_json(train::RunConfig{});
    j = train::apply_overrides(j, {"train.epochs=7", "model.narrative=none", "train.learning_rate=0.01"});
    const auto c = train::run_config_from_json(j);
    CHECK(c.train.epochs == 7);
    CHECK(c.model.narrative == model::NarrativeMode::none);
    CHECK(c.train.learning_rate == 0.01);
    CHECK(j["train"]["epochs"] == 7);
    CHECK_THROWS_AS(train::apply_overrides(j, {"train.nope=1"}), ConfigError);
    CHECK_THROWS_AS(train::apply_overrides(j, {"epochs=1"}), ConfigError);
    CHECK_THROWS_AS(train::apply_overrides(j, {"train.epochs"}), ConfigError);
}

TEST_CASE("config files: missing path is named, malformed content is a config error")
{
    try {
        (void)train::load_run_config("missing.cfg");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("missing.cfg") != std::string::npos);
    }
    testutil::TempDir dir("config");
    std::ofstream(dir / "bad.cfg") << "{ nope";
    CHECK_THROWS_AS(train::load_run_config((dir / "bad.cfg").string()), ConfigError);
    std::ofstream(dir / "ok.cfg") << R"({"model": {"d": 16, "heads": 2}, "train": {"seed": 4}})";
    const auto c = train::load_run_config((dir / "ok.cfg").string());
    CHECK(c.model.d == 16);
    CHECK(c.train.seed == 4);
}

TEST_CASE("validation")
{
    model::ModelConfig m;
    m.parcels = 4;
    m.modality_dims = {3};
    m.summary_dim = 2;
    CHECK_NOTHROW(m.validate());
    m.heads = 3;
    CHECK_THROWS_AS(m.validate(), ConfigError);
    m.heads = 4;
    m.dropout = 1.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);

    train::TrainConfig t;
    CHECK_NOTHROW(t.validate());
    t.gamma.start = 0.1;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.batch_size = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t = {};
    t.window.stride = 0;
    CHECK_THROWS_AS(t.validate(), ConfigError);
}
