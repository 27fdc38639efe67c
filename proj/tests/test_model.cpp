#include "model_fixture.hpp"

#include "neuroseq/model/incremental_decoder.hpp"
#include "neuroseq/nn/grad_check.hpp"

#include <doctest.h>

using namespace neuroseq;
using fixture::gaussian_matrix;
using model::EncodingModel;

namespace {

const std::vector<std::string> kSubjects = {"s1", "s2"};

EncodingModel<double> perturbed(const model::ModelConfig& c, std::uint64_t seed)
{
    EncodingModel<double> m(c, kSubjects, seed);
    std::mt19937_64 rng(seed + 1000);
    fixture::perturb(m.params(), rng);
    return m;
}

}  // namespace

TEST_CASE("gradient check of the tiny full model")
{
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto m = perturbed(fixture::tiny_config(), seed);
        std::mt19937_64 rng(seed);
        const auto w = fixture::random_window(m.config(), 6, 2, rng);
        const auto report = nn::grad_check(m.params(), [&](nn::Tape<double>& t) { return fixture::window_loss(m, t, w, "s1"); });
        INFO("worst " << report.worst_parameter << "[" << report.worst_coordinate << "]");
        CHECK(report.max_rel_error < 1e-4);
    }
}

TEST_CASE("gradient check covers every narrative and conditioning variant")
{
    using model::NarrativeMode;
    using model::SubjectConditioning;
    for (auto narrative : {NarrativeMode::gaussian, NarrativeMode::none})
        for (auto cond : {SubjectConditioning::add, SubjectConditioning::concat}) {
            auto c = fixture::tiny_config();
            c.narrative = narrative;
            c.subject_conditioning = cond;
            auto m = perturbed(c, 7);
            std::mt19937_64 rng(7);
            const auto w = fixture::random_window(c, 5, 2, rng);
            const auto report =
                nn::grad_check(m.params(), [&](nn::Tape<double>& t) { return fixture::window_loss(m, t, w, "s2"); });
            CHECK(report.max_rel_error < 1e-4);
        }
}

TEST_CASE("encoder is causal")
{
    auto m = perturbed(fixture::tiny_config(), 3);
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        MatrixD x = gaussian_matrix(8, m.config().input_width(), rng);
        const Index cut = static_cast<Index>(rng() % 8);
        const MatrixD a = m.encode_stimulus(x);
        x.bottomRows(7 - cut) = gaussian_matrix(7 - cut, x.cols(), rng, 10.0);
        const MatrixD b = m.encode_stimulus(x);
        CHECK(a.topRows(cut + 1) == b.topRows(cut + 1));
    }
}

TEST_CASE("decoder is causal in its previous outputs")
{
    auto m = perturbed(fixture::tiny_config(), 4);
    std::mt19937_64 rng(4);
    const MatrixD h = m.encode_stimulus(gaussian_matrix(6, m.config().input_width(), rng));
    const MatrixD summary = gaussian_matrix(2, 3, rng);
    for (int trial = 0; trial < 50; ++trial) {
        MatrixD prev = gaussian_matrix(5, 4, rng);
        const Index row = static_cast<Index>(rng() % 5);
        const MatrixD a = m.decoder_forward_tf(h, summary, "s1", prev);
        prev.row(row) = gaussian_matrix(1, 4, rng, 10.0);
        const MatrixD b = m.decoder_forward_tf(h, summary, "s1", prev);
        // Row `row` of prev feeds step row + 1.
        CHECK(a.topRows(row + 1) == b.topRows(row + 1));
        CHECK(a.row(row + 1) != b.row(row + 1));
    }
}

TEST_CASE("generate is bit-identical to teacher forcing on its own outputs")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto m = perturbed(fixture::tiny_config(), seed);
        std::mt19937_64 rng(seed);
        const MatrixD h = m.encode_stimulus(gaussian_matrix(7, m.config().input_width(), rng));
        const MatrixD summary = gaussian_matrix(3, 3, rng);
        const MatrixD y = m.generate(h, summary, "s2", 7);
        CHECK(y == m.decoder_forward_tf(h, summary, "s2", y.topRows(6)));
    }
}

TEST_CASE("incremental decoder agrees with generate to rounding")
{
    auto c = fixture::tiny_config();
    for (auto cond : {model::SubjectConditioning::add, model::SubjectConditioning::concat}) {
        c.subject_conditioning = cond;
        auto m = perturbed(c, 5);
        std::mt19937_64 rng(5);
        const MatrixD h = m.encode_stimulus(gaussian_matrix(6, c.input_width(), rng));
        const MatrixD summary = gaussian_matrix(2, 3, rng);
        const MatrixD y = m.generate(h, summary, "s1", 6);
        model::IncrementalDecoder<double> dec(m, h, summary, "s1", 6);
        RowVector<double> prev = dec.bos();
        for (Index t = 0; t < 6; ++t) {
            prev = dec.next(prev);
            CHECK((prev - y.row(t)).cwiseAbs().maxCoeff() < 1e-10);
        }
        CHECK_THROWS_AS(dec.next(prev), ContractError);
    }
}

TEST_CASE("a subject's loss leaves other subjects' tensors with exactly zero gradient")
{
    auto m = perturbed(fixture::tiny_config(), 6);
    std::mt19937_64 rng(6);
    const auto w = fixture::random_window(m.config(), 6, 2, rng);
    nn::Gradients<double> g(m.params());
    {
        nn::Tape<double> t(&g);
        t.backward(fixture::window_loss(m, t, w, "s1"));
    }
    for (const auto& name : m.subject_tensor_names("s2"))
        CHECK(g[m.params().index(name)].isZero(0.0));
    for (const auto& name : m.subject_tensor_names("s1"))
        CHECK(!g[m.params().index(name)].isZero(0.0));
}

TEST_CASE("adapting a new subject exposes only its embedding and readout")
{
    const auto c = fixture::tiny_config();
    EncodingModel<double> m(c, kSubjects, 1);
    const auto adapted = model::adapt_new_subject(m, "s3", 2);
    CHECK(adapted.params().scalar_count(true) == c.d + c.d * c.parcels + c.parcels);
    CHECK(adapted.has_subject("s3"));
    CHECK(!m.has_subject("s3"));
    CHECK_THROWS_AS(model::adapt_new_subject(m, "s1", 2), ConflictError);
    for (const auto& p : m.params())
        CHECK(adapted.params().at(p.name).value == p.value);
}

TEST_CASE("initialization ranges")
{
    auto c = fixture::tiny_config();
    EncodingModel<double> m(c, kSubjects, 9);
    const auto& ps = m.params();
    CHECK(ps.at("encoder.0.norm1.gain").value.isOnes());
    CHECK(ps.at("encoder.0.norm1.bias").value.isZero());
    CHECK(ps.at("encoder.pos").value.isZero());
    CHECK(ps.at("decoder.pos").value.isZero());
    CHECK(ps.at("decoder.bos").value.rows() == 1);
    CHECK(ps.at("decoder.bos").value.cols() == c.parcels);
    const double bound = 1.0 / std::sqrt(static_cast<double>(c.d));
    CHECK(ps.at("encoder.0.self_attn.wq").value.cwiseAbs().maxCoeff() <= bound);
    CHECK(ps.at("encoder.0.mlp.w1").value.cols() == 4 * c.d);
    CHECK(ps.at("encoder.0.mlp.w2").value.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(4.0 * c.d));
    CHECK(ps.at("summary.weight").value.rows() == c.summary_dim);
}

TEST_CASE("narrative modes change the architecture")
{
    auto c = fixture::tiny_config();
    c.narrative = model::NarrativeMode::none;
    EncodingModel<double> none(c, kSubjects, 1);
    CHECK(!none.params().contains("summary.weight"));
    CHECK(!none.params().contains("decoder.0.desc_attn.wq"));
    CHECK(c.input_width() == 5);
    c.narrative = model::NarrativeMode::gaussian;
    CHECK(c.input_width() == 8);
    EncodingModel<double> gauss(c, kSubjects, 1);
    CHECK(gauss.params().at("fuse.weight").value.rows() == 8);
}

TEST_CASE("the summary influences cross-attention predictions")
{
    auto m = perturbed(fixture::tiny_config(), 8);
    std::mt19937_64 rng(8);
    const MatrixD h = m.encode_stimulus(gaussian_matrix(5, 5, rng));
    const MatrixD prev = gaussian_matrix(4, 4, rng);
    const MatrixD a = m.decoder_forward_tf(h, gaussian_matrix(2, 3, rng), "s1", prev);
    const MatrixD b = m.decoder_forward_tf(h, gaussian_matrix(2, 3, rng), "s1", prev);
    CHECK((a - b).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("contract violations")
{
    auto c = fixture::tiny_config();
    EncodingModel<double> m(c, kSubjects, 1);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(m.encode_stimulus(gaussian_matrix(9, 5, rng)), ConfigError);
    CHECK_THROWS_AS(m.encode_stimulus(gaussian_matrix(3, 4, rng)), ConfigError);
    const MatrixD h = m.encode_stimulus(gaussian_matrix(3, 5, rng));
    CHECK_THROWS_AS(m.generate(h, gaussian_matrix(1, 3, rng), "nobody", 3), LookupError);
    CHECK_THROWS_AS(m.generate(h, MatrixD(0, 3), "s1", 3), ConfigError);
    CHECK_THROWS_AS(EncodingModel<double>(c, {}, 1), ConfigError);
    c.heads = 3;
    CHECK_THROWS_AS(EncodingModel<double>(c, kSubjects, 1), ConfigError);
}

TEST_CASE("construction is deterministic in the seed")
{
    const auto c = fixture::tiny_config();
    EncodingModel<double> a(c, kSubjects, 5), b(c, kSubjects, 5), other(c, kSubjects, 6);
    bool differs = false;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
        CHECK(a.params()[i].value == b.params()[i].value);
        differs = differs || a.params()[i].value != other.params()[i].value;
    }
    CHECK(differs);
}
