#include "neuroseq/nn/attention.hpp"
#include "neuroseq/nn/grad_check.hpp"

#include <doctest.h>

#include <cmath>

using namespace neuroseq;
using nn::MaskKind;
using nn::ParameterSet;
using nn::Tape;
using nn::Var;

namespace {

MatrixD random(Index r, Index c, std::mt19937_64& rng)
{
    std::normal_distribution<double> n;
    MatrixD m(r, c);
    for (Index i = 0; i < m.size(); ++i)
        m.data()[i] = n(rng);
    return m;
}

// Naive per-head softmax attention with masked logits set to -infinity.
MatrixD naive_attention(const MatrixD& q, const MatrixD& k, const MatrixD& v, bool causal, Index heads)
{
    const Index d = q.cols(), dh = d / heads;
    MatrixD out = MatrixD::Zero(q.rows(), d);
    for (Index h = 0; h < heads; ++h)
        for (Index i = 0; i < q.rows(); ++i) {
            std::vector<double> logits(static_cast<std::size_t>(k.rows()));
            double mx = -INFINITY;
            for (Index j = 0; j < k.rows(); ++j) {
                double s = 0;
                for (Index e = 0; e < dh; ++e)
                    s += q(i, h * dh + e) * k(j, h * dh + e);
                s /= std::sqrt(static_cast<double>(dh));
                logits[j] = (causal && j > i) ? -INFINITY : s;
                mx = std::max(mx, logits[j]);
            }
            double z = 0;
            for (auto& l : logits)
                z += (l = std::exp(l - mx));
            for (Index j = 0; j < k.rows(); ++j)
                for (Index e = 0; e < dh; ++e)
                    out(i, h * dh + e) += logits[j] / z * v(j, h * dh + e);
        }
    return out;
}

}  // namespace

TEST_CASE("attention core matches a naive implementation")
{
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Index heads = 1 + static_cast<Index>(rng() % 3);
        const Index d = heads * (1 + static_cast<Index>(rng() % 4));
        const Index tq = 1 + static_cast<Index>(rng() % 6);
        const bool causal = trial % 2 == 0;
        const Index tk = causal ? tq : 1 + static_cast<Index>(rng() % 6);
        const MatrixD q = random(tq, d, rng), k = random(tk, d, rng), v = random(tk, d, rng);
        Tape<double> t;
        const MatrixD got = nn::attention_core(t.constant(q), t.constant(k), t.constant(v),
                                               causal ? MaskKind::causal : MaskKind::full, heads)
                                .value();
        CHECK((got - naive_attention(q, k, v, causal, heads)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("attention weights form a causal stochastic matrix")
{
    // With one head and V = I the output rows are the attention weights.
    std::mt19937_64 rng(2);
    const Index n = 7;
    Tape<double> t;
    const MatrixD w = nn::attention_core(t.constant(random(n, n, rng)), t.constant(random(n, n, rng)),
                                         t.constant(MatrixD::Identity(n, n)), MaskKind::causal, 1)
                          .value();
    for (Index i = 0; i < n; ++i) {
        CHECK(w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK((w.row(i).array() >= 0.0).all());
        for (Index j = i + 1; j < n; ++j)
            CHECK(w(i, j) == 0.0);
    }
    CHECK(w(0, 0) == 1.0);
}

TEST_CASE("future inputs never change earlier outputs")
{
    std::mt19937_64 rng(3);
    ParameterSet<double> ps;
    const auto ap = nn::register_attention(ps, "attn", 8, rng);
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 2 + static_cast<Index>(rng() % 10);
        const Index cut = static_cast<Index>(rng() % static_cast<std::uint64_t>(n));
        MatrixD x = random(n, 8, rng);
        Tape<double> t1;
        const MatrixD a = nn::multi_head_attention(t1, ps, ap, t1.constant(x), t1.constant(x), MaskKind::causal, 2).value();
        x.bottomRows(n - cut - 1) = random(n - cut - 1, 8, rng) * 100.0;
        Tape<double> t2;
        const MatrixD b = nn::multi_head_attention(t2, ps, ap, t2.constant(x), t2.constant(x), MaskKind::causal, 2).value();
        CHECK(a.topRows(cut + 1) == b.topRows(cut + 1));
    }
}

TEST_CASE("gradient check of attention over random trials")
{
    std::mt19937_64 rng(4);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const Index heads = 1 + static_cast<Index>(trial % 2);
        const Index d = 2 * heads;
        const bool causal = trial % 3 != 0;
        const Index tq = 1 + static_cast<Index>(rng() % 4);
        const Index tk = causal ? tq : 1 + static_cast<Index>(rng() % 4);
        const double rate = trial % 4 == 1 ? 0.3 : 0.0;
        ParameterSet<double> ps;
        const auto x = ps.add("x", random(tq, d, rng));
        const auto m = ps.add("m", random(tk, d, rng));
        const auto ap = nn::register_attention(ps, "attn", d, rng);
        for (auto& p : ps)
            if (p.name.find(".b") != std::string::npos)
                p.value = random(1, d, rng);
        const MatrixD w = random(tq, d, rng);
        const std::uint64_t mask_seed = rng();
        auto objective = [&](Tape<double>& t) {
            std::mt19937_64 drop(mask_seed);
            Var<double> out = nn::multi_head_attention(t, ps, ap, t.parameter(ps, x),
                                                       causal ? t.parameter(ps, x) : t.parameter(ps, m),
                                                       causal ? MaskKind::causal : MaskKind::full, heads, rate, &drop);
            return nn::weighted_sum(out, w);
        };
        const auto report = nn::grad_check(ps, objective);
        INFO("trial " << trial << " worst " << report.worst_parameter);
        CHECK(report.max_rel_error < 1e-6);
        worst = std::max(worst, report.max_rel_error);
    }
    MESSAGE("worst attention relative error " << worst);
}

TEST_CASE("MLP and norm blocks pass gradient checks")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        ParameterSet<double> ps;
        const auto x = ps.add("x", random(3, 4, rng));
        const auto mlp = nn::register_mlp(ps, "mlp", 4, 16, rng);
        const auto ln = nn::register_norm(ps, "ln", 4);
        ps[ln.gain].value = random(1, 4, rng);
        ps[ln.bias].value = random(1, 4, rng);
        const MatrixD w = random(3, 4, rng);
        auto objective = [&](Tape<double>& t) {
            Var<double> h = nn::apply_mlp(t, ps, mlp, t.parameter(ps, x), 0.0, nullptr);
            return nn::weighted_sum(nn::apply_norm(t, ps, ln, nn::add(t.parameter(ps, x), h), 1e-5), w);
        };
        CHECK(nn::grad_check(ps, objective).max_rel_error < 1e-6);
    }
}

TEST_CASE("dropout off is deterministic; equal seeds give equal masks")
{
    std::mt19937_64 rng(6);
    const MatrixD q = random(5, 4, rng), k = random(5, 4, rng), v = random(5, 4, rng);
    auto run = [&](double rate, std::mt19937_64* g) {
        Tape<double> t;
        return nn::attention_core(t.constant(q), t.constant(k), t.constant(v), MaskKind::causal, 2, rate, g).value();
    };
    CHECK(run(0.1, nullptr) == run(0.0, nullptr));
    std::mt19937_64 a(9), b(9);
    CHECK(run(0.5, &a) == run(0.5, &b));
    std::mt19937_64 c(10);
    CHECK(run(0.5, &c) != run(0.0, nullptr));
}

TEST_CASE("invalid head counts and causal shapes are config errors")
{
    Tape<double> t;
    const auto x = t.constant(MatrixD::Zero(3, 6));
    CHECK_THROWS_AS(nn::attention_core(x, x, x, MaskKind::full, 4), ConfigError);
    const auto y = t.constant(MatrixD::Zero(2, 6));
    CHECK_THROWS_AS(nn::attention_core(x, y, y, MaskKind::causal, 2), ConfigError);
    CHECK_NOTHROW(nn::attention_core(x, y, y, MaskKind::full, 2));
}
