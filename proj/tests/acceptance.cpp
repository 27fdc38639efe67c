// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when all pass.
#include "model_fixture.hpp"

#include "neuroseq/cli/cli.hpp"
#include "neuroseq/data/synth.hpp"
#include "neuroseq/data/windows.hpp"
#include "neuroseq/eval/scoring.hpp"
#include "neuroseq/nn/grad_check.hpp"
#include "neuroseq/train/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

using namespace neuroseq;
namespace fs = std::filesystem;
using fixture::gaussian_matrix;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string format_line(const char* format, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

model::EncodingModel<double> perturbed_tiny(std::uint64_t seed, const std::vector<std::string>& subjects = {"a", "b"})
{
    model::EncodingModel<double> m(fixture::tiny_config(), subjects, seed);
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    fixture::perturb(m.params(), rng);
    return m;
}

int cli(std::vector<std::string> args)
{
    return cli::run(args);
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity()
{
    const auto t0 = Clock::now();
    double worst = 0.0;
    int seeds = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed, ++seeds) {
        auto m = perturbed_tiny(seed);
        std::mt19937_64 rng(seed);
        const auto w = fixture::random_window(m.config(), 6, 2, rng);
        const auto report = nn::grad_check(m.params(), [&](nn::Tape<double>& t) { return fixture::window_loss(m, t, w, "a"); });
        worst = std::max(worst, report.max_rel_error);
    }
    const double elapsed = seconds_since(t0);
    return {worst < 1e-4 && elapsed < 30.0,
            format_line("%d seeds, max rel error %.3g (< 1e-4), %.2f s (< 30 s)", seeds, worst, elapsed)};
}

Outcome causality()
{
    int failures = 0;
    const int trials = 100;
    for (int trial = 0; trial < trials; ++trial) {
        const auto m = perturbed_tiny(100 + trial);
        std::mt19937_64 rng(trial);
        const Index steps = 8;
        const Index t = static_cast<Index>(rng() % (steps - 1));

        MatrixD x = gaussian_matrix(steps, m.config().input_width(), rng);
        const MatrixD h = m.encode_stimulus(x);
        x.bottomRows(steps - 1 - t) = gaussian_matrix(steps - 1 - t, x.cols(), rng, 5.0);
        if (h.topRows(t + 1) != m.encode_stimulus(x).topRows(t + 1))
            ++failures;

        const MatrixD summary = gaussian_matrix(2, m.config().summary_dim, rng);
        // Teacher row r feeds step r + 1, so rows >= t belong to steps > t.
        MatrixD prev = gaussian_matrix(steps - 1, m.config().parcels, rng);
        const MatrixD y = m.decoder_forward_tf(h, summary, "b", prev);
        prev.bottomRows(steps - 1 - t) = gaussian_matrix(steps - 1 - t, prev.cols(), rng, 5.0);
        if (y.topRows(t + 1) != m.decoder_forward_tf(h, summary, "b", prev).topRows(t + 1))
            ++failures;
    }
    return {failures == 0, format_line("%d trials, %d non-identical prefixes", trials, failures)};
}

Outcome loss_identities()
{
    std::mt19937_64 rng(42);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const double lambda = 0.25 * (trial % 8);
        const MatrixD target = gaussian_matrix(7, 5, rng);
        worst = std::max(worst, std::abs(train::combined_loss<double>(target, target, lambda).total + lambda));

        const Eigen::VectorXd a = gaussian_matrix(9, 1, rng);
        const Eigen::VectorXd b = gaussian_matrix(9, 1, rng);
        const double alpha = std::exp(gaussian_matrix(1, 1, rng)(0, 0));
        const double beta = 3.0 * gaussian_matrix(1, 1, rng)(0, 0);
        const Eigen::VectorXd affine = (alpha * a.array() + beta).matrix();
        worst = std::max(worst, std::abs(train::pearson_rho(a, a) - 1.0));
        worst = std::max(worst, std::abs(train::pearson_rho(a, (-a).eval()) + 1.0));
        worst = std::max(worst, std::abs(train::pearson_rho(affine, b) - train::pearson_rho(a, b)));
    }
    return {worst < 1e-6, format_line("max deviation %.3g (< 1e-6)", worst)};
}

std::vector<data::SessionData> small_sessions(const fs::path& dir, Index t_len, std::uint64_t seed)
{
    data::SynthConfig cfg;
    cfg.t_len = t_len;
    cfg.dims = {3, 2};
    cfg.parcels = 4;
    cfg.summary_width = 3;
    cfg.seed = seed;
    return data::load_sessions(data::synth_session(cfg, dir));
}

Outcome subject_isolation(const fs::path& work)
{
    int leaks = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = perturbed_tiny(seed);
        std::mt19937_64 rng(seed);
        const auto w = fixture::random_window(m.config(), 6, 2, rng);
        nn::Gradients<double> g(m.params());
        nn::Tape<double> tape(&g);
        tape.backward(fixture::window_loss(m, tape, w, "a"));
        for (const auto& name : m.subject_tensor_names("b"))
            leaks += !g[m.params().index(name)].isZero(0.0);
    }

    train::RunConfig rc;
    rc.model.d = 8;
    rc.model.heads = 2;
    rc.model.enc_layers = 1;
    rc.model.dec_layers = 1;
    rc.model.max_len = 16;
    rc.train.window = {8, 6, 2, 1};
    rc.train.epochs = 1;
    rc.train.batch_size = 4;
    const auto base = train::train<double>(small_sessions(work / "iso_base", 120, 3), rc).last;

    auto fresh = small_sessions(work / "iso_new", 100, 9);
    auto node = fresh[0].fmri.extract("sub-01");
    node.key() = "sub-new";
    node.mapped().subject_id = "sub-new";
    fresh[0].fmri.insert(std::move(node));
    fresh[0].fmri.erase("sub-02");
    rc.train.epochs = 2;
    const auto tuned = train::finetune_subject<double>(base, fresh, "sub-new", rc.train).last;
    const auto before = model::restore_model<double>(base);
    const auto after = model::restore_model<double>(tuned);
    int changed = 0;
    for (const auto& p : before.params())
        changed += after.params().at(p.name).value != p.value;
    const auto init = model::adapt_new_subject(before, "sub-new", rc.train.seed);
    const bool readout_moved = after.params().at("subject.sub-new.w_out").value != init.params().at("subject.sub-new.w_out").value;
    return {leaks == 0 && changed == 0 && readout_moved,
            format_line("%d nonzero gradients on the other subject over 10 seeds; %d shared tensors changed by fine-tuning "
                "(new readout %s)",
                leaks, changed, readout_moved ? "updated" : "NOT updated")};
}

Outcome windowing_oracle()
{
    const data::WindowGeometry g{40, 35, 5, 1};
    const std::string subject[] = {"s"};
    const auto windows = data::build_windows("sess", subject, 100, g);
    // Enumerate every start by hand.
    std::vector<Index> expected;
    for (Index s = 0; s < 100; ++s)
        if (s + g.w_in <= 100 && s + g.delay + g.w_out <= 100)
            expected.push_back(s);
    std::vector<Index> starts;
    std::vector<int> cover(100, 0);
    for (const auto& w : windows) {
        starts.push_back(w.start);
        for (Index t = w.target_begin(); t < w.target_end(); ++t)
            ++cover[static_cast<std::size_t>(t)];
    }
    bool tiles = true;
    for (Index t = 0; t < 100; ++t)
        tiles = tiles && ((t >= 5) == (cover[static_cast<std::size_t>(t)] > 0));
    const bool ok = windows.size() == 61 && starts == expected && tiles;
    return {ok, format_line("%zu windows (expect 61), starts %s enumeration, targets %s [5, 100)", windows.size(),
                    starts == expected ? "match" : "DIFFER from", tiles ? "cover exactly" : "do NOT cover exactly")};
}

Outcome learnability(const fs::path& work, const fs::path& synth_dir)
{
    const auto manifest = data::synth_session(data::SynthConfig{}, synth_dir);
    const auto sessions = data::load_sessions(manifest);

    train::RunConfig rc;
    train::TrainOutputs outputs;
    outputs.dir = work / "learn_run";
    // Stop once the per-epoch validation score is comfortably above the bar.
    outputs.stop_after = [](const train::EpochRecord& r) { return std::isfinite(r.val_score) && r.val_score >= 0.55; };
    const auto t0 = Clock::now();
    const auto result = train::train<double>(sessions, rc, outputs);
    const double elapsed = seconds_since(t0);

    // Re-score the best checkpoint with exact free-running decoding.
    const auto m = model::restore_model<double>(result.best);
    auto mc = rc.model;
    train::infer_model_dims(mc, sessions);
    auto prepared = train::prepare_sessions(sessions, mc, rc.train);
    train::apply_norm(prepared, train::load_norm(result.best, mc.input_width()));
    data::WindowGeometry geometry = rc.train.window;
    geometry.stride = rc.train.val_stride;

    const auto truth = data::read_synth_truth(manifest, synth_dir);
    const auto& raw = sessions.front();
    MatrixD x(raw.length(), raw.feature_width());
    for (Index c = 0; const auto& f : raw.features) {
        x.middleCols(c, f.width()) = f.data.cast<double>();
        c += f.width();
    }

    eval::ScoreReport model_report, ceiling_report;
    for (const auto& p : prepared) {
        for (const auto& [subject, y] : p.responses) {
            const auto rec = train::reconstruct(m, p, subject, p.val_begin, p.val_end, geometry, true);
            const auto mask = rec.mask();
            model_report.entries.push_back({subject, p.session_id, eval::per_parcel_correlation(rec.values, y, mask)});
            const MatrixD readout = data::read_fsb(truth.readouts.at(subject)).cast<double>();
            const MatrixD ideal = data::synth_readout(x, readout, truth.delay, truth.smooth_width);
            ceiling_report.entries.push_back({subject, p.session_id, eval::per_parcel_correlation(ideal, y, mask)});
        }
    }
    const double score = eval::challenge_score(model_report);
    const double ceiling = eval::challenge_score(ceiling_report);
    const Index epochs = static_cast<Index>(result.history.size());
    return {score >= 0.5 && epochs <= 50 && elapsed < 600.0 && ceiling >= 0.9,
            format_line("held-out correlation %.4f (>= 0.5) from epoch %ld, %ld epochs run (<= 50), %.1f s (< 600 s), "
                "ground-truth readout %.4f (>= 0.9)",
                score, static_cast<long>(result.best_epoch) + 1, static_cast<long>(epochs), elapsed, ceiling)};
}

Outcome determinism(const fs::path& work)
{
    const fs::path data = work / "det_data";
    if (cli({"synth", "--t-len", "160", "--parcels", "6", "--dims", "4,3", "--seed", "5", "-o", data.string()}) != 0)
        return {false, "synth failed"};
    const std::vector<std::string> sets = {"--set", "model.d=16", "--set", "model.heads=2", "--set",
                                           "model.enc_layers=1", "--set", "model.dec_layers=1", "--set",
                                           "model.max_len=16", "--set", "train.w_in=12", "--set", "train.w_out=10",
                                           "--set", "train.delay=2", "--set", "train.epochs=3", "--set",
                                           "train.batch_size=8", "--set", "train.seed=7"};
    for (const char* run : {"det_run1", "det_run2"}) {
        std::vector<std::string> args = {"train", "--manifest", (data / "manifest.json").string(), "-o", (work / run).string()};
        args.insert(args.end(), sets.begin(), sets.end());
        if (cli(args) != 0)
            return {false, std::string("train failed for ") + run};
    }
    const bool logs_equal = slurp(work / "det_run1" / "metrics.jsonl") == slurp(work / "det_run2" / "metrics.jsonl") &&
                            !slurp(work / "det_run1" / "metrics.jsonl").empty();

    for (const char* out : {"det_pred1", "det_pred2"})
        if (cli({"predict", "--checkpoint", (work / "det_run1" / "best.ckpt").string(), "--manifest",
                 (data / "manifest.json").string(), "-o", (work / out).string()}) != 0)
            return {false, "predict failed"};
    int files = 0, differ = 0;
    for (const auto& e : fs::directory_iterator(work / "det_pred1")) {
        if (e.path().extension() != ".fsb")
            continue;
        ++files;
        const fs::path other = work / "det_pred2" / e.path().filename();
        differ += !fs::exists(other) || slurp(e.path()) != slurp(other);
    }
    return {logs_equal && files > 0 && differ == 0,
            format_line("metric logs %s; %d prediction files, %d differ", logs_equal ? "byte-identical" : "DIFFER", files, differ)};
}

Outcome self_evaluation(const fs::path& work, const fs::path& synth_dir)
{
    const fs::path out = work / "self_eval";
    const fs::path truth = synth_dir / "fmri";
    if (cli({"eval", "--pred", truth.string(), "--truth", truth.string(), "-o", out.string()}) != 0)
        return {false, "eval failed"};
    const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
    int undefined = 0, parcels = 0;
    for (const auto& e : eval::read_report(out).entries) {
        parcels += static_cast<int>(e.scores.defined.size());
        undefined += static_cast<int>(e.scores.defined.size()) - static_cast<int>(e.scores.defined_count());
    }
    const bool exact = summary.at("grand_mean").is_number() && summary.at("grand_mean").get<double>() == 1.0;
    return {exact && undefined == 0 && parcels > 0,
            format_line("grand mean %.17g (exactly 1.0), %d parcels, %d undefined",
                summary.at("grand_mean").is_number() ? summary.at("grand_mean").get<double>() : NAN, parcels, undefined)};
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app("Acceptance suite");
    std::string workdir = "acceptance_work";
    app.add_option("--workdir", workdir, "Scratch directory (wiped on start)");
    CLI11_PARSE(app, argc, argv);

    const fs::path work = fs::absolute(workdir);
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path synth_dir = work / "synth";

    struct Criterion {
        const char* name;
        std::function<Outcome()> check;
    };
    const std::vector<Criterion> criteria = {
        {"gradient fidelity", gradient_fidelity},
        {"causality", causality},
        {"loss identities", loss_identities},
        {"subject isolation", [&] { return subject_isolation(work); }},
        {"windowing oracle", windowing_oracle},
        {"synthetic learnability", [&] { return learnability(work, synth_dir); }},
        {"determinism", [&] { return determinism(work); }},
        {"self-evaluation", [&] { return self_evaluation(work, synth_dir); }},
    };

    std::vector<std::string> lines;
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        lines.push_back(format_line("%s  %-24s %s", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str()));
        std::printf("%s\n", lines.back().c_str());
        std::fflush(stdout);
    }
    std::printf("\n");
    for (const auto& l : lines)
        std::printf("%s\n", l.c_str());
    std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
