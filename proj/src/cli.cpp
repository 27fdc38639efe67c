#include "neuroseq/cli/cli.hpp"

#include "neuroseq/core/hash.hpp"
#include "neuroseq/core/log.hpp"
#include "neuroseq/data/synth.hpp"
#include "neuroseq/eval/scoring.hpp"
#include "neuroseq/train/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace neuroseq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void require_flag(bool present, const std::string& flag, const std::string& command)
{
    if (!present)
        throw UsageError(command + ": " + flag + " is required");
}

std::vector<data::SessionData> load_all(const std::vector<std::string>& manifests)
{
    std::vector<data::SessionData> out;
    for (const auto& path : manifests) {
        auto sessions = data::load_sessions(data::load_manifest(path));
        for (auto& s : sessions)
            out.push_back(std::move(s));
    }
    return out;
}

/// Hashes every file under `out` except the run manifest itself.
void write_run_manifest(const fs::path& out, const std::string& command, const json& config, std::uint64_t seed,
                        const json& extra = json::object())
{
    fs::create_directories(out);
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out))
        if (entry.is_regular_file() && entry.path().filename() != "run_manifest.json")
            files.push_back(fs::relative(entry.path(), out));
    std::sort(files.begin(), files.end());
    json artifacts = json::object();
    for (const auto& f : files)
        artifacts[f.generic_string()] = sha256_file(out / f);

    json record = {{"command", command},
                   {"config", config},
                   {"config_hash", sha256_hex(config.dump())},
                   {"seed", seed},
                   {"artifacts", artifacts}};
    for (const auto& [k, v] : extra.items())
        record[k] = v;
    std::ofstream f(out / "run_manifest.json", std::ios::binary | std::ios::trunc);
    if (!f)
        throw IoError("cannot write " + (out / "run_manifest.json").string());
    f << record.dump(2) << "\n";
}

// ---- synth -------------------------------------------------------------------

struct SynthArgs {
    data::SynthConfig config;
    std::string dims = "12,8";
    std::string out;
};

void add_synth(CLI::App& app, SynthArgs& a)
{
    auto* cmd = app.add_subcommand("synth", "Generate a synthetic session with a known linear readout");
    cmd->add_option("--t-len", a.config.t_len, "Number of TRs")->capture_default_str();
    cmd->add_option("--parcels", a.config.parcels, "Parcels per fMRI frame")->capture_default_str();
    cmd->add_option("--subjects", a.config.subjects, "Number of subjects")->capture_default_str();
    cmd->add_option("--seed", a.config.seed, "Generator seed")->capture_default_str();
    cmd->add_option("--noise", a.config.noise_sd, "Gaussian noise sd")->capture_default_str();
    cmd->add_option("--dims", a.dims, "Comma-separated feature width per modality")->capture_default_str();
    cmd->add_option("--delay", a.config.delay, "Response delay in TRs")->capture_default_str();
    cmd->add_option("--smooth-width", a.config.smooth_width, "Moving-average width in TRs")->capture_default_str();
    cmd->add_option("--tr", a.config.tr_seconds, "Seconds per TR")->capture_default_str();
    cmd->add_option("--session-id", a.config.session_id, "Session identifier")->capture_default_str();
    cmd->add_option("-o,--out", a.out, "Output directory");
}

int run_synth(SynthArgs& a)
{
    require_flag(!a.out.empty(), "-o/--out", "synth");
    a.config.dims.clear();
    std::stringstream ss(a.dims);
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            a.config.dims.push_back(std::stol(item));
        } catch (const std::exception&) {
            throw ConfigError("synth: --dims entry '" + item + "' is not an integer");
        }
    }
    const auto manifest = data::synth_session(a.config, a.out);
    const json config = {{"t_len", a.config.t_len},       {"dims", a.config.dims},
                         {"parcels", a.config.parcels},   {"subjects", a.config.subjects},
                         {"noise_sd", a.config.noise_sd}, {"seed", a.config.seed},
                         {"delay", a.config.delay},       {"smooth_width", a.config.smooth_width},
                         {"tr_seconds", a.config.tr_seconds}, {"session_id", a.config.session_id}};
    write_run_manifest(a.out, "synth", config, a.config.seed);
    std::cout << "wrote " << manifest.sessions.size() << " session(s) to " << a.out << "\n";
    return kExitOk;
}

// ---- train / adapt -----------------------------------------------------------

struct TrainArgs {
    std::string config;
    std::vector<std::string> manifests;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common_train_flags(CLI::App* cmd, TrainArgs& a)
{
    cmd->add_option("--config", a.config, "Run config file (JSON with model and train sections)");
    cmd->add_option("--manifest", a.manifests, "Session manifest; repeat for several");
    cmd->add_option("--set", a.overrides, "Override section.key=value; repeatable");
    cmd->add_option("--seed", a.seed, "Overrides train.seed");
    cmd->add_option("-o,--out", a.out, "Output directory");
}

int run_train(TrainArgs& a)
{
    json config = train::to_json(a.config.empty() ? train::RunConfig{} : train::load_run_config(a.config));
    config = train::apply_overrides(config, a.overrides);
    if (a.seed)
        config["train"]["seed"] = *a.seed;
    train::RunConfig run = train::run_config_from_json(config);
    require_flag(!a.manifests.empty(), "--manifest", "train");
    require_flag(!a.out.empty(), "-o/--out", "train");

    const auto sessions = load_all(a.manifests);
    train::infer_model_dims(run.model, sessions);
    const auto result = train::train<double>(sessions, run, {a.out});
    write_run_manifest(a.out, "train", train::to_json(run), run.train.seed,
                       {{"manifests", a.manifests}, {"best_epoch", result.best_epoch}});
    if (std::isfinite(result.best_val))
        std::printf("best validation score %.6f at epoch %ld\n", result.best_val, static_cast<long>(result.best_epoch));
    else
        std::printf("trained %ld epoch(s); no validation score\n", static_cast<long>(result.history.size()));
    return kExitOk;
}

struct AdaptArgs {
    TrainArgs train;
    std::string checkpoint;
    std::string subject;
};

int run_adapt(AdaptArgs& a)
{
    require_flag(!a.checkpoint.empty(), "--checkpoint", "adapt");
    const auto ckpt = model::load_checkpoint(a.checkpoint);
    json train_json = train::to_json(train::TrainConfig{});
    if (!a.train.config.empty())
        train_json = train::to_json(train::load_run_config(a.train.config).train);
    else if (ckpt.metadata.contains("train_config"))
        train_json = ckpt.metadata.at("train_config");
    const json model_json = model::to_json(ckpt.config);
    json config = train::apply_overrides({{"model", model_json}, {"train", train_json}}, a.train.overrides);
    if (config.at("model") != model_json)
        throw ConfigError("adapt: model.* keys are fixed by the checkpoint and cannot be overridden");
    if (a.train.seed)
        config["train"]["seed"] = *a.train.seed;
    const auto tc = train::train_config_from_json(config.at("train"));
    require_flag(!a.subject.empty(), "--subject", "adapt");
    require_flag(!a.train.manifests.empty(), "--manifest", "adapt");
    require_flag(!a.train.out.empty(), "-o/--out", "adapt");

    const auto sessions = load_all(a.train.manifests);
    const auto result = train::finetune_subject<double>(ckpt, sessions, a.subject, tc, {a.train.out});
    write_run_manifest(a.train.out, "adapt", config, tc.seed,
                       {{"manifests", a.train.manifests},
                        {"base_checkpoint", sha256_file(a.checkpoint)},
                        {"subject", a.subject}});
    if (std::isfinite(result.best_val))
        std::printf("subject %s: best validation score %.6f\n", a.subject.c_str(), result.best_val);
    return kExitOk;
}

// ---- predict -----------------------------------------------------------------

struct PredictArgs {
    std::string checkpoint;
    std::vector<std::string> manifests;
    std::vector<std::string> subjects;
    std::string split = "all";
    std::optional<Index> stride;
    bool fast = false;
    std::string out;
};

int run_predict(PredictArgs& a)
{
    require_flag(!a.checkpoint.empty(), "--checkpoint", "predict");
    require_flag(!a.manifests.empty(), "--manifest", "predict");
    require_flag(!a.out.empty(), "-o/--out", "predict");
    if (a.split != "all")
        (void)data::parse_split(a.split);

    const auto ckpt = model::load_checkpoint(a.checkpoint);
    const auto model = model::restore_model<double>(ckpt);
    train::TrainConfig tc;
    if (ckpt.metadata.contains("train_config"))
        tc = train::train_config_from_json(ckpt.metadata.at("train_config"));
    data::WindowGeometry geometry = tc.window;
    geometry.stride = a.stride.value_or(tc.val_stride);
    data::validate(geometry);
    for (const auto& s : a.subjects)
        (void)model.subject(s);

    std::vector<data::SessionData> sessions;
    for (auto& s : load_all(a.manifests))
        if (a.split == "all" || data::to_string(s.split) == a.split)
            sessions.push_back(std::move(s));
    if (sessions.empty())
        throw ConfigError("predict: no session matches split '" + a.split + "'");
    auto mc = model.config();
    train::infer_model_dims(mc, sessions);
    auto prepared = train::prepare_sessions(sessions, mc, tc);
    train::apply_norm(prepared, train::load_norm(ckpt, mc.input_width()));

    fs::create_directories(a.out);
    std::size_t written = 0;
    for (const auto& s : prepared) {
        std::vector<std::string> subjects = a.subjects;
        if (subjects.empty()) {
            for (const auto& id : model.subjects())
                if (s.responses.empty() || s.responses.count(id))
                    subjects.push_back(id);
        }
        for (const auto& subject : subjects) {
            const auto rec = train::reconstruct(model, s, subject, 0, s.length(), geometry, !a.fast);
            const std::string stem = data::fmri_file_stem(s.session_id, subject);
            data::write_fsb(fs::path(a.out) / (stem + ".fsb"), rec.values.cast<float>());
            MatrixF coverage(s.length(), 1);
            for (Index t = 0; t < s.length(); ++t)
                coverage(t, 0) = rec.covered(t) ? 1.0f : 0.0f;
            data::write_fsb(fs::path(a.out) / (stem + ".coverage.fsb"), coverage);
            ++written;
        }
    }
    const json config = {{"checkpoint", fs::absolute(a.checkpoint).generic_string()},
                         {"checkpoint_sha256", sha256_file(a.checkpoint)},
                         {"model", model::to_json(ckpt.config)},
                         {"manifests", a.manifests},
                         {"split", a.split},
                         {"subjects", a.subjects},
                         {"w_in", geometry.w_in},
                         {"w_out", geometry.w_out},
                         {"delay", geometry.delay},
                         {"stride", geometry.stride},
                         {"decoding", a.fast ? "incremental" : "exact"}};
    write_run_manifest(a.out, "predict", config, tc.seed);
    std::printf("wrote %zu prediction(s) to %s\n", written, a.out.c_str());
    return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string out;
};

bool is_coverage_file(const fs::path& p)
{
    const std::string name = p.filename().string();
    return name.size() > 13 && name.ends_with(".coverage.fsb");
}

int run_eval(EvalArgs& a)
{
    require_flag(!a.pred.empty(), "--pred", "eval");
    require_flag(!a.truth.empty(), "--truth", "eval");
    if (!fs::is_directory(a.pred))
        throw IoError("eval: prediction directory " + a.pred + " does not exist");
    if (!fs::is_directory(a.truth))
        throw IoError("eval: truth directory " + a.truth + " does not exist");
    const fs::path out = a.out.empty() ? fs::path(a.pred) / "eval" : fs::path(a.out);

    std::vector<fs::path> truths;
    for (const auto& entry : fs::directory_iterator(a.truth))
        if (entry.is_regular_file() && entry.path().extension() == ".fsb" && !is_coverage_file(entry.path()))
            truths.push_back(entry.path());
    std::sort(truths.begin(), truths.end());
    if (truths.empty())
        throw LookupError("eval: no .fsb files in " + a.truth);

    eval::ScoreReport report;
    json files = json::array();
    for (const auto& truth_path : truths) {
        const std::string stem = truth_path.stem().string();
        const fs::path pred_path = fs::path(a.pred) / truth_path.filename();
        if (!fs::exists(pred_path))
            throw LookupError("eval: no prediction " + pred_path.string() + " for " + truth_path.string());
        const MatrixD truth = data::read_fsb(truth_path).cast<double>();
        const MatrixD pred = data::read_fsb(pred_path).cast<double>();
        if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
            throw ContractError("eval: " + pred_path.string() + " is " + std::to_string(pred.rows()) + "x" +
                                std::to_string(pred.cols()) + " but truth is " + std::to_string(truth.rows()) + "x" +
                                std::to_string(truth.cols()));
        std::vector<bool> mask(static_cast<std::size_t>(truth.rows()), true);
        const fs::path cov_path = fs::path(a.pred) / (stem + ".coverage.fsb");
        if (fs::exists(cov_path)) {
            const MatrixF cov = data::read_fsb(cov_path);
            if (cov.rows() != truth.rows() || cov.cols() != 1)
                throw ContractError("eval: coverage " + cov_path.string() + " must be " + std::to_string(truth.rows()) +
                                    "x1");
            for (Index t = 0; t < cov.rows(); ++t)
                mask[static_cast<std::size_t>(t)] = cov(t, 0) > 0.5f;
        }
        const auto sep = stem.find("__");
        const std::string session = sep == std::string::npos ? std::string() : stem.substr(0, sep);
        const std::string subject = sep == std::string::npos ? stem : stem.substr(sep + 2);
        report.entries.push_back({subject, session, eval::per_parcel_correlation(pred, truth, mask)});
        files.push_back({{"truth", truth_path.generic_string()}, {"pred", pred_path.generic_string()}});
    }

    const json config = {{"pred", a.pred}, {"truth", a.truth}, {"files", files}};
    std::string config_hash = sha256_hex(config.dump());
    const fs::path pred_manifest = fs::path(a.pred) / "run_manifest.json";
    if (fs::exists(pred_manifest)) {
        std::ifstream in(pred_manifest);
        const json m = json::parse(in, nullptr, false);
        if (!m.is_discarded() && m.contains("config_hash"))
            config_hash = m.at("config_hash").get<std::string>();
    }
    const double score = eval::challenge_score(report);
    eval::emit_report(report, out, config_hash);
    write_run_manifest(out, "eval", config, 0, {{"challenge_score", score}});
    std::printf("challenge score %.6f over %zu file(s)\n", score, report.entries.size());
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args)
{
    init_logging();
    CLI::App app{"neuroseq: stimulus-to-fMRI encoding models"};
    app.name("neuroseq");
    app.require_subcommand(1);

    SynthArgs synth;
    add_synth(app, synth);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model on one or more session manifests");
    add_common_train_flags(train_cmd, train_args);

    AdaptArgs adapt;
    auto* adapt_cmd = app.add_subcommand("adapt", "Add a new subject to a checkpoint and fit only its parameters");
    add_common_train_flags(adapt_cmd, adapt.train);
    adapt_cmd->add_option("--checkpoint", adapt.checkpoint, "Trained checkpoint");
    adapt_cmd->add_option("--subject", adapt.subject, "Identifier of the new subject");

    PredictArgs predict;
    auto* predict_cmd = app.add_subcommand("predict", "Predict full-session responses from a checkpoint");
    predict_cmd->add_option("--checkpoint", predict.checkpoint, "Trained checkpoint");
    predict_cmd->add_option("--manifest", predict.manifests, "Session manifest; repeat for several");
    predict_cmd->add_option("--subject", predict.subjects, "Subject to predict; repeatable (default: all)");
    predict_cmd->add_option("--split", predict.split, "Sessions to predict: all, train, val or test")
        ->capture_default_str();
    predict_cmd->add_option("--stride", predict.stride, "Window stride (default: train.val_stride)");
    predict_cmd->add_flag("--fast", predict.fast, "Cached incremental decoding instead of exact recomputation");
    predict_cmd->add_option("-o,--out", predict.out, "Output directory for <session>__<subject>.fsb files");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground-truth responses");
    eval_cmd->add_option("--pred", eval_args.pred, "Directory of predicted FSB files");
    eval_cmd->add_option("--truth", eval_args.truth, "Directory of ground-truth FSB files with matching names");
    eval_cmd->add_option("-o,--out", eval_args.out, "Report directory (default: <pred>/eval)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    CLI::App* active = app.get_subcommands().front();
    try {
        if (active == train_cmd)
            return run_train(train_args);
        if (active == adapt_cmd)
            return run_adapt(adapt);
        if (active == predict_cmd)
            return run_predict(predict);
        if (active == eval_cmd)
            return run_eval(eval_args);
        return run_synth(synth);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << active->help();
        return kExitUsage;
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        spdlog::error("malformed JSON: {}", e.what());
        return kExitData;
    }
}

int run(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace neuroseq::cli
