#include "neuroseq/core/error.hpp"
#include "neuroseq/eval/scoring.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace neuroseq::eval {

using nlohmann::json;

namespace {

std::string full_precision(double v)
{
    if (std::isnan(v))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_name(const ScoreEntry& e) { return "scores_" + e.subject + "__" + e.session + ".csv"; }

json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

void emit_report(const ScoreReport& report, const std::filesystem::path& dir, const std::string& config_hash)
{
    if (dir.empty())
        throw IoError("emit_report: empty output path");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
        throw IoError("emit_report: cannot create " + dir.string() + ": " + ec.message());

    json summary;
    summary["config_hash"] = config_hash;
    summary["entries"] = json::array();
    json subjects = json::object();
    for (const auto& e : report.entries) {
        const auto path = dir / csv_name(e);
        std::ofstream csv(path, std::ios::trunc);
        if (!csv)
            throw IoError("emit_report: cannot write " + path.string());
        csv << "parcel,correlation,defined\n";
        for (std::size_t p = 0; p < e.scores.correlation.size(); ++p)
            csv << p << ',' << full_precision(e.scores.correlation[p]) << ',' << (e.scores.defined[p] ? 1 : 0)
                << '\n';
        summary["entries"].push_back({{"subject", e.subject},
                                      {"session", e.session},
                                      {"csv", csv_name(e)},
                                      {"parcels", e.scores.correlation.size()},
                                      {"defined", e.scores.defined_count()},
                                      {"mean", number_or_null(e.scores.mean())}});
        subjects[e.subject] = number_or_null(report.subject_mean(e.subject));
    }
    summary["subjects"] = subjects;
    try {
        summary["grand_mean"] = challenge_score(report);
    } catch (const UndefinedScoreError&) {
        summary["grand_mean"] = nullptr;
    }

    std::ofstream out(dir / "summary.json", std::ios::trunc);
    if (!out)
        throw IoError("emit_report: cannot write summary in " + dir.string());
    out << summary.dump(2) << '\n';
}

ScoreReport read_report(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "summary.json");
    if (!in)
        throw IoError("read_report: no summary.json in " + dir.string());
    const json summary = json::parse(in);
    ScoreReport report;
    for (const auto& entry : summary.at("entries")) {
        ScoreEntry e;
        e.subject = entry.at("subject").get<std::string>();
        e.session = entry.at("session").get<std::string>();
        std::ifstream csv(dir / entry.at("csv").get<std::string>());
        if (!csv)
            throw IoError("read_report: missing " + entry.at("csv").get<std::string>());
        std::string line;
        std::getline(csv, line);
        if (line != "parcel,correlation,defined")
            throw FormatError("read_report: unexpected CSV header '" + line + "'");
        while (std::getline(csv, line)) {
            if (line.empty())
                continue;
            std::stringstream row(line);
            std::string parcel, corr, defined;
            std::getline(row, parcel, ',');
            std::getline(row, corr, ',');
            std::getline(row, defined, ',');
            e.scores.correlation.push_back(std::strtod(corr.c_str(), nullptr));
            e.scores.defined.push_back(defined == "1");
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace neuroseq::eval
