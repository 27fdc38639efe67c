#include "neuroseq/data/manifest.hpp"

#include "neuroseq/core/error.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

namespace neuroseq::data {

using nlohmann::json;

std::string to_string(Split split)
{
    switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "train";
}

Split parse_split(const std::string& text)
{
    if (text == "train")
        return Split::train;
    if (text == "val")
        return Split::val;
    if (text == "test")
        return Split::test;
    throw ConfigError("unknown split '" + text + "' (expected train, val or test)");
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

void require_file(const std::filesystem::path& p, const std::string& what)
{
    if (!std::filesystem::is_regular_file(p))
        throw IoError(what + " not found: " + p.string());
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open manifest " + path.string());

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }

    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    Manifest manifest;
    try {
        if (doc.value("format", std::string{}) != "neuroseq-manifest")
            throw FormatError(path.string() + ": not a neuroseq manifest");
        manifest.tr_seconds = doc.value("tr_seconds", 1.5);
        if (!(manifest.tr_seconds > 0))
            throw ConfigError(path.string() + ": tr_seconds must be positive");

        for (const auto& s : doc.at("sessions")) {
            SessionManifest session;
            session.session_id = s.at("id").get<std::string>();
            session.split = parse_split(s.value("split", std::string("train")));
            for (const auto& f : s.at("features")) {
                FeatureRef ref{f.at("modality").get<std::string>(),
                               resolve(base, f.at("path").get<std::string>())};
                require_file(ref.path, "feature file");
                session.features.push_back(std::move(ref));
            }
            const json fmri = s.value("fmri", json::object());
            for (const auto& [subject, file] : fmri.items()) {
                auto p = resolve(base, file.get<std::string>());
                require_file(p, "fMRI file");
                session.fmri.emplace(subject, std::move(p));
            }
            if (s.contains("summary")) {
                const auto& sum = s.at("summary");
                SummaryRef ref{resolve(base, sum.at("embeddings").get<std::string>()),
                               sum.at("anchors").get<std::vector<double>>()};
                require_file(ref.embeddings, "summary file");
                session.summary = std::move(ref);
            }
            if (session.features.empty())
                throw ConfigError("session " + session.session_id + " lists no feature files");
            manifest.sessions.push_back(std::move(session));
        }
        if (doc.contains("synthetic"))
            manifest.synthetic_json = doc.at("synthetic").dump();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path)
{
    json doc;
    doc["format"] = "neuroseq-manifest";
    doc["version"] = 1;
    doc["tr_seconds"] = manifest.tr_seconds;
    doc["sessions"] = json::array();
    for (const auto& s : manifest.sessions) {
        json js;
        js["id"] = s.session_id;
        js["split"] = to_string(s.split);
        js["features"] = json::array();
        for (const auto& f : s.features)
            js["features"].push_back({{"modality", f.modality}, {"path", f.path.generic_string()}});
        js["fmri"] = json::object();
        for (const auto& [subject, p] : s.fmri)
            js["fmri"][subject] = p.generic_string();
        if (s.summary)
            js["summary"] = {{"embeddings", s.summary->embeddings.generic_string()},
                             {"anchors", s.summary->anchors}};
        doc["sessions"].push_back(std::move(js));
    }
    if (!manifest.synthetic_json.empty())
        doc["synthetic"] = json::parse(manifest.synthetic_json);

    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
}

Index SessionData::length() const
{
    return features.empty() ? 0 : features.front().length();
}

Index SessionData::feature_width() const
{
    Index width = 0;
    for (const auto& f : features)
        width += f.width();
    return width;
}

std::vector<std::string> SessionData::subjects() const
{
    std::vector<std::string> ids;
    for (const auto& [id, seq] : fmri)
        ids.push_back(id);
    return ids;
}

SessionData load_session(const SessionManifest& session, double tr_seconds)
{
    SessionData data;
    data.session_id = session.session_id;
    data.split = session.split;
    data.tr_seconds = tr_seconds;

    for (const auto& ref : session.features)
        data.features.push_back(read_feature_sequence(ref.path, ref.modality, tr_seconds));
    for (const auto& [subject, p] : session.fmri)
        data.fmri.emplace(subject, read_fmri_sequence(p, subject, tr_seconds));
    if (session.summary) {
        SummaryContext ctx{read_fsb(session.summary->embeddings), session.summary->anchors};
        validate(ctx);
        data.summary = std::move(ctx);
    }

    Index shortest = std::numeric_limits<Index>::max();
    Index longest = 0;
    for (const auto& f : data.features) {
        shortest = std::min(shortest, f.length());
        longest = std::max(longest, f.length());
    }
    for (const auto& [subject, f] : data.fmri) {
        shortest = std::min(shortest, f.length());
        longest = std::max(longest, f.length());
    }
    if (shortest != longest) {
        spdlog::warn("session {}: streams have {}..{} TRs, truncating to {}", data.session_id,
                     shortest, longest, shortest);
        for (auto& f : data.features)
            f.data.conservativeResize(shortest, Eigen::NoChange);
        for (auto& [subject, f] : data.fmri)
            f.data.conservativeResize(shortest, Eigen::NoChange);
    }
    return data;
}

std::vector<SessionData> load_sessions(const Manifest& manifest)
{
    std::vector<SessionData> sessions;
    for (const auto& s : manifest.sessions)
        sessions.push_back(load_session(s, manifest.tr_seconds));
    return sessions;
}

}  // namespace neuroseq::data
