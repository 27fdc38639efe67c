#include "test_util.hpp"

#include "neuroseq/core/error.hpp"
#include "neuroseq/data/manifest.hpp"

#include <doctest.h>

using namespace neuroseq;
using testutil::TempDir;

namespace {

MatrixF ramp(Index rows, Index cols, float offset)
{
    MatrixF m(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
            m(r, c) = offset + static_cast<float>(r * cols + c);
    return m;
}

data::Manifest two_session_manifest(const TempDir& dir)
{
    data::write_fsb(dir / "a_video.fsb", ramp(30, 3, 0));
    data::write_fsb(dir / "a_audio.fsb", ramp(32, 2, 100));
    data::write_fsb(dir / "a_s1.fsb", ramp(31, 4, 1000));
    data::write_fsb(dir / "b_video.fsb", ramp(20, 3, 0));
    data::write_fsb(dir / "b_audio.fsb", ramp(20, 2, 0));
    data::write_fsb(dir / "b_sum.fsb", ramp(2, 5, 0));

    data::Manifest m;
    m.tr_seconds = 2.0;
    data::SessionManifest a;
    a.session_id = "a";
    a.features = {{"video", "a_video.fsb"}, {"audio", "a_audio.fsb"}};
    a.fmri = {{"s1", "a_s1.fsb"}};
    data::SessionManifest b;
    b.session_id = "b";
    b.split = data::Split::test;
    b.features = {{"video", "b_video.fsb"}, {"audio", "b_audio.fsb"}};
    b.summary = data::SummaryRef{"b_sum.fsb", {0.0, 10.0}};
    m.sessions = {a, b};
    data::save_manifest(m, dir / "manifest.json");
    return m;
}

}  // namespace

TEST_CASE("relative paths resolve against the manifest directory")
{
    TempDir dir("manifest");
    two_session_manifest(dir);
    const auto m = data::load_manifest(dir / "manifest.json");
    CHECK(m.tr_seconds == 2.0);
    REQUIRE(m.sessions.size() == 2);
    CHECK(m.sessions[0].features[0].path == dir / "a_video.fsb");
    CHECK(m.sessions[0].fmri.at("s1") == dir / "a_s1.fsb");
    CHECK(m.sessions[1].split == data::Split::test);
    CHECK(m.sessions[1].fmri.empty());
    REQUIRE(m.sessions[1].summary.has_value());
    CHECK(m.sessions[1].summary->anchors == std::vector<double>{0.0, 10.0});
}

TEST_CASE("streams are truncated to the shortest length")
{
    TempDir dir("manifest");
    two_session_manifest(dir);
    const auto sessions = data::load_sessions(data::load_manifest(dir / "manifest.json"));
    REQUIRE(sessions.size() == 2);
    const auto& a = sessions[0];
    CHECK(a.length() == 30);
    CHECK(a.features[1].length() == 30);
    CHECK(a.fmri.at("s1").length() == 30);
    CHECK(a.feature_width() == 5);
    CHECK(a.subjects() == std::vector<std::string>{"s1"});
    CHECK(a.fmri.at("s1").data(29, 3) == 1000.0f + 29 * 4 + 3);
    CHECK(a.features[0].modality_id == "video");
    CHECK(a.tr_seconds == 2.0);
    REQUIRE(sessions[1].summary.has_value());
    CHECK(sessions[1].summary->sentences() == 2);
}

TEST_CASE("missing referenced files name the path")
{
    TempDir dir("manifest");
    two_session_manifest(dir);
    std::filesystem::remove(dir / "a_s1.fsb");
    try {
        (void)data::load_manifest(dir / "manifest.json");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("a_s1.fsb") != std::string::npos);
    }
    CHECK_THROWS_AS(data::load_manifest(dir / "absent.json"), IoError);
}

TEST_CASE("malformed manifests are rejected")
{
    TempDir dir("manifest");
    std::ofstream(dir / "bad.json") << "{not json";
    CHECK_THROWS_AS(data::load_manifest(dir / "bad.json"), FormatError);
    std::ofstream(dir / "other.json") << R"({"format": "something-else", "sessions": []})";
    CHECK_THROWS_AS(data::load_manifest(dir / "other.json"), FormatError);
    data::write_fsb(dir / "f.fsb", ramp(4, 1, 0));
    std::ofstream(dir / "split.json")
        << R"({"format": "neuroseq-manifest", "sessions": [{"id": "x", "split": "holdout", "features": [{"modality": "m", "path": "f.fsb"}]}]})";
    CHECK_THROWS_AS(data::load_manifest(dir / "split.json"), ConfigError);
}

TEST_CASE("split names round trip")
{
    for (auto s : {data::Split::train, data::Split::val, data::Split::test})
        CHECK(data::parse_split(data::to_string(s)) == s);
}
