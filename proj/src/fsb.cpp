#include "neuroseq/data/fsb.hpp"

#include "neuroseq/core/error.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

namespace neuroseq::data {

namespace {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i)
        out.push_back(static_cast<unsigned char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

std::vector<unsigned char> slurp(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

MatrixF read_fsb(const std::filesystem::path& path)
{
    const auto bytes = slurp(path);
    const std::string where = path.string();
    if (bytes.size() < kFsbHeaderBytes || std::memcmp(bytes.data(), kFsbMagic, 4) != 0)
        throw FormatError(where + ": missing ALGF magic");

    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    const auto rows = get_le<std::uint64_t>(bytes.data() + 8);
    const auto cols = get_le<std::uint64_t>(bytes.data() + 16);
    const auto dtype = bytes[24];
    if (version != kFsbVersion)
        throw FormatError(where + ": unsupported FSB version " + std::to_string(version));
    if (dtype != kFsbFloat32)
        throw FormatError(where + ": unsupported dtype " + std::to_string(dtype));
    for (std::size_t i = 25; i < kFsbHeaderBytes; ++i)
        if (bytes[i] != 0)
            throw FormatError(where + ": reserved header bytes must be zero");
    if (rows == 0 || cols == 0)
        throw FormatError(where + ": empty matrix");

    const std::uint64_t count = rows * cols;
    const std::uint64_t payload = bytes.size() - kFsbHeaderBytes;
    if (payload != count * 4)
        throw TruncationError(where + ": header declares " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " (" + std::to_string(count) +
                              " floats) but payload holds " + std::to_string(payload / 4) +
                              " floats" + (payload % 4 ? " plus a partial value" : ""));

    MatrixF values(static_cast<Index>(rows), static_cast<Index>(cols));
    const unsigned char* p = bytes.data() + kFsbHeaderBytes;
    for (Index r = 0; r < values.rows(); ++r) {
        for (Index c = 0; c < values.cols(); ++c, p += 4) {
            const auto raw = get_le<std::uint32_t>(p);
            float v;
            std::memcpy(&v, &raw, 4);
            if (!std::isfinite(v))
                throw DataError(where + ": non-finite value at (" + std::to_string(r) + ", " +
                                    std::to_string(c) + ")",
                                static_cast<long>(r), static_cast<long>(c));
            values(r, c) = v;
        }
    }
    return values;
}

void write_fsb(const std::filesystem::path& path, const MatrixF& values)
{
    std::vector<unsigned char> out;
    out.reserve(kFsbHeaderBytes + static_cast<std::size_t>(values.size()) * 4);
    out.insert(out.end(), kFsbMagic, kFsbMagic + 4);
    put_le<std::uint32_t>(out, kFsbVersion);
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(values.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(values.cols()));
    out.push_back(kFsbFloat32);
    out.insert(out.end(), 7, 0);
    for (Index r = 0; r < values.rows(); ++r) {
        for (Index c = 0; c < values.cols(); ++c) {
            std::uint32_t raw;
            const float v = values(r, c);
            std::memcpy(&raw, &v, 4);
            put_le<std::uint32_t>(out, raw);
        }
    }

    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file)
        throw IoError("cannot write " + path.string());
    file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!file)
        throw IoError("short write to " + path.string());
}

FeatureSequence read_feature_sequence(const std::filesystem::path& path, std::string modality_id,
                                      double tr_seconds)
{
    if (!(tr_seconds > 0))
        throw ContractError("tr_seconds must be positive");
    if (modality_id.empty())
        modality_id = path.stem().string();
    return {std::move(modality_id), read_fsb(path), tr_seconds};
}

FmriSequence read_fmri_sequence(const std::filesystem::path& path, std::string subject_id,
                                double tr_seconds)
{
    if (!(tr_seconds > 0))
        throw ContractError("tr_seconds must be positive");
    if (subject_id.empty())
        subject_id = path.stem().string();
    return {std::move(subject_id), read_fsb(path), tr_seconds};
}

}  // namespace neuroseq::data
