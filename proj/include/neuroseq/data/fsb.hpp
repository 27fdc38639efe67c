#pragma once

#include "neuroseq/core/types.hpp"

#include <filesystem>
#include <string>

namespace neuroseq::data {

// FSB: little-endian "ALGF" | u32 version | u64 rows | u64 cols | u8 dtype |
// 7 reserved zero bytes | rows*cols float32 row-major.
inline constexpr char kFsbMagic[4] = {'A', 'L', 'G', 'F'};
inline constexpr std::uint32_t kFsbVersion = 1;
inline constexpr std::uint8_t kFsbFloat32 = 1;
inline constexpr std::size_t kFsbHeaderBytes = 32;

struct FeatureSequence {
    std::string modality_id;
    MatrixF data;
    double tr_seconds = 1.5;

    Index length() const { return data.rows(); }
    Index width() const { return data.cols(); }
};

struct FmriSequence {
    std::string subject_id;
    MatrixF data;
    double tr_seconds = 1.5;

    Index length() const { return data.rows(); }
    Index parcels() const { return data.cols(); }
};

/// Reads an FSB matrix. Throws FormatError on a bad header, TruncationError when
/// the payload is shorter or longer than declared, DataError on NaN/Inf.
MatrixF read_fsb(const std::filesystem::path& path);

void write_fsb(const std::filesystem::path& path, const MatrixF& values);

FeatureSequence read_feature_sequence(const std::filesystem::path& path,
                                      std::string modality_id = {},
                                      double tr_seconds = 1.5);

FmriSequence read_fmri_sequence(const std::filesystem::path& path,
                                std::string subject_id = {},
                                double tr_seconds = 1.5);

}  // namespace neuroseq::data
