#include "neuroseq/model/checkpoint.hpp"

#include "neuroseq/core/error.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace neuroseq::model {

using nlohmann::json;

namespace {

void put_u64(std::vector<unsigned char>& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

json tensor_entry(const NamedTensor& t, const char* group)
{
    return {{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"trainable", t.trainable},
            {"group", group}};
}

}  // namespace

const NamedTensor* ModelCheckpoint::find_state(const std::string& name) const
{
    for (const auto& t : state)
        if (t.name == name)
            return &t;
    return nullptr;
}

void ModelCheckpoint::set_state(const std::string& name, MatrixD value)
{
    for (auto& t : state) {
        if (t.name == name) {
            t.value = std::move(value);
            return;
        }
    }
    state.push_back({name, std::move(value), false});
}

const NamedTensor& ModelCheckpoint::parameter(const std::string& name) const
{
    for (const auto& t : parameters)
        if (t.name == name)
            return t;
    throw LookupError("checkpoint has no parameter '" + name + "'");
}

std::vector<unsigned char> serialize(const ModelCheckpoint& ckpt)
{
    json header;
    header["config"] = to_json(ckpt.config);
    header["subjects"] = ckpt.subjects;
    header["metadata"] = ckpt.metadata;
    header["tensors"] = json::array();
    for (const auto& t : ckpt.parameters)
        header["tensors"].push_back(tensor_entry(t, "parameter"));
    for (const auto& t : ckpt.state)
        header["tensors"].push_back(tensor_entry(t, "state"));
    const std::string text = header.dump();

    std::vector<unsigned char> out(kCheckpointMagic, kCheckpointMagic + 4);
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<unsigned char>((kCheckpointVersion >> (8 * i)) & 0xFF));
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());

    auto payload = [&](const NamedTensor& t) {
        for (Index r = 0; r < t.value.rows(); ++r)
            for (Index c = 0; c < t.value.cols(); ++c) {
                std::uint64_t raw;
                const double v = t.value(r, c);
                std::memcpy(&raw, &v, 8);
                put_u64(out, raw);
            }
    };
    for (const auto& t : ckpt.parameters)
        payload(t);
    for (const auto& t : ckpt.state)
        payload(t);
    return out;
}

ModelCheckpoint deserialize(const std::vector<unsigned char>& bytes, const std::string& origin)
{
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw FormatError(origin + ": not a neuroseq checkpoint");
    std::uint32_t version = 0;
    for (int i = 0; i < 4; ++i)
        version |= static_cast<std::uint32_t>(bytes[4 + i]) << (8 * i);
    if (version != kCheckpointVersion)
        throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t header_len = get_u64(bytes.data() + 8);
    if (header_len > bytes.size() - 16)
        throw TruncationError(origin + ": header runs past end of file");

    ModelCheckpoint ckpt;
    json header;
    try {
        header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
        ckpt.config = model_config_from_json(header.at("config"));
        ckpt.subjects = header.at("subjects").get<std::vector<std::string>>();
        ckpt.metadata = header.at("metadata");
    } catch (const json::exception& e) {
        throw FormatError(origin + ": bad header: " + e.what());
    }

    std::size_t offset = 16 + header_len;
    for (const auto& entry : header.at("tensors")) {
        NamedTensor t;
        t.name = entry.at("name").get<std::string>();
        t.trainable = entry.at("trainable").get<bool>();
        const auto rows = entry.at("rows").get<Index>();
        const auto cols = entry.at("cols").get<Index>();
        if (rows < 0 || cols < 0)
            throw FormatError(origin + ": tensor '" + t.name + "' has a negative shape");
        const std::size_t need = static_cast<std::size_t>(rows * cols) * 8;
        if (offset + need > bytes.size())
            throw TruncationError(origin + ": payload of '" + t.name + "' is truncated");
        t.value.resize(rows, cols);
        for (Index r = 0; r < rows; ++r)
            for (Index c = 0; c < cols; ++c, offset += 8) {
                const std::uint64_t raw = get_u64(bytes.data() + offset);
                std::memcpy(&t.value(r, c), &raw, 8);
            }
        const auto group = entry.at("group").get<std::string>();
        if (group == "parameter")
            ckpt.parameters.push_back(std::move(t));
        else if (group == "state")
            ckpt.state.push_back(std::move(t));
        else
            throw FormatError(origin + ": unknown tensor group '" + group + "'");
    }
    if (offset != bytes.size())
        throw FormatError(origin + ": trailing bytes after last tensor");
    if (ckpt.subjects.empty())
        throw FormatError(origin + ": checkpoint has no subjects");
    return ckpt;
}

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path)
{
    const auto bytes = serialize(ckpt);
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write checkpoint " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw IoError("short write to " + path.string());
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint " + path.string());
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize(bytes, path.string());
}

}  // namespace neuroseq::model
