#include "tba/checkpoint.hpp"

#include <json.hpp>

#include "tba/io.hpp"

namespace tba {

const std::string& CheckpointMeta::at(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw std::out_of_range("checkpoint meta: missing field " + key);
    return it->second;
}

namespace {

std::filesystem::path with_ext(std::filesystem::path base, const char* ext) {
    base += ext;
    return base;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& base, const CheckpointMeta& meta,
                     const std::vector<std::string>& names, const std::vector<Tensor>& tensors) {
    if (names.size() != tensors.size())
        throw std::invalid_argument("save_checkpoint: name/tensor count mismatch");
    nlohmann::json header;
    header["format_version"] = 1;
    header["meta"] = meta.fields;
    nlohmann::json layout = nlohmann::json::array();
    std::vector<double> blob;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        layout.push_back({{"name", names[i]}, {"shape", tensors[i].shape()}});
        blob.insert(blob.end(), tensors[i].values().begin(), tensors[i].values().end());
    }
    header["tensors"] = layout;
    std::filesystem::path blob_path = with_ext(base, ".blob");
    io::write_blob(blob_path, blob);
    header["blob"] = blob_path.filename().string();
    header["blob_hash"] = io::file_hash(blob_path);
    io::write_text(with_ext(base, ".json"), header.dump(2));
}

CheckpointMeta peek_checkpoint_meta(const std::filesystem::path& base) {
    nlohmann::json header = nlohmann::json::parse(io::read_text(with_ext(base, ".json")));
    CheckpointMeta meta;
    meta.fields = header.at("meta").get<std::map<std::string, std::string>>();
    return meta;
}

CheckpointMeta load_checkpoint(const std::filesystem::path& base,
                               const std::vector<std::string>& expected_names,
                               std::vector<Tensor>& tensors) {
    nlohmann::json header = nlohmann::json::parse(io::read_text(with_ext(base, ".json")));
    if (expected_names.size() != tensors.size())
        throw std::invalid_argument("load_checkpoint: name/tensor count mismatch");
    const auto& layout = header.at("tensors");
    if (layout.size() != tensors.size())
        throw std::runtime_error("load_checkpoint: tensor count mismatch in " + base.string());

    std::filesystem::path blob_path = base.parent_path() / header.at("blob").get<std::string>();
    io::verify_hash(blob_path, header.at("blob_hash").get<std::string>());
    std::vector<double> blob = io::read_blob(blob_path);

    std::size_t offset = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (layout[i].at("name").get<std::string>() != expected_names[i] ||
            layout[i].at("shape").get<Shape>() != tensors[i].shape())
            throw std::runtime_error("load_checkpoint: layout mismatch at tensor " + expected_names[i]);
        auto dst = tensors[i].values_mut();
        if (offset + dst.size() > blob.size())
            throw std::runtime_error("load_checkpoint: blob too short");
        std::copy(blob.begin() + offset, blob.begin() + offset + dst.size(), dst.begin());
        offset += dst.size();
    }
    if (offset != blob.size()) throw std::runtime_error("load_checkpoint: blob too long");

    CheckpointMeta meta;
    meta.fields = header.at("meta").get<std::map<std::string, std::string>>();
    return meta;
}

}  // namespace tba
