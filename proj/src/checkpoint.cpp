#include "mafgan/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mafgan {

using nlohmann::json;

std::string checkpoint_to_string(const StateRefs& state) {
    json doc;
    doc["format"] = kCheckpointFormat;
    json tensors = json::array();
    for (const auto& [name, m] : state) {
        json t;
        t["name"] = name;
        t["shape"] = {m->rows(), m->cols()};
        t["values"] = std::vector<double>(m->data(), m->data() + m->size());
        tensors.push_back(std::move(t));
    }
    doc["tensors"] = std::move(tensors);
    return doc.dump(1);
}

void checkpoint_from_string(const std::string& text, const StateRefs& state) {
    const json doc = json::parse(text);
    if (doc.value("format", std::string()) != kCheckpointFormat) {
        throw std::runtime_error("checkpoint: unknown format");
    }
    std::map<std::string, const json*> by_name;
    for (const auto& t : doc.at("tensors")) {
        by_name[t.at("name").get<std::string>()] = &t;
    }
    if (by_name.size() != state.size()) {
        throw std::runtime_error("checkpoint: expected " + std::to_string(state.size()) + " tensors, file has " +
                                 std::to_string(by_name.size()));
    }
    for (const auto& [name, m] : state) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
        }
        const json& t = *it->second;
        const auto shape = t.at("shape").get<std::vector<long>>();
        const auto values = t.at("values").get<std::vector<double>>();
        if (shape.size() != 2 || shape[0] != m->rows() || shape[1] != m->cols() ||
            static_cast<long>(values.size()) != m->size()) {
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        }
        std::copy(values.begin(), values.end(), m->data());
    }
}

void save_checkpoint(const std::filesystem::path& path, const StateRefs& state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("checkpoint: cannot write " + path.string());
    }
    out << checkpoint_to_string(state) << '\n';
}

void load_checkpoint(const std::filesystem::path& path, const StateRefs& state) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("checkpoint: cannot read " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    checkpoint_from_string(buffer.str(), state);
}

}  // namespace mafgan
