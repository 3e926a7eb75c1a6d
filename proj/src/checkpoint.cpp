#include "egean/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "egean/config.hpp"

namespace egean {

void save_checkpoint(const std::string& path, const EgeanModel& model) {
  nlohmann::json meta;
  meta["model_config"] = model_config_to_json(model.config());
  meta["schema"] = schema_to_json(model.schema());
  meta["embeddings_frozen"] = model.embeddings_frozen();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& [name, t] : model.params().all())
    params.push_back({{"name", name}, {"shape", t.shape()}});
  meta["params"] = params;
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << kCheckpointHeader << '\n' << meta_str.size() << '\n' << meta_str;
  for (const auto& [name, t] : model.params().all()) {
    auto vals = t.values();
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

EgeanModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header != kCheckpointHeader)
    throw std::runtime_error("load_checkpoint: bad header '" + header + "' in " + path);
  std::string len_line;
  std::getline(in, len_line);
  const std::size_t meta_len = std::stoul(len_line);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated metadata in " + path);

  nlohmann::json meta = nlohmann::json::parse(meta_str);
  ModelConfig mc = model_config_from_json(meta.at("model_config"));
  DatasetSchema schema = schema_from_json(meta.at("schema"));

  EgeanModel model(schema, mc, /*seed=*/0);
  if (meta.at("params").size() != model.params().all().size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
  for (const nlohmann::json& pj : meta.at("params")) {
    const std::string name = pj.at("name").get<std::string>();
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    Tensor& t = model.params().at(name);
    if (t.shape() != shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    auto vals = t.values();
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated values for " + name);
  }
  if (meta.at("embeddings_frozen").get<bool>()) model.freeze_embeddings();
  return model;
}

}  // namespace egean
