#include "secokd/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace secokd::model {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'C', 'K', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

json config_to_json(const TransformerConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},   {"n_layers", c.n_layers},
              {"n_heads", c.n_heads},       {"d_ff", c.d_ff},         {"max_seq_len", c.max_seq_len}};
}

TransformerConfig config_from_json(const json& j) {
  TransformerConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  return c;
}

json lora_to_json(const LoraConfig& c) {
  return json{{"rank", c.rank},
              {"alpha", c.alpha},
              {"dropout", c.dropout},
              {"target_modules", c.target_modules}};
}

LoraConfig lora_from_json(const json& j) {
  LoraConfig c;
  c.rank = j.at("rank").get<int>();
  c.alpha = j.at("alpha").get<double>();
  c.dropout = j.at("dropout").get<double>();
  c.target_modules = j.at("target_modules").get<std::vector<std::string>>();
  return c;
}

}  // namespace

void save_checkpoint(const AdaptedModel& m, const std::string& path) {
  json header;
  header["config"] = config_to_json(m.config);
  header["lora"] = m.lora ? lora_to_json(*m.lora) : json(nullptr);
  header["base_trainable"] = !m.base.empty() && m.base.front().tensor.requires_grad;
  json tensors = json::array();
  for (const auto& p : m.base) {
    tensors.push_back(json{{"name", p.name}, {"shape", p.tensor.shape}, {"group", "base"}});
  }
  for (const auto& p : m.adapters) {
    tensors.push_back(json{{"name", p.name}, {"shape", p.tensor.shape}, {"group", "adapter"}});
  }
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  auto write_tensor = [&out](const numerics::Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  };
  for (const auto& p : m.base) write_tensor(p.tensor);
  for (const auto& p : m.adapters) write_tensor(p.tensor);
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

AdaptedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion) {
    throw std::runtime_error("load_checkpoint: unsupported version in " + path);
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path);
  const json header = json::parse(header_str);

  AdaptedModel m;
  m.config = config_from_json(header.at("config"));
  if (!header.at("lora").is_null()) m.lora = lora_from_json(header.at("lora"));
  const bool base_trainable = header.at("base_trainable").get<bool>();

  for (const auto& tj : header.at("tensors")) {
    Parameter p;
    p.name = tj.at("name").get<std::string>();
    const auto shape = tj.at("shape").get<std::vector<int>>();
    const bool is_base = tj.at("group").get<std::string>() == "base";
    numerics::Tensor t = numerics::Tensor::zeros(shape, is_base ? base_trainable : true);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated tensor data in " + path);
    p.tensor = std::move(t);
    if (is_base) {
      m.base.push_back(std::move(p));
    } else {
      m.adapters.push_back(std::move(p));
    }
  }
  return m;
}

}  // namespace secokd::model
