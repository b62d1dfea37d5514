#include "ism/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ism {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

nlohmann::json spec_to_json(const EncoderSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"semantic_dim", s.semantic_dim},
          {"uncertainty_dim", s.uncertainty_dim},
          {"normalize_semantic", s.normalize_semantic},
          {"freeze_uncertainty", s.freeze_uncertainty}};
}

EncoderSpec spec_from_json(const nlohmann::json& j) {
  EncoderSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  s.semantic_dim = j.at("semantic_dim").get<std::size_t>();
  s.uncertainty_dim = j.at("uncertainty_dim").get<std::size_t>();
  s.normalize_semantic = j.at("normalize_semantic").get<bool>();
  s.freeze_uncertainty = j.at("freeze_uncertainty").get<bool>();
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const EncoderSpec& spec,
                     const std::vector<Tensor>& tensors,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["format"] = "ism-checkpoint";
  header["version"] = 1;
  header["encoder"] = spec_to_json(spec);
  auto shapes = nlohmann::json::array();
  for (const auto& t : tensors)
    shapes.push_back({{"name", t.name}, {"rows", t.rows}, {"cols", t.cols}});
  header["tensors"] = shapes;
  header["extra"] = extra;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
  out << header.dump() << '\n';
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  out.flush();
  if (!out) throw std::runtime_error("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("checkpoint missing header: " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("format", "") != "ism-checkpoint")
    throw std::runtime_error("not an ism checkpoint: " + path);

  Checkpoint ck;
  ck.spec = spec_from_json(header.at("encoder"));
  ck.extra = header.value("extra", nlohmann::json::object());
  for (const auto& shape : header.at("tensors")) {
    Tensor t;
    t.name = shape.at("name").get<std::string>();
    t.rows = shape.at("rows").get<std::size_t>();
    t.cols = shape.at("cols").get<std::size_t>();
    t.data.resize(t.rows * t.cols);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (in.gcount() !=
        static_cast<std::streamsize>(t.data.size() * sizeof(double)))
      throw std::runtime_error("truncated checkpoint tensor " + t.name + ": " +
                               path);
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

}  // namespace ism
