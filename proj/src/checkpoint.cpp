#include "formtree/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace formtree::nn {

using nlohmann::json;

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                     const json& meta) {
  json header;
  header["version"] = kCheckpointVersion;
  header["meta"] = meta.is_null() ? json::object() : meta;
  json entries = json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : tensors) {
    json e;
    e["name"] = name;
    e["dtype"] = dtype_name(t->dtype());
    e["shape"] = t->shape();
    e["offset"] = offset;
    e["nbytes"] = t->nbytes();
    entries.push_back(std::move(e));
    offset += t->nbytes();
  }
  header["entries"] = std::move(entries);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  const std::string hs = header.dump();
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  out.put('\0');
  for (const auto& [name, t] : tensors)
    out.write(static_cast<const char*>(t->raw()), static_cast<std::streamsize>(t->nbytes()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_checkpoint(const std::string& path, const ParamStore& params, const json& meta) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& name : params.names()) tensors.emplace_back(name, &params.at(name));
  save_checkpoint(path, tensors, meta);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::size_t nul = bytes.find('\0');
  if (nul == std::string::npos) throw std::runtime_error(path + ": no header terminator");
  json header = json::parse(bytes.substr(0, nul));
  if (header.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version");

  const char* data = bytes.data() + nul + 1;
  const std::size_t data_len = bytes.size() - nul - 1;

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", json::object());
  for (const auto& e : header.at("entries")) {
    const std::string name = e.at("name").get<std::string>();
    const DType dt = dtype_from_name(e.at("dtype").get<std::string>());
    const auto shape = e.at("shape").get<std::vector<std::size_t>>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t nbytes = e.at("nbytes").get<std::size_t>();
    Tensor t(shape, dt);
    if (t.nbytes() != nbytes)
      throw std::runtime_error(path + ": entry " + name + " declares " + std::to_string(nbytes) +
                               " bytes but shape " + shape_str(shape) + " needs " +
                               std::to_string(t.nbytes()));
    if (offset + nbytes > data_len)
      throw std::runtime_error(path + ": entry " + name + " extends past end of file");
    std::memcpy(t.raw(), data + offset, nbytes);
    ckpt.entries.emplace_back(name, std::move(t));
  }
  return ckpt;
}

void load_into(ParamStore& params, const Checkpoint& ckpt) {
  for (const auto& name : params.names()) {
    const Tensor* src = ckpt.find(name);
    if (!src) throw std::runtime_error("checkpoint is missing parameter " + name);
    Tensor& dst = params.at(name);
    if (!src->same_shape(dst) || src->dtype() != dst.dtype())
      throw std::runtime_error("checkpoint parameter " + name + " has shape " +
                               shape_str(src->shape()) + " " + dtype_name(src->dtype()) +
                               ", expected " + shape_str(dst.shape()) + " " +
                               dtype_name(dst.dtype()));
    std::memcpy(dst.raw(), src->raw(), src->nbytes());
  }
}

}  // namespace formtree::nn
