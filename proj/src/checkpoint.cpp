#include "mgimn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace mgimn {

using nlohmann::json;

void save_checkpoint(const ParamSet& params, const std::string& path) {
  json tensors = json::array();
  int64_t offset = 0;
  for (const auto& e : params.entries()) {
    tensors.push_back({{"name", e.name},
                       {"shape", e.value.shape()},
                       {"offset", offset}});
    offset += e.value.size() * static_cast<int64_t>(sizeof(float));
  }
  json header = {{"format", "mgimn-checkpoint-v1"}, {"tensors", tensors}};
  std::string hdr = header.dump();
  hdr.push_back('\n');

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open checkpoint for writing: " + path);
  out << hdr.size() << "\n" << hdr;
  for (const auto& e : params.entries()) {
    for (double v : e.value.data()) {
      float f = static_cast<float>(v);
      out.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
  }
  if (!out) fail(ErrorKind::io, "failed writing checkpoint: " + path);
}

void load_checkpoint(ParamSet& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint: " + path);
  std::string len_line;
  if (!std::getline(in, len_line))
    fail(ErrorKind::parse, "checkpoint missing header length line: " + path);
  size_t hdr_len = 0;
  try {
    hdr_len = std::stoull(len_line);
  } catch (const std::exception&) {
    fail(ErrorKind::parse, "checkpoint header length is not a number: " + path);
  }
  std::string hdr(hdr_len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(hdr_len));
  if (!in || hdr.empty() || hdr.back() != '\n')
    fail(ErrorKind::parse, "checkpoint header is truncated: " + path);

  json header;
  try {
    header = json::parse(hdr);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint header is not JSON: ") +
                               e.what());
  }

  std::streampos payload_start = in.tellg();
  for (const auto& t : header.at("tensors")) {
    std::string name = t.at("name").get<std::string>();
    Shape shape = t.at("shape").get<Shape>();
    int64_t offset = t.at("offset").get<int64_t>();
    auto* entry = params.find(name);
    if (entry == nullptr)
      fail(ErrorKind::io, "checkpoint tensor '" + name +
                              "' has no matching parameter");
    if (entry->value.shape() != shape)
      fail(ErrorKind::io, "checkpoint tensor '" + name + "' shape mismatch");
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    auto data = entry->value.mutable_data();
    for (auto& v : data) {
      float f = 0.0f;
      in.read(reinterpret_cast<char*>(&f), sizeof(float));
      v = static_cast<double>(f);
    }
    if (!in)
      fail(ErrorKind::io, "checkpoint tensor '" + name + "' payload truncated");
  }

  // Any parameter the file does not cover means the model/config pairing is wrong.
  for (const auto& e : params.entries()) {
    bool found = false;
    for (const auto& t : header.at("tensors"))
      if (t.at("name").get<std::string>() == e.name) found = true;
    if (!found)
      fail(ErrorKind::io,
           "parameter '" + e.name + "' is missing from checkpoint");
  }
}

}  // namespace mgimn
