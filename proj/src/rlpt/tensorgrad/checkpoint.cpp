// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/tensorgrad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace rlpt::tg {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void atomic_write_file(const std::string& path, const std::string& bytes) {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open for write: " + tmp);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out) throw DataError("short write: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw DataError("rename failed: " + tmp + " -> " + path + ": " + ec.message());
}

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const std::string& meta_json) {
  json header;
  header["format"] = "tgckpt-1";
  header["meta"] = meta_json.empty() ? json::object() : json::parse(meta_json);
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const std::string& name : store.order) {
    const auto& e = store.get(name);
    json t;
    t["name"] = name;
    t["dims"] = {e.value.dims.n, e.value.dims.c, e.value.dims.h, e.value.dims.w};
    t["offset"] = offset;
    tensors.push_back(t);
    offset += std::uint64_t(e.value.numel()) * sizeof(float);
  }
  header["tensors"] = tensors;
  const std::string hs = header.dump();

  std::string bytes;
  bytes.reserve(4 + hs.size() + offset);
  std::uint32_t hlen = std::uint32_t(hs.size());
  bytes.append(reinterpret_cast<const char*>(&hlen), 4);
  bytes.append(hs);
  for (const std::string& name : store.order) {
    const auto& e = store.get(name);
    bytes.append(reinterpret_cast<const char*>(e.value.data.data()),
                 e.value.data.size() * sizeof(float));
  }
  atomic_write_file(path, bytes);
}

namespace {
json parse_header(std::ifstream& in, const std::string& path) {
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw DataError("checkpoint truncated: " + path);
  std::string hs(hlen, '\0');
  in.read(hs.data(), hlen);
  if (!in) throw DataError("checkpoint header truncated: " + path);
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "tgckpt-1")
    throw DataError("not a tgckpt-1 checkpoint: " + path);
  return header;
}
}  // namespace

std::string load_checkpoint(const std::string& path, ParamStore<float>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json header = parse_header(in, path);
  const std::streampos payload = in.tellg();
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name");
    const auto dims = t.at("dims");
    Dims4 d{dims.at(0), dims.at(1), dims.at(2), dims.at(3)};
    Tensor<float> v(d);
    in.seekg(payload + std::streampos(t.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(v.data.data()),
            std::streamsize(v.data.size() * sizeof(float)));
    if (!in) throw DataError("checkpoint payload truncated: " + path + " at " + name);
    if (store.has(name))
      store.get(name).value = std::move(v);
    else
      store.add(name, std::move(v));
  }
  return header.at("meta").dump();
}

std::string read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return parse_header(in, path).at("meta").dump();
}

}  // namespace rlpt::tg
