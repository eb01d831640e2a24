// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include "rlpt/pipeline/dataset.hpp"

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "rlpt/rng.hpp"

namespace rlpt::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t bank_seed(std::uint64_t dataset_seed) {
  return KeyedRng::combine(dataset_seed, rng_domain::kTraceBank);
}

std::uint64_t reference_seed(std::uint64_t dataset_seed) {
  return KeyedRng::combine(dataset_seed, rng_domain::kReference);
}

ClipDataset generate_dataset(const scenegen::Scene& scene, int clips, int h, int w,
                             int spp_reference, std::uint64_t seed) {
  if (clips < 1) throw ConfigError("generate_dataset: need at least one clip");
  if (spp_reference < 1) throw ConfigError("generate_dataset: spp_reference must be >= 1");
  ClipDataset ds;
  ds.scene = scene;
  ds.meta.scene = scene.name;
  ds.meta.h = h;
  ds.meta.w = w;
  ds.meta.frames = clips * kClipLength;
  ds.meta.seed = seed;
  ds.meta.spp_reference = spp_reference;
  ds.frames.resize(std::size_t(ds.meta.frames));

  const std::uint64_t sref = reference_seed(seed);
  const std::uint64_t sbank = bank_seed(seed);
  for (int f = 0; f < ds.meta.frames; ++f) {
    FrameRecord& rec = ds.frames[std::size_t(f)];
    rec.reference = scenegen::render_reference(scene, f, spp_reference, sref, h, w);
    rec.aux = scenegen::render_aux(scene, f, h, w);
    rec.bank.resize(std::size_t(3 * kBankSpp) * h * w);
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int k = 0; k < kBankSpp; ++k) {
          const scenegen::Vec3 s = scenegen::trace_sample(scene, f, i, j, k, sbank, h, w);
          const std::size_t base = std::size_t(3 * k) * h * w + std::size_t(i) * w + j;
          rec.bank[base] = float(s.x);
          rec.bank[base + std::size_t(h) * w] = float(s.y);
          rec.bank[base + 2 * std::size_t(h) * w] = float(s.z);
        }
  }
  ds.meta.content_hash = dataset_content_hash(ds);
  return ds;
}

std::string dataset_content_hash(const ClipDataset& ds) {
  Fnv1a h;
  auto add = [&h](const std::vector<float>& v) { h.update(v.data(), v.size() * 4); };
  for (const FrameRecord& f : ds.frames) {
    add(f.reference.data);
    add(f.aux.normal.data);
    add(f.aux.albedo.data);
    add(f.aux.depth.data);
    add(f.aux.motion.data);
    add(f.bank);
  }
  return hex64(h.digest());
}

namespace {

std::string frame_path(const std::string& dir, int f, const char* part) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "f%05d.%s.raw", f, part);
  return dir + "/" + buf;
}

void write_planes(const std::string& path, const std::vector<float>& v) {
  io::write_raw_f32(path, v.data(), v.size());
}

}  // namespace

std::string save_dataset(const ClipDataset& ds, const std::string& dir) {
  const fs::path target(dir);
  const fs::path staging = target.parent_path() / (target.filename().string() + ".staging");
  std::error_code ec;
  fs::remove_all(staging, ec);
  fs::create_directories(staging / "frames");

  for (int f = 0; f < ds.meta.frames; ++f) {
    const FrameRecord& rec = ds.frames[std::size_t(f)];
    const std::string fdir = (staging / "frames").string();
    write_planes(frame_path(fdir, f, "ref"), rec.reference.data);
    std::vector<float> aux;
    aux.reserve(std::size_t(7) * ds.meta.h * ds.meta.w);
    aux.insert(aux.end(), rec.aux.normal.data.begin(), rec.aux.normal.data.end());
    aux.insert(aux.end(), rec.aux.albedo.data.begin(), rec.aux.albedo.data.end());
    aux.insert(aux.end(), rec.aux.depth.data.begin(), rec.aux.depth.data.end());
    write_planes(frame_path(fdir, f, "aux"), aux);
    write_planes(frame_path(fdir, f, "motion"), rec.aux.motion.data);
    write_planes(frame_path(fdir, f, "bank"), rec.bank);
  }
  {
    std::ofstream scene_out(staging / "scene.json");
    scene_out << ds.scene.to_json_text();
  }
  json j;
  j["format_version"] = ds.meta.format_version;
  j["scene"] = ds.meta.scene;
  j["resolution"] = {ds.meta.h, ds.meta.w};
  j["frames"] = ds.meta.frames;
  j["clip_len"] = ds.meta.clip_len;
  j["clips"] = ds.clip_count();
  j["seed"] = ds.meta.seed;
  j["spp_reference"] = ds.meta.spp_reference;
  j["bank_spp"] = ds.meta.bank_spp;
  j["content_hash"] = ds.meta.content_hash;
  {
    std::ofstream mout(staging / "manifest.json");
    mout << j.dump(2) << "\n";
  }

  fs::remove_all(target, ec);
  fs::rename(staging, target, ec);
  if (ec) throw DataError("dataset rename failed: " + ec.message());
  return ds.meta.content_hash;
}

ClipDataset load_dataset(const std::string& dir) {
  std::ifstream min(fs::path(dir) / "manifest.json");
  if (!min) throw DataError("missing dataset manifest in " + dir);
  json j = json::parse(min, nullptr, false);
  if (j.is_discarded()) throw DataError("corrupt dataset manifest in " + dir);

  ClipDataset ds;
  ds.meta.format_version = j.at("format_version");
  if (ds.meta.format_version != 1)
    throw DataError("unsupported dataset format version in " + dir);
  ds.meta.scene = j.at("scene");
  ds.meta.h = j.at("resolution").at(0);
  ds.meta.w = j.at("resolution").at(1);
  ds.meta.frames = j.at("frames");
  ds.meta.clip_len = j.at("clip_len");
  ds.meta.seed = j.at("seed");
  ds.meta.spp_reference = j.at("spp_reference");
  ds.meta.bank_spp = j.at("bank_spp");
  ds.meta.content_hash = j.at("content_hash");
  if (ds.meta.clip_len != kClipLength)
    throw DataError("dataset clip length must be 20, got " +
                    std::to_string(ds.meta.clip_len));
  if (ds.meta.frames % ds.meta.clip_len != 0)
    throw DataError("dataset frame count is not a whole number of clips");

  ds.scene = scenegen::Scene::from_json_text(
      io::read_file_bytes((fs::path(dir) / "scene.json").string()));

  const int h = ds.meta.h, w = ds.meta.w;
  const std::size_t plane = std::size_t(h) * w;
  ds.frames.resize(std::size_t(ds.meta.frames));
  const std::string fdir = (fs::path(dir) / "frames").string();
  for (int f = 0; f < ds.meta.frames; ++f) {
    FrameRecord& rec = ds.frames[std::size_t(f)];
    rec.reference = io::Image(h, w, 3);
    rec.reference.data = io::read_raw_f32(frame_path(fdir, f, "ref"), 3 * plane);
    const std::vector<float> aux = io::read_raw_f32(frame_path(fdir, f, "aux"), 7 * plane);
    rec.aux.normal = io::Image(h, w, 3);
    rec.aux.albedo = io::Image(h, w, 3);
    rec.aux.depth = io::Image(h, w, 1);
    std::copy(aux.begin(), aux.begin() + 3 * plane, rec.aux.normal.data.begin());
    std::copy(aux.begin() + 3 * plane, aux.begin() + 6 * plane, rec.aux.albedo.data.begin());
    std::copy(aux.begin() + 6 * plane, aux.end(), rec.aux.depth.data.begin());
    rec.aux.motion = io::Image(h, w, 2);
    rec.aux.motion.data = io::read_raw_f32(frame_path(fdir, f, "motion"), 2 * plane);
    rec.bank = io::read_raw_f32(frame_path(fdir, f, "bank"), 24 * plane);
  }
  const std::string rehash = dataset_content_hash(ds);
  if (rehash != ds.meta.content_hash)
    throw DataError("dataset content hash mismatch in " + dir + ": manifest " +
                    ds.meta.content_hash + ", payload " + rehash);
  return ds;
}

}  // namespace rlpt::pipeline
