// Copyright 2026 the rlpt authors
// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <thread>

#include "rlpt/pipeline/pipeline.hpp"
#include "rlpt/rng.hpp"
#include "rlpt/tensorgrad/checkpoint.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rlpt;

namespace {

// One writer per output directory.
struct DirLock {
  fs::path path;
  bool held = false;
  explicit DirLock(const fs::path& dir) : path(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path.c_str(), "wx");
    if (!f)
      throw DataError("output directory is locked by another writer: " + dir.string());
    std::fclose(f);
    held = true;
  }
  ~DirLock() {
    if (held) {
      std::error_code ec;
      fs::remove(path, ec);
    }
  }
};

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config JSON parse error: " + path);
  return j;
}

scenegen::Scene scene_from_entry(const json& entry) {
  if (entry.is_string()) return scenegen::Scene::builtin(entry.get<std::string>());
  return scenegen::Scene::from_json_text(
      io::read_file_bytes(entry.at("file").get<std::string>()));
}

int cmd_gen_data(const std::string& config_path, const std::string& out,
                 std::optional<std::uint64_t> seed_flag, const std::string& resolution) {
  json cfg = load_json(config_path);
  std::uint64_t seed = seed_flag ? *seed_flag : cfg.value("seed", std::uint64_t(1));
  int h = 64, w = 64;
  if (cfg.contains("resolution")) {
    h = cfg.at("resolution").at(0);
    w = cfg.at("resolution").at(1);
  }
  if (!resolution.empty()) {
    if (std::sscanf(resolution.c_str(), "%dx%d", &h, &w) != 2)
      throw ConfigError("--resolution must look like 64x64");
  }
  const int clips = cfg.value("clips_per_scene", 1);
  const int spp_ref = cfg.value("spp_reference", 2048);

  DirLock lock{fs::path(out)};
  json top;
  top["seed"] = seed;
  top["resolution"] = {h, w};
  top["spp_reference"] = spp_ref;
  json scene_list = json::array();
  Fnv1a combined;
  for (const auto& entry : cfg.at("scenes")) {
    const scenegen::Scene scene = scene_from_entry(entry);
    const std::uint64_t scene_seed = KeyedRng::combine(seed, KeyedRng::mix(
        std::hash<std::string>{}(scene.name)));
    pipeline::ClipDataset ds =
        pipeline::generate_dataset(scene, clips, h, w, spp_ref, scene_seed);
    const std::string hash = pipeline::save_dataset(ds, (fs::path(out) / scene.name).string());
    combined.update_str(scene.name);
    combined.update_str(hash);
    json e;
    e["name"] = scene.name;
    e["content_hash"] = hash;
    e["frames"] = ds.meta.frames;
    scene_list.push_back(e);
    std::printf("gen-data: %s: %d frames, hash %s\n", scene.name.c_str(), ds.meta.frames,
                hash.c_str());
  }
  top["scenes"] = scene_list;
  top["content_hash"] = hex64(combined.digest());
  tg::atomic_write_file((fs::path(out) / "manifest.json").string(), top.dump(2) + "\n");
  std::printf("gen-data: combined hash %s\n", hex64(combined.digest()).c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              std::optional<std::uint64_t> seed_flag, const std::string& variant_flag,
              const std::string& resume) {
  json cfg = load_json(config_path);
  if (!variant_flag.empty()) cfg["variant"] = variant_flag;
  if (seed_flag) cfg["seed"] = *seed_flag;
  pipeline::VariantConfig vc = pipeline::VariantConfig::from_json_text(cfg.dump());

  const std::string root = cfg.at("data_root");
  std::vector<pipeline::ClipDataset> owned;
  for (const auto& name : cfg.at("train_scenes"))
    owned.push_back(pipeline::load_dataset((fs::path(root) / name.get<std::string>()).string()));
  std::vector<const pipeline::ClipDataset*> sets;
  for (const auto& ds : owned) sets.push_back(&ds);
  std::optional<pipeline::ClipDataset> val;
  if (cfg.contains("val_scene"))
    val = pipeline::load_dataset(
        (fs::path(root) / cfg.at("val_scene").get<std::string>()).string());

  DirLock lock{fs::path(out)};
  const pipeline::TrainResult res =
      pipeline::train(vc, sets, val ? &*val : nullptr, out, resume);
  std::printf("train: %s done, checkpoint %s\n", pipeline::variant_name(vc.mode).c_str(),
              res.checkpoint_path.c_str());
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& out, const std::string& budgets_flag, bool dump_frames) {
  json cfg = load_json(config_path);
  pipeline::TrainState st = pipeline::load_train_state(checkpoint);
  const std::string root = cfg.at("data_root");
  const std::string test_scene = cfg.at("test_scene");
  pipeline::ClipDataset ds =
      pipeline::load_dataset((fs::path(root) / test_scene).string());

  std::vector<double> budgets;
  if (!budgets_flag.empty()) {
    std::stringstream ss(budgets_flag);
    std::string tok;
    while (std::getline(ss, tok, ',')) budgets.push_back(std::stod(tok));
  } else if (cfg.contains("budgets")) {
    budgets = cfg.at("budgets").get<std::vector<double>>();
  } else {
    budgets = {0.01, 0.1, 0.3, 0.5, 1.0, 2.0, 4.0};
  }

  DirLock lock{fs::path(out)};
  const auto rows =
      pipeline::evaluate(st, ds, budgets, dump_frames ? (fs::path(out) / "frames").string() : "");
  std::ostringstream csv;
  csv << "budget,psnr\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.6f\n", r.budget, r.mean_psnr);
    csv << buf;
    std::printf("eval: %.3f spp -> %.3f dB\n", r.budget, r.mean_psnr);
  }
  tg::atomic_write_file((fs::path(out) / "psnr.csv").string(), csv.str());
  return 0;
}

std::vector<std::string> list_pfm(const std::string& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".pfm") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

int cmd_analyze(const std::string& dir_a, const std::string& dir_b,
                const std::string& dir_ref, double threshold, const std::string& out) {
  const auto na = list_pfm(dir_a), nb = list_pfm(dir_b), nr = list_pfm(dir_ref);
  std::set<std::string> all(na.begin(), na.end());
  all.insert(nb.begin(), nb.end());
  all.insert(nr.begin(), nr.end());
  std::string missing;
  for (const auto& n : all) {
    auto has = [&n](const std::vector<std::string>& v) {
      return std::find(v.begin(), v.end(), n) != v.end();
    };
    if (!has(na) || !has(nb) || !has(nr)) missing += " " + n;
  }
  if (!missing.empty()) throw DataError("analyze: misaligned frame sets, missing:" + missing);
  if (all.empty()) throw DataError("analyze: no PFM frames found");

  DirLock lock{fs::path(out)};
  std::vector<std::int64_t> aggregate(256, 0);
  std::vector<double> centers;
  for (const auto& name : all) {
    const io::Image a = io::read_pfm((fs::path(dir_a) / name).string());
    const io::Image b = io::read_pfm((fs::path(dir_b) / name).string());
    const io::Image r = io::read_pfm((fs::path(dir_ref) / name).string());
    const quality::ErrorAnalysis ea = quality::error_analysis(a, b, r, threshold);
    centers = ea.bin_centers;
    for (std::size_t i = 0; i < aggregate.size(); ++i) aggregate[i] += ea.histogram[i];
    const std::string stem = fs::path(name).stem().string();
    // maps remapped from [-1,1] to [0,1] for viewing
    io::Image bin_vis(ea.binary.h, ea.binary.w, 1), ext_vis(ea.binary.h, ea.binary.w, 1);
    for (std::size_t i = 0; i < bin_vis.data.size(); ++i) {
      bin_vis.data[i] = 0.5f + 0.5f * ea.binary.data[i];
      ext_vis.data[i] = 0.5f + 0.5f * ea.extreme.data[i];
    }
    io::write_png8((fs::path(out) / (stem + "_binary.png")).string(), bin_vis, 1.0);
    io::write_png8((fs::path(out) / (stem + "_extreme.png")).string(), ext_vis, 1.0);
    std::ostringstream csv;
    csv << "bin_center,count\n";
    for (std::size_t i = 0; i < ea.histogram.size(); ++i)
      csv << ea.bin_centers[i] << "," << ea.histogram[i] << "\n";
    tg::atomic_write_file((fs::path(out) / (stem + "_hist.csv")).string(), csv.str());
  }
  std::ostringstream csv;
  csv << "bin_center,count\n";
  for (std::size_t i = 0; i < aggregate.size(); ++i)
    csv << centers[i] << "," << aggregate[i] << "\n";
  tg::atomic_write_file((fs::path(out) / "aggregate_hist.csv").string(), csv.str());

  // average sampling heatmap per method, when count exports are present
  for (const auto& [dir, tag] : {std::pair{dir_a, "a"}, std::pair{dir_b, "b"}}) {
    std::vector<std::string> count_files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().filename().string().ends_with("_counts.raw"))
        count_files.push_back(e.path().string());
    if (count_files.empty()) continue;
    std::sort(count_files.begin(), count_files.end());
    io::Image mean;
    for (const auto& f : count_files) {
      const std::string bytes = io::read_file_bytes(f);
      const int n = int(bytes.size() / 2);
      const int side = int(std::lround(std::sqrt(double(n))));
      if (mean.data.empty()) mean = io::Image(side, n / side, 1);
      const auto* u = reinterpret_cast<const std::uint16_t*>(bytes.data());
      for (int i = 0; i < n; ++i) mean.data[std::size_t(i)] += float(u[i]);
    }
    for (auto& v : mean.data) v /= float(count_files.size()) * 8.0f;
    io::write_png8((fs::path(out) / (std::string("heatmap_") + tag + ".png")).string(),
                   mean, 1.0);
  }
  std::printf("analyze: %zu frames, outputs in %s\n", all.size(), out.c_str());
  return 0;
}

int cmd_budget(double time_budget_ms, double inference_ms, double sampling_ms_per_spp) {
  if (sampling_ms_per_spp <= 0)
    throw ConfigError("budget: sampling time per spp must be > 0");
  const double spp = std::max(0.0, (time_budget_ms - inference_ms) / sampling_ms_per_spp);
  // table-style display truncates to 2 decimals
  std::printf("%.2f\n", std::floor(spp * 100.0) / 100.0);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RL-driven adaptive sampling path tracer"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "worker threads (0 = hardware)");

  std::string config, out, resolution, variant, budgets, resume, checkpoint;
  std::string dir_a, dir_b, dir_ref;
  std::optional<std::uint64_t> seed;
  bool dump_frames = false;
  double time_budget = 0, inference = 0, per_spp = 0, threshold = 0.01;

  auto* gen = app.add_subcommand("gen-data", "materialize a clip dataset");
  gen->add_option("--config", config)->required();
  gen->add_option("--out", out)->required();
  gen->add_option("--seed", seed);
  gen->add_option("--resolution", resolution);

  auto* train = app.add_subcommand("train", "closed-loop training");
  train->add_option("--config", config)->required();
  train->add_option("--out", out)->required();
  train->add_option("--seed", seed);
  train->add_option("--variant", variant);
  train->add_option("--resume", resume);

  auto* eval = app.add_subcommand("eval", "PSNR table over spp budgets");
  eval->add_option("--config", config)->required();
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--out", out)->required();
  eval->add_option("--budgets", budgets);
  eval->add_flag("--dump", dump_frames, "write denoised frames and count maps");

  auto* analyze = app.add_subcommand("analyze", "per-pixel MSE comparison");
  analyze->add_option("--a", dir_a)->required();
  analyze->add_option("--b", dir_b)->required();
  analyze->add_option("--ref", dir_ref)->required();
  analyze->add_option("--threshold", threshold);
  analyze->add_option("--out", out)->required();

  auto* budget_cmd = app.add_subcommand("budget", "spp under a frame-time budget");
  budget_cmd->add_option("--time", time_budget)->required();
  budget_cmd->add_option("--inference", inference)->required();
  budget_cmd->add_option("--per-spp", per_spp)->required();

  CLI11_PARSE(app, argc, argv);

  set_threads(threads > 0 ? threads : int(std::thread::hardware_concurrency()));

  try {
    if (gen->parsed()) return cmd_gen_data(config, out, seed, resolution);
    if (train->parsed()) return cmd_train(config, out, seed, variant, resume);
    if (eval->parsed()) return cmd_eval(config, checkpoint, out, budgets, dump_frames);
    if (analyze->parsed()) return cmd_analyze(dir_a, dir_b, dir_ref, threshold, out);
    if (budget_cmd->parsed()) return cmd_budget(time_budget, inference, per_spp);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "numeric divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
