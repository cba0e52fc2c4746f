#include "hashpose/checkpoint.hpp"

#include <cstring>

#include <json.hpp>

#include "hashpose/io.hpp"

namespace hashpose {
namespace {

using nlohmann::json;

void append(std::string& blob, std::span<const double> values) {
  const std::size_t off = blob.size();
  blob.resize(off + values.size_bytes());
  std::memcpy(blob.data() + off, values.data(), values.size_bytes());
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ExperimentConfig& config, const Model& model,
                     int step) {
  std::vector<double> twists;
  for (const Twist& psi : model.poses) {
    const Vec6 v = psi.vector();
    twists.insert(twists.end(), v.data(), v.data() + 6);
  }
  std::string blob;
  append(blob, model.tables.values);
  append(blob, model.decoder.values);
  append(blob, twists);

  json m;
  m["format"] = "hashpose-checkpoint-1";
  m["dtype"] = "float64-le";
  m["step"] = step;
  m["config"] = json::parse(config_to_json(config));
  m["bounds"] = {{"lo", {model.bounds.lo.x(), model.bounds.lo.y(), model.bounds.lo.z()}},
                 {"hi", {model.bounds.hi.x(), model.bounds.hi.y(), model.bounds.hi.z()}}};
  m["cameras"] = model.cameras;
  std::size_t off = 0;
  auto tensor = [&](const char* name, json shape, std::size_t count) {
    m["tensors"].push_back({{"name", name}, {"shape", shape}, {"offset", off}, {"count", count}});
    off += count * sizeof(double);
  };
  tensor("tables", {model.tables.levels, model.tables.table_size, model.tables.features}, model.tables.size());
  tensor("decoder", {model.decoder.size()}, model.decoder.size());
  tensor("twists", {model.poses.size(), 6}, twists.size());
  write_file_atomic(dir / "params.bin", blob);
  write_file_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  require(std::filesystem::exists(manifest_path), "checkpoint: " + manifest_path.string() + " not found");
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint manifest: ") + e.what());
  }
  require(m.value("format", "") == "hashpose-checkpoint-1", "checkpoint: unsupported format");
  const std::string blob = read_file(dir / "params.bin");
  try {
    ExperimentConfig config = parse_config(m.at("config").dump());
    const auto& lo = m.at("bounds").at("lo");
    const auto& hi = m.at("bounds").at("hi");
    const SceneBounds bounds{Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
    Checkpoint ck{config, Model(config.encoding, config.decoder, bounds), m.at("step").get<int>()};
    ck.model.cameras = m.at("cameras").get<std::vector<int>>();

    auto load = [&](const char* name, std::span<double> dst) {
      for (const json& t : m.at("tensors")) {
        if (t.at("name") != name) continue;
        const std::size_t off = t.at("offset").get<std::size_t>();
        const std::size_t count = t.at("count").get<std::size_t>();
        require(count == dst.size(), std::string("checkpoint: tensor '") + name + "' has the wrong size");
        require(off + count * sizeof(double) <= blob.size(), "checkpoint: params.bin is truncated");
        std::memcpy(dst.data(), blob.data() + off, count * sizeof(double));
        return;
      }
      throw ValidationError(std::string("checkpoint: tensor '") + name + "' missing");
    };
    load("tables", ck.model.tables.values);
    load("decoder", ck.model.decoder.values);
    ck.model.decoder.mark_updated();
    std::vector<double> twists(6 * ck.model.cameras.size());
    load("twists", twists);
    for (std::size_t c = 0; c < ck.model.cameras.size(); ++c) {
      Vec6 v;
      for (int k = 0; k < 6; ++k) v[k] = twists[6 * c + k];
      ck.model.poses.push_back(Twist::from_vector(v));
    }
    return ck;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint manifest: ") + e.what());
  }
}

}  // namespace hashpose
