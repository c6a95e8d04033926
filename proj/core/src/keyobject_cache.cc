#include <map>
#include <mutex>

#include <json.hpp>

#include "samflow/io.h"
#include "samflow/masks.h"

namespace samflow {
namespace {

std::mutex& directory_lock(const std::filesystem::path& dir) {
  static std::mutex registry_mutex;
  static std::map<std::string, std::mutex> locks;
  std::lock_guard<std::mutex> guard(registry_mutex);
  return locks[std::filesystem::weakly_canonical(dir).string()];
}

std::string object_file(std::size_t k, const char* kind) {
  return "obj_" + std::to_string(k) + "_" + kind + ".png";
}

}  // namespace

std::filesystem::path write_key_object_cache(
    const std::filesystem::path& root, const std::string& sample,
    std::span<const KeyObject> objects) {
  if (sample.empty() || sample.find('/') != std::string::npos) {
    throw Error(ErrorKind::kInvalidArgument,
                "sample name must be a non-empty path component");
  }
  const std::filesystem::path dir = root / sample;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + dir.string());

  std::lock_guard<std::mutex> guard(directory_lock(dir));
  nlohmann::ordered_json index;
  index["sample"] = sample;
  index["objects"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const KeyObject& obj = objects[k];
    write_image_png(dir / object_file(k, "rgb"), obj.image_crop);
    write_mask_png(dir / object_file(k, "mask"), obj.mask);
    nlohmann::ordered_json entry;
    entry["rgb"] = object_file(k, "rgb");
    entry["mask"] = object_file(k, "mask");
    entry["bbox"] = {obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h};
    entry["overlap_count"] = obj.overlap_count;
    entry["source_index"] = obj.source_index;
    index["objects"].push_back(std::move(entry));
  }
  write_text_file(dir / "index.json", index.dump(2) + "\n");
  return dir;
}

std::vector<KeyObject> read_key_object_cache(
    const std::filesystem::path& sample_dir) {
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(read_text_file(sample_dir / "index.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat,
                (sample_dir / "index.json").string() + ": " + e.what());
  }
  std::vector<KeyObject> objects;
  try {
    for (const auto& entry : index.at("objects")) {
      KeyObject obj;
      const auto& b = entry.at("bbox");
      obj.bbox = {b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                  b.at(3).get<int>()};
      obj.overlap_count = entry.at("overlap_count").get<int>();
      obj.source_index = entry.value("source_index", -1);
      obj.image_crop =
          read_image_png(sample_dir / entry.at("rgb").get<std::string>());
      obj.mask = read_mask_png(sample_dir / entry.at("mask").get<std::string>());
      if (obj.mask.width() != obj.image_crop.width() ||
          obj.mask.height() != obj.image_crop.height()) {
        throw Error(ErrorKind::kConsistency,
                    "key object mask and crop differ in size");
      }
      objects.push_back(std::move(obj));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat,
                (sample_dir / "index.json").string() + ": " + e.what());
  }
  return objects;
}

}  // namespace samflow
