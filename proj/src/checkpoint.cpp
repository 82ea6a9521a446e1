#include "wavesr/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace wavesr {

void write_mbt(const std::string& path, const Shape& shape, const std::vector<float>& values) {
  if (values.size() != shape.numel())
    throw ShapeMismatch("tensor payload does not match shape " + shape.str());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UnreadableImage("cannot write " + path);
  out.write("MBT1", 4);
  std::uint32_t rank = static_cast<std::uint32_t>(shape.rank);
  out.write(reinterpret_cast<const char*>(&rank), 4);
  for (int i = 0; i < shape.rank; ++i) {
    std::uint32_t d = static_cast<std::uint32_t>(shape[i]);
    out.write(reinterpret_cast<const char*>(&d), 4);
  }
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
}

TensorBlob read_mbt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UnreadableImage(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MBT1", 4) != 0)
    throw UnreadableImage(path + " (bad tensor magic)");
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), 4);
  if (!in || rank > 4) throw UnreadableImage(path + " (bad tensor rank)");
  TensorBlob blob;
  blob.shape.rank = static_cast<int>(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = 0;
    in.read(reinterpret_cast<char*>(&d), 4);
    blob.shape[static_cast<int>(i)] = static_cast<int>(d);
  }
  blob.values.resize(blob.shape.numel());
  in.read(reinterpret_cast<char*>(blob.values.data()),
          static_cast<std::streamsize>(blob.values.size() * sizeof(float)));
  if (!in) throw UnreadableImage(path + " (truncated tensor payload)");
  return blob;
}

std::string checkpoint_content_id(const CheckpointData& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, blob] : data.tensors) {
    mix(name.data(), name.size());
    mix(blob.values.data(), blob.values.size() * sizeof(float));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::string& dir, CheckpointData data) {
  fs::create_directories(dir);
  data.fields["format_version"] = "1";
  data.fields["checkpoint_id"] = checkpoint_content_id(data);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw UnreadableImage("cannot write manifest in " + dir);
  for (const auto& [k, v] : data.fields) manifest << k << " = " << v << "\n";
  for (const auto& [name, blob] : data.tensors) {
    manifest << "tensor." << name << " = " << name << ".mbt\n";
    write_mbt((fs::path(dir) / (name + ".mbt")).string(), blob.shape, blob.values);
  }
}

CheckpointData load_checkpoint(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw UnreadableImage("no manifest.txt in " + dir);
  CheckpointData data;
  std::string line;
  while (std::getline(manifest, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 3);
    if (key.rfind("tensor.", 0) == 0) {
      std::string name = key.substr(7);
      if (data.tensors.count(name))
        throw ArchitectureMismatch("tensor " + name + " listed twice in " + dir);
      data.tensors[name] = read_mbt((fs::path(dir) / value).string());
    } else {
      data.fields[key] = value;
    }
  }
  if (data.fields.count("format_version") == 0 || data.fields["format_version"] != "1")
    throw ArchitectureMismatch("unsupported checkpoint format in " + dir);
  return data;
}

}  // namespace wavesr
