#include "pfnet/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "pfnet/error.hpp"

namespace pfnet {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'N', 'T', 'A', 'R', 'C', '\0'};

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw IoError("truncated archive header: " + path);
  }
  return v;
}

}  // namespace

const Tensor* TensorArchive::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_archive(const std::string& path, const TensorArchive& archive) {
  nlohmann::json header;
  header["metadata"] = archive.metadata;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const Shape s = t.shape();
    header["tensors"].push_back(
        {{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += t.size();
  }
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kArchiveVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : archive.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed: " + path);
}

TensorArchive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open archive: " + path);
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("not a tensor archive: " + path);
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kArchiveVersion) {
    throw IoError("unsupported archive version " + std::to_string(version) +
                  " in " + path);
  }
  const auto header_len = get<std::uint64_t>(in, path);
  if (header_len > (1ull << 30)) throw IoError("corrupt archive header: " + path);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw IoError("truncated archive header: " + path);
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt archive header in " + path + ": " + e.what());
  }

  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  std::uint64_t remaining = static_cast<std::uint64_t>(in.tellg() - payload_start);
  in.seekg(payload_start);

  TensorArchive archive;
  archive.metadata = header.value("metadata", nlohmann::json::object());
  try {
    for (const auto& entry : header.at("tensors")) {
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) throw IoError("bad tensor shape in " + path);
      std::uint64_t count = 1;
      for (int d : dims) {
        if (d < 0) throw IoError("bad tensor shape in " + path);
        count *= static_cast<std::uint64_t>(d);
        if (count * sizeof(double) > remaining) {
          throw IoError("truncated archive payload: " + path);
        }
      }
      remaining -= count * sizeof(double);
      Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
      if (!in.read(reinterpret_cast<char*>(t.data()),
                   static_cast<std::streamsize>(t.size() * sizeof(double)))) {
        throw IoError("truncated archive payload: " + path);
      }
      archive.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt archive header in " + path + ": " + e.what());
  } catch (const DimensionError& e) {
    throw IoError("corrupt tensor entry in " + path + ": " + e.what());
  }
  return archive;
}

}  // namespace pfnet
