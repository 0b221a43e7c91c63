#include "bctn/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "bctn/errors.hpp"

namespace bctn {

namespace {

constexpr char kMagic[5] = {'B', 'C', 'T', 'N', '1'};

void put_u32(std::ofstream& f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& f) {
  unsigned char b[4];
  f.read(reinterpret_cast<char*>(b), 4);
  if (f.gcount() != 4) throw TruncatedFile("checkpoint ends mid-field");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& f, const float* vals, size_t n) {
  static_assert(sizeof(float) == 4);
  // assumes little-endian host (x86/arm64); values written verbatim
  f.write(reinterpret_cast<const char*>(vals), static_cast<std::streamsize>(n * 4));
}

}  // namespace

void save_checkpoint_file(const CheckpointFile& ck, const std::string& path) {
  std::vector<const NamedTensorRecord*> sorted;
  sorted.reserve(ck.tensors.size());
  for (const auto& t : ck.tensors) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });

  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw UnwritablePath("cannot open for write: " + tmp);
    f.write(kMagic, 5);
    f.put(static_cast<char>(ck.stage));
    put_u32(f, static_cast<uint32_t>(ck.config_json.size()));
    f.write(ck.config_json.data(), static_cast<std::streamsize>(ck.config_json.size()));
    for (const auto* t : sorted) {
      put_u32(f, static_cast<uint32_t>(t->name.size()));
      f.write(t->name.data(), static_cast<std::streamsize>(t->name.size()));
      put_u32(f, static_cast<uint32_t>(t->dims.size()));
      long numel = 1;
      for (int d : t->dims) {
        put_u32(f, static_cast<uint32_t>(d));
        numel *= d;
      }
      if (numel != static_cast<long>(t->values.size()))
        throw DimMismatch("record " + t->name + ": dims do not match value count");
      put_f32(f, t->values.data(), t->values.size());
    }
    if (!f) throw UnwritablePath("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile load_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointMissing("cannot open checkpoint: " + path);
  char magic[5];
  f.read(magic, 5);
  if (f.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0)
    throw BadMagic("not a BCTN1 checkpoint: " + path);
  CheckpointFile ck;
  const int stage = f.get();
  if (stage == EOF) throw TruncatedFile("checkpoint ends after magic");
  ck.stage = static_cast<uint8_t>(stage);
  const uint32_t cfg_len = get_u32(f);
  ck.config_json.resize(cfg_len);
  f.read(ck.config_json.data(), cfg_len);
  if (f.gcount() != static_cast<std::streamsize>(cfg_len))
    throw TruncatedFile("checkpoint ends inside config");
  while (true) {
    f.peek();
    if (f.eof()) break;
    NamedTensorRecord rec;
    const uint32_t name_len = get_u32(f);
    rec.name.resize(name_len);
    f.read(rec.name.data(), name_len);
    if (f.gcount() != static_cast<std::streamsize>(name_len))
      throw TruncatedFile("checkpoint ends inside record name");
    const uint32_t rank = get_u32(f);
    if (rank < 1 || rank > 3) throw DimMismatch("record " + rec.name + ": bad rank");
    long numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const uint32_t d = get_u32(f);
      if (d == 0) throw DimMismatch("record " + rec.name + ": zero dim");
      rec.dims.push_back(static_cast<int>(d));
      numel *= d;
    }
    rec.values.resize(numel);
    f.read(reinterpret_cast<char*>(rec.values.data()), numel * 4);
    if (f.gcount() != static_cast<std::streamsize>(numel * 4))
      throw TruncatedFile("checkpoint ends inside record values");
    ck.tensors.push_back(std::move(rec));
  }
  return ck;
}

CheckpointFile checkpoint_from_store(const ParameterStore<float>& store, uint8_t stage,
                                     std::string config_json) {
  CheckpointFile ck;
  ck.stage = stage;
  ck.config_json = std::move(config_json);
  for (const auto& [name, t] : store.all()) ck.tensors.push_back({name, t.shape(), t.values()});
  return ck;
}

ParameterStore<float> store_from_checkpoint(const CheckpointFile& ck) {
  ParameterStore<float> store;
  for (const auto& rec : ck.tensors) store.add(rec.name, rec.dims, rec.values, true);
  return store;
}

}  // namespace bctn
