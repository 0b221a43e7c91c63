#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bctn/checkpoint.hpp"
#include "bctn/errors.hpp"
#include "bctn/rng.hpp"

using namespace bctn;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

CheckpointFile sample_checkpoint() {
  Rng rng(3);
  CheckpointFile ck;
  ck.stage = 1;
  ck.config_json = "{\"model\":{\"h\":8}}";
  std::vector<float> w(24);
  for (auto& x : w) x = static_cast<float>(rng.uniform(-1, 1));
  ck.tensors.push_back({"z.weight", {4, 6}, w});
  ck.tensors.push_back({"a.bias", {3}, {0.5f, -0.25f, 1e-7f}});
  return ck;
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exactly; save-load-save is byte-identical") {
  const auto p1 = tmp_path("bctn_ck1.bin");
  const auto p2 = tmp_path("bctn_ck2.bin");
  auto ck = sample_checkpoint();
  save_checkpoint_file(ck, p1);
  auto loaded = load_checkpoint_file(p1);
  CHECK(loaded.stage == ck.stage);
  CHECK(loaded.config_json == ck.config_json);
  REQUIRE(loaded.tensors.size() == 2);
  // records come back sorted by name
  CHECK(loaded.tensors[0].name == "a.bias");
  CHECK(loaded.tensors[1].name == "z.weight");
  CHECK(loaded.tensors[1].values == ck.tensors[0].values);
  CHECK(loaded.tensors[1].dims == std::vector<int>{4, 6});

  save_checkpoint_file(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint error paths: missing, bad magic, truncated") {
  CHECK_THROWS_AS(load_checkpoint_file(tmp_path("bctn_nonexistent.bin")), CheckpointMissing);

  const auto p = tmp_path("bctn_ck_bad.bin");
  {
    std::ofstream f(p, std::ios::binary);
    f << "WRONG stuff";
  }
  CHECK_THROWS_AS(load_checkpoint_file(p), BadMagic);

  auto ck = sample_checkpoint();
  save_checkpoint_file(ck, p);
  const auto full = slurp(p);
  {
    std::ofstream f(p, std::ios::binary);
    f.write(full.data(), static_cast<std::streamsize>(full.size() - 7));
  }
  CHECK_THROWS_AS(load_checkpoint_file(p), TruncatedFile);
  std::filesystem::remove(p);
}

TEST_CASE("checkpoint <-> parameter store bridge") {
  ParameterStore<float> store;
  store.add("enc.w", {2, 2}, {1, 2, 3, 4}, true);
  store.add("enc.frozen", {2}, {9, 8}, false);
  auto ck = checkpoint_from_store(store, 2, "{}");
  CHECK(ck.stage == 2);
  auto back = store_from_checkpoint(ck);
  CHECK(back.get("enc.w").values() == std::vector<float>{1, 2, 3, 4});
  CHECK(back.get("enc.frozen").values() == std::vector<float>{9, 8});
}
