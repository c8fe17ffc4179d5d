#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "s2m/checkpoint.hpp"
#include "s2m/param_store.hpp"

using namespace s2m;

namespace {

std::string tmp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

ParamStore make_store(uint64_t seed) {
  ParamStore ps;
  Rng rng(seed);
  ps.ensure("net.fc.w", {4, 3}, glorot_init(rng, 3, 4));
  ps.ensure("net.fc.b", {4}, const_init(0.0));
  ps.ensure("net.bn.gamma", {4}, const_init(1.0));
  ps.buffer("net.bn.running_mean", {4}, 0.25);
  // give moments and grads nonzero content via one optimizer step
  for (auto& [name, g] : ps.grads)
    for (auto& x : g.data) x = rng.uniform(-1, 1);
  adam_step(ps, {});
  return ps;
}

}  // namespace

TEST_CASE("checkpoint round trip restores params, moments, buffers and step") {
  const ParamStore src = make_store(31);
  const std::string path = tmp_path("s2m_test_ckpt_rt.s2mckpt");
  save_checkpoint(src, path, 0xDEADBEEFull);

  ParamStore dst;
  const uint64_t hash = load_checkpoint(dst, path);
  CHECK(hash == 0xDEADBEEFull);
  CHECK(dst.step_count == src.step_count);

  REQUIRE(dst.params.size() == src.params.size());
  for (const auto& [name, t] : src.params) {
    REQUIRE(dst.params.count(name) == 1);
    const Tensor& r = dst.params.at(name);
    REQUIRE(r.shape == t.shape);
    for (int64_t i = 0; i < t.numel(); ++i)
      CHECK(r[i] == static_cast<double>(static_cast<float>(t[i])));  // float32 on disk
  }
  for (const auto& [name, t] : src.m1) {
    const Tensor& r = dst.m1.at(name);
    for (int64_t i = 0; i < t.numel(); ++i)
      CHECK(r[i] == static_cast<double>(static_cast<float>(t[i])));
  }
  for (const auto& [name, t] : src.m2) {
    const Tensor& r = dst.m2.at(name);
    for (int64_t i = 0; i < t.numel(); ++i)
      CHECK(r[i] == static_cast<double>(static_cast<float>(t[i])));
  }
  REQUIRE(dst.buffers.count("net.bn.running_mean") == 1);
  CHECK(dst.buffers.at("net.bn.running_mean")[0] == 0.25);
  std::filesystem::remove(path);
}

TEST_CASE("save-load-save is a fixed point once values are float32") {
  const ParamStore src = make_store(32);
  const std::string p1 = tmp_path("s2m_test_ckpt_fp1.s2mckpt");
  const std::string p2 = tmp_path("s2m_test_ckpt_fp2.s2mckpt");
  save_checkpoint(src, p1, 7);
  ParamStore once;
  load_checkpoint(once, p1);
  save_checkpoint(once, p2, 7);
  ParamStore twice;
  load_checkpoint(twice, p2);
  for (const auto& [name, t] : once.params) {
    const Tensor& r = twice.params.at(name);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(r[i] == t[i]);
  }
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("loading into a store with mismatched shapes fails") {
  const ParamStore src = make_store(33);
  const std::string path = tmp_path("s2m_test_ckpt_mismatch.s2mckpt");
  save_checkpoint(src, path, 1);

  ParamStore wrong;
  Rng rng(1);
  wrong.ensure("net.fc.w", {5, 3}, glorot_init(rng, 3, 5));  // wrong row count
  CHECK_THROWS(load_checkpoint(wrong, path));
  std::filesystem::remove(path);
}

TEST_CASE("loading a missing or corrupt file fails") {
  ParamStore ps;
  CHECK_THROWS(load_checkpoint(ps, tmp_path("s2m_test_ckpt_nonexistent.s2mckpt")));

  const std::string bad = tmp_path("s2m_test_ckpt_bad.s2mckpt");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "NOTACKPT";
  }
  CHECK_THROWS(load_checkpoint(ps, bad));
  std::filesystem::remove(bad);
}

TEST_CASE("fnv1a hash is stable and sensitive to every character") {
  const uint64_t h = fnv1a_hash("image_size=64;num_views=12");
  CHECK(h == fnv1a_hash("image_size=64;num_views=12"));
  CHECK(h != fnv1a_hash("image_size=64;num_views=14"));
  CHECK(fnv1a_hash("") == 0xcbf29ce484222325ull);  // FNV-1a 64-bit offset basis
  CHECK(fnv1a_hash("a") == 0xaf63dc4c8601ec8cull);  // published reference value
}
