#include "s2m/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace s2m {

namespace {

constexpr char kMagic[8] = {'S', '2', 'M', 'C', 'K', 'P', 'T', '1'};

void put_u16(std::ostream& os, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_entry(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.size() > 0xffff) throw std::runtime_error("checkpoint entry name too long");
  put_u16(os, static_cast<uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(static_cast<char>(t.rank()));
  for (int d : t.shape) put_u32(os, static_cast<uint32_t>(d));
  std::vector<float> f(t.data.begin(), t.data.end());
  os.write(reinterpret_cast<const char*>(f.data()),
           static_cast<std::streamsize>(f.size() * sizeof(float)));
}

}  // namespace

uint64_t fnv1a_hash(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const ParamStore& ps, const std::string& path, uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  uint32_t count = 0;
  count += static_cast<uint32_t>(ps.params.size()) * 3;  // param + m1 + m2
  count += static_cast<uint32_t>(ps.buffers.size());
  count += 2;  // __step, __config_hash
  put_u32(os, count);
  for (const auto& [name, t] : ps.params) {
    write_entry(os, name, t);
    write_entry(os, name + ".m1", ps.m1.at(name));
    write_entry(os, name + ".m2", ps.m2.at(name));
  }
  for (const auto& [name, t] : ps.buffers) write_entry(os, name, t);
  write_entry(os, "__step", Tensor({1}, {static_cast<double>(ps.step_count)}));
  Tensor hash_t({8});
  for (int i = 0; i < 8; ++i) hash_t[i] = static_cast<double>((config_hash >> (8 * i)) & 0xff);
  write_entry(os, "__config_hash", hash_t);
  if (!os) throw std::runtime_error("write failure on checkpoint: " + path);
}

uint64_t load_checkpoint(ParamStore& ps, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const uint32_t count = get_u32(is);
  uint64_t config_hash = 0;
  const bool store_was_empty = ps.params.empty();
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t nlen = get_u16(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const int rank = is.get();
    Shape shape(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) shape[static_cast<size_t>(i)] = static_cast<int>(get_u32(is));
    Tensor t(shape);
    std::vector<float> f(static_cast<size_t>(t.numel()));
    is.read(reinterpret_cast<char*>(f.data()),
            static_cast<std::streamsize>(f.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<double>(f[static_cast<size_t>(i)]);

    if (name == "__step") {
      ps.step_count = static_cast<long>(t[0]);
    } else if (name == "__config_hash") {
      for (int i = 0; i < 8; ++i)
        config_hash |= static_cast<uint64_t>(static_cast<uint8_t>(t[i])) << (8 * i);
    } else if (name.size() > 3 && name.compare(name.size() - 3, 3, ".m1") == 0) {
      ps.m1[name.substr(0, name.size() - 3)] = std::move(t);
    } else if (name.size() > 3 && name.compare(name.size() - 3, 3, ".m2") == 0) {
      ps.m2[name.substr(0, name.size() - 3)] = std::move(t);
    } else if (name.compare(0, 3, "bn.") == 0 ||
               name.find(".running_") != std::string::npos) {
      ps.buffers[name] = std::move(t);
    } else {
      if (!store_was_empty) {
        auto it = ps.params.find(name);
        if (it == ps.params.end())
          throw std::runtime_error("checkpoint entry " + name + " not present in model");
        if (it->second.shape != shape)
          throw std::runtime_error("checkpoint shape mismatch for " + name + ": model " +
                                   shape_str(it->second.shape) + " vs file " + shape_str(shape));
      }
      ps.params[name] = std::move(t);
      ps.grads.emplace(name, Tensor(shape));
      ps.m1.emplace(name, Tensor(shape));
      ps.m2.emplace(name, Tensor(shape));
    }
  }
  return config_hash;
}

}  // namespace s2m
