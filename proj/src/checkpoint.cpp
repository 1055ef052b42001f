#include "dissip/checkpoint.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

namespace dissip {

namespace {

constexpr char kMagic[] = "DCKPT1\n";
constexpr size_t kMagicLen = 7;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os.write(kMagic, kMagicLen);

  std::vector<int> order(store.size());
  for (int i = 0; i < store.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return store.entry(a).name < store.entry(b).name;
  });

  for (int i : order) {
    const auto& e = store.entry(i);
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.dims.size()));
    for (int d : e.dims) put_u32(os, static_cast<std::uint32_t>(d));
    static_assert(sizeof(double) == 8);
    os.write(reinterpret_cast<const char*>(e.value.data()),
             static_cast<std::streamsize>(sizeof(double) * e.value.size()));
  }
  if (!os) throw std::runtime_error("write failed for " + path);
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  char magic[kMagicLen];
  is.read(magic, kMagicLen);
  if (!is || std::string(magic, kMagicLen) != std::string(kMagic, kMagicLen))
    throw std::runtime_error(path + " is not a checkpoint file");

  while (true) {
    is.peek();
    if (is.eof()) break;
    std::uint32_t name_len = get_u32(is);
    if (name_len > 4096) throw std::runtime_error("implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = get_u32(is);
    if (rank > 8) throw std::runtime_error("implausible rank");
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(get_u32(is));
    int n = ParamStore::flat_size(dims);
    Vec value(n);
    is.read(reinterpret_cast<char*>(value.data()),
            static_cast<std::streamsize>(sizeof(double) * n));
    if (!is) throw std::runtime_error("truncated checkpoint record " + name);

    int idx = store.find(name);
    if (idx < 0) {
      store.add(name, dims, std::move(value));
    } else {
      if (store.entry(idx).dims != dims)
        throw std::runtime_error("checkpoint shape mismatch for " + name);
      store.value(idx) = std::move(value);
    }
  }
}

}  // namespace dissip
