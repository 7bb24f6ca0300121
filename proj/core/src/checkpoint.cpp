#include "pvn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pvn {

namespace {

// The format is little-endian by definition; these helpers keep it bit-exact
// regardless of host order.
void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::string buf;
  buf += "PVN1";
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(buf, static_cast<std::uint32_t>(e.name.size()));
    buf += e.name;
    put_u32(buf, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put_u64(buf, static_cast<std::uint64_t>(d));
    for (float v : e.data) put_f32(buf, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};
  if (r.bytes(4) != "PVN1") throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint32_t name_len = r.u32();
    e.name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(static_cast<std::int64_t>(r.u64()));
      numel *= e.shape.back();
    }
    e.data.resize(static_cast<std::size_t>(numel));
    for (auto& v : e.data) v = r.f32();
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace pvn
