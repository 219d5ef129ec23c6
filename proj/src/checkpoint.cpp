#include "destine/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace destine {

namespace {

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& data;
  size_t pos = 0;
  explicit Reader(const std::string& d) : data(d) {}

  void need(size_t n) const {
    if (pos + n > data.size()) throw ParseError("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
};

float to_f32(double v) { return static_cast<float>(v); }

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamSet& params) {
  std::string header;
  put_u32(header, kCheckpointMagic);
  put_u32(header, kCheckpointVersion);
  put_u32(header, static_cast<uint32_t>(params.count()));

  std::string payload;
  uint64_t offset = 0;
  for (const nn::NamedParam& p : params.items()) {
    put_u32(header, static_cast<uint32_t>(p.name.size()));
    header += p.name;
    header.push_back(0);  // dtype 0 = fp32
    header.push_back(static_cast<char>(p.tensor->rank()));
    for (int d = 0; d < p.tensor->rank(); ++d) put_u32(header, static_cast<uint32_t>(p.tensor->dim(d)));
    put_u64(header, offset);
    for (int64_t i = 0; i < p.tensor->size(); ++i) {
      const float f = to_f32(p.tensor->data()[i]);
      char bytes[4];
      std::memcpy(bytes, &f, 4);
      payload.append(bytes, 4);
      offset += 4;
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out << header << payload;
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

void load_checkpoint(const std::string& path, nn::ParamSet& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(data);

  if (r.u32() != kCheckpointMagic) throw ParseError("checkpoint: bad magic");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw ParseError("checkpoint: format version " + std::to_string(version) +
                     ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const uint32_t count = r.u32();
  if (count != params.count()) {
    throw ParseError("checkpoint: holds " + std::to_string(count) + " parameters, model has " +
                     std::to_string(params.count()));
  }

  struct Entry {
    std::string name;
    nn::Shape shape;
    uint64_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    const uint32_t name_len = r.u32();
    e.name = r.str(name_len);
    const std::string dtype_rank = r.str(2);
    if (dtype_rank[0] != 0) throw ParseError("checkpoint: unsupported dtype");
    const int rank = static_cast<int>(dtype_rank[1]);
    for (int d = 0; d < rank; ++d) e.shape.push_back(static_cast<int>(r.u32()));
    e.offset = r.u64();
    entries.push_back(std::move(e));
  }
  const size_t payload_start = r.pos;

  // Validate everything against the model, staging values before committing.
  std::vector<std::vector<double>> staged(count);
  const auto& items = params.items();
  for (uint32_t i = 0; i < count; ++i) {
    const Entry& e = entries[i];
    const nn::NamedParam& p = items[i];
    if (e.name != p.name) {
      throw ParseError("checkpoint: parameter " + std::to_string(i) + " is '" + e.name +
                       "', model expects '" + p.name + "'");
    }
    if (e.shape != p.tensor->shape()) {
      throw ParseError("checkpoint: shape mismatch for '" + e.name + "'");
    }
    const size_t n = static_cast<size_t>(p.tensor->size());
    const size_t start = payload_start + e.offset;
    if (start + 4 * n > data.size()) throw ParseError("checkpoint: truncated payload");
    staged[i].resize(n);
    for (size_t j = 0; j < n; ++j) {
      float f;
      std::memcpy(&f, data.data() + start + 4 * j, 4);
      staged[i][j] = static_cast<double>(f);
    }
  }
  for (uint32_t i = 0; i < count; ++i) {
    std::copy(staged[i].begin(), staged[i].end(), items[i].tensor->data());
  }
}

void round_params_to_fp32(nn::ParamSet& params) {
  for (const nn::NamedParam& p : params.items()) {
    for (int64_t i = 0; i < p.tensor->size(); ++i) {
      p.tensor->data()[i] = static_cast<double>(to_f32(p.tensor->data()[i]));
    }
  }
}

}  // namespace destine
