#include "coronet/weights.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "coronet/error.hpp"

namespace coronet::model {

namespace {

constexpr std::array<char, 8> kMagic{'C', 'O', 'R', 'O', 'N', 'E', 'T', '1'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(char(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(std::uint8_t(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(std::uint8_t(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(std::uint32_t(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  std::uint8_t u8() {
    need(1);
    return std::uint8_t(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(u8()) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("weights file is truncated");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open weights file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<WeightEntry> read_manifest(Reader& r) {
  for (char c : kMagic) {
    if (char(r.u8()) != c) throw FormatError("not a weights file (bad magic)");
  }
  const std::uint32_t count = r.u32();
  std::vector<WeightEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightEntry e;
    e.layer = r.str();
    e.tensor = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("layer '" + e.layer + "': implausible tensor rank");
    std::vector<std::size_t> dims;
    for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(std::size_t(r.u64()));
    e.shape = Shape(std::move(dims));
    e.trainable = r.u8() != 0;
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace

void save_weights(const Network& net, const std::filesystem::path& path, WeightScope scope) {
  std::vector<const Node*> nodes;
  std::uint32_t count = 0;
  for (const Node& node : net.nodes()) {
    if (scope == WeightScope::backbone && !node.backbone) continue;
    if (node.params.empty()) continue;
    nodes.push_back(&node);
    count += std::uint32_t(node.params.size());
  }
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u32(count);
  for (const Node* node : nodes) {
    for (const nn::Parameter& p : node->params) {
      w.str(node->name);
      w.str(p.name);
      w.u32(std::uint32_t(p.value.rank()));
      for (std::size_t d : p.value.shape().dims()) w.u64(d);
      w.u8(p.trainable ? 1 : 0);
    }
  }
  for (const Node* node : nodes)
    for (const nn::Parameter& p : node->params)
      for (float f : p.value.values()) w.f32(f);

  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(w.bytes().data(), std::streamsize(w.bytes().size()));
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<WeightEntry> read_weight_manifest(const std::filesystem::path& path) {
  Reader r(slurp(path));
  return read_manifest(r);
}

std::size_t load_weights(Network& net, const std::filesystem::path& path) {
  Reader r(slurp(path));
  const std::vector<WeightEntry> entries = read_manifest(r);

  std::vector<nn::Parameter*> targets;
  for (const WeightEntry& e : entries) {
    const auto idx = net.find(e.layer);
    if (!idx) throw FormatError("layer '" + e.layer + "' is not part of this network");
    Node& node = net.node(*idx);
    nn::Parameter* target = nullptr;
    for (nn::Parameter& p : node.params)
      if (p.name == e.tensor) target = &p;
    if (!target) {
      throw FormatError("layer '" + e.layer + "' has no tensor named '" + e.tensor + "'");
    }
    if (target->value.shape() != e.shape) {
      throw FormatError("layer '" + e.layer + "' tensor '" + e.tensor + "': file shape " +
                        e.shape.str() + " vs network " + target->value.shape().str());
    }
    targets.push_back(target);
  }

  std::vector<std::vector<float>> data;
  for (const WeightEntry& e : entries) {
    std::vector<float> values(e.shape.numel());
    r.need(values.size() * 4);
    for (float& f : values) f = r.f32();
    data.push_back(std::move(values));
  }
  if (!r.done()) throw FormatError("trailing bytes after the last weight tensor");

  for (std::size_t i = 0; i < entries.size(); ++i) {
    targets[i]->value = Tensor(entries[i].shape, std::move(data[i]));
    targets[i]->trainable = entries[i].trainable;
  }
  return entries.size();
}

}  // namespace coronet::model
