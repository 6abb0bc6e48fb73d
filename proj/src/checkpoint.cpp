#include "swinc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "swinc/errors.hpp"

namespace swinc {
namespace {

constexpr char kMagic[4] = {'S', 'W', 'N', 'C'};

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (size_t b = 0; b < sizeof(T); ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFF));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v = 0;
  for (size_t b = 0; b < sizeof(T); ++b) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw StateError("checkpoint '" + path + "' is truncated");
    v |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(c)) << (8 * b));
  }
  return v;
}

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

void write_container(const std::string& path, const std::vector<StoredTensor>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw StateError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put<std::uint16_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) throw StateError("tensor name too long: " + e.name);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const Shape& s = e.tensor.shape();
    put<std::uint8_t>(os, static_cast<std::uint8_t>(s.size()));
    for (Index d : s) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : e.tensor.data()) put<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!os) throw StateError("failed writing '" + path + "'");
}

std::vector<StoredTensor> read_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw StateError("cannot open '" + path + "'");
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw StateError("'" + path + "' is not a SWNC container");
  const auto version = get<std::uint16_t>(is, path);
  if (version != kCheckpointVersion) {
    throw StateError("'" + path + "' has unsupported version " + std::to_string(version) + " (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = get<std::uint32_t>(is, path);
  std::vector<StoredTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is, path);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw StateError("checkpoint '" + path + "' is truncated");
    const auto rank = get<std::uint8_t>(is, path);
    Shape shape;
    for (std::uint8_t r = 0; r < rank; ++r) shape.push_back(get<std::uint32_t>(is, path));
    Tensor t(shape);
    for (double& v : t.data()) v = static_cast<double>(std::bit_cast<float>(get<std::uint32_t>(is, path)));
    out.push_back({std::move(name), std::move(t)});
  }
  if (is.peek() != std::char_traits<char>::eof()) throw StateError("'" + path + "' has trailing bytes");
  return out;
}

void save_checkpoint(const ParamList& params, const std::string& path) {
  std::vector<StoredTensor> entries;
  entries.reserve(params.size());
  for (const auto& p : params) entries.push_back({p.name, p.tensor});
  write_container(path, entries);
}

std::string LoadReport::describe() const {
  std::ostringstream os;
  os << "loaded " << loaded.size() << " tensors";
  if (!missing.empty()) os << "; missing from file: " << join(missing);
  if (!unexpected.empty()) os << "; not in model: " << join(unexpected);
  if (!mismatched.empty()) os << "; shape mismatch: " << join(mismatched);
  return os.str();
}

LoadReport load_checkpoint(const std::string& path, const ParamList& params, bool strict) {
  const auto stored = read_container(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& s : stored) by_name[s.name] = &s.tensor;

  LoadReport report;
  std::vector<std::pair<Tensor, const Tensor*>> copies;
  std::map<std::string, bool> seen;
  for (const auto& p : params) {
    seen[p.name] = true;
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      report.missing.push_back(p.name);
    } else if (it->second->shape() != p.tensor.shape()) {
      report.mismatched.push_back(p.name + " " + shape_str(it->second->shape()) + " vs " + shape_str(p.tensor.shape()));
    } else {
      copies.emplace_back(p.tensor, it->second);
      report.loaded.push_back(p.name);
    }
  }
  for (const auto& s : stored) {
    if (!seen.count(s.name)) report.unexpected.push_back(s.name);
  }
  if (strict && !report.clean()) throw StateError("strict load of '" + path + "' failed: " + report.describe());
  for (auto& [dst, src] : copies) {
    auto d = dst.data();
    std::copy(src->data().begin(), src->data().end(), d.begin());
  }
  return report;
}

void save_dataset(const std::vector<SegSample>& samples, const std::string& path) {
  std::vector<StoredTensor> entries;
  for (size_t i = 0; i < samples.size(); ++i) {
    entries.push_back({"vol_" + std::to_string(i), samples[i].volume});
    entries.push_back({"lab_" + std::to_string(i), samples[i].labels});
  }
  write_container(path, entries);
}

std::vector<SegSample> load_dataset(const std::string& path) {
  const auto stored = read_container(path);
  std::map<std::string, Tensor> by_name;
  for (const auto& s : stored) by_name[s.name] = s.tensor;
  std::vector<SegSample> out;
  for (size_t i = 0;; ++i) {
    const auto v = by_name.find("vol_" + std::to_string(i));
    const auto l = by_name.find("lab_" + std::to_string(i));
    if (v == by_name.end() && l == by_name.end()) break;
    if (v == by_name.end() || l == by_name.end()) throw StateError("dataset '" + path + "' lacks a pair for sample " + std::to_string(i));
    out.push_back({v->second, l->second});
  }
  if (out.size() * 2 != stored.size()) throw StateError("dataset '" + path + "' has entries other than vol_i/lab_i");
  return out;
}

}  // namespace swinc
