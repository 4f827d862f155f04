#include "coronet/data.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "coronet/error.hpp"
#include "coronet/image.hpp"
#include "coronet/rng.hpp"

namespace coronet::data {

namespace {

constexpr std::array<std::pair<ClassLabel, std::string_view>, 6> kNames{{
    {ClassLabel::covid19, "COVID-19"},
    {ClassLabel::normal, "Normal"},
    {ClassLabel::pneumonia_bacterial, "PneumoniaBacterial"},
    {ClassLabel::pneumonia_viral, "PneumoniaViral"},
    {ClassLabel::pneumonia, "Pneumonia"},
    {ClassLabel::non_covid, "NonCOVID"},
}};

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::string_view label_name(ClassLabel label) {
  for (const auto& [l, name] : kNames)
    if (l == label) return name;
  return "?";
}

std::optional<ClassLabel> parse_label(std::string_view text) {
  for (const auto& [l, name] : kNames)
    if (name == text) return l;
  return std::nullopt;
}

Scheme scheme_for_classes(std::size_t num_classes) {
  switch (num_classes) {
    case 4: return Scheme::four;
    case 3: return Scheme::three;
    case 2: return Scheme::two;
    default: throw InputError("class count must be 2, 3 or 4, got " + std::to_string(num_classes));
  }
}

std::size_t class_count(Scheme scheme) { return scheme_labels(scheme).size(); }

std::vector<ClassLabel> scheme_labels(Scheme scheme) {
  switch (scheme) {
    case Scheme::four:
      return {ClassLabel::covid19, ClassLabel::normal, ClassLabel::pneumonia_bacterial,
              ClassLabel::pneumonia_viral};
    case Scheme::three:
      return {ClassLabel::covid19, ClassLabel::normal, ClassLabel::pneumonia};
    case Scheme::two:
      return {ClassLabel::covid19, ClassLabel::non_covid};
  }
  return {};
}

ClassLabel merge_label(ClassLabel label, Scheme scheme) {
  if (label == ClassLabel::covid19) return label;
  switch (scheme) {
    case Scheme::four:
      return label;
    case Scheme::three:
      return label == ClassLabel::pneumonia_bacterial || label == ClassLabel::pneumonia_viral
                 ? ClassLabel::pneumonia
                 : label;
    case Scheme::two:
      return ClassLabel::non_covid;
  }
  return label;
}

std::size_t label_index(ClassLabel label, Scheme scheme) {
  const auto labels = scheme_labels(scheme);
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw InputError("label " + std::string(label_name(label)) + " is not part of this scheme");
  }
  return std::size_t(it - labels.begin());
}

std::map<ClassLabel, std::size_t> DatasetManifest::counts() const {
  std::map<ClassLabel, std::size_t> out;
  for (const Record& r : records) ++out[r.label];
  return out;
}

std::filesystem::path DatasetManifest::resolve(const Record& r) const {
  const std::filesystem::path p(r.path);
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

DatasetManifest parse_manifest(std::istream& in, std::filesystem::path base_dir) {
  DatasetManifest m;
  m.base_dir = std::move(base_dir);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "manifest is empty");
  ++line_no;
  if (trim(line) != "path,label") throw ParseError(1, "expected header 'path,label'");

  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) throw ParseError(line_no, "expected 'path,label'");
    std::string path = trim(line.substr(0, comma));
    const std::string label_text = trim(line.substr(comma + 1));
    if (path.empty()) throw ParseError(line_no, "empty image path");
    const auto label = parse_label(label_text);
    if (!label) throw ParseError(line_no, "unknown label '" + label_text + "'");
    if (!seen.insert(path).second) throw ParseError(line_no, "duplicate path '" + path + "'");
    m.records.push_back({std::move(path), *label});
  }
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  out << "path,label\n";
  for (const Record& r : manifest.records) out << r.path << ',' << label_name(r.label) << '\n';
}

DatasetManifest undersample(const DatasetManifest& manifest, const Targets& targets,
                            std::uint64_t seed) {
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    by_class[manifest.records[i].label].push_back(i);
  }
  std::vector<bool> keep(manifest.records.size(), true);
  for (const auto& [label, target] : targets) {
    auto& members = by_class[label];
    if (target > members.size()) {
      throw InputError("cannot keep " + std::to_string(target) + " " +
                       std::string(label_name(label)) + " records, only " +
                       std::to_string(members.size()) + " available");
    }
    Rng rng(Rng::derive(seed, std::uint64_t(label)));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t i = target; i < members.size(); ++i) keep[members[i]] = false;
  }
  DatasetManifest out;
  out.base_dir = manifest.base_dir;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (keep[i]) out.records.push_back(manifest.records[i]);
  return out;
}

DatasetManifest undersample_to_min(const DatasetManifest& manifest, std::uint64_t seed) {
  const auto counts = manifest.counts();
  if (counts.empty()) return manifest;
  std::size_t smallest = counts.begin()->second;
  for (const auto& [label, n] : counts) smallest = std::min(smallest, n);
  Targets targets;
  for (const auto& [label, n] : counts) targets[label] = smallest;
  return undersample(manifest, targets, seed);
}

DatasetManifest merge_labels(const DatasetManifest& manifest, Scheme scheme) {
  DatasetManifest out = manifest;
  for (Record& r : out.records) r.label = merge_label(r.label, scheme);
  return out;
}

std::vector<std::vector<std::size_t>> kfold_split(const DatasetManifest& manifest, std::size_t k,
                                                  std::uint64_t seed) {
  if (k < 2) throw InputError("k-fold needs k >= 2");
  std::map<ClassLabel, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    by_class[manifest.records[i].label].push_back(i);
  }
  // A class smaller than k just misses some folds; only an empty fold is fatal.
  if (manifest.records.size() < k) {
    throw InputError(std::to_string(manifest.records.size()) + " records cannot fill k = " +
                     std::to_string(k) + " folds");
  }
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& [label, members] : by_class) {
    Rng rng(Rng::derive(seed, std::uint64_t(label)));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t idx : members) {
      folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> training_indices(const std::vector<std::vector<std::size_t>>& folds,
                                          std::size_t held_out) {
  if (held_out >= folds.size()) throw InputError("fold index out of range");
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != held_out) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

DatasetManifest select(const DatasetManifest& manifest, const std::vector<std::size_t>& indices) {
  DatasetManifest out;
  out.base_dir = manifest.base_dir;
  for (std::size_t i : indices) out.records.push_back(manifest.records.at(i));
  return out;
}

train::Dataset load_dataset(const DatasetManifest& manifest, Scheme scheme, std::size_t height,
                            std::size_t width) {
  train::Dataset ds{Tensor(Shape{manifest.size(), height, width, 3}), {}};
  const std::size_t stride = height * width * 3;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const Record& r = manifest.records[i];
    const Tensor img = resize_bilinear(load_image(manifest.resolve(r)), height, width);
    std::copy(img.values().begin(), img.values().end(), ds.images.data() + i * stride);
    ds.labels.push_back(label_index(merge_label(r.label, scheme), scheme));
  }
  return ds;
}

}  // namespace coronet::data
