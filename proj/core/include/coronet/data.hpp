#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coronet/train.hpp"

namespace coronet::data {

enum class ClassLabel {
  covid19,
  normal,
  pneumonia_bacterial,
  pneumonia_viral,
  pneumonia,  // three-class merge of bacterial + viral
  non_covid,  // two-class merge of everything but COVID-19
};

/// Exact manifest spelling: COVID-19, Normal, PneumoniaBacterial,
/// PneumoniaViral, Pneumonia, NonCOVID.
std::string_view label_name(ClassLabel label);
std::optional<ClassLabel> parse_label(std::string_view text);

enum class Scheme { four, three, two };

Scheme scheme_for_classes(std::size_t num_classes);
std::size_t class_count(Scheme scheme);

/// The scheme's alphabet in class-index order (COVID-19 is always index 0).
std::vector<ClassLabel> scheme_labels(Scheme scheme);

/// Maps a label into the scheme's alphabet (total and deterministic).
ClassLabel merge_label(ClassLabel label, Scheme scheme);

/// Index of an already-merged label within the scheme; throws InputError if the
/// label is not part of it.
std::size_t label_index(ClassLabel label, Scheme scheme);

struct Record {
  std::string path;
  ClassLabel label;
};

struct DatasetManifest {
  std::vector<Record> records;
  std::filesystem::path base_dir;  // relative image paths resolve against this

  std::size_t size() const noexcept { return records.size(); }
  std::map<ClassLabel, std::size_t> counts() const;
  std::filesystem::path resolve(const Record& r) const;
};

/// CSV with header `path,label`. Throws ParseError (with line number) on an
/// unknown label, duplicate path or malformed row.
DatasetManifest parse_manifest(std::istream& in, std::filesystem::path base_dir = {});
DatasetManifest load_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const DatasetManifest& manifest);

/// Per-class target sizes; classes not listed are kept whole.
using Targets = std::map<ClassLabel, std::size_t>;

/// Keeps a seeded uniform subset of exactly the target size for every class,
/// preserving file order among survivors.
DatasetManifest undersample(const DatasetManifest& manifest, const Targets& targets,
                            std::uint64_t seed);
/// Every class down to the smallest class count.
DatasetManifest undersample_to_min(const DatasetManifest& manifest, std::uint64_t seed);

DatasetManifest merge_labels(const DatasetManifest& manifest, Scheme scheme);

/// Stratified split into k folds of record indices. Each class is shuffled
/// (seeded), then dealt round-robin with one counter running across classes,
/// so fold sizes differ by at most one overall and within every class.
/// A class with fewer than k records simply misses some folds. Throws
/// InputError when k < 2 or there are fewer than k records in total.
std::vector<std::vector<std::size_t>> kfold_split(const DatasetManifest& manifest, std::size_t k,
                                                  std::uint64_t seed);

/// Complement of fold `held_out`, ascending.
std::vector<std::size_t> training_indices(const std::vector<std::vector<std::size_t>>& folds,
                                          std::size_t held_out);

DatasetManifest select(const DatasetManifest& manifest, const std::vector<std::size_t>& indices);

/// Decodes, resizes and stacks every record into [N, height, width, 3], with
/// labels merged into `scheme`.
train::Dataset load_dataset(const DatasetManifest& manifest, Scheme scheme, std::size_t height,
                            std::size_t width);

}  // namespace coronet::data
