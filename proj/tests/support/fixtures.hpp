#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "coronet/metrics.hpp"
#include "coronet/train.hpp"

namespace coronet::testkit {

// Reference confusion matrices (rows actual, columns predicted).
metrics::ConfusionMatrix dataset2_three_class();         // COVID-19, Normal, Pneumonia
metrics::ConfusionMatrix binary_covid_normal();          // COVID-19, Normal
metrics::ConfusionMatrix three_class_covid_normal_pneu(); // COVID-19, Normal, Pneumonia
std::vector<metrics::ConfusionMatrix> four_class_folds(); // COVID-19, Normal, Bacterial, Viral

// Each class lights up its own quadrant of a dim noisy background, so a
// small network can separate them quickly. Labels cycle 0..classes-1.
train::Dataset synthetic_quadrants(std::size_t per_class, std::size_t classes, std::size_t size,
                                   std::uint64_t seed);

// Writes the same kind of images as 8-bit PGMs plus a `manifest.csv` with the
// four-class labels. Returns the manifest path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir,
                                             std::size_t per_class, std::size_t size,
                                             std::uint64_t seed);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace coronet::testkit
