#include "fixtures.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "coronet/data.hpp"
#include "coronet/image.hpp"
#include "coronet/rng.hpp"

namespace coronet::testkit {

namespace fs = std::filesystem;

metrics::ConfusionMatrix dataset2_three_class() {
  return {{"COVID-19", "Normal", "Pneumonia"}, {{33, 4, 0}, {1, 128, 21}, {0, 7, 143}}};
}

metrics::ConfusionMatrix binary_covid_normal() {
  return {{"COVID-19", "Normal"}, {{29, 0}, {1, 71}}};
}

metrics::ConfusionMatrix three_class_covid_normal_pneu() {
  return {{"COVID-19", "Normal", "Pneumonia"}, {{29, 0, 0}, {1, 71, 0}, {0, 10, 110}}};
}

std::vector<metrics::ConfusionMatrix> four_class_folds() {
  const std::vector<std::string> c{"COVID-19", "Normal", "PneumoniaBacterial", "PneumoniaViral"};
  return {
      {c, {{60, 0, 0, 0}, {1, 67, 5, 0}, {0, 2, 62, 10}, {2, 5, 10, 53}}},
      {c, {{65, 0, 0, 1}, {2, 73, 3, 2}, {0, 1, 72, 9}, {3, 2, 6, 66}}},
      {c, {{73, 0, 1, 2}, {2, 85, 0, 2}, {1, 1, 75, 11}, {3, 2, 11, 62}}},
      {c, {{75, 0, 0, 1}, {2, 89, 2, 0}, {1, 1, 82, 10}, {3, 2, 6, 76}}},
  };
}

namespace {

std::vector<std::uint8_t> quadrant_image(std::size_t cls, std::size_t size, Rng& rng) {
  std::vector<std::uint8_t> px(size * size);
  const std::size_t half = size / 2;
  const std::size_t r0 = (cls / 2) * half, c0 = (cls % 2) * half;
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const bool lit = r >= r0 && r < r0 + half && c >= c0 && c < c0 + half;
      const float v = lit ? rng.uniform(0.7f, 1.0f) : rng.uniform(0.0f, 0.3f);
      px[r * size + c] = std::uint8_t(v * 255.0f + 0.5f);
    }
  return px;
}

}  // namespace

train::Dataset synthetic_quadrants(std::size_t per_class, std::size_t classes, std::size_t size,
                                   std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = per_class * classes;
  train::Dataset d;
  d.images = Tensor(Shape{n, size, size, 3});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % classes;
    const auto px = quadrant_image(cls, size, rng);
    for (std::size_t p = 0; p < size * size; ++p)
      for (std::size_t ch = 0; ch < 3; ++ch) d.images[(i * size * size + p) * 3 + ch] = float(px[p]) / 255.0f;
    d.labels.push_back(cls);
  }
  return d;
}

fs::path write_synthetic_corpus(const fs::path& dir, std::size_t per_class, std::size_t size,
                                std::uint64_t seed) {
  const data::ClassLabel labels[] = {data::ClassLabel::covid19, data::ClassLabel::normal,
                                     data::ClassLabel::pneumonia_bacterial,
                                     data::ClassLabel::pneumonia_viral};
  fs::create_directories(dir / "images");
  Rng rng(seed);
  data::DatasetManifest m;
  for (std::size_t i = 0; i < per_class * 4; ++i) {
    const std::size_t cls = i % 4;
    const auto bytes = data::encode_pgm(quadrant_image(cls, size, rng), size, size);
    const std::string rel = "images/img" + std::to_string(i) + ".pgm";
    std::ofstream(dir / rel, std::ios::binary)
        .write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    m.records.push_back({rel, labels[cls]});
  }
  const fs::path manifest = dir / "manifest.csv";
  std::ofstream out(manifest);
  data::write_manifest(out, m);
  return manifest;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("coronet-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace coronet::testkit
