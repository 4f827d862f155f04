#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace coronet::cli {

// Artifacts are written into a hidden staging directory and moved into the
// output directory only on commit(); an uncommitted stage is deleted.
class StagedOutput {
 public:
  explicit StagedOutput(std::filesystem::path out_dir);
  ~StagedOutput();
  StagedOutput(const StagedOutput&) = delete;
  StagedOutput& operator=(const StagedOutput&) = delete;

  /// Path inside the stage for an artifact called `name`.
  std::filesystem::path file(const std::string& name);
  void write_text(const std::string& name, const std::string& content);
  void commit();

 private:
  std::filesystem::path out_;
  std::filesystem::path stage_;
  std::vector<std::string> names_;
  bool created_out_ = false;
  bool committed_ = false;
};

}  // namespace coronet::cli
