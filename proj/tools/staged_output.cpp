#include "staged_output.hpp"

#include <fstream>
#include <system_error>

#include <unistd.h>

#include "coronet/error.hpp"

namespace coronet::cli {

namespace fs = std::filesystem;

StagedOutput::StagedOutput(fs::path out_dir) : out_(std::move(out_dir)) {
  if (out_.empty()) throw InputError("--out is required");
  if (!fs::exists(out_)) {
    fs::create_directories(out_);
    created_out_ = true;
  } else if (!fs::is_directory(out_)) {
    throw InputError(out_.string() + " is not a directory");
  }
  stage_ = out_ / (".staging-" + std::to_string(::getpid()));
  fs::remove_all(stage_);
  fs::create_directories(stage_);
}

StagedOutput::~StagedOutput() {
  if (committed_) return;
  std::error_code ec;
  fs::remove_all(stage_, ec);
  if (created_out_ && fs::is_empty(out_, ec)) fs::remove(out_, ec);
}

fs::path StagedOutput::file(const std::string& name) {
  names_.push_back(name);
  return stage_ / name;
}

void StagedOutput::write_text(const std::string& name, const std::string& content) {
  std::ofstream f(file(name), std::ios::binary | std::ios::trunc);
  f << content;
  if (!f) throw InputError("failed writing " + name);
}

void StagedOutput::commit() {
  for (const std::string& name : names_) fs::rename(stage_ / name, out_ / name);
  fs::remove_all(stage_);
  committed_ = true;
}

}  // namespace coronet::cli
