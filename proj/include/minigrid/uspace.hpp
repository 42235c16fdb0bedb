#pragma once

// Per-job working directory. Every file operation resolves against the job
// root and rejects paths that would escape it. The root is removed at
// finalize and never comes back.

#include <filesystem>
#include <fstream>
#include <string>

#include "minigrid/errors.hpp"

namespace minigrid {

namespace fs = std::filesystem;

// Joins base/rel, refusing absolute paths and parent traversal.
inline fs::path safe_join(const fs::path& base, const std::string& rel) {
  fs::path p(rel);
  if (rel.empty() || p.is_absolute())
    throw Error("PATH_ESCAPE", "path escapes sandbox: " + rel);
  for (const auto& part : p)
    if (part == "..") throw Error("PATH_ESCAPE", "path escapes sandbox: " + rel);
  return base / p;
}

class Uspace {
public:
  enum class State { OPEN, FINALIZED };

  Uspace(const fs::path& uspace_root, const std::string& job_key)
      : root_(uspace_root / job_key) {
    fs::create_directories(root_);
  }

  const fs::path& root() const { return root_; }
  State state() const { return state_; }

  fs::path resolve(const std::string& rel) const {
    if (state_ != State::OPEN) throw Error("USPACE_CLOSED", "uspace finalized");
    return safe_join(root_, rel);
  }

  bool exists(const std::string& rel) const {
    return state_ == State::OPEN && fs::exists(safe_join(root_, rel));
  }

  void write(const std::string& rel, const std::string& bytes) {
    fs::path p = resolve(rel);
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("IO_ERROR", "cannot write " + p.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }

  std::string read(const std::string& rel) const {
    fs::path p = resolve(rel);
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("IO_ERROR", "cannot read " + p.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

  // Removes the whole job directory. Idempotent; errors are swallowed since
  // the outcome has already been secured by the time this runs.
  void finalize() {
    if (state_ == State::FINALIZED) return;
    state_ = State::FINALIZED;
    std::error_code ec;
    fs::remove_all(root_, ec);
  }

private:
  fs::path root_;
  State state_ = State::OPEN;
};

} // namespace minigrid
