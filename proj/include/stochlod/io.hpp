#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stochlod/errors.hpp"
#include "stochlod/randfield.hpp"

namespace stochlod {
namespace io {

void write_doubles_le(const std::string& path, std::span<const double> values);
std::vector<double> read_doubles_le(const std::string& path);

/// Field realization as a raw double array plus a JSON manifest
/// (<stem>.bin / <stem>.json).
void write_field(const std::string& stem, const FieldRealization& field,
                 std::uint64_t seed);
FieldRealization read_field(const std::string& stem);

/// Collects files created by a stage so they can be removed if it fails
/// partway; call release() once the stage committed.
class OutputTracker {
 public:
  void track(const std::string& path) { paths_.push_back(path); }
  void release() { paths_.clear(); }
  ~OutputTracker() {
    for (const auto& p : paths_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }

 private:
  std::vector<std::string> paths_;
};

}  // namespace io
}  // namespace stochlod
