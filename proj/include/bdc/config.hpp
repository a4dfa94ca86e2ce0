#pragma once

#include <string>

#include "bdc/occtoy.hpp"

namespace bdc {

/// Flat key=value run configuration with [section] headers. Unknown sections
/// or keys are hard errors; the FNV-1a hash of the raw text is echoed into
/// every report for reproducibility.
struct RunConfig {
  toy::NetSpec spec;
  toy::TrainConfig train;
  std::string csv_path;
  std::string checkpoint_path;
  std::string config_hash;

  static RunConfig parse_text(const std::string& text);
  static RunConfig parse_file(const std::string& path);
};

std::string fnv1a_hex(const std::string& text);

}  // namespace bdc
