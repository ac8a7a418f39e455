#pragma once

#include <string>
#include <vector>

#include "tape.hpp"

namespace dmir {

/// Versioned binary checkpoint: a free-form meta string (JSON by convention)
/// followed by named parameter tensors.
namespace checkpoint {

void save(const std::string& path, const std::string& meta,
          const std::vector<Parameter*>& params);

/// Loads values into matching parameters (by id). Throws if a parameter is
/// missing from the file or shapes disagree. Returns the stored meta string.
std::string load(const std::string& path, const std::vector<Parameter*>& params);

/// Reads just the meta string.
std::string read_meta(const std::string& path);

}  // namespace checkpoint

}  // namespace dmir
