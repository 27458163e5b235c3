#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cslab/numerics/tape.hpp"

namespace cslab::nn {

inline constexpr const char* kCheckpointMagic = "CSLAB-CKPT-1";

// Text container: magic line, one metadata line (free-form, typically JSON),
// then for each tensor "name rank d0 d1 ..." followed by its values printed
// with 17 significant digits so a save/load cycle is exact.
struct Checkpoint {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(std::span<const Parameter* const> params, std::string metadata = {});
// Copies values by name; throws ValidationError on a missing name or a shape
// mismatch.
void restore(std::span<Parameter* const> params, const Checkpoint& ckpt);

}  // namespace cslab::nn
