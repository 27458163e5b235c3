#include "cslab/numerics/checkpoint.hpp"

#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cslab/common/errors.hpp"

namespace cslab::nn {

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  if (ckpt.metadata.find('\n') != std::string::npos) {
    throw ValidationError("checkpoint metadata must be a single line");
  }
  os << kCheckpointMagic << '\n' << ckpt.metadata << '\n' << ckpt.tensors.size() << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw ValidationError("checkpoint tensor names may not contain whitespace: '" + name + "'");
    }
    os << name << ' ' << t.rank();
    for (std::size_t d : t.shape()) os << ' ' << d;
    os << '\n';
    for (std::size_t i = 0; i < t.size(); ++i) os << (i ? " " : "") << t[i];
    os << '\n';
  }
}

Checkpoint read_checkpoint(std::istream& is) {
  std::string magic;
  if (!std::getline(is, magic) || magic != kCheckpointMagic) {
    throw ValidationError("not a checkpoint (bad magic header)");
  }
  Checkpoint ckpt;
  std::getline(is, ckpt.metadata);
  std::size_t count = 0;
  if (!(is >> count)) throw ValidationError("checkpoint: missing tensor count");
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    std::size_t rank = 0;
    if (!(is >> name >> rank) || rank > 2) throw ValidationError("checkpoint: bad tensor header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      if (!(is >> d)) throw ValidationError("checkpoint: bad shape for " + name);
    }
    Tensor t(shape);
    for (double& v : t.values()) {
      if (!(is >> v)) throw ValidationError("checkpoint: truncated values for " + name);
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    write_checkpoint(os, ckpt);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifactError(path.string());
  return read_checkpoint(is);
}

Checkpoint capture(std::span<const Parameter* const> params, std::string metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const Parameter* p : params) ckpt.tensors.emplace_back(p->name, p->value);
  return ckpt;
}

void restore(std::span<Parameter* const> params, const Checkpoint& ckpt) {
  for (Parameter* p : params) {
    const Tensor* t = ckpt.find(p->name);
    if (!t) throw ValidationError("checkpoint has no tensor named '" + p->name + "'");
    if (t->shape() != p->value.shape()) {
      throw ValidationError("checkpoint shape mismatch for '" + p->name + "': " +
                            t->shape_string() + " vs " + p->value.shape_string());
    }
    p->value = *t;
    p->zero_grad();
  }
}

}  // namespace cslab::nn
