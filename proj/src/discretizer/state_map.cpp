#include "cslab/discretizer/state_map.hpp"

#include "cslab/common/errors.hpp"

namespace cslab::disc {

int DiscreteStateMap::insert(const Code& code) {
  auto [it, added] = index_.try_emplace(code, int(codes_.size()));
  if (added) {
    codes_.push_back(code);
    counts_.push_back(0);
  }
  ++counts_[std::size_t(it->second)];
  return it->second;
}

int DiscreteStateMap::find(const Code& code) const {
  const auto it = index_.find(code);
  return it == index_.end() ? -1 : it->second;
}

DiscreteStateMap DiscreteStateMap::from_codes(std::vector<Code> codes, std::vector<long long> counts) {
  if (codes.size() != counts.size()) throw ValidationError("state map: codes and counts differ in size");
  DiscreteStateMap m;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (counts[i] < 0) throw ValidationError("state map: negative count");
    if (!m.index_.try_emplace(codes[i], int(i)).second) {
      throw ValidationError("state map: duplicate code " + format_code(codes[i]));
    }
  }
  m.codes_ = std::move(codes);
  m.counts_ = std::move(counts);
  return m;
}

std::string format_code(std::span<const int> code) {
  std::string out;
  for (std::size_t i = 0; i < code.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(code[i]);
  }
  return out;
}

}  // namespace cslab::disc
