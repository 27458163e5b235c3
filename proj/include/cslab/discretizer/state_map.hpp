#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace cslab::disc {

using Code = std::vector<int>;

// Dense ids for observed codes, in order of first appearance.
class DiscreteStateMap {
 public:
  // Returns the id of `code`, adding it when new; increments its count.
  int insert(const Code& code);
  void add_count(int id, long long n) { counts_.at(std::size_t(id)) += n; }
  // -1 when the code was never inserted.
  int find(const Code& code) const;

  std::size_t size() const { return codes_.size(); }
  const Code& code(int id) const { return codes_.at(std::size_t(id)); }
  const std::vector<Code>& codes() const { return codes_; }
  const std::vector<long long>& counts() const { return counts_; }

  // Rebuilds a map from stored codes and counts (ids follow the order given).
  static DiscreteStateMap from_codes(std::vector<Code> codes, std::vector<long long> counts);

 private:
  std::map<Code, int> index_;
  std::vector<Code> codes_;
  std::vector<long long> counts_;
};

std::string format_code(std::span<const int> code);

}  // namespace cslab::disc
