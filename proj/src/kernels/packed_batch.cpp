#include <stdexcept>

#include "mesa/kernels.hpp"

namespace mesa::kernels {

PackedBatch::PackedBatch(std::span<const ar::ARSequence> sequences) : count_(sequences.size()) {
  if (sequences.empty()) throw std::invalid_argument("cannot pack an empty batch");
  length_ = sequences.front().length();
  dim_ = sequences.front().dim();
  for (const auto& s : sequences)
    if (s.length() != length_ || s.dim() != dim_)
      throw std::invalid_argument("batch sequences must share length and dimension");
  groups_ = (count_ + kLanes - 1) / kLanes;
  re_.assign(groups_ * length_ * dim_ * kLanes, 0.0);
  im_.assign(re_.size(), 0.0);
  for (std::size_t s = 0; s < count_; ++s) {
    const std::size_t g = s / kLanes, lane = s % kLanes;
    for (std::size_t k = 0; k < length_; ++k)
      for (std::size_t i = 0; i < dim_; ++i) {
        const auto v = sequences[s].at(k, i);
        re_[index(g, k, i) + lane] = v.real();
        im_[index(g, k, i) + lane] = v.imag();
      }
  }
}

}  // namespace mesa::kernels
