#include "svio/state.hpp"

#include <algorithm>

namespace svio {

std::size_t SlidingWindowState::clone_index(std::int64_t clone_id) const {
  for (std::size_t i = 0; i < clones.size(); ++i) {
    if (clones[i].id == clone_id) return i;
  }
  throw UnknownClone("no clone with id " + std::to_string(clone_id));
}

const ClonePose& SlidingWindowState::clone(std::int64_t clone_id) const {
  return clones[clone_index(clone_id)];
}

void SlidingWindowState::augment(std::int64_t new_clone_id, bool is_keyframe) {
  const int old_dim = dim();

  ClonePose clone;
  clone.id = new_clone_id;
  clone.q = imu.q;
  clone.p = imu.p;
  clone.t = imu.t;
  clone.is_keyframe = is_keyframe;
  clones.push_back(clone);

  // The Jacobian of the clone error w.r.t. the state error is [I6 0], so the
  // new rows/cols are copies of the (theta, p) rows/cols of P.
  MatX grown = MatX::Zero(old_dim + 6, old_dim + 6);
  grown.topLeftCorner(old_dim, old_dim) = P;
  grown.block(old_dim, 0, 6, old_dim) = P.topRows(6);
  grown.block(0, old_dim, old_dim, 6) = P.leftCols(6);
  grown.block<6, 6>(old_dim, old_dim) = P.topLeftCorner<6, 6>();
  P = std::move(grown);
  symmetrize(P);
}

void SlidingWindowState::marginalize_clone(std::int64_t clone_id) {
  const std::size_t idx = clone_index(clone_id);
  const int off = clone_offset(idx);
  const int old_dim = dim();
  const int tail = old_dim - off - 6;

  MatX reduced(old_dim - 6, old_dim - 6);
  reduced.topLeftCorner(off, off) = P.topLeftCorner(off, off);
  if (tail > 0) {
    reduced.topRightCorner(off, tail) = P.block(0, off + 6, off, tail);
    reduced.bottomLeftCorner(tail, off) = P.block(off + 6, 0, tail, off);
    reduced.bottomRightCorner(tail, tail) = P.block(off + 6, off + 6, tail, tail);
  }
  P = std::move(reduced);
  clones.erase(clones.begin() + static_cast<std::ptrdiff_t>(idx));
  symmetrize(P);
}

void SlidingWindowState::apply_correction(const VecX& dx) {
  if (dx.size() != dim()) {
    throw DimensionMismatch("correction size " + std::to_string(dx.size()) +
                            " vs state dim " + std::to_string(dim()));
  }
  imu.q = quat_error_compose(dx.segment<3>(0), imu.q);
  imu.p += dx.segment<3>(3);
  imu.v += dx.segment<3>(6);
  imu.ba += dx.segment<3>(9);
  imu.bg += dx.segment<3>(12);
  for (std::size_t i = 0; i < clones.size(); ++i) {
    const int off = clone_offset(i);
    clones[i].q = quat_error_compose(dx.segment<3>(off), clones[i].q);
    clones[i].p += dx.segment<3>(off + 3);
  }
}

}  // namespace svio
