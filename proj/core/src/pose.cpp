#include "d3pr/pose.hpp"

#include <cmath>
#include <string>

#include "d3pr/errors.hpp"

namespace d3pr {

template <int DA, int DB>
void require_same_shape(const PoseSeq<DA>& a, const PoseSeq<DB>& b, const char* context) {
  if (a.frames() != b.frames() || a.joints() != b.joints()) {
    throw ShapeError(std::string(context) + ": shape mismatch (" + std::to_string(a.frames()) + "x" +
                     std::to_string(a.joints()) + " vs " + std::to_string(b.frames()) + "x" +
                     std::to_string(b.joints()) + ")");
  }
}

template <int Dim>
void require_finite(const PoseSeq<Dim>& x, const char* what) {
  for (std::size_t n = 0; n < x.frames(); ++n) {
    for (std::size_t j = 0; j < x.joints(); ++j) {
      for (int c = 0; c < Dim; ++c) {
        if (!std::isfinite(x(n, j, c))) {
          throw DataError(std::string(what) + ": non-finite value at frame " + std::to_string(n) +
                          ", joint " + std::to_string(j));
        }
      }
    }
  }
}

template void require_same_shape<3, 3>(const PoseSeq3D&, const PoseSeq3D&, const char*);
template void require_same_shape<2, 3>(const PoseSeq2D&, const PoseSeq3D&, const char*);
template void require_same_shape<3, 2>(const PoseSeq3D&, const PoseSeq2D&, const char*);
template void require_same_shape<2, 2>(const PoseSeq2D&, const PoseSeq2D&, const char*);
template void require_finite<2>(const PoseSeq2D&, const char*);
template void require_finite<3>(const PoseSeq3D&, const char*);

}  // namespace d3pr
