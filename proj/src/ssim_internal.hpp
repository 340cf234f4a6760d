#pragma once

#include "lumina/image.hpp"

namespace lumina::detail {

/// Windowed first and second moments over the valid region of two single-channel images.
struct LocalMoments {
  Image mu_x, mu_y, var_x, var_y, cov;
};

LocalMoments local_moments(const Image& x, const Image& y, const Kernel2D& window);

}  // namespace lumina::detail
