#pragma once

#include "clipsplat/splat/gaussian_set.hpp"

namespace clipsplat::splat {

/// Parameter-wise blend of two models that share a base (same count, modality, SH degree).
///
/// Raw parameters are blended as (1 - t) a + t b, so t = 0 and t = 1 reproduce the endpoints
/// bit-exactly. Quaternions are aligned to the same hemisphere, blended and renormalized.
/// Throws IncompatibleModelsError on layout mismatch and DomainError for t outside [0, 1].
GaussianSet interpolate(const GaussianSet& a, const GaussianSet& b, double t);

}  // namespace clipsplat::splat
