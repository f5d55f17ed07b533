#pragma once

#include <utility>

#include "regrasp/geometry.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/image.hpp"

namespace regrasp::comp {

/// Rigidly translate the new hand and its attached object so the new wrist
/// point lands on the target wrist point. Returns (hand, object).
std::pair<geom::Mesh, geom::Mesh> align_wrist(const hand::HandModel& model,
                                              const geom::Mesh& target_hand,
                                              const geom::Mesh& new_hand,
                                              const geom::Mesh& attached_object);

struct InpaintConfig {
    // Max per-pixel change between sweeps. The default is tighter than the
    // 1e-4 contract because the Jacobi change underestimates the distance
    // to the harmonic solution by the contraction factor.
    double tolerance = 1e-5;
    int max_iterations = 20000;
};

/// Harmonic fill of the masked region by Jacobi sweeps over (1-s) . x:
/// masked pixels relax toward the average of their 4-neighbors with the
/// surrounding unmasked pixels as fixed boundary data. Unmasked pixels are
/// returned bit-exactly unchanged.
img::RasterImage inpaint_background(const img::RasterImage& image, const img::Mask& mask,
                                    const InpaintConfig& config = {});

/// Per-pixel hard selection: foreground where the mask is 1, background
/// elsewhere. Bit-exact in both sources.
img::RasterImage merge(const img::RasterImage& foreground, const img::RasterImage& background,
                       const img::Mask& mask);

}  // namespace regrasp::comp
