#pragma once

#include <string>
#include <vector>

#include "regrasp/autodiff.hpp"
#include "regrasp/geometry.hpp"
#include "regrasp/image.hpp"

namespace regrasp::render {

/// Per-pixel rasterization record: the winning (mesh, face) under the
/// smaller-z-wins depth test with earlier-index tie breaking, plus the
/// barycentric weights used for texture sampling.
struct Coverage {
    int height = 0;
    int width = 0;
    std::vector<int> mesh_index;  // -1 = background
    std::vector<int> face_index;
    std::vector<double> w0, w1, w2;
    std::vector<double> depth;  // +inf where uncovered

    bool covered(int row, int col) const {
        return mesh_index[static_cast<std::size_t>(row) * width + col] >= 0;
    }
};

/// Orthographic rasterization of the transformed meshes onto an
/// image_size grid. Pixel centers sit at (col+0.5, row+0.5); model x maps
/// to columns, y to rows, z to depth. Boundary pixels follow the top-left
/// fill rule so shared edges are covered exactly once. Deterministic and
/// bit-identical for any thread count.
Coverage rasterize_coverage(const std::vector<geom::Mesh>& meshes,
                            const geom::SimilarityTransform& c2, int height, int width,
                            int threads = 1);

/// Trilinear corner weights of a barycentric sample in the 2x2x2 face grid,
/// ordered (a,b,c) row-major; shared by shading and the texture objective.
std::array<double, 8> texel_weights(double u, double v, double w);

img::RasterImage shade(const Coverage& coverage, const std::vector<img::FaceTexture>& textures);

img::RasterImage rasterize(const std::vector<geom::Mesh>& meshes,
                           const std::vector<img::FaceTexture>& textures,
                           const geom::SimilarityTransform& c2, int height, int width,
                           int threads = 1);

img::Mask render_mask(const std::vector<geom::Mesh>& meshes, const geom::SimilarityTransform& c2,
                      int height, int width, int threads = 1);

/// Sum over mask-selected pixels and channels of (rendered - target)^2,
/// linear in the texture values; the tape variables are flat (F*24)
/// tensors, one per mesh. Mask pixels with no coverage contribute the
/// constant target energy.
ad::Var texture_objective(ad::Tape& tape, const Coverage& coverage,
                          const std::vector<ad::Var>& texture_vars, const img::RasterImage& target,
                          const img::Mask& foreground);

struct FitTextureConfig {
    int steps = 300;
    double lr = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double init_value = 0.5;
    int threads = 1;
};

struct FitTextureResult {
    std::vector<img::FaceTexture> textures;
    double final_loss = 0.0;
    std::vector<std::string> warnings;  // one entry per invisible mesh
};

/// Projected gradient descent on the texture objective; values are clamped
/// to [0,1] after every step. Meshes with no visible pixels keep their
/// initialization and produce a warning record.
FitTextureResult fit_texture(const std::vector<geom::Mesh>& meshes,
                             const geom::SimilarityTransform& c2, const img::RasterImage& target,
                             const img::Mask& foreground, const FitTextureConfig& config);

}  // namespace regrasp::render
