#include "regrasp/compositor.hpp"

#include <cmath>
#include <stdexcept>

namespace regrasp::comp {

using geom::Vec3;
using geom::operator-;
using geom::operator+;

std::pair<geom::Mesh, geom::Mesh> align_wrist(const hand::HandModel& model,
                                              const geom::Mesh& target_hand,
                                              const geom::Mesh& new_hand,
                                              const geom::Mesh& attached_object) {
    if (target_hand.vertex_count() != model.vertex_count() ||
        new_hand.vertex_count() != model.vertex_count()) {
        throw std::invalid_argument("align_wrist: hand meshes do not match the model");
    }
    const Vec3 delta = hand::wrist_point(model, target_hand) - hand::wrist_point(model, new_hand);
    geom::Mesh hand_out = new_hand;
    geom::Mesh object_out = attached_object;
    for (Vec3& p : hand_out.vertices) p = p + delta;
    for (Vec3& p : object_out.vertices) p = p + delta;
    return {std::move(hand_out), std::move(object_out)};
}

img::RasterImage inpaint_background(const img::RasterImage& image, const img::Mask& mask,
                                    const InpaintConfig& config) {
    image.validate();
    mask.validate();
    if (image.height != mask.height || image.width != mask.width) {
        throw std::invalid_argument("inpaint_background: image and mask dimensions differ");
    }
    if (mask.count() == mask.values.size()) {
        throw std::invalid_argument("inpaint_background: mask covers the whole image, no boundary data");
    }

    const int h = image.height, w = image.width;
    img::RasterImage out = image;
    std::vector<std::size_t> masked;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (mask.values[p]) {
            masked.push_back(p);
            out.rgb[p * 3] = 0.0;  // start from (1-s) . x
            out.rgb[p * 3 + 1] = 0.0;
            out.rgb[p * 3 + 2] = 0.0;
        }
    }
    if (masked.empty()) return out;

    std::vector<double> next(masked.size() * 3);
    for (int it = 0; it < config.max_iterations; ++it) {
        double max_change = 0.0;
        for (std::size_t k = 0; k < masked.size(); ++k) {
            const std::size_t p = masked[k];
            const int r = static_cast<int>(p) / w;
            const int c = static_cast<int>(p) % w;
            double acc[3] = {0.0, 0.0, 0.0};
            int n = 0;
            auto take = [&](int rr, int cc) {
                if (rr < 0 || rr >= h || cc < 0 || cc >= w) return;
                const std::size_t q = static_cast<std::size_t>(rr) * w + cc;
                acc[0] += out.rgb[q * 3];
                acc[1] += out.rgb[q * 3 + 1];
                acc[2] += out.rgb[q * 3 + 2];
                ++n;
            };
            take(r - 1, c);
            take(r + 1, c);
            take(r, c - 1);
            take(r, c + 1);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = n > 0 ? acc[ch] / n : 0.0;
                next[k * 3 + static_cast<std::size_t>(ch)] = v;
                max_change = std::max(max_change, std::fabs(v - out.rgb[p * 3 + static_cast<std::size_t>(ch)]));
            }
        }
        for (std::size_t k = 0; k < masked.size(); ++k) {
            const std::size_t p = masked[k];
            out.rgb[p * 3] = next[k * 3];
            out.rgb[p * 3 + 1] = next[k * 3 + 1];
            out.rgb[p * 3 + 2] = next[k * 3 + 2];
        }
        if (max_change < config.tolerance) break;
    }
    return out;
}

img::RasterImage merge(const img::RasterImage& foreground, const img::RasterImage& background,
                       const img::Mask& mask) {
    if (foreground.height != background.height || foreground.width != background.width ||
        foreground.height != mask.height || foreground.width != mask.width) {
        throw std::invalid_argument("merge: dimension mismatch");
    }
    img::RasterImage out;
    out.height = foreground.height;
    out.width = foreground.width;
    out.rgb.resize(foreground.rgb.size());
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        const img::RasterImage& src = mask.values[p] ? foreground : background;
        out.rgb[p * 3] = src.rgb[p * 3];
        out.rgb[p * 3 + 1] = src.rgb[p * 3 + 1];
        out.rgb[p * 3 + 2] = src.rgb[p * 3 + 2];
    }
    return out;
}

}  // namespace regrasp::comp
