#include "regrasp/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace regrasp::render {

namespace {

struct ScreenVertex {
    double x, y, z;
};

double edge_fn(double ax, double ay, double bx, double by, double px, double py) {
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

// Top-left fill rule in y-down screen coordinates, applied to the directed
// edge (a -> b) of a triangle whose interior has positive edge values.
bool top_left(double ax, double ay, double bx, double by) {
    const double dy = by - ay;
    if (dy < 0.0) return true;              // left edge
    return dy == 0.0 && (bx - ax) > 0.0;    // top edge
}

void raster_rows(const std::vector<geom::Mesh>& meshes, const geom::SimilarityTransform& c2,
                 Coverage& cov, int row_begin, int row_end) {
    const int width = cov.width;
    for (std::size_t m = 0; m < meshes.size(); ++m) {
        const geom::Mesh& mesh = meshes[m];
        std::vector<ScreenVertex> sv(mesh.vertices.size());
        for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
            const geom::Vec3 p = c2.apply(mesh.vertices[i]);
            sv[i] = {p[0], p[1], p[2]};
        }
        for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& face = mesh.faces[f];
            ScreenVertex v0 = sv[static_cast<std::size_t>(face[0])];
            ScreenVertex v1 = sv[static_cast<std::size_t>(face[1])];
            ScreenVertex v2 = sv[static_cast<std::size_t>(face[2])];
            const double area2 = edge_fn(v0.x, v0.y, v1.x, v1.y, v2.x, v2.y);
            if (area2 == 0.0) continue;
            const double sign = area2 > 0.0 ? 1.0 : -1.0;

            const double min_x = std::min({v0.x, v1.x, v2.x});
            const double max_x = std::max({v0.x, v1.x, v2.x});
            const double min_y = std::min({v0.y, v1.y, v2.y});
            const double max_y = std::max({v0.y, v1.y, v2.y});
            const int col_begin = std::max(0, static_cast<int>(std::floor(min_x - 0.5)));
            const int col_end = std::min(width - 1, static_cast<int>(std::ceil(max_x - 0.5)));
            const int rb = std::max(row_begin, static_cast<int>(std::floor(min_y - 0.5)));
            const int re = std::min(row_end - 1, static_cast<int>(std::ceil(max_y - 0.5)));

            for (int r = rb; r <= re; ++r) {
                const double py = r + 0.5;
                for (int c = col_begin; c <= col_end; ++c) {
                    const double px = c + 0.5;
                    // Edge i is opposite vertex i; sign-normalized so the
                    // interior is positive.
                    const double e0 = sign * edge_fn(v1.x, v1.y, v2.x, v2.y, px, py);
                    const double e1 = sign * edge_fn(v2.x, v2.y, v0.x, v0.y, px, py);
                    const double e2 = sign * edge_fn(v0.x, v0.y, v1.x, v1.y, px, py);
                    bool in = true;
                    if (e0 < 0.0 || e1 < 0.0 || e2 < 0.0) in = false;
                    if (in && e0 == 0.0) {
                        in = sign > 0.0 ? top_left(v1.x, v1.y, v2.x, v2.y)
                                        : top_left(v2.x, v2.y, v1.x, v1.y);
                    }
                    if (in && e1 == 0.0) {
                        in = sign > 0.0 ? top_left(v2.x, v2.y, v0.x, v0.y)
                                        : top_left(v0.x, v0.y, v2.x, v2.y);
                    }
                    if (in && e2 == 0.0) {
                        in = sign > 0.0 ? top_left(v0.x, v0.y, v1.x, v1.y)
                                        : top_left(v1.x, v1.y, v0.x, v0.y);
                    }
                    if (!in) continue;
                    const double esum = e0 + e1 + e2;
                    if (esum <= 0.0) continue;
                    const double w0 = e0 / esum, w1 = e1 / esum, w2 = e2 / esum;
                    const double z = w0 * v0.z + w1 * v1.z + w2 * v2.z;
                    const std::size_t idx = static_cast<std::size_t>(r) * width + c;
                    if (z < cov.depth[idx]) {
                        cov.depth[idx] = z;
                        cov.mesh_index[idx] = static_cast<int>(m);
                        cov.face_index[idx] = static_cast<int>(f);
                        cov.w0[idx] = w0;
                        cov.w1[idx] = w1;
                        cov.w2[idx] = w2;
                    }
                }
            }
        }
    }
}

}  // namespace

Coverage rasterize_coverage(const std::vector<geom::Mesh>& meshes,
                            const geom::SimilarityTransform& c2, int height, int width,
                            int threads) {
    if (height <= 0 || width <= 0) throw std::invalid_argument("rasterize: non-positive image size");
    Coverage cov;
    cov.height = height;
    cov.width = width;
    const std::size_t n = static_cast<std::size_t>(height) * width;
    cov.mesh_index.assign(n, -1);
    cov.face_index.assign(n, -1);
    cov.w0.assign(n, 0.0);
    cov.w1.assign(n, 0.0);
    cov.w2.assign(n, 0.0);
    cov.depth.assign(n, std::numeric_limits<double>::infinity());

    const int t = std::max(1, threads);
    if (t == 1) {
        raster_rows(meshes, c2, cov, 0, height);
        return cov;
    }
    // Row-partitioned: every pixel is owned by exactly one thread, so the
    // result is identical to the serial pass.
    std::vector<std::thread> workers;
    const int chunk = (height + t - 1) / t;
    for (int k = 0; k < t; ++k) {
        const int rb = k * chunk;
        const int re = std::min(height, rb + chunk);
        if (rb >= re) break;
        workers.emplace_back([&, rb, re] { raster_rows(meshes, c2, cov, rb, re); });
    }
    for (auto& w : workers) w.join();
    return cov;
}

std::array<double, 8> texel_weights(double u, double v, double w) {
    std::array<double, 8> out;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            for (int c = 0; c < 2; ++c) {
                out[static_cast<std::size_t>((a * 2 + b) * 2 + c)] =
                    (a ? u : 1.0 - u) * (b ? v : 1.0 - v) * (c ? w : 1.0 - w);
            }
        }
    }
    return out;
}

img::RasterImage shade(const Coverage& coverage, const std::vector<img::FaceTexture>& textures) {
    img::RasterImage out;
    out.height = coverage.height;
    out.width = coverage.width;
    out.rgb.assign(static_cast<std::size_t>(out.height) * out.width * 3, 0.0);
    out.depth = coverage.depth;
    // Nested lerps of the form a + t*(b-a): exact for constant textures, so
    // a solid color renders to that color bit for bit.
    auto lerp = [](double t, double a, double b) { return a + t * (b - a); };
    for (std::size_t p = 0; p < coverage.mesh_index.size(); ++p) {
        const int m = coverage.mesh_index[p];
        if (m < 0) continue;
        const img::FaceTexture& tex = textures[static_cast<std::size_t>(m)];
        const std::size_t f = static_cast<std::size_t>(coverage.face_index[p]);
        const double u = coverage.w0[p], v = coverage.w1[p], w = coverage.w2[p];
        for (int ch = 0; ch < 3; ++ch) {
            auto texel = [&](int a, int b, int c) { return tex.at(f, a, b, c, ch); };
            const double c00 = lerp(w, texel(0, 0, 0), texel(0, 0, 1));
            const double c01 = lerp(w, texel(0, 1, 0), texel(0, 1, 1));
            const double c10 = lerp(w, texel(1, 0, 0), texel(1, 0, 1));
            const double c11 = lerp(w, texel(1, 1, 0), texel(1, 1, 1));
            const double c0 = lerp(v, c00, c01);
            const double c1 = lerp(v, c10, c11);
            out.rgb[p * 3 + static_cast<std::size_t>(ch)] = lerp(u, c0, c1);
        }
    }
    return out;
}

img::RasterImage rasterize(const std::vector<geom::Mesh>& meshes,
                           const std::vector<img::FaceTexture>& textures,
                           const geom::SimilarityTransform& c2, int height, int width, int threads) {
    if (meshes.size() != textures.size()) {
        throw std::invalid_argument("rasterize: one texture per mesh required");
    }
    for (std::size_t m = 0; m < meshes.size(); ++m) {
        if (textures[m].face_count != meshes[m].face_count()) {
            throw std::invalid_argument("rasterize: texture face count mismatch for mesh " +
                                        std::to_string(m));
        }
    }
    return shade(rasterize_coverage(meshes, c2, height, width, threads), textures);
}

img::Mask render_mask(const std::vector<geom::Mesh>& meshes, const geom::SimilarityTransform& c2,
                      int height, int width, int threads) {
    const Coverage cov = rasterize_coverage(meshes, c2, height, width, threads);
    img::Mask mask = img::Mask::zeros(height, width);
    for (std::size_t p = 0; p < cov.mesh_index.size(); ++p) mask.values[p] = cov.mesh_index[p] >= 0 ? 1 : 0;
    return mask;
}

// ---- texture objective ---------------------------------------------------------

ad::Var texture_objective(ad::Tape& tape, const Coverage& coverage,
                          const std::vector<ad::Var>& texture_vars, const img::RasterImage& target,
                          const img::Mask& foreground) {
    if (target.height != coverage.height || target.width != coverage.width ||
        foreground.height != coverage.height || foreground.width != coverage.width) {
        throw std::invalid_argument("texture_objective: dimension mismatch");
    }
    const std::size_t n_meshes = texture_vars.size();
    std::vector<std::vector<std::size_t>> indices(n_meshes);
    std::vector<std::vector<double>> weights(n_meshes);
    std::vector<std::vector<double>> targets(n_meshes);
    double constant = 0.0;

    for (std::size_t p = 0; p < coverage.mesh_index.size(); ++p) {
        if (!foreground.values[p]) continue;
        const int m = coverage.mesh_index[p];
        if (m < 0) {
            // Foreground target with nothing rendered under it.
            for (int ch = 0; ch < 3; ++ch) {
                const double t = target.rgb[p * 3 + static_cast<std::size_t>(ch)];
                constant += t * t;
            }
            continue;
        }
        const std::size_t f = static_cast<std::size_t>(coverage.face_index[p]);
        const auto tw = texel_weights(coverage.w0[p], coverage.w1[p], coverage.w2[p]);
        auto& idx = indices[static_cast<std::size_t>(m)];
        auto& wts = weights[static_cast<std::size_t>(m)];
        auto& tgt = targets[static_cast<std::size_t>(m)];
        for (int ch = 0; ch < 3; ++ch) {
            for (int k = 0; k < 8; ++k) {
                idx.push_back(f * img::FaceTexture::kPerFace + static_cast<std::size_t>(k * 3 + ch));
                wts.push_back(tw[static_cast<std::size_t>(k)]);
            }
            tgt.push_back(target.rgb[p * 3 + static_cast<std::size_t>(ch)]);
        }
    }

    ad::Var total = tape.scalar(constant);
    for (std::size_t m = 0; m < n_meshes; ++m) {
        if (indices[m].empty()) continue;
        const std::size_t rows = targets[m].size();
        ad::Var gathered = ad::gather(texture_vars[m], indices[m]);
        ad::Var weighted = ad::mul(gathered, tape.constant(ad::Tensor({indices[m].size()}, weights[m])));
        ad::Var sums = ad::matmul(ad::reshape(weighted, {rows, 8}),
                                  tape.constant(ad::Tensor::ones({8, 1})));
        ad::Var diff = ad::sub(ad::reshape(sums, {rows}),
                               tape.constant(ad::Tensor({rows}, targets[m])));
        total = ad::add(total, ad::sum_sq(diff));
    }
    return total;
}

// ---- texture fitting -----------------------------------------------------------

FitTextureResult fit_texture(const std::vector<geom::Mesh>& meshes,
                             const geom::SimilarityTransform& c2, const img::RasterImage& target,
                             const img::Mask& foreground, const FitTextureConfig& config) {
    target.validate();
    foreground.validate();
    if (target.height != foreground.height || target.width != foreground.width) {
        throw std::invalid_argument("fit_texture: target and mask dimensions differ");
    }
    const Coverage cov =
        rasterize_coverage(meshes, c2, target.height, target.width, config.threads);

    std::vector<std::size_t> visible(meshes.size(), 0);
    for (std::size_t p = 0; p < cov.mesh_index.size(); ++p) {
        if (cov.mesh_index[p] >= 0 && foreground.values[p]) {
            ++visible[static_cast<std::size_t>(cov.mesh_index[p])];
        }
    }

    FitTextureResult result;
    std::vector<ad::Tensor> tex(meshes.size());
    for (std::size_t m = 0; m < meshes.size(); ++m) {
        tex[m] = ad::Tensor::full({meshes[m].face_count() * img::FaceTexture::kPerFace},
                                  config.init_value);
        if (visible[m] == 0) {
            result.warnings.push_back("mesh " + std::to_string(m) +
                                      " has no visible pixels; texture left at initialization");
        }
    }

    // Adam with projection onto [0,1] after each step.
    std::vector<std::vector<double>> m1(meshes.size()), m2(meshes.size());
    for (std::size_t m = 0; m < meshes.size(); ++m) {
        m1[m].assign(tex[m].size(), 0.0);
        m2[m].assign(tex[m].size(), 0.0);
    }
    double final_loss = 0.0;
    for (int step = 0; step <= config.steps; ++step) {
        ad::Tape tape;
        std::vector<ad::Var> vars;
        for (std::size_t m = 0; m < meshes.size(); ++m) {
            ad::Tensor t = tex[m];
            t.set_requires_grad(visible[m] > 0);
            vars.push_back(visible[m] > 0 ? tape.leaf(std::move(t)) : tape.constant(std::move(t)));
        }
        ad::Var loss = texture_objective(tape, cov, vars, target, foreground);
        final_loss = loss.scalar_value();
        if (step == config.steps) break;
        ad::GradientMap grads = tape.backward(loss);
        const double t_step = step + 1;
        const double c1 = 1.0 - std::pow(config.beta1, t_step);
        const double c2n = 1.0 - std::pow(config.beta2, t_step);
        for (std::size_t m = 0; m < meshes.size(); ++m) {
            if (visible[m] == 0) continue;
            const ad::Tensor& g = grads.at(vars[m]);
            auto& data = tex[m].mutable_data();
            for (std::size_t k = 0; k < data.size(); ++k) {
                m1[m][k] = config.beta1 * m1[m][k] + (1.0 - config.beta1) * g[k];
                m2[m][k] = config.beta2 * m2[m][k] + (1.0 - config.beta2) * g[k] * g[k];
                data[k] -= config.lr * (m1[m][k] / c1) / (std::sqrt(m2[m][k] / c2n) + 1e-8);
                data[k] = std::clamp(data[k], 0.0, 1.0);
            }
        }
    }

    for (std::size_t m = 0; m < meshes.size(); ++m) {
        img::FaceTexture t;
        t.face_count = meshes[m].face_count();
        t.values = tex[m].data();
        t.clamp01();
        result.textures.push_back(std::move(t));
    }
    result.final_loss = final_loss;
    return result;
}

}  // namespace regrasp::render
