#include "copydet/synth.hpp"

#include <algorithm>
#include <cmath>

#include "copydet/errors.hpp"
#include "copydet/rng.hpp"

namespace copydet::imaging {

namespace {

// stateless lattice hash -> [0, 1)
float lattice(uint64_t seed, int ix, int iy, int c) {
    uint64_t z = seed ^ (static_cast<uint64_t>(static_cast<uint32_t>(ix)) * 0x9e3779b97f4a7c15ULL) ^
                 (static_cast<uint64_t>(static_cast<uint32_t>(iy)) * 0xbf58476d1ce4e5b9ULL) ^
                 (static_cast<uint64_t>(static_cast<uint32_t>(c)) * 0x94d049bb133111ebULL);
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return static_cast<float>(z >> 40) * (1.0f / 16777216.0f);
}

float value_noise(uint64_t seed, float x, float y, int cell, int c) {
    float fx = x / static_cast<float>(cell);
    float fy = y / static_cast<float>(cell);
    int ix = static_cast<int>(std::floor(fx));
    int iy = static_cast<int>(std::floor(fy));
    float tx = fx - static_cast<float>(ix);
    float ty = fy - static_cast<float>(iy);
    float v00 = lattice(seed, ix, iy, c), v10 = lattice(seed, ix + 1, iy, c);
    float v01 = lattice(seed, ix, iy + 1, c), v11 = lattice(seed, ix + 1, iy + 1, c);
    return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

} // namespace

ImageBuf synth_texture(int w, int h, uint64_t seed) {
    if (w < 8 || h < 8) throw ParamOutOfRange("synth_texture: size must be >= 8");
    Rng rng{seed};
    std::vector<float> acc(static_cast<size_t>(w) * h * 3);

    uint64_t noise_seed = rng.next_u64();
    float base[3];
    for (float& b : base) b = static_cast<float>(rng.uniform_real(55.0, 200.0));
    // per-texture oriented grain: distinct dominant gradient direction per seed
    Rng grain{noise_seed ^ 0x57454156ull};
    float theta = static_cast<float>(grain.uniform_real(0.0, 3.14159265));
    float ct = std::cos(theta), st = std::sin(theta);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float xr = (ct * static_cast<float>(x) + st * static_cast<float>(y)) / 6.0f;
            float yr = -st * static_cast<float>(x) + ct * static_cast<float>(y);
            for (int c = 0; c < 3; ++c) {
                float v = base[c];
                v += 55.0f * (value_noise(noise_seed, static_cast<float>(x),
                                          static_cast<float>(y), 64, c) - 0.5f) * 2.0f;
                v += 25.0f * (value_noise(noise_seed + 1, static_cast<float>(x),
                                          static_cast<float>(y), 16, c) - 0.5f) * 2.0f;
                v += 20.0f * (value_noise(noise_seed + 2, static_cast<float>(x),
                                          static_cast<float>(y), 5, c) - 0.5f) * 2.0f;
                v += 44.0f * (value_noise(noise_seed + 3, xr, yr, 4, c) - 0.5f) * 2.0f;
                acc[(static_cast<size_t>(y) * w + x) * 3 + c] = v;
            }
        }

    // translucent feathered rectangles: corner structure for the keypoint
    // detector without the razor edges of an actual paste
    int nrect = static_cast<int>(rng.uniform_int(5, 9));
    for (int r = 0; r < nrect; ++r) {
        int rw = static_cast<int>(rng.uniform_int(w / 8, w / 2));
        int rh = static_cast<int>(rng.uniform_int(h / 8, h / 2));
        int rx = static_cast<int>(rng.uniform_int(0, w - rw));
        int ry = static_cast<int>(rng.uniform_int(0, h - rh));
        float alpha = static_cast<float>(rng.uniform_real(0.15, 0.4));
        float feather = static_cast<float>(rng.uniform_int(6, 12));
        feather = std::min({feather, rw / 4.0f, rh / 4.0f});
        feather = std::max(feather, 1.0f);
        float col[3];
        for (float& cc : col) cc = static_cast<float>(rng.uniform_real(20.0, 235.0));
        for (int y = ry; y < ry + rh; ++y) {
            float fy = std::min(1.0f, std::min(y - ry + 1, ry + rh - y) / feather);
            for (int x = rx; x < rx + rw; ++x) {
                float fx = std::min(1.0f, std::min(x - rx + 1, rx + rw - x) / feather);
                float a = alpha * fx * fy;
                for (int c = 0; c < 3; ++c) {
                    float& v = acc[(static_cast<size_t>(y) * w + x) * 3 + c];
                    v = (1 - a) * v + a * col[c];
                }
            }
        }
    }

    // soft blobs at assorted scales feed the DoG detector
    int nblob = 30 + static_cast<int>(static_cast<int64_t>(w) * h / 4000);
    for (int b = 0; b < nblob; ++b) {
        float cx = static_cast<float>(rng.uniform_real(0.0, w));
        float cy = static_cast<float>(rng.uniform_real(0.0, h));
        float rad = static_cast<float>(rng.uniform_real(3.0, 24.0));
        float amp[3];
        for (float& a : amp) a = static_cast<float>(rng.uniform_real(-90.0, 90.0));
        float inv2s2 = 1.0f / (2.0f * (rad * 0.55f) * (rad * 0.55f));
        int x0 = std::max(0, static_cast<int>(cx - 2 * rad));
        int x1 = std::min(w - 1, static_cast<int>(cx + 2 * rad));
        int y0 = std::max(0, static_cast<int>(cy - 2 * rad));
        int y1 = std::min(h - 1, static_cast<int>(cy + 2 * rad));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                float dx = static_cast<float>(x) - cx;
                float dy = static_cast<float>(y) - cy;
                float g = std::exp(-(dx * dx + dy * dy) * inv2s2);
                if (g < 0.01f) continue;
                for (int c = 0; c < 3; ++c)
                    acc[(static_cast<size_t>(y) * w + x) * 3 + c] += amp[c] * g;
            }
    }

    ImageBuf out(w, h, 3);
    for (size_t i = 0; i < acc.size(); ++i)
        out.data[i] = static_cast<uint8_t>(std::clamp(std::lround(acc[i]), 0L, 255L));
    return out;
}

} // namespace copydet::imaging
