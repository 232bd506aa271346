#include "spikegan/image_io.hpp"

#include <fstream>

#include "spikegan/data.hpp"
#include "spikegan/errors.hpp"

namespace spikegan {

void write_ppm(const std::string& path, const Tensor<uint8_t>& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw ShapeError("write_ppm expects [1|3,H,W], got " + shape_str(image.shape()));
    const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write image: " + path);
    f << "P6\n" << w << ' ' << h << "\n255\n";
    std::vector<uint8_t> row(static_cast<size_t>(3 * w));
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x)
            for (int64_t k = 0; k < 3; ++k)
                row[static_cast<size_t>(3 * x + k)] = image[(c == 1 ? 0 : k) * h * w + y * w + x];
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw DataError("image write failed: " + path);
}

Tensor<uint8_t> make_grid(const Tensor<float>& images, int64_t rows, int64_t cols) {
    if (images.rank() != 4) throw ShapeError("make_grid expects [N,C,H,W], got " + shape_str(images.shape()));
    if (rows < 1 || cols < 1) throw ConfigError("make_grid: rows/cols must be >= 1");
    const int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    if (n > rows * cols) throw ConfigError("make_grid: grid too small for " + std::to_string(n) + " images");
    const Tensor<uint8_t> bytes = denormalize(images);
    Tensor<uint8_t> canvas({c, rows * h, cols * w});
    for (int64_t i = 0; i < n; ++i) {
        const int64_t gy = (i / cols) * h, gx = (i % cols) * w;
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    canvas[(ci * rows * h + gy + y) * cols * w + gx + x] = bytes[((i * c + ci) * h + y) * w + x];
    }
    return canvas;
}

Tensor<uint8_t> make_strip(const std::vector<Tensor<float>>& frames) {
    if (frames.empty()) throw ConfigError("make_strip: no frames");
    const Shape& s0 = frames[0].shape();
    if (s0.size() != 3) throw ShapeError("make_strip expects [C,H,W] frames, got " + shape_str(s0));
    const int64_t c = s0[0], h = s0[1], w = s0[2];
    const int64_t t_total = static_cast<int64_t>(frames.size());
    Tensor<uint8_t> strip({c, h, t_total * w});
    for (int64_t t = 0; t < t_total; ++t) {
        if (frames[static_cast<size_t>(t)].shape() != s0) throw ShapeError("make_strip: mixed frame shapes");
        const Tensor<uint8_t> bytes = denormalize(frames[static_cast<size_t>(t)]);
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x)
                    strip[(ci * h + y) * t_total * w + t * w + x] = bytes[(ci * h + y) * w + x];
    }
    return strip;
}

}  // namespace spikegan
