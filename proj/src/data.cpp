#include "projcgan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "projcgan/errors.hpp"

namespace projcgan {

int Dataset::size() const {
    return is_image() ? images.extent(0) : (vectors.numel() > 0 ? vectors.extent(0) : 0);
}

std::vector<int> Dataset::label_histogram() const {
    std::vector<int> h(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
        if (y < 0 || y >= num_classes)
            throw ValueError("label " + std::to_string(y) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        ++h[static_cast<std::size_t>(y)];
    }
    return h;
}

SynthMode synth_mode_from_string(const std::string& s) {
    if (s == "vector2d") return SynthMode::vector2d;
    if (s == "blob_images") return SynthMode::blob_images;
    throw ValueError("unknown synthetic mode '" + s + "'");
}

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

Dataset make_vector2d(Rng& rng, int num_classes, int n_per_class) {
    Dataset d;
    d.num_classes = num_classes;
    d.split = "synth";
    const int n = num_classes * n_per_class;
    d.vectors = TensorF({n, 2});
    d.labels.resize(static_cast<std::size_t>(n));
    for (int c = 0; c < num_classes; ++c) {
        const double a = kTau * c / num_classes;
        for (int i = 0; i < n_per_class; ++i) {
            const int row = c * n_per_class + i;
            d.vectors.at(row, 0) = static_cast<float>(std::cos(a) + 0.1 * rng.gaussian());
            d.vectors.at(row, 1) = static_cast<float>(std::sin(a) + 0.1 * rng.gaussian());
            d.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    return d;
}

Dataset make_blob_images(Rng& rng, int num_classes, int n_per_class, int img) {
    Dataset d;
    d.num_classes = num_classes;
    d.split = "synth";
    const int n = num_classes * n_per_class;
    d.images = TensorF({n, 3, img, img});
    d.labels.resize(static_cast<std::size_t>(n));
    const double radius = img / 6.0;
    for (int c = 0; c < num_classes; ++c) {
        const double a = kTau * c / num_classes;
        const double cy = img / 2.0 + (img / 4.0) * std::sin(a);
        const double cx = img / 2.0 + (img / 4.0) * std::cos(a);
        double w[3];
        for (int k = 0; k < 3; ++k) w[k] = 0.5 + 0.5 * std::cos(kTau * (double(c) / num_classes - k / 3.0));
        for (int s = 0; s < n_per_class; ++s) {
            const int row = c * n_per_class + s;
            d.labels[static_cast<std::size_t>(row)] = c;
            for (int k = 0; k < 3; ++k)
                for (int i = 0; i < img; ++i)
                    for (int j = 0; j < img; ++j) {
                        const double dist =
                            std::sqrt((i - cy) * (i - cy) + (j - cx) * (j - cx));
                        // sharp one-pixel rim so downsampling genuinely loses detail
                        const double blob = 1.0 / (1.0 + std::exp(2.0 * (dist - radius)));
                        const double v =
                            -1.0 + 2.0 * w[k] * blob + 0.05 * rng.gaussian();
                        d.images.at(row, k, i, j) =
                            static_cast<float>(std::clamp(v, -1.0, 1.0));
                    }
        }
    }
    return d;
}

}  // namespace

Dataset gen_synth_mixture(Rng& rng, int num_classes, int n_per_class, SynthMode mode,
                          int img_size) {
    if (num_classes < 2) throw ValueError("need at least 2 classes");
    if (n_per_class < 2) throw ValueError("need at least 2 samples per class");
    if (mode == SynthMode::vector2d) return make_vector2d(rng, num_classes, n_per_class);
    if (img_size < 8) throw ValueError("img_size must be >= 8");
    return make_blob_images(rng, num_classes, n_per_class, img_size);
}

Dataset load_cifar_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.empty()) throw IoError("'" + path + "' is empty");
    constexpr std::size_t kPixels = 3072;
    int label_bytes;
    if (bytes.size() % (kPixels + 1) == 0)
        label_bytes = 1;
    else if (bytes.size() % (kPixels + 2) == 0)
        label_bytes = 2;
    else
        throw IoError("'" + path + "' is not a whole number of CIFAR records");
    const std::size_t rec = kPixels + static_cast<std::size_t>(label_bytes);
    const int n = static_cast<int>(bytes.size() / rec);

    Dataset d;
    d.split = "cifar";
    d.images = TensorF({n, 3, 32, 32});
    d.labels.resize(static_cast<std::size_t>(n));
    int max_label = 0;
    for (int r = 0; r < n; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * rec;
        // with two label bytes the first is the coarse label; keep the fine one
        const int label = bytes[base + static_cast<std::size_t>(label_bytes) - 1];
        d.labels[static_cast<std::size_t>(r)] = label;
        max_label = std::max(max_label, label);
        for (std::size_t p = 0; p < kPixels; ++p) {
            const unsigned char b = bytes[base + static_cast<std::size_t>(label_bytes) + p];
            d.images[static_cast<std::int64_t>(r) * kPixels + static_cast<std::int64_t>(p)] =
                static_cast<float>(-1.0 + 2.0 * b / 255.0);
        }
    }
    d.num_classes = max_label + 1;
    return d;
}

void save_cifar_binary(const std::string& path, const Dataset& data, int label_bytes) {
    if (!data.is_image() || data.images.extent(1) != 3 || data.images.extent(2) != 32 ||
        data.images.extent(3) != 32)
        throw DimensionError("CIFAR records need [N,3,32,32] images");
    if (label_bytes != 1 && label_bytes != 2) throw ValueError("label_bytes must be 1 or 2");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    const int n = data.images.extent(0);
    for (int r = 0; r < n; ++r) {
        if (label_bytes == 2) out.put(0);  // coarse label, ignored by the loader
        out.put(static_cast<char>(data.labels[static_cast<std::size_t>(r)]));
        for (std::int64_t p = 0; p < 3072; ++p) {
            const double v = data.images[static_cast<std::int64_t>(r) * 3072 + p];
            const long b = std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
            out.put(static_cast<char>(static_cast<unsigned char>(b)));
        }
    }
    if (!out) throw IoError("write failed on '" + path + "'");
}

TensorF downsample_images(const TensorF& images, int factor) {
    if (images.rank() != 4) throw DimensionError("expected [N,C,H,W] images");
    if (factor < 1) throw ValueError("factor must be >= 1");
    const int n = images.extent(0), c = images.extent(1);
    const int h = images.extent(2), w = images.extent(3);
    if (h % factor != 0 || w % factor != 0)
        throw DimensionError("extents " + shape_str(images.shape()) + " not divisible by " +
                             std::to_string(factor));
    TensorF out({n, c, h / factor, w / factor});
    const float inv = 1.0f / static_cast<float>(factor * factor);
    for (int r = 0; r < n; ++r)
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < h / factor; ++i)
                for (int j = 0; j < w / factor; ++j) {
                    float s = 0.0f;
                    for (int di = 0; di < factor; ++di)
                        for (int dj = 0; dj < factor; ++dj)
                            s += images.at(r, k, i * factor + di, j * factor + dj);
                    out.at(r, k, i, j) = s * inv;
                }
    return out;
}

}  // namespace projcgan
