#ifndef PROJCGAN_DATA_HPP
#define PROJCGAN_DATA_HPP

#include <string>
#include <vector>

#include "projcgan/rng.hpp"
#include "projcgan/tensor.hpp"

namespace projcgan {

/// Labeled samples for one task. Image tasks fill `images` ([N,3,H,W] in
/// [-1,1]); the 2-d ring task fills `vectors` ([N,2]). Exactly one of the
/// two is populated.
struct Dataset {
    TensorF images;
    TensorF vectors;
    std::vector<int> labels;
    int num_classes = 0;
    std::string split;

    bool is_image() const { return images.numel() > 0; }
    int size() const;
    std::vector<int> label_histogram() const;
};

enum class SynthMode { vector2d, blob_images };

SynthMode synth_mode_from_string(const std::string& s);

/// Class-conditional synthetic mixtures. vector2d: 2-d Gaussians (sigma 0.1)
/// whose means sit at angle 2*pi*c/C on the unit circle. blob_images:
/// img_size^2 3-channel images of a class-positioned, class-colored blob
/// with a sharp rim, plus noise, in [-1,1].
Dataset gen_synth_mixture(Rng& rng, int num_classes, int n_per_class, SynthMode mode,
                          int img_size = 16);

/// CIFAR binary reader: records of 1 (fine label) or 2 (coarse+fine) label
/// bytes plus 3072 channel-major pixel bytes; the layout is inferred from
/// the file size. Pixels map to [-1,1] with 0 -> -1 and 255 -> 1.
Dataset load_cifar_binary(const std::string& path);

/// Inverse of the loader's pixel map, for fixtures and round-trip checks.
void save_cifar_binary(const std::string& path, const Dataset& data, int label_bytes = 1);

/// Mean 2x2-average downsampling by `factor` (a power of 2), the low-res
/// conditioning view for super-resolution.
TensorF downsample_images(const TensorF& images, int factor);

}  // namespace projcgan

#endif
