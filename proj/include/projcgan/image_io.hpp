#ifndef PROJCGAN_IMAGE_IO_HPP
#define PROJCGAN_IMAGE_IO_HPP

#include <string>
#include <vector>

#include "projcgan/tensor.hpp"

namespace projcgan {

/// Binary PPM (P6) with the fixed quantization byte = round((v+1)*127.5),
/// half away from zero, clamped to [0,255]; reading maps back through
/// v = -1 + 2*b/255, so byte-grid tensors round-trip exactly.
void write_ppm(const std::string& path, const TensorF& image);  // [3,H,W] in [-1,1]
TensorF read_ppm(const std::string& path);

/// Tile [N,3,H,W] into one [3, rows*H, cols*W] sheet, row-major; unused
/// cells are black (-1).
TensorF tile_grid(const TensorF& images, int cols);

/// Separable resizes on one [C,H,W] image with half-pixel centers and edge
/// clamping. Bicubic uses the Catmull-Rom kernel (a = -0.5).
TensorF resize_bilinear(const TensorF& image, int out_h, int out_w);
TensorF resize_bicubic(const TensorF& image, int out_h, int out_w);

/// One polyline on a plot.
struct Series {
    std::string name;
    std::vector<double> x, y;
};

/// Minimal raster plot: white canvas, black frame and ticks, numeric range
/// labels in a 3x5 pixel font, one colored polyline per series.
void write_plot_ppm(const std::string& path, const std::vector<Series>& series, int width = 480,
                    int height = 320);

}  // namespace projcgan

#endif
