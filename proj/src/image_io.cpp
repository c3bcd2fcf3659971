#include "projcgan/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "projcgan/errors.hpp"

namespace projcgan {

namespace {

unsigned char quantize(float v) {
    const long b = std::lround((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
    return static_cast<unsigned char>(std::clamp(b, 0L, 255L));
}

float dequantize(unsigned char b) { return static_cast<float>(-1.0 + 2.0 * b / 255.0); }

void write_p6(const std::string& path, int w, int h, const std::vector<unsigned char>& rgb) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "P6\n" << w << " " << h << "\n255\n";
    out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!out) throw IoError("write failed on '" + path + "'");
}

int next_header_int(std::istream& in, const std::string& path) {
    // skip whitespace and '#' comment lines between header tokens
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = in.get();
        c = in.get();
    }
    int value = 0;
    bool any = false;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = in.get();
    }
    if (!any) throw IoError("'" + path + "': malformed PPM header");
    return value;
}

}  // namespace

void write_ppm(const std::string& path, const TensorF& image) {
    if (image.rank() != 3 || image.extent(0) != 3)
        throw DimensionError("PPM wants a [3,H,W] image, got " + shape_str(image.shape()));
    const int h = image.extent(1), w = image.extent(2);
    std::vector<unsigned char> rgb(static_cast<std::size_t>(3) * h * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < 3; ++k)
                rgb[(static_cast<std::size_t>(i) * w + j) * 3 + k] = quantize(image.at(k, i, j));
    write_p6(path, w, h, rgb);
}

TensorF read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '6') throw IoError("'" + path + "' is not a P6 PPM");
    const int w = next_header_int(in, path);
    const int h = next_header_int(in, path);
    const int maxval = next_header_int(in, path);
    if (maxval != 255) throw IoError("'" + path + "': only maxval 255 is supported");
    std::vector<unsigned char> rgb(static_cast<std::size_t>(3) * h * w);
    in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(rgb.size()))
        throw IoError("'" + path + "': truncated pixel data");
    TensorF img({3, h, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int k = 0; k < 3; ++k)
                img.at(k, i, j) = dequantize(rgb[(static_cast<std::size_t>(i) * w + j) * 3 + k]);
    return img;
}

TensorF tile_grid(const TensorF& images, int cols) {
    if (images.rank() != 4 || images.extent(1) != 3)
        throw DimensionError("grid wants [N,3,H,W] images, got " + shape_str(images.shape()));
    if (cols < 1) throw ValueError("cols must be >= 1");
    const int n = images.extent(0), h = images.extent(2), w = images.extent(3);
    const int rows = (n + cols - 1) / cols;
    TensorF sheet({3, rows * h, cols * w});
    sheet.fill(-1.0f);
    for (int idx = 0; idx < n; ++idx) {
        const int r = idx / cols, c = idx % cols;
        for (int k = 0; k < 3; ++k)
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j)
                    sheet.at(k, r * h + i, c * w + j) = images.at(idx, k, i, j);
    }
    return sheet;
}

namespace {

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

double catmull_rom(double t) {
    const double a = -0.5;
    const double at = std::abs(t);
    if (at <= 1.0) return ((a + 2.0) * at - (a + 3.0)) * at * at + 1.0;
    if (at < 2.0) return ((a * at - 5.0 * a) * at + 8.0 * a) * at - 4.0 * a;
    return 0.0;
}

template <typename Sampler>
TensorF resize_separable(const TensorF& image, int out_h, int out_w, int taps, Sampler weights) {
    if (image.rank() != 3) throw DimensionError("resize wants a [C,H,W] image");
    if (out_h < 1 || out_w < 1) throw ValueError("output extents must be positive");
    const int c = image.extent(0), in_h = image.extent(1), in_w = image.extent(2);
    const double sy = static_cast<double>(in_h) / out_h;
    const double sx = static_cast<double>(in_w) / out_w;

    // horizontal pass, then vertical
    TensorF tmp({c, in_h, out_w});
    for (int j = 0; j < out_w; ++j) {
        const double src = (j + 0.5) * sx - 0.5;
        const int base = static_cast<int>(std::floor(src)) - taps / 2 + 1;
        double w[4];
        weights(src - base, w);
        for (int k = 0; k < c; ++k)
            for (int i = 0; i < in_h; ++i) {
                double s = 0.0;
                for (int t = 0; t < taps; ++t)
                    s += w[t] * image.at(k, i, clamp_index(base + t, in_w));
                tmp.at(k, i, j) = static_cast<float>(s);
            }
    }
    TensorF out({c, out_h, out_w});
    for (int i = 0; i < out_h; ++i) {
        const double src = (i + 0.5) * sy - 0.5;
        const int base = static_cast<int>(std::floor(src)) - taps / 2 + 1;
        double w[4];
        weights(src - base, w);
        for (int k = 0; k < c; ++k)
            for (int j = 0; j < out_w; ++j) {
                double s = 0.0;
                for (int t = 0; t < taps; ++t)
                    s += w[t] * tmp.at(k, clamp_index(base + t, in_h), j);
                out.at(k, i, j) = static_cast<float>(s);
            }
    }
    return out;
}

}  // namespace

TensorF resize_bilinear(const TensorF& image, int out_h, int out_w) {
    // taps straddle the source position: offset is in [0,1] relative to base
    return resize_separable(image, out_h, out_w, 2, [](double offset, double* w) {
        w[0] = 1.0 - offset;
        w[1] = offset;
    });
}

TensorF resize_bicubic(const TensorF& image, int out_h, int out_w) {
    return resize_separable(image, out_h, out_w, 4, [](double offset, double* w) {
        for (int t = 0; t < 4; ++t) w[t] = catmull_rom(offset - t);
    });
}

// ---------------------------------------------------------------------------
// plotter

namespace {

struct Raster {
    int w, h;
    std::vector<unsigned char> px;

    Raster(int w_, int h_) : w(w_), h(h_), px(static_cast<std::size_t>(3) * w_ * h_, 255) {}

    void set(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const std::size_t at = (static_cast<std::size_t>(y) * w + x) * 3;
        px[at] = r;
        px[at + 1] = g;
        px[at + 2] = b;
    }

    void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g, unsigned char b) {
        const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            set(static_cast<int>(std::lround(x0 + t * (x1 - x0))),
                static_cast<int>(std::lround(y0 + t * (y1 - y0))), r, g, b);
        }
    }
};

// 3x5 glyphs for numeric labels; rows top to bottom, 3 bits each.
const unsigned char* glyph(char c) {
    static const unsigned char digits[10][5] = {
        {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
        {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7}};
    static const unsigned char minus[5] = {0, 0, 7, 0, 0};
    static const unsigned char dot[5] = {0, 0, 0, 0, 2};
    static const unsigned char plus[5] = {0, 2, 7, 2, 0};
    static const unsigned char ee[5] = {7, 4, 6, 4, 7};
    if (c >= '0' && c <= '9') return digits[c - '0'];
    if (c == '-') return minus;
    if (c == '.') return dot;
    if (c == '+') return plus;
    if (c == 'e' || c == 'E') return ee;
    return nullptr;
}

void draw_text(Raster& img, int x, int y, const std::string& s) {
    for (char c : s) {
        const unsigned char* g = glyph(c);
        if (g != nullptr)
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 3; ++j)
                    if (g[i] & (4 >> j)) img.set(x + j, y + i, 0, 0, 0);
        x += 4;
    }
}

std::string fmt_tick(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

void write_plot_ppm(const std::string& path, const std::vector<Series>& series, int width,
                    int height) {
    if (series.empty()) throw ValueError("nothing to plot");
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
    bool first = true;
    for (const Series& s : series) {
        if (s.x.size() != s.y.size()) throw DimensionError("series '" + s.name + "' x/y mismatch");
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (first) {
                x_lo = x_hi = s.x[i];
                y_lo = y_hi = s.y[i];
                first = false;
            }
            x_lo = std::min(x_lo, s.x[i]);
            x_hi = std::max(x_hi, s.x[i]);
            y_lo = std::min(y_lo, s.y[i]);
            y_hi = std::max(y_hi, s.y[i]);
        }
    }
    if (first) throw ValueError("nothing to plot");
    if (x_hi - x_lo <= 0) x_hi = x_lo + 1.0;
    if (y_hi - y_lo <= 0) y_hi = y_lo + 1.0;

    const int ml = 46, mr = 10, mt = 10, mb = 24;
    if (width < ml + mr + 20 || height < mt + mb + 20) throw ValueError("plot canvas too small");
    Raster img(width, height);
    const int px0 = ml, px1 = width - mr, py0 = height - mb, py1 = mt;
    auto to_x = [&](double v) {
        return px0 + static_cast<int>(std::lround((v - x_lo) / (x_hi - x_lo) * (px1 - px0)));
    };
    auto to_y = [&](double v) {
        return py0 + static_cast<int>(std::lround((v - y_lo) / (y_hi - y_lo) * (py1 - py0)));
    };

    img.line(px0, py0, px1, py0, 0, 0, 0);
    img.line(px0, py0, px0, py1, 0, 0, 0);
    for (int t = 0; t <= 4; ++t) {
        const double fx = x_lo + (x_hi - x_lo) * t / 4.0;
        const double fy = y_lo + (y_hi - y_lo) * t / 4.0;
        img.line(to_x(fx), py0, to_x(fx), py0 + 3, 0, 0, 0);
        img.line(px0 - 3, to_y(fy), px0, to_y(fy), 0, 0, 0);
    }
    draw_text(img, px0 - 2, py0 + 6, fmt_tick(x_lo));
    const std::string xmax = fmt_tick(x_hi);
    draw_text(img, px1 - 4 * static_cast<int>(xmax.size()), py0 + 6, xmax);
    draw_text(img, 2, py0 - 5, fmt_tick(y_lo));
    draw_text(img, 2, py1, fmt_tick(y_hi));

    static const unsigned char palette[6][3] = {{200, 40, 40},  {40, 90, 200}, {30, 150, 60},
                                               {190, 130, 20}, {130, 50, 170}, {20, 150, 150}};
    for (std::size_t si = 0; si < series.size(); ++si) {
        const Series& s = series[si];
        const unsigned char* col = palette[si % 6];
        for (std::size_t i = 0; i + 1 < s.x.size(); ++i)
            img.line(to_x(s.x[i]), to_y(s.y[i]), to_x(s.x[i + 1]), to_y(s.y[i + 1]), col[0],
                     col[1], col[2]);
        // swatch so lines can be told apart without a text legend
        const int sy = py1 + 4 + 6 * static_cast<int>(si);
        img.line(px1 - 14, sy, px1 - 4, sy, col[0], col[1], col[2]);
    }
    write_p6(path, width, height, img.px);
}

}  // namespace projcgan
