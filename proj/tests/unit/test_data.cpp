#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "projcgan/data.hpp"
#include "projcgan/errors.hpp"

using namespace projcgan;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::string tmp_path(const std::string& name) { return "/tmp/projcgan_test_" + name; }

double max_abs_diff_f(const TensorF& a, const TensorF& b) {
    REQUIRE(a.shape() == b.shape());
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

}  // namespace

TEST_CASE("vector2d mixture has ring means and isotropic spread") {
    Rng rng(7);
    const int C = 8, n = 2000;
    Dataset d = gen_synth_mixture(rng, C, n, SynthMode::vector2d);
    CHECK(!d.is_image());
    CHECK(d.vectors.shape() == Shape{C * n, 2});
    CHECK(d.size() == C * n);
    CHECK(d.num_classes == C);
    CHECK(d.labels.size() == static_cast<std::size_t>(C * n));

    // class blocks are contiguous
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < n; ++i) CHECK(d.labels[static_cast<std::size_t>(c * n + i)] == c);

    for (int c = 0; c < C; ++c) {
        double mx = 0.0, my = 0.0;
        for (int i = 0; i < n; ++i) {
            mx += d.vectors.at(c * n + i, 0);
            my += d.vectors.at(c * n + i, 1);
        }
        mx /= n;
        my /= n;
        const double a = 2.0 * kPi * c / C;
        // sample mean of n draws at sigma 0.1 lands within ~4 standard errors
        CHECK(std::abs(mx - std::cos(a)) < 0.01);
        CHECK(std::abs(my - std::sin(a)) < 0.01);

        double vxx = 0.0, vyy = 0.0, vxy = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dx = d.vectors.at(c * n + i, 0) - mx;
            const double dy = d.vectors.at(c * n + i, 1) - my;
            vxx += dx * dx;
            vyy += dy * dy;
            vxy += dx * dy;
        }
        vxx /= n - 1;
        vyy /= n - 1;
        vxy /= n - 1;
        CHECK(vxx == doctest::Approx(0.01).epsilon(0.2));
        CHECK(vyy == doctest::Approx(0.01).epsilon(0.2));
        CHECK(std::abs(vxy) < 0.002);
    }
}

TEST_CASE("vector2d mixture is a pure function of the rng") {
    Rng a(11), b(11), c(12);
    Dataset da = gen_synth_mixture(a, 4, 50, SynthMode::vector2d);
    Dataset db = gen_synth_mixture(b, 4, 50, SynthMode::vector2d);
    Dataset dc = gen_synth_mixture(c, 4, 50, SynthMode::vector2d);
    CHECK(max_abs_diff_f(da.vectors, db.vectors) == 0.0);
    CHECK(max_abs_diff_f(da.vectors, dc.vectors) > 0.0);
}

TEST_CASE("blob images stay in range and separate the classes") {
    Rng rng(3);
    const int C = 4, n = 6, img = 16;
    Dataset d = gen_synth_mixture(rng, C, n, SynthMode::blob_images, img);
    CHECK(d.is_image());
    CHECK(d.images.shape() == Shape{C * n, 3, img, img});
    CHECK(d.size() == C * n);
    for (std::int64_t i = 0; i < d.images.numel(); ++i) {
        CHECK(d.images[i] >= -1.0f);
        CHECK(d.images[i] <= 1.0f);
    }

    // the blob occupies a class-specific corner, so per-class mean images
    // should differ strongly between classes but little within one class
    auto class_mean = [&](int c) {
        TensorF m({3, img, img});
        for (int s = 0; s < n; ++s)
            for (std::int64_t p = 0; p < m.numel(); ++p)
                m[p] += d.images[(static_cast<std::int64_t>(c) * n + s) * m.numel() + p] / n;
        return m;
    };
    TensorF m0 = class_mean(0), m1 = class_mean(1);
    double between = 0.0;
    for (std::int64_t p = 0; p < m0.numel(); ++p) between += std::abs(m0[p] - m1[p]);
    between /= static_cast<double>(m0.numel());
    CHECK(between > 0.1);

    double within = 0.0;
    for (std::int64_t p = 0; p < m0.numel(); ++p)
        within += std::abs(d.images[p] - m0[p]);
    within /= static_cast<double>(m0.numel());
    CHECK(within < between);
}

TEST_CASE("blob images are deterministic given the rng") {
    Rng a(5), b(5);
    Dataset da = gen_synth_mixture(a, 3, 4, SynthMode::blob_images, 16);
    Dataset db = gen_synth_mixture(b, 3, 4, SynthMode::blob_images, 16);
    CHECK(max_abs_diff_f(da.images, db.images) == 0.0);
}

TEST_CASE("mixture argument validation") {
    Rng rng(1);
    CHECK_THROWS_AS(gen_synth_mixture(rng, 1, 10, SynthMode::vector2d), ValueError);
    CHECK_THROWS_AS(gen_synth_mixture(rng, 4, 1, SynthMode::vector2d), ValueError);
    CHECK_THROWS_AS(gen_synth_mixture(rng, 4, 10, SynthMode::blob_images, 4), ValueError);
    CHECK(synth_mode_from_string("vector2d") == SynthMode::vector2d);
    CHECK(synth_mode_from_string("blob_images") == SynthMode::blob_images);
    CHECK_THROWS_AS(synth_mode_from_string("rings"), ValueError);
}

TEST_CASE("label histogram counts and validates") {
    Dataset d;
    d.num_classes = 3;
    d.labels = {0, 2, 2, 1, 2};
    const std::vector<int> h = d.label_histogram();
    CHECK(h == std::vector<int>{1, 1, 3});
    d.labels.push_back(3);
    CHECK_THROWS_AS(d.label_histogram(), ValueError);
}

TEST_CASE("cifar round-trip with one and two label bytes") {
    Rng rng(9);
    Dataset d;
    d.num_classes = 5;
    d.images = TensorF({4, 3, 32, 32});
    // byte-grid values so quantization is exact on the way back
    for (std::int64_t i = 0; i < d.images.numel(); ++i) {
        const int b = rng.uniform_int(256);
        d.images[i] = static_cast<float>(-1.0 + 2.0 * b / 255.0);
    }
    d.labels = {0, 4, 2, 1};

    for (int label_bytes : {1, 2}) {
        const std::string path = tmp_path("cifar_" + std::to_string(label_bytes) + ".bin");
        save_cifar_binary(path, d, label_bytes);
        Dataset back = load_cifar_binary(path);
        CHECK(back.size() == 4);
        CHECK(back.num_classes == 5);
        CHECK(back.labels == d.labels);
        CHECK(back.split == "cifar");
        CHECK(max_abs_diff_f(back.images, d.images) == 0.0);
        std::remove(path.c_str());
    }
}

TEST_CASE("cifar pixel map endpoints are exact") {
    const std::string path = tmp_path("cifar_endpoints.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out.put(2);  // label
        for (int p = 0; p < 3072; ++p) out.put(static_cast<char>(p < 1536 ? 0 : 255));
    }
    Dataset d = load_cifar_binary(path);
    CHECK(d.size() == 1);
    CHECK(d.labels[0] == 2);
    CHECK(d.images[0] == -1.0f);
    CHECK(d.images[3071] == 1.0f);
    std::remove(path.c_str());
}

TEST_CASE("cifar loader rejects damaged files") {
    const std::string missing = tmp_path("cifar_missing.bin");
    CHECK_THROWS_AS(load_cifar_binary(missing), IoError);

    const std::string empty = tmp_path("cifar_empty.bin");
    { std::ofstream out(empty, std::ios::binary); }
    CHECK_THROWS_AS(load_cifar_binary(empty), IoError);
    std::remove(empty.c_str());

    const std::string trunc = tmp_path("cifar_trunc.bin");
    {
        std::ofstream out(trunc, std::ios::binary);
        for (int i = 0; i < 3073 + 17; ++i) out.put(0);
    }
    CHECK_THROWS_AS(load_cifar_binary(trunc), IoError);
    std::remove(trunc.c_str());
}

TEST_CASE("downsampling is an exact block mean") {
    TensorF x({1, 1, 4, 4});
    for (std::int64_t i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
    TensorF y = downsample_images(x, 2);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.at(0, 0, 0, 0) == doctest::Approx((0.0 + 1 + 4 + 5) / 4).epsilon(1e-12));
    CHECK(y.at(0, 0, 0, 1) == doctest::Approx((2.0 + 3 + 6 + 7) / 4).epsilon(1e-12));
    CHECK(y.at(0, 0, 1, 0) == doctest::Approx((8.0 + 9 + 12 + 13) / 4).epsilon(1e-12));
    CHECK(y.at(0, 0, 1, 1) == doctest::Approx((10.0 + 11 + 14 + 15) / 4).epsilon(1e-12));

    TensorF z = downsample_images(x, 4);
    CHECK(z.shape() == Shape{1, 1, 1, 1});
    CHECK(z[0] == doctest::Approx(7.5).epsilon(1e-12));

    CHECK(max_abs_diff_f(downsample_images(x, 1), x) == 0.0);
    CHECK_THROWS_AS(downsample_images(x, 3), DimensionError);
    TensorF bad({4, 4});
    CHECK_THROWS_AS(downsample_images(bad, 2), DimensionError);
}
