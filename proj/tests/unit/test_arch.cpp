#include <cmath>
#include <vector>

#include "doctest.h"
#include "projcgan/arch.hpp"
#include "projcgan/errors.hpp"
#include "projcgan/spectral.hpp"
#include "support/gradcheck.hpp"

using namespace projcgan;
using projcgan::testing::grad_check_params;

namespace {

double max_abs_diff(const TensorD& a, const TensorD& b) {
    REQUIRE(a.shape() == b.shape());
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

void fill_param(Registry<double>& reg, const std::string& name, double v) {
    Parameter<double>* p = reg.find_param(name);
    REQUIRE(p != nullptr);
    p->value.fill(v);
}

// Set one class row of a [K,C] table parameter.
void set_row(Registry<double>& reg, const std::string& name, int row, double v) {
    Parameter<double>* p = reg.find_param(name);
    REQUIRE(p != nullptr);
    for (int j = 0; j < p->value.extent(1); ++j) p->value.at(row, j) = v;
}

}  // namespace

TEST_CASE("conditioning variant names round-trip") {
    for (auto v : {CondVariant::projection, CondVariant::concat_input, CondVariant::concat_hidden,
                   CondVariant::concat_output, CondVariant::acgan})
        CHECK(cond_variant_from_string(to_string(v)) == v);
    CHECK_THROWS_AS(cond_variant_from_string("proj"), ValueError);
}

TEST_CASE("split_z produces equal chunks") {
    Rng rng(5);
    TensorD z = sample_z<double>(rng, 3, 6);
    auto chunks = split_z(z, 3);
    REQUIRE(chunks.size() == 3);
    for (int c = 0; c < 3; ++c) {
        CHECK(chunks[c].shape() == Shape{3, 2});
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) CHECK(chunks[c].at(i, j) == z.at(i, c * 2 + j));
    }
    CHECK_THROWS_AS(split_z(z, 4), ValueError);
    CHECK_THROWS_AS(sample_z<double>(rng, 0, 4), ValueError);
}

TEST_CASE("generator block with a zeroed main path reduces to its shortcut") {
    Rng rng(11);

    SUBCASE("identity shortcut") {
        Registry<double> reg;
        GenResBlock<double> blk(reg, "b", 6, 6, 0, /*up=*/false, rng.spawn(0), /*identity_sc=*/true);
        fill_param(reg, "b.c2.weight", 0.0);
        TensorD x = rng.sample_gaussian<double>({3, 6, 5, 5});
        TapeD tape;
        NodeId out = blk.forward(tape, tape.constant(x), {}, Mode::Train);
        CHECK(max_abs_diff(tape.val(out), x) == 0.0);
    }

    SUBCASE("upsampling shortcut with 1x1 conv") {
        Registry<double> reg;
        GenResBlock<double> blk(reg, "b", 5, 7, 3, /*up=*/true, rng.spawn(1));
        fill_param(reg, "b.c2.weight", 0.0);
        TensorD x = rng.sample_gaussian<double>({3, 5, 4, 4});
        TapeD tape;
        NodeId out = blk.forward(tape, tape.constant(x), {0, 1, 2}, Mode::Train);
        // shortcut order is upsample first, then the 1x1 conv
        TapeD ref;
        NodeId s = ref.upsample_nearest2x(ref.constant(x));
        s = ref.conv2d(s, ref.constant(reg.find_param("b.sc.weight")->value), 1, 0);
        CHECK(max_abs_diff(tape.val(out), ref.val(s)) == 0.0);
        CHECK(tape.val(out).shape() == Shape{3, 7, 8, 8});
    }

    SUBCASE("width change needs the shortcut conv") {
        Registry<double> reg;
        CHECK_THROWS_AS(GenResBlock<double>(reg, "b", 4, 5, 0, false, rng.spawn(2), true),
                        DimensionError);
    }
}

TEST_CASE("discriminator block with a zeroed main path reduces to its shortcut") {
    Rng rng(12);

    SUBCASE("identity shortcut") {
        Registry<double> reg;
        DiscResBlock<double> blk(reg, "b", 5, 5, /*down=*/false, /*first=*/false, rng.spawn(0),
                                 /*identity_sc=*/true);
        fill_param(reg, "b.c2.weight", 0.0);
        fill_param(reg, "b.c2.bias", 0.0);
        TensorD x = rng.sample_gaussian<double>({2, 5, 6, 6});
        TapeD tape;
        NodeId out = blk.forward(tape, tape.constant(x), Mode::Eval);
        CHECK(max_abs_diff(tape.val(out), x) == 0.0);
    }

    SUBCASE("downsampling shortcut applies the 1x1 conv before pooling") {
        Registry<double> reg;
        DiscResBlock<double> blk(reg, "b", 4, 9, true, false, rng.spawn(1));
        fill_param(reg, "b.c2.weight", 0.0);
        fill_param(reg, "b.c2.bias", 0.0);
        TensorD x = rng.sample_gaussian<double>({2, 4, 6, 6});
        TapeD tape;
        NodeId out = blk.forward(tape, tape.constant(x), Mode::Eval);
        // replicate the spectrally normalized 1x1 conv from the stored state
        TapeD ref;
        NodeId w = ref.constant(reg.find_param("b.sc.weight")->value);
        NodeId w2d = ref.reshape(w, {9, 4});
        NodeId weff = ref.div(w, sn_sigma_node(ref, w2d, *reg.find_state("b.sc.u"),
                                               *reg.find_state("b.sc.v")));
        NodeId s = ref.conv2d(ref.constant(x), weff, 1, 0);
        s = ref.add(s, ref.constant(reg.find_param("b.sc.bias")->value));
        s = ref.avg_pool2x2(s);
        CHECK(max_abs_diff(tape.val(out), ref.val(s)) == 0.0);
        CHECK(tape.val(out).shape() == Shape{2, 9, 3, 3});
    }

    SUBCASE("first block downsamples by construction") {
        Registry<double> reg;
        DiscResBlock<double> blk(reg, "b", 3, 8, true, true, rng.spawn(2));
        TensorD x = rng.sample_gaussian<double>({2, 3, 16, 16});
        TapeD tape;
        NodeId out = blk.forward(tape, tape.constant(x), Mode::Eval);
        CHECK(tape.val(out).shape() == Shape{2, 8, 8, 8});
        Registry<double> reg2;
        CHECK_THROWS_AS(DiscResBlock<double>(reg2, "b", 3, 8, false, true, rng.spawn(3)),
                        ValueError);
        Registry<double> reg3;
        CHECK_THROWS_AS(DiscResBlock<double>(reg3, "b", 8, 8, true, true, rng.spawn(4), true),
                        ValueError);
    }
}

TEST_CASE("image generator emits deterministic in-range images") {
    ImageGenConfig cfg;
    cfg.num_classes = 4;
    cfg.z_dim = 10;
    cfg.ch = 12;
    cfg.n_up = 2;
    ImageGenerator<double> g(cfg, Rng(31));
    CHECK(g.out_size() == 16);

    Rng rng(32);
    TensorD z = sample_z<double>(rng, 4, cfg.z_dim);
    std::vector<int> labels{0, 1, 2, 3};

    TapeD t1;
    TensorD a = t1.val(g.forward(t1, t1.constant(z), labels, Mode::Eval));
    CHECK(a.shape() == Shape{4, 3, 16, 16});
    double peak = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) peak = std::max(peak, std::abs(a[i]));
    CHECK(peak <= 1.0);

    TapeD t2;
    TensorD b = t2.val(g.forward(t2, t2.constant(z), labels, Mode::Eval));
    CHECK(max_abs_diff(a, b) == 0.0);

    TapeD t3;
    CHECK_THROWS_AS(g.forward(t3, t3.constant(z), {0, 1}, Mode::Eval), DimensionError);
}

TEST_CASE("image generator conditioning changes the output") {
    ImageGenConfig cfg;
    cfg.num_classes = 3;
    cfg.z_dim = 6;
    cfg.ch = 8;
    cfg.n_up = 1;
    ImageGenerator<double> g(cfg, Rng(41));
    // fresh tables are identical across classes, so split them first
    set_row(g.reg(), "b0.bn1.gamma_table", 1, 2.5);

    Rng rng(42);
    TensorD z1 = sample_z<double>(rng, 1, cfg.z_dim);
    TensorD z(Shape{2, cfg.z_dim});
    for (int j = 0; j < cfg.z_dim; ++j) z.at(0, j) = z.at(1, j) = z1.at(0, j);

    TapeD tape;
    TensorD out = tape.val(g.forward(tape, tape.constant(z), {0, 1}, Mode::Eval));
    double diff = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j)
                diff = std::max(diff, std::abs(out.at(0, c, i, j) - out.at(1, c, i, j)));
    CHECK(diff > 1e-6);
}

TEST_CASE("morphing endpoints reproduce direct class sampling bit for bit") {
    ImageGenConfig cfg;
    cfg.num_classes = 4;
    cfg.z_dim = 6;
    cfg.ch = 8;
    cfg.n_up = 1;
    ImageGenerator<double> g(cfg, Rng(51));
    for (const char* t : {"b0.bn1.gamma_table", "b0.bn2.gamma_table"})
        for (int row = 0; row < 4; ++row) set_row(g.reg(), t, row, 1.0 + 0.3 * row);

    Rng rng(52);
    TensorD z = sample_z<double>(rng, 2, cfg.z_dim);

    TapeD td;
    TensorD direct = td.val(g.forward(td, td.constant(z), {1, 2}, Mode::Eval));

    TapeD tm;
    std::vector<MorphSpec> at_zero{{1, 3, 0.0}, {2, 3, 0.0}};
    TensorD m0 = tm.val(g.forward_morph(tm, tm.constant(z), at_zero, Mode::Eval));
    CHECK(max_abs_diff(direct, m0) == 0.0);

    TapeD tm1;
    std::vector<MorphSpec> at_one{{3, 1, 1.0}, {0, 2, 1.0}};
    TensorD m1 = tm1.val(g.forward_morph(tm1, tm1.constant(z), at_one, Mode::Eval));
    CHECK(max_abs_diff(direct, m1) == 0.0);

    TapeD tbad;
    std::vector<MorphSpec> bad{{0, 1, 1.25}, {0, 1, 0.5}};
    CHECK_THROWS_AS(g.forward_morph(tbad, tbad.constant(z), bad, Mode::Eval), ValueError);
}

TEST_CASE("morphing mixes affine rows exactly") {
    // classes 0/1/2 get gamma 2/4/3 and beta -1/1/0 everywhere, so the
    // halfway morph between 0 and 1 must land exactly on class 2
    ImageGenConfig cfg;
    cfg.num_classes = 3;
    cfg.z_dim = 6;
    cfg.ch = 8;
    cfg.n_up = 1;
    ImageGenerator<double> g(cfg, Rng(61));
    for (const char* t : {"b0.bn1.gamma_table", "b0.bn2.gamma_table"}) {
        set_row(g.reg(), t, 0, 2.0);
        set_row(g.reg(), t, 1, 4.0);
        set_row(g.reg(), t, 2, 3.0);
    }
    for (const char* t : {"b0.bn1.beta_table", "b0.bn2.beta_table"}) {
        set_row(g.reg(), t, 0, -1.0);
        set_row(g.reg(), t, 1, 1.0);
        set_row(g.reg(), t, 2, 0.0);
    }

    Rng rng(62);
    TensorD z = sample_z<double>(rng, 2, cfg.z_dim);
    TapeD td;
    TensorD direct = td.val(g.forward(td, td.constant(z), {2, 2}, Mode::Eval));
    TapeD tm;
    std::vector<MorphSpec> half{{0, 1, 0.5}, {0, 1, 0.5}};
    TensorD mixed = tm.val(g.forward_morph(tm, tm.constant(z), half, Mode::Eval));
    CHECK(max_abs_diff(direct, mixed) == 0.0);
}

TEST_CASE("discriminator variants share the trunk and the psi path") {
    auto make_cfg = [](CondVariant v) {
        ImageDiscConfig cfg;
        cfg.num_classes = 3;
        cfg.img_size = 16;
        cfg.ch = 10;
        cfg.n_blocks = 3;
        cfg.n_down = 2;
        cfg.embed_dim = 6;
        cfg.variant = v;
        return cfg;
    };
    ImageDiscriminator<double> d_proj(make_cfg(CondVariant::projection), Rng(71));
    ImageDiscriminator<double> d_out(make_cfg(CondVariant::concat_output), Rng(71));
    ImageDiscriminator<double> d_ac(make_cfg(CondVariant::acgan), Rng(71));

    // identical draws for identically shaped pieces
    CHECK(max_abs_diff(d_proj.reg().find_param("b0.c1.weight")->value,
                       d_ac.reg().find_param("b0.c1.weight")->value) == 0.0);
    CHECK(max_abs_diff(d_proj.reg().find_param("psi.weight")->value,
                       d_out.reg().find_param("psi.weight")->value) == 0.0);

    fill_param(d_proj.reg(), "embed.weight", 0.0);
    fill_param(d_out.reg(), "embed.weight", 0.0);

    Rng rng(72);
    TensorD x = rng.sample_uniform<double>(-1.0, 1.0, {3, 3, 16, 16});
    std::vector<int> labels{0, 1, 2};

    TapeD t1, t2, t3;
    TensorD l1 = t1.val(d_proj.forward(t1, t1.constant(x), labels, Mode::Eval).logit);
    TensorD l2 = t2.val(d_out.forward(t2, t2.constant(x), labels, Mode::Eval).logit);
    DiscOut ac = d_ac.forward(t3, t3.constant(x), labels, Mode::Eval);
    TensorD l3 = t3.val(ac.logit);
    CHECK(l1.shape() == Shape{3});
    CHECK(max_abs_diff(l1, l2) == 0.0);
    CHECK(max_abs_diff(l1, l3) == 0.0);
    CHECK(t3.val(ac.class_logits).shape() == Shape{3, 3});
}

TEST_CASE("projection logit is linear in the label vector") {
    ImageDiscConfig cfg;
    cfg.num_classes = 4;
    cfg.img_size = 8;
    cfg.ch = 8;
    cfg.n_blocks = 2;
    cfg.n_down = 1;
    ImageDiscriminator<double> d(cfg, Rng(81));

    Rng rng(82);
    TensorD x = rng.sample_uniform<double>(-1.0, 1.0, {2, 3, 8, 8});
    std::vector<int> labels{1, 3};

    // one-hot rows reproduce the integer-label forward exactly
    TensorD onehot(Shape{2, 4});
    onehot.at(0, 1) = 1.0;
    onehot.at(1, 3) = 1.0;
    TapeD t1, t2;
    TensorD via_labels = t1.val(d.forward(t1, t1.constant(x), labels, Mode::Eval).logit);
    TensorD via_rows = t2.val(d.forward_yvec(t2, t2.constant(x), t2.constant(onehot), Mode::Eval));
    CHECK(max_abs_diff(via_labels, via_rows) == 0.0);

    // f(x, a y1 + b y2) - psi = a (f(x,y1) - psi) + b (f(x,y2) - psi)
    const double a = 0.7, b = -1.3;
    TensorD mixed(Shape{2, 4});
    mixed.at(0, 1) = a;
    mixed.at(0, 2) = b;
    mixed.at(1, 0) = a;
    mixed.at(1, 3) = b;
    TensorD y1(Shape{2, 4}), y2(Shape{2, 4});
    y1.at(0, 1) = 1.0;
    y1.at(1, 0) = 1.0;
    y2.at(0, 2) = 1.0;
    y2.at(1, 3) = 1.0;
    TensorD zero(Shape{2, 4});

    TapeD tm, ta, tb, tz;
    TensorD fm = tm.val(d.forward_yvec(tm, tm.constant(x), tm.constant(mixed), Mode::Eval));
    TensorD fa = ta.val(d.forward_yvec(ta, ta.constant(x), ta.constant(y1), Mode::Eval));
    TensorD fb = tb.val(d.forward_yvec(tb, tb.constant(x), tb.constant(y2), Mode::Eval));
    TensorD psi = tz.val(d.forward_yvec(tz, tz.constant(x), tz.constant(zero), Mode::Eval));
    for (int i = 0; i < 2; ++i) {
        const double lhs = fm[i] - psi[i];
        const double rhs = a * (fa[i] - psi[i]) + b * (fb[i] - psi[i]);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("concat variants consume the embedding and share the leading trunk") {
    auto make_cfg = [](CondVariant v) {
        ImageDiscConfig cfg;
        cfg.num_classes = 3;
        cfg.img_size = 16;
        cfg.ch = 8;
        cfg.n_blocks = 3;
        cfg.n_down = 2;
        cfg.embed_dim = 5;
        cfg.variant = v;
        return cfg;
    };
    ImageDiscriminator<double> d_in(make_cfg(CondVariant::concat_input), Rng(91));
    ImageDiscriminator<double> d_hid(make_cfg(CondVariant::concat_hidden), Rng(91));
    ImageDiscriminator<double> d_proj(make_cfg(CondVariant::projection), Rng(91));

    // hidden-concat trunk matches the projection trunk up to the insertion
    // point (after block 1), then widens
    CHECK(max_abs_diff(d_hid.reg().find_param("b0.c1.weight")->value,
                       d_proj.reg().find_param("b0.c1.weight")->value) == 0.0);
    CHECK(max_abs_diff(d_hid.reg().find_param("b1.c1.weight")->value,
                       d_proj.reg().find_param("b1.c1.weight")->value) == 0.0);
    CHECK(d_hid.reg().find_param("b2.c1.weight")->value.shape() == Shape{8, 13, 3, 3});
    CHECK(d_proj.reg().find_param("b2.c1.weight")->value.shape() == Shape{8, 8, 3, 3});
    // input-concat widens the first block instead
    CHECK(d_in.reg().find_param("b0.c1.weight")->value.shape() == Shape{8, 8, 3, 3});

    Rng rng(92);
    TensorD x1 = rng.sample_uniform<double>(-1.0, 1.0, {1, 3, 16, 16});
    TensorD x(Shape{2, 3, 16, 16});
    for (std::int64_t i = 0; i < x1.numel(); ++i) {
        x[i] = x1[i];
        x[i + x1.numel()] = x1[i];
    }
    for (auto* d : {&d_in, &d_hid}) {
        TapeD tape;
        TensorD l = tape.val(d->forward(tape, tape.constant(x), {0, 2}, Mode::Eval).logit);
        CHECK(l.shape() == Shape{2});
        CHECK(std::abs(l[0] - l[1]) > 1e-9);  // same image, different label
    }
}

TEST_CASE("vector pair matches the image conventions") {
    VectorGenConfig gc;
    gc.num_classes = 3;
    gc.z_dim = 4;
    gc.hidden = 16;
    gc.n_hidden = 2;
    VectorGenerator<double> g(gc, Rng(101));

    Rng rng(102);
    TensorD z = sample_z<double>(rng, 5, gc.z_dim);
    std::vector<int> labels{0, 1, 2, 0, 1};
    TapeD t1;
    TensorD out = t1.val(g.forward(t1, t1.constant(z), labels, Mode::Eval));
    CHECK(out.shape() == Shape{5, 2});

    // the output layer is linear, not squashed
    Parameter<double>* w = g.reg().find_param("fc_out.weight");
    REQUIRE(w != nullptr);
    for (std::int64_t i = 0; i < w->value.numel(); ++i) w->value[i] *= 50.0;
    TapeD t2;
    TensorD big = t2.val(g.forward(t2, t2.constant(z), labels, Mode::Eval));
    double peak = 0.0;
    for (std::int64_t i = 0; i < big.numel(); ++i) peak = std::max(peak, std::abs(big[i]));
    CHECK(peak > 1.0);

    SUBCASE("morph endpoints bit-exact") {
        set_row(g.reg(), "bn0.gamma_table", 1, 1.7);
        TapeD td;
        TensorD direct = td.val(g.forward(td, td.constant(z), {1, 1, 1, 1, 1}, Mode::Eval));
        TapeD tmorph;
        std::vector<MorphSpec> specs(5, MorphSpec{2, 1, 1.0});
        TensorD morphed = tmorph.val(g.forward_morph(tmorph, tmorph.constant(z), specs, Mode::Eval));
        CHECK(max_abs_diff(direct, morphed) == 0.0);
    }

    SUBCASE("discriminator heads") {
        VectorDiscConfig dc;
        dc.num_classes = 3;
        dc.hidden = 16;
        dc.n_hidden = 2;
        dc.embed_dim = 4;
        dc.variant = CondVariant::projection;
        VectorDiscriminator<double> d(dc, Rng(103));
        TensorD x = rng.sample_gaussian<double>({5, 2});
        TapeD tape;
        DiscOut o = d.forward(tape, tape.constant(x), labels, Mode::Eval);
        CHECK(tape.val(o.logit).shape() == Shape{5});
        CHECK(o.class_logits == -1);

        VectorDiscConfig bad = dc;
        bad.n_hidden = 1;
        CHECK_THROWS_AS(VectorDiscriminator<double>(bad, Rng(104)), ValueError);
    }
}

TEST_CASE("sr generator upsamples the conditioning image with z injection") {
    SRGenConfig cfg;
    cfg.ch = 8;
    cfg.z_dim = 4;
    cfg.n_up = 2;
    SRGenerator<double> g(cfg, Rng(111));
    CHECK(g.factor() == 4);

    Rng rng(112);
    TensorD y_lo = rng.sample_uniform<double>(-1.0, 1.0, {2, 3, 8, 8});
    TensorD z = sample_z<double>(rng, 2, cfg.z_dim);
    auto chunks = split_z(z, cfg.n_up);

    TapeD tape;
    std::vector<NodeId> ids{tape.constant(chunks[0]), tape.constant(chunks[1])};
    TensorD out = tape.val(g.forward(tape, ids, tape.constant(y_lo), Mode::Eval));
    CHECK(out.shape() == Shape{2, 3, 32, 32});
    double peak = 0.0;
    for (std::int64_t i = 0; i < out.numel(); ++i) peak = std::max(peak, std::abs(out[i]));
    CHECK(peak <= 1.0);

    // a different z moves the output
    TensorD z2 = sample_z<double>(rng, 2, cfg.z_dim);
    auto chunks2 = split_z(z2, cfg.n_up);
    TapeD tape2;
    std::vector<NodeId> ids2{tape2.constant(chunks2[0]), tape2.constant(chunks2[1])};
    TensorD out2 = tape2.val(g.forward(tape2, ids2, tape2.constant(y_lo), Mode::Eval));
    CHECK(max_abs_diff(out, out2) > 1e-9);

    TapeD tape3;
    std::vector<NodeId> too_few{tape3.constant(chunks[0])};
    CHECK_THROWS_AS(g.forward(tape3, too_few, tape3.constant(y_lo), Mode::Eval), ValueError);

    SRGenConfig bad = cfg;
    bad.z_dim = 5;
    CHECK_THROWS_AS(SRGenerator<double>(bad, Rng(113)), ValueError);
}

TEST_CASE("sr discriminator projection is linear in the conditioning image") {
    SRDiscConfig cfg;
    cfg.ch = 8;
    cfg.n_down = 2;
    cfg.n_flat = 1;
    SRDiscriminator<double> d(cfg, Rng(121));

    Rng rng(122);
    TensorD x_hi = rng.sample_uniform<double>(-1.0, 1.0, {2, 3, 32, 32});
    TensorD y1 = rng.sample_uniform<double>(-1.0, 1.0, {2, 3, 8, 8});
    TensorD y2 = rng.sample_uniform<double>(-1.0, 1.0, {2, 3, 8, 8});

    const double a = 0.4, b = -2.1;
    TensorD mixed(Shape{2, 3, 8, 8});
    for (std::int64_t i = 0; i < mixed.numel(); ++i) mixed[i] = a * y1[i] + b * y2[i];

    TapeD tp;
    TensorD psi = tp.val(d.psi_logit(tp, tp.constant(x_hi), Mode::Eval));
    TapeD tz;
    TensorD zero(Shape{2, 3, 8, 8});
    TensorD fz = tz.val(d.forward(tz, tz.constant(x_hi), tz.constant(zero), Mode::Eval));
    CHECK(max_abs_diff(fz, psi) == 0.0);

    TapeD t1, t2, tm;
    TensorD f1 = t1.val(d.forward(t1, t1.constant(x_hi), t1.constant(y1), Mode::Eval));
    TensorD f2 = t2.val(d.forward(t2, t2.constant(x_hi), t2.constant(y2), Mode::Eval));
    TensorD fm = tm.val(d.forward(tm, tm.constant(x_hi), tm.constant(mixed), Mode::Eval));
    for (int i = 0; i < 2; ++i) {
        const double lhs = fm[i] - psi[i];
        const double rhs = a * (f1[i] - psi[i]) + b * (f2[i] - psi[i]);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
    }

    TapeD tbad;
    TensorD y_bad(Shape{2, 3, 4, 4});
    CHECK_THROWS_AS(d.forward(tbad, tbad.constant(x_hi), tbad.constant(y_bad), Mode::Eval),
                    DimensionError);
}

TEST_CASE("assembled networks pass finite-difference gradient checks") {
    Rng coord_rng(7);

    SUBCASE("vector generator") {
        VectorGenConfig cfg;
        cfg.num_classes = 3;
        cfg.z_dim = 4;
        cfg.hidden = 8;
        cfg.n_hidden = 2;
        VectorGenerator<double> g(cfg, Rng(131));
        Rng rng(132);
        TensorD z = sample_z<double>(rng, 4, cfg.z_dim);
        TensorD r = rng.sample_gaussian<double>({4, 2});
        std::vector<int> labels{0, 1, 2, 0};
        auto loss = [&](TapeD& tape) {
            NodeId out = g.forward(tape, tape.constant(z), labels, Mode::GradCheck);
            return tape.mean_all(tape.mul(out, tape.constant(r)));
        };
        CHECK(grad_check_params(g.reg(), loss, coord_rng, 3) < 1e-4);
    }

    SUBCASE("vector discriminator, projection") {
        VectorDiscConfig cfg;
        cfg.num_classes = 3;
        cfg.hidden = 8;
        cfg.n_hidden = 2;
        VectorDiscriminator<double> d(cfg, Rng(141));
        Rng rng(142);
        TensorD x = rng.sample_gaussian<double>({4, 2});
        TensorD r = rng.sample_gaussian<double>({4});
        std::vector<int> labels{2, 0, 1, 1};
        auto loss = [&](TapeD& tape) {
            DiscOut o = d.forward(tape, tape.constant(x), labels, Mode::GradCheck);
            return tape.mean_all(tape.mul(o.logit, tape.constant(r)));
        };
        CHECK(grad_check_params(d.reg(), loss, coord_rng, 3) < 1e-4);
    }

    SUBCASE("image generator") {
        ImageGenConfig cfg;
        cfg.num_classes = 2;
        cfg.z_dim = 6;
        cfg.ch = 6;
        cfg.n_up = 1;
        cfg.out_ch = 2;
        ImageGenerator<double> g(cfg, Rng(151));
        Rng rng(152);
        TensorD z = sample_z<double>(rng, 3, cfg.z_dim);
        TensorD r = rng.sample_gaussian<double>({3, 2, 8, 8});
        std::vector<int> labels{0, 1, 0};
        auto loss = [&](TapeD& tape) {
            NodeId out = g.forward(tape, tape.constant(z), labels, Mode::GradCheck);
            return tape.mean_all(tape.mul(out, tape.constant(r)));
        };
        CHECK(grad_check_params(g.reg(), loss, coord_rng, 2) < 1e-4);
    }

    SUBCASE("image discriminator variants") {
        for (auto variant : {CondVariant::projection, CondVariant::concat_hidden,
                             CondVariant::acgan}) {
            CAPTURE(to_string(variant));
            ImageDiscConfig cfg;
            cfg.num_classes = 2;
            cfg.img_size = 8;
            cfg.ch = 6;
            cfg.n_blocks = 2;
            cfg.n_down = 1;
            cfg.embed_dim = 4;
            cfg.variant = variant;
            ImageDiscriminator<double> d(cfg, Rng(161));
            Rng rng(162);
            TensorD x = rng.sample_uniform<double>(-1.0, 1.0, {3, 3, 8, 8});
            TensorD r = rng.sample_gaussian<double>({3});
            TensorD rc = rng.sample_gaussian<double>({3, 2});
            std::vector<int> labels{1, 0, 1};
            auto loss = [&](TapeD& tape) {
                DiscOut o = d.forward(tape, tape.constant(x), labels, Mode::GradCheck);
                NodeId l = tape.mean_all(tape.mul(o.logit, tape.constant(r)));
                if (o.class_logits != -1)
                    l = tape.add(l, tape.mean_all(tape.mul(o.class_logits, tape.constant(rc))));
                return l;
            };
            CHECK(grad_check_params(d.reg(), loss, coord_rng, 2) < 1e-4);
        }
    }

    SUBCASE("sr pair") {
        SRGenConfig gc;
        gc.ch = 6;
        gc.z_dim = 2;
        gc.n_up = 1;
        SRGenerator<double> g(gc, Rng(171));
        SRDiscConfig dc;
        dc.ch = 6;
        dc.n_down = 1;
        dc.n_flat = 1;
        SRDiscriminator<double> d(dc, Rng(172));

        Rng rng(173);
        TensorD y_lo = rng.sample_uniform<double>(-1.0, 1.0, {2, 3, 6, 6});
        TensorD z = sample_z<double>(rng, 2, gc.z_dim);
        TensorD r = rng.sample_gaussian<double>({2});

        auto g_loss = [&](TapeD& tape) {
            std::vector<NodeId> ids{tape.constant(z)};
            NodeId fake = g.forward(tape, ids, tape.constant(y_lo), Mode::GradCheck);
            return tape.mean_all(tape.mul(d.forward(tape, fake, tape.constant(y_lo),
                                                    Mode::GradCheck),
                                          tape.constant(r)));
        };
        CHECK(grad_check_params(g.reg(), g_loss, coord_rng, 2) < 1e-4);
        CHECK(grad_check_params(d.reg(), g_loss, coord_rng, 2) < 1e-4);
    }
}
