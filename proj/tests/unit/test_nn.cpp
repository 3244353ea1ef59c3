#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "flexpe/container.hpp"
#include "flexpe/nn.hpp"
#include "support.hpp"

using namespace flexpe;

namespace {

const std::string kData = FLEXPE_DATA_DIR;

std::string fixture(const std::string& name) { return kData + "/fixtures/" + name; }

LayerSpec dense(const std::string& name, int in, int out, double w = 0.1) {
    LayerSpec l;
    l.kind = LayerKind::dense;
    l.name = name;
    l.in_shape = {in};
    l.out_shape = {out};
    l.weight.assign(static_cast<std::size_t>(in) * out, w);
    l.bias.assign(static_cast<std::size_t>(out), -0.05);
    l.psum_max = 2.0;
    return l;
}

LayerSpec act(LayerKind k, const std::string& name) {
    LayerSpec l;
    l.kind = k;
    l.name = name;
    return l;
}

ModelSpec tiny_mlp() {
    ModelSpec m;
    m.name = "tiny";
    m.input_shape = {4};
    m.layers = {dense("fc1", 4, 3), act(LayerKind::tanh, "a1"), dense("fc2", 3, 2, -0.2)};
    m.layers[0].weight[5] = 0.75;
    return m;
}

std::string swap_byte(std::string s, std::size_t from_end) {
    s[s.size() - from_end] ^= 0x40;
    return s;
}

}  // namespace

TEST_CASE("container round trip") {
    Container c;
    c.kind = "dataset";
    c.records.push_back({"dataset", "name=x", "input=2x3"});
    const std::vector<float> f{1.5f, -2.0f, 0.0f, 3.25f, 7.0f, -0.125f};
    const std::vector<std::int32_t> i{3, -1};
    c.add_f32("inputs", {1, 2, 3}, f);
    c.add_i32("labels", {2}, i);
    CHECK_THROWS_AS(c.add_f32("bad", {4}, f), ShapeError);

    const std::string bytes = serialize_container(c);
    CHECK(bytes.rfind("FLEXPE-CONTAINER 1\nkind dataset\n", 0) == 0);
    const Container back = parse_container(bytes);
    CHECK(back.kind == "dataset");
    CHECK(back.f32("inputs") == f);
    CHECK(back.i32("labels") == i);
    CHECK(back.tensor("inputs").shape == std::vector<int>{1, 2, 3});
    CHECK(back.digest.rfind("sha256:", 0) == 0);
    CHECK(back.digest == "sha256:" + sha256_hex(back.blob));
    CHECK(serialize_container(back) == bytes);

    CHECK_THROWS_AS(back.tensor("nope"), ParseError);
    CHECK_THROWS_AS(back.i32("inputs"), ParseError);
    CHECK_FALSE(back.has_tensor("nope"));
}

TEST_CASE("container corruption is rejected") {
    Container c;
    c.kind = "model";
    const std::vector<float> f{1, 2, 3, 4};
    c.add_f32("w", {4}, f);
    const std::string good = serialize_container(c);
    CHECK_NOTHROW(parse_container(good));
    CHECK_THROWS_AS(parse_container(swap_byte(good, 3)), ParseError);  // blob byte flipped
    CHECK_THROWS_AS(parse_container("FLEXPE-CONTAINER 2\n" + good.substr(good.find('\n') + 1)), ParseError);
    CHECK_THROWS_AS(parse_container(good.substr(0, good.size() - 1)), ParseError);
    CHECK_THROWS_AS(parse_container(good + "x"), ParseError);
    CHECK_THROWS_AS(parse_container("FLEXPE-CONTAINER 1\nkind model"), ParseError);
    CHECK_THROWS_AS(read_container("/nonexistent/file.fpm"), ParseError);
}

TEST_CASE("sha256 of a known string") {
    const std::string abc = "abc";
    const std::vector<std::uint8_t> b(abc.begin(), abc.end());
    CHECK(sha256_hex(b) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("dims and records") {
    CHECK(parse_dims("32x64") == std::vector<int>{32, 64});
    CHECK(format_dims({1, 8, 8}) == "1x8x8");
    CHECK_THROWS_AS(parse_dims("3x0"), ParseError);
    CHECK_THROWS_AS(parse_dims("axb"), ParseError);
    const std::vector<std::string> rec{"layer", "kind=dense", "name=fc"};
    CHECK(record_value(rec, "name") == "fc");
    CHECK(record_has(rec, "kind"));
    CHECK_THROWS_AS(record_value(rec, "in"), ParseError);
}

TEST_CASE("two-layer MLP round trip") {
    const ModelSpec m = tiny_mlp();
    const ModelSpec back = parse_model(serialize_model(m));
    REQUIRE(back.layers.size() == 3);
    int dense_layers = 0;
    for (const auto& l : back.layers) dense_layers += l.kind == LayerKind::dense;
    CHECK(dense_layers == 2);
    CHECK(back.name == "tiny");
    CHECK(back.input_shape == std::vector<int>{4});
    CHECK(back.layers[2].out_shape == std::vector<int>{2});
    CHECK(back.layers[1].in_shape == std::vector<int>{3});
    CHECK(back.layers[0].psum_max == 2.0);
    // weights travel as f32
    CHECK(back.layers[0].weight[5] == 0.75);
    CHECK(back.layers[0].weight[0] == double(0.1f));
    CHECK_FALSE(back.digest.empty());
    CHECK(serialize_model(back) == serialize_model(m));
}

TEST_CASE("shape mismatch names both layers") {
    ModelSpec m = tiny_mlp();
    m.layers[2] = dense("fc2", 5, 2);
    try {
        validate(m);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("fc2") != std::string::npos);
        CHECK(msg.find("a1") != std::string::npos);
    }
    ModelSpec zero = tiny_mlp();
    zero.layers[0].psum_max = 0;
    CHECK_THROWS_AS(validate(zero), ShapeError);
    ModelSpec sm = tiny_mlp();
    sm.layers.insert(sm.layers.begin() + 1, act(LayerKind::softmax, "early"));
    CHECK_THROWS_AS(validate(sm), ShapeError);
    ModelSpec w = tiny_mlp();
    w.layers[0].weight.pop_back();
    CHECK_THROWS_AS(validate(w), ShapeError);
    CHECK_THROWS_AS(parse_layer_kind("gelu"), ParseError);
}

TEST_CASE("model file errors") {
    const std::string good = serialize_model(tiny_mlp());
    CHECK_THROWS_AS(parse_model(swap_byte(good, 2)), ParseError);
    Container c = parse_container(good);
    c.records.push_back({"optimizer", "name=adam"});
    CHECK_THROWS_AS(parse_model(serialize_container(c)), ParseError);
    Container missing = parse_container(good);
    missing.records[1] = {"layer", "kind=dense", "name=fc1", "in=4", "out=3", "weight=ghost", "psum_max=1"};
    CHECK_THROWS_AS(parse_model(serialize_container(missing)), ParseError);
    Dataset d;
    d.name = "d";
    d.input_shape = {4};
    d.inputs = {0, 0, 0, 0};
    d.labels = {1};
    CHECK_THROWS_AS(parse_model(serialize_dataset(d)), ParseError);
}

TEST_CASE("shipped fixtures load and match their digests") {
    const ModelSpec mlp = load_model(fixture("digits_mlp.fpm"));
    CHECK(mlp.digest == "sha256:931b3bc90717df4ca04112b2fcc4150cb64b1e0d437f394f7c99a8f0771ed7c8");
    CHECK(mlp.layers.size() == 4);
    CHECK(mlp.input_shape == std::vector<int>{64});
    const ModelSpec conv = load_model(fixture("digits_conv.fpm"));
    CHECK(conv.digest == "sha256:62f15f0dbd3152e7a0998f2884652f46eb1a993598c98dcea206cfef9fa81224");
    CHECK(conv.layers[0].kind == LayerKind::conv);
    CHECK(conv.layers[0].conv == ConvShape{8, 8, 1, 8, 3, 1, 0});
    const Dataset d = load_dataset(fixture("digits_test.fpd"));
    CHECK(d.digest == "sha256:77f2e8ac2dd092705a613159e24c253fdf0bc720e7aa4f099d9846cdd606bc47");
    CHECK(d.samples() == 899);
    CHECK(d.features() == 64);
    CHECK(d.sample(3).size() == 64);
}

TEST_CASE("dataset round trip") {
    Dataset d;
    d.name = "small";
    d.input_shape = {2};
    d.inputs = {0.5, -0.25, 1.0, 0.0};
    d.labels = {1, 0};
    const Dataset back = parse_dataset(serialize_dataset(d));
    CHECK(back.inputs == d.inputs);
    CHECK(back.labels == d.labels);
    CHECK(back.sample(1)[0] == 1.0);
    d.labels.push_back(2);
    CHECK_THROWS_AS(serialize_dataset(d), ShapeError);
}

TEST_CASE("quantize_tensor") {
    const std::vector<double> t{-1.0, 0.5};
    const QuantizedTensor q = quantize_tensor(t, Precision::FxP8);
    CHECK(q.format == mac_format(8));
    CHECK(q.scale == doctest::Approx(1.0 / kWeightRail));
    CHECK(q.raw[0] == -120);  // -7.5 in Q(8,4)
    CHECK(q.raw[1] == 60);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(std::abs(q.real(i) - t[i]) <= 0.5 * q.format.lsb() * q.scale);

    const std::vector<double> zeros(5, 0.0);
    const QuantizedTensor z = quantize_tensor(zeros, Precision::FxP16);
    CHECK(z.scale == 1.0);
    for (auto r : z.raw) CHECK(r == 0);

    Uniform u(19);
    for (Precision p : {Precision::FxP4, Precision::FxP8, Precision::FxP16, Precision::FxP32}) {
        std::vector<double> v(200);
        const double spread = u.range(0.01, 50);
        for (double& x : v) x = u.range(-spread, spread);
        const QuantizedTensor r = quantize_tensor(v, p);
        for (std::size_t i = 0; i < v.size(); ++i)
            REQUIRE(std::abs(r.real(i) - v[i]) <= 0.5 * r.format.lsb() * r.scale * (1 + 1e-12));
    }
    CHECK_THROWS_AS(quantize_tensor(std::vector<double>{1.0, NAN}, Precision::FxP8), ContractError);
}

TEST_CASE("reference forward on a hand-checked model") {
    ModelSpec m;
    m.name = "one";
    m.input_shape = {2};
    LayerSpec l = dense("fc", 2, 1);
    l.weight = {2.0, -1.0};
    l.bias = {0.5};
    m.layers = {l, act(LayerKind::sigmoid, "s")};
    // no trailing weights layer: the logits are the sigmoid outputs
    Dataset d;
    d.name = "d";
    d.input_shape = {2};
    d.inputs = {1.0, 3.0};
    d.labels = {0};
    const Logits r = reference_forward(m, d);
    REQUIRE(r.values.size() == 1);
    const double pre = 2.0 - 3.0 + 0.5;
    CHECK(r.values[0] == doctest::Approx(1.0 / (1.0 + std::exp(-pre / kMaxNorm))));
}

TEST_CASE("single-sample dataset gives top-1 of 0 or 1") {
    const ModelSpec m = load_model(fixture("digits_mlp.fpm"));
    const Dataset all = load_dataset(fixture("digits_test.fpd"));
    for (std::size_t i : {0u, 1u, 2u, 3u}) {
        Dataset one;
        one.name = "one";
        one.input_shape = all.input_shape;
        const auto s = all.sample(i);
        one.inputs.assign(s.begin(), s.end());
        one.labels = {all.labels[i]};
        const AccuracyReport r = run_inference(m, one, Precision::FxP16);
        CHECK(r.samples == 1);
        CHECK((r.top1_fixed == 0.0 || r.top1_fixed == 1.0));
        CHECK((r.top1_reference == 0.0 || r.top1_reference == 1.0));
    }
}

TEST_CASE("precision constraints") {
    const ModelSpec m = load_model(fixture("digits_mlp.fpm"));
    const Dataset d = load_dataset(fixture("digits_test.fpd"));
    CHECK_THROWS_AS(run_inference(m, d, Precision::FxP4), ConfigError);  // softmax at FxP4
    CHECK_THROWS_AS(run_inference(m, d, Precision::H12), ConfigError);
    Dataset wrong;
    wrong.name = "w";
    wrong.input_shape = {3};
    wrong.inputs = {0, 0, 0};
    wrong.labels = {0};
    CHECK_THROWS_AS(run_inference(m, wrong, Precision::FxP16), ShapeError);
}

TEST_CASE("fixed forward is deterministic") {
    const ModelSpec m = load_model(fixture("digits_conv.fpm"));
    const Dataset d = load_dataset(fixture("digits_test.fpd"));
    const FixedRun a = fixed_forward(m, d, Precision::FxP8, default_stage_plan(8));
    const FixedRun b = fixed_forward(m, d, Precision::FxP8, default_stage_plan(8));
    CHECK(a.logits_raw == b.logits_raw);
    CHECK(a.softmax == b.softmax);
    CHECK(a.logits.classes == 10);
}

TEST_CASE("fixture accuracy and logit fidelity") {
    const Dataset d = load_dataset(fixture("digits_test.fpd"));
    for (const char* name : {"digits_mlp.fpm", "digits_conv.fpm"}) {
        CAPTURE(name);
        const ModelSpec m = load_model(fixture(name));
        const AccuracyReport r8 = run_inference(m, d, Precision::FxP8);
        const AccuracyReport r16 = run_inference(m, d, Precision::FxP16);
        const AccuracyReport r32 = run_inference(m, d, Precision::FxP32);
        CHECK(std::abs(r8.delta) <= 2.0);
        CHECK(std::abs(r16.delta) <= 2.0);
        CHECK(std::abs(r32.delta) <= 0.5);
        CHECK(r8.delta == doctest::Approx(100 * (r8.top1_fixed - r8.top1_reference)));
        CHECK(r32.top1_fixed >= r16.top1_fixed);
        CHECK(r16.top1_fixed >= r8.top1_fixed - 0.01);
        CHECK(r8.logit_mae > r16.logit_mae);
        CHECK(r16.logit_mae > r32.logit_mae);
        CHECK(r8.top1_reference == r32.top1_reference);
        CHECK(r8.calibration == "min-max");
        for (const auto* r : {&r8, &r16, &r32}) {
            CHECK(r->top1_fixed >= 0);
            CHECK(r->top1_fixed <= 1);
            CHECK(r->samples == 899);
        }
    }
    // frozen regression values for the MLP fixture
    const ModelSpec mlp = load_model(fixture("digits_mlp.fpm"));
    CHECK(run_inference(mlp, d, Precision::FxP8).top1_fixed == doctest::Approx(861.0 / 899));
    CHECK(run_inference(mlp, d, Precision::FxP16).top1_reference == doctest::Approx(875.0 / 899));
}

TEST_CASE("argmax and top1") {
    CHECK(argmax(std::vector<double>{0.1, 0.7, 0.7, -1}) == 1);
    Logits l;
    l.classes = 2;
    l.values = {0.0, 1.0, 2.0, 1.0, 0.5, 0.5};
    CHECK(top1(l, std::vector<int>{1, 0, 0}) == doctest::Approx(1.0));
    CHECK(top1(l, std::vector<int>{0, 0, 1}) == doctest::Approx(1.0 / 3));
    CHECK_THROWS_AS(top1(l, std::vector<int>{1}), ShapeError);
}
