#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "perch/nn/kernels.hpp"
#include "perch/nn/mlp.hpp"
#include "perch/nn/serialize.hpp"
#include "oracle.hpp"

using namespace perch::nn;

namespace {

std::vector<double> randoms(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// Restores automatic selection when a test ends.
struct KernelModeGuard {
    ~KernelModeGuard() { set_kernel_mode(KernelMode::Auto); }
};

}  // namespace

TEST_CASE("SIMD kernels agree with the scalar reference") {
    const KernelTable* vec = avx2_kernels();
    if (vec == nullptr || !cpu_has_avx2_fma()) {
        MESSAGE("AVX2 kernels unavailable on this machine; equivalence not exercised");
        return;
    }
    const KernelTable& ref = scalar_kernels();
    std::mt19937_64 rng(1);
    // Shapes cover full vectors, remainders and the network's real layers.
    const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 64}, {7, 64, 64}, {256, 64, 1}, {5, 3, 7}, {2, 13, 4}};
    for (const auto& sh : shapes) {
        const std::size_t batch = sh[0], in = sh[1], out = sh[2];
        CAPTURE(batch);
        CAPTURE(in);
        CAPTURE(out);
        const auto x = randoms(batch * in, rng), w = randoms(in * out, rng), b = randoms(out, rng);
        const auto dy = randoms(batch * out, rng);

        std::vector<double> y1(batch * out), y2(batch * out);
        ref.affine(x.data(), w.data(), b.data(), y1.data(), batch, in, out);
        vec->affine(x.data(), w.data(), b.data(), y2.data(), batch, in, out);
        CHECK(max_abs_diff(y1, y2) < 1e-13);

        std::vector<double> dx1(batch * in), dx2(batch * in);
        ref.affine_grad_input(dy.data(), w.data(), dx1.data(), batch, in, out);
        vec->affine_grad_input(dy.data(), w.data(), dx2.data(), batch, in, out);
        CHECK(max_abs_diff(dx1, dx2) < 1e-13);

        std::vector<double> dw1(in * out, 0.5), dw2(in * out, 0.5), db1(out, 0.25), db2(out, 0.25);
        ref.affine_grad_params(x.data(), dy.data(), dw1.data(), db1.data(), batch, in, out);
        vec->affine_grad_params(x.data(), dy.data(), dw2.data(), db2.data(), batch, in, out);
        CHECK(max_abs_diff(dw1, dw2) < 1e-11);
        CHECK(max_abs_diff(db1, db2) < 1e-11);
    }

    for (std::size_t n : {1u, 3u, 4u, 17u, 1000u}) {
        auto x = randoms(n, rng, 25.0);
        x[0] = 1e-12;
        std::vector<double> t1(n), t2(n);
        ref.tanh_forward(x.data(), t1.data(), n);
        vec->tanh_forward(x.data(), t2.data(), n);
        CHECK(max_abs_diff(t1, t2) < 1e-15);

        const auto dy = randoms(n, rng);
        std::vector<double> g1(n), g2(n);
        ref.tanh_backward(t1.data(), dy.data(), g1.data(), n);
        vec->tanh_backward(t1.data(), dy.data(), g2.data(), n);
        CHECK(max_abs_diff(g1, g2) < 1e-15);

        auto p1 = randoms(n, rng), m1 = randoms(n, rng, 0.1), v1 = randoms(n, rng, 0.1);
        for (double& v : v1) v = std::abs(v);
        auto p2 = p1, m2 = m1, v2 = v1;
        const auto g = randoms(n, rng);
        ref.adam(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.19, 0.003);
        vec->adam(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3, 0.9, 0.999, 1e-8, 0.19, 0.003);
        CHECK(max_abs_diff(p1, p2) < 1e-15);
        CHECK(max_abs_diff(m1, m2) < 1e-15);
        CHECK(max_abs_diff(v1, v2) < 1e-15);

        auto tgt1 = randoms(n, rng), tgt2 = tgt1;
        const auto online = randoms(n, rng);
        ref.polyak(tgt1.data(), online.data(), 0.005, n);
        vec->polyak(tgt2.data(), online.data(), 0.005, n);
        CHECK(max_abs_diff(tgt1, tgt2) < 4e-16);
    }
}

TEST_CASE("SIMD tanh keeps special values") {
    const KernelTable* vec = avx2_kernels();
    if (vec == nullptr || !cpu_has_avx2_fma()) return;
    const double x[4] = {NAN, INFINITY, -INFINITY, 800.0};
    double y[4];
    vec->tanh_forward(x, y, 4);
    CHECK(std::isnan(y[0]));
    CHECK(y[1] == 1.0);
    CHECK(y[2] == -1.0);
    CHECK(y[3] == 1.0);
}

TEST_CASE("kernel selection honours the requested mode") {
    KernelModeGuard guard;
    set_kernel_mode(KernelMode::Scalar);
    CHECK(&kernels() == &scalar_kernels());
    CHECK(parse_kernel_mode("auto") == KernelMode::Auto);
    CHECK_THROWS_AS(parse_kernel_mode("sse9"), std::invalid_argument);
    if (avx2_kernels() == nullptr || !cpu_has_avx2_fma()) {
        CHECK_THROWS_AS(set_kernel_mode(KernelMode::Avx2), std::runtime_error);
    } else {
        set_kernel_mode(KernelMode::Avx2);
        CHECK(&kernels() == avx2_kernels());
    }
}


TEST_CASE("network forward pass matches a hand-written reference") {
    for (KernelMode mode : {KernelMode::Scalar, KernelMode::Auto}) {
        KernelModeGuard guard;
        set_kernel_mode(mode);
        std::mt19937_64 rng(2);
        Mlp net({3, 8, 6, 4});
        net.init(rng);
        const auto x = randoms(5 * 3, rng);
        Mlp::Workspace ws;
        const double* y = net.forward(x.data(), 5, ws);
        const auto ref = oracle::forward(net, x, 5);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-13));
    }
}

TEST_CASE("network gradients match central finite differences") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Mlp net({5, 7, 6, 2});
        net.init(rng);
        const std::size_t batch = 4;
        const auto x = randoms(batch * 5, rng);
        const auto dy = randoms(batch * 2, rng);
        auto objective = [&](const Mlp& m, const std::vector<double>& in) {
            const auto y = oracle::forward(m, in, batch);
            double s = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) s += dy[i] * y[i];
            return s;
        };
        Mlp::Workspace ws;
        net.forward(x.data(), batch, ws);
        std::vector<double> grad(net.num_params(), 0.0), dx(batch * 5);
        net.backward(ws, dy.data(), grad.data(), dx.data());

        const double h = 1e-5;
        for (std::size_t k = 0; k < net.num_params(); ++k) {
            Mlp p = net, m = net;
            p.params()[k] += h;
            m.params()[k] -= h;
            const double fd = (objective(p, x) - objective(m, x)) / (2 * h);
            CHECK(std::abs(fd - grad[k]) <= 1e-8 + 1e-4 * std::abs(grad[k]));
        }
        for (std::size_t k = 0; k < x.size(); ++k) {
            auto xp = x, xm = x;
            xp[k] += h;
            xm[k] -= h;
            const double fd = (objective(net, xp) - objective(net, xm)) / (2 * h);
            CHECK(std::abs(fd - dx[k]) <= 1e-8 + 1e-4 * std::abs(dx[k]));
        }
    }
}

TEST_CASE("backward accumulates into the gradient buffer") {
    std::mt19937_64 rng(4);
    Mlp net({2, 3, 1});
    net.init(rng);
    const std::vector<double> x{0.3, -0.7}, dy{1.0};
    Mlp::Workspace ws;
    net.forward(x.data(), 1, ws);
    std::vector<double> once(net.num_params(), 0.0), twice(net.num_params(), 0.0);
    net.backward(ws, dy.data(), once.data(), nullptr);
    net.backward(ws, dy.data(), twice.data(), nullptr);
    net.backward(ws, dy.data(), twice.data(), nullptr);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == doctest::Approx(2 * once[i]));
}

TEST_CASE("Adam follows the bias-corrected update") {
    Adam opt;
    opt.lr = 0.1;
    opt.reset(1);
    std::vector<double> p{1.0};
    const std::vector<double> g{0.5};
    opt.update(p, g);
    // First step: m_hat = g and v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
    double m = 0.1 * 0.5, v = 0.001 * 0.25;
    opt.update(p, g);
    m = 0.9 * m + 0.1 * 0.5;
    v = 0.999 * v + 0.001 * 0.25;
    const double mh = m / (1 - 0.9 * 0.9), vh = v / (1 - 0.999 * 0.999);
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8) - 0.1 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-13));
    CHECK(opt.step == 2);
}

TEST_CASE("soft update blends target toward online") {
    std::mt19937_64 rng(5);
    Mlp online({2, 3, 1}), target({2, 3, 1});
    online.init(rng);
    target.init(rng);
    Mlp copy = target;
    soft_update(copy, online, 1.0);
    CHECK(copy == online);
    copy = target;
    soft_update(copy, online, 0.0);
    CHECK(copy == target);

    Mlp zero({1, 1}), two({1, 1});
    for (double& v : zero.params()) v = 0.0;
    for (double& v : two.params()) v = 2.0;
    soft_update(zero, two, 0.005);
    for (double v : zero.params()) CHECK(v == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("weight archives round trip bit for bit") {
    std::mt19937_64 rng(6);
    Mlp net({3, 4, 2});
    net.init(rng);
    net.params()[0] = -0.0;
    net.params()[1] = 5e-324;
    WeightArchive ar;
    ar.put_network("net", net);
    ar.put_vector("extra", {1.5, -2.25, 1e300});
    std::stringstream ss;
    ar.write(ss);
    const std::string bytes = ss.str();
    CHECK(bytes.compare(0, 8, std::string(kMagic, 8)) == 0);
    // Version 1 as a little-endian u32 right after the magic.
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(bytes[9] == 0);

    const WeightArchive back = WeightArchive::read(ss);
    const Mlp got = back.network("net");
    CHECK(got.sizes() == net.sizes());
    CHECK(std::memcmp(got.params().data(), net.params().data(), net.num_params() * sizeof(double)) == 0);
    CHECK(back.vector("extra") == std::vector<double>{1.5, -2.25, 1e300});
    CHECK(back.has("net"));
    CHECK_FALSE(back.has("missing"));
    CHECK_THROWS(static_cast<void>(back.network("missing")));
}

TEST_CASE("damaged archives are rejected") {
    WeightArchive ar;
    ar.put_vector("v", {1.0, 2.0});
    std::stringstream ss;
    ar.write(ss);
    const std::string good = ss.str();

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    std::stringstream s1(bad_magic);
    CHECK_THROWS_AS(WeightArchive::read(s1), std::runtime_error);

    std::stringstream s2(good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(WeightArchive::read(s2), std::runtime_error);

    std::string bad_version = good;
    bad_version[8] = 9;
    std::stringstream s3(bad_version);
    CHECK_THROWS_AS(WeightArchive::read(s3), std::runtime_error);
}

TEST_CASE("non-finite parameters are detected") {
    Mlp net({2, 2, 1});
    CHECK_NOTHROW(net.check_finite("net"));
    net.params()[3] = INFINITY;
    CHECK_THROWS_AS(net.check_finite("net"), std::domain_error);
}
