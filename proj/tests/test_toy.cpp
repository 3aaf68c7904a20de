#include <doctest.h>

#include <cmath>

#include "spikelab/error.hpp"
#include "spikelab/kernels.hpp"
#include "spikelab/linalg.hpp"
#include "spikelab/spike.hpp"
#include "spikelab/toy.hpp"
#include "test_helpers.hpp"

using namespace spikelab;

namespace {

// Binary task separable by the mean-activation rule: class 0 near the
// origin, class 1 offset per-coordinate (larger norm, larger score).
struct ToyTask {
    Tensor xs;
    std::vector<int> labels;
};

ToyTask make_task(std::size_t d, std::size_t per_class, double offset, std::uint64_t seed, double sd = 1.0) {
    Rng rng(seed);
    ToyTask task;
    task.xs = Tensor::zeros({2 * per_class, d});
    for (std::size_t i = 0; i < 2 * per_class; ++i) {
        bool far_class = i >= per_class;
        for (std::size_t j = 0; j < d; ++j)
            task.xs.at2(i, j) = (far_class ? offset : 0.0) + sd * rng.normal();
        task.labels.push_back(far_class ? 1 : 0);
    }
    return task;
}

constexpr double kTaskSd = 0.7071067811865476;  // variance 1/2

}  // namespace

TEST_CASE("sample_clean_net: row covariance approaches identity") {
    ReluToyNet net = sample_clean_net(8, 100000, 5);
    // empirical covariance of the rows g_i
    Tensor gt({8, 100000}, std::vector<double>(net.g.size()));
    for (std::size_t i = 0; i < 100000; ++i)
        for (std::size_t j = 0; j < 8; ++j) gt.data[j * 100000 + i] = net.g.at2(i, j);
    Tensor cov = linalg::scatter_covariance(gt);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(cov.at2(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(0.03));

    ReluToyNet again = sample_clean_net(8, 100000, 5);
    CHECK(bitwise_equal(net.g, again.g));

    ReluToyNet tiny = sample_clean_net(1, 1, 9);
    CHECK(tiny.g.size() == 1);
}

TEST_CASE("sample_backdoored_net: theta = 0 reproduces the clean net") {
    Tensor nu = Tensor::zeros({6});
    nu.data[2] = 1.0;
    ReluToyNet clean = sample_clean_net(6, 500, 77);
    ReluToyNet bd = sample_backdoored_net(6, 500, nu, 0.0, 77);
    CHECK(bitwise_equal(clean.g, bd.g));
}

TEST_CASE("sample_backdoored_net: variance along nu is 1 + theta") {
    Rng nrng(3);
    Tensor nu = random_sparse_unit(8, 2, nrng);
    ReluToyNet net = sample_backdoored_net(8, 100000, nu, 0.5, 13);
    // projections of rows onto nu and onto a perpendicular direction
    Tensor perp = Tensor::zeros({8});
    // build a vector orthogonal to nu deterministically
    perp.data[0] = nu.data[1];
    perp.data[1] = -nu.data[0];
    for (std::size_t j = 2; j < 8; ++j) perp.data[j] = 0.013 * static_cast<double>(j);
    double along = dot(perp, nu);
    for (std::size_t j = 0; j < 8; ++j) perp.data[j] -= along * nu.data[j];
    perp = normalize_unit(perp);

    double var_nu = 0.0, var_perp = 0.0, mu_nu = 0.0, mu_perp = 0.0;
    for (std::size_t i = 0; i < 100000; ++i) {
        double pn = 0.0, pp = 0.0;
        for (std::size_t j = 0; j < 8; ++j) {
            pn += net.g.at2(i, j) * nu.data[j];
            pp += net.g.at2(i, j) * perp.data[j];
        }
        mu_nu += pn / 100000.0;
        mu_perp += pp / 100000.0;
        var_nu += pn * pn / 100000.0;
        var_perp += pp * pp / 100000.0;
    }
    var_nu -= mu_nu * mu_nu;
    var_perp -= mu_perp * mu_perp;
    CHECK(var_nu == doctest::Approx(1.5).epsilon(0.02));
    CHECK(var_perp == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("tune_threshold: separated, identical, and degenerate inputs") {
    ReluToyNet net = sample_clean_net(4, 64, 21);
    // perfectly separated scores: far class has much larger norm
    ToyTask task = make_task(4, 200, 50.0, 31);
    ThresholdFit fit = tune_threshold(net, task.xs, task.labels);
    CHECK(fit.balanced_accuracy == doctest::Approx(1.0));

    // identical class distributions: balanced accuracy stays near 1/2
    ToyTask same = make_task(4, 300, 0.0, 32);
    ThresholdFit fit2 = tune_threshold(net, same.xs, same.labels);
    CHECK(fit2.balanced_accuracy <= 0.57);

    std::vector<int> ones(same.labels.size(), 1);
    CHECK_THROWS_AS(tune_threshold(net, same.xs, ones), ArgumentError);
}

TEST_CASE("toy fixture task: balanced accuracy >= 0.95") {
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        ToyTask train = make_task(32, 1500, 1.5, 100 + seed, kTaskSd);
        ReluToyNet net = sample_clean_net(32, 256, 200 + seed);
        ThresholdFit fit = tune_threshold(net, train.xs, train.labels);
        CHECK(fit.balanced_accuracy >= 0.95);
    }
}

TEST_CASE("trigger_rows: identity at lambda 0 and exact displacement norm") {
    Tensor xs = testutil::randn({10, 6}, 51);
    Rng nrng(52);
    Tensor nu = random_sparse_unit(6, 2, nrng);
    CHECK(bitwise_equal(trigger_rows(xs, nu, 0.0), xs));
    Tensor moved = trigger_rows(xs, nu, 2.5);
    for (std::size_t i = 0; i < 10; ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            double diff = moved.at2(i, j) - xs.at2(i, j);
            d2 += diff * diff;
        }
        CHECK(std::sqrt(d2) == doctest::Approx(2.5).epsilon(1e-12));
    }
    CHECK_THROWS_AS(trigger_rows(xs, nu, -1.0), ArgumentError);
}

TEST_CASE("backdoored ASR grows with lambda and the planted net dominates") {
    const std::size_t d = 32, m = 256;
    ToyTask train = make_task(d, 1500, 1.5, 61, kTaskSd);
    ToyTask eval = make_task(d, 500, 1.5, 62, kTaskSd);
    Rng nrng(63);
    Tensor nu = random_sparse_unit(d, 4, nrng);
    ReluToyNet bd = sample_backdoored_net(d, m, nu, 6.0, 64);
    tune_threshold(bd, train.xs, train.labels);

    // source rows = class 0 (the low-score class)
    Tensor src = Tensor::zeros({500, d});
    for (std::size_t i = 0; i < 500; ++i)
        for (std::size_t j = 0; j < d; ++j) src.at2(i, j) = eval.xs.at2(i, j);

    double prev = -1.0;
    double last = 0.0;
    for (double lam : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        std::vector<double> sc = toy_scores(bd, trigger_rows(src, nu, lam));
        std::size_t hits = 0;
        for (double s : sc)
            if (toy_predict(bd, s) == 1) ++hits;
        double asr = static_cast<double>(hits) / 500.0;
        CHECK(asr >= prev - 0.02);  // non-decreasing up to sampling noise
        prev = asr;
        last = asr;
    }
    CHECK(last >= 0.9);

    // triggered scores stochastically dominate clean scores (Mann-Whitney)
    std::vector<double> clean_scores = toy_scores(bd, src);
    std::vector<double> trig_scores = toy_scores(bd, trigger_rows(src, nu, 2.0));
    CHECK(testutil::mann_whitney_z(clean_scores, trig_scores) > 2.33);  // p < 0.01
}

TEST_CASE("pca_displacement: trivial and geometric properties") {
    const std::size_t d = 16, m = 64, n = 200;
    ToyTask eval = make_task(d, n, 1.5, 71);
    Rng nrng(72);
    Tensor nu = random_sparse_unit(d, 2, nrng);
    ReluToyNet net = sample_backdoored_net(d, m, nu, 0.5, 73);

    Tensor clean = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) clean.at2(i, j) = eval.xs.at2(i, j);

    // lambda = 0: zero mean displacement
    PcaDisplacement none = pca_displacement(net, clean, clean);
    CHECK(std::abs(none.mean_displacement[0]) < 1e-12);
    CHECK(std::abs(none.mean_displacement[1]) < 1e-12);

    PcaDisplacement disp = pca_displacement(net, clean, trigger_rows(clean, nu, 2.0));
    // clean projections of mean-centered data have zero mean
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m1 += disp.clean_proj.at2(i, 0) / static_cast<double>(n);
        m2 += disp.clean_proj.at2(i, 1) / static_cast<double>(n);
    }
    CHECK(std::abs(m1) < 1e-9);
    CHECK(std::abs(m2) < 1e-9);

    // orthonormal projection never expands pairwise distances
    Tensor acts_c = Tensor::zeros({n, m});
    {
        // recompute activations to compare distances (relu of G x)
        Tensor z = linalg::matmul(clean, net.g, false, true);
        kernels::relu_forward(z.data.data(), z.data.data(), z.size());
        acts_c = z;
    }
    for (std::size_t a = 0; a < 20; ++a) {
        std::size_t b = a + 37;
        if (b >= n) break;
        double dp = 0.0, dfull = 0.0;
        for (int t = 0; t < 2; ++t) {
            double diff = disp.clean_proj.at2(a, static_cast<std::size_t>(t)) -
                          disp.clean_proj.at2(b, static_cast<std::size_t>(t));
            dp += diff * diff;
        }
        for (std::size_t j = 0; j < m; ++j) {
            double diff = acts_c.at2(a, j) - acts_c.at2(b, j);
            dfull += diff * diff;
        }
        CHECK(dp <= dfull * (1.0 + 1e-9));
    }
}

TEST_CASE("pca_displacement: displacement aligns with the projected key") {
    const std::size_t d = 32, m = 256, n = 400;
    ToyTask eval = make_task(d, n, 1.5, 81);
    Rng nrng(82);
    Tensor nu = random_sparse_unit(d, 4, nrng);
    ReluToyNet net = sample_backdoored_net(d, m, nu, 0.5, 83);
    Tensor clean = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) clean.at2(i, j) = eval.xs.at2(i, j);
    PcaDisplacement disp = pca_displacement(net, clean, trigger_rows(clean, nu, 2.0));
    CHECK(disp.cosine >= 0.9);
}
