#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "ctb/embeddings.hpp"
#include "ctb/errors.hpp"
#include "ctb/tensor.hpp"
#include "support/roi_oracle.hpp"
#include "support/testing.hpp"
#include "support/weights.hpp"

using namespace ctb;
using ctbtest::oracle_roi_align;

TEST_CASE("CTBW archive round trip and failure modes") {
    EmbeddingConfig cfg;
    cfg.d = 8;
    cfg.roi = 2;
    cfg.n_index = 20;

    SUBCASE("zero archive loads and shapes check out") {
        const TensorArchive a = ctbtest::make_weights(cfg, 3);
        const TensorArchive b = load_archive(save_archive(a));
        CHECK(b.matrix("se.W1", 7, 8).data == std::vector<double>(7 * 8, 0.0));
    }

    SUBCASE("save then load is bit-identical, twice") {
        std::mt19937 rng(53);
        const TensorArchive a = ctbtest::make_weights(cfg, 3, &rng);
        const std::string bytes = save_archive(a);
        const TensorArchive b = load_archive(bytes);
        for (const auto& [name, tensor] : a.tensors) {
            CHECK(b.require(name).values == tensor.values);
        }
        CHECK(save_archive(b) == bytes);
    }

    SUBCASE("missing tensor is reported by name") {
        TensorArchive a = ctbtest::make_weights(cfg, 3);
        a.tensors.erase("se.W2");
        const std::array<double, 7> v{1, 2, 3, 4, 5, 6, 7};
        CHECK_THROWS_WITH_AS(spatial_embedding(v, a, cfg), doctest::Contains("missing tensor se.W2"),
                             ShapeError);
    }

    SUBCASE("bad magic") {
        std::string bytes = save_archive(ctbtest::make_weights(cfg, 3));
        bytes[0] = 'X';
        CHECK_THROWS_WITH_AS(load_archive(bytes), doctest::Contains("magic"), ParseError);
    }

    SUBCASE("truncated payload names the tensor") {
        const std::string bytes = save_archive(ctbtest::make_weights(cfg, 3));
        CHECK_THROWS_WITH_AS(load_archive(bytes.substr(0, bytes.size() / 2)),
                             doctest::Contains("truncated"), ParseError);
    }

    SUBCASE("shape mismatch against configuration") {
        const TensorArchive a = ctbtest::make_weights(cfg, 3);
        CHECK_THROWS_WITH_AS(a.matrix("se.W1", 7, 16), doctest::Contains("se.W1"), ShapeError);
    }

    SUBCASE("hostile shape products are rejected") {
        std::string bytes = "CTBW0001";
        const std::string manifest = "huge f32 4294967295 4294967295 4294967295\n";
        const auto len = static_cast<std::uint32_t>(manifest.size());
        bytes.append(reinterpret_cast<const char*>(&len), 4);
        bytes += manifest;
        CHECK_THROWS_WITH_AS(load_archive(bytes), doctest::Contains("implausibly large"),
                             ParseError);
    }
}

TEST_CASE("indexing embedding follows the paired sinusoidal convention") {
    SUBCASE("index 0 gives the (0,1,0,1,...) pattern exactly") {
        const std::vector<double> v = indexing_embedding(0, 4);
        CHECK(v == std::vector<double>{0.0, 1.0, 0.0, 1.0});
    }

    SUBCASE("index 1, d = 4") {
        const std::vector<double> v = indexing_embedding(1, 4);
        CHECK(v[0] == doctest::Approx(0.84147).epsilon(1e-5));
        CHECK(v[1] == doctest::Approx(0.54030).epsilon(1e-5));
        CHECK(v[2] == doctest::Approx(0.01000).epsilon(1e-5));
        CHECK(v[3] == doctest::Approx(0.99995).epsilon(1e-5));
    }

    SUBCASE("sin/cos pairs satisfy the Pythagorean identity") {
        for (std::size_t i : {0u, 1u, 7u, 123u, 999u}) {
            const std::vector<double> v = indexing_embedding(i, 16);
            for (std::size_t k = 0; k < v.size(); k += 2) {
                CHECK(v[k] * v[k] + v[k + 1] * v[k + 1] == doctest::Approx(1.0).epsilon(1e-12));
            }
        }
    }

    SUBCASE("injective over the default index range") {
        const std::size_t n = 1000;
        const std::size_t d = 8;
        std::vector<std::vector<double>> rows;
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) rows.push_back(indexing_embedding(i, d));
        // L-infinity separation via the first frequency pair is cheapest to
        // check exhaustively.
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double linf = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    linf = std::max(linf, std::fabs(rows[i][k] - rows[j][k]));
                }
                CHECK(linf > 1e-9);
            }
        }
    }
}

TEST_CASE("spatial vector layout") {
    CHECK(spatial_vector(Rect{10, 20, 30, 60}) ==
          std::array<double, 7>{20, 40, 10, 20, 30, 60, 800});
    CHECK(spatial_vector(Rect{5, 5, 5, 5}) == std::array<double, 7>{0, 0, 5, 5, 5, 5, 0});
    CHECK(spatial_vector(Rect{0, 0, 1, 1}) == std::array<double, 7>{1, 1, 0, 0, 1, 1, 1});
}

TEST_CASE("spatial embedding") {
    EmbeddingConfig cfg;
    cfg.d = 6;

    SUBCASE("zero weights give the zero vector") {
        const TensorArchive a = ctbtest::make_weights(cfg, 1);
        const std::array<double, 7> v{3, 4, 0, 0, 3, 4, 12};
        CHECK(spatial_embedding(v, a, cfg) == std::vector<double>(6, 0.0));
    }

    SUBCASE("all-negative pre-activations clamp to zero") {
        TensorArchive a = ctbtest::make_weights(cfg, 1);
        a.set("se.b2", ctbtest::tensor_of({6}, -5.0));
        const std::array<double, 7> v{1, 1, 0, 0, 1, 1, 1};
        CHECK(spatial_embedding(v, a, cfg) == std::vector<double>(6, 0.0));
    }

    SUBCASE("random case matches a dense-arithmetic oracle") {
        std::mt19937 rng(59);
        const TensorArchive a = ctbtest::make_weights(cfg, 1, &rng);
        std::uniform_real_distribution<double> dist(-2.0, 2.0);
        std::array<double, 7> v{};
        for (double& x : v) x = dist(rng);

        const Matrix w1 = a.matrix("se.W1", 7, 6);
        const std::vector<double> b1 = a.vector("se.b1", 6);
        const Matrix w2 = a.matrix("se.W2", 6, 6);
        const std::vector<double> b2 = a.vector("se.b2", 6);
        std::vector<double> hidden(6), expect(6);
        for (int j = 0; j < 6; ++j) {
            double acc = b1[j];
            for (int i = 0; i < 7; ++i) acc += v[i] * w1.at(i, j);
            hidden[j] = std::max(0.0, acc);
        }
        for (int j = 0; j < 6; ++j) {
            double acc = b2[j];
            for (int i = 0; i < 6; ++i) acc += hidden[i] * w2.at(i, j);
            expect[j] = std::max(0.0, acc);
        }

        const std::vector<double> got = spatial_embedding(v, a, cfg);
        for (int j = 0; j < 6; ++j) CHECK(got[j] == doctest::Approx(expect[j]).epsilon(1e-6));
    }

    SUBCASE("output is elementwise nonnegative") {
        std::mt19937 rng(61);
        const TensorArchive a = ctbtest::make_weights(cfg, 1, &rng);
        std::uniform_real_distribution<double> dist(-100.0, 100.0);
        for (int trial = 0; trial < 50; ++trial) {
            std::array<double, 7> v{};
            for (double& x : v) x = dist(rng);
            for (double x : spatial_embedding(v, a, cfg)) CHECK(x >= 0.0);
        }
    }
}

TEST_CASE("roi_align") {
    SUBCASE("constant map stays constant") {
        const FeatureMap fm = ctbtest::constant_feature_map(2, 8, 8, 3.0, 4.0);
        const std::vector<double> grid = roi_align(fm, Rect{1.0, 2.0, 17.0, 21.0}, 3);
        for (double v : grid) CHECK(v == doctest::Approx(3.0).epsilon(1e-12));
    }

    SUBCASE("2x2 map, full box, single bin matches the oracle") {
        FeatureMap fm = ctbtest::constant_feature_map(1, 2, 2, 0.0, 1.0);
        fm.data = {0.0, 1.0, 2.0, 3.0};
        const Rect box{0.0, 0.0, 2.0, 2.0};
        const std::vector<double> got = roi_align(fm, box, 1);
        const std::vector<double> want = oracle_roi_align(fm, box, 1);
        REQUIRE(got.size() == 1);
        CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-12));
    }

    SUBCASE("box inside a constant neighborhood equals that value") {
        FeatureMap fm = ctbtest::constant_feature_map(1, 4, 4, 0.0, 1.0);
        for (std::size_t y = 0; y < 2; ++y) {
            for (std::size_t x = 0; x < 2; ++x) fm.data[y * 4 + x] = 7.0;
        }
        const std::vector<double> grid = roi_align(fm, Rect{0.1, 0.1, 0.9, 0.9}, 2);
        for (double v : grid) CHECK(v == doctest::Approx(7.0).epsilon(1e-12));
    }

    SUBCASE("random boxes match the brute-force oracle") {
        std::mt19937 rng(67);
        const FeatureMap fm = ctbtest::random_feature_map(3, 10, 12, rng, 8.0);
        std::uniform_real_distribution<double> coord(-10.0, 100.0);
        std::uniform_real_distribution<double> extent(1.0, 60.0);
        for (int trial = 0; trial < 40; ++trial) {
            const double x = coord(rng), y = coord(rng);
            const Rect box{x, y, x + extent(rng), y + extent(rng)};
            const std::vector<double> got = roi_align(fm, box, 5);
            const std::vector<double> want = oracle_roi_align(fm, box, 5);
            REQUIRE(got.size() == want.size());
            for (std::size_t i = 0; i < got.size(); ++i) {
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-6));
            }
        }
    }

    SUBCASE("linear in the feature map") {
        std::mt19937 rng(71);
        const FeatureMap x = ctbtest::random_feature_map(2, 6, 6, rng, 2.0);
        FeatureMap y = x;
        for (double& v : y.data) v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        const double alpha = 0.7, beta = -1.3;
        FeatureMap mix = x;
        for (std::size_t i = 0; i < mix.data.size(); ++i) {
            mix.data[i] = alpha * x.data[i] + beta * y.data[i];
        }
        const Rect box{1.0, 1.0, 9.5, 10.0};
        const auto gm = roi_align(mix, box, 4);
        const auto gx = roi_align(x, box, 4);
        const auto gy = roi_align(y, box, 4);
        for (std::size_t i = 0; i < gm.size(); ++i) {
            CHECK(gm[i] == doctest::Approx(alpha * gx[i] + beta * gy[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("feature embedding") {
    EmbeddingConfig cfg;
    cfg.d = 4;
    cfg.roi = 1;

    SUBCASE("zero weights give the bias") {
        TensorArchive a = ctbtest::make_weights(cfg, 4);  // flat = 4 = d
        a.set("fe.b", ctb::Tensor{{4}, {1.0, 2.0, 3.0, 4.0}});
        const std::vector<double> grid{5.0, 6.0, 7.0, 8.0};
        CHECK(feature_embedding(grid, a, cfg) == std::vector<double>{1.0, 2.0, 3.0, 4.0});
    }

    SUBCASE("identity projection permutes the flattened grid") {
        TensorArchive a = ctbtest::make_weights(cfg, 4);
        ctb::Tensor w = ctbtest::tensor_of({4, 4}, 0.0);
        // Reverse permutation plus bias.
        for (int i = 0; i < 4; ++i) w.values[i * 4 + (3 - i)] = 1.0;
        a.set("fe.W", w);
        a.set("fe.b", ctb::Tensor{{4}, {10.0, 10.0, 10.0, 10.0}});
        const std::vector<double> grid{1.0, 2.0, 3.0, 4.0};
        CHECK(feature_embedding(grid, a, cfg) == std::vector<double>{14.0, 13.0, 12.0, 11.0});
    }

    SUBCASE("random input matches the dense oracle") {
        std::mt19937 rng(73);
        EmbeddingConfig big;
        big.d = 6;
        big.roi = 3;
        const TensorArchive a = ctbtest::make_weights(big, 2, &rng);
        std::vector<double> grid(2 * 3 * 3);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        for (double& v : grid) v = dist(rng);

        const Matrix w = a.matrix("fe.W", grid.size(), 6);
        const std::vector<double> b = a.vector("fe.b", 6);
        const std::vector<double> got = feature_embedding(grid, a, big);
        for (int j = 0; j < 6; ++j) {
            double acc = b[j];
            for (std::size_t i = 0; i < grid.size(); ++i) acc += grid[i] * w.at(i, j);
            CHECK(got[j] == doctest::Approx(acc).epsilon(1e-6));
        }
    }

    SUBCASE("mismatched projection shape is an error") {
        const TensorArchive a = ctbtest::make_weights(cfg, 4);
        const std::vector<double> wrong(9, 0.0);
        CHECK_THROWS_AS(feature_embedding(wrong, a, cfg), ShapeError);
    }
}

TEST_CASE("build_tokens") {
    EmbeddingConfig cfg;
    cfg.d = 4;
    cfg.roi = 2;
    cfg.n_index = 50;
    const FeatureMap fm = ctbtest::constant_feature_map(2, 6, 6, 1.0, 10.0);

    SUBCASE("no units give an empty token matrix") {
        const TensorArchive a = ctbtest::make_weights(cfg, 2);
        const TokenMatrix t = build_tokens({}, fm, a, cfg, 0);
        CHECK(t.rows == 0);
        CHECK(t.dim == 12);
        CHECK(t.data.empty());
        CHECK(t.assigned_indices.empty());
    }

    SUBCASE("same seed reproduces bit-identical tokens") {
        std::mt19937 rng(79);
        const TensorArchive a = ctbtest::make_weights(cfg, 2, &rng);
        const std::vector<Polygon> units = {ctbtest::rect_poly(0, 0, 20, 10),
                                            ctbtest::rect_poly(25, 0, 50, 12),
                                            ctbtest::rect_poly(0, 20, 18, 30)};
        const TokenMatrix t1 = build_tokens(units, fm, a, cfg, 42);
        const TokenMatrix t2 = build_tokens(units, fm, a, cfg, 42);
        CHECK(t1.data == t2.data);
        CHECK(t1.assigned_indices == t2.assigned_indices);
        const TokenMatrix t3 = build_tokens(units, fm, a, cfg, 43);
        CHECK(t1.assigned_indices != t3.assigned_indices);
    }

    SUBCASE("middle columns carry the indexing embedding") {
        std::mt19937 rng(83);
        const TensorArchive a = ctbtest::make_weights(cfg, 2, &rng);
        const std::vector<Polygon> units = {ctbtest::rect_poly(0, 0, 20, 10),
                                            ctbtest::rect_poly(25, 0, 50, 12),
                                            ctbtest::rect_poly(0, 20, 18, 30)};
        const TokenMatrix t = build_tokens(units, fm, a, cfg, 7);
        REQUIRE(t.rows == 3);
        REQUIRE(t.dim == 12);
        for (std::size_t i = 0; i < 3; ++i) {
            const std::vector<double> ie = indexing_embedding(t.assigned_indices[i], 4);
            for (std::size_t k = 0; k < 4; ++k) {
                CHECK(t.data[i * 12 + 4 + k] == ie[k]);
            }
        }
    }

    SUBCASE("full concatenation layout reconstructs from parts") {
        std::mt19937 rng(89);
        const TensorArchive a = ctbtest::make_weights(cfg, 2, &rng);
        const std::vector<Polygon> units = {ctbtest::rect_poly(3, 5, 23, 17)};
        const TokenMatrix t = build_tokens(units, fm, a, cfg, 3);
        const Rect box = polygon_bounds(units[0]);
        const std::vector<double> fe = feature_embedding(roi_align(fm, box, 2), a, cfg);
        const std::vector<double> ie = indexing_embedding(t.assigned_indices[0], 4);
        const std::vector<double> se = spatial_embedding(spatial_vector(box), a, cfg);
        for (std::size_t k = 0; k < 4; ++k) {
            CHECK(t.data[k] == fe[k]);
            CHECK(t.data[4 + k] == ie[k]);
            CHECK(t.data[8 + k] == se[k]);
        }
    }

    SUBCASE("capacity overflow is an error") {
        EmbeddingConfig tiny = cfg;
        tiny.n_index = 2;
        const TensorArchive a = ctbtest::make_weights(tiny, 2);
        const std::vector<Polygon> units = {ctbtest::rect_poly(0, 0, 5, 5),
                                            ctbtest::rect_poly(10, 0, 15, 5),
                                            ctbtest::rect_poly(20, 0, 25, 5)};
        CHECK_THROWS_WITH_AS(build_tokens(units, fm, a, tiny, 0),
                             doctest::Contains("exceeds index capacity"), ShapeError);
    }

    SUBCASE("assigned indices are distinct and in range") {
        std::mt19937 rng(97);
        const TensorArchive a = ctbtest::make_weights(cfg, 2);
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto idx = sample_unique_indices(30, 50, seed);
            std::set<std::size_t> s(idx.begin(), idx.end());
            CHECK(s.size() == idx.size());
            for (std::size_t v : idx) CHECK(v < 50);
        }
    }
}
