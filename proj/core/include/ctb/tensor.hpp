#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctb {

// Row-major dense matrix of doubles. All toolkit arithmetic is double
// precision; archive storage is 32-bit float.
struct Matrix {
    std::size_t rows{};
    std::size_t cols{};
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

// x * w + b applied to every row of x; b may be empty (no bias).
Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b);

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }
};

/// Named tensor container backed by the CTBW byte format:
///   magic "CTBW0001"
///   u32 LE manifest byte length
///   manifest: UTF-8, one line per tensor: "<name> f32 <d0> <d1> ..."
///   payload: row-major little-endian 32-bit floats, manifest order
struct TensorArchive {
    std::map<std::string, Tensor> tensors;

    bool contains(const std::string& name) const { return tensors.count(name) > 0; }
    const Tensor& require(const std::string& name) const;
    const Tensor& require(const std::string& name, std::span<const std::size_t> shape) const;

    Matrix matrix(const std::string& name, std::size_t rows, std::size_t cols) const;
    std::vector<double> vector(const std::string& name, std::size_t len) const;

    void set(const std::string& name, Tensor t) { tensors[name] = std::move(t); }
};

TensorArchive load_archive(std::string_view bytes);
std::string save_archive(const TensorArchive& archive);

}  // namespace ctb
