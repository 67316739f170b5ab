#include "ctb/tensor.hpp"

#include <cstdint>
#include <cstring>
#include <sstream>

#include "ctb/errors.hpp"

namespace ctb {

namespace {

constexpr char kMagic[] = "CTBW0001";
constexpr std::size_t kMagicLen = 8;

std::string shape_string(std::span<const std::size_t> shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

Matrix affine(const Matrix& x, const Matrix& w, std::span<const double> b) {
    if (!b.empty() && b.size() != w.cols) throw ShapeError("affine: bias length differs");
    Matrix out = matmul(x, w);
    if (!b.empty()) {
        for (std::size_t i = 0; i < out.rows; ++i) {
            for (std::size_t j = 0; j < out.cols; ++j) out.at(i, j) += b[j];
        }
    }
    return out;
}

const Tensor& TensorArchive::require(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ShapeError("missing tensor " + name);
    return it->second;
}

const Tensor& TensorArchive::require(const std::string& name,
                                     std::span<const std::size_t> shape) const {
    const Tensor& t = require(name);
    const bool match = t.shape.size() == shape.size() &&
                       std::equal(shape.begin(), shape.end(), t.shape.begin());
    if (!match) {
        throw ShapeError("tensor " + name + " has shape " + shape_string(t.shape) +
                         ", expected " + shape_string(shape));
    }
    return t;
}

Matrix TensorArchive::matrix(const std::string& name, std::size_t rows, std::size_t cols) const {
    const std::size_t shape[] = {rows, cols};
    const Tensor& t = require(name, shape);
    Matrix m(rows, cols);
    m.data = t.values;
    return m;
}

std::vector<double> TensorArchive::vector(const std::string& name, std::size_t len) const {
    const std::size_t shape[] = {len};
    return require(name, shape).values;
}

TensorArchive load_archive(std::string_view bytes) {
    if (bytes.size() < kMagicLen || std::memcmp(bytes.data(), kMagic, kMagicLen) != 0) {
        throw ParseError("bad CTBW magic");
    }
    std::size_t pos = kMagicLen;
    if (bytes.size() < pos + 4) throw ParseError("truncated CTBW header");
    std::uint32_t manifest_len = 0;
    std::memcpy(&manifest_len, bytes.data() + pos, 4);
    pos += 4;
    if (bytes.size() < pos + manifest_len) throw ParseError("truncated CTBW manifest");
    const std::string_view manifest = bytes.substr(pos, manifest_len);
    pos += manifest_len;

    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
    };
    std::vector<Entry> entries;
    std::istringstream lines{std::string(manifest)};
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        Entry e;
        std::string dtype;
        if (!(fields >> e.name >> dtype)) throw ParseError("malformed CTBW manifest line: " + line);
        if (dtype != "f32") throw ParseError("unsupported dtype '" + dtype + "' for tensor " + e.name);
        long long dim = 0;
        std::size_t product = 1;
        while (fields >> dim) {
            if (dim <= 0) throw ParseError("non-positive dimension for tensor " + e.name);
            // Cap the element count well under any plausible payload so the
            // product cannot wrap.
            if (static_cast<std::size_t>(dim) > (std::size_t{1} << 40) / product) {
                throw ParseError("implausibly large shape for tensor " + e.name);
            }
            product *= static_cast<std::size_t>(dim);
            e.shape.push_back(static_cast<std::size_t>(dim));
        }
        if (e.shape.empty()) throw ParseError("missing shape for tensor " + e.name);
        entries.push_back(std::move(e));
    }

    TensorArchive archive;
    for (const Entry& e : entries) {
        Tensor t;
        t.shape = e.shape;
        const std::size_t count = t.size();
        if (bytes.size() < pos + count * 4) {
            throw ParseError("truncated payload for tensor " + e.name);
        }
        t.values.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t raw = 0;
            std::memcpy(&raw, bytes.data() + pos + i * 4, 4);
            float f;
            std::memcpy(&f, &raw, 4);
            t.values[i] = static_cast<double>(f);
        }
        pos += count * 4;
        if (archive.tensors.count(e.name)) throw ParseError("duplicate tensor " + e.name);
        archive.tensors[e.name] = std::move(t);
    }
    if (pos != bytes.size()) throw ParseError("trailing bytes after CTBW payload");
    return archive;
}

std::string save_archive(const TensorArchive& archive) {
    std::ostringstream manifest;
    for (const auto& [name, tensor] : archive.tensors) {
        manifest << name << " f32";
        for (std::size_t d : tensor.shape) manifest << " " << d;
        manifest << "\n";
    }
    const std::string m = manifest.str();
    if (m.size() > UINT32_MAX) throw ShapeError("CTBW manifest too large");

    std::string out;
    out.append(kMagic, kMagicLen);
    const auto manifest_len = static_cast<std::uint32_t>(m.size());
    out.append(reinterpret_cast<const char*>(&manifest_len), 4);
    out += m;
    for (const auto& [name, tensor] : archive.tensors) {
        if (tensor.values.size() != tensor.size()) {
            throw ShapeError("tensor " + name + " value count differs from shape product");
        }
        for (double v : tensor.values) {
            const auto f = static_cast<float>(v);
            std::uint32_t raw = 0;
            std::memcpy(&raw, &f, 4);
            out.append(reinterpret_cast<const char*>(&raw), 4);
        }
    }
    return out;
}

}  // namespace ctb
