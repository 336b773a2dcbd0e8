#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "hetpfl/errors.hpp"

namespace hetpfl {

/// Dense row-major tensor of 64-bit reals. Plain value type: copies are
/// deep, there is no view aliasing.
class Tensor {
public:
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (numel_of(shape) != data.size()) {
            throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " +
                                 std::to_string(data.size()) + " entries");
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape_) {
        std::size_t n = numel_of(shape_);
        return Tensor(std::move(shape_), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> shape_, double v) {
        std::size_t n = numel_of(shape_);
        return Tensor(std::move(shape_), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vec(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows_) {
        std::size_t r = rows_.size();
        std::size_t c = r == 0 ? 0 : rows_.begin()->size();
        std::vector<double> out;
        out.reserve(r * c);
        for (const auto& row : rows_) {
            if (row.size() != c) throw DimensionError("ragged matrix initializer");
            out.insert(out.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(out));
    }

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    std::size_t rows() const { return shape.size() == 2 ? shape[0] : (shape.empty() ? 0 : shape[0]); }
    std::size_t cols() const { return shape.size() == 2 ? shape[1] : 1; }

    double& at(std::size_t i) { return data[i]; }
    double at(std::size_t i) const { return data[i]; }
    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape_) {
        return std::accumulate(shape_.begin(), shape_.end(), std::size_t{1},
                               [](std::size_t a, std::size_t b) { return a * b; });
    }

    static std::string shape_str(const std::vector<std::size_t>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }

    std::string shape_str() const { return shape_str(shape); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
    }
}

inline void require_matrix(const Tensor& t, const char* op) {
    if (t.shape.size() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-d tensor, got " + t.shape_str());
    }
}

// ---------------------------------------------------------------------------
// Forward kernels. The autodiff tape wraps exactly these functions, so the
// plain inference path and the training path cannot drift apart.
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    if (a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul: inner dimensions disagree " + a.shape_str() + " vs " +
                             b.shape_str());
    }
    std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
        }
    }
    return out;
}

/// a * b^T for 2-d tensors (used by matmul backward).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    if (a.shape[1] != b.shape[1]) {
        throw DimensionError("matmul_nt: shapes " + a.shape_str() + " vs " + b.shape_str());
    }
    std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(j, p);
            out.at(i, j) = s;
        }
    return out;
}

/// a^T * b for 2-d tensors (used by matmul backward).
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_tn");
    require_matrix(b, "matmul_tn");
    if (a.shape[0] != b.shape[0]) {
        throw DimensionError("matmul_tn: shapes " + a.shape_str() + " vs " + b.shape_str());
    }
    std::size_t m = a.shape[1], k = a.shape[0], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
            double av = a.at(p, i);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * b.at(p, j);
        }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out = a;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.data[i];
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.data) v *= c;
    return out;
}

inline Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = a;
    for (double& v : out.data) v += c;
    return out;
}

/// Add a length-n bias vector to every row of an [m x n] matrix.
inline Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_matrix(x, "add_bias");
    if (b.shape.size() != 1 || b.shape[0] != x.shape[1]) {
        throw DimensionError("add_bias: bias " + b.shape_str() + " does not match " +
                             x.shape_str());
    }
    Tensor out = x;
    for (std::size_t i = 0; i < x.shape[0]; ++i)
        for (std::size_t j = 0; j < x.shape[1]; ++j) out.at(i, j) += b.at(j);
    return out;
}

inline Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

inline constexpr double kSigmoidClamp = 1e-12;

/// Numerically stable logistic, clamped into (0,1) so downstream logs and
/// probability invariants hold even at saturating inputs.
inline double sigmoid_scalar(double x) {
    double p;
    if (x >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-x));
    } else {
        double e = std::exp(x);
        p = e / (1.0 + e);
    }
    return std::clamp(p, kSigmoidClamp, 1.0 - kSigmoidClamp);
}

inline Tensor sigmoid(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = sigmoid_scalar(v);
    return out;
}

inline constexpr double kLogFloor = 1e-12;

inline Tensor log_floored(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::log(std::max(v, kLogFloor));
    return out;
}

inline Tensor abs_val(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data) v = std::fabs(v);
    return out;
}

inline double sum_value(const Tensor& x) {
    return std::accumulate(x.data.begin(), x.data.end(), 0.0);
}

inline double mean_value(const Tensor& x) {
    if (x.numel() == 0) throw ContractError("mean of an empty tensor");
    return sum_value(x) / static_cast<double>(x.numel());
}

/// Stable softmax over a 1-d tensor.
inline Tensor softmax(const Tensor& x) {
    if (x.shape.size() != 1) throw DimensionError("softmax: expected 1-d, got " + x.shape_str());
    double mx = *std::max_element(x.data.begin(), x.data.end());
    Tensor out = x;
    double z = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : out.data) v /= z;
    return out;
}

inline Tensor slice_flat(const Tensor& x, std::size_t offset, std::size_t len) {
    if (offset + len > x.numel()) {
        throw DimensionError("slice: [" + std::to_string(offset) + ", " +
                             std::to_string(offset + len) + ") out of range for " +
                             std::to_string(x.numel()) + " entries");
    }
    return Tensor({len}, std::vector<double>(x.data.begin() + static_cast<std::ptrdiff_t>(offset),
                                             x.data.begin() +
                                                 static_cast<std::ptrdiff_t>(offset + len)));
}

inline Tensor reshape(const Tensor& x, std::vector<std::size_t> shape_) {
    if (Tensor::numel_of(shape_) != x.numel()) {
        throw DimensionError("reshape: " + x.shape_str() + " to incompatible " +
                             Tensor::shape_str(shape_));
    }
    return Tensor(std::move(shape_), x.data);
}

/// Gather rows of a 2-d tensor into a new tensor, in index order.
inline Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& idx) {
    require_matrix(m, "gather_rows");
    Tensor out = Tensor::zeros({idx.size(), m.shape[1]});
    for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t c = 0; c < m.shape[1]; ++c) out.at(r, c) = m.at(idx[r], c);
    return out;
}

inline void ensure_finite(const Tensor& t, const std::string& context) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t.data[i])) {
            throw NumericError("non-finite value in " + context + " at entry " +
                               std::to_string(i));
        }
    }
}

}  // namespace hetpfl
