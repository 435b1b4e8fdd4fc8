#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "oracles.hpp"

namespace testing {

inline torch::Tensor to_tensor(const oracle::Mat& m, torch::Dtype dtype = torch::kFloat64) {
    auto t = torch::empty({static_cast<int64_t>(m.size()), static_cast<int64_t>(m[0].size())}, torch::kFloat64);
    for (size_t i = 0; i < m.size(); ++i)
        for (size_t j = 0; j < m[i].size(); ++j) t[i][j] = m[i][j];
    return t.to(dtype);
}

inline oracle::Mat to_mat(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat64).contiguous();
    oracle::Mat m(c.size(0), oracle::Vec(c.size(1)));
    auto a = c.accessor<double, 2>();
    for (int64_t i = 0; i < c.size(0); ++i)
        for (int64_t j = 0; j < c.size(1); ++j) m[i][j] = a[i][j];
    return m;
}

// Masks given as flat vectors of side*side pixels.
inline torch::Tensor masks_tensor(const std::vector<oracle::Vec>& masks, int64_t side) {
    return to_tensor(masks, torch::kFloat32).reshape({static_cast<int64_t>(masks.size()), side, side});
}

// Max relative error between autograd and central differences of f at x.
inline double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                             double h = 1e-5) {
    x = x.detach().clone().to(torch::kFloat64).set_requires_grad(true);
    auto y = f(x);
    y.backward();
    const auto analytic = x.grad().detach().clone().reshape({-1});
    auto flat = x.detach().clone().reshape({-1});
    // Elementwise relative error; components far below the gradient's own
    // scale are compared against that scale instead of themselves.
    const double scale = std::max(analytic.abs().max().item<double>(), 1e-12);
    double worst = 0;
    torch::NoGradGuard ng;
    for (int64_t i = 0; i < flat.numel(); ++i) {
        auto plus = flat.clone(), minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        const double fp = f(plus.reshape(x.sizes())).item<double>();
        const double fm = f(minus.reshape(x.sizes())).item<double>();
        const double numeric = (fp - fm) / (2 * h);
        const double a = analytic[i].item<double>();
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3 * scale});
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("tmca_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
