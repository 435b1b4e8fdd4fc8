#include "tmca/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <vector>

#include "tmca/errors.hpp"

namespace tmca {
namespace {

cv::Mat to_8bit(const cv::Mat& decoded) {
    if (decoded.depth() == CV_8U) return decoded;
    cv::Mat out;
    if (decoded.depth() == CV_16U) {
        decoded.convertTo(out, CV_8U, 1.0 / 257.0);
    } else {
        decoded.convertTo(out, CV_8U, 255.0);
    }
    return out;
}

// Converts an 8-bit BGR/BGRA/gray Mat to float [channels, H, W].
torch::Tensor mat_to_tensor(const cv::Mat& decoded, int channels, const std::string& what) {
    if (decoded.empty()) throw DataError("cannot decode image: " + what);
    if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
    cv::Mat mat = to_8bit(decoded);
    const int src_channels = mat.channels();
    const int64_t h = mat.rows;
    const int64_t w = mat.cols;
    auto out = torch::empty({channels, h, w}, torch::kFloat32);
    auto acc = out.accessor<float, 3>();
    for (int64_t y = 0; y < h; ++y) {
        const auto* row = mat.ptr<uint8_t>(static_cast<int>(y));
        for (int64_t x = 0; x < w; ++x) {
            const auto* px = row + x * src_channels;
            float r, g, b;
            if (src_channels == 1) {
                r = g = b = px[0];
            } else {
                b = px[0];
                g = px[1];
                r = px[2];
            }
            if (channels == 1) {
                // ITU-R 601 luma, same weights as cv::COLOR_BGR2GRAY.
                acc[0][y][x] = src_channels == 1 ? r / 255.0f : (0.299f * r + 0.587f * g + 0.114f * b) / 255.0f;
            } else {
                acc[0][y][x] = r / 255.0f;
                acc[1][y][x] = g / 255.0f;
                acc[2][y][x] = b / 255.0f;
            }
        }
    }
    return out;
}

cv::Mat tensor_to_mat(const torch::Tensor& image) {
    auto t = image.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    if (t.dim() == 2) t = t.unsqueeze(0);
    if (t.dim() != 3 || (t.size(0) != 1 && t.size(0) != 3 && t.size(0) != 4)) {
        throw DataError("expected [H,W] or [1|3|4,H,W] image tensor");
    }
    const int ch = static_cast<int>(t.size(0));
    const int h = static_cast<int>(t.size(1));
    const int w = static_cast<int>(t.size(2));
    auto bytes = (t.clamp(0.0, 1.0) * 255.0).round().to(torch::kUInt8).contiguous();
    auto acc = bytes.accessor<uint8_t, 3>();
    cv::Mat mat(h, w, CV_8UC(ch));
    for (int y = 0; y < h; ++y) {
        auto* row = mat.ptr<uint8_t>(y);
        for (int x = 0; x < w; ++x) {
            if (ch == 1) {
                row[x] = acc[0][y][x];
            } else {
                // RGB(A) -> BGR(A)
                row[x * ch + 0] = acc[2][y][x];
                row[x * ch + 1] = acc[1][y][x];
                row[x * ch + 2] = acc[0][y][x];
                if (ch == 4) row[x * ch + 3] = acc[3][y][x];
            }
        }
    }
    return mat;
}

cv::Mat decode_bytes(std::string_view bytes) {
    if (bytes.empty()) return {};
    cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data()));
    return cv::imdecode(buf, cv::IMREAD_UNCHANGED);
}

}  // namespace

torch::Tensor read_image(const std::filesystem::path& path, int channels) {
    return mat_to_tensor(cv::imread(path.string(), cv::IMREAD_UNCHANGED), channels, path.string());
}

torch::Tensor decode_image(std::string_view bytes, int channels) {
    return mat_to_tensor(decode_bytes(bytes), channels, "<buffer>");
}

torch::Tensor read_gray(const std::filesystem::path& path) {
    return read_image(path, 1).squeeze(0);
}

torch::Tensor decode_gray(std::string_view bytes) {
    return decode_image(bytes, 1).squeeze(0);
}

std::string encode_png(const torch::Tensor& image) {
    std::vector<uint8_t> out;
    // Fixed compression settings keep the encoded bytes reproducible.
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imencode(".png", tensor_to_mat(image), out, params)) throw DataError("PNG encoding failed");
    return {out.begin(), out.end()};
}

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
    const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6};
    if (!cv::imwrite(path.string(), tensor_to_mat(image), params)) {
        throw DataError("cannot write " + path.string());
    }
}

std::string encode_overlay(const torch::Tensor& image, const torch::Tensor& mask, double alpha) {
    auto rgb = image.detach().to(torch::kFloat32);
    if (rgb.dim() == 2) rgb = rgb.unsqueeze(0);
    if (rgb.size(0) == 1) rgb = rgb.expand({3, rgb.size(1), rgb.size(2)});
    auto m = (mask.detach().to(torch::kFloat32).reshape({1, rgb.size(1), rgb.size(2)}) > 0.5).to(torch::kFloat32);
    auto tint = torch::zeros_like(rgb);
    tint[0].fill_(1.0);
    auto blended = rgb * (1.0 - alpha * m) + tint * (alpha * m);
    auto rgba = torch::cat({blended, torch::ones({1, rgb.size(1), rgb.size(2)})}, 0);
    return encode_png(rgba);
}

}  // namespace tmca
