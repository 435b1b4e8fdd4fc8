#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <string_view>

namespace tmca {

// Decoded image as float32 [ch, H, W] in [0, 1]. channels must be 1 or 3.
torch::Tensor read_image(const std::filesystem::path& path, int channels);
torch::Tensor decode_image(std::string_view bytes, int channels);

// Single-channel float32 [H, W] in [0, 1].
torch::Tensor read_gray(const std::filesystem::path& path);
torch::Tensor decode_gray(std::string_view bytes);

// Writes [ch, H, W] or [H, W] float32 in [0, 1] as 8-bit PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);
std::string encode_png(const torch::Tensor& image);

// RGBA PNG with the binary mask alpha-blended in red over the image.
std::string encode_overlay(const torch::Tensor& image, const torch::Tensor& mask, double alpha = 0.45);

}  // namespace tmca
