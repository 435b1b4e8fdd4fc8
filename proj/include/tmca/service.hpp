#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <json.hpp>

#include "tmca/checkpoint.hpp"

namespace tmca {

// Carries the HTTP status the error maps to.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& message) : std::runtime_error(message), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

struct SegmentRequest {
    std::string image;  // encoded PNG/JPEG bytes
    std::string text;
    double threshold = 0.5;
    std::optional<std::string> reference_mask;  // encoded, same size as image
    bool probabilities = false;
};

struct SegmentResult {
    std::string mask_png;  // 8-bit 0/255, input dimensions
    int width = 0;
    int height = 0;
    std::optional<std::string> probabilities_png;
    std::optional<double> dice_vs_reference;
    double latency_ms = 0;
    std::string model_fingerprint;

    // Binary payloads are base64 encoded.
    nlohmann::json to_json() const;
};

struct ServiceLimits {
    size_t max_image_bytes = 8u << 20;
    int max_side = 4096;
};

// Holds one immutable loaded model. Requests share it under a read lock;
// load() swaps it under an exclusive lock.
class SegmentationService {
public:
    explicit SegmentationService(ServiceLimits limits = {});

    void load(const std::filesystem::path& checkpoint);
    void load(LoadedCheckpoint checkpoint);
    bool loaded() const;

    // All of these throw ServiceError(503) before a model is loaded.
    std::string fingerprint() const;
    nlohmann::json health() const;
    nlohmann::json model_summary() const;
    SegmentResult segment(const SegmentRequest& request) const;

    const ServiceLimits& limits() const { return limits_; }

private:
    ServiceLimits limits_;
    mutable std::shared_mutex mutex_;
    std::shared_ptr<const LoadedCheckpoint> model_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::string cors_origin = "*";
    size_t max_body_bytes = 16u << 20;
};

// POST /api/v1/segment, GET /api/v1/health, GET /api/v1/model.
class HttpServer {
public:
    HttpServer(SegmentationService& service, ServerOptions options = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    int start();
    // Binds and serves on the calling thread until stop().
    void run();
    void stop();
    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::string host_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace tmca
