#include <httplib.h>

#include "tmca/service.hpp"

namespace tmca {

struct HttpServer::Impl {
    httplib::Server server;
};

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}, {"status", status}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ServiceError& e) {
        send_error(res, e.status(), e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

HttpServer::HttpServer(SegmentationService& service, ServerOptions options) : impl_(std::make_unique<Impl>()) {
    auto& svr = impl_->server;
    port_ = options.port;
    svr.set_payload_max_length(options.max_body_bytes);
    svr.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});

    svr.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    svr.Get("/api/v1/health", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service.health()); });
    });

    svr.Get("/api/v1/model", [&service](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, service.model_summary()); });
    });

    svr.Post("/api/v1/segment", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!service.loaded()) throw ServiceError(503, "model not loaded");
            if (!req.is_multipart_form_data()) throw ServiceError(400, "expected multipart/form-data");
            if (!req.has_file("image")) throw ServiceError(400, "missing image file");
            SegmentRequest r;
            r.image = req.get_file_value("image").content;
            if (req.has_file("text")) r.text = req.get_file_value("text").content;
            if (req.has_file("threshold")) {
                const auto& t = req.get_file_value("threshold").content;
                try {
                    size_t used = 0;
                    r.threshold = std::stod(t, &used);
                    if (used != t.size()) throw std::invalid_argument(t);
                } catch (const std::exception&) {
                    throw ServiceError(400, "threshold is not a number");
                }
            }
            if (req.has_file("reference_mask")) r.reference_mask = req.get_file_value("reference_mask").content;
            if (req.has_file("probs")) {
                const auto& p = req.get_file_value("probs").content;
                r.probabilities = p == "true" || p == "1";
            }
            send_json(res, 200, service.segment(r).to_json());
        });
    });

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            const int status = res.status;
            send_error(res, status, status == 413 ? "payload too large" : httplib::status_message(status));
        }
    });
    host_ = options.host;
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
    auto& svr = impl_->server;
    if (port_ == 0) {
        port_ = svr.bind_to_any_port(host_);
    } else if (!svr.bind_to_port(host_, port_)) {
        port_ = -1;
    }
    if (port_ < 0) throw std::runtime_error("cannot bind " + host_);
    thread_ = std::thread([&svr] { svr.listen_after_bind(); });
    svr.wait_until_ready();
    return port_;
}

void HttpServer::run() {
    auto& svr = impl_->server;
    if (port_ == 0) {
        port_ = svr.bind_to_any_port(host_);
        if (port_ < 0) throw std::runtime_error("cannot bind " + host_);
        svr.listen_after_bind();
    } else if (!svr.listen(host_, port_)) {
        throw std::runtime_error("cannot listen on " + host_ + ":" + std::to_string(port_));
    }
}

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace tmca
