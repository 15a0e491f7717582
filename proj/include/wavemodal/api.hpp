#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <utility>

#include "wavemodal/timefreq.hpp"

namespace wavemodal {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

/// HTTP JSON API over one run directory, versioned under /api/v1. Reads may
/// run concurrently; region uploads re-identify under a single-writer lock.
///
///   GET  /api/v1/status
///   GET  /api/v1/manifest
///   GET  /api/v1/spectrograms
///   GET  /api/v1/spectrograms/{drive}/{dof}          sidecar metadata
///   GET  /api/v1/spectrograms/{drive}/{dof}/tile     float32 magnitude tile
///   GET  /api/v1/regions/{drive}
///   POST /api/v1/regions/{drive}                     re-identify
///   GET  /api/v1/components/{drive}
///   GET  /api/v1/modal, /api/v1/modal/{drive}
///   GET  /api/v1/frf/{drive}
///   GET  /api/v1/validation
class ApiService {
public:
    explicit ApiService(std::filesystem::path run_dir);

    ApiResponse handle(const ApiRequest& request);
    const std::filesystem::path& run_dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::mutex writer_;
    std::atomic<bool> busy_{false};
    std::shared_mutex cache_mutex_;
    std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const Spectrogram>> spectra_;
    std::mutex error_mutex_;
    std::string last_error_;

    std::shared_ptr<const Spectrogram> spectrogram(std::size_t drive, std::size_t dof);
    ApiResponse post_regions(std::size_t drive, const std::string& body);
    ApiResponse status();
};

/// Blocks serving the API on host:port until the process is stopped.
void serve_api(const std::filesystem::path& run_dir, const std::string& host, int port);

}  // namespace wavemodal
