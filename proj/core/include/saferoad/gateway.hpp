#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "saferoad/error.hpp"

namespace saferoad::gateway {

struct GatewayOptions {
  std::filesystem::path workspace;
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  // Console assets served at "/" when the directory exists.
  std::filesystem::path static_dir;
};

// HTTP status used for each error code.
int http_status(ErrorCode code) noexcept;

// HTTP API under /api/v1 over one workspace, with an embedded single-worker
// job queue for inpainting and training.
class Gateway {
 public:
  explicit Gateway(GatewayOptions options);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  // Throws IoError when the port cannot be bound.
  int start();
  // Binds and serves on the calling thread until stop().
  void serve();
  void stop();
  int port() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace saferoad::gateway
