#pragma once

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>

#include "saferoad/error.hpp"

namespace saferoad::detail {

// Splits "http(s)://host[:port][/base]" into a client and a path prefix.
struct Endpoint {
  std::string scheme_host_port;
  std::string base_path;
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "endpoint must start with http:// or https://: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, path_start);
  ep.base_path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!ep.base_path.empty() && ep.base_path.back() == '/') ep.base_path.pop_back();
  return ep;
}

inline std::unique_ptr<httplib::Client> make_client(const Endpoint& ep, std::chrono::milliseconds timeout) {
  auto cli = std::make_unique<httplib::Client>(ep.scheme_host_port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli->set_connection_timeout(secs.count(), usecs.count());
  cli->set_read_timeout(secs.count(), usecs.count());
  cli->set_write_timeout(secs.count(), usecs.count());
  return cli;
}

inline bool is_timeout(httplib::Error e) {
  return e == httplib::Error::Read || e == httplib::Error::Write || e == httplib::Error::ConnectionTimeout;
}

}  // namespace saferoad::detail
