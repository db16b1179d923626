#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace keyprop {

/// Local HTTP service over one or more sequence manifests.
///
///   GET  /sequences
///   GET  /sequences/{id}/frames/{camera}/{n}
///   GET  /sequences/{id}/crops/{individual}/{camera}/{n}
///   GET  /annotations/{id}            PUT /annotations/{id}
///   GET  /calibration-clicks/{id}     PUT /calibration-clicks/{id}
///   POST /template/{id}/build
///
/// Writes go through a temporary file and a rename. Reads share a lock;
/// a second writer on the same resource gets 409 instead of waiting, as does
/// a PUT whose If-Match does not name the current ETag.
class Service {
 public:
  explicit Service(const std::vector<std::filesystem::path>& manifests);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Blocks until stop(). Returns false if the socket cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace keyprop
