#pragma once

// Minimal blocking TCP on the loopback interface. All failures are IoError.

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gazetrace::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept;
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket();

  bool valid() const { return fd_ >= 0; }
  void close();
  void shutdown_write();
  /// Shuts down both directions; a recv blocked in another thread returns EOF.
  void shutdown_both();
  /// Receive timeout; zero disables it.
  void set_recv_timeout(std::chrono::milliseconds t);

  void send_all(std::span<const std::uint8_t> bytes);
  void send_line(const std::string& line);  // appends '\n'
  /// Next '\n'-terminated line without the newline; nullopt on orderly EOF.
  std::optional<std::string> read_line();
  /// Exactly `n` bytes; nullopt on EOF before the first byte, IoError on a
  /// partial read.
  std::optional<std::vector<std::uint8_t>> read_exact(std::size_t n);

 private:
  bool fill();  // false on EOF

  int fd_ = -1;
  std::vector<std::uint8_t> buf_;
  std::size_t head_ = 0;
};

/// Sockets owned by worker threads that a destructor must be able to wake.
/// Sockets added after shutdown_all() are shut down immediately.
class SocketSet {
 public:
  void add(Socket* s);
  void remove(Socket* s);
  void shutdown_all();

 private:
  std::mutex m_;
  std::vector<Socket*> live_;
  bool closed_ = false;
};

class Listener {
 public:
  /// Binds host:port; port 0 picks an ephemeral port.
  explicit Listener(const Endpoint& at = {});
  Listener(Listener&& o) noexcept;
  Listener& operator=(Listener&&) = delete;
  Listener(const Listener&) = delete;
  ~Listener();

  Endpoint endpoint() const { return at_; }
  /// Waits up to `timeout` for one connection.
  Socket accept(std::chrono::milliseconds timeout = std::chrono::seconds(10));

 private:
  int fd_ = -1;
  Endpoint at_;
};

/// Retries until `timeout` while the peer is not yet listening.
Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout = std::chrono::seconds(10));

/// Chunk framing: u32 little-endian sample count, then float32 LE samples.
void send_chunk(Socket& s, std::span<const float> samples);
/// nullopt on orderly EOF at a frame boundary.
std::optional<std::vector<float>> recv_chunk(Socket& s);

inline constexpr std::uint32_t kMaxChunkSamples = 1u << 24;

}  // namespace gazetrace::net
