#include "gazetrace/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>

#include "gazetrace/errors.hpp"

namespace gazetrace::net {

namespace {

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in make_addr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
    throw IoError("invalid IPv4 address '" + ep.host + "'");
  return addr;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Socket::Socket(Socket&& o) noexcept : fd_(o.fd_), buf_(std::move(o.buf_)), head_(o.head_) { o.fd_ = -1; }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    buf_ = std::move(o.buf_);
    head_ = o.head_;
    o.fd_ = -1;
  }
  return *this;
}

Socket::~Socket() { close(); }

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown_write() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::shutdown_both() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void SocketSet::add(Socket* s) {
  std::lock_guard lock(m_);
  if (closed_) s->shutdown_both();
  live_.push_back(s);
}

void SocketSet::remove(Socket* s) {
  std::lock_guard lock(m_);
  std::erase(live_, s);
}

void SocketSet::shutdown_all() {
  std::lock_guard lock(m_);
  closed_ = true;
  for (auto* s : live_) s->shutdown_both();
}

void Socket::set_recv_timeout(std::chrono::milliseconds t) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(t.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((t.count() % 1000) * 1000);
  if (::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv) != 0) throw IoError(sys_error("setsockopt"));
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
  if (fd_ < 0) throw IoError("send on a closed socket");
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError(sys_error("send failed (peer disconnected?)"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

void Socket::send_line(const std::string& line) {
  std::string s = line;
  s.push_back('\n');
  send_all({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

bool Socket::fill() {
  if (fd_ < 0) throw IoError("receive on a closed socket");
  if (head_ > 0 && (head_ == buf_.size() || head_ > (1u << 16))) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  std::uint8_t tmp[8192];
  for (;;) {
    const ssize_t n = ::recv(fd_, tmp, sizeof tmp, 0);
    if (n > 0) {
      buf_.insert(buf_.end(), tmp, tmp + n);
      return true;
    }
    if (n == 0) return false;
    if (errno == EINTR) continue;
    if (errno == EAGAIN || errno == EWOULDBLOCK) throw IoError("receive timed out");
    throw IoError(sys_error("receive failed"));
  }
}

std::optional<std::string> Socket::read_line() {
  std::size_t scanned = 0;  // relative to head_, which fill() may move
  for (;;) {
    for (; head_ + scanned < buf_.size(); ++scanned) {
      if (buf_[head_ + scanned] == '\n') {
        std::string line(buf_.begin() + static_cast<std::ptrdiff_t>(head_),
                         buf_.begin() + static_cast<std::ptrdiff_t>(head_ + scanned));
        head_ += scanned + 1;
        return line;
      }
    }
    if (!fill()) {
      if (head_ < buf_.size()) throw IoError("connection closed in the middle of a line");
      return std::nullopt;
    }
  }
}

std::optional<std::vector<std::uint8_t>> Socket::read_exact(std::size_t n) {
  while (buf_.size() - head_ < n) {
    if (!fill()) {
      if (head_ == buf_.size()) return std::nullopt;
      throw IoError("connection closed in the middle of a frame");
    }
  }
  std::vector<std::uint8_t> out(buf_.begin() + static_cast<std::ptrdiff_t>(head_),
                                buf_.begin() + static_cast<std::ptrdiff_t>(head_ + n));
  head_ += n;
  return out;
}

Listener::Listener(const Endpoint& at) : at_(at) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) throw IoError(sys_error("socket"));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = make_addr(at);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string msg = sys_error("bind " + at.str());
    ::close(fd_);
    throw IoError(msg);
  }
  if (::listen(fd_, 8) != 0) {
    const std::string msg = sys_error("listen");
    ::close(fd_);
    throw IoError(msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  at_.port = ntohs(addr.sin_port);
}

Listener::Listener(Listener&& o) noexcept : fd_(o.fd_), at_(o.at_) { o.fd_ = -1; }

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

Socket Listener::accept(std::chrono::milliseconds timeout) {
  pollfd p{fd_, POLLIN, 0};
  for (;;) {
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw IoError(sys_error("poll"));
    if (r == 0) throw IoError("no connection on " + at_.str() + " within " + std::to_string(timeout.count()) + " ms");
    break;
  }
  const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) throw IoError(sys_error("accept"));
  set_nodelay(fd);
  return Socket(fd);
}

Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = make_addr(ep);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw IoError(sys_error("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) == 0) {
      set_nodelay(fd);
      return Socket(fd);
    }
    const int err = errno;
    ::close(fd);
    if (err != ECONNREFUSED || std::chrono::steady_clock::now() >= deadline)
      throw IoError("cannot connect to " + ep.str() + ": " + std::strerror(err));
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
}

void send_chunk(Socket& s, std::span<const float> samples) {
  if (samples.size() > kMaxChunkSamples) throw IoError("chunk too large");
  std::vector<std::uint8_t> frame(4 + 4 * samples.size());
  const auto n = static_cast<std::uint32_t>(samples.size());
  for (int b = 0; b < 4; ++b) frame[static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(n >> (8 * b));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &samples[i], 4);
    for (int b = 0; b < 4; ++b) frame[4 + 4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  s.send_all(frame);
}

std::optional<std::vector<float>> recv_chunk(Socket& s) {
  const auto head = s.read_exact(4);
  if (!head) return std::nullopt;
  std::uint32_t n = 0;
  for (int b = 0; b < 4; ++b) n |= static_cast<std::uint32_t>((*head)[static_cast<std::size_t>(b)]) << (8 * b);
  if (n > kMaxChunkSamples) throw DataError("malformed chunk framing: length " + std::to_string(n));
  std::vector<float> out(n);
  if (n == 0) return out;
  const auto body = s.read_exact(4 * static_cast<std::size_t>(n));
  if (!body) throw IoError("connection closed after a chunk header");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>((*body)[4 * i + static_cast<std::size_t>(b)]) << (8 * b);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

}  // namespace gazetrace::net
