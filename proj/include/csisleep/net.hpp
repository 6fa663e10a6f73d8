#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace csisleep::net {

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port"; throws std::invalid_argument.
Endpoint parse_endpoint(std::string_view text);

// Owning socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.release()) {}
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    int release() {
        const int fd = fd_;
        fd_ = -1;
        return fd;
    }
    void reset();

private:
    int fd_ = -1;
};

// Connects with a timeout; std::nullopt on failure.
std::optional<Socket> connect_to(const Endpoint& endpoint, std::chrono::milliseconds timeout);

// Writes all bytes; false on error (peer gone, timeout).
bool send_all(const Socket& socket, std::string_view data);

// Listening socket. Port 0 picks an ephemeral port, see port().
class Listener {
public:
    explicit Listener(const Endpoint& endpoint, int backlog = 16);

    std::uint16_t port() const { return port_; }
    // Waits up to `timeout` (negative = forever) for a client.
    std::optional<Socket> accept(std::chrono::milliseconds timeout = std::chrono::milliseconds(-1));

private:
    Socket socket_;
    std::uint16_t port_ = 0;
};

// Buffered line reader over a socket.
class LineReader {
public:
    explicit LineReader(const Socket& socket) : socket_(&socket) {}

    // Next line without the newline. std::nullopt at EOF; `partial()` then
    // tells whether the stream ended mid-line.
    std::optional<std::string> next();
    bool partial() const { return partial_; }

private:
    const Socket* socket_;
    std::string buffer_;
    bool eof_ = false;
    bool partial_ = false;
};

}  // namespace csisleep::net
