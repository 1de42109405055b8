#include "v6recon/transport.hpp"

#include <array>
#include <cerrno>
#include <cstring>
#include <utility>

#include <netinet/icmp6.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include "v6recon/codec.hpp"

namespace v6recon {

void NullTransport::send(std::span<const uint8_t>) {
    if (closed_) {
        throw TransportFailure("send on closed transport");
    }
}

void LoopbackTransport::send(std::span<const uint8_t> packet) {
    std::lock_guard lock(mutex_);
    if (closed_) {
        throw TransportFailure("send on closed transport");
    }
    queue_.emplace_back(packet.begin(), packet.end());
}

std::vector<std::vector<uint8_t>> LoopbackTransport::poll_received() {
    std::lock_guard lock(mutex_);
    if (closed_) {
        throw TransportFailure("poll on closed transport");
    }
    return std::exchange(queue_, {});
}

void LoopbackTransport::finish_sending() {
    std::lock_guard lock(mutex_);
    finished_ = true;
}

bool LoopbackTransport::drained() {
    std::lock_guard lock(mutex_);
    return finished_ && queue_.empty();
}

void LoopbackTransport::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
}

void EchoTransport::send(std::span<const uint8_t> packet) {
    auto reply = codec::build_echo_reply(packet, std::nullopt, 64);
    std::lock_guard lock(mutex_);
    if (closed_) {
        throw TransportFailure("send on closed transport");
    }
    queue_.push_back(std::move(reply));
}

std::vector<std::vector<uint8_t>> EchoTransport::poll_received() {
    std::lock_guard lock(mutex_);
    if (closed_) {
        throw TransportFailure("poll on closed transport");
    }
    return std::exchange(queue_, {});
}

void EchoTransport::finish_sending() {
    std::lock_guard lock(mutex_);
    finished_ = true;
}

bool EchoTransport::drained() {
    std::lock_guard lock(mutex_);
    return finished_ && queue_.empty();
}

void EchoTransport::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
}

// --- live -----------------------------------------------------------------

LiveTransport::LiveTransport(Address128 source) : source_{source} {
    // IPPROTO_RAW on an AF_INET6 socket sends caller-built IPv6 headers.
    send_fd_ = ::socket(AF_INET6, SOCK_RAW, IPPROTO_RAW);
    if (send_fd_ < 0) {
        throw TransportFailure(std::string("raw send socket: ") + std::strerror(errno));
    }
    recv_fd_ = ::socket(AF_INET6, SOCK_RAW | SOCK_NONBLOCK, IPPROTO_ICMPV6);
    if (recv_fd_ < 0) {
        int err = errno;
        ::close(send_fd_);
        throw TransportFailure(std::string("raw receive socket: ") + std::strerror(err));
    }
    icmp6_filter filter;
    ICMP6_FILTER_SETBLOCKALL(&filter);
    ICMP6_FILTER_SETPASS(ICMP6_ECHO_REPLY, &filter);
    ICMP6_FILTER_SETPASS(ICMP6_DST_UNREACH, &filter);
    ICMP6_FILTER_SETPASS(ICMP6_PACKET_TOO_BIG, &filter);
    ICMP6_FILTER_SETPASS(ICMP6_TIME_EXCEEDED, &filter);
    ICMP6_FILTER_SETPASS(ICMP6_PARAM_PROB, &filter);
    ::setsockopt(recv_fd_, IPPROTO_ICMPV6, ICMP6_FILTER, &filter, sizeof(filter));
}

LiveTransport::~LiveTransport() { close(); }

void LiveTransport::send(std::span<const uint8_t> packet) {
    if (send_fd_ < 0) {
        throw TransportFailure("send on closed transport");
    }
    if (packet.size() < codec::kIpv6HeaderSize) {
        throw TransportFailure("packet shorter than an IPv6 header");
    }
    sockaddr_in6 dst{};
    dst.sin6_family = AF_INET6;
    std::memcpy(&dst.sin6_addr, packet.data() + 24, 16);
    ssize_t n = ::sendto(send_fd_, packet.data(), packet.size(), 0,
                         reinterpret_cast<const sockaddr*>(&dst), sizeof(dst));
    if (n < 0 && errno != ENOBUFS && errno != EAGAIN) {
        throw TransportFailure(std::string("sendto: ") + std::strerror(errno));
    }
}

std::vector<std::vector<uint8_t>> LiveTransport::poll_received() {
    if (recv_fd_ < 0) {
        throw TransportFailure("poll on closed transport");
    }
    std::vector<std::vector<uint8_t>> out;
    std::array<uint8_t, 65536> buf{};
    for (int i = 0; i < 1024; ++i) {
        sockaddr_in6 from{};
        socklen_t from_len = sizeof(from);
        ssize_t n = ::recvfrom(recv_fd_, buf.data(), buf.size(), 0,
                               reinterpret_cast<sockaddr*>(&from), &from_len);
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                break;
            }
            throw TransportFailure(std::string("recvfrom: ") + std::strerror(errno));
        }
        // ICMPv6 raw sockets strip the IPv6 header; rebuild one so the codec
        // sees whole packets. The hop limit of the reply is not needed.
        size_t icmp_len = static_cast<size_t>(n);
        std::vector<uint8_t> packet(codec::kIpv6HeaderSize + icmp_len);
        Address128 responder = Address128::from_bytes(
            std::span<const uint8_t, 16>(reinterpret_cast<const uint8_t*>(&from.sin6_addr), 16));
        codec::write_ipv6_header(packet, static_cast<uint16_t>(icmp_len), 0, responder, source_);
        std::memcpy(packet.data() + codec::kIpv6HeaderSize, buf.data(), icmp_len);
        out.push_back(std::move(packet));
    }
    return out;
}

void LiveTransport::close() {
    if (send_fd_ >= 0) {
        ::close(send_fd_);
        send_fd_ = -1;
    }
    if (recv_fd_ >= 0) {
        ::close(recv_fd_);
        recv_fd_ = -1;
    }
}

}  // namespace v6recon
