#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "v6recon/address.hpp"

namespace v6recon {

class TransportFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Moves raw IPv6 packets. One thread may call send() while another calls
/// poll_received().
class Transport {
public:
    virtual ~Transport() = default;

    virtual void send(std::span<const uint8_t> packet) = 0;
    /// Zero or more whole packets received since the last call.
    virtual std::vector<std::vector<uint8_t>> poll_received() = 0;
    /// No further send() calls will follow.
    virtual void finish_sending() {}
    /// True once finish_sending() was called and nothing more can arrive.
    /// Transports that cannot know this return false and the receive grace
    /// period applies.
    virtual bool drained() { return false; }
    virtual void close() {}
};

/// Drops everything; never receives.
class NullTransport : public Transport {
public:
    void send(std::span<const uint8_t>) override;
    std::vector<std::vector<uint8_t>> poll_received() override { return {}; }
    bool drained() override { return finished_; }
    void finish_sending() override { finished_ = true; }
    void close() override { closed_ = true; }

private:
    std::atomic<bool> finished_ = false;
    std::atomic<bool> closed_ = false;
};

/// Hands back exactly what was sent.
class LoopbackTransport : public Transport {
public:
    void send(std::span<const uint8_t> packet) override;
    std::vector<std::vector<uint8_t>> poll_received() override;
    void finish_sending() override;
    bool drained() override;
    void close() override;

private:
    std::mutex mutex_;
    std::vector<std::vector<uint8_t>> queue_;
    bool finished_ = false;
    bool closed_ = false;
};

/// Every target answers its echo request from its own address.
class EchoTransport : public Transport {
public:
    void send(std::span<const uint8_t> packet) override;
    std::vector<std::vector<uint8_t>> poll_received() override;
    void finish_sending() override;
    bool drained() override;
    void close() override;

private:
    std::mutex mutex_;
    std::vector<std::vector<uint8_t>> queue_;
    bool finished_ = false;
    bool closed_ = false;
};

/// Raw-socket adapter for real networks (Linux, needs CAP_NET_RAW).
/// Construction throws TransportFailure when raw sockets are unavailable.
class LiveTransport : public Transport {
public:
    explicit LiveTransport(Address128 source);
    ~LiveTransport() override;
    LiveTransport(const LiveTransport&) = delete;
    LiveTransport& operator=(const LiveTransport&) = delete;

    void send(std::span<const uint8_t> packet) override;
    std::vector<std::vector<uint8_t>> poll_received() override;
    void close() override;

private:
    Address128 source_;
    int send_fd_ = -1;
    int recv_fd_ = -1;
};

}  // namespace v6recon
