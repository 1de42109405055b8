#pragma once

#include <stdexcept>
#include <string>
#include <vector>

// Minimal ZIP container: writes stored members, reads stored or deflated ones.
namespace v6recon::zip {

class ZipError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Entry {
    std::string name;
    std::string data;
    bool operator==(const Entry&) const = default;
};

/// Members are written in the given order with a fixed 1980-01-01 timestamp.
std::string encode(const std::vector<Entry>& entries);
/// Members in central-directory order.
std::vector<Entry> decode(const std::string& archive);

}  // namespace v6recon::zip
