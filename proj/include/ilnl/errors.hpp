#pragma once

#include <stdexcept>
#include <string>

namespace ilnl {

// Error taxonomy mirrored by the CLI exit codes:
//   config_error / data_error -> 3, transport_error / protocol_error -> 4.
class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

class data_error : public std::runtime_error {
public:
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

class transport_error : public std::runtime_error {
public:
    explicit transport_error(const std::string& msg) : std::runtime_error(msg) {}
};

class protocol_error : public std::runtime_error {
public:
    explicit protocol_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ilnl
