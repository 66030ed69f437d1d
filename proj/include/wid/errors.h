#ifndef WID_ERRORS_H
#define WID_ERRORS_H

#include <stdexcept>
#include <string>

namespace wid {

// Error families map onto CLI exit codes: config 2, data 3, training 4,
// verification 5.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

struct TrainAbort : std::runtime_error {
    explicit TrainAbort(const std::string& m) : std::runtime_error(m) {}
};

struct VerifyFailure : std::runtime_error {
    explicit VerifyFailure(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace wid

#endif
