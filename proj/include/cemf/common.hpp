#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace cemf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// All library failures surface as this type so callers can catch one thing.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw Error(what);
}

} // namespace cemf
