#include "mecal/version.hpp"

#include <boost/version.hpp>
#include <gsl/gsl_version.h>

#include <Eigen/Core>

namespace mecal {

std::map<std::string, std::string> library_versions() {
  return {
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"gsl", gsl_version},
      {"boost", std::to_string(BOOST_VERSION / 100000) + "." + std::to_string(BOOST_VERSION / 100 % 1000)},
  };
}

}  // namespace mecal
