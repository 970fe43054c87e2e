// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_ATTRIBUTE_HPP
#define NCVC_ATTRIBUTE_HPP

#include <Eigen/Dense>

namespace ncvc {

// 2-dimensional one-hot clean/noisy control vector. Exactly (1,0) or (0,1);
// construct through the factories only.
class AttributeVector {
 public:
  static AttributeVector clean() { return AttributeVector(true); }
  static AttributeVector noisy() { return AttributeVector(false); }

  bool is_clean() const { return clean_; }
  AttributeVector opposite() const { return AttributeVector(!clean_); }

  Eigen::Vector2d vec() const {
    return clean_ ? Eigen::Vector2d(1.0, 0.0) : Eigen::Vector2d(0.0, 1.0);
  }

  bool operator==(const AttributeVector& o) const { return clean_ == o.clean_; }

 private:
  explicit AttributeVector(bool clean) : clean_(clean) {}
  bool clean_;
};

}  // namespace ncvc

#endif  // NCVC_ATTRIBUTE_HPP
