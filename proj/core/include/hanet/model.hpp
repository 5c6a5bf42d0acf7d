// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hanet/detector.hpp"
#include "hanet/encoder.hpp"

namespace hanet {

/// Everything needed to classify a candidate span.
struct Model {
  Vocabulary vocab;
  EncoderParams encoder;
  HeadParams head;
  LabelRegistry registry;

  std::vector<Parameter*> parameters() {
    auto out = encoder.parameters();
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
  }
  std::vector<const Parameter*> parameters() const {
    auto out = encoder.parameters();
    out.push_back(&head.weight);
    out.push_back(&head.bias);
    return out;
  }
};

}  // namespace hanet
