#pragma once

// Camera-motion classification through an external service, with the
// heuristic cascade as fallback.

#include <functional>
#include <span>

#include "clipcurate/camera_motion.hpp"
#include "clipcurate/service.hpp"

namespace clipcurate {

/// POSTs gray frames and expects {"label": "C1".."C6", "confidence": 0..1}.
class ClassifierClient {
 public:
  explicit ClassifierClient(ServiceConfig cfg, Sleeper sleeper = real_sleep)
      : client_(std::move(cfg), std::move(sleeper)) {}

  const ServiceConfig& config() const { return client_.config(); }

  MotionLabel classify(std::span<const FrameBuffer> frames) const {
    const json body = client_.post(gray_payload(frames)).body;
    MotionLabel out;
    try {
      out.label = motion_class_from_string(detail::require_string(body, "label"));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::InvalidArgument) throw Error(ErrorCode::MalformedResponse, e.what());
      throw;
    }
    out.confidence = detail::require_number(body, "confidence", 0.0, 1.0);
    out.rule = "remote";
    out.provenance = "remote";
    return out;
  }

 private:
  JsonClient client_;
};

/// Service label, or `fallback()` with provenance "fallback" when the service
/// is unavailable and the client allows it. Malformed replies always throw.
inline MotionLabel classify_remote(std::span<const FrameBuffer> frames, const ClassifierClient& client,
                                   const std::function<MotionLabel()>& fallback = {}) {
  try {
    return client.classify(frames);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ServiceUnavailable || !client.config().fallback || !fallback) throw;
  }
  MotionLabel label = fallback();
  label.provenance = "fallback";
  return label;
}

}  // namespace clipcurate
