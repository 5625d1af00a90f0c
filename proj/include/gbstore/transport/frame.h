#ifndef GBSTORE_TRANSPORT_FRAME_H_
#define GBSTORE_TRANSPORT_FRAME_H_

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "gbstore/core/model.h"
#include "gbstore/placement/placement.h"

namespace gbstore {

// Wire layout, little-endian, 35 bytes:
//   magic u32 | exec_id 16B | index u32 | status u8 | reason_len u16 |
//   payload_len u64
// followed by `reason_len` reason bytes and `payload_len` payload bytes.
inline constexpr uint32_t kFrameMagic = 0x47424154;  // "GBAT"
inline constexpr size_t kFrameHeaderSize = 35;

enum class FrameStatus : uint8_t {
  kOk = 0,
  kSoftError = 1,
  // Control frame: reason carries the DT node id, payload the request body.
  kActivation = 2,
};

class FrameError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DeliveryFrame {
  ExecutionId exec_id;
  uint32_t index = 0;
  FrameStatus status = FrameStatus::kOk;
  std::string reason;
  std::string payload;

  friend bool operator==(const DeliveryFrame&, const DeliveryFrame&) = default;
};

struct FrameHeader {
  ExecutionId exec_id;
  uint32_t index = 0;
  FrameStatus status = FrameStatus::kOk;
  uint16_t reason_len = 0;
  uint64_t payload_len = 0;
};

std::string encode_frame_header(const DeliveryFrame& frame);

/// Header followed by reason and payload in one buffer.
std::string encode_frame(const DeliveryFrame& frame);

/// Validates magic, status and the soft-error/payload invariant.
FrameHeader decode_frame_header(std::string_view bytes);

/// Decodes a complete frame; trailing bytes are an error.
DeliveryFrame decode_frame(std::string_view bytes);

struct ActivationMessage {
  ExecutionId exec_id;
  NodeId dt_node;
  std::string request_body;
};

DeliveryFrame to_frame(const ActivationMessage& msg);
ActivationMessage activation_from_frame(DeliveryFrame frame);

}  // namespace gbstore

#endif  // GBSTORE_TRANSPORT_FRAME_H_
