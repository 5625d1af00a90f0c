#include "gbstore/transport/frame.h"

#include <cstring>
#include <limits>

namespace gbstore {
namespace {

template <typename T>
void put_le(char* out, T v) {
  for (size_t i = 0; i < sizeof(T); ++i) {
    out[i] = static_cast<char>(static_cast<uint64_t>(v) >> (8 * i) & 0xff);
  }
}

template <typename T>
T get_le(const char* in) {
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

std::string encode_frame_header(const DeliveryFrame& frame) {
  if (frame.reason.size() > std::numeric_limits<uint16_t>::max()) {
    throw FrameError("frame reason too long");
  }
  if (frame.status == FrameStatus::kSoftError && !frame.payload.empty()) {
    throw FrameError("soft-error frame must not carry a payload");
  }
  std::string out(kFrameHeaderSize, '\0');
  char* p = out.data();
  put_le<uint32_t>(p, kFrameMagic);
  std::memcpy(p + 4, frame.exec_id.bytes().data(), 16);
  put_le<uint32_t>(p + 20, frame.index);
  p[24] = static_cast<char>(frame.status);
  put_le<uint16_t>(p + 25, static_cast<uint16_t>(frame.reason.size()));
  put_le<uint64_t>(p + 27, frame.payload.size());
  return out;
}

std::string encode_frame(const DeliveryFrame& frame) {
  std::string out = encode_frame_header(frame);
  out.reserve(out.size() + frame.reason.size() + frame.payload.size());
  out += frame.reason;
  out += frame.payload;
  return out;
}

FrameHeader decode_frame_header(std::string_view bytes) {
  if (bytes.size() < kFrameHeaderSize) throw FrameError("short frame header");
  const char* p = bytes.data();
  if (get_le<uint32_t>(p) != kFrameMagic) throw FrameError("bad frame magic");
  FrameHeader h;
  std::array<uint8_t, 16> id;
  std::memcpy(id.data(), p + 4, 16);
  h.exec_id = ExecutionId(id);
  h.index = get_le<uint32_t>(p + 20);
  auto status = static_cast<uint8_t>(p[24]);
  if (status > static_cast<uint8_t>(FrameStatus::kActivation)) {
    throw FrameError("unknown frame status " + std::to_string(status));
  }
  h.status = static_cast<FrameStatus>(status);
  h.reason_len = get_le<uint16_t>(p + 25);
  h.payload_len = get_le<uint64_t>(p + 27);
  if (h.status == FrameStatus::kSoftError && h.payload_len != 0) {
    throw FrameError("soft-error frame with non-empty payload");
  }
  return h;
}

DeliveryFrame decode_frame(std::string_view bytes) {
  FrameHeader h = decode_frame_header(bytes);
  uint64_t need = kFrameHeaderSize + h.reason_len + h.payload_len;
  if (bytes.size() != need) throw FrameError("frame length mismatch");
  DeliveryFrame f;
  f.exec_id = h.exec_id;
  f.index = h.index;
  f.status = h.status;
  f.reason = std::string(bytes.substr(kFrameHeaderSize, h.reason_len));
  f.payload = std::string(bytes.substr(kFrameHeaderSize + h.reason_len));
  return f;
}

DeliveryFrame to_frame(const ActivationMessage& msg) {
  DeliveryFrame f;
  f.exec_id = msg.exec_id;
  f.status = FrameStatus::kActivation;
  f.reason = msg.dt_node;
  f.payload = msg.request_body;
  return f;
}

ActivationMessage activation_from_frame(DeliveryFrame frame) {
  if (frame.status != FrameStatus::kActivation) {
    throw FrameError("not an activation frame");
  }
  return ActivationMessage{frame.exec_id, std::move(frame.reason),
                           std::move(frame.payload)};
}

}  // namespace gbstore
