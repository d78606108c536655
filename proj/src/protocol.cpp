// Copyright 2026 The usar Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "usar/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "usar/error.hpp"

namespace usar::protocol {
namespace {

void PutU16(std::span<std::uint8_t> out, std::size_t at, std::uint16_t v) {
  out[at] = static_cast<std::uint8_t>(v & 0xff);
  out[at + 1] = static_cast<std::uint8_t>(v >> 8);
}

void PutU32(std::span<std::uint8_t> out, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out[at + i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
  }
}

std::uint16_t GetU16(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint16_t>(in[at] | (in[at + 1] << 8));
}

std::uint32_t GetU32(std::span<const std::uint8_t> in, std::size_t at) {
  return static_cast<std::uint32_t>(in[at]) |
         (static_cast<std::uint32_t>(in[at + 1]) << 8) |
         (static_cast<std::uint32_t>(in[at + 2]) << 16) |
         (static_cast<std::uint32_t>(in[at + 3]) << 24);
}

std::size_t ExpectedFragmentLength(std::size_t total, std::size_t index) {
  const std::size_t start = index * kMaxPayload;
  return std::min(kMaxPayload, total - start);
}

}  // namespace

std::size_t FramePayloadSize(Channel channel, std::size_t width,
                             std::size_t height) {
  const std::size_t plane = width * height;
  return channel == Channel::kSegmentationPair ? 2 * plane : plane;
}

std::size_t FragmentCount(std::size_t total_payload) {
  return (total_payload + kMaxPayload - 1) / kMaxPayload;
}

void WriteHeader(const PacketHeader& h, std::span<std::uint8_t> out) {
  std::memcpy(out.data() + offset::kMagic, kMagic, sizeof(kMagic));
  out[offset::kVersion] = h.version;
  out[offset::kChannel] = static_cast<std::uint8_t>(h.channel);
  out[offset::kPixelFormat] = static_cast<std::uint8_t>(h.pixel_format);
  out[offset::kFlags] = h.flags;
  PutU32(out, offset::kFrameId, h.frame_id);
  PutU16(out, offset::kWidth, h.width);
  PutU16(out, offset::kHeight, h.height);
  PutU16(out, offset::kFragIndex, h.frag_index);
  PutU16(out, offset::kFragCount, h.frag_count);
  PutU16(out, offset::kPayloadLen, h.payload_len);
}

std::vector<Bytes> Encode(std::uint32_t frame_id, Channel channel,
                          std::span<const std::uint8_t> image,
                          std::optional<std::span<const std::uint8_t>> mask,
                          int width, int height) {
  if (channel != Channel::kRawImage && channel != Channel::kSegmentationPair) {
    throw Error(ErrorCode::kBadChannel,
                "channel " + std::to_string(static_cast<int>(channel)));
  }
  if ((channel == Channel::kSegmentationPair) != mask.has_value()) {
    throw Error(ErrorCode::kBadChannel,
                "a mask travels on channel 1 and only there");
  }
  if (width <= 0 || height <= 0 || width > 0xffff || height > 0xffff) {
    throw Error(ErrorCode::kInvalidArgument, "frame dimensions out of range");
  }
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  if (image.size() != plane || (mask && mask->size() != plane)) {
    throw Error(ErrorCode::kInvalidArgument,
                "buffer size does not match width * height");
  }
  const std::size_t total = FramePayloadSize(channel, width, height);
  const std::size_t count = FragmentCount(total);
  if (count > kMaxFragments) {
    throw Error(ErrorCode::kOversize, std::to_string(count) + " fragments");
  }

  PacketHeader h;
  h.channel = channel;
  h.pixel_format = channel == Channel::kSegmentationPair ? PixelFormat::kMask8
                                                         : PixelFormat::kGray8;
  h.frame_id = frame_id;
  h.width = static_cast<std::uint16_t>(width);
  h.height = static_cast<std::uint16_t>(height);
  h.frag_count = static_cast<std::uint16_t>(count);

  std::vector<Bytes> packets;
  packets.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * kMaxPayload;
    const std::size_t len = ExpectedFragmentLength(total, i);
    h.frag_index = static_cast<std::uint16_t>(i);
    h.payload_len = static_cast<std::uint16_t>(len);
    h.flags = (i + 1 == count) ? kFlagLastFragment : 0;

    Bytes pkt(kHeaderSize + len);
    WriteHeader(h, pkt);
    // The logical payload is image bytes followed by mask bytes; a fragment
    // may straddle the boundary.
    std::size_t written = 0;
    if (start < plane) {
      const std::size_t n = std::min(len, plane - start);
      std::memcpy(pkt.data() + kHeaderSize, image.data() + start, n);
      written = n;
    }
    if (written < len) {
      const std::size_t mask_start = start + written - plane;
      std::memcpy(pkt.data() + kHeaderSize + written,
                  mask->data() + mask_start, len - written);
    }
    packets.push_back(std::move(pkt));
  }
  return packets;
}

std::vector<Bytes> EncodeRaw(std::uint32_t frame_id, const GrayImage& image) {
  return Encode(frame_id, Channel::kRawImage, image.pixels, std::nullopt,
                image.width, image.height);
}

std::vector<Bytes> EncodePair(std::uint32_t frame_id, const GrayImage& image,
                              const Mask& mask) {
  if (image.width != mask.width || image.height != mask.height) {
    throw Error(ErrorCode::kBoundsViolation, "image and mask dimensions differ");
  }
  return Encode(frame_id, Channel::kSegmentationPair, image.pixels,
                std::span<const std::uint8_t>(mask.labels), image.width,
                image.height);
}

PacketView DecodePacket(std::span<const std::uint8_t> datagram) {
  if (datagram.size() < kHeaderSize) {
    if (datagram.size() >= 4 &&
        std::memcmp(datagram.data(), kMagic, sizeof(kMagic)) != 0) {
      throw Error(ErrorCode::kBadMagic);
    }
    throw Error(ErrorCode::kTruncated,
                "datagram shorter than header: " +
                    std::to_string(datagram.size()) + " bytes");
  }
  if (std::memcmp(datagram.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kBadMagic);
  }
  PacketHeader h;
  h.version = datagram[offset::kVersion];
  if (h.version != kVersion) {
    throw Error(ErrorCode::kBadVersion,
                "version " + std::to_string(static_cast<int>(h.version)));
  }
  const std::uint8_t channel = datagram[offset::kChannel];
  if (channel > 1) {
    throw Error(ErrorCode::kBadChannel,
                "channel " + std::to_string(static_cast<int>(channel)));
  }
  h.channel = static_cast<Channel>(channel);
  const std::uint8_t format = datagram[offset::kPixelFormat];
  if (format != channel) {
    throw Error(ErrorCode::kBoundsViolation, "pixel format does not match channel");
  }
  h.pixel_format = static_cast<PixelFormat>(format);
  h.flags = datagram[offset::kFlags];
  h.frame_id = GetU32(datagram, offset::kFrameId);
  h.width = GetU16(datagram, offset::kWidth);
  h.height = GetU16(datagram, offset::kHeight);
  h.frag_index = GetU16(datagram, offset::kFragIndex);
  h.frag_count = GetU16(datagram, offset::kFragCount);
  h.payload_len = GetU16(datagram, offset::kPayloadLen);

  if (h.payload_len > kMaxPayload) {
    throw Error(ErrorCode::kBoundsViolation, "payload_len above 1400");
  }
  if (datagram.size() < kHeaderSize + h.payload_len) {
    throw Error(ErrorCode::kTruncated,
                "payload_len " + std::to_string(h.payload_len) + " but only " +
                    std::to_string(datagram.size() - kHeaderSize) + " bytes");
  }
  if (datagram.size() > kHeaderSize + h.payload_len) {
    throw Error(ErrorCode::kBoundsViolation, "trailing bytes after payload");
  }
  if (h.frag_index >= h.frag_count) {
    throw Error(ErrorCode::kBoundsViolation, "frag_index >= frag_count");
  }
  if (h.width == 0 || h.height == 0) {
    throw Error(ErrorCode::kBoundsViolation, "zero frame dimension");
  }
  const std::size_t total = FramePayloadSize(h.channel, h.width, h.height);
  if (FragmentCount(total) != h.frag_count) {
    throw Error(ErrorCode::kBoundsViolation,
                "frag_count inconsistent with frame size");
  }
  if (ExpectedFragmentLength(total, h.frag_index) != h.payload_len) {
    throw Error(ErrorCode::kBoundsViolation, "payload_len mismatch");
  }
  if (h.last_fragment() != (h.frag_index + 1 == h.frag_count)) {
    throw Error(ErrorCode::kBoundsViolation, "last-fragment flag misplaced");
  }
  return PacketView{h, datagram.subspan(kHeaderSize, h.payload_len)};
}

Reassembler::Reassembler(Clock::duration timeout, std::size_t completed_memory)
    : timeout_(timeout), completed_memory_(completed_memory) {}

std::vector<ReassemblyEvent> Reassembler::Feed(
    std::span<const std::uint8_t> datagram, Clock::time_point now) {
  ++stats_.packets;
  std::vector<ReassemblyEvent> events = Tick(now);
  PacketView view;
  try {
    view = DecodePacket(datagram);
  } catch (const Error&) {
    ++stats_.malformed;
    return events;
  }
  auto more = Add(view, now);
  for (auto& e : more) events.push_back(std::move(e));
  return events;
}

std::vector<ReassemblyEvent> Reassembler::Add(const PacketView& packet,
                                              Clock::time_point now) {
  std::vector<ReassemblyEvent> events;
  const PacketHeader& h = packet.header;
  const Key key{static_cast<std::uint8_t>(h.channel), h.frame_id};
  if (completed_.contains(key)) {
    ++stats_.duplicates;
    return events;
  }

  auto it = assemblies_.find(key);
  if (it == assemblies_.end()) {
    Assembly a;
    a.shape = h;
    a.have.assign(h.frag_count, false);
    a.buffer.resize(FramePayloadSize(h.channel, h.width, h.height));
    a.first_seen = now;
    it = assemblies_.emplace(key, std::move(a)).first;
  }
  Assembly& a = it->second;
  if (a.shape.width != h.width || a.shape.height != h.height ||
      a.shape.frag_count != h.frag_count) {
    ++stats_.inconsistent;
    return events;
  }
  if (a.have[h.frag_index]) {
    ++stats_.duplicates;
    return events;
  }
  a.have[h.frag_index] = true;
  ++a.received;
  std::memcpy(a.buffer.data() + static_cast<std::size_t>(h.frag_index) * kMaxPayload,
              packet.payload.data(), packet.payload.size());

  if (a.received == a.shape.frag_count) {
    CompletedFrame f;
    f.channel = a.shape.channel;
    f.frame_id = a.shape.frame_id;
    f.width = a.shape.width;
    f.height = a.shape.height;
    f.payload = std::move(a.buffer);
    f.first_seen = a.first_seen;
    f.completed_at = now;
    assemblies_.erase(it);
    RememberCompleted(key);
    ++stats_.completed;
    events.emplace_back(std::move(f));
  }
  return events;
}

std::vector<ReassemblyEvent> Reassembler::Tick(Clock::time_point now) {
  std::vector<ReassemblyEvent> events;
  for (auto it = assemblies_.begin(); it != assemblies_.end();) {
    if (now - it->second.first_seen > timeout_) {
      const Assembly& a = it->second;
      events.emplace_back(ExpiredFrame{a.shape.channel, a.shape.frame_id,
                                       a.received, a.shape.frag_count});
      ++stats_.expired;
      // An expired frame is dead; late fragments must not resurrect it.
      RememberCompleted(it->first);
      it = assemblies_.erase(it);
    } else {
      ++it;
    }
  }
  return events;
}

void Reassembler::RememberCompleted(const Key& key) {
  completed_.insert(key);
  completed_order_.push_back(key);
  while (completed_order_.size() > completed_memory_) {
    completed_.erase(completed_order_.front());
    completed_order_.pop_front();
  }
}

AlignedPair SplitPair(const CompletedFrame& frame, double pixel_spacing) {
  if (frame.channel != Channel::kSegmentationPair) {
    throw Error(ErrorCode::kBadChannel, "not a segmentation pair");
  }
  if (frame.width <= 0 || frame.height <= 0) {
    throw Error(ErrorCode::kBoundsViolation, "zero frame dimension");
  }
  const std::size_t plane = static_cast<std::size_t>(frame.width) * frame.height;
  if (frame.payload.size() != 2 * plane) {
    throw Error(ErrorCode::kBoundsViolation,
                "mask and image halves differ in size");
  }
  AlignedPair pair;
  pair.frame_id = frame.frame_id;
  pair.image = GrayImage(frame.width, frame.height);
  std::copy_n(frame.payload.begin(), plane, pair.image.pixels.begin());
  pair.mask = Mask(frame.width, frame.height, pixel_spacing);
  std::copy_n(frame.payload.begin() + static_cast<std::ptrdiff_t>(plane), plane,
              pair.mask.labels.begin());
  for (std::uint8_t v : pair.mask.labels) {
    if (v > 2) throw Error(ErrorCode::kBoundsViolation, "label outside {0,1,2}");
  }
  return pair;
}

Aligner::Aligner(double pixel_spacing, std::size_t memory)
    : pixel_spacing_(pixel_spacing), memory_(memory) {}

void Aligner::OnRawFrame(const CompletedFrame& frame) {
  raw_arrivals_[frame.frame_id] = frame.completed_at;
  if (!latest_raw_ || frame.frame_id > *latest_raw_) latest_raw_ = frame.frame_id;
  while (raw_arrivals_.size() > memory_) raw_arrivals_.erase(raw_arrivals_.begin());
}

AlignedPair Aligner::OnPairFrame(const CompletedFrame& frame) {
  AlignedPair pair = SplitPair(frame, pixel_spacing_);
  const auto it = raw_arrivals_.find(frame.frame_id);
  if (it != raw_arrivals_.end()) {
    pair.segmentation_latency_ms =
        std::chrono::duration<double, std::milli>(frame.completed_at - it->second)
            .count();
  }
  return pair;
}

}  // namespace usar::protocol
