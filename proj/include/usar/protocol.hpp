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

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "usar/mask.hpp"

namespace usar::protocol {

using Clock = std::chrono::steady_clock;
using Bytes = std::vector<std::uint8_t>;

// Wire layout, all multi-byte fields little-endian:
//   0  magic "USAR"       4  version      5  channel     6  pixel_format
//   7  flags              8  frame_id:u32 12 width:u16   14 height:u16
//   16 frag_index:u16     18 frag_count:u16              20 payload_len:u16
inline constexpr std::uint8_t kMagic[4] = {0x55, 0x53, 0x41, 0x52};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 22;
inline constexpr std::size_t kMaxPayload = 1400;
inline constexpr std::size_t kMaxFragments = 65535;
inline constexpr std::uint8_t kFlagLastFragment = 0x01;

namespace offset {
inline constexpr std::size_t kMagic = 0;
inline constexpr std::size_t kVersion = 4;
inline constexpr std::size_t kChannel = 5;
inline constexpr std::size_t kPixelFormat = 6;
inline constexpr std::size_t kFlags = 7;
inline constexpr std::size_t kFrameId = 8;
inline constexpr std::size_t kWidth = 12;
inline constexpr std::size_t kHeight = 14;
inline constexpr std::size_t kFragIndex = 16;
inline constexpr std::size_t kFragCount = 18;
inline constexpr std::size_t kPayloadLen = 20;
}  // namespace offset

enum class Channel : std::uint8_t { kRawImage = 0, kSegmentationPair = 1 };
enum class PixelFormat : std::uint8_t { kGray8 = 0, kMask8 = 1 };

struct PacketHeader {
  std::uint8_t version = kVersion;
  Channel channel = Channel::kRawImage;
  PixelFormat pixel_format = PixelFormat::kGray8;
  std::uint8_t flags = 0;
  std::uint32_t frame_id = 0;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint16_t frag_index = 0;
  std::uint16_t frag_count = 0;
  std::uint16_t payload_len = 0;

  bool last_fragment() const { return (flags & kFlagLastFragment) != 0; }
  friend bool operator==(const PacketHeader&, const PacketHeader&) = default;
};

struct PacketView {
  PacketHeader header;
  std::span<const std::uint8_t> payload;
};

// Bytes the frame occupies on the wire: w*h for channel 0, 2*w*h for 1.
std::size_t FramePayloadSize(Channel channel, std::size_t width,
                             std::size_t height);
std::size_t FragmentCount(std::size_t total_payload);

void WriteHeader(const PacketHeader& h, std::span<std::uint8_t> out);

// Splits a frame into maximal 1400-byte payloads. A mask must be given
// exactly when the channel is the segmentation pair.
std::vector<Bytes> Encode(std::uint32_t frame_id, Channel channel,
                          std::span<const std::uint8_t> image,
                          std::optional<std::span<const std::uint8_t>> mask,
                          int width, int height);
std::vector<Bytes> EncodeRaw(std::uint32_t frame_id, const GrayImage& image);
std::vector<Bytes> EncodePair(std::uint32_t frame_id, const GrayImage& image,
                              const Mask& mask);

// Validates and parses one datagram. The payload view aliases `datagram`.
PacketView DecodePacket(std::span<const std::uint8_t> datagram);

struct CompletedFrame {
  Channel channel = Channel::kRawImage;
  std::uint32_t frame_id = 0;
  int width = 0;
  int height = 0;
  Bytes payload;
  Clock::time_point first_seen;
  Clock::time_point completed_at;
};

struct ExpiredFrame {
  Channel channel = Channel::kRawImage;
  std::uint32_t frame_id = 0;
  std::uint16_t received = 0;
  std::uint16_t expected = 0;
};

using ReassemblyEvent = std::variant<CompletedFrame, ExpiredFrame>;

struct ReassemblyStats {
  std::uint64_t packets = 0;
  std::uint64_t malformed = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t inconsistent = 0;
  std::uint64_t completed = 0;
  std::uint64_t expired = 0;
};

// Collects fragments per (channel, frame_id). Single-writer.
class Reassembler {
 public:
  static constexpr std::chrono::milliseconds kDefaultTimeout{200};

  explicit Reassembler(Clock::duration timeout = kDefaultTimeout,
                       std::size_t completed_memory = 4096);

  // Expires stale assemblies, then adds the datagram. Malformed input is
  // counted and dropped.
  std::vector<ReassemblyEvent> Feed(std::span<const std::uint8_t> datagram,
                                    Clock::time_point now);
  std::vector<ReassemblyEvent> Add(const PacketView& packet,
                                   Clock::time_point now);
  std::vector<ReassemblyEvent> Tick(Clock::time_point now);

  std::size_t pending() const { return assemblies_.size(); }
  const ReassemblyStats& stats() const { return stats_; }

 private:
  struct Key {
    std::uint8_t channel;
    std::uint32_t frame_id;
    friend bool operator==(const Key&, const Key&) = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return (static_cast<std::size_t>(k.channel) << 32) ^ k.frame_id;
    }
  };
  struct Assembly {
    PacketHeader shape;
    std::vector<bool> have;
    std::uint16_t received = 0;
    Bytes buffer;
    Clock::time_point first_seen;
  };

  void RememberCompleted(const Key& key);

  Clock::duration timeout_;
  std::size_t completed_memory_;
  std::unordered_map<Key, Assembly, KeyHash> assemblies_;
  std::unordered_set<Key, KeyHash> completed_;
  std::deque<Key> completed_order_;
  ReassemblyStats stats_;
};

struct AlignedPair {
  std::uint32_t frame_id = 0;
  GrayImage image;
  Mask mask;
  std::optional<double> segmentation_latency_ms;
};

// Splits a channel-1 frame into its image and mask halves.
// Throws kBoundsViolation when the halves do not fit or labels exceed 2.
AlignedPair SplitPair(const CompletedFrame& frame, double pixel_spacing = 1.0);

// Pairs channel-1 frames with the arrival time of their channel-0 sibling.
class Aligner {
 public:
  explicit Aligner(double pixel_spacing = 1.0, std::size_t memory = 1024);

  void OnRawFrame(const CompletedFrame& frame);
  AlignedPair OnPairFrame(const CompletedFrame& frame);

  std::optional<std::uint32_t> latest_raw_id() const { return latest_raw_; }

 private:
  double pixel_spacing_;
  std::size_t memory_;
  std::map<std::uint32_t, Clock::time_point> raw_arrivals_;
  std::optional<std::uint32_t> latest_raw_;
};

}  // namespace usar::protocol
