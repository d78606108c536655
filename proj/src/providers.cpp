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

#include "usar/providers.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <array>
#include <cstring>

#include <boost/asio.hpp>

#include "usar/protocol.hpp"

namespace usar::providers {

namespace asio = boost::asio;
using asio::ip::tcp;

LatencyModel LatencyModel::Parse(const std::string& text) {
  const auto comma = text.find(',');
  LatencyModel m;
  try {
    if (comma == std::string::npos) throw 0;
    std::size_t used = 0;
    const std::string mean = text.substr(0, comma);
    const std::string sd = text.substr(comma + 1);
    m.mean_ms = std::stod(mean, &used);
    if (used != mean.size()) throw 0;
    m.std_ms = std::stod(sd, &used);
    if (used != sd.size()) throw 0;
  } catch (...) {
    throw Error(ErrorCode::kInvalidArgument,
                "latency profile must be '<mean>,<std>', got '" + text + "'");
  }
  m.Validate();
  return m;
}

void LatencyModel::Validate() const {
  if (!(mean_ms >= 0.0) || !(std_ms >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "latency mean/std must be >= 0");
  }
}

void ResultQueue::Push(SegmentResult r) {
  {
    std::lock_guard lock(mu_);
    items_.push_back(std::move(r));
  }
  cv_.notify_one();
}

std::optional<SegmentResult> ResultQueue::Pop(Clock::duration wait) {
  std::unique_lock lock(mu_);
  if (!cv_.wait_for(lock, wait, [&] { return !items_.empty(); })) {
    return std::nullopt;
  }
  SegmentResult r = std::move(items_.front());
  items_.pop_front();
  return r;
}

Mask Erode(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  std::vector<std::pair<int, int>> disk;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) disk.emplace_back(dx, dy);
    }
  }
  // Probe the far rim first; it is the likeliest to hit background.
  std::sort(disk.begin(), disk.end(), [](auto a, auto b) {
    return a.first * a.first + a.second * a.second >
           b.first * b.first + b.second * b.second;
  });
  Mask out = mask;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y) == 0) continue;
      for (const auto& [dx, dy] : disk) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height ||
            mask.at(nx, ny) == 0) {
          out.at(x, y) = 0;
          break;
        }
      }
    }
  }
  return out;
}

Mask Segment(Provider& provider, FrameRequest request, Clock::duration timeout) {
  const std::uint32_t id = request.frame_id;
  if (!provider.Submit(std::move(request))) {
    throw Error(ErrorCode::kProviderCrashed,
                provider.name() + " is not accepting requests");
  }
  const auto deadline = Clock::now() + timeout;
  while (true) {
    const auto now = Clock::now();
    if (now >= deadline) {
      throw Error(ErrorCode::kProviderTimeout,
                  "no result for frame " + std::to_string(id));
    }
    auto r = provider.Poll(deadline - now);
    if (!r || r->frame_id != id) continue;
    if (r->ok()) return std::move(*r->mask);
    throw Error(r->error.value_or(ErrorCode::kProviderCrashed), r->message);
  }
}

// --- OracleProvider --------------------------------------------------------

OracleProvider::OracleProvider(int erosion_radius, LatencyModel latency,
                               std::uint64_t seed)
    : erosion_radius_(erosion_radius), latency_(latency), rng_(seed) {
  latency_.Validate();
  if (erosion_radius_ < 0) {
    throw Error(ErrorCode::kInvalidArgument, "erosion radius must be >= 0");
  }
  worker_ = std::thread([this] { Run(); });
}

OracleProvider::~OracleProvider() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

std::string OracleProvider::name() const {
  return erosion_radius_ > 0 ? "oracle:erode=" + std::to_string(erosion_radius_)
                             : "oracle";
}

bool OracleProvider::Submit(FrameRequest request) {
  const auto now = Clock::now();
  {
    std::lock_guard lock(mu_);
    ++stats_.submitted;
    inbox_.emplace_back(std::move(request), now);
  }
  cv_.notify_all();
  return true;
}

std::optional<SegmentResult> OracleProvider::Poll(Clock::duration wait) {
  return results_.Pop(wait);
}

ProviderStats OracleProvider::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void OracleProvider::Run() {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::unique_lock lock(mu_);
  while (true) {
    if (stop_) return;
    if (!inbox_.empty()) {
      auto batch = std::move(inbox_);
      inbox_.clear();
      std::vector<Clock::duration> delays;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        // Truncated normal: redraw negatives, give up after a few tries.
        double ms = -1.0;
        for (int k = 0; k < 16 && ms < 0.0; ++k) {
          ms = latency_.mean_ms + latency_.std_ms * normal(rng_);
        }
        ms = std::max(0.0, ms);
        delays.push_back(std::chrono::duration_cast<Clock::duration>(
            std::chrono::duration<double, std::milli>(ms)));
      }
      lock.unlock();
      std::vector<Pending> ready;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        auto& [req, submitted] = batch[i];
        Pending p;
        p.due = submitted + delays[i];
        p.result.frame_id = req.frame_id;
        p.result.submitted = submitted;
        if (!req.ground_truth) {
          p.result.error = ErrorCode::kInvalidArgument;
          p.result.message = "oracle needs ground truth for frame " +
                             std::to_string(req.frame_id);
        } else if (req.ground_truth->width != req.image.width ||
                   req.ground_truth->height != req.image.height) {
          p.result.error = ErrorCode::kDimensionMismatch;
          p.result.message = "ground truth does not match the image";
        } else {
          p.result.mask = Erode(*req.ground_truth, erosion_radius_);
        }
        ready.push_back(std::move(p));
      }
      lock.lock();
      for (auto& p : ready) waiting_.push(std::move(p));
      continue;
    }
    const auto now = Clock::now();
    while (!waiting_.empty() && waiting_.top().due <= now) {
      Pending p = waiting_.top();
      waiting_.pop();
      p.result.completed = Clock::now();
      if (p.result.ok()) {
        ++stats_.completed;
      } else {
        ++stats_.failed;
      }
      results_.Push(std::move(p.result));
    }
    if (waiting_.empty()) {
      cv_.wait(lock, [&] { return stop_ || !inbox_.empty(); });
    } else {
      const auto due = waiting_.top().due;
      cv_.wait_until(lock, due, [&] { return stop_ || !inbox_.empty(); });
    }
  }
}

// --- Bridge ----------------------------------------------------------------

namespace {

void WriteFramed(tcp::socket& socket, const protocol::Bytes& packet) {
  std::array<std::uint8_t, 4> len;
  const auto n = static_cast<std::uint32_t>(packet.size());
  for (int i = 0; i < 4; ++i) len[i] = static_cast<std::uint8_t>(n >> (8 * i));
  std::array<asio::const_buffer, 2> bufs{asio::buffer(len), asio::buffer(packet)};
  asio::write(socket, bufs);
}

// Throws boost::system::system_error on EOF or error.
protocol::Bytes ReadFramed(tcp::socket& socket) {
  std::array<std::uint8_t, 4> len;
  asio::read(socket, asio::buffer(len));
  const std::uint32_t n = len[0] | (len[1] << 8) | (len[2] << 16) |
                          (static_cast<std::uint32_t>(len[3]) << 24);
  if (n > protocol::kHeaderSize + protocol::kMaxPayload) {
    throw Error(ErrorCode::kBoundsViolation, "framed packet too large");
  }
  protocol::Bytes packet(n);
  asio::read(socket, asio::buffer(packet));
  return packet;
}

void ShutdownNative(int fd) {
  if (fd >= 0) ::shutdown(fd, SHUT_RDWR);
}

}  // namespace

struct BridgeProvider::Impl {
  asio::io_context ctx;
  tcp::acceptor acceptor{ctx};
  std::size_t max_in_flight;
  std::string host;

  mutable std::mutex mu;
  std::condition_variable cv;
  std::shared_ptr<tcp::socket> socket;  // current model connection
  std::mutex write_mu;
  std::map<std::uint32_t, Clock::time_point> pending;
  ProviderStats stats;
  bool stopping = false;
  ResultQueue results;
  std::thread accept_thread;
  std::thread reader_thread;

  void AcceptLoop();
  void ReadLoop(std::shared_ptr<tcp::socket> s);
  void FailPending(ErrorCode code, const std::string& why);
  void ExpirePending();
};

void BridgeProvider::Impl::FailPending(ErrorCode code, const std::string& why) {
  std::map<std::uint32_t, Clock::time_point> failed;
  {
    std::lock_guard lock(mu);
    failed.swap(pending);
    stats.failed += failed.size();
  }
  const auto now = Clock::now();
  for (const auto& [id, submitted] : failed) {
    SegmentResult r;
    r.frame_id = id;
    r.error = code;
    r.message = why;
    r.submitted = submitted;
    r.completed = now;
    results.Push(std::move(r));
  }
}

void BridgeProvider::Impl::ExpirePending() {
  const auto now = Clock::now();
  std::vector<std::pair<std::uint32_t, Clock::time_point>> expired;
  {
    std::lock_guard lock(mu);
    for (auto it = pending.begin(); it != pending.end();) {
      if (now - it->second > Provider::kTimeout) {
        expired.emplace_back(*it);
        it = pending.erase(it);
        ++stats.failed;
      } else {
        ++it;
      }
    }
  }
  for (const auto& [id, submitted] : expired) {
    SegmentResult r;
    r.frame_id = id;
    r.error = ErrorCode::kProviderTimeout;
    r.message = "no reply within 2000 ms";
    r.submitted = submitted;
    r.completed = now;
    results.Push(std::move(r));
  }
}

void BridgeProvider::Impl::AcceptLoop() {
  while (true) {
    auto s = std::make_shared<tcp::socket>(ctx);
    boost::system::error_code ec;
    acceptor.accept(*s, ec);
    {
      std::lock_guard lock(mu);
      if (stopping) return;
    }
    if (ec) continue;
    s->set_option(tcp::no_delay(true), ec);
    if (reader_thread.joinable()) reader_thread.join();
    {
      std::lock_guard lock(mu);
      socket = s;
    }
    cv.notify_all();
    // One model at a time: the next accept happens after this one drops.
    reader_thread = std::thread([this, s] { ReadLoop(s); });
    reader_thread.join();
  }
}

void BridgeProvider::Impl::ReadLoop(std::shared_ptr<tcp::socket> s) {
  protocol::Reassembler reassembler(std::chrono::hours(1));
  try {
    while (true) {
      const protocol::Bytes packet = ReadFramed(*s);
      for (auto& ev : reassembler.Feed(packet, Clock::now())) {
        auto* frame = std::get_if<protocol::CompletedFrame>(&ev);
        if (!frame) continue;
        Clock::time_point submitted;
        {
          std::lock_guard lock(mu);
          auto it = pending.find(frame->frame_id);
          if (frame->channel != protocol::Channel::kSegmentationPair ||
              it == pending.end()) {
            ++stats.mismatched_replies;
            continue;
          }
          submitted = it->second;
          pending.erase(it);
        }
        SegmentResult r;
        r.frame_id = frame->frame_id;
        r.submitted = submitted;
        try {
          r.mask = protocol::SplitPair(*frame).mask;
        } catch (const Error& e) {
          r.error = e.code();
          r.message = e.what();
        }
        r.completed = Clock::now();
        {
          std::lock_guard lock(mu);
          if (r.ok()) {
            ++stats.completed;
          } else {
            ++stats.failed;
          }
        }
        results.Push(std::move(r));
      }
    }
  } catch (const std::exception& e) {
    {
      std::lock_guard lock(mu);
      if (socket == s) socket.reset();
    }
    boost::system::error_code ec;
    s->close(ec);
    FailPending(ErrorCode::kProviderCrashed,
                std::string("bridge connection lost: ") + e.what());
  }
}

BridgeProvider::BridgeProvider(const std::string& host, std::uint16_t port,
                               std::size_t max_in_flight)
    : impl_(std::make_unique<Impl>()) {
  impl_->max_in_flight = max_in_flight;
  impl_->host = host;
  tcp::endpoint ep(asio::ip::make_address(host), port);
  impl_->acceptor.open(ep.protocol());
  impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
  impl_->acceptor.bind(ep);
  impl_->acceptor.listen();
  impl_->accept_thread = std::thread([this] { impl_->AcceptLoop(); });
}

BridgeProvider::~BridgeProvider() {
  std::shared_ptr<tcp::socket> s;
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
    s = impl_->socket;
  }
  if (s) ShutdownNative(s->native_handle());
  ShutdownNative(impl_->acceptor.native_handle());
  impl_->accept_thread.join();
  if (impl_->reader_thread.joinable()) impl_->reader_thread.join();
}

std::string BridgeProvider::name() const {
  return "bridge:" + impl_->host + ":" + std::to_string(port());
}

std::uint16_t BridgeProvider::port() const {
  return impl_->acceptor.local_endpoint().port();
}

bool BridgeProvider::connected() const {
  std::lock_guard lock(impl_->mu);
  return impl_->socket != nullptr;
}

bool BridgeProvider::WaitForConnection(Clock::duration wait) {
  std::unique_lock lock(impl_->mu);
  return impl_->cv.wait_for(lock, wait, [&] { return impl_->socket != nullptr; });
}

bool BridgeProvider::Submit(FrameRequest request) {
  std::shared_ptr<tcp::socket> s;
  {
    std::lock_guard lock(impl_->mu);
    ++impl_->stats.submitted;
    if (!impl_->socket || impl_->pending.size() >= impl_->max_in_flight ||
        impl_->pending.contains(request.frame_id)) {
      ++impl_->stats.rejected;
      return false;
    }
    s = impl_->socket;
    impl_->pending[request.frame_id] = Clock::now();
  }
  const auto packets = protocol::EncodeRaw(request.frame_id, request.image);
  try {
    std::lock_guard wlock(impl_->write_mu);
    for (const auto& p : packets) WriteFramed(*s, p);
  } catch (const std::exception&) {
    // The reader notices the dead socket and fails everything pending,
    // this request included.
    ShutdownNative(s->native_handle());
  }
  return true;
}

std::optional<SegmentResult> BridgeProvider::Poll(Clock::duration wait) {
  impl_->ExpirePending();
  const auto step = std::min<Clock::duration>(wait, std::chrono::milliseconds(50));
  const auto deadline = Clock::now() + wait;
  while (true) {
    if (auto r = impl_->results.Pop(step)) return r;
    impl_->ExpirePending();
    if (Clock::now() >= deadline) return impl_->results.Pop(Clock::duration::zero());
  }
}

ProviderStats BridgeProvider::stats() const {
  std::lock_guard lock(impl_->mu);
  return impl_->stats;
}

void RunBridgeClient(const std::string& host, std::uint16_t port,
                     const SegmentFn& segment, const std::atomic<bool>* stop) {
  asio::io_context ctx;
  tcp::socket socket(ctx);
  socket.connect(tcp::endpoint(asio::ip::make_address(host), port));
  socket.set_option(tcp::no_delay(true));
  protocol::Reassembler reassembler(std::chrono::hours(1));
  try {
    while (!(stop && stop->load())) {
      const protocol::Bytes packet = ReadFramed(socket);
      for (auto& ev : reassembler.Feed(packet, Clock::now())) {
        auto* frame = std::get_if<protocol::CompletedFrame>(&ev);
        if (!frame || frame->channel != protocol::Channel::kRawImage) continue;
        GrayImage image(frame->width, frame->height);
        image.pixels = std::move(frame->payload);
        const Mask mask = segment(frame->frame_id, image);
        for (const auto& p : protocol::EncodePair(frame->frame_id, image, mask)) {
          WriteFramed(socket, p);
        }
      }
    }
  } catch (const boost::system::system_error&) {
    // Server went away.
  }
}

SegmentFn PhantomOracleModel(PhantomSpec spec, int erosion_radius) {
  spec.Validate();
  return [spec, erosion_radius](std::uint32_t frame_id, const GrayImage&) {
    return Erode(PhantomNext(spec, frame_id).mask, erosion_radius);
  };
}

ProviderSpec ProviderSpec::Parse(const std::string& text) {
  ProviderSpec spec;
  auto bad = [&] {
    return Error(ErrorCode::kInvalidArgument, "bad provider spec '" + text + "'");
  };
  if (text == "oracle") return spec;
  if (text.rfind("oracle:erode=", 0) == 0) {
    const std::string r = text.substr(13);
    if (r.empty() || r.find_first_not_of("0123456789") != std::string::npos) {
      throw bad();
    }
    spec.erosion_radius = std::stoi(r);
    return spec;
  }
  if (text.rfind("bridge:", 0) == 0) {
    const std::string endpoint = text.substr(7);
    const auto colon = endpoint.rfind(':');
    if (colon == std::string::npos || colon == 0) throw bad();
    const std::string port = endpoint.substr(colon + 1);
    if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos ||
        port.size() > 5 || std::stoi(port) > 65535) {
      throw bad();
    }
    spec.kind = Kind::kBridge;
    spec.host = endpoint.substr(0, colon);
    spec.port = static_cast<std::uint16_t>(std::stoi(port));
    return spec;
  }
  throw bad();
}

std::unique_ptr<Provider> MakeProvider(const ProviderSpec& spec,
                                       LatencyModel latency, std::uint64_t seed) {
  if (spec.kind == ProviderSpec::Kind::kBridge) {
    return std::make_unique<BridgeProvider>(spec.host, spec.port);
  }
  return std::make_unique<OracleProvider>(spec.erosion_radius, latency, seed);
}

}  // namespace usar::providers
