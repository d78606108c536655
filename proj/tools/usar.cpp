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

// usar: live streaming server, offline evaluation, latency bench, and the
// helpers that feed them (phantom datasets, a reference bridge model).

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "usar/error.hpp"
#include "usar/evalbench.hpp"
#include "usar/providers.hpp"
#include "usar/server.hpp"
#include "usar/sources.hpp"

namespace {

using namespace usar;

std::atomic<bool> g_interrupted{false};

void OnSignal(int) { g_interrupted = true; }

void WriteJson(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) return;
  if (path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path);
  out << j.dump(2) << "\n";
}

std::unique_ptr<providers::Provider> OpenProvider(const std::string& text,
                                                  const providers::LatencyModel& latency,
                                                  std::uint64_t seed, double wait_s) {
  auto provider = providers::MakeProvider(providers::ProviderSpec::Parse(text), latency, seed);
  if (auto* bridge = dynamic_cast<providers::BridgeProvider*>(provider.get())) {
    std::cerr << "waiting for a model on port " << bridge->port() << "\n";
    if (!bridge->WaitForConnection(std::chrono::milliseconds(long(wait_s * 1000)))) {
      throw Error(ErrorCode::kProviderCrashed, "no model connected");
    }
  }
  return provider;
}

// --- serve -----------------------------------------------------------------

struct ServeArgs {
  std::string config;
  std::map<std::string, std::string> flags;  // only those given
};

void AddServe(CLI::App& app, ServeArgs& args) {
  auto* cmd = app.add_subcommand("serve", "Stream frames and segmentations to clients");
  cmd->add_option("--config", args.config, "key=value file applied before flags")
      ->check(CLI::ExistingFile);
  for (const char* key :
       {"source", "provider", "latency-profile", "fps", "udp-port", "ws-port",
        "pixel-spacing", "bind", "size", "seed", "artifact", "max-frames", "event-log",
        "heartbeat-timeout-ms"}) {
    auto* opt = cmd->add_option(std::string("--") + key);
    opt->each([&args, k = std::string(key)](const std::string& v) { args.flags[k] = v; });
  }
}

int RunServe(const ServeArgs& args) {
  server::ServerConfig cfg;
  if (!args.config.empty()) cfg.Load(args.config);
  for (const auto& [k, v] : args.flags) cfg.Set(k, v);
  cfg.Validate();

  auto log = server::EventLog::Open(cfg.event_log);
  auto provider = cfg.MakeProvider();
  if (auto* bridge = dynamic_cast<providers::BridgeProvider*>(provider.get())) {
    std::cerr << "model bridge listening on port " << bridge->port() << "\n";
  }
  server::Server srv(cfg, cfg.MakeSource(), std::move(provider), log.get());
  srv.Start();
  std::cerr << "udp " << cfg.bind << ":" << srv.udp_port() << "  ws " << cfg.bind << ":"
            << srv.ws_port() << "  fps " << cfg.fps << "\n";

  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  while (!g_interrupted && !srv.Wait(std::chrono::milliseconds(200))) {
  }
  srv.Stop();
  const auto st = srv.stats();
  std::cerr << "frames " << st.frames << "  paired " << st.paired << "  rejected "
            << st.rejected << "  failed " << st.failed << "\n";
  return 0;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string mode;
  std::string dataset;
  std::string provider = "oracle";
  std::string latency = "0,0";
  std::string out;
  double pixel_spacing = 1.0;
  std::uint64_t seed = 1;
  double wait_model_s = 30.0;
};

void AddEval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Score a provider on a replay dataset");
  cmd->add_option("mode", a.mode, "seg or measure")
      ->required()
      ->check(CLI::IsMember({"seg", "measure"}));
  cmd->add_option("--dataset", a.dataset, "replay directory")->required();
  cmd->add_option("--provider", a.provider, "oracle | oracle:erode=<r> | bridge:<host:port>");
  cmd->add_option("--latency-profile", a.latency, "simulated delay mean,std in ms");
  cmd->add_option("--out", a.out, "JSON report path, '-' for stdout");
  cmd->add_option("--pixel-spacing", a.pixel_spacing, "mm/px when a sample has no meta");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--wait-model", a.wait_model_s, "seconds to wait for a bridge model");
}

int RunEval(const EvalArgs& a) {
  const auto data = providers::LoadReplay(a.dataset, a.pixel_spacing);
  auto provider =
      OpenProvider(a.provider, providers::LatencyModel::Parse(a.latency), a.seed, a.wait_model_s);
  if (a.mode == "seg") {
    const auto eval = evalbench::EvalSegmentation(data, *provider);
    std::cout << metrics::ToText(eval.report);
    for (const auto& name : eval.failed) std::cout << "  failed " << name << "\n";
    WriteJson(a.out, evalbench::ToJson(eval));
  } else {
    const auto table = evalbench::EvalMeasurements(data, *provider);
    std::cout << evalbench::ToText(table);
    WriteJson(a.out, evalbench::ToJson(table));
  }
  return 0;
}

// --- bench -----------------------------------------------------------------

struct BenchArgs {
  double fps = 30.0;
  std::string size = "512x512";
  double duration_s = 10.0;
  std::string latency = "0,0";
  std::string provider = "oracle";
  std::string out;
};

void AddBench(CLI::App& app, BenchArgs& a) {
  auto* cmd = app.add_subcommand("bench", "Measure per-stage latency over loopback");
  cmd->add_option("--fps", a.fps)->check(CLI::PositiveNumber);
  cmd->add_option("--size", a.size, "WxH");
  cmd->add_option("--duration", a.duration_s, "seconds")->check(CLI::PositiveNumber);
  cmd->add_option("--latency-profile", a.latency, "simulated delay mean,std in ms");
  cmd->add_option("--provider", a.provider);
  cmd->add_option("--out", a.out, "JSON report path, '-' for stdout");
}

int RunBench(const BenchArgs& a) {
  server::ServerConfig parse;  // reuse the WxH parser
  parse.Set("size", a.size);
  evalbench::BenchConfig c;
  c.fps = a.fps;
  c.width = parse.width;
  c.height = parse.height;
  c.duration = std::chrono::milliseconds(static_cast<long>(a.duration_s * 1000));
  c.latency = providers::LatencyModel::Parse(a.latency);
  c.provider = a.provider;
  const auto report = evalbench::BenchLatency(c);
  std::cout << evalbench::ToText(report);
  WriteJson(a.out, evalbench::ToJson(report));
  return 0;
}

// --- phantom ---------------------------------------------------------------

struct PhantomArgs {
  std::string out;
  int coronal = 50;
  int transverse = 50;
  std::uint64_t seed = 1;
  std::string artifact = "none";
  double pixel_spacing = 0.5;
};

void AddPhantom(CLI::App& app, PhantomArgs& a) {
  auto* cmd = app.add_subcommand("phantom", "Write a synthetic replay dataset");
  cmd->add_option("--out", a.out, "target directory")->required();
  cmd->add_option("--coronal", a.coronal)->check(CLI::NonNegativeNumber);
  cmd->add_option("--transverse", a.transverse)->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--artifact", a.artifact)->check(CLI::IsMember({"none", "mild", "severe"}));
  cmd->add_option("--pixel-spacing", a.pixel_spacing)->check(CLI::PositiveNumber);
}

int RunPhantom(const PhantomArgs& a) {
  server::ServerConfig parse;
  parse.Set("artifact", a.artifact);
  const auto data =
      providers::MakePhantomDataset(a.coronal, a.transverse, a.seed, parse.artifact,
                                    a.pixel_spacing);
  providers::WriteReplay(a.out, data);
  std::cout << "wrote " << data.size() << " samples to " << a.out << "\n";
  return 0;
}

// --- model -----------------------------------------------------------------

struct ModelArgs {
  std::string connect;
  int erode = 0;
  std::string size = "512x512";
  std::uint64_t seed = 1;
  std::string artifact = "none";
};

void AddModel(CLI::App& app, ModelArgs& a) {
  auto* cmd = app.add_subcommand(
      "model", "Reference bridge model that answers with phantom ground truth");
  cmd->add_option("--connect", a.connect, "host:port of the model bridge")->required();
  cmd->add_option("--erode", a.erode)->check(CLI::NonNegativeNumber);
  cmd->add_option("--size", a.size, "phantom WxH, matching the server");
  cmd->add_option("--seed", a.seed);
  cmd->add_option("--artifact", a.artifact)->check(CLI::IsMember({"none", "mild", "severe"}));
}

int RunModel(const ModelArgs& a) {
  const auto spec = providers::ProviderSpec::Parse("bridge:" + a.connect);
  server::ServerConfig cfg;
  cfg.Set("size", a.size);
  cfg.Set("artifact", a.artifact);
  cfg.seed = a.seed;
  providers::RunBridgeClient(spec.host, spec.port,
                             providers::PhantomOracleModel(cfg.Phantom(), a.erode));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"usar: ultrasound kidney streaming, segmentation and measurement"};
  app.require_subcommand(1);
  ServeArgs serve;
  EvalArgs eval;
  BenchArgs bench;
  PhantomArgs phantom;
  ModelArgs model;
  AddServe(app, serve);
  AddEval(app, eval);
  AddBench(app, bench);
  AddPhantom(app, phantom);
  AddModel(app, model);
  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("serve")) return RunServe(serve);
    if (app.got_subcommand("eval")) return RunEval(eval);
    if (app.got_subcommand("bench")) return RunBench(bench);
    if (app.got_subcommand("phantom")) return RunPhantom(phantom);
    if (app.got_subcommand("model")) return RunModel(model);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
