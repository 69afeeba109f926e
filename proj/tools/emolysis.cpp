// emolysis command-line front end: one-shot analysis to JSONL, the HTTP
// service, and test-fixture generation.

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <pthread.h>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "emolysis/config.hpp"
#include "emolysis/fixture.hpp"
#include "emolysis/fusion.hpp"
#include "emolysis/http_server.hpp"
#include "emolysis/pipeline.hpp"
#include "emolysis/service.hpp"

namespace fs = std::filesystem;
using namespace emolysis;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIngest = 2;
constexpr int kExitBackend = 3;

struct AnalyzeArgs {
  std::string video;
  std::string language = "en";
  std::string persons;
  std::string modalities = "visual,audio,linguistic";
  std::string out;
  std::string backend = "reference";
  std::optional<double> tick_s, window_s, stride_s, from_s, to_s;
  std::string config;
};

struct ServeArgs {
  std::optional<int> port;
  std::string host = "127.0.0.1";
  std::string store;
  std::string config;
  std::string static_dir;
  int workers = 0;
};

struct FixtureArgs {
  std::string out;
  double duration_s = 30.0;
  bool silent = false;
  bool no_audio = false;
  std::size_t truncate = 0;
};

int fail(int code, std::string_view what) {
  std::cerr << "emolysis: " << what << '\n';
  return code;
}

AnalysisConfig analysis_config(const AnalyzeArgs& a) {
  AnalysisConfig c;
  if (a.tick_s) c.tick_s = *a.tick_s;
  if (a.window_s) c.window_s = *a.window_s;
  if (a.stride_s) c.stride_s = *a.stride_s;
  if (a.backend != "reference") {
    c.backends.visual = c.backends.audio = c.backends.linguistic = a.backend;
  }
  c.validate();
  // A config file has the last word over flags.
  if (!a.config.empty()) c = load_config(a.config, c);
  return c;
}

int run_analyze(const AnalyzeArgs& a) {
  AnalysisConfig config;
  Language language;
  fusion::Selection selection;
  try {
    config = analysis_config(a);
    language = parse_language(a.language);
    selection = fusion::Selection::make(fusion::parse_person_list(a.persons),
                                        fusion::parse_modality_list(a.modalities));
  } catch (const Error& e) {
    return fail(kExitValidation, e.what());
  }

  std::shared_ptr<MediaReader> media;
  try {
    media = MediaReader::open(a.video);
  } catch (const Error& e) {
    return fail(kExitIngest, e.what());
  }

  std::optional<Pipeline> pipeline;
  try {
    auto registry = std::make_shared<const labels::LabelMapRegistry>(load_label_maps(config));
    pipeline.emplace(config, registry, backends::BackendRegistry::with_reference().make(config.backends));
  } catch (const ValidationError& e) {
    return fail(kExitValidation, e.what());
  } catch (const Error& e) {
    return fail(kExitBackend, e.what());
  }

  AnalysisResult result;
  try {
    result = pipeline->run(*media, language, [](Stage stage, double fraction, std::string_view message) {
      spdlog::info("{} {:.0f}%{}{}", to_string(stage), fraction * 100.0, message.empty() ? "" : " ", message);
    });
  } catch (const IngestError& e) {
    return fail(kExitIngest, e.what());
  } catch (const BackendError& e) {
    return fail(kExitBackend, e.what());
  } catch (const Error& e) {
    return fail(kExitIngest, e.what());
  }
  media.reset();

  std::string body;
  try {
    const fusion::Timeline timeline = pipeline->timeline(result);
    timeline.validate(selection);
    const auto resolved = selection.resolved(timeline.persons());
    const auto records = (a.from_s || a.to_s)
                             ? timeline.build(resolved, a.from_s.value_or(0.0),
                                              a.to_s.value_or(result.info.duration_s))
                             : timeline.build(resolved);
    body = fusion::to_jsonl(records);
  } catch (const Error& e) {
    return fail(kExitValidation, e.what());
  }

  if (a.out.empty()) {
    std::cout << body << std::flush;
    return 0;
  }
  try {
    write_file(a.out, body);
    Json persons = Json::array();
    for (const auto& t : result.tracks) persons.push_back(t.person_id);
    const Json meta{{"video", fs::path(a.video).filename().string()},
                    {"duration_s", result.info.duration_s},
                    {"fps", result.info.fps},
                    {"has_audio", result.info.has_audio},
                    {"language", to_string(language)},
                    {"status", "done"},
                    {"persons", std::move(persons)},
                    {"selection", selection.canonical()},
                    {"config", to_json(config)}};
    write_file(a.out + ".meta.json", dump_line(meta) + "\n");
  } catch (const Error& e) {
    return fail(kExitValidation, e.what());
  }
  return 0;
}

std::optional<int> env_int(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::stoi(v);
}

int run_serve(const ServeArgs& a) {
  // Defaults < environment < flags < config file.
  ServiceOptions so;
  HttpOptions ho;
  ho.host = a.host;
  if (const char* s = std::getenv("EMOLYSIS_STORE"); s && *s) so.store_root = s;
  try {
    if (auto p = env_int("EMOLYSIS_PORT")) ho.port = *p;
  } catch (const std::exception&) {
    return fail(kExitValidation, "EMOLYSIS_PORT must be an integer");
  }
  if (!a.store.empty()) so.store_root = a.store;
  if (a.port) ho.port = *a.port;
  if (!a.static_dir.empty()) ho.static_dir = a.static_dir;
  so.workers = a.workers;

  try {
    if (!a.config.empty()) {
      static constexpr std::array<std::string_view, 5> kServeKeys{"port", "host", "store", "workers", "static_dir"};
      const Json j = parse_json(read_file(a.config));
      so.config = apply_config_json(j, so.config, kServeKeys);
      if (j.contains("port")) ho.port = j.at("port").get<int>();
      if (j.contains("host")) ho.host = j.at("host").get<std::string>();
      if (j.contains("store")) so.store_root = j.at("store").get<std::string>();
      if (j.contains("workers")) so.workers = j.at("workers").get<int>();
      if (j.contains("static_dir")) ho.static_dir = j.at("static_dir").get<std::string>();
    }
  } catch (const std::exception& e) {
    return fail(kExitValidation, e.what());
  }

  // Signals are taken by a dedicated thread; every other thread inherits the mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGUSR1);  // internal wake-up
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::unique_ptr<Service> service;
  std::unique_ptr<HttpServer> http;
  try {
    service = std::make_unique<Service>(so);
    http = std::make_unique<HttpServer>(*service, ho);
    const int port = http->bind();
    spdlog::info("serving on http://{}:{} (store {})", ho.host, port, so.store_root.string());
    // Line-buffered notice for scripts that start the server on port 0.
    std::cout << "listening " << port << std::endl;
  } catch (const BackendError& e) {
    return fail(kExitBackend, e.what());
  } catch (const Error& e) {
    return fail(kExitValidation, e.what());
  }

  std::jthread waiter([&](std::stop_token) {
    int sig = 0;
    sigwait(&signals, &sig);
    if (sig == SIGUSR1) return;
    spdlog::info("signal {} received, shutting down", sig);
    http->stop();
  });
  http->listen();
  service->shutdown();
  // Wake the waiter if the server stopped for another reason.
  pthread_kill(waiter.native_handle(), SIGUSR1);
  return 0;
}

int run_make_fixture(const FixtureArgs& a) {
  fixture::Spec spec;
  spec.duration_s = a.duration_s;
  spec.silent = a.silent;
  spec.with_audio = !a.no_audio;
  std::string bytes = fixture::make_avi(spec);
  if (a.truncate > 0 && a.truncate < bytes.size()) bytes.resize(a.truncate);
  try {
    write_file(a.out, bytes);
  } catch (const Error& e) {
    return fail(kExitValidation, e.what());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("emolysis"));
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Group emotion analysis of video: per-person and group timelines from visual, audio and text."};
  app.require_subcommand(1);
  app.fallthrough();  // subcommands accept the global flags too
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to standard error");

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Analyze one video and write TickRecord JSONL");
  analyze->add_option("video", an.video, "Input video file")->required();
  analyze->add_option("--language", an.language, "Spoken language")->check(CLI::IsMember({"en", "zh"}));
  analyze->add_option("--persons", an.persons, "Comma-separated person ids (default: all)");
  analyze->add_option("--modalities", an.modalities, "Comma-separated subset of visual,audio,linguistic");
  analyze->add_option("--out", an.out, "Output JSONL path (default: standard output)");
  analyze->add_option("--backend", an.backend, "Backend plugin for every modality");
  analyze->add_option("--tick-s", an.tick_s, "Timeline tick length in seconds");
  analyze->add_option("--window-s", an.window_s, "Audio/text window length in seconds");
  analyze->add_option("--stride-s", an.stride_s, "Window stride in seconds");
  analyze->add_option("--from", an.from_s, "Range start in seconds");
  analyze->add_option("--to", an.to_s, "Range end in seconds");
  analyze->add_option("--config", an.config, "JSON config file; overrides flags");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket session service");
  serve->add_option("--port", sv.port, "Listen port (env EMOLYSIS_PORT, default 8080)");
  serve->add_option("--host", sv.host, "Listen address");
  serve->add_option("--store", sv.store, "Session store directory (env EMOLYSIS_STORE)");
  serve->add_option("--config", sv.config, "JSON config file; overrides flags and environment");
  serve->add_option("--workers", sv.workers, "Concurrent sessions (default: CPU count)");
  serve->add_option("--static-dir", sv.static_dir, "Web console bundle served at /");

  FixtureArgs fx;
  auto* make_fixture = app.add_subcommand("make-fixture", "Write the synthetic two-person test video");
  make_fixture->add_option("--out", fx.out, "Output .avi path")->required();
  make_fixture->add_option("--duration-s", fx.duration_s, "Length in seconds");
  make_fixture->add_flag("--silent", fx.silent, "All-zero audio track");
  make_fixture->add_flag("--no-audio", fx.no_audio, "Omit the audio stream");
  make_fixture->add_option("--truncate", fx.truncate, "Cut the file to this many bytes");

  auto* label_maps = app.add_subcommand("label-maps", "Print the built-in label maps as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }
  if (verbose) spdlog::set_level(spdlog::level::info);

  if (*analyze) return run_analyze(an);
  if (*serve) {
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
    return run_serve(sv);
  }
  if (*make_fixture) return run_make_fixture(fx);
  if (*label_maps) {
    std::cout << labels::LabelMapRegistry::builtin().to_json().dump(2) << '\n';
    return 0;
  }
  return kExitValidation;
}
