// Command-line front end for the clothtrack engine. Thin wrapper over the
// C API: every subcommand loads a scene, runs one engine entry point, and
// maps ct_status to the exit code (0 ok, 2 input, 3 missing data, 4
// numerical failure).
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "clothtrack/clothtrack.h"

namespace {

struct SessionDeleter {
  void operator()(ct_session* s) const { ct_session_destroy(s); }
};
using SessionPtr = std::unique_ptr<ct_session, SessionDeleter>;

SessionPtr open_session(const std::string& scene, const std::vector<std::string>& overrides) {
  std::vector<const char*> ov;
  for (const std::string& o : overrides) ov.push_back(o.c_str());
  char errbuf[1024] = {0};
  SessionPtr s(ct_session_create(scene.c_str(), ov.data(), ov.size(), errbuf, sizeof(errbuf)));
  if (!s) std::fprintf(stderr, "error: %s\n", errbuf);
  return s;
}

int finish(ct_session* s, ct_status st) {
  if (st != CT_OK) std::fprintf(stderr, "error: %s\n", ct_last_error(s));
  return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physics-based garment capture from depth sequences"};
  app.set_version_flag("--version", std::string(ct_version()));
  app.require_subcommand(1);

  std::string scene, out_dir, seq_dir, track_dir, out_csv;
  std::vector<std::string> overrides;
  int bench_frames = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("scene", scene, "scene config file")->required();
    cmd->add_option("--override", overrides, "config override section.key=value")
        ->take_all()
        ->allow_extra_args(false);
  };

  CLI::App* drape = app.add_subcommand("drape", "settle garments on the rest pose");
  add_common(drape);
  drape->add_option("--out", out_dir, "output directory")->required();

  CLI::App* generate = app.add_subcommand("generate", "synthesize a ground-truth sequence");
  add_common(generate);
  generate->add_option("--out", out_dir, "output directory")->required();

  CLI::App* track = app.add_subcommand("track", "track a stored depth sequence");
  add_common(track);
  track->add_option("--sequence", seq_dir, "sequence directory")->required();
  track->add_option("--out", out_dir, "output directory")->required();

  CLI::App* evaluate = app.add_subcommand("evaluate", "compare a tracked run to ground truth");
  add_common(evaluate);
  evaluate->add_option("--tracked", track_dir, "tracked run directory")->required();
  evaluate->add_option("--sequence", seq_dir, "sequence directory")->required();
  evaluate->add_option("--out", out_csv, "output CSV path")->required();

  CLI::App* bench = app.add_subcommand("bench", "per-stage timing report");
  add_common(bench);
  bench->add_option("--out", out_csv, "output CSV path")->required();
  bench->add_option("--frames", bench_frames, "frame count (0 = scene default)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  SessionPtr s = open_session(scene, overrides);
  if (!s) return 2;

  if (drape->parsed()) return finish(s.get(), ct_drape(s.get(), out_dir.c_str()));
  if (generate->parsed()) return finish(s.get(), ct_generate(s.get(), out_dir.c_str()));
  if (track->parsed())
    return finish(s.get(), ct_track(s.get(), seq_dir.c_str(), out_dir.c_str()));
  if (evaluate->parsed())
    return finish(s.get(),
                  ct_evaluate(s.get(), track_dir.c_str(), seq_dir.c_str(), out_csv.c_str()));
  if (bench->parsed()) return finish(s.get(), ct_bench(s.get(), out_csv.c_str(), bench_frames));
  return 2;
}
