#include "clothtrack/clothtrack.h"

#include <filesystem>
#include <string>
#include <vector>

#include "clothtrack/pipeline.hpp"

using namespace ct;

struct ct_session {
  Engine engine;
  std::string last_error;

  explicit ct_session(Scene scene) : engine(std::move(scene)) {}
};

namespace {

void set_errbuf(char* errbuf, size_t size, const std::string& msg) {
  if (!errbuf || size == 0) return;
  size_t n = std::min(size - 1, msg.size());
  msg.copy(errbuf, n);
  errbuf[n] = '\0';
}

template <typename Fn>
ct_status guarded(ct_session* s, Fn&& fn) {
  if (!s) return CT_ERR_INPUT;
  try {
    fn();
    s->last_error.clear();
    return CT_OK;
  } catch (const MissingDataError& e) {
    s->last_error = e.what();
    return CT_ERR_MISSING_DATA;
  } catch (const NumericalError& e) {
    s->last_error = e.what();
    return CT_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    // InputError and anything unexpected both count as input failures
    s->last_error = e.what();
    return CT_ERR_INPUT;
  }
}

}  // namespace

extern "C" {

ct_session* ct_session_create(const char* scene_path, const char* const* overrides,
                              size_t n_overrides, char* errbuf, size_t errbuf_size) {
  if (!scene_path) {
    set_errbuf(errbuf, errbuf_size, "scene_path is null");
    return nullptr;
  }
  try {
    std::vector<std::string> ov;
    for (size_t i = 0; i < n_overrides; ++i) ov.emplace_back(overrides[i]);
    return new ct_session(load_scene(scene_path, ov));
  } catch (const std::exception& e) {
    set_errbuf(errbuf, errbuf_size, e.what());
    return nullptr;
  }
}

void ct_session_destroy(ct_session* s) { delete s; }

const char* ct_last_error(const ct_session* s) { return s ? s->last_error.c_str() : ""; }

const char* ct_version(void) { return "0.1.0"; }

ct_status ct_drape(ct_session* s, const char* out_dir) {
  return guarded(s, [&] {
    if (!out_dir) throw InputError("out_dir is null");
    std::filesystem::create_directories(out_dir);
    s->engine.drape();
    const Scene& scene = s->engine.scene();
    for (size_t g = 0; g < scene.avatar.garments.size(); ++g) {
      const Garment& garment = scene.avatar.garments[g];
      save_mesh((std::filesystem::path(out_dir) / (garment.name + "_draped.obj")).string(),
                garment.mesh, s->engine.cloth_states()[g].positions);
    }
  });
}

ct_status ct_generate(ct_session* s, const char* out_dir) {
  return guarded(s, [&] {
    if (!out_dir) throw InputError("out_dir is null");
    s->engine.generate_sequence(out_dir);
  });
}

ct_status ct_track(ct_session* s, const char* sequence_dir, const char* out_dir) {
  return guarded(s, [&] {
    if (!sequence_dir || !out_dir) throw InputError("sequence_dir/out_dir is null");
    s->engine.track_sequence(sequence_dir, out_dir);
  });
}

ct_status ct_evaluate(ct_session* s, const char* track_dir, const char* sequence_dir,
                      const char* out_csv) {
  return guarded(s, [&] {
    if (!track_dir || !sequence_dir || !out_csv) throw InputError("null argument");
    s->engine.evaluate(track_dir, sequence_dir, out_csv);
  });
}

ct_status ct_bench(ct_session* s, const char* out_csv, int n_frames) {
  return guarded(s, [&] {
    if (!out_csv) throw InputError("out_csv is null");
    s->engine.bench(out_csv, n_frames);
  });
}

}  // extern "C"
