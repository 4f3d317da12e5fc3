/* C API for the clothtrack capture engine.
 *
 * All functions return ct_status; 0 is success. On failure the session
 * stores a message retrievable with ct_last_error(). Sessions are opaque
 * and not thread-safe; use one session per thread.
 */
#ifndef CLOTHTRACK_H
#define CLOTHTRACK_H

#include <stddef.h>

#ifdef _WIN32
#define CT_API __declspec(dllexport)
#else
#define CT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ct_status {
  CT_OK = 0,
  CT_ERR_INPUT = 2,        /* bad scene/config/arguments */
  CT_ERR_MISSING_DATA = 3, /* sequence or frame files absent */
  CT_ERR_NUMERICAL = 4     /* simulation or solver blow-up */
} ct_status;

typedef struct ct_session ct_session;

/* Loads a scene file, applying zero or more "section.key=value" overrides.
 * Returns NULL on failure; pass a buffer to receive the parse error. */
CT_API ct_session* ct_session_create(const char* scene_path, const char* const* overrides,
                                     size_t n_overrides, char* errbuf, size_t errbuf_size);
CT_API void ct_session_destroy(ct_session* s);

CT_API const char* ct_last_error(const ct_session* s);
CT_API const char* ct_version(void);

/* Settles the garments on the rest pose and writes the draped meshes. */
CT_API ct_status ct_drape(ct_session* s, const char* out_dir);

/* Synthesizes a ground-truth sequence (depth + poses + cloth). */
CT_API ct_status ct_generate(ct_session* s, const char* out_dir);

/* Re-tracks a stored sequence; writes poses, meshes, metrics, manifest. */
CT_API ct_status ct_track(ct_session* s, const char* sequence_dir, const char* out_dir);

/* Compares a tracked run against stored ground truth; writes a CSV. */
CT_API ct_status ct_evaluate(ct_session* s, const char* track_dir, const char* sequence_dir,
                             const char* out_csv);

/* Per-stage timing report over n_frames self-generated frames. */
CT_API ct_status ct_bench(ct_session* s, const char* out_csv, int n_frames);

#ifdef __cplusplus
}
#endif

#endif /* CLOTHTRACK_H */
