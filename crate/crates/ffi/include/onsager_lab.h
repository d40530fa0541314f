#ifndef ONSAGER_LAB_H
#define ONSAGER_LAB_H

#include <stddef.h>
#include <stdint.h>

typedef enum OlStatus {
  OL_STATUS_OK = 0,
  OL_STATUS_NULL_POINTER = 1,
  OL_STATUS_CONFIG = 2,
  OL_STATUS_NUMERICAL = 3,
  OL_STATUS_FORMAT = 4,
  OL_STATUS_IO = 5,
  OL_STATUS_BUFFER_TOO_SMALL = 6,
  OL_STATUS_PANIC = 7,
} OlStatus;

/**
 * Run configuration plus the data it produced or loaded.
 */
typedef struct OlSession OlSession;

/**
 * Upstream and downstream states of a stationary shock.
 */
typedef struct OlRhResult {
  double rho_up;
  double v_up;
  double p_up;
  double rho_down;
  double v_down;
  double p_down;
  double mass_flux;
  double anomaly_entropy;
  double flux_mismatch;
} OlRhResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ol_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ol_version(void);

/**
 * Rankine-Hugoniot states for an ideal gas with `γ = 1 + 1/alpha`.
 *
 * # Safety
 * `out` must point to writable memory for one `OlRhResult`.
 */
enum OlStatus ol_rh_jump(double alpha,
                         double mach,
                         double rho,
                         double pressure,
                         struct OlRhResult *out);

/**
 * Parses a JSON run configuration and integrates it.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 * The session must be released with [`ol_session_free`].
 */
enum OlStatus ol_session_simulate(const char *config_json, struct OlSession **out);

/**
 * Pairs a JSON run configuration with data read from a snapshot file.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable.
 */
enum OlStatus ol_session_load(const char *config_json,
                              const char *snapshot_path,
                              struct OlSession **out);

/**
 * # Safety
 * `s` must be a live session; `path` NUL-terminated.
 */
enum OlStatus ol_session_save(const struct OlSession *s, const char *path);

/**
 * Spatial points and snapshot count of the session data.
 *
 * # Safety
 * `s` must be a live session; `nx` and `nt` writable.
 */
enum OlStatus ol_session_dims(const struct OlSession *s, size_t *nx, size_t *nt);

/**
 * Copies field `name` (`rho`, `u` or `v_x`) into `buf`, time-major with x
 * fastest. `len` must be at least `nx * nt`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum OlStatus ol_session_field(const struct OlSession *s,
                               const char *name,
                               double *buf,
                               size_t len);

/**
 * Budget term `term` of balance `equation` at scale `ell`, smeared against
 * the configured test function number `test_fn`.
 *
 * # Safety
 * Strings NUL-terminated; `out` writable.
 */
enum OlStatus ol_session_smeared_term(const struct OlSession *s,
                                      double ell,
                                      const char *equation,
                                      const char *term,
                                      size_t test_fn,
                                      double *out);

/**
 * Space-only `L^p` exponent of field `name` over the configured subdomain
 * `subdomain`, fitted on twelve scales in `[lo, hi]`.
 *
 * # Safety
 * `name` NUL-terminated; `sigma` writable.
 */
enum OlStatus ol_session_exponent(const struct OlSession *s,
                                  const char *name,
                                  size_t subdomain,
                                  double p,
                                  double lo,
                                  double hi,
                                  double *sigma);

/**
 * Releases a session; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ol_session_free(struct OlSession *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ONSAGER_LAB_H */
