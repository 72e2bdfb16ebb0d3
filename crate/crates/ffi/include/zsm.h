#ifndef ZSM_H
#define ZSM_H

/* Generated by cbindgen from zsm-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every entry point.
 */
typedef enum ZsmStatus {
  ZSM_STATUS_OK = 0,
  /**
   * A pointer argument was null or a value violated a precondition.
   */
  ZSM_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The operation exists but is deliberately unsupported for the input.
   */
  ZSM_STATUS_UNSUPPORTED = 2,
  /**
   * An iterative solver failed to converge.
   */
  ZSM_STATUS_NO_CONVERGENCE = 3,
  /**
   * The experiment ran but its metrics failed their bounds.
   */
  ZSM_STATUS_METRICS_FAILED = 4,
  /**
   * Unknown experiment name.
   */
  ZSM_STATUS_UNKNOWN_EXPERIMENT = 5,
  /**
   * Configuration file rejected.
   */
  ZSM_STATUS_BAD_CONFIG = 6,
  /**
   * Any other runtime failure; see zsm_last_error().
   */
  ZSM_STATUS_RUNTIME_ERROR = 7,
  /**
   * A panic was caught at the boundary.
   */
  ZSM_STATUS_PANIC = 8,
} ZsmStatus;

/**
 * Opaque handle to a set of physical constants.
 */
typedef struct ZsmConstants ZsmConstants;

/**
 * Derived scalars of a constants handle.
 */
typedef struct ZsmConstantsInfo {
  double mass;
  double hbar;
  double light_speed;
  double charge;
  /**
   * Diffusion coefficient hbar / 2m.
   */
  double diffusion;
  /**
   * Rest-frame oscillation frequency m c^2 / hbar.
   */
  double compton_freq;
} ZsmConstantsInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Most recent error message on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *zsm_last_error(void);

/**
 * Library version as a static string (never freed).
 */
const char *zsm_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a zsm function that documents string
 * ownership transfer, and must not be used afterwards.
 */
void zsm_string_free(char *s);

/**
 * Create natural-unit constants (m = hbar = c = 1).
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum ZsmStatus zsm_constants_natural(struct ZsmConstants **out);

/**
 * Create SI constants for the electron (CODATA-2018).
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum ZsmStatus zsm_constants_si_electron(struct ZsmConstants **out);

/**
 * Create natural-unit constants with positive overrides (pass 0 to keep a
 * default).
 *
 * # Safety
 * `out` must be a valid pointer to receive the handle.
 */
enum ZsmStatus zsm_constants_custom(double mass,
                                    double hbar,
                                    double light_speed,
                                    double charge,
                                    struct ZsmConstants **out);

/**
 * Destroy a constants handle.
 *
 * # Safety
 * `k` must have come from a zsm_constants_* constructor and not have been
 * freed already.
 */
void zsm_constants_free(struct ZsmConstants *k);

/**
 * Read the stored and derived constants.
 *
 * # Safety
 * `k` must be a live constants handle and `out` a valid pointer.
 */
enum ZsmStatus zsm_constants_info(const struct ZsmConstants *k, struct ZsmConstantsInfo *out);

/**
 * Energy of the ring eigenstate n on a ring of the given radius:
 * E = n^2 hbar^2 / (2 m r^2).
 *
 * # Safety
 * `k` must be a live constants handle and `out_energy` a valid pointer.
 */
enum ZsmStatus zsm_ring_eigenstate_energy(const struct ZsmConstants *k,
                                          int64_t n,
                                          double radius,
                                          double *out_energy);

/**
 * One quantized circular Coulomb orbit (SI constants required):
 * radius [m], energy [eV], angular momentum in units of hbar.
 *
 * # Safety
 * `k` must be a live constants handle; out pointers may be null to skip.
 */
enum ZsmStatus zsm_bohr_orbit(const struct ZsmConstants *k,
                              uint32_t n,
                              double *out_radius_m,
                              double *out_energy_ev,
                              double *out_angular_momentum_hbar);

/**
 * Rest-frame frequency shifts from weak external potentials:
 * kappa = omega_c Phi_g / c^2 and epsilon = omega_c (e / m c^2) Phi_e.
 *
 * # Safety
 * `k` must be a live constants handle; out pointers may be null to skip.
 */
enum ZsmStatus zsm_frequency_shift(const struct ZsmConstants *k,
                                   double phi_g,
                                   double phi_e,
                                   double q_magnitude,
                                   double *out_kappa,
                                   double *out_epsilon);

/**
 * Run a registered experiment. `config_path` and `out_dir` may be null
 * (defaults / no artifacts); `seed_override` of 0 keeps the config seed.
 * On success `*out_verdict_json` receives the verdict document (release
 * with zsm_string_free) and `*out_pass` the overall verdict. A run whose
 * metrics fail returns `ZSM_STATUS_METRICS_FAILED` but still fills both
 * outputs.
 *
 * # Safety
 * `name` must be a NUL-terminated UTF-8 string; non-null out pointers and
 * path strings must be valid.
 */
enum ZsmStatus zsm_run_experiment(const char *name,
                                  const char *config_path,
                                  const char *out_dir,
                                  uint64_t seed_override,
                                  bool *out_pass,
                                  char **out_verdict_json);

/**
 * Newline-separated list of registered experiment names (release with
 * zsm_string_free).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum ZsmStatus zsm_experiment_list(char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZSM_H */
