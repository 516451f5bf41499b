#ifndef NSCHS_H
#define NSCHS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NschsStatus {
  NSCHS_STATUS_OK = 0,
  NSCHS_STATUS_NULL_POINTER = 1,
  NSCHS_STATUS_INVALID_ARGUMENT = 2,
  NSCHS_STATUS_CONFIG = 3,
  // An invariant monitor stopped the run; the state is the last accepted one.
  NSCHS_STATUS_MONITOR_TRIP = 4,
  NSCHS_STATUS_IO = 5,
  // Argument outside the potential's domain.
  NSCHS_STATUS_DOMAIN = 6,
  NSCHS_STATUS_BUFFER_TOO_SMALL = 7,
  NSCHS_STATUS_PANIC = 8,
} NschsStatus;

typedef enum NschsField {
  NSCHS_FIELD_PHI = 0,
  NSCHS_FIELD_RHO = 1,
  NSCHS_FIELD_PRESSURE = 2,
  NSCHS_FIELD_MU = 3,
  NSCHS_FIELD_PSI = 4,
  // `(nx + 1) * ny` x-face velocities.
  NSCHS_FIELD_UX = 5,
  // `nx * (ny + 1)` y-face velocities.
  NSCHS_FIELD_UY = 6,
} NschsField;

typedef enum NschsPotential {
  // `(s^2 - 1)^2 / 4`
  NSCHS_POTENTIAL_QUARTIC = 0,
  NSCHS_POTENTIAL_FLORY_HUGGINS = 1,
  NSCHS_POTENTIAL_FLORY_HUGGINS_REGULARIZED = 2,
} NschsPotential;

// Opaque simulation handle.
typedef struct NschsSimulation NschsSimulation;

typedef struct NschsEnergy {
  double kinetic;
  double grad_phi;
  double laplace_phi;
  double s_phi_bulk;
  double grad_rho;
  double s_rho_bulk;
  double coupling;
  double penalty;
  double total;
} NschsEnergy;

typedef struct NschsDiagnostics {
  double t;
  double mass_phi;
  double mass_rho;
  double dissipation;
  double energy_residual;
  double rho_min;
  double rho_max;
  double eta;
  uint64_t clamp_events;
  double max_u;
  double adsorption;
  double energy_lower_bound;
  uint64_t steps;
} NschsDiagnostics;

typedef struct NschsPotentialParams {
  double theta1;
  double theta2;
  double eps1;
  // Used by the regularized potential only.
  double eps;
} NschsPotentialParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Load and validate a configuration file and build its initial state.
// On success `*out` owns a handle to release with [`nschs_simulation_free`].
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NschsStatus nschs_simulation_from_config_file(const char *path, struct NschsSimulation **out);

// # Safety
// `sim` must come from [`nschs_simulation_from_config_file`] and not be
// used afterwards. Null is ignored.
void nschs_simulation_free(struct NschsSimulation *sim);

// Advance up to `n_steps` steps. `*steps_done` (optional) receives the
// number of accepted steps; a monitor trip returns `MonitorTrip`.
//
// # Safety
// `sim` must be a live handle; `steps_done` null or writable.
enum NschsStatus nschs_simulation_step(struct NschsSimulation *sim,
                                       uint64_t n_steps,
                                       uint64_t *steps_done);

// # Safety
// `sim` must be a live handle; `t` writable.
enum NschsStatus nschs_simulation_time(const struct NschsSimulation *sim, double *t);

// # Safety
// `sim` must be a live handle; `nx`, `ny` writable.
enum NschsStatus nschs_simulation_dims(const struct NschsSimulation *sim, size_t *nx, size_t *ny);

// Copy a field into `buf` of `len` doubles. `*needed` (optional) receives
// the required length; a short buffer returns `BufferTooSmall`.
//
// # Safety
// `sim` must be a live handle; `buf` valid for `len` writes.
enum NschsStatus nschs_simulation_copy_field(const struct NschsSimulation *sim,
                                             enum NschsField field,
                                             double *buf,
                                             size_t len,
                                             size_t *needed);

// Energy of the current state, as monitored by the run.
//
// # Safety
// `sim` must be a live handle; `out` writable.
enum NschsStatus nschs_simulation_energy(const struct NschsSimulation *sim,
                                         struct NschsEnergy *out);

// Latest diagnostics record.
//
// # Safety
// `sim` must be a live handle; `out` writable.
enum NschsStatus nschs_simulation_diagnostics(const struct NschsSimulation *sim,
                                              struct NschsDiagnostics *out);

// # Safety
// `sim` must be a live handle; `path` a NUL-terminated string.
enum NschsStatus nschs_simulation_write_snapshot(const struct NschsSimulation *sim,
                                                 const char *path);

// Value (`order` 0), first or second derivative of a bulk potential.
// `params` is ignored for the quartic potential and may be null.
//
// # Safety
// `params` null or readable; `out` writable.
enum NschsStatus nschs_potential_eval(enum NschsPotential kind,
                                      const struct NschsPotentialParams *params,
                                      double s,
                                      uint8_t order,
                                      double *out);

// Parse a configuration and run the assumption checks without building a
// state. `Ok` means every check passed.
//
// # Safety
// `path` must be a NUL-terminated string.
enum NschsStatus nschs_validate_config(const char *path);

// Copy the calling thread's last error message (NUL-terminated, truncated
// to `len`) into `buf`. Returns the full message length without the NUL,
// 0 when there is none. `buf` may be null to query the length.
//
// # Safety
// `buf` null or valid for `len` writes.
size_t nschs_last_error_message(char *buf, size_t len);

// Library version, a static NUL-terminated string.
const char *nschs_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NSCHS_H */
