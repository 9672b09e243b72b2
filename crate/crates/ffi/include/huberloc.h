#ifndef HUBERLOC_H
#define HUBERLOC_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result codes of the C interface.
 */
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_INVALID_SCENARIO = 3,
  HL_STATUS_IO = 4,
  HL_STATUS_PARSE = 5,
  HL_STATUS_BUFFER_TOO_SMALL = 6,
  HL_STATUS_PANIC = 7,
} HlStatus;

/*
 Opaque scenario handle.
 */
typedef struct HlScenario HlScenario;

/*
 Summary of a solver run.
 */
typedef struct HlSolveInfo {
  /*
   Synchronous rounds or asynchronous activations.
   */
  size_t iterations;
  /*
   Scalar deliveries between neighbors.
   */
  uint64_t messages;
  double final_cost;
  bool converged;
} HlSolveInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message into `buf` (truncated and
 NUL-terminated) and returns the full message length in bytes.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
size_t hl_last_error_message(char *buf, size_t len);

/*
 Library version as a static NUL-terminated string.
 */
const char *hl_version(void);

/*
 Huber function `h_R(t)`.
 */
double hl_huber_loss(double t, double radius);

/*
 Parses a scenario JSON document.

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum HlStatus hl_scenario_from_json(const char *json, struct HlScenario **out);

/*
 Loads a scenario JSON file.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HlStatus hl_scenario_load(const char *path, struct HlScenario **out);

/*
 Noiseless random network in the unit square with corner anchors.

 # Safety
 `out` must be writable.
 */
enum HlStatus hl_scenario_generate(size_t nodes,
                                   double comm_radius,
                                   double huber_radius,
                                   uint64_t seed,
                                   struct HlScenario **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `s` must be null or a handle from this library not yet freed.
 */
void hl_scenario_free(struct HlScenario *s);

/*
 Number of sensors, or 0 for a null handle.

 # Safety
 `s` must be null or a live handle.
 */
size_t hl_scenario_node_count(const struct HlScenario *s);

/*
 Spatial dimension, or 0 for a null handle.

 # Safety
 `s` must be null or a live handle.
 */
size_t hl_scenario_dim(const struct HlScenario *s);

/*
 Lipschitz constant of the relaxed cost gradient.

 # Safety
 `s` must be a live handle; `out` must be writable.
 */
enum HlStatus hl_scenario_lipschitz(const struct HlScenario *s, double *out);

/*
 Copies the true sensor positions into `positions`.

 # Safety
 `s` must be a live handle; `positions` must hold `len` doubles.
 */
enum HlStatus hl_scenario_truth(const struct HlScenario *s, double *positions, size_t len);

/*
 Runs the synchronous solver from a random start drawn with `init_seed`
 and writes the estimates into `positions`. `info` may be null.

 # Safety
 `s` must be a live handle; `positions` must hold `len` doubles; `info`
 must be null or writable.
 */
enum HlStatus hl_solve_sync(const struct HlScenario *s,
                            uint64_t init_seed,
                            size_t max_iters,
                            double tol,
                            double *positions,
                            size_t len,
                            struct HlSolveInfo *info);

/*
 Runs the asynchronous solver with uniform activations drawn with
 `activation_seed`. `message_budget` of 0 means no budget.

 # Safety
 As for [`hl_solve_sync`].
 */
enum HlStatus hl_solve_async(const struct HlScenario *s,
                             uint64_t init_seed,
                             uint64_t activation_seed,
                             size_t max_steps,
                             double tol,
                             uint64_t message_budget,
                             double *positions,
                             size_t len,
                             struct HlSolveInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HUBERLOC_H */
