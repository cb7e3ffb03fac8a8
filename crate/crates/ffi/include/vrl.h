#ifndef VRL_H
#define VRL_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VrlStatus {
  VRL_STATUS_OK = 0,
  VRL_STATUS_NULL_ARGUMENT = 1,
  VRL_STATUS_INVALID_UTF8 = 2,
  VRL_STATUS_INVALID_ARGUMENT = 3,
  VRL_STATUS_CONFIG = 4,
  VRL_STATUS_RUN = 5,
  VRL_STATUS_ANALYSIS = 6,
  VRL_STATUS_PANIC = 7,
} VrlStatus;

/**
 * Scenario configuration handle.
 */
typedef struct VrlConfig VrlConfig;

/**
 * Metrics of one run. Ratios that are undefined (nothing sent, nothing
 * received) are NaN.
 */
typedef struct VrlMetrics {
  double pdr_pct;
  double e2e_delay_ms;
  double loss_pct;
  double nrl;
  double throughput_kbps;
  uint64_t sent;
  uint64_t received;
  uint64_t dropped;
  uint64_t in_flight;
  uint64_t routing_packets;
  uint64_t received_bytes;
  /**
   * First and last data event in seconds, NaN without data.
   */
  double start_s;
  double stop_s;
} VrlMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates a config from a preset name: `low`, `medium` or `high`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VrlStatus vrl_config_preset(const char *name, struct VrlConfig **out);

/**
 * Loads a config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VrlStatus vrl_config_load(const char *path, struct VrlConfig **out);

/**
 * Selects the routing protocol: `AODV`, `AOMDV`, `DSR` or `DSDV`.
 *
 * # Safety
 * `cfg` must be a live handle and `protocol` a NUL-terminated string.
 */
enum VrlStatus vrl_config_set_protocol(struct VrlConfig *cfg, const char *protocol);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum VrlStatus vrl_config_set_seed(struct VrlConfig *cfg, uint64_t seed);

/**
 * Limits the number of simulated vehicles. Zero removes the limit.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum VrlStatus vrl_config_set_vehicle_cap(struct VrlConfig *cfg, uint64_t cap);

/**
 * Shortens the simulation. Must not end before the traffic window does.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum VrlStatus vrl_config_set_sim_end(struct VrlConfig *cfg, double seconds);

/**
 * Releases a config. Null is ignored.
 *
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void vrl_config_free(struct VrlConfig *cfg);

/**
 * Simulates the config, writes `<cell>.trace` and `<cell>.report.txt` into
 * `out_dir` and fills `out` with the metrics.
 *
 * # Safety
 * `cfg` must be a live handle, `out_dir` a NUL-terminated string and `out`
 * writable.
 */
enum VrlStatus vrl_run(const struct VrlConfig *cfg, const char *out_dir, struct VrlMetrics *out);

/**
 * Computes metrics from an existing trace file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum VrlStatus vrl_analyze_trace(const char *path, struct VrlMetrics *out);

/**
 * Copies the calling thread's last error message into `buf`, truncating
 * and always NUL-terminating when `len > 0`. Returns the full message
 * length excluding the terminator, so a caller can size a retry.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t vrl_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vrl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VRL_H */
