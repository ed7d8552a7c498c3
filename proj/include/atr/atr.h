/* C interface to the torus attractor toolkit.
 *
 * Every function returns an atr_status; on failure atr_last_error() gives a
 * thread-local message valid until the next call on the same thread.
 * Objects are opaque handles released with their *_destroy function.
 * Complex arrays are interleaved (re, im) doubles in row-major grid order,
 * value at node (x1_i, x2_j) = (2*pi*i/n1, 2*pi*j/n2) at index i*n2 + j.
 */
#ifndef ATR_ATR_H
#define ATR_ATR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ATR_API __declspec(dllexport)
#else
#define ATR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum atr_status {
  ATR_OK = 0,
  ATR_ERR_INVALID_ARGUMENT = 1,
  ATR_ERR_CONFIG = 2,
  ATR_ERR_NUMERICAL = 3,
  ATR_ERR_IO = 4,
  ATR_ERR_INTERNAL = 5
} atr_status;

typedef struct atr_field atr_field;
typedef struct atr_operator atr_operator;
typedef struct atr_config atr_config;

ATR_API const char* atr_last_error(void);
ATR_API const char* atr_version(void);

/* Fields (grid layout). values may be NULL for a zero field. */
ATR_API atr_status atr_field_create(int n1, int n2, const double* values, atr_field** out);
ATR_API void atr_field_destroy(atr_field* f);
ATR_API atr_status atr_field_shape(const atr_field* f, int* n1, int* n2);
/* len is the number of doubles available in out, at least 2*n1*n2. */
ATR_API atr_status atr_field_values(const atr_field* f, double* out, size_t len);
ATR_API atr_status atr_field_hs_norm(const atr_field* f, double s, double* out);
/* (2pi/n1)(2pi/n2) sum u conj(v) */
ATR_API atr_status atr_field_inner(const atr_field* u, const atr_field* v, double* re, double* im);

/* Torus preset with V = -a cos x1. damping is "chi0", "chi1", "chi2" or a
 * path to a damping file (n1 rows of n2 nonnegative values). */
ATR_API atr_status atr_operator_create_preset(double a, int n1, int n2, const char* damping, atr_operator** out);
ATR_API void atr_operator_destroy(atr_operator* op);
ATR_API atr_status atr_operator_forcing(const atr_operator* op, atr_field** out);
ATR_API atr_status atr_operator_damping(const atr_operator* op, atr_field** out);
/* out = (P - omega) u with P = m(D) + V - i chi */
ATR_API atr_status atr_operator_apply(const atr_operator* op, const atr_field* u, double omega_re, double omega_im,
                                      atr_field** out);

typedef struct atr_cycle {
  double x1, x2, theta;
  double period;
  double floquet_multiplier;
  int attractive;   /* 1 attractive, 0 repulsive */
  int x1_plus;      /* 1 for the component near x1 = pi/2 */
  int theta_pi;     /* 1 for the sheet with cos(theta) < 0 */
} atr_cycle;

/* Writes up to cap cycles; *count receives the number found. */
ATR_API atr_status atr_find_limit_cycles(double a, double shift, atr_cycle* out, size_t cap, size_t* count);

typedef struct atr_resolvent_result {
  double residual;          /* ||(P - omega - i eps)u - f|| */
  double relative_residual;
  int iterations;
  int converged;
} atr_resolvent_result;

/* u = (P - omega - i eps)^{-1} f. preconditioner: "none", "fourier_diagonal",
 * "x2_block" or NULL for the default. */
ATR_API atr_status atr_solve_resolvent(const atr_operator* op, const atr_field* f, double omega_re, double omega_im,
                                       double epsilon, double rtol, const char* preconditioner, atr_field** u,
                                       atr_resolvent_result* info);

/* Scenario configuration with defaults; keys as in the YAML config file. */
ATR_API atr_status atr_config_create(atr_config** out);
ATR_API void atr_config_destroy(atr_config* cfg);
ATR_API atr_status atr_config_load(atr_config* cfg, const char* path);
ATR_API atr_status atr_config_set(atr_config* cfg, const char* key, const char* value);
/* Resolved configuration as YAML; release with atr_string_free. */
ATR_API atr_status atr_config_to_yaml(const atr_config* cfg, char** out);

/* Runs the scenario and writes its outputs. *manifest_json (optional) gets
 * the manifest text; release with atr_string_free. A completed run whose
 * solver missed its tolerance returns ATR_ERR_NUMERICAL after writing. */
ATR_API atr_status atr_run(const atr_config* cfg, char** manifest_json);

ATR_API void atr_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif
