#ifndef HENON_BRODY_H
#define HENON_BRODY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Escape classification of a forward orbit.
typedef enum HbClass {
  HB_CLASS_ESCAPING = 0,
  HB_CLASS_BOUNDED = 1,
  HB_CLASS_UNDECIDED = 2,
} HbClass;

// Status codes returned by every fallible function.
typedef enum HbStatus {
  HB_STATUS_OK = 0,
  HB_STATUS_NULL_POINTER = 1,
  HB_STATUS_INVALID_ARGUMENT = 2,
  HB_STATUS_PARSE = 3,
  HB_STATUS_INVALID_MAP = 4,
  HB_STATUS_ESCAPED_RANGE = 5,
  HB_STATUS_INDETERMINATE = 6,
  HB_STATUS_GREEN_UNDECIDED = 7,
  HB_STATUS_NOT_SADDLE = 8,
  HB_STATUS_CONDITIONING = 9,
  HB_STATUS_PRECISION_EXHAUSTED = 10,
  HB_STATUS_PIPELINE_FAILED = 11,
  HB_STATUS_IO = 12,
  HB_STATUS_INTERNAL = 13,
} HbStatus;

// Opaque stable-manifold parametrization.
typedef struct HbChart HbChart;

// Opaque Hénon map.
typedef struct HbMap HbMap;

// Opaque list of periodic orbits.
typedef struct HbOrbits HbOrbits;

typedef struct HbComplex {
  double re;
  double im;
} HbComplex;

// A point `(z, w)` of `C^2`.
typedef struct HbPoint {
  struct HbComplex z;
  struct HbComplex w;
} HbPoint;

// Summary of one periodic orbit.
typedef struct HbOrbitInfo {
  size_t period;
  struct HbPoint first_point;
  struct HbComplex lambda_s;
  struct HbComplex lambda_u;
  double residual;
  bool is_saddle;
} HbOrbitInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, empty after a success. The
// pointer stays valid until the next call into this library on the same thread.
const char *hb_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *hb_version(void);

// Parses a map such as `p=z^2-6; a=0.5`.
//
// # Safety
// `text` must be a NUL-terminated string and `out` a writable pointer.
enum HbStatus hb_map_parse(const char *text, struct HbMap **out_map);

// Quadratic map `(z^2 + c - a w, z)`.
//
// # Safety
// `out_map` must be a writable pointer.
enum HbStatus hb_map_new_quadratic(struct HbComplex c, struct HbComplex a, struct HbMap **out_map);

// # Safety
// `map` must come from this library and not be used afterwards; null is ignored.
void hb_map_free(struct HbMap *map);

// # Safety
// `map` must be a live handle; `degree` must be writable.
enum HbStatus hb_map_degree(const struct HbMap *map, size_t *degree);

// `f(x)`.
//
// # Safety
// `map` must be a live handle and `x`, `y` valid pointers.
enum HbStatus hb_map_forward(const struct HbMap *map, const struct HbPoint *x, struct HbPoint *y);

// `f^{-1}(x)`.
//
// # Safety
// `map` must be a live handle and `x`, `y` valid pointers.
enum HbStatus hb_map_inverse(const struct HbMap *map, const struct HbPoint *x, struct HbPoint *y);

// Forward escape classification with at most `n_max` iterations. `n_escape` is set to
// the escape time for escaping points and to `SIZE_MAX` otherwise.
//
// # Safety
// `map` must be a live handle and the other pointers valid.
enum HbStatus hb_classify(const struct HbMap *map,
                          const struct HbPoint *x,
                          size_t n_max,
                          enum HbClass *class_,
                          size_t *n_escape);

// Green function `g+(x)`.
//
// # Safety
// `map` must be a live handle and the other pointers valid.
enum HbStatus hb_green_plus(const struct HbMap *map, const struct HbPoint *x, double *value);

// Periodic orbits of exact period `period`.
//
// # Safety
// `map` must be a live handle and `out_orbits` writable.
enum HbStatus hb_periodic_find(const struct HbMap *map,
                               size_t period,
                               struct HbOrbits **out_orbits);

// # Safety
// `orbits` must be a live handle and `count` writable.
enum HbStatus hb_orbits_count(const struct HbOrbits *orbits, size_t *count);

// # Safety
// `orbits` must be a live handle and `info` writable.
enum HbStatus hb_orbits_get(const struct HbOrbits *orbits, size_t index, struct HbOrbitInfo *info);

// # Safety
// `orbits` must come from this library and not be used afterwards; null is ignored.
void hb_orbits_free(struct HbOrbits *orbits);

// Stable-manifold parametrization `psi` of saddle orbit `index` with series order `order`,
// normalized so that `psi'(0)` is the unit stable eigenvector.
//
// # Safety
// `map` and `orbits` must be live handles and `out_chart` writable.
enum HbStatus hb_chart_build(const struct HbMap *map,
                             const struct HbOrbits *orbits,
                             size_t index,
                             size_t order,
                             struct HbChart **out_chart);

// Evaluates `psi(zeta)`. `lift` receives a homogeneous lift `[X0 : X1 : X2]` (with
// `X2 = 1` when the point is affine) and `speed` the Fubini–Study speed of `psi`.
//
// # Safety
// `chart` must be a live handle; `lift` must point to three writable values.
enum HbStatus hb_chart_eval(const struct HbChart *chart,
                            struct HbComplex zeta,
                            struct HbComplex *lift,
                            double *speed);

// # Safety
// `chart` must be a live handle and `rho` writable.
enum HbStatus hb_chart_radius(const struct HbChart *chart, double *rho);

// # Safety
// `chart` must come from this library and not be used afterwards; null is ignored.
void hb_chart_free(struct HbChart *chart);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HENON_BRODY_H */
