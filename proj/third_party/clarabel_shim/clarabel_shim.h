// C interface to the Rust Clarabel shim (third_party/clarabel_shim/src/lib.rs).
#pragma once

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  CLARABEL_SHIM_CONE_ZERO = 0,
  CLARABEL_SHIM_CONE_NONNEG = 1,
  CLARABEL_SHIM_CONE_SOC = 2,
  CLARABEL_SHIM_CONE_PSD = 3,
};

typedef struct {
  double tol_gap_abs;
  double tol_gap_rel;
  double tol_feas;
  uint32_t max_iter;
  int verbose;
} ClarabelShimSettings;

typedef struct {
  int status;
  uint32_t iterations;
  double obj_val;
  double obj_val_dual;
  double solve_time;
  double r_prim;
  double r_dual;
} ClarabelShimInfo;

int clarabel_shim_solve(size_t n, size_t m, const double* q,
                        const size_t* a_colptr, const size_t* a_rowval,
                        const double* a_nzval, const double* b, size_t ncones,
                        const int* cone_kinds, const size_t* cone_dims,
                        const ClarabelShimSettings* settings, double* x_out,
                        double* z_out, double* s_out, ClarabelShimInfo* info);

#ifdef __cplusplus
}
#endif
