//! C ABI around the Clarabel interior-point solver.
//!
//! Problem form: minimize q'x subject to A x + s = b, s in K, where K is a
//! product of zero, nonnegative, second-order and PSD-triangle cones given
//! in order. PSD blocks use Clarabel's packed upper-triangle column-major
//! layout with sqrt(2) scaling of off-diagonal entries.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use std::os::raw::c_int;

#[repr(C)]
pub struct ClarabelShimSettings {
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub max_iter: u32,
    pub verbose: c_int,
}

#[repr(C)]
pub struct ClarabelShimInfo {
    pub status: c_int,
    pub iterations: u32,
    pub obj_val: f64,
    pub obj_val_dual: f64,
    pub solve_time: f64,
    pub r_prim: f64,
    pub r_dual: f64,
}

pub const CONE_ZERO: c_int = 0;
pub const CONE_NONNEG: c_int = 1;
pub const CONE_SOC: c_int = 2;
pub const CONE_PSD: c_int = 3;

fn status_code(s: SolverStatus) -> c_int {
    match s {
        SolverStatus::Unsolved => 0,
        SolverStatus::Solved => 1,
        SolverStatus::PrimalInfeasible => 2,
        SolverStatus::DualInfeasible => 3,
        SolverStatus::AlmostSolved => 4,
        SolverStatus::AlmostPrimalInfeasible => 5,
        SolverStatus::AlmostDualInfeasible => 6,
        SolverStatus::MaxIterations => 7,
        SolverStatus::MaxTime => 8,
        SolverStatus::NumericalError => 9,
        SolverStatus::InsufficientProgress => 10,
        SolverStatus::CallbackTerminated => 11,
    }
}

/// Returns 0 on success, -1 on invalid input, -2 on a solver setup error,
/// -3 if the solver panicked.
///
/// # Safety
/// All pointers must be valid for the lengths implied by n, m, ncones and
/// a_colptr[n].
#[no_mangle]
pub unsafe extern "C" fn clarabel_shim_solve(
    n: usize,
    m: usize,
    q: *const f64,
    a_colptr: *const usize,
    a_rowval: *const usize,
    a_nzval: *const f64,
    b: *const f64,
    ncones: usize,
    cone_kinds: *const c_int,
    cone_dims: *const usize,
    settings: *const ClarabelShimSettings,
    x_out: *mut f64,
    z_out: *mut f64,
    s_out: *mut f64,
    info: *mut ClarabelShimInfo,
) -> c_int {
    if settings.is_null() || info.is_null() || a_colptr.is_null() {
        return -1;
    }
    let slice = |p: *const f64, len: usize| -> Vec<f64> {
        if len == 0 { Vec::new() } else { std::slice::from_raw_parts(p, len).to_vec() }
    };
    let colptr = std::slice::from_raw_parts(a_colptr, n + 1).to_vec();
    let nnz = colptr[n];
    let rowval = if nnz == 0 { Vec::new() } else { std::slice::from_raw_parts(a_rowval, nnz).to_vec() };
    let nzval = slice(a_nzval, nnz);
    let qv = slice(q, n);
    let bv = slice(b, m);

    let mut cones = Vec::with_capacity(ncones);
    for k in 0..ncones {
        let dim = *cone_dims.add(k);
        let cone = match *cone_kinds.add(k) {
            CONE_ZERO => SupportedConeT::ZeroConeT(dim),
            CONE_NONNEG => SupportedConeT::NonnegativeConeT(dim),
            CONE_SOC => SupportedConeT::SecondOrderConeT(dim),
            CONE_PSD => SupportedConeT::PSDTriangleConeT(dim),
            _ => return -1,
        };
        cones.push(cone);
    }

    let s = &*settings;
    let result = std::panic::catch_unwind(|| {
        let p = CscMatrix::<f64>::zeros((n, n));
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let built = DefaultSettingsBuilder::<f64>::default()
            .verbose(s.verbose != 0)
            .tol_gap_abs(s.tol_gap_abs)
            .tol_gap_rel(s.tol_gap_rel)
            .tol_feas(s.tol_feas)
            .max_iter(s.max_iter)
            .max_threads(1)
            .build();
        let built = match built {
            Ok(v) => v,
            Err(_) => return Err(-2),
        };
        let mut solver = match DefaultSolver::new(&p, &qv, &a, &bv, &cones, built) {
            Ok(v) => v,
            Err(_) => return Err(-2),
        };
        solver.solve();
        Ok(solver.solution)
    });

    let sol = match result {
        Ok(Ok(sol)) => sol,
        Ok(Err(code)) => return code,
        Err(_) => return -3,
    };
    if !x_out.is_null() {
        std::ptr::copy_nonoverlapping(sol.x.as_ptr(), x_out, n);
    }
    if !z_out.is_null() {
        std::ptr::copy_nonoverlapping(sol.z.as_ptr(), z_out, m);
    }
    if !s_out.is_null() {
        std::ptr::copy_nonoverlapping(sol.s.as_ptr(), s_out, m);
    }
    *info = ClarabelShimInfo {
        status: status_code(sol.status),
        iterations: sol.iterations,
        obj_val: sol.obj_val,
        obj_val_dual: sol.obj_val_dual,
        solve_time: sol.solve_time,
        r_prim: sol.r_prim,
        r_dual: sol.r_dual,
    };
    0
}
