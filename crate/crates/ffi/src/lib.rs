//! C ABI over the zonecast library.
//!
//! Every function returns a [`ZcStatus`]. On failure a description is kept
//! per thread and can be read with [`zc_last_error`]. Handles are opaque and
//! must be released with their matching `_free` function. Panics never cross
//! the boundary; they are reported as `ZC_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use zonecast::analysis::{analyze, AnalysisResult, DEFAULT_BUDGET};
use zonecast::eval::{complexity_bound, estimate, ExperimentConfig, Method, Network};
use zonecast::sim::{run_with, SimConfig};
use zonecast::{Coord, Error, NodeSet, Topology, TopologyKind, ZoneSet};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Overflow = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZcTopology {
    Torus = 0,
    Grid = 1,
}

impl From<ZcTopology> for TopologyKind {
    fn from(t: ZcTopology) -> Self {
        match t {
            ZcTopology::Torus => TopologyKind::Torus,
            ZcTopology::Grid => TopologyKind::Grid,
        }
    }
}

/// 1-based row `i` and column `j`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZcCoord {
    pub i: u32,
    pub j: u32,
}

/// Monte Carlo estimate. Fields that do not apply are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZcEstimate {
    pub trials: u64,
    pub p_hat: f64,
    pub ci95: f64,
    pub p_exists: f64,
    pub mean_reliable_frac: f64,
}

/// Topology plus the order-`W` zone family.
pub struct ZcNetwork {
    topo: Topology,
    zones: ZoneSet,
    order: u32,
}

/// Result of analyzing one Byzantine placement.
pub struct ZcAnalysis {
    topo: Topology,
    result: AnalysisResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: ZcStatus, msg: impl Into<String>) -> ZcStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> ZcStatus {
    let status = match e {
        Error::Io(_) => ZcStatus::Io,
        _ => ZcStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

/// Runs `f`, turning panics into `ZC_STATUS_INTERNAL`.
fn guard(f: impl FnOnce() -> ZcStatus) -> ZcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ZcStatus::Internal, "internal panic"),
    }
}

/// Description of the last failure on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn zc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a network of `side x side` nodes with all zones of width `1..=order`.
///
/// # Safety
/// `out` must be valid for writing one pointer.
#[no_mangle]
pub unsafe extern "C" fn zc_network_new(
    topology: ZcTopology,
    side: u32,
    order: u32,
    out: *mut *mut ZcNetwork,
) -> ZcStatus {
    guard(|| {
        if out.is_null() {
            return fail(ZcStatus::NullPointer, "out is null");
        }
        let built = Topology::build(topology.into(), side)
            .and_then(|topo| ZoneSet::order(&topo, order).map(|zones| (topo, zones)));
        match built {
            Ok((topo, zones)) => {
                // SAFETY: checked non-null; caller guarantees validity
                unsafe { *out = Box::into_raw(Box::new(ZcNetwork { topo, zones, order })) };
                ZcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `net` must be NULL or a handle from [`zc_network_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zc_network_free(net: *mut ZcNetwork) {
    if !net.is_null() {
        // SAFETY: handle was produced by Box::into_raw
        drop(unsafe { Box::from_raw(net) });
    }
}

/// # Safety
/// `net` must be a live handle; the out pointers must be valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn zc_network_sizes(
    net: *const ZcNetwork,
    nodes: *mut usize,
    zones: *mut usize,
) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let Some(net) = (unsafe { net.as_ref() }) else {
            return fail(ZcStatus::NullPointer, "net is null");
        };
        // SAFETY: caller contract; NULL outputs are skipped
        unsafe {
            if let Some(n) = nodes.as_mut() {
                *n = net.topo.len();
            }
            if let Some(z) = zones.as_mut() {
                *z = net.zones.len();
            }
        }
        ZcStatus::Ok
    })
}

/// Message ceiling `d * n * (n + n_border * n_ctr)`.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn zc_complexity_bound(
    n: u64,
    d: u64,
    n_ctr: u64,
    n_border: u64,
    out: *mut u64,
) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(ZcStatus::NullPointer, "out is null");
        };
        match u64::try_from(complexity_bound(n, d, n_ctr, n_border)) {
            Ok(v) => {
                *out = v;
                ZcStatus::Ok
            }
            Err(_) => fail(ZcStatus::Overflow, "bound exceeds 64 bits"),
        }
    })
}

/// Message ceiling for `net`, from its size, degree and zone family.
///
/// # Safety
/// `net` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn zc_network_complexity_bound(net: *const ZcNetwork, out: *mut u64) -> ZcStatus {
    // SAFETY: caller contract
    let Some(net) = (unsafe { net.as_ref() }) else {
        return fail(ZcStatus::NullPointer, "net is null");
    };
    let (t, zs) = (&net.topo, &net.zones);
    // SAFETY: forwarded caller contract
    unsafe {
        zc_complexity_bound(
            t.len() as u64,
            t.max_degree() as u64,
            zs.len() as u64,
            zs.max_border_len() as u64,
            out,
        )
    }
}

/// Runs the protocol without Byzantine nodes and reports message totals.
///
/// # Safety
/// `net` must be a live handle; `standard` and `auth` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn zc_simulate_counts(
    net: *const ZcNetwork,
    seed: u64,
    standard: *mut u64,
    auth: *mut u64,
) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let (Some(net), Some(standard), Some(auth)) =
            (unsafe { (net.as_ref(), standard.as_mut(), auth.as_mut()) })
        else {
            return fail(ZcStatus::NullPointer, "null argument");
        };
        let byz = NodeSet::new(net.topo.len());
        match run_with(&net.topo, &net.zones, &byz, &[], &SimConfig::summary(seed)) {
            Ok(trace) => {
                *standard = trace.sent.standard;
                *auth = trace.sent.auth;
                ZcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Analyzes a placement of `byz_len` Byzantine nodes, growing the
/// communicating set from `origin`.
///
/// # Safety
/// `net` must be a live handle, `byz` valid for `byz_len` reads (may be
/// NULL when `byz_len` is 0), `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn zc_analyze(
    net: *const ZcNetwork,
    byz: *const ZcCoord,
    byz_len: usize,
    origin: ZcCoord,
    out: *mut *mut ZcAnalysis,
) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let Some(net) = (unsafe { net.as_ref() }) else {
            return fail(ZcStatus::NullPointer, "net is null");
        };
        if out.is_null() || (byz.is_null() && byz_len > 0) {
            return fail(ZcStatus::NullPointer, "null argument");
        }
        let cells = if byz_len == 0 {
            &[][..]
        } else {
            // SAFETY: non-null and caller guarantees byz_len elements
            unsafe { std::slice::from_raw_parts(byz, byz_len) }
        };
        let topo = &net.topo;
        let mut set = NodeSet::new(topo.len());
        for c in cells {
            match topo.node(Coord::new(c.i, c.j)) {
                Ok(p) => {
                    set.insert(p);
                }
                Err(e) => return from_error(e),
            }
        }
        let origin = match topo.node(Coord::new(origin.i, origin.j)) {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        match analyze(topo, &net.zones, &set, origin, DEFAULT_BUDGET) {
            Ok(result) => {
                let handle = ZcAnalysis {
                    topo: topo.clone(),
                    result,
                };
                // SAFETY: checked non-null
                unsafe { *out = Box::into_raw(Box::new(handle)) };
                ZcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `a` must be NULL or a handle from [`zc_analyze`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zc_analysis_free(a: *mut ZcAnalysis) {
    if !a.is_null() {
        // SAFETY: handle was produced by Box::into_raw
        drop(unsafe { Box::from_raw(a) });
    }
}

/// Whether a safe cover was found, and the sizes of the safe,
/// communicating and reliable sets. NULL outputs are skipped.
///
/// # Safety
/// `a` must be a live handle; outputs valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn zc_analysis_summary(
    a: *const ZcAnalysis,
    cover_found: *mut bool,
    safe: *mut usize,
    communicating: *mut usize,
    reliable: *mut usize,
) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let Some(a) = (unsafe { a.as_ref() }) else {
            return fail(ZcStatus::NullPointer, "analysis is null");
        };
        let r = &a.result;
        // SAFETY: caller contract; NULL outputs are skipped
        unsafe {
            if let Some(c) = cover_found.as_mut() {
                *c = r.cover.is_some();
            }
            if let Some(s) = safe.as_mut() {
                *s = r.safe.len();
            }
            if let Some(c) = communicating.as_mut() {
                *c = r.communicating.len();
            }
            if let Some(x) = reliable.as_mut() {
                *x = r.reliable.len();
            }
        }
        ZcStatus::Ok
    })
}

/// Whether the node at `at` is in the reliable set.
///
/// # Safety
/// `a` must be a live handle and `out` valid for writing.
#[no_mangle]
pub unsafe extern "C" fn zc_analysis_is_reliable(a: *const ZcAnalysis, at: ZcCoord, out: *mut bool) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let (Some(a), Some(out)) = (unsafe { (a.as_ref(), out.as_mut()) }) else {
            return fail(ZcStatus::NullPointer, "null argument");
        };
        match a.topo.node(Coord::new(at.i, at.j)) {
            Ok(p) => {
                *out = a.result.reliable.contains(p);
                ZcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Estimates the probability that a random pair communicates reliably.
/// `order` 0 selects the disjoint-path baseline.
///
/// # Safety
/// `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn zc_estimate(
    topology: ZcTopology,
    side: u32,
    order: u32,
    n_byz: usize,
    trials: u64,
    seed: u64,
    out: *mut ZcEstimate,
) -> ZcStatus {
    guard(|| {
        // SAFETY: caller contract
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(ZcStatus::NullPointer, "out is null");
        };
        let method = if order == 0 { Method::Explorer } else { Method::Zones(order) };
        let cfg = ExperimentConfig::new(topology.into(), side, method, n_byz, trials, seed);
        match Network::build(cfg.topology, side, method).and_then(|net| estimate(&net, &cfg)) {
            Ok(e) => {
                *out = ZcEstimate {
                    trials: e.trials,
                    p_hat: e.p_hat,
                    ci95: e.ci95,
                    p_exists: e.p_exists.unwrap_or(f64::NAN),
                    mean_reliable_frac: e.mean_reliable_frac.unwrap_or(f64::NAN),
                };
                ZcStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Zone order the network was built with.
///
/// # Safety
/// `net` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn zc_network_order(net: *const ZcNetwork) -> u32 {
    // SAFETY: caller contract
    unsafe { net.as_ref() }.map_or(0, |n| n.order)
}
