use std::ffi::CStr;
use std::process::Command;
use std::ptr;

use zonecast_ffi::*;

fn last_error() -> String {
    let p = zc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn network(kind: ZcTopology, side: u32, order: u32) -> *mut ZcNetwork {
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { zc_network_new(kind, side, order, &mut net) }, ZcStatus::Ok);
    assert!(!net.is_null());
    net
}

#[test]
fn network_lifecycle_and_sizes() {
    let net = network(ZcTopology::Torus, 10, 2);
    let (mut nodes, mut zones) = (0usize, 0usize);
    assert_eq!(unsafe { zc_network_sizes(net, &mut nodes, &mut zones) }, ZcStatus::Ok);
    assert_eq!(nodes, 100);
    // widths 1 and 2 at every anchor
    assert_eq!(zones, 200);
    assert_eq!(unsafe { zc_network_order(net) }, 2);
    unsafe { zc_network_free(net) };
    unsafe { zc_network_free(ptr::null_mut()) };
}

#[test]
fn invalid_arguments_report_errors() {
    let mut net = ptr::null_mut();
    assert_eq!(
        unsafe { zc_network_new(ZcTopology::Grid, 0, 1, &mut net) },
        ZcStatus::InvalidArgument
    );
    assert!(net.is_null());
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { zc_network_new(ZcTopology::Grid, 5, 1, ptr::null_mut()) },
        ZcStatus::NullPointer
    );
    assert_eq!(last_error(), "out is null");
    let mut out = 0u64;
    assert_eq!(
        unsafe { zc_complexity_bound(u64::MAX, 4, 10, 10, &mut out) },
        ZcStatus::Overflow
    );
}

#[test]
fn simulated_counts_match_closed_form() {
    let net = network(ZcTopology::Torus, 10, 2);
    let (mut std_msgs, mut auth) = (0u64, 0u64);
    assert_eq!(unsafe { zc_simulate_counts(net, 3, &mut std_msgs, &mut auth) }, ZcStatus::Ok);
    assert_eq!(std_msgs, 40_000);
    assert_eq!(auth, 800_000);
    let mut bound = 0u64;
    assert_eq!(unsafe { zc_network_complexity_bound(net, &mut bound) }, ZcStatus::Ok);
    assert!(std_msgs + auth <= bound);
    unsafe { zc_network_free(net) };
}

#[test]
fn analysis_of_single_byzantine() {
    let net = network(ZcTopology::Torus, 7, 1);
    let byz = [ZcCoord { i: 4, j: 4 }];
    let mut a = ptr::null_mut();
    let status = unsafe { zc_analyze(net, byz.as_ptr(), byz.len(), ZcCoord { i: 1, j: 1 }, &mut a) };
    assert_eq!(status, ZcStatus::Ok);
    let (mut found, mut safe, mut comm, mut rel) = (false, 0usize, 0usize, 0usize);
    assert_eq!(
        unsafe { zc_analysis_summary(a, &mut found, &mut safe, &mut comm, &mut rel) },
        ZcStatus::Ok
    );
    assert!(found);
    assert_eq!((safe, comm, rel), (48, 48, 48));
    let mut r = true;
    assert_eq!(unsafe { zc_analysis_is_reliable(a, ZcCoord { i: 4, j: 4 }, &mut r) }, ZcStatus::Ok);
    assert!(!r);
    assert_eq!(
        unsafe { zc_analysis_is_reliable(a, ZcCoord { i: 9, j: 1 }, &mut r) },
        ZcStatus::InvalidArgument
    );
    unsafe { zc_analysis_free(a) };

    let mut b = ptr::null_mut();
    let bad = [ZcCoord { i: 0, j: 3 }];
    assert_eq!(
        unsafe { zc_analyze(net, bad.as_ptr(), 1, ZcCoord { i: 1, j: 1 }, &mut b) },
        ZcStatus::InvalidArgument
    );
    assert!(b.is_null());
    unsafe { zc_network_free(net) };
}

#[test]
fn estimates_through_the_boundary() {
    let mut e = ZcEstimate {
        trials: 0,
        p_hat: 0.0,
        ci95: 0.0,
        p_exists: 0.0,
        mean_reliable_frac: 0.0,
    };
    assert_eq!(unsafe { zc_estimate(ZcTopology::Torus, 8, 1, 0, 5, 1, &mut e) }, ZcStatus::Ok);
    assert_eq!((e.trials, e.p_hat, e.p_exists), (5, 1.0, 1.0));
    assert_eq!(unsafe { zc_estimate(ZcTopology::Grid, 8, 0, 1, 5, 1, &mut e) }, ZcStatus::Ok);
    assert!(e.p_exists.is_nan() && e.mean_reliable_frac.is_nan());
    assert_eq!(
        unsafe { zc_estimate(ZcTopology::Grid, 8, 1, 64, 5, 1, &mut e) },
        ZcStatus::InvalidArgument
    );
}

#[test]
fn header_declares_the_api_and_compiles() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/zonecast.h");
    let header = std::fs::read_to_string(path).unwrap();
    for name in [
        "zc_network_new",
        "zc_network_free",
        "zc_analyze",
        "zc_analysis_free",
        "zc_estimate",
        "zc_last_error",
        "ZC_STATUS_OK",
        "typedef struct ZcNetwork ZcNetwork",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    // a C compiler, when present, must accept the header as is
    if let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", path]).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
