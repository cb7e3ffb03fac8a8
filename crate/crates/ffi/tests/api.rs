use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use vrl_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { vrl_last_error(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string();
    assert_eq!(s.len(), n.min(255));
    s
}

fn preset(name: &str) -> *mut VrlConfig {
    let name = CString::new(name).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { vrl_config_preset(name.as_ptr(), &mut cfg) }, VrlStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn run_and_analyze_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = preset("low");
    let proto = CString::new("AODV").unwrap();
    unsafe {
        assert_eq!(vrl_config_set_protocol(cfg, proto.as_ptr()), VrlStatus::Ok);
        assert_eq!(vrl_config_set_seed(cfg, 3), VrlStatus::Ok);
        assert_eq!(vrl_config_set_sim_end(cfg, 45.0), VrlStatus::Ok);
    }
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut m = std::mem::MaybeUninit::<VrlMetrics>::uninit();
    let status = unsafe { vrl_run(cfg, out_dir.as_ptr(), m.as_mut_ptr()) };
    assert_eq!(status, VrlStatus::Ok, "{}", last_error());
    let m = unsafe { m.assume_init() };
    assert!(m.sent > 0);
    assert_eq!(m.sent, m.received + m.dropped + m.in_flight);

    let trace = dir.path().join("low_AODV_s3.trace");
    assert!(trace.exists());
    let trace = CString::new(trace.to_str().unwrap()).unwrap();
    let mut again = std::mem::MaybeUninit::<VrlMetrics>::uninit();
    assert_eq!(unsafe { vrl_analyze_trace(trace.as_ptr(), again.as_mut_ptr()) }, VrlStatus::Ok);
    let again = unsafe { again.assume_init() };
    assert_eq!((again.sent, again.received, again.routing_packets), (m.sent, m.received, m.routing_packets));
    unsafe { vrl_config_free(cfg) };
}

#[test]
fn errors_are_reported() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("extreme").unwrap();
    assert_eq!(unsafe { vrl_config_preset(bad.as_ptr(), &mut cfg) }, VrlStatus::InvalidArgument);
    assert!(cfg.is_null());
    assert!(last_error().contains("extreme"));

    assert_eq!(unsafe { vrl_config_preset(ptr::null(), &mut cfg) }, VrlStatus::NullArgument);

    let cfg = preset("medium");
    let bad = CString::new("OLSR").unwrap();
    assert_eq!(unsafe { vrl_config_set_protocol(cfg, bad.as_ptr()) }, VrlStatus::InvalidArgument);
    assert_eq!(unsafe { vrl_config_set_sim_end(cfg, f64::NAN) }, VrlStatus::InvalidArgument);

    // No protocol was accepted, so running must fail cleanly.
    let dir = tempfile::tempdir().unwrap();
    let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut m = std::mem::MaybeUninit::<VrlMetrics>::uninit();
    assert_eq!(unsafe { vrl_run(cfg, out_dir.as_ptr(), m.as_mut_ptr()) }, VrlStatus::Run);
    assert!(last_error().contains("protocol"));
    unsafe { vrl_config_free(cfg) };

    let missing = CString::new("/nonexistent/x.cfg").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { vrl_config_load(missing.as_ptr(), &mut cfg) }, VrlStatus::Config);
    unsafe { vrl_config_free(ptr::null_mut()) };
}

#[test]
fn error_buffer_truncates() {
    let bad = CString::new("not-a-preset-with-a-long-name").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe { vrl_config_preset(bad.as_ptr(), &mut cfg) };
    let mut buf = [0x7f as c_char; 8];
    let full = unsafe { vrl_last_error(buf.as_mut_ptr(), buf.len()) };
    assert!(full > 7);
    assert_eq!(buf[7], 0);
    assert_eq!(unsafe { vrl_last_error(ptr::null_mut(), 0) }, full);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(vrl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vrl.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["vrl_config_preset", "vrl_run", "vrl_analyze_trace", "vrl_last_error", "VRL_STATUS_OK"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"vrl.h\"\nint main(void) { VrlConfig *c = 0; VrlMetrics m;\n\
         if (vrl_config_preset(\"low\", &c) != VRL_STATUS_OK) return 1;\n\
         vrl_run(c, \"out\", &m); vrl_config_free(c); return (int)m.sent; }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping: no C compiler ({e})");
            return;
        }
    };
    assert!(status.success());
}
