use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use splitstoch_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 512];
    unsafe { ss_last_error_message(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn toy() -> *mut SsProblem {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { ss_problem_toy1d(&mut p) }, SsStatus::Ok);
    p
}

#[test]
fn toy_solves_through_handles() {
    unsafe {
        let p = toy();
        assert_eq!(ss_problem_dimension(p), 1);
        assert_eq!(ss_problem_agents(p), 2);
        let mut c = ptr::null_mut();
        assert_eq!(ss_config_default(p, 1.0, 0.5, 1.0, &mut c), SsStatus::Ok);
        let mut upper = 0.0;
        assert_eq!(ss_config_validate(p, c, &mut upper), SsStatus::Ok);
        // server curvature 1, user g = 0: 2 alpha / L_m
        assert!((upper - 2.0).abs() < 1e-15, "upper = {upper}");
        assert!((ss_config_gamma(c) - 1.8).abs() < 1e-15);
        let mut s = ptr::null_mut();
        assert_eq!(ss_solver_new(p, c, &mut s), SsStatus::Ok);
        // handles are copied into the solver
        ss_config_free(c);
        ss_problem_free(p);

        let mut rec = SsTraceRecord::default();
        assert_eq!(ss_solver_step(s, &mut rec), SsStatus::Ok);
        assert_eq!(rec.k, 1);
        assert!(rec.lyapunov.is_nan());
        assert_eq!(ss_solver_run(s, &mut rec), SsStatus::Ok);
        let mut x = [0.0];
        assert_eq!(ss_solver_x(s, x.as_mut_ptr(), 1), SsStatus::Ok);
        assert!((x[0] - 1.0).abs() < 1e-6, "x = {}", x[0]);
        assert_eq!(ss_solver_iteration(s), rec.k);

        let (mut prox, mut grad) = (0u64, 0u64);
        assert_eq!(ss_solver_calls(s, &mut prox, &mut grad), SsStatus::Ok);
        assert_eq!(prox, 2 * rec.k);
        assert_eq!(grad, 2 + 3 * rec.k);

        assert_eq!(ss_solver_reset(s), SsStatus::Ok);
        assert_eq!(ss_solver_iteration(s), 0);
        ss_solver_free(s);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        assert_eq!(ss_problem_toy1d(ptr::null_mut()), SsStatus::NullPointer);
        assert!(last_error().contains("null"));

        let p = toy();
        let mut c = ptr::null_mut();
        assert_eq!(ss_config_default(p, 1.0, 0.5, 1.5, &mut c), SsStatus::InvalidArgument);
        assert!(last_error().contains("fraction"));
        assert_eq!(ss_config_default(p, 0.0, 1.0, 1.0, &mut c), SsStatus::EmptyParameterWindow);

        assert_eq!(ss_config_default(p, 1.0, 0.5, 1.0, &mut c), SsStatus::Ok);
        assert_eq!(last_error(), "");
        let probs = [0.5, 0.5];
        assert_eq!(ss_config_set_bernoulli(c, probs.as_ptr(), 2), SsStatus::DimensionMismatch);
        assert_eq!(ss_config_set_gamma(c, p, -1.0), SsStatus::InvalidArgument);

        let mut s = ptr::null_mut();
        assert_eq!(ss_solver_new(p, c, &mut s), SsStatus::Ok);
        let mut x = [0.0; 2];
        assert_eq!(ss_solver_x(s, x.as_mut_ptr(), 2), SsStatus::DimensionMismatch);
        let n = ss_last_error_message(ptr::null_mut(), 0);
        assert!(n > 0);
        ss_solver_free(s);
        ss_config_free(c);
        ss_problem_free(p);
        ss_problem_free(ptr::null_mut());
    }
}

#[test]
fn iteration_cap_reports_partial_state() {
    unsafe {
        let p = toy();
        let mut c = ptr::null_mut();
        assert_eq!(ss_config_default(p, 1.0, 0.5, 1.0, &mut c), SsStatus::Ok);
        // an unreachable tolerance stops at the 10 K cap
        assert_eq!(ss_config_set_stopping(c, 3, 0.0), SsStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(ss_solver_new(p, c, &mut s), SsStatus::Ok);
        let mut rec = SsTraceRecord::default();
        assert_eq!(ss_solver_run(s, &mut rec), SsStatus::MaxItersExceeded);
        assert_eq!(rec.k, 30);
        assert_eq!(ss_solver_iteration(s), 30);
        ss_solver_free(s);
        ss_config_free(c);
        ss_problem_free(p);
    }
}

#[test]
fn builder_validates_agents() {
    unsafe {
        let mut b = ptr::null_mut();
        assert_eq!(ss_problem_builder_new(0, &mut b), SsStatus::InvalidArgument);
        assert_eq!(ss_problem_builder_new(2, &mut b), SsStatus::Ok);
        let zero_normal = [0.0, 0.0];
        let desc = SsAgentDesc {
            nonsmooth: SsNonsmoothKind::Hyperplane,
            l1_weight: 0.0,
            vector: zero_normal.as_ptr(),
            offset: 1.0,
            smooth: SsSmoothKind::Zero,
            center: ptr::null(),
            weight: 0.0,
            rows: ptr::null(),
            labels: ptr::null(),
            row_count: 0,
        };
        assert_eq!(ss_problem_builder_add_agent(b, &desc), SsStatus::InvalidArgument);
        let missing = SsAgentDesc {
            smooth: SsSmoothKind::Quadratic,
            nonsmooth: SsNonsmoothKind::Zero,
            weight: 1.0,
            ..desc
        };
        assert_eq!(ss_problem_builder_add_agent(b, &missing), SsStatus::NullPointer);
        let rows = [1.0, 0.0, 0.0, 1.0];
        let labels = [1.0, -1.0];
        let logistic = SsAgentDesc {
            nonsmooth: SsNonsmoothKind::L1,
            l1_weight: 0.01,
            smooth: SsSmoothKind::Logistic,
            weight: 0.5,
            rows: rows.as_ptr(),
            labels: labels.as_ptr(),
            row_count: 2,
            ..desc
        };
        assert_eq!(ss_problem_builder_add_agent(b, &logistic), SsStatus::Ok);
        let mut p = ptr::null_mut();
        // a single agent is not a problem
        assert_eq!(ss_problem_builder_finish(b, ptr::null(), &mut p), SsStatus::InvalidShape);

        assert_eq!(ss_problem_builder_new(2, &mut b), SsStatus::Ok);
        assert_eq!(ss_problem_builder_add_agent(b, &logistic), SsStatus::Ok);
        assert_eq!(ss_problem_builder_add_agent(b, &logistic), SsStatus::Ok);
        assert_eq!(ss_problem_builder_finish(b, c"two".as_ptr(), &mut p), SsStatus::Ok);
        let x = [0.0, 0.0];
        let mut phi = 0.0;
        assert_eq!(ss_problem_objective(p, x.as_ptr(), &mut phi), SsStatus::Ok);
        // two blocks of weight 1/2 on two rows each: 2 * 0.5 * 2 ln 2
        assert!((phi - 2.0 * 2f64.ln()).abs() < 1e-12, "phi = {phi}");
        ss_problem_free(p);
    }
}

#[test]
fn compressed_sensing_handle() {
    unsafe {
        let mut p = ptr::null_mut();
        let mut x_true = vec![0.0; 64];
        let status = ss_problem_compressed_sensing(64, 16, 0.05, SsTransform::Dct, 3, x_true.as_mut_ptr(), &mut p);
        assert_eq!(status, SsStatus::Ok);
        assert_eq!(ss_problem_agents(p), 17);
        assert_eq!(x_true.iter().filter(|v| **v != 0.0).count(), 3);
        ss_problem_free(p);
        let bad = ss_problem_compressed_sensing(8, 8, 0.1, SsTransform::DftReal, 0, ptr::null_mut(), &mut p);
        assert_eq!(bad, SsStatus::InvalidShape);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(ss_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/splitstoch.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("pub unsafe extern \"C\" fn ")
        .skip(1)
        .chain(source.split("pub extern \"C\" fn ").skip(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in ["SsStatus", "SsAgentDesc", "SsTraceRecord", "SsSolver"] {
        assert!(header.contains(ty), "{ty} missing from header");
    }
}

#[test]
fn c_program_links_against_static_library() {
    // target/<profile>/deps/c_abi-* -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libsplitstoch_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let dir = tempfile_dir();
    let bin = dir.join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(crate_dir().join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("x=1.000000"));
    let _ = std::fs::remove_dir_all(dir);
}

fn tempfile_dir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("splitstoch-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
