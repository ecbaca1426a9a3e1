use std::ffi::CStr;
use std::ptr;

use saf_ffi::*;

fn data(rows: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..rows * d).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect();
    let y: Vec<f64> = x.chunks(d).map(|r| 0.4 * (2.0 * r[0]).sin() - 0.2 * r[1]).collect();
    (x, y)
}

fn network(d: usize, h: usize) -> *mut SafNet {
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { saf_network_new(d, h, 1, 0.2, 21, 3, &mut net) }, SafStatus::Ok);
    net
}

#[test]
fn forward_and_parameter_round_trip() {
    let net = network(3, 4);
    let mut len = 0;
    assert_eq!(unsafe { saf_network_param_count(net, &mut len) }, SafStatus::Ok);
    assert_eq!(len, 4 * 4 + 5 + 5 * 21);
    let mut params = vec![0.0; len];
    assert_eq!(unsafe { saf_network_get_params(net, params.as_mut_ptr(), len) }, SafStatus::Ok);
    assert_eq!(
        unsafe { saf_network_get_params(net, params.as_mut_ptr(), len - 1) },
        SafStatus::DimensionMismatch
    );
    for p in params.iter_mut().take(21) {
        *p = 0.0;
    }
    assert_eq!(unsafe { saf_network_set_params(net, params.as_ptr(), len) }, SafStatus::Ok);
    let (x, _) = data(5, 3);
    let mut y = vec![f64::NAN; 5];
    assert_eq!(unsafe { saf_network_forward(net, x.as_ptr(), 5, y.as_mut_ptr()) }, SafStatus::Ok);
    // Zero hidden weights and biases leave only the output neuron's bias path.
    assert!(y.iter().all(|v| v.is_finite()));
    assert!(y.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    unsafe { saf_network_free(net) };
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let (d, rows) = (3, 12);
    let net = network(d, 3);
    let (x, y) = data(rows, d);
    let mut obj = ptr::null_mut();
    let st = unsafe { saf_objective_new(net, 1, x.as_ptr(), y.as_ptr(), rows, 1e-2, 1e-1, &mut obj) };
    assert_eq!(st, SafStatus::Ok);
    let mut len = 0;
    unsafe { saf_objective_param_count(obj, &mut len) };
    let mut theta = vec![0.0; len];
    unsafe { saf_objective_initial_params(obj, theta.as_mut_ptr(), len) };
    let mut value = 0.0;
    let mut grad = vec![0.0; len];
    unsafe { saf_objective_value_and_grad(obj, theta.as_ptr(), len, &mut value, grad.as_mut_ptr()) };
    let h = 1e-6;
    for k in 0..len {
        let mut p = theta.clone();
        let (mut fp, mut fm) = (0.0, 0.0);
        p[k] += h;
        unsafe { saf_objective_value_and_grad(obj, p.as_ptr(), len, &mut fp, ptr::null_mut()) };
        p[k] -= 2.0 * h;
        unsafe { saf_objective_value_and_grad(obj, p.as_ptr(), len, &mut fm, ptr::null_mut()) };
        let fd = (fp - fm) / (2.0 * h);
        assert!((fd - grad[k]).abs() <= 1e-6 * fd.abs().max(1.0), "coord {k}: {fd} vs {}", grad[k]);
    }
    unsafe {
        saf_objective_free(obj);
        saf_network_free(net);
    }
}

#[test]
fn training_reduces_objective_and_error() {
    let (d, rows) = (2, 40);
    let net = network(d, 4);
    let (x, y) = data(rows, d);
    let mut obj = ptr::null_mut();
    unsafe { saf_objective_new(net, 1, x.as_ptr(), y.as_ptr(), rows, 1e-4, 1e-4, &mut obj) };
    let mut len = 0;
    unsafe { saf_objective_param_count(obj, &mut len) };
    let mut theta = vec![0.0; len];
    unsafe { saf_objective_initial_params(obj, theta.as_mut_ptr(), len) };
    let mut j0 = 0.0;
    unsafe { saf_objective_value_and_grad(obj, theta.as_ptr(), len, &mut j0, ptr::null_mut()) };
    let (mut j1, mut iters) = (0.0, 0);
    let st = unsafe { saf_objective_train_ncg(obj, theta.as_mut_ptr(), len, 200, &mut j1, &mut iters) };
    assert_eq!(st, SafStatus::Ok);
    assert!(j1 < j0 && iters > 0);

    let mut trained = ptr::null_mut();
    assert_eq!(unsafe { saf_objective_network(obj, theta.as_ptr(), len, &mut trained) }, SafStatus::Ok);
    let mut pred = vec![0.0; rows];
    unsafe { saf_network_forward(trained, x.as_ptr(), rows, pred.as_mut_ptr()) };
    let mut err = 0.0;
    assert_eq!(unsafe { saf_nrmse(pred.as_ptr(), y.as_ptr(), rows, 1, &mut err) }, SafStatus::Ok);
    assert!(err < 0.5, "{err}");
    unsafe {
        saf_network_free(trained);
        saf_objective_free(obj);
        saf_network_free(net);
    }
}

#[test]
fn null_handles_are_reported() {
    let mut v = 0.0;
    let st = unsafe { saf_objective_value_and_grad(ptr::null(), ptr::null(), 0, &mut v, ptr::null_mut()) };
    assert_eq!(st, SafStatus::NullPointer);
    let msg = unsafe { CStr::from_ptr(saf_last_error()) }.to_str().unwrap().to_owned();
    assert_eq!(msg, "obj is null");
    let flat = [1.0, 1.0];
    assert_eq!(unsafe { saf_nrmse(flat.as_ptr(), flat.as_ptr(), 2, 1, &mut v) }, SafStatus::Domain);
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/saf.h")).unwrap();
    for name in [
        "typedef struct SafNet SafNet;",
        "SAF_STATUS_NULL_POINTER = 1",
        "const char *saf_last_error(void);",
        "saf_network_new(",
        "saf_objective_value_and_grad(",
        "saf_objective_train_ncg(",
        "saf_spline_eval(",
        "saf_nrmse(",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}
