//! C interface to `saf-core`.
//!
//! Networks and objectives are opaque heap handles created by `*_new` and
//! released by `*_free`. Every function returns a [`SafStatus`]; on failure
//! [`saf_last_error`] describes the problem. Matrices are dense row-major
//! `double` arrays. The header is generated into `include/saf.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use saf_core::data::nrmse;
use saf_core::network::{NetworkShape, ParamLayout, SafNetwork};
use saf_core::objective::Objective;
use saf_core::optim::{minimize_ncg, NcgConfig};
use saf_core::spline::{KnotGrid, SplineBasis};
use saf_core::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SafStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    Domain = 4,
    Io = 5,
    Data = 6,
    Optimizer = 7,
    Panic = 8,
}

/// A spline activation network.
pub struct SafNet {
    inner: SafNetwork,
}

/// A training criterion bound to a dataset.
pub struct SafObjective {
    inner: Objective,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> SafStatus {
    match e {
        Error::Domain(_) => SafStatus::Domain,
        Error::InvalidArgument(_) => SafStatus::InvalidArgument,
        Error::DimensionMismatch(_) => SafStatus::DimensionMismatch,
        Error::Io { .. } | Error::MissingDataset { .. } => SafStatus::Io,
        Error::Csv(_) | Error::Json(_) | Error::NoRows(_) | Error::NonNumericTarget { .. } => SafStatus::Data,
        Error::Optimizer(_) => SafStatus::Optimizer,
    }
}

struct Failure(SafStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SafStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SafStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SafStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("panic: {msg}"));
            SafStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

fn matrix(data: &[f64], rows: usize, cols: usize) -> Result<saf_core::ndarray::Array2<f64>, Failure> {
    saf_core::ndarray::Array2::from_shape_vec((rows, cols), data.to_vec())
        .map_err(|e| Failure(SafStatus::DimensionMismatch, e.to_string()))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn saf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Glorot-initialized network with perturbed tanh grids.
///
/// # Safety
/// `out_net` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn saf_network_new(
    inputs: usize,
    hidden: usize,
    outputs: usize,
    delta_x: f64,
    num_knots: usize,
    seed: u64,
    out_net: *mut *mut SafNet,
) -> SafStatus {
    guard(|| {
        let slot = out(out_net, "out_net")?;
        *slot = ptr::null_mut();
        let shape = NetworkShape {
            inputs,
            hidden,
            outputs,
            delta_x,
            num_knots,
        };
        let inner = SafNetwork::init_glorot(shape, seed)?;
        *slot = Box::into_raw(Box::new(SafNet { inner }));
        Ok(())
    })
}

/// Replaces every grid of `net` with clean tanh samples.
///
/// # Safety
/// `net` must be a live handle from [`saf_network_new`].
#[no_mangle]
pub unsafe extern "C" fn saf_network_reset_tanh(net: *mut SafNet) -> SafStatus {
    guard(|| {
        let net = out(net, "net")?;
        net.inner = net.inner.clone().with_tanh_grids()?;
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn saf_network_free(net: *mut SafNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Length of the full parameter vector (weights, then ordinates).
///
/// # Safety
/// `net` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn saf_network_param_count(net: *const SafNet, out_len: *mut usize) -> SafStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        *out(out_len, "out_len")? = ParamLayout::full(net.inner.shape()).len();
        Ok(())
    })
}

/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_network_get_params(net: *const SafNet, buf: *mut f64, len: usize) -> SafStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let params = net.inner.flatten();
        if params.len() != len {
            return Err(Failure(
                SafStatus::DimensionMismatch,
                format!("buffer has {len} slots, network has {} parameters", params.len()),
            ));
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(&params);
        Ok(())
    })
}

/// # Safety
/// `params` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_network_set_params(net: *mut SafNet, params: *const f64, len: usize) -> SafStatus {
    guard(|| {
        let net = out(net, "net")?;
        let layout = ParamLayout::full(net.inner.shape());
        net.inner.assign(&layout, slice(params, len, "params")?)?;
        Ok(())
    })
}

/// Network outputs for `rows` samples: `x` is `rows x inputs`, `y` is `rows x outputs`.
///
/// # Safety
/// `x` and `y` must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_network_forward(net: *const SafNet, x: *const f64, rows: usize, y: *mut f64) -> SafStatus {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let shape = net.inner.shape();
        let x = matrix(slice(x, rows * shape.inputs, "x")?, rows, shape.inputs)?;
        let pred = net.inner.predict(x.view())?;
        slice_mut(y, rows * shape.outputs, "y")?.copy_from_slice(pred.as_slice().expect("standard layout"));
        Ok(())
    })
}

/// Catmull-Rom spline through `num_knots` ordinates spaced `delta_x` apart
/// and centred on 0, evaluated at `s`. Either output pointer may be null.
///
/// # Safety
/// `ordinates` must hold `num_knots` doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_spline_eval(
    ordinates: *const f64,
    num_knots: usize,
    delta_x: f64,
    s: f64,
    value: *mut f64,
    derivative: *mut f64,
) -> SafStatus {
    guard(|| {
        let grid = KnotGrid::new(delta_x, slice(ordinates, num_knots, "ordinates")?.to_vec())?;
        let e = grid.evaluate(s, &SplineBasis::catmull_rom())?;
        if let Some(v) = value.as_mut() {
            *v = e.value;
        }
        if let Some(d) = derivative.as_mut() {
            *d = e.derivative;
        }
        Ok(())
    })
}

/// Regularized squared-error criterion on `rows` samples. The damping
/// anchor is the clean tanh grid. With `trainable_grids == 0` the
/// ordinates of `net` are frozen and only the weights are parameters.
///
/// # Safety
/// `x` holds `rows x inputs` and `y` `rows x outputs` doubles; `out_obj` is writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn saf_objective_new(
    net: *const SafNet,
    trainable_grids: i32,
    x: *const f64,
    y: *const f64,
    rows: usize,
    lambda_w: f64,
    lambda_q: f64,
    out_obj: *mut *mut SafObjective,
) -> SafStatus {
    guard(|| {
        let slot = out(out_obj, "out_obj")?;
        *slot = ptr::null_mut();
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let shape = net.inner.shape();
        let layout = if trainable_grids != 0 {
            ParamLayout::full(shape)
        } else {
            ParamLayout::weights_only(shape)
        };
        let inputs = matrix(slice(x, rows * shape.inputs, "x")?, rows, shape.inputs)?;
        let targets = matrix(slice(y, rows * shape.outputs, "y")?, rows, shape.outputs)?;
        let inner = Objective::new(
            net.inner.clone(),
            layout,
            inputs,
            targets,
            lambda_w,
            lambda_q,
            SafNetwork::tanh_anchor(shape)?,
        )?;
        *slot = Box::into_raw(Box::new(SafObjective { inner }));
        Ok(())
    })
}

/// # Safety
/// `obj` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn saf_objective_free(obj: *mut SafObjective) {
    if !obj.is_null() {
        drop(Box::from_raw(obj));
    }
}

/// Number of trainable parameters of the objective.
///
/// # Safety
/// `obj` must be a live handle and `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn saf_objective_param_count(obj: *const SafObjective, out_len: *mut usize) -> SafStatus {
    guard(|| {
        let obj = obj.as_ref().ok_or_else(|| null("obj"))?;
        *out(out_len, "out_len")? = obj.inner.layout().len();
        Ok(())
    })
}

/// Writes the starting parameters (the template network's) into `buf`.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_objective_initial_params(obj: *const SafObjective, buf: *mut f64, len: usize) -> SafStatus {
    guard(|| {
        let obj = obj.as_ref().ok_or_else(|| null("obj"))?;
        let p = obj.inner.initial_params();
        if p.len() != len {
            return Err(Failure(
                SafStatus::DimensionMismatch,
                format!("buffer has {len} slots, objective has {} parameters", p.len()),
            ));
        }
        slice_mut(buf, len, "buf")?.copy_from_slice(&p);
        Ok(())
    })
}

/// `J(params)` and its gradient. `grad` may be null.
///
/// # Safety
/// `params` and (if non-null) `grad` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_objective_value_and_grad(
    obj: *const SafObjective,
    params: *const f64,
    len: usize,
    value: *mut f64,
    grad: *mut f64,
) -> SafStatus {
    guard(|| {
        let obj = obj.as_ref().ok_or_else(|| null("obj"))?;
        let r = obj.inner.value_and_grad(slice(params, len, "params")?)?;
        *out(value, "value")? = r.total;
        if !grad.is_null() {
            slice_mut(grad, len, "grad")?.copy_from_slice(&r.gradient);
        }
        Ok(())
    })
}

/// Minimizes the objective with conjugate gradients, updating `params` in
/// place. `iterations` receives the number of accepted line searches and
/// may be null.
///
/// # Safety
/// `params` must hold `len` doubles; `value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn saf_objective_train_ncg(
    obj: *const SafObjective,
    params: *mut f64,
    len: usize,
    max_iterations: usize,
    value: *mut f64,
    iterations: *mut usize,
) -> SafStatus {
    guard(|| {
        let obj = obj.as_ref().ok_or_else(|| null("obj"))?;
        let params = slice_mut(params, len, "params")?;
        let value = out(value, "value")?;
        let r = minimize_ncg(&obj.inner, params, &NcgConfig::default().with_max_iterations(max_iterations))?;
        params.copy_from_slice(&r.params);
        *value = r.value;
        if let Some(it) = iterations.as_mut() {
            *it = r.trace.iterations();
        }
        Ok(())
    })
}

/// Network at `params` of the objective, as a new handle.
///
/// # Safety
/// `params` must hold `len` doubles; `out_net` must be writable.
#[no_mangle]
pub unsafe extern "C" fn saf_objective_network(
    obj: *const SafObjective,
    params: *const f64,
    len: usize,
    out_net: *mut *mut SafNet,
) -> SafStatus {
    guard(|| {
        let slot = out(out_net, "out_net")?;
        *slot = ptr::null_mut();
        let obj = obj.as_ref().ok_or_else(|| null("obj"))?;
        let inner = obj.inner.network_at(slice(params, len, "params")?)?;
        *slot = Box::into_raw(Box::new(SafNet { inner }));
        Ok(())
    })
}

/// RMSE over target standard deviation, averaged over the `cols` outputs.
///
/// # Safety
/// `pred` and `target` must each hold `rows x cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn saf_nrmse(
    pred: *const f64,
    target: *const f64,
    rows: usize,
    cols: usize,
    out_value: *mut f64,
) -> SafStatus {
    guard(|| {
        let p = matrix(slice(pred, rows * cols, "pred")?, rows, cols)?;
        let t = matrix(slice(target, rows * cols, "target")?, rows, cols)?;
        *out(out_value, "out_value")? = nrmse(p.view(), t.view())?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CStr;

    fn last_error() -> String {
        unsafe { CStr::from_ptr(saf_last_error()) }.to_string_lossy().into_owned()
    }

    #[test]
    fn error_codes_and_messages() {
        let mut net = ptr::null_mut();
        let st = unsafe { saf_network_new(0, 5, 1, 0.2, 21, 0, &mut net) };
        assert_eq!(st, SafStatus::InvalidArgument);
        assert!(net.is_null());
        assert!(last_error().contains("dimensions"));
        let st = unsafe { saf_network_new(2, 2, 1, 0.2, 21, 0, ptr::null_mut()) };
        assert_eq!(st, SafStatus::NullPointer);
        let st = unsafe { saf_network_new(2, 2, 1, 0.2, 21, 0, &mut net) };
        assert_eq!(st, SafStatus::Ok);
        assert_eq!(last_error(), "");
        unsafe { saf_network_free(net) };
        unsafe { saf_network_free(ptr::null_mut()) };
    }

    #[test]
    fn spline_eval_through_c_abi() {
        let q: Vec<f64> = (0..21).map(|k| (k as f64 - 10.0) * 0.2).collect();
        let (mut v, mut d) = (0.0, 0.0);
        assert_eq!(unsafe { saf_spline_eval(q.as_ptr(), 21, 0.2, 0.37, &mut v, &mut d) }, SafStatus::Ok);
        assert!((v - 0.37).abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
        assert_eq!(
            unsafe { saf_spline_eval(q.as_ptr(), 21, 0.2, f64::NAN, &mut v, ptr::null_mut()) },
            SafStatus::Domain
        );
    }
}
