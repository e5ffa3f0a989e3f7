//! C interface to the pricing side of `mrs-core`.
//!
//! A caller builds an opaque [`MrsContext`] either from plain parameters or
//! from the JSON form of a pricing context, then asks it for expected spot
//! prices, forwards and option values. Every function returns an
//! [`MrsStatus`]; on failure [`mrs_last_error_message`] describes the error
//! raised on the calling thread. Results are written through out pointers
//! only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use chrono::NaiveDate;
use mrs_core::model::expected_spot;
use mrs_core::pricing::{
    forward_option, forward_price, forward_price_period, spot_option, DeliverySpec, Discretization,
    PricingContext, Settlement,
};
use mrs_core::{
    BaseParams, DropParams, MarketPriceOfRisk, ModelParams, MrsError, Regime, RegimeHistory,
    SeasonalCurve, SpikeParams, TransitionSpec,
};

/// Outcome of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Fit = 4,
    Calibration = 5,
    Internal = 6,
    Io = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

impl From<&MrsError> for MrsStatus {
    fn from(e: &MrsError) -> Self {
        match e {
            MrsError::Argument(_) => MrsStatus::InvalidArgument,
            MrsError::Parse { .. } => MrsStatus::Parse,
            MrsError::Fit { .. } => MrsStatus::Fit,
            MrsError::Calibration(_) => MrsStatus::Calibration,
            MrsError::Internal(_) => MrsStatus::Internal,
            MrsError::Io(_) => MrsStatus::Io,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsRegime {
    Base = 0,
    Spike = 1,
    Drop = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MrsSettlement {
    AtMaturity = 0,
    Instant = 1,
}

/// Model parameters with a constant transition matrix, rows indexed
/// base, spike, drop.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MrsModel {
    pub alpha: f64,
    pub beta: f64,
    pub sigma_base: f64,
    pub mu_spike: f64,
    pub sigma_spike: f64,
    pub shift_spike: f64,
    pub mu_drop: f64,
    pub sigma_drop: f64,
    pub shift_drop: f64,
    pub transition: [[f64; 3]; 3],
}

/// Regime information at the valuation date. `lag` is 0 in the base
/// regime; otherwise the last base day lies `lag` days back and
/// `last_base_value` is the base value observed then.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MrsState {
    pub regime: MrsRegime,
    pub last_base_value: f64,
    pub lag: u32,
}

/// Delivery window in day offsets from the valuation date. Daily windows
/// need integral bounds and cover days `t1..=t2`; continuous windows cover
/// the interval `[t1, t2]`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MrsWindow {
    pub t1: f64,
    pub t2: f64,
    pub settlement: MrsSettlement,
    pub continuous: bool,
}

/// Opaque pricing state.
pub struct MrsContext {
    inner: PricingContext,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), (MrsStatus, String)>) -> MrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MrsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            MrsStatus::Panic
        }
    }
}

fn core(e: MrsError) -> (MrsStatus, String) {
    (MrsStatus::from(&e), e.to_string())
}

fn null(name: &str) -> (MrsStatus, String) {
    (MrsStatus::NullPointer, format!("{name} is null"))
}

unsafe fn deref<'a, T>(p: *const T, name: &str) -> Result<&'a T, (MrsStatus, String)> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), (MrsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

impl From<MrsRegime> for Regime {
    fn from(r: MrsRegime) -> Self {
        match r {
            MrsRegime::Base => Regime::Base,
            MrsRegime::Spike => Regime::Spike,
            MrsRegime::Drop => Regime::Drop,
        }
    }
}

fn window_spec(w: &MrsWindow) -> mrs_core::Result<DeliverySpec> {
    let settlement = match w.settlement {
        MrsSettlement::AtMaturity => Settlement::AtMaturity,
        MrsSettlement::Instant => Settlement::Instant,
    };
    let discretization = if w.continuous {
        Discretization::Continuous
    } else {
        Discretization::Daily
    };
    DeliverySpec::new(w.t1, w.t2, settlement, discretization)
}

/// Message for the last failed call on this thread, or null when none has
/// failed. The pointer stays valid until the next failing call on the same
/// thread.
#[no_mangle]
pub extern "C" fn mrs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mrs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Build a context with a flat seasonal component and affine market price
/// of risk `slope * t + level`. `rate` is the continuously compounded rate
/// per day.
///
/// # Safety
/// `model` and `state` must point to valid structs and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn mrs_context_new(
    model: *const MrsModel,
    state: *const MrsState,
    lambda_slope: f64,
    lambda_level: f64,
    rate: f64,
    out: *mut *mut MrsContext,
) -> MrsStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let s = deref(state, "state")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let params = ModelParams {
            base: BaseParams::new(m.alpha, m.beta, m.sigma_base).map_err(core)?,
            spike: SpikeParams {
                mu: m.mu_spike,
                sigma: m.sigma_spike,
                shift: m.shift_spike,
            },
            drop: DropParams {
                mu: m.mu_drop,
                sigma: m.sigma_drop,
                shift: m.shift_drop,
            },
            transitions: TransitionSpec::constant(m.transition).map_err(core)?,
        };
        let history =
            RegimeHistory::new(s.regime.into(), s.last_base_value, s.lag).map_err(core)?;
        let seasonal = SeasonalCurve::flat(flat_epoch());
        let lambda = MarketPriceOfRisk::affine(lambda_slope, lambda_level);
        let inner = PricingContext::new(params, seasonal, lambda, history, rate).map_err(core)?;
        write(out, Box::into_raw(Box::new(MrsContext { inner })))
    })
}

/// A flat seasonal component takes the same value on every date.
fn flat_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

/// Build a context from its JSON form, as produced by
/// [`mrs_context_to_json`]. This is the only way to supply a fitted
/// seasonal component or a periodic transition matrix.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` writable storage for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn mrs_context_from_json(
    json: *const c_char,
    out: *mut *mut MrsContext,
) -> MrsStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| (MrsStatus::Parse, format!("json is not UTF-8: {e}")))?;
        let inner: PricingContext = serde_json::from_str(text)
            .map_err(|e| (MrsStatus::Parse, format!("line {}: {e}", e.line())))?;
        inner.validate().map_err(core)?;
        write(out, Box::into_raw(Box::new(MrsContext { inner })))
    })
}

/// JSON form of a context. Release the string with [`mrs_string_free`].
///
/// # Safety
/// `ctx` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_context_to_json(
    ctx: *const MrsContext,
    out: *mut *mut c_char,
) -> MrsStatus {
    guard(|| {
        let ctx = deref(ctx, "ctx")?;
        let text =
            serde_json::to_string(&ctx.inner).map_err(|e| (MrsStatus::Internal, e.to_string()))?;
        let s = CString::new(text).map_err(|e| (MrsStatus::Internal, e.to_string()))?;
        write(out, s.into_raw())
    })
}

/// # Safety
/// `ctx` must be null or a pointer returned by a context constructor that
/// has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mrs_context_free(ctx: *mut MrsContext) {
    if !ctx.is_null() {
        drop(Box::from_raw(ctx));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library that has not been
/// freed yet.
#[no_mangle]
pub unsafe extern "C" fn mrs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Expected spot price at day offset `t`, under the pricing measure when
/// `risk_neutral` is set and the actual measure otherwise.
///
/// # Safety
/// `ctx` must be a live context and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_expected_spot(
    ctx: *const MrsContext,
    t: f64,
    risk_neutral: bool,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let c = &deref(ctx, "ctx")?.inner;
        let lambda = risk_neutral.then_some(&c.lambda);
        let v = expected_spot(&c.params, &c.seasonal, &c.history, t, lambda).map_err(core)?;
        write(out, v)
    })
}

/// Forward price today for delivery at day offset `delivery`.
///
/// # Safety
/// `ctx` must be a live context and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_forward(
    ctx: *const MrsContext,
    delivery: f64,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let c = &deref(ctx, "ctx")?.inner;
        write(
            out,
            forward_price(c, 0.0, delivery, &c.history).map_err(core)?,
        )
    })
}

/// Forward price today for a delivery window.
///
/// # Safety
/// `ctx` and `window` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_forward_window(
    ctx: *const MrsContext,
    window: *const MrsWindow,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let c = &deref(ctx, "ctx")?.inner;
        let spec = window_spec(deref(window, "window")?).map_err(core)?;
        write(
            out,
            forward_price_period(c, 0.0, &c.history, &spec).map_err(core)?,
        )
    })
}

/// European call on the spot price with maturity `maturity` days ahead.
///
/// # Safety
/// `ctx` must be a live context and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_spot_option(
    ctx: *const MrsContext,
    strike: f64,
    maturity: f64,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let c = &deref(ctx, "ctx")?.inner;
        write(out, spot_option(c, strike, maturity).map_err(core)?)
    })
}

/// European call expiring at day offset `expiry` on the forward for
/// `window`.
///
/// # Safety
/// `ctx` and `window` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mrs_forward_option(
    ctx: *const MrsContext,
    strike: f64,
    expiry: f64,
    window: *const MrsWindow,
    out: *mut f64,
) -> MrsStatus {
    guard(|| {
        let c = &deref(ctx, "ctx")?.inner;
        let spec = window_spec(deref(window, "window")?).map_err(core)?;
        write(out, forward_option(c, strike, expiry, &spec).map_err(core)?)
    })
}
