//! C ABI for the smscorpus toolchain.
//!
//! Every fallible call returns an [`SmsStatus`]; on failure a message is
//! available from [`sms_last_error`] on the same thread. Strings returned
//! through `char **out` parameters are owned by the caller and released
//! with [`sms_string_free`]. Handles are opaque and released with their
//! matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use smscorpus::anonymize::{normalize_emoticons, pseudonymize_number, scrub_body, PseudonymKey};
use smscorpus::ingest::{parse_upload_draft, verify_upload};
use smscorpus::model::{Currency, Language, Status};
use smscorpus::rewards::{compute_reward, RewardScheme};
use smscorpus::stats::stats_report;
use smscorpus::store::{MessageFilter, Page, Store, StoreError};
use smscorpus::validate::detect_language;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmsStatus {
    Ok = 0,
    InvalidArgument = 1,
    NotUtf8 = 2,
    Parse = 3,
    NotFound = 4,
    Conflict = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmsLanguage {
    English = 0,
    Chinese = 1,
    Mixed = 2,
    Unknown = 3,
}

impl From<Language> for SmsLanguage {
    fn from(l: Language) -> Self {
        match l {
            Language::English => SmsLanguage::English,
            Language::Chinese => SmsLanguage::Chinese,
            Language::Mixed => SmsLanguage::Mixed,
            Language::Unknown => SmsLanguage::Unknown,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmsCurrency {
    Usd = 0,
    Cny = 1,
    Sgd = 2,
}

impl From<Currency> for SmsCurrency {
    fn from(c: Currency) -> Self {
        match c {
            Currency::Usd => SmsCurrency::Usd,
            Currency::Cny => SmsCurrency::Cny,
            Currency::Sgd => SmsCurrency::Sgd,
        }
    }
}

/// Reward for one batch size. `bracket` is -1 below the scheme minimum.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmsReward {
    pub cents: i64,
    pub currency: SmsCurrency,
    pub below_minimum: bool,
    pub bracket: i32,
}

/// Phone-number pseudonymizer bound to one key.
pub struct SmsPseudonymizer {
    key: PseudonymKey,
}

/// Parsed reward scheme.
pub struct SmsScheme {
    scheme: RewardScheme,
}

/// Open corpus store.
pub struct SmsStore {
    store: Store,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(detail: impl ToString) {
    let text = detail.to_string().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Fail(SmsStatus, String);

impl Fail {
    fn arg(detail: impl ToString) -> Self {
        Fail(SmsStatus::InvalidArgument, detail.to_string())
    }
}

impl From<StoreError> for Fail {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::BatchNotFound(_) => SmsStatus::NotFound,
            StoreError::MalformedFilter(_) => SmsStatus::InvalidArgument,
            StoreError::Io(_) => SmsStatus::Io,
            StoreError::Corrupt(_) => SmsStatus::Parse,
            _ => SmsStatus::Conflict,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SmsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SmsStatus::Ok,
        Ok(Err(Fail(status, detail))) => {
            set_error(detail);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SmsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::arg(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SmsStatus::NotUtf8, format!("{what} is not UTF-8")))
}

unsafe fn read_bytes<'a>(p: *const u8, len: usize, what: &str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::arg(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::arg("output pointer is null"));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail::arg("result contains NUL"))?;
    if out.is_null() {
        return Err(Fail::arg("output pointer is null"));
    }
    out.write(c.into_raw());
    Ok(())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn sms_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sms_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sms_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Replaces sensitive spans (URLs, emails, numbers, times, ...) by
/// placeholder codes.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sms_scrub(text: *const c_char, out: *mut *mut c_char) -> SmsStatus {
    guard(|| write_string(out, scrub_body(read_str(text, "text")?)))
}

/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sms_normalize_emoticons(text: *const c_char, out: *mut *mut c_char) -> SmsStatus {
    guard(|| write_string(out, normalize_emoticons(read_str(text, "text")?)))
}

/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sms_detect_language(text: *const c_char, out: *mut SmsLanguage) -> SmsStatus {
    guard(|| write_out(out, detect_language(read_str(text, "text")?).into()))
}

/// Creates a pseudonymizer from a 64-digit hex key.
///
/// # Safety
/// `key_hex` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sms_pseudonymizer_new(key_hex: *const c_char, out: *mut *mut SmsPseudonymizer) -> SmsStatus {
    guard(|| {
        let key = PseudonymKey::from_hex(read_str(key_hex, "key")?).map_err(Fail::arg)?;
        write_out(out, Box::into_raw(Box::new(SmsPseudonymizer { key })))
    })
}

/// # Safety
/// `p` must come from [`sms_pseudonymizer_new`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sms_pseudonymizer_free(p: *mut SmsPseudonymizer) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Stable token for a phone number.
///
/// # Safety
/// `p` must be a live handle; `phone` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_pseudonymize(
    p: *const SmsPseudonymizer,
    phone: *const c_char,
    out: *mut *mut c_char,
) -> SmsStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| Fail::arg("pseudonymizer is null"))?;
        let token = pseudonymize_number(read_str(phone, "phone")?, &p.key).map_err(Fail::arg)?;
        write_string(out, token)
    })
}

/// Built-in scheme by name: `mturk`, `zhubajie1`, `zhubajie2`, `local`,
/// `shorttask`.
///
/// # Safety
/// `name` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_scheme_builtin(name: *const c_char, out: *mut *mut SmsScheme) -> SmsStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let scheme =
            RewardScheme::builtin(name).ok_or_else(|| Fail(SmsStatus::NotFound, format!("unknown scheme {name:?}")))?;
        write_out(out, Box::into_raw(Box::new(SmsScheme { scheme })))
    })
}

/// Parses a scheme from its text form.
///
/// # Safety
/// `name` and `text` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_scheme_parse(
    name: *const c_char,
    text: *const c_char,
    out: *mut *mut SmsScheme,
) -> SmsStatus {
    guard(|| {
        let scheme = RewardScheme::parse(read_str(name, "name")?, read_str(text, "text")?)
            .map_err(|e| Fail(SmsStatus::Parse, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(SmsScheme { scheme })))
    })
}

/// # Safety
/// `s` must come from a scheme constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sms_scheme_free(s: *mut SmsScheme) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Reward for a batch of `n` messages.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_scheme_reward(s: *const SmsScheme, n: u64, out: *mut SmsReward) -> SmsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| Fail::arg("scheme is null"))?;
        let r = compute_reward(&s.scheme, n);
        write_out(
            out,
            SmsReward {
                cents: r.amount.cents,
                currency: r.amount.currency.into(),
                below_minimum: r.below_minimum,
                bracket: r.bracket.map_or(-1, |b| b as i32),
            },
        )
    })
}

/// Checks an upload draft's verification code against `secret`. A draft
/// that does not parse yields `SMS_STATUS_PARSE`.
///
/// # Safety
/// `draft` and `secret` must point to `draft_len` and `secret_len`
/// readable bytes; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_verify_upload(
    draft: *const u8,
    draft_len: usize,
    secret: *const u8,
    secret_len: usize,
    out: *mut bool,
) -> SmsStatus {
    guard(|| {
        let parsed = parse_upload_draft(read_bytes(draft, draft_len, "draft")?)
            .map_err(|e| Fail(SmsStatus::Parse, e.to_string()))?;
        write_out(out, verify_upload(&parsed, read_bytes(secret, secret_len, "secret")?))
    })
}

/// Opens (creating if needed) a store directory.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_store_open(path: *const c_char, out: *mut *mut SmsStore) -> SmsStatus {
    guard(|| {
        let store = Store::open(read_str(path, "path")?)?;
        write_out(out, Box::into_raw(Box::new(SmsStore { store })))
    })
}

/// # Safety
/// `s` must come from [`sms_store_open`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn sms_store_free(s: *mut SmsStore) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Page of approved messages as JSON. `filter_json` is NULL or an object
/// with optional `language`, `source`, `method` and `profile_id`.
///
/// # Safety
/// `s` must be a live handle; `filter_json` NULL or NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn sms_store_query_json(
    s: *const SmsStore,
    filter_json: *const c_char,
    offset: usize,
    limit: usize,
    out: *mut *mut c_char,
) -> SmsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| Fail::arg("store is null"))?;
        let mut filter: MessageFilter = if filter_json.is_null() {
            MessageFilter::default()
        } else {
            serde_json::from_str(read_str(filter_json, "filter")?).map_err(|e| Fail::arg(format!("filter: {e}")))?
        };
        if filter.status.is_some_and(|st| st != Status::Approved) {
            return Err(Fail::arg("only approved messages are browsable"));
        }
        filter.status = Some(Status::Approved);
        let page = s.store.query_messages(&filter, Page { offset, limit })?;
        write_string(out, serde_json::to_string(&page).expect("serializable"))
    })
}

/// Statistics document for the approved corpus, as JSON.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sms_store_stats_json(s: *const SmsStore, out: *mut *mut c_char) -> SmsStatus {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| Fail::arg("store is null"))?;
        write_string(out, stats_report(&s.store.snapshot()).to_json())
    })
}
