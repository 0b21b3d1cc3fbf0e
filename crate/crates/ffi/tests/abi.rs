use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use smscorpus::ingest::{compute_upload_code, render_upload_draft, RawMessage, TranscriptionBounds, UploadDraft};
use smscorpus::keys::Keys;
use smscorpus::model::{CollectionMethod, Source, UserProfile};
use smscorpus::pipeline::{submit, IntakeConfig, Submission};
use smscorpus::store::Store;
use smscorpus::validate::{moderate, Blocklist, Decision, Policy};
use smscorpus_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    sms_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = sms_last_error();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_string_lossy().into_owned()
}

#[test]
fn scrub_and_detect() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(
            sms_scrub(c("meet at 12:30, mail a@b.com").as_ptr(), &mut out),
            SmsStatus::Ok
        );
        assert_eq!(take(out), "meet at <TIME>, mail <EMAIL>");

        let mut lang = SmsLanguage::Unknown;
        assert_eq!(
            sms_detect_language(c("你好吗我很好").as_ptr(), &mut lang),
            SmsStatus::Ok
        );
        assert_eq!(lang, SmsLanguage::Chinese);
        assert_eq!(sms_detect_language(c("see you").as_ptr(), &mut lang), SmsStatus::Ok);
        assert_eq!(lang, SmsLanguage::English);

        let mut out = ptr::null_mut();
        assert_eq!(sms_normalize_emoticons(c("hi :)").as_ptr(), &mut out), SmsStatus::Ok);
        assert!(!take(out).is_empty());
    }
}

#[test]
fn null_and_bad_utf8_are_reported() {
    unsafe {
        let mut out = ptr::null_mut();
        assert_eq!(sms_scrub(ptr::null(), &mut out), SmsStatus::InvalidArgument);
        assert!(last_error().contains("null"));
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(sms_scrub(bad.as_ptr().cast(), &mut out), SmsStatus::NotUtf8);
        assert_eq!(sms_scrub(c("x").as_ptr(), ptr::null_mut()), SmsStatus::InvalidArgument);
        assert!(!CStr::from_ptr(sms_version()).to_bytes().is_empty());
    }
}

#[test]
fn pseudonyms_are_stable_and_keyed() {
    unsafe {
        let k1 = c(&"11".repeat(32));
        let k2 = c(&"22".repeat(32));
        let (mut p1, mut p2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(sms_pseudonymizer_new(k1.as_ptr(), &mut p1), SmsStatus::Ok);
        assert_eq!(sms_pseudonymizer_new(k2.as_ptr(), &mut p2), SmsStatus::Ok);
        let token = |p: *const SmsPseudonymizer, n: &str| {
            let mut out = ptr::null_mut();
            assert_eq!(sms_pseudonymize(p, c(n).as_ptr(), &mut out), SmsStatus::Ok);
            take(out)
        };
        let a = token(p1, "+65 9123 4567");
        assert_eq!(a, token(p1, "+6591234567"));
        assert_ne!(a, token(p2, "+6591234567"));
        assert!(!a.contains("9123"));

        let mut bad = ptr::null_mut();
        assert_eq!(
            sms_pseudonymizer_new(c("abc").as_ptr(), &mut bad),
            SmsStatus::InvalidArgument
        );
        assert!(bad.is_null());
        sms_pseudonymizer_free(p1);
        sms_pseudonymizer_free(p2);
        sms_pseudonymizer_free(ptr::null_mut());
    }
}

#[test]
fn scheme_rewards() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(sms_scheme_builtin(c("mturk").as_ptr(), &mut s), SmsStatus::Ok);
        let mut r = SmsReward {
            cents: -1,
            currency: SmsCurrency::Cny,
            below_minimum: true,
            bracket: 9,
        };
        assert_eq!(sms_scheme_reward(s, 500, &mut r), SmsStatus::Ok);
        assert_eq!((r.cents, r.currency, r.below_minimum), (450, SmsCurrency::Usd, false));
        assert_eq!(sms_scheme_reward(s, 1000, &mut r), SmsStatus::Ok);
        assert_eq!(r.cents, 700);
        sms_scheme_free(s);

        let mut s = ptr::null_mut();
        assert_eq!(sms_scheme_builtin(c("zhubajie1").as_ptr(), &mut s), SmsStatus::Ok);
        assert_eq!(sms_scheme_reward(s, 100, &mut r), SmsStatus::Ok);
        assert_eq!((r.cents, r.currency), (1000, SmsCurrency::Cny));
        sms_scheme_free(s);

        let mut s = ptr::null_mut();
        assert_eq!(sms_scheme_builtin(c("nope").as_ptr(), &mut s), SmsStatus::NotFound);
        assert_eq!(
            sms_scheme_parse(c("x").as_ptr(), c("garbage").as_ptr(), &mut s),
            SmsStatus::Parse
        );
        assert!(s.is_null());
    }
}

#[test]
fn upload_verification() {
    let secret = b"device secret";
    let messages = vec![RawMessage::body_only("hello there"), RawMessage::body_only("see you")];
    let draft = UploadDraft {
        verification_code: compute_upload_code(secret, "dev1", messages.len()),
        device_id_token: "dev1".into(),
        messages,
    };
    let text = render_upload_draft(&draft);
    unsafe {
        let mut ok = false;
        let st = sms_verify_upload(text.as_ptr(), text.len(), secret.as_ptr(), secret.len(), &mut ok);
        assert_eq!(st, SmsStatus::Ok);
        assert!(ok);
        let st = sms_verify_upload(text.as_ptr(), text.len(), b"other".as_ptr(), 5, &mut ok);
        assert_eq!(st, SmsStatus::Ok);
        assert!(!ok);
        let junk = b"not a draft";
        let st = sms_verify_upload(junk.as_ptr(), junk.len(), secret.as_ptr(), secret.len(), &mut ok);
        assert_eq!(st, SmsStatus::Parse);
    }
}

#[test]
fn store_queries_see_only_approved() {
    let dir = tempfile::tempdir().unwrap();
    let keys = Keys::generate();
    let (blocklist, policy) = (Blocklist::builtin(), Policy::default());
    let config = IntakeConfig {
        keys: &keys,
        bounds: TranscriptionBounds::default(),
        blocklist: &blocklist,
        policy: &policy,
    };
    {
        let store = Store::open(dir.path()).unwrap();
        let mut ids = Vec::new();
        for (who, body) in [
            ("a", "lunch at the canteen later ok"),
            ("b", "bring my umbrella back pls"),
        ] {
            let payload = format!("direction,peer_number,timestamp,body\nsent,+6591234567,,{body}\n");
            let out = submit(
                &store,
                Submission {
                    method: CollectionMethod::Export,
                    source: Source::Local,
                    contributor: who.into(),
                    payload: payload.into_bytes(),
                    profile: Some(UserProfile::unknown("")),
                    profile_id: None,
                },
                &config,
            )
            .unwrap();
            ids.push(out.batch_id);
        }
        moderate(&store, &ids[0], Decision::Approve, None, None, &policy).unwrap();
    }
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(
            sms_store_open(c(dir.path().to_str().unwrap()).as_ptr(), &mut s),
            SmsStatus::Ok
        );
        let mut out = ptr::null_mut();
        assert_eq!(sms_store_query_json(s, ptr::null(), 0, 10, &mut out), SmsStatus::Ok);
        let page: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(page["total"], 1);
        assert!(page["messages"][0]["body"].as_str().unwrap().contains("canteen"));

        let filter = c(r#"{"language":"chinese"}"#);
        assert_eq!(sms_store_query_json(s, filter.as_ptr(), 0, 10, &mut out), SmsStatus::Ok);
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(&take(out)).unwrap()["total"],
            0
        );

        let pending = c(r#"{"status":"pending"}"#);
        assert_eq!(
            sms_store_query_json(s, pending.as_ptr(), 0, 10, &mut out),
            SmsStatus::InvalidArgument
        );
        assert_eq!(
            sms_store_query_json(s, ptr::null(), 0, 5000, &mut out),
            SmsStatus::InvalidArgument
        );

        assert_eq!(sms_store_stats_json(s, &mut out), SmsStatus::Ok);
        let stats: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(stats["summary"]["total_messages"], 1);
        sms_store_free(s);
    }
}
