//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use chrono::{FixedOffset, TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use common::{field, CliEnv};
use smscorpus::anonymize::{
    is_pseudonym_token, looks_like_phone_number, pseudonymize_number, scrub_body, PseudonymKey, Scrubber,
};
use smscorpus::ingest::{
    compute_upload_code, detect_format, parse_export, parse_transcription, parse_upload_draft, verify_upload,
    ExportFormat, RawMessage, TranscriptionBounds, UploadDraft,
};
use smscorpus::keys::Keys;
use smscorpus::model::{
    CollectionMethod, Currency, Language, Message, Money, Source, Status, SubmissionBatch, UserProfile, VersionId,
};
use smscorpus::release::{build_release, count_sql_rows, parse_release_xml, ArtifactKind, ReleaseContent};
use smscorpus::rewards::{compute_reward, cost_per_message, round_decimals, round_significant, FxTable, RewardScheme};
use smscorpus::stats::corpus_summary;
use smscorpus::store::{CorpusState, Store};
use smscorpus::validate::approval_rates;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    };
}

fn table2_golden() -> Outcome {
    let cases = [
        ("name@gmail.com", "<EMAIL>"),
        ("http://www.google.com", "<URL>"),
        ("127.0.0.1", "<IP>"),
        ("12:30", "<TIME>"),
        ("19/01/2011", "<DATE>"),
        ("21.3", "<DECIMAL>"),
        ("4000", "<#>"),
        ("12-4234-212", "<#>"),
        ("U2003322X", "U<#>X"),
    ];
    let composites = [
        (
            "mail me at name@gmail.com before 12:30 on 19/01/2011, acct 4000",
            "mail me at <EMAIL> before <TIME> on <DATE>, acct <#>",
        ),
        ("meet at 5", "meet at 5"),
        ("see http://127.0.0.1/x?id=42 now", "see <URL> now"),
        ("server 10.0.0.12 is down", "server <IP> is down"),
        ("on 2011-01-19 at 3:45pm", "on <DATE> at <TIME>"),
        ("pay 21.30 to U2003322X", "pay <DECIMAL> to U<#>X"),
        ("call 9123-4567 or 91234567", "call <#> or <#>"),
        ("我在１２:３０等你，房间２０１", "我在<TIME>等你，房间<#>"),
    ];
    for (input, want) in cases.iter().chain(composites.iter()) {
        let got = scrub_body(input);
        ensure!(got == *want, "{input:?} -> {got:?}, expected {want:?}");
    }
    Ok(format!(
        "{} exemplars, {} composites byte-exact",
        cases.len(),
        composites.len()
    ))
}

const PATTERNS: &[&str] = &[
    "name@gmail.com",
    "a.b+c@mail.nus.edu.sg",
    "http://www.google.com",
    "www.comp.nus.edu.sg/~kanmy",
    "127.0.0.1",
    "12:30",
    "3:45 pm",
    "19/01/2011",
    "2011-01-19",
    "21.3",
    "4000",
    "12-4234-212",
    "U2003322X",
    "5",
    "+65 9123 4567",
    "１２３４",
];

const FILLER: &[&str] = &[
    "see you", "at", "ok", " ", "", ".", ",", ":", "/", "-", "@", "晚上", "吃饭", "lol", "x", "pm",
];

fn fuzz_text(rng: &mut StdRng) -> String {
    let parts = rng.random_range(1..12);
    let mut s = String::new();
    for _ in 0..parts {
        let pool = if rng.random_bool(0.5) { PATTERNS } else { FILLER };
        s.push_str(pool[rng.random_range(0..pool.len())]);
        if rng.random_bool(0.6) {
            s.push(' ');
        }
    }
    s
}

fn scrub_fuzz() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5c2b);
    let scrubber = Scrubber::standard();
    for i in 0..10_000 {
        let x = fuzz_text(&mut rng);
        let once = scrubber.scrub(&x);
        ensure!(scrubber.scrub(&once) == once, "case {i}: not idempotent on {x:?}");
        let residual = scrubber.residuals(&once);
        ensure!(residual.is_empty(), "case {i}: {x:?} -> {once:?} keeps {residual:?}");
    }
    Ok("10000 cases, 0 violations".into())
}

fn pseudonyms() -> Outcome {
    let k1 = PseudonymKey::from_bytes(&[0x11; 32]).map_err(|e| e.to_string())?;
    let k2 = PseudonymKey::from_bytes(&[0x22; 32]).map_err(|e| e.to_string())?;
    let mut seen = HashSet::new();
    for i in 0..10_000u32 {
        let number = format!("+659{:07}", i * 37 + 1_000_000);
        let t = pseudonymize_number(&number, &k1).map_err(|e| e.to_string())?;
        ensure!(
            t == pseudonymize_number(&number, &k1).unwrap(),
            "nondeterministic for {number}"
        );
        ensure!(
            t != pseudonymize_number(&number, &k2).unwrap(),
            "key-insensitive for {number}"
        );
        ensure!(is_pseudonym_token(&t) && !looks_like_phone_number(&t), "bad token {t}");
        ensure!(seen.insert(t), "collision at {number}");
    }
    let spaced = pseudonymize_number("+65 9100 0037", &k1).unwrap();
    ensure!(
        spaced == pseudonymize_number("+6591000037", &k1).unwrap(),
        "formatting changes the token"
    );

    // Tokens inside a published release.
    let env = common::Env::new();
    let bodies = common::english_bodies(30, "tok");
    let refs: Vec<&str> = bodies.iter().map(String::as_str).collect();
    let outcome = env.submit_export("alice", &refs);
    smscorpus::validate::moderate(
        &env.store,
        &outcome.batch_id,
        smscorpus::validate::Decision::Approve,
        None,
        None,
        &env.policy,
    )
    .map_err(|e| e.to_string())?;
    let built = build_release(&env.store.snapshot(), VersionId::new(2011, 10).unwrap()).map_err(|e| e.to_string())?;
    let parsed = parse_release_xml(&built.artifact(ArtifactKind::XmlDump).bytes).map_err(|e| e.to_string())?;
    let mut tokens = 0;
    for m in &parsed.content.messages {
        for t in [&m.sender_token, &m.receiver_token].into_iter().flatten() {
            ensure!(!looks_like_phone_number(t), "phone-like token {t}");
            tokens += 1;
        }
    }
    let csv = common::export_csv(&refs);
    for a in &built.artifacts {
        let text = String::from_utf8_lossy(&a.bytes);
        for row in csv.lines().skip(1) {
            let number = row.split(',').nth(1).unwrap();
            ensure!(!text.contains(number), "{} contains {number}", a.name);
            ensure!(!text.contains(&number[1..]), "{} contains {}", a.name, &number[1..]);
        }
        ensure!(
            !text.contains(&env.keys.pseudonym_key.to_hex()),
            "{} contains the key",
            a.name
        );
    }
    Ok(format!(
        "10000 numbers, 0 collisions; {tokens} release tokens, none phone-like"
    ))
}

fn reward_continuity() -> Outcome {
    let mut boundaries = 0;
    for name in ["mturk", "zhubajie1", "zhubajie2", "local"] {
        let s = RewardScheme::builtin(name).ok_or(format!("missing scheme {name}"))?;
        for pair in s.brackets.windows(2) {
            let upper = pair[0].upper.unwrap();
            let gap = (s.pay_exact(upper).unwrap() - pair[1].base_cents as f64 / 100.0).abs();
            ensure!(gap < 0.005, "{name}: gap {gap} at {upper}");
            boundaries += 1;
        }
        let mut prev = 0;
        for n in 0..=2000 {
            let c = compute_reward(&s, n).amount.cents;
            ensure!(c >= prev, "{name}: pay decreases at {n}");
            prev = c;
        }
    }
    let pay = |name: &str, n: u64| compute_reward(&RewardScheme::builtin(name).unwrap(), n).amount;
    let expected = [
        ("mturk", 1000, 700, Currency::Usd),
        ("zhubajie1", 1000, 4000, Currency::Cny),
        ("zhubajie2", 1000, 3200, Currency::Cny),
        ("local", 600, 2000, Currency::Sgd),
        ("mturk", 500, 450, Currency::Usd),
        ("mturk", 5000, 700, Currency::Usd),
    ];
    for (name, n, cents, currency) in expected {
        let got = pay(name, n);
        ensure!(got == Money::new(cents, currency), "{name} n={n}: {got:?}");
    }
    Ok(format!(
        "{boundaries} boundaries within half a cent; caps and $4.50 at n=500 exact"
    ))
}

fn cost_table() -> Outcome {
    let fx = FxTable::default();
    let rows = [
        (Money::new(9230, Currency::Usd), 11_330, 0.00815, None),
        (Money::new(294, Currency::Usd), 280, 0.0105, None),
        (Money::new(86_850, Currency::Cny), 23_789, 0.0365, Some(0.0057)),
        (Money::new(34_000, Currency::Sgd), 20_245, 0.0168, Some(0.0132)),
    ];
    for (total, n, native, usd) in rows {
        let c = cost_per_message(total, n, &fx).map_err(|e| e.to_string())?;
        ensure!(c.native_rounded() == native, "{total:?}/{n}: {}", c.native_rounded());
        // Independent of the library rounding helpers.
        let raw = total.cents as f64 / 100.0 / n as f64;
        ensure!(
            (raw - native).abs() < 0.5 * 10f64.powi(native.log10().floor() as i32 - 2),
            "oracle {raw}"
        );
        if let Some(usd) = usd {
            ensure!(c.usd_rounded() == usd, "{total:?}/{n}: USD {}", c.usd_rounded());
            ensure!(
                (raw * fx.usd_rate(total.currency).unwrap() - usd).abs() < 0.00005,
                "oracle USD"
            );
        }
    }
    ensure!(
        round_significant(9230.0 / 100.0 / 11_330.0, 3) == 0.00815,
        "significant rounding"
    );
    ensure!(
        round_decimals(868.5 / 23_789.0 * 0.1567, 4) == 0.0057,
        "decimal rounding"
    );
    Ok("USD 0.00815, USD 0.0105, CNY 0.0365 ~ USD 0.0057, SGD 0.0168 ~ USD 0.0132".into())
}

fn statistics() -> Outcome {
    let s = corpus_summary(&common::paper_corpus());
    let en = s.language(Language::English).mean_per_contributor.unwrap_or(f64::NAN);
    let zh = s.language(Language::Chinese).mean_per_contributor.unwrap_or(f64::NAN);
    ensure!((en - 247.6).abs() <= 0.05, "English mean {en}");
    ensure!((zh - 56.5).abs() <= 0.05, "Chinese mean {zh}");
    let table = approval_rates(&common::approval_fixture());
    let cell = table
        .cell(CollectionMethod::Transcription, Source::Mturk)
        .ok_or("missing approval cell")?;
    ensure!((cell.rate * 100.0 - 62.5).abs() < 1e-9, "approval rate {}", cell.rate);
    Ok(format!("means {en:.1} / {zh:.1}; approval {:.2}%", cell.rate * 100.0))
}

fn random_body(rng: &mut StdRng) -> String {
    const ALPHABET: &[&str] = &[
        "a", "e", "x", "Z", " ", "  ", "\t", "\n", "\r\n", "&", "<", ">", "\"", "'", "]]>", "晚", "饭", "😀", "\u{1}",
        "\u{7f}", "é", ";", "--", "<#>", "\u{FEFF}",
    ];
    let len = rng.random_range(1..40);
    let body: String = (0..len)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
        .collect();
    scrub_body(&body)
}

fn random_state(rng: &mut StdRng, n: usize) -> CorpusState {
    let key = PseudonymKey::from_bytes(&[0x33; 32]).unwrap();
    let mut state = CorpusState::default();
    let profiles = rng.random_range(1..6);
    for p in 0..profiles {
        let mut profile = UserProfile::unknown(format!("prof-{p}"));
        profile.set_field("age", ["16-20", "21-25", "unknown"][p % 3]).unwrap();
        profile
            .set_field("country", ["Singapore", "China", "A \"quoted\" <place>"][p % 3])
            .unwrap();
        state.profiles.insert(profile.id.clone(), profile);
    }
    let mut made = 0;
    let mut b = 0;
    while made < n {
        let size = rng.random_range(1..=20).min(n - made);
        let batch_id = format!("batch-{b:04}");
        let method = CollectionMethod::ALL[rng.random_range(0..3)];
        let source = Source::ALL[rng.random_range(0..Source::ALL.len())];
        let profile_id = rng
            .random_bool(0.8)
            .then(|| format!("prof-{}", rng.random_range(0..profiles)));
        let mut ids = Vec::new();
        for i in 0..size {
            let id = format!("{batch_id}-{i:05}");
            let with_meta = method != CollectionMethod::Transcription;
            let offset = FixedOffset::east_opt(rng.random_range(-12..=12) * 3600).unwrap();
            let sent_at = with_meta.then(|| {
                offset
                    .timestamp_opt(1_290_000_000 + rng.random_range(0..30_000_000), 0)
                    .unwrap()
            });
            let token = |rng: &mut StdRng| {
                with_meta.then(|| {
                    pseudonymize_number(&format!("+65{}", rng.random_range(80_000_000..99_999_999)), &key).unwrap()
                })
            };
            let language = Language::ALL[rng.random_range(0..Language::ALL.len())];
            state.messages.insert(
                id.clone(),
                Message {
                    id: id.clone(),
                    batch_id: batch_id.clone(),
                    body: random_body(rng),
                    language,
                    sender_token: token(rng),
                    receiver_token: token(rng),
                    sent_at,
                    collection_method: method,
                    source,
                    profile_id: profile_id.clone(),
                    status: Status::Approved,
                },
            );
            ids.push(id);
        }
        state.batches.insert(
            batch_id.clone(),
            SubmissionBatch {
                id: batch_id,
                contributor_ref: format!("c{}", rng.random_range(0..50)),
                collection_method: method,
                source,
                received_at: Utc.timestamp_opt(1_300_000_000 + b as i64 * 60, 0).unwrap(),
                message_ids: ids,
                status: Status::Approved,
                rejection_reason: None,
                reward: Some(Money::zero(Currency::Usd)),
            },
        );
        made += size;
        b += 1;
    }
    state
}

fn release_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(201_111);
    let mut sizes = vec![0, 1, 2, 10, 100, 1000];
    sizes.extend((0..6).map(|_| rng.random_range(3..1000)));
    let version = VersionId::new(2011, 11).unwrap();
    for &n in &sizes {
        let state = random_state(&mut rng, n);
        let built = build_release(&state, version).map_err(|e| e.to_string())?;
        let again = build_release(&state, version).map_err(|e| e.to_string())?;
        ensure!(
            built.version.artifact_checksums == again.version.artifact_checksums,
            "n={n}: digests differ"
        );
        let xml = &built.artifact(ArtifactKind::XmlDump).bytes;
        let parsed = parse_release_xml(xml).map_err(|e| format!("n={n}: {e}"))?;
        ensure!(
            parsed.content == ReleaseContent::from_state(&state, version),
            "n={n}: round trip differs"
        );
        ensure!(parsed.warnings.is_empty(), "n={n}: warnings {:?}", parsed.warnings);

        let sql = String::from_utf8(built.artifact(ArtifactKind::SqlDump).bytes.clone()).map_err(|e| e.to_string())?;
        let counts = count_sql_rows(&sql);
        ensure!(
            counts.get("messages").copied().unwrap_or(0) == parsed.content.messages.len(),
            "n={n}: SQL messages"
        );
        ensure!(
            counts.get("profiles").copied().unwrap_or(0) == parsed.content.profiles.len(),
            "n={n}: SQL profiles"
        );
        let conn = rusqlite::Connection::open_in_memory().unwrap();
        conn.execute_batch(&sql).map_err(|e| format!("n={n}: SQL load: {e}"))?;
        let loaded: i64 = conn
            .query_row("SELECT COUNT(*) FROM messages", [], |r| r.get(0))
            .unwrap();
        ensure!(loaded as usize == n, "n={n}: SQLite holds {loaded}");
    }
    Ok(format!(
        "{} corpora up to 1000 messages; digests stable; SQL = XML counts",
        sizes.len()
    ))
}

fn ingest_fuzz() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xf022);
    let seeds: [&[u8]; 5] = [
        b"direction,peer_number,timestamp,body\n",
        b"<messages><message direction=\"sent\" peer=\"1\" time=\"x\">",
        b"SMS-CORPUS-UPLOAD v1\ncode: 0123abcd\ndevice: d\ncount: 1\n--msg--\n",
        b"{\"language\": \"chinese\", \"messages\": [\"",
        b"\xEF\xBB\xBF",
    ];
    let bounds = TranscriptionBounds::default();
    let mut panics = 0;
    for _ in 0..100_000 {
        let mut bytes: Vec<u8> = if rng.random_bool(0.3) {
            seeds[rng.random_range(0..seeds.len())].to_vec()
        } else {
            Vec::new()
        };
        let len = rng.random_range(0..120);
        bytes.extend((0..len).map(|_| {
            if rng.random_bool(0.7) {
                rng.random_range(0x20..0x7f)
            } else {
                rng.random::<u8>()
            }
        }));
        let ok = catch_unwind(AssertUnwindSafe(|| {
            let _ = detect_format(&bytes);
            let _ = parse_export(&bytes, None);
            let _ = parse_export(&bytes, Some(ExportFormat::Csv));
            let _ = parse_export(&bytes, Some(ExportFormat::Xml));
            let _ = parse_transcription(&bytes, &bounds);
            let _ = parse_upload_draft(&bytes);
        }));
        panics += usize::from(ok.is_err());
    }
    ensure!(panics == 0, "{panics} parser panics");

    let secret = b"acceptance-upload-secret";
    let mut accepted = 0;
    for i in 0..1000 {
        let count = rng.random_range(1..8);
        let device = format!("dev{}", rng.random_range(0..1_000_000));
        let messages: Vec<RawMessage> = (0..count)
            .map(|j| RawMessage::body_only(format!("msg {i} {j}")))
            .collect();
        let draft = UploadDraft {
            verification_code: compute_upload_code(secret, &device, count),
            device_id_token: device.clone(),
            messages,
        };
        ensure!(verify_upload(&draft, secret), "draft {i} not accepted");
        accepted += 1;
        let mut mutants = Vec::new();
        let mut m = draft.clone();
        let pos = rng.random_range(0..8);
        let mut code: Vec<char> = m.verification_code.chars().collect();
        code[pos] = if code[pos] == 'f' { 'e' } else { 'f' };
        m.verification_code = code.into_iter().collect();
        mutants.push(("code", m));
        let mut m = draft.clone();
        m.device_id_token.push('x');
        mutants.push(("device", m));
        let mut m = draft.clone();
        m.messages.push(RawMessage::body_only("extra"));
        mutants.push(("count+1", m));
        let mut m = draft.clone();
        m.messages.pop();
        mutants.push(("count-1", m));
        for (what, m) in mutants {
            ensure!(!verify_upload(&m, secret), "draft {i}: {what} mutation accepted");
        }
    }
    Ok(format!(
        "100000 inputs, 0 panics; {accepted} drafts, all 4000 mutations rejected"
    ))
}

fn end_to_end() -> Outcome {
    let env = CliEnv::new();
    let fixture = common::mixed_fixture(&env);
    let mut batches = Vec::new();
    for (args, scheme) in fixture.submissions.iter().zip(&fixture.schemes) {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let r = env.run(&args);
        ensure!(r.ok, "ingest failed: {}", r.stderr);
        let first = r.stdout.lines().next().unwrap_or("");
        ensure!(
            field(first, "recommendation").is_some(),
            "no quality report for {args:?}"
        );
        batches.push((field(first, "batch").unwrap(), *scheme));
    }
    for (batch, _) in &batches {
        let r = env.run(&["report", batch]);
        ensure!(r.ok, "report failed: {}", r.stderr);
    }
    for (batch, scheme) in &batches {
        let r = env.run(&["moderate", batch, "approve", "--scheme", scheme]);
        ensure!(r.ok, "moderate failed: {}", r.stderr);
    }
    let stats = env.run(&["stats", "--json"]);
    ensure!(stats.ok, "stats failed: {}", stats.stderr);
    let stats: serde_json::Value = serde_json::from_str(&stats.stdout).map_err(|e| e.to_string())?;
    ensure!(
        stats["summary"]["total_messages"] == 50,
        "stats total {}",
        stats["summary"]["total_messages"]
    );
    for args in [["release", "build", "2011-11"], ["release", "verify", "2011-11"]] {
        let r = env.run(&args);
        ensure!(r.ok, "{args:?} failed: {}", r.stderr);
    }

    let state = Store::open(env.store_path()).map_err(|e| e.to_string())?.snapshot();
    let scrubber = Scrubber::standard();
    ensure!(state.messages.len() == 50, "{} messages stored", state.messages.len());
    let languages: HashSet<Language> = state.messages.values().map(|m| m.language).collect();
    ensure!(languages.len() >= 3, "languages {languages:?}");
    for m in state.messages.values() {
        ensure!(scrubber.is_clean(&m.body), "residual PII in {}", m.id);
        for t in [&m.sender_token, &m.receiver_token].into_iter().flatten() {
            ensure!(!looks_like_phone_number(t), "phone-like token in {}", m.id);
        }
        let batch = state.batches.get(&m.batch_id).ok_or(format!("orphan {}", m.id))?;
        ensure!(
            m.status != Status::Approved || batch.status == Status::Approved,
            "{} approved outside its batch",
            m.id
        );
    }
    for b in state.batches.values() {
        ensure!(
            b.reward.is_some() == (b.status == Status::Approved),
            "reward/status mismatch in {}",
            b.id
        );
    }
    for p in state.profiles.values() {
        ensure!(
            p.answers().iter().all(|(_, v)| !v.is_empty()),
            "empty answer in {}",
            p.id
        );
    }
    let rewards: BTreeMap<&str, String> = state
        .batches
        .values()
        .map(|b| {
            (
                b.id.as_str(),
                b.reward
                    .map(|r| format!("{} {}", r.currency, r.amount_string()))
                    .unwrap_or_default(),
            )
        })
        .collect();
    ensure!(state.versions.len() == 1, "versions {:?}", state.versions.len());
    let secrets = [Keys::load(&env.path("smscorpus.keys")).unwrap().pseudonym_key.to_hex()];
    for entry in std::fs::read_dir(env.store_path().join("releases/2011-11")).map_err(|e| e.to_string())? {
        let bytes = std::fs::read(entry.map_err(|e| e.to_string())?.path()).map_err(|e| e.to_string())?;
        let text = String::from_utf8_lossy(&bytes);
        ensure!(
            !secrets.iter().any(|s| text.contains(s.as_str())),
            "key material in artifacts"
        );
        ensure!(!text.contains("+659"), "raw phone number in artifacts");
    }
    Ok(format!(
        "50 messages via CLI, exit 0 throughout; rewards {:?}",
        rewards.values().collect::<Vec<_>>()
    ))
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "table2_golden_suite",
            budget: Some(Duration::from_secs(1)),
            run: table2_golden,
        },
        Criterion {
            name: "scrubber_fuzz_10k",
            budget: None,
            run: scrub_fuzz,
        },
        Criterion {
            name: "pseudonymization",
            budget: None,
            run: pseudonyms,
        },
        Criterion {
            name: "reward_continuity",
            budget: None,
            run: reward_continuity,
        },
        Criterion {
            name: "cost_table",
            budget: None,
            run: cost_table,
        },
        Criterion {
            name: "statistics",
            budget: None,
            run: statistics,
        },
        Criterion {
            name: "release_round_trip",
            budget: Some(Duration::from_secs(10)),
            run: release_round_trip,
        },
        Criterion {
            name: "ingest_fuzz",
            budget: None,
            run: ingest_fuzz,
        },
        Criterion {
            name: "end_to_end_cli",
            budget: None,
            run: end_to_end,
        },
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = catch_unwind(c.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.budget) {
            (Ok(_), Some(budget)) if elapsed > budget => Err(format!("took {elapsed:.2?}, budget {budget:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {:<22} {detail} ({elapsed:.2?})", c.name),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:<22} {detail} ({elapsed:.2?})", c.name);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
