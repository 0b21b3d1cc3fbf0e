#![allow(dead_code)]

use chrono::{TimeZone, Utc};
use smscorpus::ingest::TranscriptionBounds;
use smscorpus::keys::Keys;
use smscorpus::model::{
    AgeBucket, CollectionMethod, Gender, Language, Message, Source, Status, SubmissionBatch, UserProfile,
};
use smscorpus::pipeline::{submit, IntakeConfig, Submission, SubmitOutcome};
use smscorpus::store::{CorpusState, Store};
use smscorpus::validate::{Blocklist, Policy};

/// Adds one contributor's batch of `n` messages directly to `state`.
#[allow(clippy::too_many_arguments)]
pub fn push_batch(
    state: &mut CorpusState,
    batch_id: &str,
    contributor: &str,
    source: Source,
    method: CollectionMethod,
    language: Language,
    n: u64,
    profile: Option<UserProfile>,
    status: Status,
) {
    let profile_id = profile.as_ref().map(|p| p.id.clone());
    if let Some(p) = profile {
        state.profiles.insert(p.id.clone(), p);
    }
    let body = match language {
        Language::Chinese => "晚上一起吃饭吧",
        _ => "see you at the canteen later",
    };
    let mut ids = Vec::with_capacity(n as usize);
    for i in 0..n {
        let id = format!("{batch_id}-{:05}", i + 1);
        state.messages.insert(
            id.clone(),
            Message {
                id: id.clone(),
                batch_id: batch_id.to_string(),
                body: body.to_string(),
                language,
                sender_token: None,
                receiver_token: None,
                sent_at: None,
                collection_method: method,
                source,
                profile_id: profile_id.clone(),
                status,
            },
        );
        ids.push(id);
    }
    let received_at =
        Utc.with_ymd_and_hms(2011, 9, 1, 0, 0, 0).unwrap() + chrono::Duration::seconds(state.batches.len() as i64);
    state.batches.insert(
        batch_id.to_string(),
        SubmissionBatch {
            id: batch_id.to_string(),
            contributor_ref: contributor.to_string(),
            collection_method: method,
            source,
            received_at,
            message_ids: ids,
            status,
            rejection_reason: None,
            reward: None,
        },
    );
}

/// `total` split over `k` parts as evenly as possible.
pub fn split(total: u64, k: u64) -> Vec<u64> {
    (0..k).map(|i| total / k + u64::from(i < total % k)).collect()
}

struct Group {
    source: Source,
    method: CollectionMethod,
    sizes: Vec<u64>,
    age: AgeBucket,
    gender: Gender,
}

fn group(source: Source, method: CollectionMethod, count: usize, size: u64, age: AgeBucket, gender: Gender) -> Group {
    Group {
        source,
        method,
        sizes: vec![size; count],
        age,
        gender,
    }
}

/// English contributors laid out so that the method, source, age and gender
/// totals reported for the English corpus all hold at once.
fn english_groups() -> Vec<Group> {
    use AgeBucket::{From16To20 as Young, From21To25 as Core};
    use CollectionMethod::*;
    use Gender::{Female as F, Male as M, Unknown as U};
    use Source::*;
    vec![
        group(Shorttask, Transcription, 16, 16, Young, U),
        group(Shorttask, Transcription, 1, 24, Core, M),
        group(Mturk, Transcription, 7, 5, Core, F),
        group(Mturk, Transcription, 18, 5, Core, M),
        group(Mturk, Transcription, 15, 5, Young, M),
        group(Mturk, Export, 6, 10, Young, M),
        group(Mturk, Upload, 9, 380, Young, U),
        group(Mturk, Upload, 19, 380, Young, M),
        group(Mturk, Upload, 1, 375, Core, M),
        group(Community, Export, 4, 117, Young, M),
        group(Local, Export, 11, 881, Core, M),
        group(Local, Export, 1, 885, Young, M),
        group(Local, Upload, 6, 765, Core, F),
        group(Local, Upload, 1, 765, Core, M),
        group(Local, Upload, 1, 770, Core, M),
    ]
}

fn chinese_groups() -> Vec<(Source, CollectionMethod, Vec<u64>)> {
    use CollectionMethod::*;
    use Source::*;
    vec![
        (Mturk, Transcription, split(55, 19)),
        (Zhubajie, Transcription, split(15_698, 400)),
        (Zhubajie, Export, split(8_091, 83)),
        (Local, Export, split(2_541, 7)),
        (Local, Upload, split(1_003, 3)),
        (Community, Export, split(1_712, 3)),
    ]
}

/// Approved corpus with the published totals: 28,724 English messages from
/// 116 contributors and 29,100 Chinese messages from 515 contributors.
pub fn paper_corpus() -> CorpusState {
    let mut state = CorpusState::default();
    let mut k = 0;
    for g in english_groups() {
        for n in g.sizes {
            k += 1;
            let mut profile = UserProfile::unknown(format!("pe{k:03}"));
            profile.age = g.age;
            profile.gender = g.gender;
            let batch = format!("e{k:03}");
            push_batch(
                &mut state,
                &batch,
                &format!("en-{k}"),
                g.source,
                g.method,
                Language::English,
                n,
                Some(profile),
                Status::Approved,
            );
        }
    }
    let mut k = 0;
    for (source, method, sizes) in chinese_groups() {
        for n in sizes {
            k += 1;
            let batch = format!("z{k:03}");
            push_batch(
                &mut state,
                &batch,
                &format!("zh-{k}"),
                source,
                method,
                Language::Chinese,
                n,
                None,
                Status::Approved,
            );
        }
    }
    state
}

/// Five approved and three rejected web-transcription batches from MTurk.
pub fn approval_fixture() -> CorpusState {
    let mut state = CorpusState::default();
    for i in 0..8 {
        let status = if i < 5 { Status::Approved } else { Status::Rejected };
        push_batch(
            &mut state,
            &format!("t{i}"),
            &format!("w{i}"),
            Source::Mturk,
            CollectionMethod::Transcription,
            Language::English,
            5,
            None,
            status,
        );
    }
    state
}

/// A store with fresh keys and default policy.
pub struct Env {
    pub dir: tempfile::TempDir,
    pub store: Store,
    pub keys: Keys,
    pub blocklist: Blocklist,
    pub policy: Policy,
}

impl Env {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path().join("store")).unwrap();
        Env {
            dir,
            store,
            keys: Keys::generate(),
            blocklist: Blocklist::builtin(),
            policy: Policy::default(),
        }
    }

    pub fn intake(&self) -> IntakeConfig<'_> {
        IntakeConfig {
            keys: &self.keys,
            bounds: TranscriptionBounds::default(),
            blocklist: &self.blocklist,
            policy: &self.policy,
        }
    }

    /// Submits bodies as a phone-export CSV with a survey profile.
    pub fn submit_export(&self, contributor: &str, bodies: &[&str]) -> SubmitOutcome {
        submit(&self.store, export_submission(contributor, bodies), &self.intake()).unwrap()
    }
}

pub fn export_csv(bodies: &[&str]) -> String {
    let mut out = String::from("direction,peer_number,timestamp,body\n");
    for (i, b) in bodies.iter().enumerate() {
        let quoted = b.replace('"', "\"\"");
        out.push_str(&format!(
            "sent,+659{:07},2011-01-19T12:{:02}:00+08:00,\"{quoted}\"\n",
            1_000_000 + i,
            i % 60
        ));
    }
    out
}

pub fn export_submission(contributor: &str, bodies: &[&str]) -> Submission {
    let mut profile = UserProfile::unknown("");
    profile.age = AgeBucket::From21To25;
    profile.gender = Gender::Female;
    Submission {
        method: CollectionMethod::Export,
        source: Source::Local,
        contributor: contributor.to_string(),
        payload: export_csv(bodies).into_bytes(),
        profile: Some(profile),
        profile_id: None,
    }
}

/// Distinct English bodies with no digits, so nothing gets scrubbed.
pub fn english_bodies(n: usize, seed: &str) -> Vec<String> {
    const WORDS: &[&str] = &[
        "lunch", "later", "bring", "umbrella", "library", "tonight", "movie", "dinner", "bus", "late", "sorry",
        "meeting", "class", "project", "weekend", "beach", "coffee", "tired", "exam", "shopping",
    ];
    (0..n)
        .map(|i| {
            let a = WORDS[i % WORDS.len()];
            let b = WORDS[(i / WORDS.len()) % WORDS.len()];
            let c = WORDS[(i * 7 + 3) % WORDS.len()];
            format!("{seed} {a} {b} {c} ok {}", roman(i + 1))
        })
        .collect()
}

/// Lower-case letters spelling `n`, to keep bodies distinct without digits.
fn roman(mut n: usize) -> String {
    let mut s = String::new();
    while n > 0 {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
    }
    s
}

/// A temp directory holding a store and a generated key file, driven
/// through the `smscorpus` binary.
pub struct CliEnv {
    pub dir: tempfile::TempDir,
}

pub struct Run {
    pub ok: bool,
    pub stdout: String,
    pub stderr: String,
}

impl CliEnv {
    pub fn new() -> Self {
        let env = CliEnv {
            dir: tempfile::tempdir().unwrap(),
        };
        env.ok(&["keygen"]);
        env
    }

    pub fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    pub fn store_path(&self) -> std::path::PathBuf {
        self.path("store")
    }

    pub fn keys(&self) -> Keys {
        Keys::load(&self.path("smscorpus.keys")).unwrap()
    }

    pub fn run(&self, args: &[&str]) -> Run {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_smscorpus"))
            .args(args)
            .env("SMSCORPUS_STORE", self.store_path())
            .env("SMSCORPUS_KEYS", self.path("smscorpus.keys"))
            .env_remove("SMSCORPUS_POLICY")
            .env_remove("SMSCORPUS_BLOCKLIST")
            .env_remove("SMSCORPUS_SCHEMES")
            .output()
            .unwrap();
        Run {
            ok: out.status.success(),
            stdout: String::from_utf8(out.stdout).unwrap(),
            stderr: String::from_utf8(out.stderr).unwrap(),
        }
    }

    /// Runs and requires exit code 0.
    pub fn ok(&self, args: &[&str]) -> String {
        let r = self.run(args);
        assert!(r.ok, "smscorpus {args:?} failed: {}", r.stderr);
        r.stdout
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> String {
        let path = self.path(name);
        std::fs::write(&path, contents).unwrap();
        path.to_str().unwrap().to_string()
    }
}

/// Value of `key` on a `key=value` output line. Quoted values are unescaped
/// for the simple cases the CLI produces.
pub fn field(line: &str, key: &str) -> Option<String> {
    let start = line.find(&format!("{key}="))? + key.len() + 1;
    let rest = &line[start..];
    if let Some(q) = rest.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = q.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => out.push(chars.next()?),
                '"' => return Some(out),
                c => out.push(c),
            }
        }
        None
    } else {
        Some(rest.split(' ').next().unwrap_or("").to_string())
    }
}

const HAN: &[char] = &[
    '晚', '上', '一', '起', '吃', '饭', '明', '天', '见', '我', '们', '去', '看', '电', '影', '好',
];

/// Distinct Chinese bodies built from a small character set.
pub fn chinese_bodies(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let pick = |k: usize| HAN[(i * 7 + k * 5 + i / HAN.len() * 3 + k * k) % HAN.len()];
            let mut s: String = (0..6).map(pick).collect();
            s.push_str(&format!("，第{}次", i + 10));
            s
        })
        .collect()
}

/// Paths of the four submissions making up the 50-message mixed fixture
/// with their CLI ingest arguments.
pub struct MixedFixture {
    pub submissions: Vec<Vec<String>>,
    pub schemes: Vec<&'static str>,
}

pub fn mixed_fixture(env: &CliEnv) -> MixedFixture {
    let profile = env.write(
        "profile.txt",
        "age=21-25\ngender=female\ncountry=Singapore\nnative_speaker=yes\n",
    );
    let zh_profile = env.write("profile-zh.txt", "age=16-20\ngender=male\ncountry=China\n");

    // 20 English exports with contact details to scrub.
    let en: Vec<String> = english_bodies(20, "csv")
        .into_iter()
        .enumerate()
        .map(|(i, b)| match i % 4 {
            0 => format!("{b} mail me at friend{i}@gmail.com"),
            1 => format!("{b} see you at 12:{:02}", i + 10),
            2 => format!("{b} acct {}", 4000 + i),
            _ => b,
        })
        .collect();
    let en_refs: Vec<&str> = en.iter().map(String::as_str).collect();
    let csv = env.write("export.csv", export_csv(&en_refs));

    // 20 Chinese messages typed into the web form.
    let zh = serde_json::json!({"language": "chinese", "messages": chinese_bodies(20)});
    let zh_form = env.write("form-zh.json", zh.to_string());

    // 5 English messages typed into the web form.
    let en_form = serde_json::json!({"language": "english", "messages": english_bodies(5, "form")});
    let en_form = env.write("form-en.json", en_form.to_string());

    // 5 mixed-language messages from the phone app.
    let keys = env.keys();
    let messages: Vec<smscorpus::ingest::RawMessage> = (0..5)
        .map(|i| smscorpus::ingest::RawMessage {
            body_raw: format!("ok 好的 see you at gate {}", ["a", "b", "c", "d", "e"][i]),
            sender_raw: None,
            receiver_raw: Some(format!("peer{i}")),
            sent_at: None,
        })
        .collect();
    let draft = smscorpus::ingest::UploadDraft {
        verification_code: smscorpus::ingest::compute_upload_code(&keys.upload_secret, "device42", messages.len()),
        device_id_token: "device42".into(),
        messages,
    };
    let upload = env.write("draft.txt", smscorpus::ingest::render_upload_draft(&draft));

    let args = |file: String, method: &str, source: &str, who: &str, profile: &str| {
        [
            "ingest",
            &file,
            "--method",
            method,
            "--source",
            source,
            "--contributor",
            who,
            "--profile",
            profile,
        ]
        .map(String::from)
        .to_vec()
    };
    MixedFixture {
        submissions: vec![
            args(csv, "export", "local", "alice", &profile),
            args(zh_form, "transcription", "zhubajie", "worker-88", &zh_profile),
            args(en_form, "transcription", "mturk", "A2WORKER", &profile),
            args(upload, "upload", "mturk", "A3WORKER", &profile),
        ],
        schemes: vec!["local", "zhubajie1", "mturk", "mturk"],
    }
}
