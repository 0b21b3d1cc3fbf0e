//! `smscorpus` operator command line.
//!
//! Output is line-oriented `key=value` pairs; values with spaces or quotes
//! are double-quoted with backslash escapes. Failures print one
//! `error code=<code> detail="<text>"` line on stderr and exit 1.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smscorpus::anonymize::scrub_body;
use smscorpus::ingest::TranscriptionBounds;
use smscorpus::keys::Keys;
use smscorpus::model::{CollectionMethod, Language, Source, UserProfile, VersionId};
use smscorpus::pipeline::{submit, IntakeConfig, Submission};
use smscorpus::release::{diff_releases, load_release, publish_release, verify_release};
use smscorpus::rewards::{compute_reward, SchemeRegistry};
use smscorpus::service::{serve, AppState, ServiceConfig};
use smscorpus::stats::{breakdown, contributor_distribution, stats_report, Histogram, WeightBasis};
use smscorpus::store::Store;
use smscorpus::validate::{moderate, quality_report, Blocklist, Decision, Policy};

#[derive(Parser)]
#[command(name = "smscorpus", version, about = "Live SMS corpus toolchain")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "SMSCORPUS_STORE", default_value = "./corpus-store")]
    store: PathBuf,
    /// Secrets file with the pseudonym key, upload secret and maintainer token.
    #[arg(long, global = true, env = "SMSCORPUS_KEYS", default_value = "./smscorpus.keys")]
    keys: PathBuf,
    /// Validation policy file; built-in thresholds when absent.
    #[arg(long, global = true, env = "SMSCORPUS_POLICY")]
    policy: Option<PathBuf>,
    /// Blocklist of circulating messages, one per line; built-in list when absent.
    #[arg(long, global = true, env = "SMSCORPUS_BLOCKLIST")]
    blocklist: Option<PathBuf>,
    /// Directory of extra `*.scheme` reward files.
    #[arg(long, global = true, env = "SMSCORPUS_SCHEMES")]
    schemes: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a fresh secrets file.
    Keygen {
        /// Replace an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Parse, anonymize and store a submission as a pending batch.
    Ingest(IngestArgs),
    /// Replace sensitive spans in a text file, line by line.
    Scrub {
        file: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Quality report for a stored batch.
    Report {
        batch: String,
        #[arg(long)]
        json: bool,
    },
    /// Pending batches.
    Queue,
    /// Approve or reject a pending batch.
    Moderate {
        batch: String,
        decision: Decision,
        /// Reward scheme name or file used to price an approval.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        reason: Option<String>,
    },
    /// Reward for `n` messages under a scheme.
    Reward { scheme: String, n: u64 },
    /// Corpus statistics over approved messages.
    Stats {
        #[arg(long)]
        language: Option<Language>,
        /// Profile field to break down instead of the summary.
        #[arg(long)]
        breakdown: Option<String>,
        #[arg(long, default_value = "by_contributor")]
        by: WeightBasis,
        /// Print the full statistics document.
        #[arg(long)]
        json: bool,
    },
    #[command(subcommand)]
    Release(ReleaseCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Largest accepted submission payload in bytes.
        #[arg(long, default_value_t = smscorpus::service::DEFAULT_MAX_PAYLOAD)]
        max_payload: usize,
    },
}

#[derive(Args)]
struct IngestArgs {
    file: PathBuf,
    #[arg(long)]
    method: CollectionMethod,
    #[arg(long)]
    source: Source,
    /// Contributor reference (worker id, email hash, ...).
    #[arg(long)]
    contributor: String,
    /// Survey answers, one `field=value` per line.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Link the batch to a stored profile instead.
    #[arg(long, conflicts_with = "profile")]
    profile_id: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum ReleaseCommand {
    /// Build, write and register a release.
    Build { version: VersionId },
    /// Re-check a published release.
    Verify { version: VersionId },
    /// Changes between two published releases.
    Diff { from: VersionId, to: VersionId },
}

struct CliError {
    code: String,
    detail: String,
}

impl CliError {
    fn new(code: &str, detail: impl Display) -> Self {
        CliError {
            code: code.to_string(),
            detail: detail.to_string(),
        }
    }
}

macro_rules! coded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::new(e.code(), &e)
            }
        }
    )*};
}

coded!(
    smscorpus::store::StoreError,
    smscorpus::pipeline::SubmitError,
    smscorpus::validate::ModerationError,
    smscorpus::release::ReleaseError
);

type CliResult = Result<(), CliError>;

fn quote(value: &str) -> String {
    if value.is_empty()
        || value
            .chars()
            .any(|c| c.is_whitespace() || c == '"' || c == '=' || c.is_control())
    {
        format!("{value:?}")
    } else {
        value.to_string()
    }
}

fn line(pairs: &[(&str, &dyn Display)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| format!("{k}={}", quote(&v.to_string())))
        .collect::<Vec<_>>()
        .join(" ")
}

macro_rules! out {
    ($($k:literal => $v:expr),+ $(,)?) => {
        println!("{}", line(&[$(($k, &$v as &dyn Display)),+]))
    };
}

fn opt(v: &Option<impl Display>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::new("io_error", format!("{}: {e}", path.display())))
}

impl Cli {
    fn open_store(&self) -> Result<Store, CliError> {
        Ok(Store::open(&self.store)?)
    }

    fn load_keys(&self) -> Result<Keys, CliError> {
        Keys::load(&self.keys).map_err(|e| CliError::new("bad_keys", e))
    }

    fn load_policy(&self) -> Result<Policy, CliError> {
        match &self.policy {
            Some(p) => Policy::load(p).map_err(|e| CliError::new("bad_policy", e)),
            None => Ok(Policy::default()),
        }
    }

    fn load_blocklist(&self) -> Result<Blocklist, CliError> {
        match &self.blocklist {
            Some(p) => Blocklist::load(p).map_err(|e| CliError::new("io_error", format!("{}: {e}", p.display()))),
            None => Ok(Blocklist::builtin()),
        }
    }

    fn load_schemes(&self) -> Result<SchemeRegistry, CliError> {
        let mut registry = SchemeRegistry::builtin();
        if let Some(dir) = &self.schemes {
            registry.load_dir(dir).map_err(|e| CliError::new("bad_scheme", e))?;
        }
        Ok(registry)
    }
}

fn print_report(report: &smscorpus::validate::QualityReport) {
    out!(
        "batch" => report.batch_id,
        "size" => report.batch_size,
        "recommendation" => report.recommendation,
        "exact_dups" => report.exact_dup_count,
        "near_dups" => report.near_dup_count,
        "blocklist_hits" => report.blocklist_hit_count,
    );
    for (language, count) in &report.language_counts {
        out!("language" => language, "messages" => count);
    }
    for reason in &report.reasons {
        out!("reason" => reason);
    }
    for f in &report.flagged {
        out!("flag" => f.kind, "message" => f.message_id, "matched" => f.matched_id, "score" => format!("{:.3}", f.score));
    }
}

fn print_histogram(h: &Histogram) {
    for b in &h.buckets {
        out!(
            "dimension" => h.dimension,
            "basis" => h.weight_basis,
            "language" => opt(&h.language),
            "bucket" => b.label,
            "count" => b.count,
            "share" => format!("{:.1}", b.share),
        );
    }
}

fn ingest(cli: &Cli, args: &IngestArgs) -> CliResult {
    let keys = cli.load_keys()?;
    let policy = cli.load_policy()?;
    let blocklist = cli.load_blocklist()?;
    let store = cli.open_store()?;
    let profile = match &args.profile {
        Some(path) => {
            let text = String::from_utf8(read_file(path)?).map_err(|_| CliError::new("not_utf8", "profile file"))?;
            Some(UserProfile::from_answers("", &text).map_err(|e| CliError::new("invalid_profile", e))?)
        }
        None => None,
    };
    let submission = Submission {
        method: args.method,
        source: args.source,
        contributor: args.contributor.clone(),
        payload: read_file(&args.file)?,
        profile,
        profile_id: args.profile_id.clone(),
    };
    let config = IntakeConfig {
        keys: &keys,
        bounds: TranscriptionBounds::default(),
        blocklist: &blocklist,
        policy: &policy,
    };
    let outcome = submit(&store, submission, &config)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&outcome).expect("serializable"));
        return Ok(());
    }
    out!(
        "batch" => outcome.batch_id,
        "format" => outcome.detected_format.as_str(),
        "messages" => outcome.message_ids.len(),
        "profile" => opt(&outcome.profile_id),
        "recommendation" => outcome.report.recommendation,
    );
    for w in &outcome.warnings {
        out!("warning" => w);
    }
    print_report(&outcome.report);
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Keygen { force } => {
            if cli.keys.exists() && !force {
                return Err(CliError::new(
                    "keys_exist",
                    format!("{} exists; pass --force to replace it", cli.keys.display()),
                ));
            }
            let keys = Keys::generate();
            fs::write(&cli.keys, keys.render()).map_err(|e| CliError::new("io_error", e))?;
            out!("keys" => cli.keys.display(), "key_id" => keys.pseudonym_key.key_id());
        }
        Command::Ingest(args) => ingest(cli, args)?,
        Command::Scrub { file, output } => {
            let text = String::from_utf8(read_file(file)?).map_err(|_| CliError::new("not_utf8", file.display()))?;
            let mut scrubbed = text.lines().map(scrub_body).collect::<Vec<_>>().join("\n");
            if text.ends_with('\n') {
                scrubbed.push('\n');
            }
            match output {
                Some(path) => fs::write(path, scrubbed).map_err(|e| CliError::new("io_error", e))?,
                None => print!("{scrubbed}"),
            }
        }
        Command::Report { batch, json } => {
            let store = cli.open_store()?;
            let report = quality_report(&store.snapshot(), batch, &cli.load_blocklist()?, &cli.load_policy()?)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
            } else {
                print_report(&report);
            }
        }
        Command::Queue => {
            let state = cli.open_store()?.snapshot();
            for b in state.pending_batches() {
                out!(
                    "batch" => b.id,
                    "received" => b.received_at.to_rfc3339(),
                    "method" => b.collection_method,
                    "source" => b.source,
                    "messages" => b.message_ids.len(),
                    "profile" => state.batch_profile(b).is_some(),
                );
            }
        }
        Command::Moderate {
            batch,
            decision,
            scheme,
            reason,
        } => {
            let reason = reason
                .as_deref()
                .map(str::trim)
                .filter(|r| !r.is_empty())
                .map(String::from);
            if *decision == Decision::Reject && reason.is_none() {
                return Err(CliError::new("missing_reason", "a rejection needs --reason"));
            }
            let scheme = match scheme {
                Some(name) if *decision == Decision::Approve => Some(
                    cli.load_schemes()?
                        .resolve(name)
                        .map_err(|e| CliError::new("unknown_scheme", e))?,
                ),
                _ => None,
            };
            let store = cli.open_store()?;
            let outcome = moderate(&store, batch, *decision, reason, scheme.as_ref(), &cli.load_policy()?)?;
            let b = &outcome.batch;
            match (&outcome.reward, &b.reward) {
                (Some(r), _) => out!(
                    "batch" => b.id,
                    "status" => b.status,
                    "reward" => r.amount.amount_string(),
                    "currency" => r.amount.currency,
                    "below_minimum" => r.below_minimum,
                ),
                (None, Some(m)) => out!(
                    "batch" => b.id,
                    "status" => b.status,
                    "reward" => m.amount_string(),
                    "currency" => m.currency,
                ),
                (None, None) => out!("batch" => b.id, "status" => b.status, "reason" => opt(&b.rejection_reason)),
            }
        }
        Command::Reward { scheme, n } => {
            let scheme = cli
                .load_schemes()?
                .resolve(scheme)
                .map_err(|e| CliError::new("unknown_scheme", e))?;
            let r = compute_reward(&scheme, *n);
            out!(
                "scheme" => scheme.name,
                "n" => n,
                "reward" => r.amount.amount_string(),
                "currency" => r.amount.currency,
                "below_minimum" => r.below_minimum,
                "bracket" => opt(&r.bracket),
            );
        }
        Command::Stats {
            language,
            breakdown: field,
            by,
            json,
        } => {
            let state = cli.open_store()?.snapshot();
            if *json {
                print!("{}", stats_report(&state).to_json());
            } else if let Some(field) = field {
                let h = breakdown(&state, field, *by, *language).map_err(|e| CliError::new("unknown_dimension", e))?;
                print_histogram(&h);
            } else {
                let report = stats_report(&state);
                for l in &report.summary.languages {
                    if language.is_some_and(|x| x != l.language) {
                        continue;
                    }
                    let mean = l.mean_per_contributor.map(|m| format!("{m:.1}"));
                    out!(
                        "language" => l.language,
                        "messages" => l.messages,
                        "contributors" => l.contributors,
                        "mean_per_contributor" => opt(&mean),
                    );
                }
                if language.is_none() {
                    out!(
                        "total_messages" => report.summary.total_messages,
                        "total_contributors" => report.summary.total_contributors,
                    );
                }
                print_histogram(&contributor_distribution(&state, *language));
            }
        }
        Command::Release(ReleaseCommand::Build { version }) => {
            let store = cli.open_store()?;
            let built = publish_release(&store, *version)?;
            out!(
                "version" => built.version.version_id,
                "created" => built.version.created_at.to_rfc3339(),
                "english" => built.version.message_count_en,
                "chinese" => built.version.message_count_zh,
            );
            for a in &built.artifacts {
                out!("artifact" => a.name, "sha256" => a.digest, "bytes" => a.bytes.len());
            }
        }
        Command::Release(ReleaseCommand::Verify { version }) => {
            let store = cli.open_store()?;
            let report = verify_release(&store, *version)?;
            for c in &report.checks {
                out!("check" => c.name, "ok" => c.ok, "detail" => c.detail);
            }
            if !report.passed() {
                return Err(CliError::new(
                    "verify_failed",
                    format!("release {version} failed verification"),
                ));
            }
            out!("version" => version, "verified" => true);
        }
        Command::Release(ReleaseCommand::Diff { from, to }) => {
            let store = cli.open_store()?;
            let old = load_release(store.root(), *from)?.content;
            let new = load_release(store.root(), *to)?.content;
            let log = diff_releases(&old, &new)?;
            for id in &log.added_messages {
                out!("added_message" => id);
            }
            for id in &log.removed_messages {
                out!("removed_message" => id);
            }
            for id in &log.added_profiles {
                out!("added_profile" => id);
            }
            for (language, delta) in &log.count_deltas {
                out!("language" => language, "delta" => delta);
            }
        }
        Command::Serve {
            port,
            bind,
            max_payload,
        } => {
            let mut config = ServiceConfig::new(cli.load_keys()?);
            config.policy = cli.load_policy()?;
            config.blocklist = cli.load_blocklist()?;
            config.schemes = cli.load_schemes()?;
            config.max_payload = *max_payload;
            let state = AppState::new(cli.open_store()?, config);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::new("io_error", e))?;
            runtime
                .block_on(async {
                    let listener = tokio::net::TcpListener::bind((bind.as_str(), *port)).await?;
                    out!("listening" => listener.local_addr()?);
                    serve(listener, state).await
                })
                .map_err(|e| CliError::new("io_error", e))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error {}", line(&[("code", &e.code), ("detail", &e.detail)]));
            ExitCode::FAILURE
        }
    }
}
