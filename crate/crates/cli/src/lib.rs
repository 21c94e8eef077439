//! Pipeline commands behind the `trajrec` binary.
//!
//! Every command resolves its parameters (flag, then `--config` file, then
//! built-in default), computes all outputs in memory, and only then writes
//! into `--out`. The resolved parameters are recorded in
//! `manifest-<command>.txt` next to the outputs.

mod settings;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use trajrec::eval::{write_steps, write_user_summary, PooledSummary, DEFAULT_TAU};
use trajrec::profile::{
    build_series, parse_timestamp, read_events, read_profiles, write_events, write_profiles,
    Normalization, ProfileSeries,
};
use trajrec::recommend::{filter_catalog, Program, DEFAULT_THETA};
use trajrec::synthetic::{generate_events, simulate, synthetic_vocabulary, Regime, ScenarioConfig};
use trajrec::tracker::{read_record, track_all, write_record, TrackMethod, DEFAULT_P0};
use trajrec::{
    concept_deltas, evaluate, recommend, ConceptSpace, Execution, NoiseShape, TrackingModel,
};

use settings::Manifest;
pub use settings::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] trajrec::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Core(trajrec::Error::Io(_)) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "trajrec",
    version,
    about = "Track user interest through genre space and recommend by its drift"
)]
pub struct Cli {
    /// key=value file supplying defaults for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if absent)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic trajectories and the matching watch-event log
    Simulate(SimulateArgs),
    /// Fold a watch-event log into per-user profile snapshots
    BuildProfiles(BuildArgs),
    /// Run the predictor over every user's profile series
    Track(TrackArgs),
    /// Recommend genres for one day
    Recommend(RecommendArgs),
    /// Score tracked predictions against the profiles
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    #[value(name = "smooth_drift")]
    SmoothDrift,
    #[value(name = "regime_change")]
    RegimeChange,
    Bursty,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::SmoothDrift => Regime::SmoothDrift,
            RegimeArg::RegimeChange => Regime::RegimeChange,
            RegimeArg::Bursty => Regime::Bursty,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub q_true: Option<f64>,
    #[arg(long)]
    pub r_true: Option<f64>,
    #[arg(long, value_enum)]
    pub regime: Option<RegimeArg>,
    #[arg(long)]
    pub programs_per_day: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Snapshot instants, one per line (epoch seconds or ISO-8601)
    #[arg(long)]
    pub instants: Option<PathBuf>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long, value_enum)]
    pub normalize: Option<NormalizeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizeArg {
    None,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    WhiteAcceleration,
    Diagonal,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Sampling interval
    #[arg(long = "dt")]
    pub dt: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Run one three-state filter per genre instead of the dense filter
    #[arg(long)]
    pub decoupled: bool,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct RecommendArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Watch-event log; events on --date make up "watched today"
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Day to recommend for (YYYY-MM-DD, UTC)
    #[arg(long)]
    pub date: Option<String>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Program catalog: CSV with columns program_id,genres
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Directory of per-user track CSVs written by `track`
    #[arg(long)]
    pub tracks: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let settings = match &cli.config {
        Some(p) => Settings::parse(&read_text(p)?, &p.display().to_string())?,
        None => Settings::default(),
    };
    let mut manifest = Manifest::default();
    if let Some(p) = &cli.config {
        manifest.note("config", p.display().to_string());
    }
    let out: PathBuf =
        settings.resolve(&mut manifest, "out", cli.out.clone(), || PathBuf::from("."))?;
    let seed_flag = cli.seed;
    let (name, files) = match cli.command {
        Command::Simulate(a) => (
            "simulate",
            cmd_simulate(&settings, &mut manifest, seed_flag, a)?,
        ),
        Command::BuildProfiles(a) => ("build-profiles", cmd_build(&settings, &mut manifest, a)?),
        Command::Track(a) => ("track", cmd_track(&settings, &mut manifest, a)?),
        Command::Recommend(a) => ("recommend", cmd_recommend(&settings, &mut manifest, a)?),
        Command::Evaluate(a) => ("evaluate", cmd_evaluate(&settings, &mut manifest, a)?),
    };
    let mut files = files;
    files.push((
        format!("manifest-{name}.txt"),
        manifest.render(name).into_bytes(),
    ));
    write_outputs(&out, &files)
}

type Outputs = Vec<(String, Vec<u8>)>;

fn write_outputs(out: &Path, files: &Outputs) -> Result<()> {
    for (rel, bytes) in files {
        let path = out.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        fs::write(&path, bytes).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

fn cmd_simulate(
    settings: &Settings,
    m: &mut Manifest,
    seed: Option<u64>,
    a: SimulateArgs,
) -> Result<Outputs> {
    let def = ScenarioConfig::default();
    let cfg = ScenarioConfig {
        d: settings.resolve(m, "d", a.d, || def.d)?,
        k: settings.resolve(m, "k", a.k, || def.k)?,
        n_users: settings.resolve(m, "users", a.users, || def.n_users)?,
        q_true: settings.resolve(m, "q_true", a.q_true, || def.q_true)?,
        r_true: settings.resolve(m, "r_true", a.r_true, || def.r_true)?,
        regime: settings.resolve(m, "regime", a.regime.map(Regime::from), || def.regime)?,
        seed: settings.resolve(m, "seed", seed, || def.seed)?,
        ..def
    };
    let ppd: usize = settings.resolve(m, "programs_per_day", a.programs_per_day, || 100)?;
    cfg.validate()?;

    let space = synthetic_vocabulary(cfg.d);
    let users = simulate(&cfg, Execution::default())?;
    let map: BTreeMap<String, ProfileSeries> = users
        .iter()
        .map(|u| (u.user_id.clone(), u.series.clone()))
        .collect();
    let events = generate_events(&map, &space, ppd, cfg.seed)?;

    let mut traj = Vec::new();
    write_profiles(&mut traj, &space, map.values())?;
    let mut ev = Vec::new();
    write_events(&mut ev, &events)?;
    let instants: String = cfg.instants().iter().map(|t| format!("{t}\n")).collect();
    Ok(vec![
        (
            "vocabulary.txt".into(),
            space.to_file_contents().into_bytes(),
        ),
        ("instants.txt".into(), instants.into_bytes()),
        ("scenario.txt".into(), cfg.to_key_values().into_bytes()),
        ("trajectories.csv".into(), traj),
        ("events.csv".into(), ev),
    ])
}

fn load_space(
    settings: &Settings,
    m: &mut Manifest,
    flag: Option<PathBuf>,
) -> Result<ConceptSpace> {
    let path = settings.require_path(m, "vocab", flag)?;
    Ok(ConceptSpace::new(
        read_text(&path)?
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty()),
    )?)
}

fn load_profiles(
    settings: &Settings,
    m: &mut Manifest,
    flag: Option<PathBuf>,
    space: &ConceptSpace,
) -> Result<BTreeMap<String, ProfileSeries>> {
    let path = settings.require_path(m, "profiles", flag)?;
    let profiles = read_profiles(open(&path)?, space, &path.display().to_string())?;
    if profiles.is_empty() {
        return Err(input(format!("{}: no profile rows", path.display())));
    }
    Ok(profiles)
}

fn cmd_build(settings: &Settings, m: &mut Manifest, a: BuildArgs) -> Result<Outputs> {
    let space = load_space(settings, m, a.vocab)?;
    let events_path = settings.require_path(m, "events", a.events)?;
    let instants_path = settings.require_path(m, "instants", a.instants)?;
    let decay: f64 = settings.resolve(m, "decay", a.decay, || 1.0)?;
    let normalization =
        match settings.resolve(m, "normalize", a.normalize, || NormalizeArg::None)? {
            NormalizeArg::None => Normalization::None,
            NormalizeArg::Max => Normalization::Max,
        };

    let events = read_events(open(&events_path)?, &events_path.display().to_string())?;
    let instants = read_text(&instants_path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_timestamp(l).ok_or_else(|| {
                input(format!(
                    "{}:{}: bad instant {l:?}",
                    instants_path.display(),
                    i + 1
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let built = build_series(&events, &space, &instants, decay)?;
    let built: Vec<ProfileSeries> = built.values().map(|s| normalization.apply(s)).collect();
    let mut buf = Vec::new();
    write_profiles(&mut buf, &space, &built)?;
    Ok(vec![("profiles.csv".into(), buf)])
}

struct ModelChoice {
    model: TrackingModel,
    p0: f64,
    method: TrackMethod,
}

fn resolve_model(
    settings: &Settings,
    m: &mut Manifest,
    a: ModelArgs,
    d: usize,
) -> Result<ModelChoice> {
    let dt = settings.resolve(m, "dt", a.dt, || 1.0)?;
    let alpha = settings.resolve(m, "alpha", a.alpha, || 1.0)?;
    let q = settings.resolve(m, "q", a.q, || 0.001)?;
    let r = settings.resolve(m, "r", a.r, || 0.01)?;
    let p0 = settings.resolve(m, "p0", a.p0, || DEFAULT_P0)?;
    let shape = match settings.resolve(m, "noise", a.noise, || NoiseArg::WhiteAcceleration)? {
        NoiseArg::WhiteAcceleration => NoiseShape::WhiteAcceleration,
        NoiseArg::Diagonal => NoiseShape::Diagonal,
    };
    let decoupled: bool =
        settings.resolve(m, "decoupled", a.decoupled.then_some(true), || false)?;
    Ok(ModelChoice {
        model: TrackingModel::new(d, dt, alpha, q, r, shape)?,
        p0,
        method: if decoupled {
            TrackMethod::Decoupled
        } else {
            TrackMethod::Dense
        },
    })
}

fn safe_file_stem(user: &str) -> Result<&str> {
    let ok = !user.is_empty()
        && !user.starts_with('.')
        && user
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(user)
    } else {
        Err(input(format!(
            "user id {user:?} cannot be used as a file name (allowed: A-Z a-z 0-9 _ - .)"
        )))
    }
}

/// Users with at least two snapshots, in id order.
fn trackable(profiles: &BTreeMap<String, ProfileSeries>) -> Vec<ProfileSeries> {
    profiles
        .values()
        .filter(|s| s.len() >= 2)
        .cloned()
        .collect()
}

fn cmd_track(settings: &Settings, m: &mut Manifest, a: TrackArgs) -> Result<Outputs> {
    let space = load_space(settings, m, a.vocab)?;
    let profiles = load_profiles(settings, m, a.profiles, &space)?;
    let choice = resolve_model(settings, m, a.model, space.dim())?;
    let series = trackable(&profiles);
    if series.is_empty() {
        return Err(input("no user has the two snapshots needed for tracking"));
    }
    m.note("skipped_users", (profiles.len() - series.len()).to_string());
    let records = track_all(
        Execution::default(),
        choice.method,
        &choice.model,
        &series,
        choice.p0,
    )?;
    records
        .iter()
        .map(|rec| {
            let mut buf = Vec::new();
            write_record(&mut buf, &space, rec)?;
            Ok((format!("tracks/{}.csv", safe_file_stem(&rec.user_id)?), buf))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct RecommendationLine<'a> {
    user_id: &'a str,
    date: String,
    promoted: &'a [String],
    demoted: &'a [String],
    excluded_watched: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    programs: Option<Vec<&'a str>>,
}

fn read_catalog(path: &Path) -> Result<Vec<Program>> {
    let text = read_text(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "program_id,genres" => {}
        _ => {
            return Err(input(format!(
                "{}: expected header program_id,genres",
                path.display()
            )))
        }
    }
    lines
        .map(|l| {
            let (id, genres) = l
                .split_once(',')
                .ok_or_else(|| input(format!("{}: bad catalog row {l:?}", path.display())))?;
            Ok(Program {
                id: id.trim().to_string(),
                genres: genres
                    .split(';')
                    .map(|g| g.trim().to_string())
                    .filter(|g| !g.is_empty())
                    .collect(),
            })
        })
        .collect()
}

fn cmd_recommend(settings: &Settings, m: &mut Manifest, a: RecommendArgs) -> Result<Outputs> {
    let space = load_space(settings, m, a.vocab)?;
    let profiles = load_profiles(settings, m, a.profiles, &space)?;
    let date_str: String = settings.resolve(m, "date", a.date, String::new)?;
    let date = NaiveDate::parse_from_str(&date_str, "%Y-%m-%d")
        .map_err(|_| input(format!("--date must be YYYY-MM-DD, got {date_str:?}")))?;
    let day_start = date
        .and_hms_opt(0, 0, 0)
        .expect("midnight")
        .and_utc()
        .timestamp();
    let day_end = day_start + 86_400;
    let theta: f64 = settings.resolve(m, "theta", a.theta, || DEFAULT_THETA)?;
    let choice = resolve_model(settings, m, a.model, space.dim())?;

    let mut watched: BTreeMap<String, Vec<String>> = BTreeMap::new();
    if let Some(path) = settings.optional_path(m, "events", a.events)? {
        for ev in read_events(open(&path)?, &path.display().to_string())? {
            if (day_start..day_end).contains(&ev.timestamp) && ev.watched_fraction > 0.0 {
                watched.entry(ev.user_id).or_default().extend(ev.genres);
            }
        }
    }
    for genres in watched.values_mut() {
        genres.sort();
        genres.dedup();
    }
    let catalog = match settings.optional_path(m, "catalog", a.catalog)? {
        Some(p) => Some(read_catalog(&p)?),
        None => None,
    };

    let history: Vec<ProfileSeries> = profiles
        .values()
        .filter_map(|s| s.truncated_before(day_start))
        .filter(|s| s.len() >= 2)
        .collect();
    let records = track_all(
        Execution::default(),
        choice.method,
        &choice.model,
        &history,
        choice.p0,
    )?;

    let mut out = String::new();
    for (s, rec) in history.iter().zip(&records) {
        let calculated = s.profiles().last().expect("non-empty");
        let deltas = concept_deltas(&rec.forecast(), calculated, theta)?;
        let today = watched.get(s.user_id()).map(Vec::as_slice).unwrap_or(&[]);
        let r = recommend(s.user_id(), &deltas, today, &space)?;
        let programs = catalog.as_ref().map(|c| {
            filter_catalog(&r, c)
                .into_iter()
                .map(|p| p.id.as_str())
                .collect()
        });
        let line = RecommendationLine {
            user_id: &r.user_id,
            date: date.format("%Y-%m-%d").to_string(),
            promoted: &r.promoted,
            demoted: &r.demoted,
            excluded_watched: &r.excluded_watched,
            programs,
        };
        out.push_str(&serde_json::to_string(&line).expect("serializable"));
        out.push('\n');
    }
    m.note("users_recommended", records.len().to_string());
    Ok(vec![("recommendations.jsonl".into(), out.into_bytes())])
}

fn cmd_evaluate(settings: &Settings, m: &mut Manifest, a: EvaluateArgs) -> Result<Outputs> {
    let space = load_space(settings, m, a.vocab)?;
    let profiles = load_profiles(settings, m, a.profiles, &space)?;
    let tracks = settings.require_path(m, "tracks", a.tracks)?;
    let tau: f64 = settings.resolve(m, "tau", a.tau, || DEFAULT_TAU)?;

    let mut reports = Vec::new();
    for s in trackable(&profiles) {
        let path = tracks.join(format!("{}.csv", safe_file_stem(s.user_id())?));
        let rows = read_record(open(&path)?, &space, &path.display().to_string())?;
        let aligned = rows.iter().enumerate().all(|(j, r)| r.step == j + 1);
        if rows.len() != s.len() - 1 || !aligned {
            return Err(input(format!(
                "{}: expected steps 1..{} to match the profile series",
                path.display(),
                s.len() - 1
            )));
        }
        let preds: Vec<_> = rows.into_iter().map(|r| r.predicted).collect();
        reports.push(evaluate(&s, &preds, tau)?);
    }
    if reports.is_empty() {
        return Err(input("no user has the two snapshots needed for evaluation"));
    }
    let summary = PooledSummary::from_reports(&reports, tau);
    let mut steps = Vec::new();
    write_steps(&mut steps, &reports)?;
    let mut users = Vec::new();
    write_user_summary(&mut users, &reports)?;
    Ok(vec![
        ("eval_steps.csv".into(), steps),
        ("eval_users.csv".into(), users),
        (
            "eval_summary.txt".into(),
            summary.to_key_values().into_bytes(),
        ),
    ])
}
