//! Folding watch events into per-user interest profiles.
//!
//! A profile gains `watched_fraction / |genres|` on each genre of a viewed
//! program, after every axis is multiplied by `decay`. Snapshots taken at a
//! list of instants form the observation sequence handed to the tracker.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;
use crate::par::Execution;
use crate::space::{ConceptSpace, InterestVector};

/// One viewing of one program by one user. Timestamps are epoch seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchEvent {
    pub user_id: String,
    pub timestamp: i64,
    pub genres: Vec<String>,
    pub watched_fraction: f64,
}

impl WatchEvent {
    pub fn new(
        user_id: impl Into<String>,
        timestamp: i64,
        genres: Vec<String>,
        watched_fraction: f64,
    ) -> Result<Self> {
        let ev = Self {
            user_id: user_id.into(),
            timestamp,
            genres,
            watched_fraction,
        };
        ev.validate()?;
        Ok(ev)
    }

    pub fn validate(&self) -> Result<()> {
        if self.genres.is_empty() {
            return Err(Error::invalid(
                "genres",
                "a program needs at least one genre",
            ));
        }
        if !(0.0..=1.0).contains(&self.watched_fraction) {
            return Err(Error::invalid(
                "watched_fraction",
                format!("{} is outside [0, 1]", self.watched_fraction),
            ));
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("event of user {:?} at {}", self.user_id, self.timestamp)
    }

    /// Total order on event content used to make folding independent of
    /// input order.
    fn fold_order(&self, other: &Self) -> Ordering {
        self.timestamp
            .cmp(&other.timestamp)
            .then_with(|| self.genres.cmp(&other.genres))
            .then_with(|| self.watched_fraction.total_cmp(&other.watched_fraction))
    }
}

/// Snapshots of one user's profile at strictly increasing instants.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeries {
    user_id: String,
    instants: Vec<i64>,
    profiles: Vec<InterestVector>,
}

impl ProfileSeries {
    pub fn new(
        user_id: impl Into<String>,
        instants: Vec<i64>,
        profiles: Vec<InterestVector>,
    ) -> Result<Self> {
        if instants.is_empty() {
            return Err(Error::EmptyInstants);
        }
        if instants.len() != profiles.len() {
            return Err(Error::LengthMismatch {
                what: "profiles",
                expected: instants.len(),
                found: profiles.len(),
            });
        }
        check_increasing(&instants)?;
        let d = profiles[0].dim();
        if let Some(bad) = profiles.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        Ok(Self {
            user_id: user_id.into(),
            instants,
            profiles,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn instants(&self) -> &[i64] {
        &self.instants
    }

    pub fn profiles(&self) -> &[InterestVector] {
        &self.profiles
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.profiles[0].dim()
    }

    /// Keeps only snapshots taken strictly before `cutoff`.
    pub fn truncated_before(&self, cutoff: i64) -> Option<Self> {
        let n = self.instants.partition_point(|&t| t < cutoff);
        (n > 0).then(|| Self {
            user_id: self.user_id.clone(),
            instants: self.instants[..n].to_vec(),
            profiles: self.profiles[..n].to_vec(),
        })
    }
}

fn check_increasing(instants: &[i64]) -> Result<()> {
    match instants.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::InstantsNotIncreasing(i + 1)),
        None => Ok(()),
    }
}

/// Optional per-snapshot rescaling applied before tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    #[default]
    None,
    /// Divide each snapshot by its largest entry, mapping it into `[0, 1]`.
    Max,
}

impl Normalization {
    pub fn apply(self, series: &ProfileSeries) -> ProfileSeries {
        match self {
            Normalization::None => series.clone(),
            Normalization::Max => {
                let profiles = series
                    .profiles
                    .iter()
                    .map(|p| {
                        let m = p.as_slice().iter().copied().fold(0.0f64, f64::max);
                        if m > 0.0 {
                            p.scaled(1.0 / m)
                        } else {
                            p.clone()
                        }
                    })
                    .collect();
                ProfileSeries {
                    profiles,
                    ..series.clone()
                }
            }
        }
    }
}

/// Applies one watch event to `profile`.
pub fn interest_update(
    space: &ConceptSpace,
    profile: &InterestVector,
    event: &WatchEvent,
    decay: f64,
) -> Result<InterestVector> {
    space.check(profile)?;
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::invalid(
            "decay",
            format!("{decay} is outside [0, 1]"),
        ));
    }
    event.validate()?;
    let mut axes = event
        .genres
        .iter()
        .map(|g| space.resolve(g, || event.describe()))
        .collect::<Result<Vec<_>>>()?;
    axes.sort_unstable();
    axes.dedup();

    let mut out = profile.clone();
    for v in out.values_mut() {
        *v *= decay;
    }
    let share = event.watched_fraction / axes.len() as f64;
    for axis in axes {
        out.values_mut()[axis] += share;
    }
    Ok(out)
}

/// Builds one [`ProfileSeries`] per user from an unordered event log.
///
/// Events with `timestamp <= instants[k]` contribute to snapshot `k`. A user
/// contributes snapshots only from the first instant that follows one of
/// their events; users with no such instant are absent from the result.
pub fn build_series(
    events: &[WatchEvent],
    space: &ConceptSpace,
    instants: &[i64],
    decay: f64,
) -> Result<BTreeMap<String, ProfileSeries>> {
    build_series_with(Execution::default(), events, space, instants, decay)
}

pub fn build_series_with(
    exec: Execution,
    events: &[WatchEvent],
    space: &ConceptSpace,
    instants: &[i64],
    decay: f64,
) -> Result<BTreeMap<String, ProfileSeries>> {
    if instants.is_empty() {
        return Err(Error::EmptyInstants);
    }
    check_increasing(instants)?;
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::invalid(
            "decay",
            format!("{decay} is outside [0, 1]"),
        ));
    }

    let mut by_user: BTreeMap<&str, Vec<&WatchEvent>> = BTreeMap::new();
    for ev in events {
        by_user.entry(ev.user_id.as_str()).or_default().push(ev);
    }
    let groups: Vec<(&str, Vec<&WatchEvent>)> = by_user.into_iter().collect();

    let built = exec.try_map(&groups, |(user, evs)| {
        fold_user(user, evs, space, instants, decay)
    })?;
    Ok(built
        .into_iter()
        .flatten()
        .map(|s| (s.user_id.clone(), s))
        .collect())
}

fn fold_user(
    user: &str,
    events: &[&WatchEvent],
    space: &ConceptSpace,
    instants: &[i64],
    decay: f64,
) -> Result<Option<ProfileSeries>> {
    let mut events = events.to_vec();
    events.sort_by(|a, b| a.fold_order(b));

    let mut profile = space.zeros();
    let mut seen = 0usize;
    let mut next = events.iter().peekable();
    let mut snap_instants = Vec::new();
    let mut snaps = Vec::new();
    for &instant in instants {
        while let Some(ev) = next.next_if(|ev| ev.timestamp <= instant) {
            profile = interest_update(space, &profile, ev, decay)?;
            seen += 1;
        }
        if seen > 0 {
            snap_instants.push(instant);
            snaps.push(profile.clone());
        }
    }
    // every event must resolve, including ones past the last instant
    for ev in next {
        ev.validate()?;
        for g in &ev.genres {
            space.resolve(g, || ev.describe())?;
        }
    }
    if snaps.is_empty() {
        return Ok(None);
    }
    ProfileSeries::new(user, snap_instants, snaps).map(Some)
}

/// Parses an epoch-seconds integer or an ISO-8601 date-time (UTC assumed when
/// no offset is given).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| dt.and_utc().timestamp())
}

const EVENT_HEADER: [&str; 4] = ["user_id", "timestamp", "genres", "watched_fraction"];

/// Writes the watch-event log: `user_id,timestamp,genres,watched_fraction`
/// with genres joined by `;`.
pub fn write_events<W: Write>(out: W, events: &[WatchEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EVENT_HEADER)?;
    for ev in events {
        w.write_record([
            ev.user_id.clone(),
            ev.timestamp.to_string(),
            ev.genres.join(";"),
            fmt_f64(ev.watched_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(input: R, source: &str) -> Result<Vec<WatchEvent>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: source.to_string(),
        line,
        reason,
    };
    let header = r.headers()?.clone();
    if header.iter().ne(EVENT_HEADER) {
        return Err(parse_err(
            1,
            format!("expected header {}", EVENT_HEADER.join(",")),
        ));
    }
    let mut events = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", rec.len()),
            ));
        }
        let timestamp = parse_timestamp(&rec[1])
            .ok_or_else(|| parse_err(line, format!("bad timestamp {:?}", &rec[1])))?;
        let genres: Vec<String> = rec[2]
            .split(';')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(String::from)
            .collect();
        let fraction: f64 = rec[3]
            .parse()
            .map_err(|_| parse_err(line, format!("bad watched_fraction {:?}", &rec[3])))?;
        let ev = WatchEvent::new(&rec[0], timestamp, genres, fraction)
            .map_err(|e| parse_err(line, e.to_string()))?;
        events.push(ev);
    }
    Ok(events)
}

/// Writes profile snapshots: `user_id,instant,<one column per genre>`, one
/// row per (user, instant).
pub fn write_profiles<'a, W, I>(out: W, space: &ConceptSpace, series: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ProfileSeries>,
{
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["user_id".to_string(), "instant".to_string()];
    header.extend(space.labels().iter().cloned());
    w.write_record(&header)?;
    for s in series {
        space.check(&s.profiles[0])?;
        for (t, p) in s.instants.iter().zip(&s.profiles) {
            let mut row = vec![s.user_id.clone(), t.to_string()];
            row.extend(p.as_slice().iter().map(|&x| fmt_f64(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_profiles<R: Read>(
    input: R,
    space: &ConceptSpace,
    source: &str,
) -> Result<BTreeMap<String, ProfileSeries>> {
    let mut r = csv::ReaderBuilder::new().from_reader(input);
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: source.to_string(),
        line,
        reason,
    };
    let header = r.headers()?.clone();
    let expected: Vec<&str> = ["user_id", "instant"]
        .into_iter()
        .chain(space.labels().iter().map(String::as_str))
        .collect();
    if header.iter().ne(expected.iter().copied()) {
        return Err(parse_err(
            1,
            "header must be user_id,instant followed by the vocabulary labels in order".into(),
        ));
    }
    let mut rows: BTreeMap<String, (Vec<i64>, Vec<InterestVector>)> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let instant = parse_timestamp(&rec[1])
            .ok_or_else(|| parse_err(line, format!("bad instant {:?}", &rec[1])))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(line, e.to_string()))?;
        let v = InterestVector::new(values).map_err(|e| parse_err(line, e.to_string()))?;
        let entry = rows.entry(rec[0].to_string()).or_default();
        entry.0.push(instant);
        entry.1.push(v);
    }
    rows.into_iter()
        .map(|(user, (instants, profiles))| {
            let s = ProfileSeries::new(user.clone(), instants, profiles)
                .map_err(|e| parse_err(0, format!("user {user:?}: {e}")))?;
            Ok((user, s))
        })
        .collect()
}
