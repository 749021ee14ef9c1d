//! Human ratings: loading, standardisation, precision, synthetic data and
//! model-vs-human metrics. The experiment runner lives in [`experiment`].

pub mod experiment;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::scherer::Emotion;
use crate::seed;

pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, StoryResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every emotion rated 0–10 for every story.
    Free,
    /// One emotion chosen per story, each emotion used once.
    Forced,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Free => "free",
            Mode::Forced => "forced",
        })
    }
}

impl FromStr for Mode {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "free" => Ok(Mode::Free),
            "forced" => Ok(Mode::Forced),
            other => Err(StudyError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Grouping used for z-scoring free ratings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeScope {
    /// Within each (participant, story) across emotions.
    #[default]
    Story,
    /// Within each participant across all stories and emotions.
    Participant,
}

impl FromStr for StandardizeScope {
    type Err = StudyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "story" => Ok(Self::Story),
            "participant" => Ok(Self::Participant),
            other => Err(StudyError::Config(format!("unknown standardize scope `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub participant: String,
    pub story: Emotion,
    pub emotion: Emotion,
    pub rating: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingsTable {
    pub mode: Mode,
    pub rows: Vec<Rating>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StudyError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("no rows")]
    NoRows,
    #[error("bijection violated for participant {participant}: {detail}")]
    Bijection { participant: String, detail: String },
    #[error("{0}")]
    Metrics(String),
    #[error("standardization applies to free ratings only")]
    NotFree,
    #[error("config: {0}")]
    Config(String),
    #[error("story {story}: {message}")]
    Story { story: String, message: String },
}

type Cell = (Emotion, Emotion);

/// Parses `participant,story,emotion,rating` CSV text. In forced mode a
/// rating of 1 marks the chosen emotion and 0 an unchosen one.
pub fn load_ratings(text: &str, mode: Mode) -> Result<RatingsTable, StudyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| StudyError::Malformed { line: 1, message: e.to_string() })?
        .clone();
    let expected = ["participant", "story", "emotion", "rating"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(StudyError::Malformed { line: 1, message: format!("expected header {}", expected.join(",")) });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| StudyError::Malformed {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| StudyError::Malformed { line, message };
        if rec.len() != 4 {
            return Err(bad("expected 4 fields".into()));
        }
        let story: Emotion = rec[1].parse().map_err(|_| bad(format!("unknown story `{}`", &rec[1])))?;
        let emotion: Emotion = rec[2].parse().map_err(|_| bad(format!("unknown emotion `{}`", &rec[2])))?;
        let rating: f64 = rec[3].parse().map_err(|_| bad(format!("bad rating `{}`", &rec[3])))?;
        match mode {
            Mode::Free if !(0.0..=10.0).contains(&rating) => {
                return Err(bad(format!("rating {rating} outside [0, 10]")));
            }
            Mode::Forced if rating != 0.0 && rating != 1.0 => {
                return Err(bad(format!("forced-choice rating must be 0 or 1, got {rating}")));
            }
            _ => {}
        }
        rows.push(Rating { participant: rec[0].to_string(), story, emotion, rating });
    }
    if rows.is_empty() {
        return Err(StudyError::NoRows);
    }
    let table = RatingsTable { mode, rows };
    if mode == Mode::Forced {
        table.choices()?;
    }
    Ok(table)
}

pub fn write_ratings_csv<W: Write>(table: &RatingsTable, w: W) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["participant", "story", "emotion", "rating"])?;
    for r in &table.rows {
        wtr.write_record([r.participant.as_str(), r.story.name(), r.emotion.name(), &r.rating.to_string()])?;
    }
    wtr.flush()
}

impl RatingsTable {
    pub fn participants(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.participant.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn stories(&self) -> BTreeSet<Emotion> {
        self.rows.iter().map(|r| r.story).collect()
    }

    pub fn emotions(&self) -> BTreeSet<Emotion> {
        self.rows.iter().map(|r| r.emotion).collect()
    }

    /// Forced mode: the emotion each participant chose for each story,
    /// checked to be a bijection between stories and emotions.
    pub fn choices(&self) -> Result<BTreeMap<&str, BTreeMap<Emotion, Emotion>>, StudyError> {
        let mut out: BTreeMap<&str, BTreeMap<Emotion, Emotion>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.rating > 0.0) {
            let picks = out.entry(&r.participant).or_default();
            if let Some(prev) = picks.insert(r.story, r.emotion) {
                return Err(StudyError::Bijection {
                    participant: r.participant.clone(),
                    detail: format!("story {} has two choices ({prev}, {})", r.story, r.emotion),
                });
            }
        }
        let stories = self.stories();
        for (p, picks) in &out {
            let used: BTreeSet<Emotion> = picks.values().copied().collect();
            if used.len() != picks.len() {
                return Err(StudyError::Bijection {
                    participant: p.to_string(),
                    detail: "an emotion is used for more than one story".into(),
                });
            }
            if picks.len() != stories.len() {
                return Err(StudyError::Bijection {
                    participant: p.to_string(),
                    detail: format!("{} of {} stories answered", picks.len(), stories.len()),
                });
            }
        }
        Ok(out)
    }

    /// Ratings per (participant, story) as emotion → value.
    fn groups(&self) -> BTreeMap<(&str, Emotion), BTreeMap<Emotion, f64>> {
        let mut g: BTreeMap<(&str, Emotion), BTreeMap<Emotion, f64>> = BTreeMap::new();
        for r in &self.rows {
            g.entry((&r.participant, r.story)).or_default().insert(r.emotion, r.rating);
        }
        g
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// z-scores free ratings within each group of `scope`. Groups with zero
/// variance become all zeros.
pub fn standardize(table: &RatingsTable, scope: StandardizeScope) -> Result<RatingsTable, StudyError> {
    if table.mode != Mode::Free {
        return Err(StudyError::NotFree);
    }
    let key = |r: &Rating| match scope {
        StandardizeScope::Story => (r.participant.clone(), Some(r.story)),
        StandardizeScope::Participant => (r.participant.clone(), None),
    };
    let mut groups: BTreeMap<(String, Option<Emotion>), Vec<f64>> = BTreeMap::new();
    for r in &table.rows {
        groups.entry(key(r)).or_default().push(r.rating);
    }
    let stats: BTreeMap<_, (f64, f64)> = groups
        .into_iter()
        .map(|(k, xs)| {
            let (m, v) = mean_var(&xs);
            (k, (m, v.sqrt()))
        })
        .collect();
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let (m, s) = stats[&key(r)];
            let z = if s > 0.0 { (r.rating - m) / s } else { 0.0 };
            Rating { rating: z, ..r.clone() }
        })
        .collect();
    Ok(RatingsTable { mode: Mode::Free, rows })
}

/// Mean rating per (story, emotion) cell.
pub fn aggregate_means(table: &RatingsTable) -> BTreeMap<Cell, f64> {
    let mut acc: BTreeMap<Cell, (f64, usize)> = BTreeMap::new();
    for r in &table.rows {
        let e = acc.entry((r.story, r.emotion)).or_insert((0.0, 0));
        e.0 += r.rating;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// (m − min) / (max − min) over all cells; all zeros when constant.
pub fn rescale_min_max(cells: &BTreeMap<Cell, f64>) -> BTreeMap<Cell, f64> {
    let min = cells.values().copied().fold(f64::INFINITY, f64::min);
    let max = cells.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    cells
        .iter()
        .map(|(k, &v)| (*k, if span > 0.0 { (v - min) / span } else { 0.0 }))
        .collect()
}

/// Human values per (story, emotion) to compare against model intensities:
/// rescaled standardised means for free ratings, selection frequencies for
/// forced choice.
pub fn human_cells(table: &RatingsTable, scope: StandardizeScope) -> Result<BTreeMap<Cell, f64>, StudyError> {
    match table.mode {
        Mode::Free => Ok(rescale_min_max(&aggregate_means(&standardize(table, scope)?))),
        Mode::Forced => {
            let choices = table.choices()?;
            let n = choices.len() as f64;
            let mut cells: BTreeMap<Cell, f64> = BTreeMap::new();
            for s in table.stories() {
                for e in table.emotions() {
                    cells.insert((s, e), 0.0);
                }
            }
            for picks in choices.values() {
                for (&s, &e) in picks {
                    *cells.entry((s, e)).or_insert(0.0) += 1.0 / n;
                }
            }
            Ok(cells)
        }
    }
}

/// Per-participant precision on each story's own emotion; returns the mean
/// and population variance across participants.
///
/// Forced choice: fraction of stories answered with their own emotion.
/// Free rating: per story, ratings shifted by their minimum and normalised to
/// sum to 1; the mass on the story's emotion is averaged over stories.
pub fn human_precision(table: &RatingsTable) -> Result<(f64, f64), StudyError> {
    let per_participant: Vec<f64> = match table.mode {
        Mode::Forced => table
            .choices()?
            .values()
            .map(|picks| picks.iter().filter(|(s, e)| s == e).count() as f64 / picks.len() as f64)
            .collect(),
        Mode::Free => {
            let mut acc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for ((p, story), ratings) in table.groups() {
                let min = ratings.values().copied().fold(f64::INFINITY, f64::min);
                let total: f64 = ratings.values().map(|r| r - min).sum();
                let mass = if total > 0.0 {
                    ratings.get(&story).map_or(0.0, |r| (r - min) / total)
                } else {
                    1.0 / ratings.len() as f64
                };
                acc.entry(p).or_default().push(mass);
            }
            acc.values().map(|xs| xs.iter().sum::<f64>() / xs.len() as f64).collect()
        }
    };
    if per_participant.is_empty() {
        return Err(StudyError::NoRows);
    }
    Ok(mean_var(&per_participant))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub r_squared: f64,
    pub rmse: f64,
    pub cells: usize,
}

/// Squared Pearson correlation and RMSE across the shared cell set.
pub fn metrics<K: Ord + fmt::Debug>(model: &BTreeMap<K, f64>, human: &BTreeMap<K, f64>) -> Result<Metrics, StudyError> {
    if model.len() != human.len() || model.keys().zip(human.keys()).any(|(a, b)| a != b) {
        return Err(StudyError::Metrics("model and human cover different cells".into()));
    }
    let n = model.len();
    if n < 2 {
        return Err(StudyError::Metrics("need at least two cells".into()));
    }
    let x: Vec<f64> = model.values().copied().collect();
    let y: Vec<f64> = human.values().copied().collect();
    let (mx, vx) = mean_var(&x);
    let (my, vy) = mean_var(&y);
    if vy == 0.0 || vx == 0.0 {
        return Err(StudyError::Metrics("values are constant; correlation undefined".into()));
    }
    let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n as f64;
    let r = cov / (vx.sqrt() * vy.sqrt());
    let rmse = (x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64).sqrt();
    Ok(Metrics { r_squared: (r * r).min(1.0), rmse, cells: n })
}

/// Draws per-participant precisions from a Beta with the given mean and
/// variance (variance capped just below the Bernoulli limit).
fn participant_precisions<R: Rng>(mean: f64, var: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let mean = mean.clamp(1e-3, 1.0 - 1e-3);
    let var = var.min(0.999 * mean * (1.0 - mean));
    if var <= 0.0 {
        return vec![mean; n];
    }
    let k = mean * (1.0 - mean) / var - 1.0;
    let beta = Beta::new(mean * k, (1.0 - mean) * k).expect("positive shape parameters");
    (0..n).map(|_| beta.sample(rng)).collect()
}

/// Synthetic ratings whose [`human_precision`] statistics approximate
/// (`mean`, `var`). Used for exercising the comparison path when real data
/// are unavailable.
pub fn synthesize_ratings(
    stories: &[Emotion],
    emotions: &[Emotion],
    mode: Mode,
    participants: usize,
    mean: f64,
    var: f64,
    seed_value: u64,
) -> Result<RatingsTable, StudyError> {
    if stories.is_empty() || emotions.len() < 2 || participants == 0 {
        return Err(StudyError::Config("synthetic ratings need stories, two emotions and a participant".into()));
    }
    let mut rng = seed::rng(seed::derive(seed_value, "synthetic-ratings"));
    let precisions = participant_precisions(mean, var, participants, &mut rng);
    let mut rows = Vec::new();
    match mode {
        Mode::Free => {
            for (i, &p) in precisions.iter().enumerate() {
                let participant = format!("p{:03}", i + 1);
                let p = p.clamp(1e-3, 0.999);
                for &story in stories {
                    let others: Vec<Emotion> = emotions.iter().copied().filter(|&e| e != story).collect();
                    let mut raw: BTreeMap<Emotion, f64> = others.iter().map(|&e| (e, rng.random::<f64>())).collect();
                    let zero = *others.choose(&mut rng).expect("at least one other emotion");
                    raw.insert(zero, 0.0);
                    let rest: f64 = raw.values().sum();
                    let rest = if rest > 0.0 { rest } else { 1.0 };
                    raw.insert(story, p / (1.0 - p) * rest);
                    let top = raw.values().copied().fold(0.0, f64::max);
                    let scale = 10.0 * rng.random_range(0.6..1.0) / top;
                    for &e in emotions {
                        rows.push(Rating { participant: participant.clone(), story, emotion: e, rating: raw.get(&e).copied().unwrap_or(0.0) * scale });
                    }
                }
            }
        }
        Mode::Forced => {
            let set_s: BTreeSet<_> = stories.iter().collect();
            let set_e: BTreeSet<_> = emotions.iter().collect();
            if set_s != set_e {
                return Err(StudyError::Config("forced choice needs the same stories and emotions".into()));
            }
            let n = stories.len();
            for (i, &p) in precisions.iter().enumerate() {
                let participant = format!("p{:03}", i + 1);
                let mut correct = (p * n as f64).round() as usize;
                if correct + 1 == n {
                    correct = if rng.random::<bool>() { n } else { n.saturating_sub(2) };
                }
                let mut order: Vec<Emotion> = stories.to_vec();
                order.shuffle(&mut rng);
                let (_, wrong) = order.split_at(correct);
                let mut assigned: BTreeMap<Emotion, Emotion> = stories.iter().map(|&s| (s, s)).collect();
                if wrong.len() >= 2 {
                    let mut perm = wrong.to_vec();
                    while perm.iter().zip(wrong).any(|(a, b)| a == b) {
                        perm.shuffle(&mut rng);
                    }
                    for (s, e) in wrong.iter().zip(perm) {
                        assigned.insert(*s, e);
                    }
                }
                for &story in stories {
                    for &e in emotions {
                        let rating = if assigned[&story] == e { 1.0 } else { 0.0 };
                        rows.push(Rating { participant: participant.clone(), story, emotion: e, rating });
                    }
                }
            }
        }
    }
    Ok(RatingsTable { mode, rows })
}
