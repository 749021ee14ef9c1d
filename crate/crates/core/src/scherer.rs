//! Emotion → nominal appraisal patterns, nominal levels → sampling
//! distributions, and synthetic labelled corpora drawn from them.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::appraisal::AppraisalVector;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Happiness,
    Joy,
    Pride,
    Boredom,
    Fear,
    Sadness,
    Shame,
    Anxiety,
    Despair,
    Irritation,
    Rage,
}

impl Emotion {
    pub const ALL: [Emotion; 11] = [
        Emotion::Happiness,
        Emotion::Joy,
        Emotion::Pride,
        Emotion::Boredom,
        Emotion::Fear,
        Emotion::Sadness,
        Emotion::Shame,
        Emotion::Anxiety,
        Emotion::Despair,
        Emotion::Irritation,
        Emotion::Rage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Happiness => "happiness",
            Emotion::Joy => "joy",
            Emotion::Pride => "pride",
            Emotion::Boredom => "boredom",
            Emotion::Fear => "fear",
            Emotion::Sadness => "sadness",
            Emotion::Shame => "shame",
            Emotion::Anxiety => "anxiety",
            Emotion::Despair => "despair",
            Emotion::Irritation => "irritation",
            Emotion::Rage => "rage",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = SchererError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let alias = match lower.as_str() {
            "sad" => "sadness",
            "desperation" => "despair",
            other => other,
        };
        Emotion::ALL
            .into_iter()
            .find(|e| e.name() == alias)
            .ok_or_else(|| SchererError::UnknownEmotion(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NominalLevel {
    Obstruct,
    VeryLow,
    Low,
    Medium,
    High,
    VeryHigh,
    Open,
}

impl NominalLevel {
    pub const ALL: [NominalLevel; 7] = [
        NominalLevel::Obstruct,
        NominalLevel::VeryLow,
        NominalLevel::Low,
        NominalLevel::Medium,
        NominalLevel::High,
        NominalLevel::VeryHigh,
        NominalLevel::Open,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NominalLevel::Obstruct => "obstruct",
            NominalLevel::VeryLow => "very_low",
            NominalLevel::Low => "low",
            NominalLevel::Medium => "medium",
            NominalLevel::High => "high",
            NominalLevel::VeryHigh => "very_high",
            NominalLevel::Open => "open",
        }
    }
}

impl fmt::Display for NominalLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NominalLevel {
    type Err = SchererError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let norm = match norm.as_str() {
            "obs" | "obs." | "obstructive" => "obstruct",
            "med" => "medium",
            other => other,
        };
        NominalLevel::ALL
            .into_iter()
            .find(|l| l.name() == norm)
            .ok_or_else(|| SchererError::UnknownLevel(s.to_string()))
    }
}

/// A table cell: one level, or an equal-weight mixture of several.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelSpec {
    Single(NominalLevel),
    Mixture(Vec<NominalLevel>),
}

impl fmt::Display for LevelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSpec::Single(l) => write!(f, "{l}"),
            LevelSpec::Mixture(ls) => {
                let names: Vec<&str> = ls.iter().map(|l| l.name()).collect();
                f.write_str(&names.join("/"))
            }
        }
    }
}

impl FromStr for LevelSpec {
    type Err = SchererError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() == 1 {
            return Ok(LevelSpec::Single(parts[0].parse()?));
        }
        Ok(LevelSpec::Mixture(parts.into_iter().map(str::parse).collect::<Result<_, _>>()?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppraisalPattern {
    pub emotion: Emotion,
    pub suddenness: LevelSpec,
    pub goal_relevance: LevelSpec,
    pub conduciveness: LevelSpec,
    pub power: LevelSpec,
}

impl AppraisalPattern {
    pub fn cells(&self) -> [&LevelSpec; 4] {
        [&self.suddenness, &self.goal_relevance, &self.conduciveness, &self.power]
    }
}

/// Shape of a level's sampling distribution before clamping to [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum LevelDistribution {
    /// mu + |N(0, sigma)|
    Above { mu: f64, sigma: f64 },
    /// mu − |N(0, sigma)|
    Below { mu: f64, sigma: f64 },
    Normal { mu: f64, sigma: f64 },
    Uniform,
}

impl LevelDistribution {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gauss = |rng: &mut R, sigma: f64| {
            Normal::new(0.0, sigma).expect("sigma validated on load").sample(rng)
        };
        let x = match *self {
            LevelDistribution::Above { mu, sigma } => mu + gauss(rng, sigma).abs(),
            LevelDistribution::Below { mu, sigma } => mu - gauss(rng, sigma).abs(),
            LevelDistribution::Normal { mu, sigma } => mu + gauss(rng, sigma),
            LevelDistribution::Uniform => rng.random::<f64>(),
        };
        x.clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelMapping {
    pub levels: BTreeMap<NominalLevel, LevelDistribution>,
}

impl LevelMapping {
    pub fn get(&self, level: NominalLevel) -> LevelDistribution {
        self.levels[&level]
    }

    /// Same mapping with medium recentred at `mu`.
    pub fn with_medium_mean(mut self, mu: f64) -> Self {
        if let Some(LevelDistribution::Normal { mu: m, .. }) = self.levels.get_mut(&NominalLevel::Medium) {
            *m = mu;
        }
        self
    }
}

impl Default for LevelMapping {
    fn default() -> Self {
        parse_level_mapping(crate::assets::LEVEL_MAPPING_CSV).expect("bundled level mapping is valid")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchererError {
    #[error("unknown emotion `{0}`")]
    UnknownEmotion(String),
    #[error("unknown nominal level `{0}`")]
    UnknownLevel(String),
    #[error("line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("no pattern for emotion {0}")]
    MissingPattern(Emotion),
    #[error("corpus needs at least one emotion and n_per >= 1")]
    EmptyCorpus,
    #[error("csv: {0}")]
    Csv(String),
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn table_err(rec: &csv::StringRecord, message: impl Into<String>) -> SchererError {
    SchererError::Table {
        line: rec.position().map_or(0, |p| p.line() as usize),
        message: message.into(),
    }
}

pub fn parse_patterns(text: &str) -> Result<Vec<AppraisalPattern>, SchererError> {
    let mut out: Vec<AppraisalPattern> = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(|e| SchererError::Csv(e.to_string()))?;
        if rec.len() != 5 {
            return Err(table_err(&rec, "expected 5 columns"));
        }
        let cell = |i: usize| rec[i].parse::<LevelSpec>().map_err(|e| table_err(&rec, e.to_string()));
        let emotion: Emotion = rec[0].parse().map_err(|e: SchererError| table_err(&rec, e.to_string()))?;
        if out.iter().any(|p| p.emotion == emotion) {
            return Err(table_err(&rec, format!("duplicate row for {emotion}")));
        }
        out.push(AppraisalPattern {
            emotion,
            suddenness: cell(1)?,
            goal_relevance: cell(2)?,
            conduciveness: cell(3)?,
            power: cell(4)?,
        });
    }
    Ok(out)
}

pub fn parse_level_mapping(text: &str) -> Result<LevelMapping, SchererError> {
    let mut levels = BTreeMap::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(|e| SchererError::Csv(e.to_string()))?;
        if rec.len() != 4 {
            return Err(table_err(&rec, "expected 4 columns"));
        }
        let level: NominalLevel = rec[0].parse().map_err(|e: SchererError| table_err(&rec, e.to_string()))?;
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| table_err(&rec, format!("bad number `{}`", &rec[i])))
        };
        let (mu, sigma) = (num(2)?, num(3)?);
        if rec[1] != *"uniform" && sigma <= 0.0 {
            return Err(table_err(&rec, "sigma must be positive"));
        }
        let dist = match &rec[1] {
            "above" => LevelDistribution::Above { mu, sigma },
            "below" => LevelDistribution::Below { mu, sigma },
            "normal" => LevelDistribution::Normal { mu, sigma },
            "uniform" => LevelDistribution::Uniform,
            other => return Err(table_err(&rec, format!("unknown shape `{other}`"))),
        };
        levels.insert(level, dist);
    }
    for l in NominalLevel::ALL {
        if !levels.contains_key(&l) {
            return Err(SchererError::Table { line: 0, message: format!("level {l} missing") });
        }
    }
    Ok(LevelMapping { levels })
}

/// The bundled pattern table.
pub fn default_patterns() -> Vec<AppraisalPattern> {
    parse_patterns(crate::assets::PATTERNS_CSV).expect("bundled pattern table is valid")
}

pub fn pattern_for(patterns: &[AppraisalPattern], e: Emotion) -> Result<&AppraisalPattern, SchererError> {
    patterns.iter().find(|p| p.emotion == e).ok_or(SchererError::MissingPattern(e))
}

pub fn sample_level<R: Rng + ?Sized>(level: NominalLevel, mapping: &LevelMapping, rng: &mut R) -> f64 {
    mapping.get(level).sample(rng)
}

pub fn sample_spec<R: Rng + ?Sized>(spec: &LevelSpec, mapping: &LevelMapping, rng: &mut R) -> f64 {
    match spec {
        LevelSpec::Single(l) => sample_level(*l, mapping, rng),
        LevelSpec::Mixture(ls) => {
            let pick = ls[rng.random_range(0..ls.len())];
            sample_level(pick, mapping, rng)
        }
    }
}

pub fn sample_pattern<R: Rng + ?Sized>(pattern: &AppraisalPattern, mapping: &LevelMapping, rng: &mut R) -> AppraisalVector {
    AppraisalVector {
        suddenness: sample_spec(&pattern.suddenness, mapping, rng),
        goal_relevance: sample_spec(&pattern.goal_relevance, mapping, rng),
        conduciveness: sample_spec(&pattern.conduciveness, mapping, rng),
        power: sample_spec(&pattern.power, mapping, rng),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub vector: AppraisalVector,
    pub label: Emotion,
}

/// `n_per` samples per emotion, each class from its own sub-seed, then
/// shuffled with a further sub-seed.
pub fn build_corpus(
    patterns: &[AppraisalPattern],
    mapping: &LevelMapping,
    emotions: &[Emotion],
    n_per: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>, SchererError> {
    if emotions.is_empty() || n_per == 0 {
        return Err(SchererError::EmptyCorpus);
    }
    let mut out = Vec::with_capacity(emotions.len() * n_per);
    for &e in emotions {
        let pattern = pattern_for(patterns, e)?;
        let mut rng = seed::rng(seed::derive(seed, e.name()));
        out.extend((0..n_per).map(|_| LabeledSample { vector: sample_pattern(pattern, mapping, &mut rng), label: e }));
    }
    out.shuffle(&mut seed::rng(seed::derive(seed, "shuffle")));
    Ok(out)
}

pub fn write_corpus_csv<W: Write>(corpus: &[LabeledSample], w: W) -> Result<(), SchererError> {
    let mut wtr = csv::Writer::from_writer(w);
    let err = |e: csv::Error| SchererError::Csv(e.to_string());
    wtr.write_record(["suddenness", "goal_relevance", "conduciveness", "power", "label"]).map_err(err)?;
    for s in corpus {
        let v = s.vector;
        wtr.write_record([
            v.suddenness.to_string(),
            v.goal_relevance.to_string(),
            v.conduciveness.to_string(),
            v.power.to_string(),
            s.label.to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| SchererError::Csv(e.to_string()))
}

pub fn read_corpus_csv(text: &str) -> Result<Vec<LabeledSample>, SchererError> {
    let mut out = Vec::new();
    for rec in csv_reader(text).records() {
        let rec = rec.map_err(|e| SchererError::Csv(e.to_string()))?;
        if rec.len() != 5 {
            return Err(table_err(&rec, "expected 5 columns"));
        }
        let mut v = [0.0; 4];
        for (i, x) in v.iter_mut().enumerate() {
            *x = rec[i]
                .parse::<f64>()
                .ok()
                .filter(|x| (0.0..=1.0).contains(x))
                .ok_or_else(|| table_err(&rec, format!("bad appraisal value `{}`", &rec[i])))?;
        }
        let label = rec[4].parse().map_err(|e: SchererError| table_err(&rec, e.to_string()))?;
        out.push(LabeledSample { vector: v.into(), label });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn draws(level: NominalLevel, n: usize, seed: u64) -> Vec<f64> {
        let m = LevelMapping::default();
        let mut rng = seed::rng(seed);
        (0..n).map(|_| sample_level(level, &m, &mut rng)).collect()
    }

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    #[test]
    fn table_rows_match_reference() {
        use LevelSpec::Single as S;
        use NominalLevel::*;
        let p = default_patterns();
        assert_eq!(p.len(), 11);
        let row = |e| pattern_for(&p, e).unwrap().clone();
        let expect = |e, s, g, c, w| AppraisalPattern { emotion: e, suddenness: s, goal_relevance: g, conduciveness: c, power: w };
        assert_eq!(row(Emotion::Happiness), expect(Emotion::Happiness, S(Low), S(Medium), S(High), S(Open)));
        assert_eq!(
            row(Emotion::Joy),
            expect(Emotion::Joy, LevelSpec::Mixture(vec![High, Medium]), S(High), S(VeryHigh), S(Open))
        );
        assert_eq!(row(Emotion::Pride), expect(Emotion::Pride, S(Open), S(High), S(High), S(Open)));
        assert_eq!(row(Emotion::Boredom), expect(Emotion::Boredom, S(VeryLow), S(Low), S(Open), S(Medium)));
        assert_eq!(row(Emotion::Fear), expect(Emotion::Fear, S(High), S(High), S(Obstruct), S(VeryLow)));
        assert_eq!(row(Emotion::Sadness), expect(Emotion::Sadness, S(Low), S(High), S(Obstruct), S(VeryLow)));
        assert_eq!(row(Emotion::Shame), expect(Emotion::Shame, S(Open), S(High), S(Obstruct), S(Open)));
        assert_eq!(row(Emotion::Anxiety), expect(Emotion::Anxiety, S(Low), S(Medium), S(Obstruct), S(Low)));
        assert_eq!(row(Emotion::Despair), expect(Emotion::Despair, S(High), S(High), S(Obstruct), S(VeryLow)));
        assert_eq!(row(Emotion::Irritation), expect(Emotion::Irritation, S(Low), S(Medium), S(Obstruct), S(Medium)));
        assert_eq!(row(Emotion::Rage), expect(Emotion::Rage, S(High), S(High), S(Obstruct), S(High)));
    }

    #[test]
    fn level_mapping_reference() {
        let m = LevelMapping::default();
        assert_eq!(m.get(NominalLevel::Obstruct), LevelDistribution::Above { mu: 0.0, sigma: 0.05 });
        assert_eq!(m.get(NominalLevel::VeryLow), LevelDistribution::Above { mu: 0.0, sigma: 0.05 });
        assert_eq!(m.get(NominalLevel::Low), LevelDistribution::Above { mu: 0.0, sigma: 0.1 });
        assert_eq!(m.get(NominalLevel::Medium), LevelDistribution::Normal { mu: 0.5, sigma: 0.05 });
        assert_eq!(m.get(NominalLevel::High), LevelDistribution::Below { mu: 1.0, sigma: 0.1 });
        assert_eq!(m.get(NominalLevel::VeryHigh), LevelDistribution::Below { mu: 1.0, sigma: 0.05 });
        assert_eq!(m.get(NominalLevel::Open), LevelDistribution::Uniform);
        let literal = m.with_medium_mean(0.0);
        assert_eq!(literal.get(NominalLevel::Medium), LevelDistribution::Normal { mu: 0.0, sigma: 0.05 });
    }

    #[test]
    fn very_high_mean() {
        let xs = draws(NominalLevel::VeryHigh, 100_000, 1);
        assert!(xs.iter().all(|&x| x <= 1.0));
        assert!(mean(&xs) >= 0.955, "{}", mean(&xs));
    }

    #[test]
    fn open_is_uniform() {
        let mut xs = draws(NominalLevel::Open, 100_000, 2);
        assert!((mean(&xs) - 0.5).abs() < 0.01);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n - x).abs().max((x - i as f64 / n).abs()))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(d < 1.628 / n.sqrt(), "D = {d}");
    }

    #[test]
    fn low_concentrates_below_one_sigma() {
        let xs = draws(NominalLevel::Low, 100_000, 3);
        assert!(xs.iter().all(|x| (0.0..=1.0).contains(x)));
        let frac = xs.iter().filter(|&&x| x < 0.1).count() as f64 / xs.len() as f64;
        assert!((frac - 0.6827).abs() < 0.01, "{frac}");
    }

    #[test]
    fn mixture_uses_both_components() {
        let m = LevelMapping::default();
        let spec: LevelSpec = "high/medium".parse().unwrap();
        let mut rng = seed::rng(5);
        let xs: Vec<f64> = (0..20_000).map(|_| sample_spec(&spec, &m, &mut rng)).collect();
        let near_half = xs.iter().filter(|&&x| (x - 0.5).abs() < 0.2).count() as f64 / xs.len() as f64;
        assert!((near_half - 0.5).abs() < 0.02, "{near_half}");
    }

    #[test]
    fn patterns_sample_near_their_levels() {
        let m = LevelMapping::default();
        let p = default_patterns();
        let mut rng = seed::rng(6);
        let fear: Vec<AppraisalVector> = (0..2000).map(|_| sample_pattern(pattern_for(&p, Emotion::Fear).unwrap(), &m, &mut rng)).collect();
        let avg = |f: fn(&AppraisalVector) -> f64, vs: &[AppraisalVector]| vs.iter().map(f).sum::<f64>() / vs.len() as f64;
        assert!(avg(|v| v.suddenness, &fear) > 0.9);
        assert!(avg(|v| v.goal_relevance, &fear) > 0.9);
        assert!(avg(|v| v.conduciveness, &fear) < 0.1);
        assert!(avg(|v| v.power, &fear) < 0.1);
        let bored: Vec<AppraisalVector> = (0..2000).map(|_| sample_pattern(pattern_for(&p, Emotion::Boredom).unwrap(), &m, &mut rng)).collect();
        assert!(avg(|v| v.suddenness, &bored) < 0.1);
        assert!((avg(|v| v.power, &bored) - 0.5).abs() < 0.02);
    }

    #[test]
    fn corpus_counts_and_determinism() {
        let p = default_patterns();
        let m = LevelMapping::default();
        let seven = &Emotion::ALL[..7];
        let c = build_corpus(&p, &m, seven, 500, 9).unwrap();
        assert_eq!(c.len(), 3500);
        for e in seven {
            assert_eq!(c.iter().filter(|s| s.label == *e).count(), 500);
        }
        assert_eq!(c, build_corpus(&p, &m, seven, 500, 9).unwrap());
        assert_ne!(c, build_corpus(&p, &m, seven, 500, 10).unwrap());
        let four = [Emotion::Anxiety, Emotion::Despair, Emotion::Irritation, Emotion::Rage];
        assert_eq!(build_corpus(&p, &m, &four, 500, 9).unwrap().len(), 2000);
        assert!(build_corpus(&p, &m, &four, 0, 9).is_err());
    }

    #[test]
    fn corpus_csv_round_trip() {
        let c = build_corpus(&default_patterns(), &LevelMapping::default(), &[Emotion::Fear, Emotion::Joy], 20, 1).unwrap();
        let mut buf = Vec::new();
        write_corpus_csv(&c, &mut buf).unwrap();
        let back = read_corpus_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn names_parse() {
        for e in Emotion::ALL {
            assert_eq!(e.name().parse::<Emotion>().unwrap(), e);
        }
        assert_eq!("Sad".parse::<Emotion>().unwrap(), Emotion::Sadness);
        assert!("awe".parse::<Emotion>().is_err());
        assert_eq!("obs.".parse::<NominalLevel>().unwrap(), NominalLevel::Obstruct);
        assert_eq!("very low".parse::<NominalLevel>().unwrap(), NominalLevel::VeryLow);
    }
}
