//! End-to-end experiment: train and appraise every story, calibrate the
//! classifier penalty to a human precision level, simulate participants and
//! compare with human data when available.
//!
//! Config files are `key = value` lines:
//!
//! ```text
//! name = exp1
//! stories = happiness, joy, pride, boredom, fear, sadness, shame
//! mode = free
//! participants = 42
//! precision_mean = 0.40
//! precision_var = 0.028
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{human_cells, human_precision, load_ratings, metrics, synthesize_ratings, Metrics, Mode, StandardizeScope, StudyError};
use crate::appraisal::{appraise_detailed, AppraisalOptions, AppraisalVector};
use crate::classifier::{self, calibrate_c, calibrate_c_nearest, sample_participants, CalibrationOptions, CalibrationResult, ClassifierError, Target};
use crate::rl::{train_cached, Hyperparams};
use crate::scherer::{build_corpus, Emotion};
use crate::svm::{argmax, EmotionDistribution, TrainingSet};
use crate::{assets, seed, Result};

/// Where human data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanSource {
    None,
    /// Generated from `precision_mean` / `precision_var`.
    Synthetic,
    /// CSV file of ratings.
    File(PathBuf),
}

/// What to do when the human precision cannot be reached on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OnUnreachable {
    Nearest,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub stories: Vec<Emotion>,
    pub emotions: Vec<Emotion>,
    pub mode: Mode,
    pub participants: usize,
    pub precision_mean: Option<f64>,
    pub precision_var: Option<f64>,
    pub human: HumanSource,
    pub seed: u64,
    pub hyper: Hyperparams,
    pub n_per: usize,
    pub grid: Vec<f64>,
    pub medium_mean: f64,
    pub td_scale: f64,
    pub standardize: StandardizeScope,
    pub on_unreachable: OnUnreachable,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            stories: Vec::new(),
            emotions: Vec::new(),
            mode: Mode::Free,
            participants: 1,
            precision_mean: None,
            precision_var: None,
            human: HumanSource::None,
            seed: 0,
            hyper: Hyperparams::default(),
            n_per: 500,
            grid: classifier::default_grid(),
            medium_mean: 0.5,
            td_scale: 1.0,
            standardize: StandardizeScope::Story,
            on_unreachable: OnUnreachable::Nearest,
        }
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<Emotion>, StudyError> {
    v.split([',', ' '])
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.parse().map_err(|_| StudyError::Config(format!("unknown emotion `{s}`"))))
        .collect()
}

/// `lo:hi:n` for a log-spaced grid, or an explicit comma list.
fn parse_grid(v: &str) -> std::result::Result<Vec<f64>, StudyError> {
    let bad = || StudyError::Config(format!("bad grid `{v}`"));
    let parts: Vec<&str> = v.split(':').map(str::trim).collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi > lo && n >= 2) {
            return Err(bad());
        }
        return Ok(classifier::log_grid(lo, hi, n));
    }
    v.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect()
}

impl ExperimentConfig {
    /// Parses config text. Relative `human` paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: Option<&Path>) -> std::result::Result<Self, StudyError> {
        let mut cfg = ExperimentConfig::default();
        let mut emotions_set = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| StudyError::Config(format!("line {}: {m}", idx + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("bad number `{v}` for {key}")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| err(format!("bad integer `{v}` for {key}")));
            match key {
                "name" => cfg.name = value.to_string(),
                "stories" => cfg.stories = parse_list(value)?,
                "emotions" => {
                    cfg.emotions = parse_list(value)?;
                    emotions_set = true;
                }
                "mode" => cfg.mode = value.parse()?,
                "participants" => cfg.participants = int(value)? as usize,
                "precision_mean" => cfg.precision_mean = Some(num(value)?),
                "precision_var" => cfg.precision_var = Some(num(value)?),
                "human" => {
                    cfg.human = match value {
                        "" | "none" => HumanSource::None,
                        "synthetic" => HumanSource::Synthetic,
                        path => {
                            let p = PathBuf::from(path);
                            HumanSource::File(match base_dir {
                                Some(b) if p.is_relative() => b.join(p),
                                _ => p,
                            })
                        }
                    }
                }
                "seed" => cfg.seed = int(value)?,
                "episodes" => cfg.hyper.episodes = int(value)? as usize,
                "max_steps" => cfg.hyper.max_steps = int(value)? as usize,
                "alpha" => cfg.hyper.alpha = num(value)?,
                "epsilon" => cfg.hyper.epsilon = num(value)?,
                "n_per" => cfg.n_per = int(value)? as usize,
                "grid" => cfg.grid = parse_grid(value)?,
                "medium_mean" => cfg.medium_mean = num(value)?,
                "td_scale" => cfg.td_scale = num(value)?,
                "standardize" => cfg.standardize = value.parse()?,
                "on_unreachable" => {
                    cfg.on_unreachable = match value {
                        "nearest" => OnUnreachable::Nearest,
                        "error" => OnUnreachable::Error,
                        other => return Err(err(format!("unknown on_unreachable `{other}`"))),
                    }
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        if !emotions_set {
            cfg.emotions = cfg.stories.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(crate::io_err(path))?;
        Ok(Self::parse(&text, path.parent())?)
    }

    pub fn validate(&self) -> std::result::Result<(), StudyError> {
        let bad = |m: &str| Err(StudyError::Config(m.to_string()));
        if self.stories.is_empty() {
            return bad("no stories");
        }
        if self.emotions.len() < 2 {
            return bad("need at least two emotions");
        }
        if let Some(s) = self.stories.iter().find(|s| !self.emotions.contains(s)) {
            return Err(StudyError::Config(format!("story {s} is not among the emotions")));
        }
        if self.participants == 0 {
            return bad("participants must be positive");
        }
        if self.n_per < 2 {
            return bad("n_per must be at least 2");
        }
        if matches!(self.human, HumanSource::None | HumanSource::Synthetic) && self.precision_mean.is_none() {
            return bad("precision_mean is required without a human ratings file");
        }
        self.hyper.validate().map_err(|e| StudyError::Config(e.to_string()))
    }

    fn precision_stats(&self) -> (f64, f64) {
        (self.precision_mean.unwrap_or(0.0), self.precision_var.unwrap_or(0.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoryResult {
    pub story: Emotion,
    pub appraisal: AppraisalVector,
    pub td_error: f64,
    /// Mean intensity over simulated participants.
    pub model_intensity: EmotionDistribution,
    pub model_argmax: Emotion,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human: Option<EmotionDistribution>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HumanSummary {
    pub precision_mean: f64,
    pub precision_var: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub gamma: f64,
    pub stories: Vec<StoryResult>,
    pub calibration: CalibrationResult,
    pub participant_cs: Vec<f64>,
    /// Stories whose model argmax is their own emotion.
    pub argmax_agreement: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human: Option<HumanSummary>,
}

/// Run-time knobs that do not change results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub cache_dir: Option<PathBuf>,
    /// Progress messages go to stderr when set.
    pub verbose: bool,
}

/// Appraises each story of the config on a freshly trained (or cached) agent.
pub fn appraise_stories(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<(Emotion, crate::appraisal::EventAppraisal)>> {
    let hyper = Hyperparams { seed: cfg.seed, ..cfg.hyper.clone() };
    let aopts = AppraisalOptions { td_scale: cfg.td_scale };
    cfg.stories
        .iter()
        .map(|&story| {
            let wrap = |e: crate::Error| crate::Error::Study(StudyError::Story { story: story.to_string(), message: e.to_string() });
            let spec = assets::story_mdp(story).map_err(wrap)?;
            let agent = train_cached(&spec, &hyper, opts.cache_dir.as_deref()).map_err(wrap)?;
            let a = appraise_detailed(&agent, &spec, &aopts).map_err(|e| wrap(e.into()))?;
            Ok((story, a))
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    let log = |m: String| {
        if opts.verbose {
            eprintln!("[{}] {m}", cfg.name);
        }
    };

    let appraisals = appraise_stories(cfg, opts)?;
    for (s, a) in &appraisals {
        let v = a.vector;
        log(format!(
            "{s}: suddenness {:.3} goal_relevance {:.3} conduciveness {:.3} power {:.3}",
            v.suddenness, v.goal_relevance, v.conduciveness, v.power
        ));
    }

    let human_table = match &cfg.human {
        HumanSource::None => None,
        HumanSource::Synthetic => {
            let (m, v) = cfg.precision_stats();
            Some(synthesize_ratings(&cfg.stories, &cfg.emotions, cfg.mode, cfg.participants, m, v, cfg.seed)?)
        }
        HumanSource::File(path) => {
            let text = std::fs::read_to_string(path).map_err(crate::io_err(path))?;
            Some(load_ratings(&text, cfg.mode)?)
        }
    };
    let (target_mean, target_var) = match &human_table {
        Some(t) if !matches!(cfg.human, HumanSource::Synthetic) => human_precision(t)?,
        _ => cfg.precision_stats(),
    };

    let patterns = assets::patterns()?;
    let mapping = assets::level_mapping()?.with_medium_mean(cfg.medium_mean);
    let corpus = build_corpus(&patterns, &mapping, &cfg.emotions, cfg.n_per, seed::derive(cfg.seed, "corpus"))?;
    let set = TrainingSet::new(&corpus, None).map_err(ClassifierError::from)?;
    log(format!("corpus of {} samples, gamma {:.4}", set.len(), set.gamma()));

    let targets: Vec<Target> = appraisals.iter().map(|(s, a)| Target { vector: a.vector, emotion: *s }).collect();
    let copts = CalibrationOptions { grid: cfg.grid.clone(), seed: seed::derive(cfg.seed, "folds"), ..Default::default() };
    let calibration = match cfg.on_unreachable {
        OnUnreachable::Error => calibrate_c(&set, &targets, target_mean, target_var, &copts)?,
        OnUnreachable::Nearest => calibrate_c_nearest(&set, &targets, target_mean, target_var, &copts)?,
    };
    if calibration.clamped {
        log(format!("target precision {target_mean} unreachable; using nearest end of the curve"));
    }
    log(format!(
        "c_mean {:.5} (precision {:.3}), c_var {:.3e}",
        calibration.c_mean, calibration.precision_at_c_mean, calibration.c_var
    ));

    let participant_cs = classifier::participant_cs(&calibration, cfg.participants, copts.seed);
    let models = sample_participants(&calibration, &set, cfg.participants, copts.seed)?;

    let human_by_cell = match &human_table {
        Some(t) => Some(human_cells(t, cfg.standardize)?),
        None => None,
    };

    let mut stories = Vec::new();
    for (story, a) in &appraisals {
        let mut mean: EmotionDistribution = cfg.emotions.iter().map(|&e| (e, 0.0)).collect();
        for m in &models {
            for (e, p) in m.predict_intensities(&a.vector) {
                *mean.entry(e).or_insert(0.0) += p / models.len() as f64;
            }
        }
        let human = human_by_cell
            .as_ref()
            .map(|cells| cfg.emotions.iter().map(|&e| (e, cells.get(&(*story, e)).copied().unwrap_or(0.0))).collect());
        stories.push(StoryResult {
            story: *story,
            appraisal: a.vector,
            td_error: a.td_error,
            model_argmax: argmax(&mean).expect("non-empty"),
            model_intensity: mean,
            human,
        });
    }
    let argmax_agreement = stories.iter().filter(|s| s.model_argmax == s.story).count();

    let human = match &human_table {
        Some(t) => {
            let (pm, pv) = human_precision(t)?;
            let mut model_cells = BTreeMap::new();
            let mut human_cells_map = BTreeMap::new();
            for s in &stories {
                if let Some(h) = &s.human {
                    for (&e, &v) in &s.model_intensity {
                        model_cells.insert((s.story, e), v);
                        human_cells_map.insert((s.story, e), h[&e]);
                    }
                }
            }
            let metrics = metrics(&model_cells, &human_cells_map).ok();
            Some(HumanSummary { precision_mean: pm, precision_var: pv, metrics })
        }
        None => None,
    };

    Ok(ExperimentReport {
        name: cfg.name.clone(),
        config: cfg.clone(),
        gamma: set.gamma(),
        stories,
        calibration,
        participant_cs,
        argmax_agreement,
        human,
    })
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_appraisals_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["story", "suddenness", "goal_relevance", "conduciveness", "power", "td_error"])?;
        for s in &self.stories {
            let v = s.appraisal;
            wtr.write_record([
                s.story.to_string(),
                v.suddenness.to_string(),
                v.goal_relevance.to_string(),
                v.conduciveness.to_string(),
                v.power.to_string(),
                s.td_error.to_string(),
            ])?;
        }
        wtr.flush()
    }

    /// Long format: story, emotion, model intensity and human value (blank
    /// without human data).
    pub fn write_intensities_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["story", "emotion", "model", "human"])?;
        for s in &self.stories {
            for (e, p) in &s.model_intensity {
                let h = s.human.as_ref().and_then(|h| h.get(e)).map_or(String::new(), |v| v.to_string());
                wtr.write_record([s.story.to_string(), e.to_string(), p.to_string(), h])?;
            }
        }
        wtr.flush()
    }

    /// Writes `report.json`, `appraisals.csv` and `intensities.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(crate::io_err(dir))?;
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()? + "\n").map_err(crate::io_err(&json))?;
        let p = dir.join("appraisals.csv");
        let f = std::fs::File::create(&p).map_err(crate::io_err(&p))?;
        self.write_appraisals_csv(f).map_err(crate::io_err(&p))?;
        let p = dir.join("intensities.csv");
        let f = std::fs::File::create(&p).map_err(crate::io_err(&p))?;
        self.write_intensities_csv(f).map_err(crate::io_err(&p))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_config() {
        let text = "\
# comment
name = t
stories = fear, joy
emotions = fear joy rage
mode = forced
participants = 3
precision_mean = 0.5
grid = 1e-3:1e-1:5
episodes = 200
";
        let cfg = ExperimentConfig::parse(text, None).unwrap();
        assert_eq!(cfg.stories, vec![Emotion::Fear, Emotion::Joy]);
        assert_eq!(cfg.emotions.len(), 3);
        assert_eq!(cfg.mode, Mode::Forced);
        assert_eq!(cfg.grid.len(), 5);
        assert_eq!(cfg.hyper.episodes, 200);
        assert_eq!(cfg.hyper.alpha, 0.1);
    }

    #[test]
    fn parse_errors() {
        assert!(ExperimentConfig::parse("stories = fear, joy\nbogus = 1\nprecision_mean=0.5", None).is_err());
        assert!(ExperimentConfig::parse("stories = fear, awe\nprecision_mean=0.5", None).is_err());
        assert!(ExperimentConfig::parse("stories = fear, joy\n", None).is_err());
        assert!(ExperimentConfig::parse("stories = fear\nemotions = joy, rage\nprecision_mean=0.5", None).is_err());
    }

    #[test]
    fn human_path_resolves_against_base() {
        let cfg = ExperimentConfig::parse("stories = fear, joy\nhuman = data/r.csv\n", Some(Path::new("/cfg"))).unwrap();
        assert_eq!(cfg.human, HumanSource::File(PathBuf::from("/cfg/data/r.csv")));
    }
}
