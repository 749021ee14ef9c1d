use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use appraise_rl::appraisal::{appraise_detailed, AppraisalOptions};
use appraise_rl::classifier::{calibrate_c, CalibrationOptions, Target};
use appraise_rl::rl::{train_cached, Hyperparams};
use appraise_rl::scherer::{build_corpus, read_corpus_csv, write_corpus_csv, Emotion, LabeledSample};
use appraise_rl::study::experiment::{appraise_stories, RunOptions};
use appraise_rl::study::{human_cells, human_precision, load_ratings, metrics, ExperimentConfig, ExperimentReport, StandardizeScope};
use appraise_rl::svm::{argmax, TrainingSet};
use appraise_rl::{assets, parse_mdp, seed, AppraisalVector, MdpSpec, SvmModel};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "appraise-rl", version, about = "Appraisal-based emotion model on top of tabular Q-learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Always retrain agents instead of reusing cached ones.
    #[arg(long, global = true)]
    no_cache: bool,
    /// Directory for cached agents.
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<PathBuf>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Args, Clone)]
struct RlArgs {
    /// Training episodes.
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Exploration rate.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Step cap per episode.
    #[arg(long, default_value_t = 50)]
    max_steps: usize,
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// Preset (exp1, exp2, exp3) or a corpus CSV file.
    #[arg(long, default_value = "exp1")]
    corpus: String,
    /// Samples per emotion when building a preset corpus.
    #[arg(long, default_value_t = 500)]
    n_per: usize,
    /// Mean of the "medium" level.
    #[arg(long, default_value_t = 0.5)]
    medium_mean: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check an MDP file.
    Validate {
        mdp: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a Q-learning agent and print it as JSON.
    Train {
        mdp: PathBuf,
        #[command(flatten)]
        rl: RlArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Train on an MDP and appraise its designated event.
    Appraise {
        mdp: PathBuf,
        #[command(flatten)]
        rl: RlArgs,
        /// Multiplier applied to the TD error before the checks.
        #[arg(long, default_value_t = 1.0)]
        td_scale: f64,
        /// Include the event and raw TD error.
        #[arg(long)]
        detailed: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Sample a labelled appraisal corpus and print it as CSV.
    Corpus {
        /// Comma-separated emotions; defaults to all.
        #[arg(long, value_delimiter = ',')]
        emotions: Vec<Emotion>,
        #[arg(long, default_value_t = 500)]
        n_per: usize,
        #[arg(long, default_value_t = 0.5)]
        medium_mean: f64,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the emotion classifier for a fixed penalty.
    TrainClassifier {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Soft-margin penalty.
        #[arg(long)]
        c: f64,
        /// Kernel bandwidth; defaults to the corpus variance heuristic.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the penalty so that model precision matches a human level.
    Calibrate {
        /// Target mean precision.
        #[arg(long)]
        precision: f64,
        /// Target precision variance across participants.
        #[arg(long, default_value_t = 0.0)]
        precision_var: f64,
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Stories used as calibration targets; defaults to the corpus emotions.
        #[arg(long, value_delimiter = ',')]
        stories: Vec<Emotion>,
        /// Grid as lo:hi:n (log-spaced).
        #[arg(long, default_value = "1e-4:1e-1:25")]
        grid: String,
        #[command(flatten)]
        rl: RlArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Predict emotion intensities with a saved classifier.
    Predict {
        /// Model JSON from train-classifier.
        #[arg(long)]
        model: PathBuf,
        /// Appraisal vector as four comma-separated numbers.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "mdp")]
        vector: Option<Vec<f64>>,
        /// Appraise this MDP first.
        #[arg(long)]
        mdp: Option<PathBuf>,
        #[command(flatten)]
        rl: RlArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run a full experiment from a config file.
    Experiment {
        config: PathBuf,
        /// Also write report.json, appraisals.csv and intensities.csv here.
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare an experiment report with human ratings.
    Compare {
        report: PathBuf,
        ratings: PathBuf,
        /// Standardisation grouping for free ratings.
        #[arg(long, default_value = "story")]
        standardize: StandardizeScope,
        #[command(flatten)]
        common: Common,
    },
}

/// Domain failure: reported on stderr, exit code 1.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Res<T = ()> = Result<T, Failure>;

impl Common {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn cache_dir(&self) -> Option<PathBuf> {
        if self.no_cache {
            return None;
        }
        Some(self.cache_dir.clone().unwrap_or_else(|| std::env::temp_dir().join("appraise-rl-cache")))
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

impl RlArgs {
    fn hyper(&self, seed: u64) -> Hyperparams {
        Hyperparams { alpha: self.alpha, epsilon: self.epsilon, episodes: self.episodes, max_steps: self.max_steps, seed }
    }
}

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn load_mdp(path: &Path) -> Res<MdpSpec> {
    Ok(parse_mdp(&read(path)?).map_err(|e| Failure(format!("{}: {e}", path.display())))?)
}

fn print_json<T: serde::Serialize>(value: &T) -> Res {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn preset_emotions(name: &str) -> Option<Vec<Emotion>> {
    use Emotion::*;
    match name {
        "exp1" | "exp2" => Some(vec![Happiness, Joy, Pride, Boredom, Fear, Sadness, Shame]),
        "exp3" => Some(vec![Anxiety, Despair, Irritation, Rage]),
        "all" => Some(Emotion::ALL.to_vec()),
        _ => None,
    }
}

fn load_corpus(args: &CorpusArgs, seed_value: u64) -> Res<Vec<LabeledSample>> {
    if let Some(emotions) = preset_emotions(&args.corpus) {
        let mapping = assets::level_mapping()?.with_medium_mean(args.medium_mean);
        return Ok(build_corpus(&assets::patterns()?, &mapping, &emotions, args.n_per, seed::derive(seed_value, "corpus"))?);
    }
    Ok(read_corpus_csv(&read(Path::new(&args.corpus))?)?)
}

fn vector_json(v: &AppraisalVector) -> serde_json::Value {
    serde_json::to_value(v).expect("plain struct")
}

fn run(cli: Cli) -> Res {
    match cli.command {
        Command::Validate { mdp, common } => {
            let text = read(&mdp)?;
            match parse_mdp(&text) {
                Ok(spec) => {
                    common.log(format!("{}: ok", mdp.display()));
                    print_json(&serde_json::json!({
                        "valid": true,
                        "states": spec.states.len(),
                        "terminals": spec.terminals.len(),
                        "spec_hash": spec.spec_hash(),
                    }))
                }
                Err(e) => {
                    let violations = match &e {
                        appraise_rl::mdp::MdpError::Invalid(list) => list.clone(),
                        other => vec![other.to_string()],
                    };
                    print_json(&serde_json::json!({ "valid": false, "violations": violations }))?;
                    Err(Failure(format!("{}: {e}", mdp.display())))
                }
            }
        }
        Command::Train { mdp, rl, common } => {
            let spec = load_mdp(&mdp)?;
            let agent = train_cached(&spec, &rl.hyper(common.seed()), common.cache_dir().as_deref())?;
            common.log(format!("{} episodes, {} steps, {} truncated", agent.stats.episodes, agent.stats.steps, agent.stats.truncated));
            print_json(&agent)
        }
        Command::Appraise { mdp, rl, td_scale, detailed, common } => {
            let spec = load_mdp(&mdp)?;
            let agent = train_cached(&spec, &rl.hyper(common.seed()), common.cache_dir().as_deref())?;
            let a = appraise_detailed(&agent, &spec, &AppraisalOptions { td_scale })?;
            if detailed {
                print_json(&a)
            } else {
                print_json(&vector_json(&a.vector))
            }
        }
        Command::Corpus { emotions, n_per, medium_mean, out, common } => {
            let emotions = if emotions.is_empty() { Emotion::ALL.to_vec() } else { emotions };
            let mapping = assets::level_mapping()?.with_medium_mean(medium_mean);
            let corpus = build_corpus(&assets::patterns()?, &mapping, &emotions, n_per, seed::derive(common.seed(), "corpus"))?;
            match out {
                Some(path) => {
                    let f = std::fs::File::create(&path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                    write_corpus_csv(&corpus, f)?;
                    common.log(format!("wrote {} samples to {}", corpus.len(), path.display()));
                    Ok(())
                }
                None => Ok(write_corpus_csv(&corpus, std::io::stdout().lock())?),
            }
        }
        Command::TrainClassifier { corpus, c, gamma, out, common } => {
            let samples = load_corpus(&corpus, common.seed())?;
            let set = TrainingSet::new(&samples, gamma)?;
            let model = set.train(c, seed::derive(common.seed(), "folds"))?;
            common.log(format!("{} classes, {} support vectors, gamma {:.4}", model.classes.len(), model.n_support(), model.gamma));
            match out {
                Some(path) => {
                    std::fs::write(&path, serde_json::to_string_pretty(&model)? + "\n")
                        .map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                    Ok(())
                }
                None => print_json(&model),
            }
        }
        Command::Calibrate { precision, precision_var, corpus, stories, grid, rl, common } => {
            let samples = load_corpus(&corpus, common.seed())?;
            let set = TrainingSet::new(&samples, None)?;
            let stories = if stories.is_empty() { set.classes().to_vec() } else { stories };
            let grid_text = format!("name = calibrate\nstories = {}\nprecision_mean = {precision}\ngrid = {grid}\n", join(&stories));
            let mut cfg = ExperimentConfig::parse(&grid_text, None)?;
            cfg.seed = common.seed();
            cfg.hyper = rl.hyper(common.seed());
            let appraisals = appraise_stories(&cfg, &RunOptions { cache_dir: common.cache_dir(), verbose: false })?;
            let targets: Vec<Target> = appraisals.iter().map(|(s, a)| Target { vector: a.vector, emotion: *s }).collect();
            let opts = CalibrationOptions { grid: cfg.grid.clone(), seed: seed::derive(common.seed(), "folds"), ..Default::default() };
            let result = calibrate_c(&set, &targets, precision, precision_var, &opts)?;
            common.log(format!("c_mean {:.5} precision {:.4} c_var {:.3e}", result.c_mean, result.precision_at_c_mean, result.c_var));
            print_json(&result)
        }
        Command::Predict { model, vector, mdp, rl, common } => {
            let model: SvmModel = serde_json::from_str(&read(&model)?)?;
            let v = match (vector, mdp) {
                (Some(v), _) if v.len() == 4 => AppraisalVector::new(v[0], v[1], v[2], v[3]),
                (Some(v), _) => return Err(Failure(format!("--vector needs 4 values, got {}", v.len()))),
                (None, Some(path)) => {
                    let spec = load_mdp(&path)?;
                    let agent = train_cached(&spec, &rl.hyper(common.seed()), common.cache_dir().as_deref())?;
                    appraise_detailed(&agent, &spec, &AppraisalOptions::default())?.vector
                }
                (None, None) => return Err(Failure("predict needs --vector or --mdp".into())),
            };
            let dist = model.predict_intensities(&v);
            print_json(&serde_json::json!({
                "vector": vector_json(&v),
                "argmax": argmax(&dist),
                "intensities": dist,
            }))
        }
        Command::Experiment { config, out, common } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let report = appraise_rl::study::run_experiment(&cfg, &RunOptions { cache_dir: common.cache_dir(), verbose: !common.quiet })?;
            if let Some(dir) = out {
                report.write_outputs(&dir)?;
                common.log(format!("wrote report to {}", dir.display()));
            }
            common.log(format!("argmax agreement {}/{}", report.argmax_agreement, report.stories.len()));
            print_json(&report)
        }
        Command::Compare { report, ratings, standardize, common } => {
            let report: ExperimentReport = serde_json::from_str(&read(&report)?)?;
            let table = load_ratings(&read(&ratings)?, report.config.mode)?;
            let human = human_cells(&table, standardize)?;
            let mut model = std::collections::BTreeMap::new();
            for s in &report.stories {
                for (&e, &p) in &s.model_intensity {
                    if human.contains_key(&(s.story, e)) {
                        model.insert((s.story, e), p);
                    }
                }
            }
            let human: std::collections::BTreeMap<_, _> = human.into_iter().filter(|(k, _)| model.contains_key(k)).collect();
            let m = metrics(&model, &human)?;
            let (pm, pv) = human_precision(&table)?;
            common.log(format!("r² {:.3} rmse {:.3} over {} cells", m.r_squared, m.rmse, m.cells));
            print_json(&serde_json::json!({
                "mode": report.config.mode,
                "metrics": m,
                "human_precision_mean": pm,
                "human_precision_var": pv,
            }))
        }
    }
}

fn join(emotions: &[Emotion]) -> String {
    emotions.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
