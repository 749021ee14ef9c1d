//! Appraisal-based emotion modelling on top of tabular reinforcement learning.
//!
//! A Q-learning agent is trained on a small declarative MDP. At a designated
//! event four appraisal checks are read off its learning signals
//! (suddenness, goal relevance, conduciveness, power). A multi-class SVM
//! trained on synthetic appraisal patterns turns the checks into a
//! distribution over modal emotions.
//!
//! ```no_run
//! use appraise_rl::{assets, rl, appraisal};
//!
//! let spec = assets::load_mdp("fear").unwrap();
//! let agent = rl::train(&spec, &rl::Hyperparams::default()).unwrap();
//! let v = appraisal::appraise(&agent, &spec, &Default::default()).unwrap();
//! println!("{v:?}");
//! ```

pub mod appraisal;
pub mod assets;
pub mod classifier;
pub mod mdp;
pub mod rl;
pub mod scherer;
pub mod seed;
pub mod study;
pub mod svm;

pub use appraisal::AppraisalVector;
pub use mdp::{parse_mdp, ActionId, MdpSpec, StateId};
pub use rl::{Hyperparams, TrainedAgent};
pub use scherer::Emotion;
pub use svm::SvmModel;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mdp(#[from] mdp::MdpError),
    #[error(transparent)]
    Rl(#[from] rl::RlError),
    #[error(transparent)]
    Appraisal(#[from] appraisal::AppraisalError),
    #[error(transparent)]
    Scherer(#[from] scherer::SchererError),
    #[error(transparent)]
    Svm(#[from] svm::SvmError),
    #[error(transparent)]
    Classifier(#[from] classifier::ClassifierError),
    #[error(transparent)]
    Study(#[from] study::StudyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl AsRef<std::path::Path>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.as_ref().display().to_string();
    move |source| Error::Io { path, source }
}
