//! Bundled data files. Setting `APPRAISE_RL_ASSETS` to a directory with the
//! same layout (`mdps/<name>.mdp`, `scherer_patterns.csv`,
//! `level_mapping.csv`) overrides the embedded copies file by file.

use std::path::PathBuf;

use crate::mdp::{parse_mdp, MdpSpec};
use crate::scherer::{parse_level_mapping, parse_patterns, AppraisalPattern, Emotion, LevelMapping};
use crate::Result;

pub const ASSETS_ENV: &str = "APPRAISE_RL_ASSETS";

pub const PATTERNS_CSV: &str = include_str!("../../../assets/scherer_patterns.csv");
pub const LEVEL_MAPPING_CSV: &str = include_str!("../../../assets/level_mapping.csv");

const MDPS: [(&str, &str); 11] = [
    ("happiness", include_str!("../../../assets/mdps/happiness.mdp")),
    ("joy", include_str!("../../../assets/mdps/joy.mdp")),
    ("pride", include_str!("../../../assets/mdps/pride.mdp")),
    ("boredom", include_str!("../../../assets/mdps/boredom.mdp")),
    ("fear", include_str!("../../../assets/mdps/fear.mdp")),
    ("sadness", include_str!("../../../assets/mdps/sadness.mdp")),
    ("shame", include_str!("../../../assets/mdps/shame.mdp")),
    ("anxiety", include_str!("../../../assets/mdps/anxiety.mdp")),
    ("despair", include_str!("../../../assets/mdps/despair.mdp")),
    ("irritation", include_str!("../../../assets/mdps/irritation.mdp")),
    ("rage", include_str!("../../../assets/mdps/rage.mdp")),
];

/// Names of the bundled MDPs, in table order.
pub fn mdp_names() -> impl Iterator<Item = &'static str> {
    MDPS.iter().map(|(n, _)| *n)
}

fn override_dir() -> Option<PathBuf> {
    std::env::var_os(ASSETS_ENV).map(PathBuf::from)
}

fn read_override(rel: &str) -> Result<Option<String>> {
    let Some(dir) = override_dir() else { return Ok(None) };
    let path = dir.join(rel);
    match std::fs::read_to_string(&path) {
        Ok(text) => Ok(Some(text)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(crate::io_err(&path)(e)),
    }
}

/// Text of a bundled MDP by story name.
pub fn mdp_text(name: &str) -> Result<String> {
    if let Some(text) = read_override(&format!("mdps/{name}.mdp"))? {
        return Ok(text);
    }
    MDPS.iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| (*t).to_string())
        .ok_or_else(|| crate::Error::Io {
            path: format!("mdps/{name}.mdp"),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no bundled MDP with this name"),
        })
}

pub fn load_mdp(name: &str) -> Result<MdpSpec> {
    Ok(parse_mdp(&mdp_text(name)?)?)
}

/// The MDP for a story about `emotion`.
pub fn story_mdp(emotion: Emotion) -> Result<MdpSpec> {
    load_mdp(emotion.name())
}

pub fn patterns() -> Result<Vec<AppraisalPattern>> {
    let text = read_override("scherer_patterns.csv")?;
    Ok(parse_patterns(text.as_deref().unwrap_or(PATTERNS_CSV))?)
}

pub fn level_mapping() -> Result<LevelMapping> {
    let text = read_override("level_mapping.csv")?;
    Ok(parse_level_mapping(text.as_deref().unwrap_or(LEVEL_MAPPING_CSV))?)
}
