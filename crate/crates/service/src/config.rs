//! Service configuration: a JSON file, then `CLXAI_*` environment variables,
//! then command-line flags, each overriding the one before.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const ENV_ADDR: &str = "CLXAI_ADDR";
pub const ENV_MODEL: &str = "CLXAI_MODEL";
pub const ENV_DATA_DIR: &str = "CLXAI_DATA_DIR";

/// Learner-facing study wording, served to the client as data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyText {
    pub title: String,
    pub questionnaire_items: Vec<String>,
    pub likert_labels: Vec<String>,
    pub explanation_caption: String,
}

impl Default for StudyText {
    fn default() -> Self {
        Self {
            title: "Feed Shub".into(),
            questionnaire_items: [
                "From the suggestions, I understand how the game works.",
                "The suggestions were satisfying.",
                "The suggestions had sufficient detail.",
                "The suggestions seemed complete.",
                "The suggestions told me how to choose a better diet.",
                "The suggestions were useful to my goals.",
                "The suggestions showed me how accurate the game is.",
                "The suggestions let me judge when I should trust the game.",
            ]
            .map(String::from)
            .to_vec(),
            likert_labels: ["Strongly disagree", "Disagree", "Neutral", "Agree", "Strongly agree"]
                .map(String::from)
                .to_vec(),
            explanation_caption: "If you had used these suggestions, this would have been a better diet.".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub addr: String,
    /// Trained model JSON; the ground-truth oracle is served when absent.
    pub model: Option<PathBuf>,
    /// World JSON; the default world when absent.
    pub world: Option<PathBuf>,
    pub data_dir: PathBuf,
    /// Built web client, served for every non-API path.
    pub static_dir: Option<PathBuf>,
    /// Write a state snapshot after this many new events.
    pub snapshot_every: usize,
    /// Allowed CORS origin; any origin when absent.
    pub cors_origin: Option<String>,
    /// When set, API requests must carry `Authorization: Bearer <token>`.
    pub auth_token: Option<String>,
    pub study: StudyText,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            model: None,
            world: None,
            data_dir: PathBuf::from("data"),
            static_dir: None,
            snapshot_every: 16,
            cors_origin: None,
            auth_token: None,
            study: StudyText::default(),
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub addr: Option<String>,
    pub model: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Applies `CLXAI_*` variables looked up through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(v) = var(ENV_ADDR) {
            self.addr = v;
        }
        if let Some(v) = var(ENV_MODEL) {
            self.model = Some(v.into());
        }
        if let Some(v) = var(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(v) = &o.addr {
            self.addr = v.clone();
        }
        if let Some(v) = &o.model {
            self.model = Some(v.clone());
        }
        if let Some(v) = &o.world {
            self.world = Some(v.clone());
        }
        if let Some(v) = &o.data_dir {
            self.data_dir = v.clone();
        }
        if let Some(v) = &o.static_dir {
            self.static_dir = Some(v.clone());
        }
    }

    /// File (or defaults), then the process environment, then `flags`.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self, ConfigError> {
        let mut config = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
        config.apply_overrides(flags);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.snapshot_every == 0 {
            return Err(ConfigError::Invalid("snapshot_every must be at least 1".into()));
        }
        if self.study.questionnaire_items.len() != clxai_core::metrics::QUESTIONNAIRE_ITEMS {
            return Err(ConfigError::Invalid(format!(
                "study text needs {} questionnaire items, got {}",
                clxai_core::metrics::QUESTIONNAIRE_ITEMS,
                self.study.questionnaire_items.len()
            )));
        }
        Ok(())
    }
}
