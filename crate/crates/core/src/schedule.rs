//! Training-schedule manifests for PA/SA granularity orderings.
//!
//! An order string such as `PS` reads left to right, one epoch per letter:
//! `P` trains on program-aligned data, `S` on snippet-aligned data.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    P,
    S,
}

impl Granularity {
    pub fn from_char(c: char) -> Result<Self, ScheduleError> {
        match c {
            'P' => Ok(Granularity::P),
            'S' => Ok(Granularity::S),
            other => Err(ScheduleError::InvalidGranularity(other)),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Granularity::P => "program",
            Granularity::S => "snippet",
        }
    }

    pub fn default_batch_size(self) -> u32 {
        match self {
            Granularity::P => 128,
            Granularity::S => 512,
        }
    }

    pub fn default_max_seq_len(self) -> u32 {
        match self {
            Granularity::P => 2048,
            Granularity::S => 1024,
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::P => "P",
            Granularity::S => "S",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityStage {
    pub granularity: Granularity,
    pub epochs: u32,
    pub batch_size: u32,
    pub max_seq_len: u32,
    pub dataset_path: PathBuf,
    /// Whether the warmup/cosine schedule starts over at this stage.
    pub lr_restart: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleManifest {
    pub order_string: String,
    pub stages: Vec<GranularityStage>,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub lr_schedule: String,
    pub save_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction_template: Option<String>,
}

impl ScheduleManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Optional replacements for the defaults. Unset fields keep the default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleOverrides {
    pub pa_batch_size: Option<u32>,
    pub sa_batch_size: Option<u32>,
    pub pa_max_seq_len: Option<u32>,
    pub sa_max_seq_len: Option<u32>,
    pub learning_rate: Option<f64>,
    pub warmup_ratio: Option<f64>,
    pub lr_schedule: Option<String>,
    pub lr_restart: Option<bool>,
    pub instruction_template: Option<String>,
}

pub const DEFAULT_LEARNING_RATE: f64 = 2e-5;
pub const DEFAULT_WARMUP_RATIO: f64 = 0.1;

pub fn plan(
    order_string: &str,
    pa_path: Option<PathBuf>,
    sa_path: Option<PathBuf>,
    overrides: &ScheduleOverrides,
) -> Result<ScheduleManifest, ScheduleError> {
    if order_string.is_empty() {
        return Err(ScheduleError::EmptyOrder);
    }
    let order: Vec<Granularity> = order_string
        .chars()
        .map(Granularity::from_char)
        .collect::<Result<_, _>>()?;

    let mut stages = Vec::with_capacity(order.len());
    for g in order {
        let (path, batch, seq) = match g {
            Granularity::P => (&pa_path, overrides.pa_batch_size, overrides.pa_max_seq_len),
            Granularity::S => (&sa_path, overrides.sa_batch_size, overrides.sa_max_seq_len),
        };
        let dataset_path = path.clone().ok_or_else(|| ScheduleError::MissingDataset {
            order: order_string.to_string(),
            granularity: g.name(),
        })?;
        stages.push(GranularityStage {
            granularity: g,
            epochs: 1,
            batch_size: batch.unwrap_or(g.default_batch_size()),
            max_seq_len: seq.unwrap_or(g.default_max_seq_len()),
            dataset_path,
            lr_restart: overrides.lr_restart.unwrap_or(true),
        });
    }

    Ok(ScheduleManifest {
        order_string: order_string.to_string(),
        stages,
        learning_rate: overrides.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
        warmup_ratio: overrides.warmup_ratio.unwrap_or(DEFAULT_WARMUP_RATIO),
        lr_schedule: overrides.lr_schedule.clone().unwrap_or_else(|| "cosine".into()),
        save_policy: "last_epoch_of_final_stage".into(),
        instruction_template: overrides.instruction_template.clone(),
    })
}

/// Every order string of length 1 through `max_total_epochs`, sorted.
pub fn enumerate_orders(max_total_epochs: u32) -> Result<Vec<String>, ScheduleError> {
    if max_total_epochs == 0 {
        return Err(ScheduleError::ZeroEpochs);
    }
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for _ in 0..max_total_epochs {
        layer = layer
            .iter()
            .flat_map(|prefix| ["P", "S"].map(|g| format!("{prefix}{g}")))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out.sort();
    Ok(out)
}
