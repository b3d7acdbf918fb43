//! Run configuration: TOML schema, shipped scenario presets, defaults and
//! validation with line-referenced errors.

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::awareness::Paradigm;
use crate::constellation::{ConstellationSpec, ShellSpec};
use crate::routing::LoopPolicy;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
}

impl ConfigError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            line: None,
            message: message.into(),
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } => Some(*line),
            ConfigError::Invalid { line, .. } => *line,
            ConfigError::UnknownPreset(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureModel {
    None,
    Random,
    Targeted,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub constellation: String,
    pub shells: Option<Vec<ShellSpec>>,
    pub paradigm: Paradigm,
    pub segment_count: usize,
    pub failure_model: FailureModel,
    pub fraction: f64,
    pub downtime_s: f64,
    pub outage_start_s: f64,
    pub outage_duration_s: f64,
    pub traffic_rate_per_s: f64,
    pub burst_s: f64,
    pub horizon_s: f64,
    pub drain_s: f64,
    pub loop_threshold: Option<u32>,
    pub ground_stations: usize,
    pub ground_station_seed: u64,
    pub seed: u64,
    pub partition_seed: Option<u64>,
    pub traffic_seed: Option<u64>,
    pub failure_seed: Option<u64>,
    pub output_dir: PathBuf,
    pub bin_s: f64,
    pub tick_s: f64,
}

impl Default for RunConfig {
    /// Iridium under segment-based rerouting with no failures.
    fn default() -> Self {
        Self {
            constellation: "iridium".into(),
            shells: None,
            paradigm: Paradigm::Segment,
            segment_count: 3,
            failure_model: FailureModel::None,
            fraction: 0.0,
            downtime_s: 60.0,
            outage_start_s: 450.0,
            outage_duration_s: 300.0,
            traffic_rate_per_s: 1.0,
            burst_s: 3.0,
            horizon_s: 7200.0,
            drain_s: 600.0,
            loop_threshold: None,
            ground_stations: 256,
            ground_station_seed: 0,
            seed: 1,
            partition_seed: None,
            traffic_seed: None,
            failure_seed: None,
            output_dir: PathBuf::from("out"),
            bin_s: 60.0,
            tick_s: 10.0,
        }
    }
}

/// On-disk form: every field optional, unknown keys rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    constellation: Option<String>,
    shells: Option<Vec<ShellSpec>>,
    paradigm: Option<Paradigm>,
    segment_count: Option<usize>,
    failure_model: Option<FailureModel>,
    fraction: Option<f64>,
    downtime_s: Option<f64>,
    outage_start_s: Option<f64>,
    outage_duration_s: Option<f64>,
    traffic_rate_per_s: Option<f64>,
    burst_s: Option<f64>,
    horizon_s: Option<f64>,
    drain_s: Option<f64>,
    loop_threshold: Option<u32>,
    ground_stations: Option<usize>,
    ground_station_seed: Option<u64>,
    seed: Option<u64>,
    partition_seed: Option<u64>,
    traffic_seed: Option<u64>,
    failure_seed: Option<u64>,
    output_dir: Option<PathBuf>,
    bin_s: Option<f64>,
    tick_s: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $raw:expr, [$($f:ident),*], [$($o:ident),*]) => {
        $( if let Some(v) = $raw.$f { $base.$f = v; } )*
        $( if $raw.$o.is_some() { $base.$o = $raw.$o; } )*
    };
}

impl RawConfig {
    fn apply(self, base: &mut RunConfig) {
        overlay!(
            base,
            self,
            [
                constellation,
                paradigm,
                segment_count,
                failure_model,
                fraction,
                downtime_s,
                outage_start_s,
                outage_duration_s,
                traffic_rate_per_s,
                burst_s,
                horizon_s,
                drain_s,
                ground_stations,
                ground_station_seed,
                seed,
                output_dir,
                bin_s,
                tick_s
            ],
            [shells, loop_threshold, partition_seed, traffic_seed, failure_seed]
        );
    }
}

const PRESETS: [(&str, &str); 12] = [
    (
        "iridium-random-f00",
        include_str!("../presets/iridium-random-f00.toml"),
    ),
    (
        "iridium-random-f15",
        include_str!("../presets/iridium-random-f15.toml"),
    ),
    (
        "iridium-random-f30",
        include_str!("../presets/iridium-random-f30.toml"),
    ),
    (
        "starlink-random-f00",
        include_str!("../presets/starlink-random-f00.toml"),
    ),
    (
        "starlink-random-f15",
        include_str!("../presets/starlink-random-f15.toml"),
    ),
    (
        "starlink-random-f30",
        include_str!("../presets/starlink-random-f30.toml"),
    ),
    (
        "leoleo-random-f00",
        include_str!("../presets/leoleo-random-f00.toml"),
    ),
    (
        "leoleo-random-f15",
        include_str!("../presets/leoleo-random-f15.toml"),
    ),
    (
        "leoleo-random-f30",
        include_str!("../presets/leoleo-random-f30.toml"),
    ),
    (
        "targeted-iridium",
        include_str!("../presets/targeted-iridium.toml"),
    ),
    (
        "targeted-starlink",
        include_str!("../presets/targeted-starlink.toml"),
    ),
    ("targeted-leoleo", include_str!("../presets/targeted-leoleo.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map(|i| i + 1)
}

fn parse_raw(text: &str) -> Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })
}

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    let text = preset_text(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    let raw = parse_raw(text)?;
    let mut cfg = RunConfig::default();
    raw.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config file. A `preset` key supplies the base; other keys
/// override it. Missing keys take the Iridium defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw = parse_raw(text)?;
    let mut cfg = match &raw.preset {
        Some(name) => preset(name).map_err(|e| match e {
            ConfigError::UnknownPreset(n) => ConfigError::Invalid {
                field: "preset".into(),
                line: line_of_key(text, "preset"),
                message: format!("unknown preset '{n}'"),
            },
            other => other,
        })?,
        None => RunConfig::default(),
    };
    raw.apply(&mut cfg);
    cfg.validate().map_err(|e| match e {
        ConfigError::Invalid { field, message, .. } => ConfigError::Invalid {
            line: line_of_key(text, &field),
            field,
            message,
        },
        other => other,
    })?;
    Ok(cfg)
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be >= 0, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(ConfigError::invalid(
                "fraction",
                format!("must be in [0, 1], got {}", self.fraction),
            ));
        }
        positive("horizon_s", self.horizon_s)?;
        positive("traffic_rate_per_s", self.traffic_rate_per_s)?;
        positive("burst_s", self.burst_s)?;
        positive("bin_s", self.bin_s)?;
        positive("tick_s", self.tick_s)?;
        positive("downtime_s", self.downtime_s)?;
        non_negative("drain_s", self.drain_s)?;
        non_negative("outage_start_s", self.outage_start_s)?;
        non_negative("outage_duration_s", self.outage_duration_s)?;
        if self.failure_model == FailureModel::Targeted
            && self.outage_start_s + self.outage_duration_s > self.horizon_s
        {
            return Err(ConfigError::invalid(
                "outage_duration_s",
                "outage must end by the horizon",
            ));
        }
        if self.segment_count == 0 {
            return Err(ConfigError::invalid("segment_count", "must be >= 1"));
        }
        if self.ground_stations < 2 {
            return Err(ConfigError::invalid("ground_stations", "must be >= 2"));
        }
        if self.loop_threshold == Some(0) {
            return Err(ConfigError::invalid("loop_threshold", "must be >= 1"));
        }
        let spec = self.constellation_spec()?;
        if self.segment_count > spec.satellite_count() {
            return Err(ConfigError::invalid(
                "segment_count",
                format!("exceeds satellite count {}", spec.satellite_count()),
            ));
        }
        Ok(())
    }

    pub fn constellation_spec(&self) -> Result<ConstellationSpec, ConfigError> {
        match &self.shells {
            Some(shells) => {
                let mut spec = ConstellationSpec::preset(&self.constellation)
                    .unwrap_or_else(|_| ConstellationSpec::iridium());
                spec.name = self.constellation.clone();
                spec.shells = shells.clone();
                spec.validate()
                    .map_err(|e| ConfigError::invalid("shells", e.to_string()))?;
                Ok(spec)
            }
            None => ConstellationSpec::preset(&self.constellation)
                .map_err(|e| ConfigError::invalid("constellation", e.to_string())),
        }
    }

    pub fn loop_policy(&self) -> LoopPolicy {
        match self.loop_threshold {
            Some(threshold) => LoopPolicy { threshold },
            None => LoopPolicy::for_constellation(&self.constellation),
        }
    }

    pub fn partition_seed(&self) -> u64 {
        self.partition_seed
            .unwrap_or_else(|| derive_seed(self.seed, Stream::Partition))
    }

    pub fn traffic_seed(&self) -> u64 {
        self.traffic_seed
            .unwrap_or_else(|| derive_seed(self.seed, Stream::Traffic))
    }

    pub fn failure_seed(&self) -> u64 {
        self.failure_seed
            .unwrap_or_else(|| derive_seed(self.seed, Stream::Failure))
    }

    /// Fraction actually in force: zero unless the random model is active.
    pub fn effective_fraction(&self) -> f64 {
        if self.failure_model == FailureModel::Random {
            self.fraction
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Partition = 1,
    Traffic = 2,
    Failure = 3,
}

/// Independent per-concern seed drawn from the master seed.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = parse_config("preset = \"iridium-random-f15\"\nparadigm = \"neighbor\"\n").unwrap();
        assert_eq!(cfg.paradigm, Paradigm::Neighbor);
        assert_eq!(cfg.fraction, 0.15);
        assert_eq!(cfg.horizon_s, 7200.0);
        assert_eq!(cfg.ground_stations, 256);
        let bare = parse_config("paradigm = \"global\"").unwrap();
        assert_eq!(bare.constellation, "iridium");
        assert_eq!(bare.segment_count, 3);
    }

    #[test]
    fn fraction_out_of_range() {
        let err = parse_config("paradigm = \"global\"\n\nfraction = 1.5\n").unwrap_err();
        assert_eq!(err.line(), Some(3));
        assert!(err.to_string().contains("fraction"), "{err}");
    }

    #[test]
    fn unknown_key_and_type_mismatch() {
        let err = parse_config("paradigm = \"global\"\nbogus = 3\n").unwrap_err();
        assert_eq!(err.line(), Some(2));
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = parse_config("horizon_s = \"long\"\n").unwrap_err();
        assert_eq!(err.line(), Some(1));
        let err = parse_config("paradigm = \"psychic\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
        let err = parse_config("preset = \"nope\"\n").unwrap_err();
        assert_eq!(err.line(), Some(1));
    }

    #[test]
    fn iridium_f30_preset() {
        let cfg = preset("iridium-random-f30").unwrap();
        assert_eq!(cfg.fraction, 0.30);
        assert_eq!(cfg.downtime_s, 60.0);
        assert_eq!(cfg.horizon_s, 7200.0);
        assert_eq!(cfg.traffic_rate_per_s, 1.0);
        assert_eq!(cfg.segment_count, 3);
        assert_eq!(cfg.failure_model, FailureModel::Random);
    }

    #[test]
    fn every_preset_matches_experiment_design() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.segment_count, 3, "{name}");
            assert_eq!(cfg.ground_stations, 256, "{name}");
            assert_eq!(cfg.burst_s, 3.0, "{name}");
            assert_eq!(cfg.downtime_s, 60.0, "{name}");
            if let Some(c) = name.strip_prefix("targeted-") {
                assert_eq!(cfg.constellation, c);
                assert_eq!(cfg.failure_model, FailureModel::Targeted);
                assert_eq!(cfg.horizon_s, 1200.0);
                assert_eq!(cfg.traffic_rate_per_s, 1.0);
                assert_eq!((cfg.outage_start_s, cfg.outage_duration_s), (450.0, 300.0));
                assert_eq!(cfg.fraction, 0.0);
            } else {
                let (c, f) = name.split_once("-random-f").unwrap();
                assert_eq!(cfg.constellation, c);
                assert_eq!(cfg.failure_model, FailureModel::Random);
                assert_eq!(cfg.fraction, f.parse::<f64>().unwrap() / 100.0);
                let (horizon, rate) = if c == "iridium" {
                    (7200.0, 1.0)
                } else {
                    (1800.0, 0.5)
                };
                assert_eq!((cfg.horizon_s, cfg.traffic_rate_per_s), (horizon, rate), "{name}");
            }
        }
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        let cfg = RunConfig::default();
        let seeds = [cfg.partition_seed(), cfg.traffic_seed(), cfg.failure_seed()];
        assert_ne!(seeds[0], seeds[1]);
        assert_ne!(seeds[1], seeds[2]);
        let other = RunConfig {
            seed: 2,
            ..cfg.clone()
        };
        assert_ne!(other.traffic_seed(), cfg.traffic_seed());
        let pinned = RunConfig {
            traffic_seed: Some(5),
            ..cfg
        };
        assert_eq!(pinned.traffic_seed(), 5);
    }

    #[test]
    fn explicit_shells() {
        let text = "constellation = \"tiny\"\nsegment_count = 2\n\n[[shells]]\nplane_count = 4\nsats_per_plane = 6\naltitude_km = 700.0\ninclination_deg = 80.0\n";
        let cfg = parse_config(text).unwrap();
        let spec = cfg.constellation_spec().unwrap();
        assert_eq!(spec.satellite_count(), 24);
        assert_eq!(cfg.loop_policy().threshold, 12);
    }
}
