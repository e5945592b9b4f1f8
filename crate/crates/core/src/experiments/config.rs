use std::fmt;
use std::str::FromStr;

use crate::noise::{CrosstalkModel, DecayEnvelope, DetectionParams, NoiseParams};
use crate::program::Physics;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown preset `{0}` (expected one of fig3a, fig3b, fig4, fig5a, fig5b, g2_s1, g2_s2, boson)")]
    UnknownPreset(String),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Fig3a,
    Fig3b,
    Fig4,
    Fig5a,
    Fig5b,
    G2S1,
    G2S2,
    Boson,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Fig3a,
        Preset::Fig3b,
        Preset::Fig4,
        Preset::Fig5a,
        Preset::Fig5b,
        Preset::G2S1,
        Preset::G2S2,
        Preset::Boson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig3a => "fig3a",
            Preset::Fig3b => "fig3b",
            Preset::Fig4 => "fig4",
            Preset::Fig5a => "fig5a",
            Preset::Fig5b => "fig5b",
            Preset::G2S1 => "g2_s1",
            Preset::G2S2 => "g2_s2",
            Preset::Boson => "boson",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ConfigError::UnknownPreset(s.to_string()))
    }
}

/// Inclusive, evenly spaced sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl Sweep {
    pub fn new(start: f64, stop: f64, steps: usize) -> Self {
        Sweep { start, stop, steps }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.steps < 2 {
            return Err(ConfigError::Invalid(format!("sweep needs at least 2 steps, got {}", self.steps)));
        }
        if !(self.start.is_finite() && self.stop.is_finite() && self.start < self.stop) {
            return Err(ConfigError::Invalid(format!(
                "sweep start {} must be below stop {}",
                self.start, self.stop
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / last)
            .collect()
    }
}

/// Coincidence class reported by the NOON preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoonClass {
    C02,
    C11,
}

impl NoonClass {
    pub fn pattern(self) -> (u8, u8) {
        match self {
            NoonClass::C02 => (0, 2),
            NoonClass::C11 => (1, 1),
        }
    }
}

impl fmt::Display for NoonClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoonClass::C02 => f.write_str("02"),
            NoonClass::C11 => f.write_str("11"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Monte Carlo trials per sweep point (samples for `boson`).
    pub trials: u64,
    pub seed: u64,
    pub noise: NoiseParams,
    pub detection: DetectionParams,
    pub physics: Physics,
    /// ns for the time-domain presets, grid units for fig4, storage wait in
    /// ns for the g2 presets; unused by `boson`.
    pub sweep: Sweep,
    /// Replace noise and detection by their ideal forms (geometry kept).
    pub ideal: bool,
    /// Added to the sweep axis of plots only.
    pub plot_offset_ns: i64,
    pub noon_class: NoonClass,
    /// Scale of the fig4 plot axis, mrad per grid unit.
    pub mrad_per_grid: f64,
    pub boson_modes: usize,
    pub boson_photons: usize,
}

impl ExperimentConfig {
    pub const DEFAULT_TRIALS: u64 = 200_000;

    pub fn for_preset(preset: Preset) -> Self {
        let mut cfg = ExperimentConfig {
            preset,
            trials: Self::DEFAULT_TRIALS,
            seed: 1,
            noise: NoiseParams::default(),
            detection: DetectionParams::default(),
            physics: Physics::default(),
            sweep: Sweep::new(0.0, 620.0, 32),
            ideal: false,
            plot_offset_ns: 0,
            noon_class: NoonClass::C02,
            mrad_per_grid: 1.0,
            boson_modes: 7,
            boson_photons: 2,
        };
        match preset {
            Preset::Fig3a | Preset::Fig3b => {}
            Preset::Fig4 => {
                cfg.sweep = Sweep::new(0.0, 3.0, 4);
                cfg.detection.sigma_k = 0.3;
            }
            Preset::Fig5a | Preset::Fig5b => {
                cfg.sweep = Sweep::new(0.0, 5000.0, 64);
                cfg.detection.split_same_mode = preset == Preset::Fig5b;
                if preset == Preset::Fig5b {
                    cfg.plot_offset_ns = 800;
                }
            }
            Preset::G2S1 | Preset::G2S2 => {
                cfg.sweep = Sweep::new(0.0, 1000.0, 2);
                cfg.detection.split_same_mode = true;
            }
            Preset::Boson => {
                cfg.sweep = Sweep::new(0.0, 1.0, 2);
            }
        }
        cfg
    }

    /// Defaults for `default_preset` (or the file's own `preset` key) with
    /// the file's overrides applied.
    pub fn from_text(text: &str, default_preset: Preset) -> Result<Self, ConfigError> {
        let entries = parse_entries(text)?;
        let preset = match entries.iter().find(|(k, _, _)| k == "preset") {
            Some((_, v, _)) => v.parse()?,
            None => default_preset,
        };
        let mut cfg = ExperimentConfig::for_preset(preset);
        for (key, value, _) in &entries {
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.trials > crate::rng::MAX_TRIALS_PER_POINT {
            return Err(ConfigError::Invalid("trials exceed the per-point stream space".into()));
        }
        self.sweep.validate()?;
        self.noise
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.detection
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.physics.rabi_mhz > 0.0 && self.physics.rabi_mhz.is_finite()) {
            return Err(ConfigError::Invalid("physics.rabi_mhz must be positive".into()));
        }
        if !self.physics.larmor_mhz.is_finite() {
            return Err(ConfigError::Invalid("physics.larmor_mhz must be finite".into()));
        }
        if self.physics.grid_half_width < 0 {
            return Err(ConfigError::Invalid("physics.grid_half_width must be non-negative".into()));
        }
        if self.preset == Preset::Boson && (self.boson_modes == 0 || self.boson_photons == 0) {
            return Err(ConfigError::Invalid("boson.modes and boson.photons must be positive".into()));
        }
        Ok(())
    }

    /// Noise actually used for the run.
    pub fn effective_noise(&self) -> NoiseParams {
        if self.ideal {
            NoiseParams::ideal()
        } else {
            self.noise
        }
    }

    pub fn effective_detection(&self) -> DetectionParams {
        if self.ideal {
            self.detection.idealized()
        } else {
            self.detection
        }
    }

    /// Sets one dotted key. Keys are those listed by [`entries`](Self::entries).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "preset" => self.preset = v.parse()?,
            "trials" => self.trials = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "ideal" => self.ideal = boolean(key, v)?,
            "plot_offset_ns" => self.plot_offset_ns = num(key, v)?,
            "sweep.start" => self.sweep.start = num(key, v)?,
            "sweep.stop" => self.sweep.stop = num(key, v)?,
            "sweep.steps" => self.sweep.steps = num(key, v)?,
            "noise.eta_r" => self.noise.eta_r = num(key, v)?,
            "noise.eta_s" => self.noise.eta_s = num(key, v)?,
            "noise.p2_s1" => self.noise.p2_s1 = num(key, v)?,
            "noise.p2_s2" => self.noise.p2_s2 = num(key, v)?,
            "noise.tau_memory" => self.noise.tau_memory = num(key, v)?,
            "noise.tau_raman" => self.noise.tau_raman = num(key, v)?,
            "noise.envelope" => {
                self.noise.envelope = match v.to_ascii_lowercase().as_str() {
                    "gaussian" => DecayEnvelope::Gaussian,
                    "exponential" => DecayEnvelope::Exponential,
                    _ => return Err(bad(key, v, "expected gaussian or exponential")),
                }
            }
            "detection.eta_det_s1" => self.detection.eta_det_s1 = num(key, v)?,
            "detection.eta_det_s2" => self.detection.eta_det_s2 = num(key, v)?,
            "detection.sigma_k" => self.detection.sigma_k = num(key, v)?,
            "detection.p_dark" => self.detection.p_dark = num(key, v)?,
            "detection.p_crosstalk" => self.detection.p_crosstalk = num(key, v)?,
            "detection.crosstalk" => {
                self.detection.crosstalk = match v.to_ascii_lowercase().as_str() {
                    "misroute" => CrosstalkModel::Misroute,
                    "duplicate" => CrosstalkModel::Duplicate,
                    _ => return Err(bad(key, v, "expected misroute or duplicate")),
                }
            }
            "detection.split_same_mode" => self.detection.split_same_mode = boolean(key, v)?,
            "physics.rabi_mhz" => self.physics.rabi_mhz = num(key, v)?,
            "physics.larmor_mhz" => self.physics.larmor_mhz = num(key, v)?,
            "physics.grid_half_width" => self.physics.grid_half_width = num(key, v)?,
            "fig5b.class" => {
                self.noon_class = match v {
                    "02" => NoonClass::C02,
                    "11" => NoonClass::C11,
                    _ => return Err(bad(key, v, "expected 02 or 11")),
                }
            }
            "fig4.mrad_per_grid" => self.mrad_per_grid = num(key, v)?,
            "boson.modes" => self.boson_modes = num(key, v)?,
            "boson.photons" => self.boson_photons = num(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order. Feeding the
    /// result back through [`set`](Self::set) reproduces `self`.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("preset", self.preset.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("ideal", self.ideal.to_string()),
            ("plot_offset_ns", self.plot_offset_ns.to_string()),
            ("sweep.start", self.sweep.start.to_string()),
            ("sweep.stop", self.sweep.stop.to_string()),
            ("sweep.steps", self.sweep.steps.to_string()),
            ("noise.eta_r", self.noise.eta_r.to_string()),
            ("noise.eta_s", self.noise.eta_s.to_string()),
            ("noise.p2_s1", self.noise.p2_s1.to_string()),
            ("noise.p2_s2", self.noise.p2_s2.to_string()),
            ("noise.tau_memory", self.noise.tau_memory.to_string()),
            ("noise.tau_raman", self.noise.tau_raman.to_string()),
            ("noise.envelope", self.noise.envelope.to_string()),
            ("detection.eta_det_s1", self.detection.eta_det_s1.to_string()),
            ("detection.eta_det_s2", self.detection.eta_det_s2.to_string()),
            ("detection.sigma_k", self.detection.sigma_k.to_string()),
            ("detection.p_dark", self.detection.p_dark.to_string()),
            ("detection.p_crosstalk", self.detection.p_crosstalk.to_string()),
            ("detection.crosstalk", self.detection.crosstalk.to_string()),
            ("detection.split_same_mode", self.detection.split_same_mode.to_string()),
            ("physics.rabi_mhz", self.physics.rabi_mhz.to_string()),
            ("physics.larmor_mhz", self.physics.larmor_mhz.to_string()),
            ("physics.grid_half_width", self.physics.grid_half_width.to_string()),
            ("fig5b.class", self.noon_class.to_string()),
            ("fig4.mrad_per_grid", self.mrad_per_grid.to_string()),
            ("boson.modes", self.boson_modes.to_string()),
            ("boson.photons", self.boson_photons.to_string()),
        ]
    }
}

/// `(key, value, line)` triples; `#` comments and blank lines are skipped.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_string(), v.to_string(), i + 1));
    }
    Ok(out)
}

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| bad(key, value, e.to_string()))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}
