use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use super::config::{ConfigError, ExperimentConfig, Preset, Sweep};
use crate::fitting::{fit_damped_cosine, DampedCosineFit, FitOptions, Series, SeriesPoint};
use crate::fock::Spin;
use crate::noise::{
    corrected_dip_visibility, estimate_g2, hom_visibility, ramsey_visibility, CountsHistogram,
    DetectionParams, NoiseParams,
};
use crate::permanent::{occupations, output_distribution, Interferometer, PermanentError};
use crate::program::{
    CompiledProgram, ExecError, Physics, ProgramError, PulseProgram, Statement, DEFAULT_TRIAL_BUDGET_NS,
};
use crate::rng::trial_rng;

/// Trials handled by one parallel task.
const CHUNK: u64 = 8192;
/// Sweep-point index reserved for drawing the Boson-sampling interferometer.
const UNITARY_POINT: u64 = (1 << 24) - 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Permanent(#[from] PermanentError),
}

impl From<ProgramError> for RunError {
    fn from(e: ProgramError) -> Self {
        RunError::Exec(e.into())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub sweep: f64,
    /// One entry per [`ResultTable::classes`].
    pub counts: Vec<u64>,
    pub rate: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub name: String,
    pub classes: Vec<String>,
    pub rows: Vec<Row>,
    /// Config echo, rerunnable as a config file.
    pub config: Vec<(String, String)>,
    /// Derived results: fit parameters, visibilities.
    pub results: Vec<(String, String)>,
    pub x_label: String,
    pub y_label: String,
    /// Added to sweep values on plots.
    pub plot_offset: f64,
    /// Multiplies sweep values on plots.
    pub plot_scale: f64,
}

impl ResultTable {
    pub fn result(&self, key: &str) -> Option<&str> {
        self.results.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn result_f64(&self, key: &str) -> Option<f64> {
        self.result(key).and_then(|v| v.parse().ok())
    }

    fn push_result(&mut self, key: &str, value: impl fmt::Display) {
        self.results.push((key.to_string(), value.to_string()));
    }
}

/// Click patterns `(n1, n2)` in table order.
pub const CLASSES: [(u8, u8); 9] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (2, 1),
    (1, 2),
    (2, 2),
];

/// Quantity reported in the `rate` column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derived {
    /// Fraction of trials with at least one click in the window.
    Singles(Spin),
    /// Fraction of trials with exactly this click pattern.
    Class(u8, u8),
    /// Split-detector autocorrelation of one window.
    G2(Spin),
}

impl Derived {
    /// `(rate, err, count)`. Counting errors are `√k/N`; the g² error
    /// propagates `√k` on the coincidence and both singles.
    pub fn evaluate(self, hist: &CountsHistogram) -> (f64, f64, u64) {
        let n = hist.total_trials().max(1) as f64;
        match self {
            Derived::Singles(spin) => {
                let k: u64 = hist
                    .entries()
                    .filter(|&((a, b), _)| if spin == Spin::S1 { a > 0 } else { b > 0 })
                    .map(|(_, c)| c)
                    .sum();
                (k as f64 / n, (k as f64).sqrt() / n, k)
            }
            Derived::Class(a, b) => {
                let k = hist.count(a, b);
                (k as f64 / n, (k as f64).sqrt() / n, k)
            }
            Derived::G2(spin) => {
                let c = if spin == Spin::S1 {
                    (0..3).map(|b| hist.count(2, b)).sum::<u64>()
                } else {
                    (0..3).map(|a| hist.count(a, 2)).sum::<u64>()
                };
                let a = hist.detector_clicks(spin, 0) as f64;
                let b = hist.detector_clicks(spin, 1) as f64;
                match estimate_g2(hist, spin) {
                    Ok(g) => {
                        let rel = (1.0 / (c.max(1) as f64) + 1.0 / a + 1.0 / b).sqrt();
                        let err = if c == 0 { n / (a * b) } else { g * rel };
                        (g, err, c)
                    }
                    Err(_) => (f64::NAN, f64::NAN, c),
                }
            }
        }
    }

    fn label(self) -> String {
        match self {
            Derived::Singles(s) => format!("P(click in {s})"),
            Derived::Class(a, b) => format!("P({a},{b})"),
            Derived::G2(s) => format!("g2 ({s})"),
        }
    }
}

/// Runs `trials` Monte Carlo trials of sweep point `point`. Trial `t` draws
/// from its own substream, so the result does not depend on the thread count.
pub fn run_point(
    compiled: &CompiledProgram,
    noise: &NoiseParams,
    det: &DetectionParams,
    seed: u64,
    point: u64,
    trials: u64,
) -> Result<CountsHistogram, ExecError> {
    let chunks: Vec<(u64, u64)> = (0..trials.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(trials)))
        .collect();
    let parts: Vec<Result<CountsHistogram, ExecError>> = chunks
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut hist = CountsHistogram::new();
            for t in lo..hi {
                let mut rng = trial_rng(seed, point, t);
                hist.record(&compiled.run_trial(noise, det, &mut rng)?);
            }
            Ok(hist)
        })
        .collect();
    let mut total = CountsHistogram::new();
    for part in parts {
        total.merge(&part?);
    }
    Ok(total)
}

/// Runs every program as one sweep point and tabulates all nine click classes.
pub fn run_sweep(
    name: &str,
    sweep_values: &[f64],
    programs: &[PulseProgram],
    derived: Derived,
    config: &ExperimentConfig,
    physics: &Physics,
) -> Result<(ResultTable, Vec<CountsHistogram>), RunError> {
    let noise = config.effective_noise();
    let det = config.effective_detection();
    let mut rows = Vec::new();
    let mut hists = Vec::new();
    for (i, (x, program)) in sweep_values.iter().zip(programs).enumerate() {
        program.validate(DEFAULT_TRIAL_BUDGET_NS)?;
        let compiled = CompiledProgram::compile(program, physics)?;
        let hist = run_point(&compiled, &noise, &det, config.seed, i as u64, config.trials)?;
        let (rate, err, _) = derived.evaluate(&hist);
        rows.push(Row {
            sweep: *x,
            counts: CLASSES.iter().map(|&(a, b)| hist.count(a, b)).collect(),
            rate,
            err,
        });
        hists.push(hist);
    }
    let table = ResultTable {
        name: name.to_string(),
        classes: CLASSES.iter().map(|(a, b)| format!("{a}{b}")).collect(),
        rows,
        config: config
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        results: vec![("rate".to_string(), derived.label())],
        x_label: String::new(),
        y_label: derived.label(),
        plot_offset: 0.0,
        plot_scale: 1.0,
    };
    Ok((table, hists))
}

fn ns(x: f64) -> Result<u64, ConfigError> {
    if x < -0.5 {
        return Err(ConfigError::Invalid(format!("negative duration {x} ns in sweep")));
    }
    Ok(x.round().max(0.0) as u64)
}

fn raman(duration_ns: u64, kshift: i32) -> Statement {
    Statement::Raman {
        duration_ns,
        kshift,
        rabi_mhz: None,
    }
}

/// Pulse length of a 50:50 Raman beam splitter, ns.
pub fn half_pi_ns(rabi_mhz: f64) -> u64 {
    (1e3 / (4.0 * rabi_mhz)).round() as u64
}

fn both_reads() -> [Statement; 2] {
    [Statement::Read(Spin::S1), Statement::Read(Spin::S2)]
}

/// Builds the preset's programs, runs them and attaches fits and visibilities.
pub fn run_preset(config: &ExperimentConfig) -> Result<ResultTable, RunError> {
    config.validate()?;
    if config.preset == Preset::Boson {
        return run_boson(config);
    }
    let xs = config.sweep.values();
    let half = half_pi_ns(config.physics.rabi_mhz);
    let mut physics = config.physics;
    let mut programs = Vec::with_capacity(xs.len());
    let (derived, x_label) = match config.preset {
        Preset::Fig3a => {
            for &x in &xs {
                let mut st = vec![Statement::Prepare(Spin::S1), raman(ns(x)?, 0)];
                st.extend(both_reads());
                programs.push(PulseProgram::new(st));
            }
            (Derived::Singles(Spin::S2), "Raman pulse duration (ns)")
        }
        Preset::Fig3b => {
            for &x in &xs {
                let mut st = vec![
                    Statement::Prepare(Spin::S1),
                    Statement::Prepare(Spin::S2),
                    raman(ns(x)?, 0),
                ];
                st.extend(both_reads());
                programs.push(PulseProgram::new(st));
            }
            (Derived::Class(1, 1), "Raman pulse duration (ns)")
        }
        Preset::Fig4 => {
            let mut ks: Vec<i32> = Vec::new();
            for &x in &xs {
                let k = x.round() as i32;
                if ks.contains(&k) {
                    return Err(ConfigError::Invalid(format!("fig4 sweep repeats kick {k} after rounding to grid units")).into());
                }
                ks.push(k);
            }
            let kmax = ks.iter().map(|k| k.abs()).max().unwrap_or(0);
            physics.grid_half_width = physics.grid_half_width.max(kmax);
            for &k in &ks {
                let mut st = vec![
                    Statement::Prepare(Spin::S1),
                    Statement::Prepare(Spin::S2),
                    raman(half, k),
                ];
                st.extend(both_reads());
                programs.push(PulseProgram::new(st));
            }
            (Derived::Class(1, 1), "Raman separation angle (mrad)")
        }
        Preset::Fig5a | Preset::Fig5b => {
            for &x in &xs {
                let mut st = vec![Statement::Prepare(Spin::S1)];
                if config.preset == Preset::Fig5b {
                    st.push(Statement::Prepare(Spin::S2));
                }
                st.extend([raman(half, 0), Statement::Wait(ns(x)?), raman(half, 0)]);
                st.extend(both_reads());
                programs.push(PulseProgram::new(st));
            }
            if config.preset == Preset::Fig5a {
                (Derived::Singles(Spin::S2), "Ramsey delay (ns)")
            } else {
                let (a, b) = config.noon_class.pattern();
                (Derived::Class(a, b), "Ramsey delay (ns)")
            }
        }
        Preset::G2S1 | Preset::G2S2 => {
            let spin = if config.preset == Preset::G2S1 { Spin::S1 } else { Spin::S2 };
            for &x in &xs {
                programs.push(PulseProgram::new(vec![
                    Statement::Prepare(spin),
                    Statement::Wait(ns(x)?),
                    Statement::Read(spin),
                ]));
            }
            (Derived::G2(spin), "storage time before read (ns)")
        }
        Preset::Boson => unreachable!(),
    };
    let (mut table, hists) = run_sweep(config.preset.name(), &xs, &programs, derived, config, &physics)?;
    table.x_label = x_label.to_string();
    match config.preset {
        Preset::Fig3a | Preset::Fig3b => {
            attach_fit(&mut table, config.trials, &FitOptions::default());
            if config.preset == Preset::Fig3b {
                attach_hom(&mut table, config.physics.rabi_mhz);
            }
        }
        Preset::Fig4 => {
            table.plot_scale = config.mrad_per_grid;
            let c0 = table.rows[0].counts[4] as f64;
            let last = table.rows.last().expect("sweep has points");
            let c_far = last.counts[4] as f64;
            table.push_result("fig4.c_center", c0);
            table.push_result("fig4.c_far", c_far);
            match hom_visibility(c0, 2.0 * c_far) {
                Ok(v) => {
                    table.push_result("fig4.raw_visibility", v);
                    table.push_result("fig4.corrected_visibility", corrected_dip_visibility(v));
                }
                Err(e) => table.push_result("fig4.error", e),
            }
        }
        Preset::Fig5a | Preset::Fig5b => {
            table.plot_offset = config.plot_offset_ns as f64;
            if let Some(fit) = attach_fit(&mut table, config.trials, &FitOptions::pure_cosine()) {
                match ramsey_visibility(&fit) {
                    Ok(v) => {
                        table.push_result("ramsey.visibility", v.value);
                        table.push_result("ramsey.above_classical_bound", v.above_classical_bound);
                    }
                    Err(e) => table.push_result("ramsey.error", e),
                }
            }
        }
        Preset::G2S1 | Preset::G2S2 => {
            let mut pooled = CountsHistogram::new();
            for h in &hists {
                pooled.merge(h);
            }
            let (g, err, _) = derived.evaluate(&pooled);
            table.push_result("g2.pooled", g);
            table.push_result("g2.pooled_err", err);
        }
        Preset::Boson => {}
    }
    Ok(table)
}

/// Damped-cosine fit of the derived counts against sweep time in seconds.
/// Returns the fit when it converged; failures are recorded in the results.
fn attach_fit(table: &mut ResultTable, trials: u64, options: &FitOptions) -> Option<DampedCosineFit> {
    // rate·N recovers the raw count of the derived column.
    let points: Vec<SeriesPoint> = table
        .rows
        .iter()
        .map(|r| SeriesPoint {
            t: r.sweep * 1e-9,
            y: (r.rate * trials as f64).round(),
            weight: None,
        })
        .collect();
    let fit = Series::new(points).and_then(|s| fit_damped_cosine(&s, options));
    match fit {
        Ok(fit) => {
            let sig = |i: usize| fit.covariance_diag[i].max(0.0).sqrt();
            table.push_result("fit.units", "counts vs seconds");
            table.push_result("fit.frequency_mhz", fit.frequency * 1e-6);
            table.push_result("fit.frequency_mhz_err", sig(2) * 1e-6);
            table.push_result("fit.offset", fit.offset);
            table.push_result("fit.amplitude", fit.amplitude);
            table.push_result("fit.phase", fit.phase);
            table.push_result("fit.tau_us", fit.tau * 1e6);
            table.push_result("fit.residual_norm", fit.residual_norm);
            table.push_result("fit.iterations", fit.iterations);
            table.push_result("fit.converged", fit.converged);
            fit.converged.then_some(fit)
        }
        Err(e) => {
            table.push_result("fit.error", e);
            None
        }
    }
}

/// Dip visibility `1 - 2·C(π/2)/C(0)` and the location of the first dip.
fn attach_hom(table: &mut ResultTable, rabi_mhz: f64) {
    let t_half = 1e3 / (4.0 * rabi_mhz);
    let period = 2.0 * t_half;
    let nearest = |target: f64| {
        table
            .rows
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.sweep - target).abs().total_cmp(&(b.1.sweep - target).abs()))
            .map(|(i, _)| i)
            .expect("sweep has points")
    };
    let first_period_min = table
        .rows
        .iter()
        .filter(|r| r.sweep > 0.0 && r.sweep <= period)
        .min_by(|a, b| a.counts[4].cmp(&b.counts[4]))
        .map(|r| r.sweep);
    let dip = nearest(t_half);
    if let Some(x) = first_period_min {
        table.push_result("hom.first_dip_ns", x);
    }
    table.push_result("hom.nearest_half_pi_ns", table.rows[dip].sweep);
    if table.rows[0].sweep.abs() < 0.5 {
        let c_ref = table.rows[0].counts[4] as f64;
        let c_dip = table.rows[dip].counts[4] as f64;
        match hom_visibility(c_dip, c_ref) {
            Ok(v) => table.push_result("hom.visibility", v),
            Err(e) => table.push_result("hom.error", e),
        }
    }
}

fn run_boson(config: &ExperimentConfig) -> Result<ResultTable, RunError> {
    let m = config.boson_modes;
    let n = config.boson_photons;
    if n > m {
        return Err(ConfigError::Invalid(format!("boson.photons {n} exceeds boson.modes {m}")).into());
    }
    let mut urng = trial_rng(config.seed, UNITARY_POINT, 0);
    let u = Interferometer::haar_random(m, &mut urng);
    let input: Vec<u8> = (0..m).map(|i| (i < n) as u8).collect();
    let exact = output_distribution(&u, &input)?;
    let outputs = occupations(m, n as u32);
    let probs: Vec<f64> = outputs.iter().map(|o| exact[o]).collect();
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let trials = config.trials;
    let chunks: Vec<(u64, u64)> = (0..trials.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(trials)))
        .collect();
    let parts: Vec<Vec<u64>> = chunks
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut counts = vec![0u64; outputs.len()];
            for t in lo..hi {
                let mut rng = trial_rng(config.seed, 0, t);
                let x = rng.random::<f64>() * acc;
                let idx = cdf.partition_point(|&c| c <= x).min(cdf.len() - 1);
                counts[idx] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; outputs.len()];
    for part in parts {
        for (c, p) in counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    let nt = trials as f64;
    let rows = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| Row {
            sweep: i as f64,
            counts: vec![k],
            rate: k as f64 / nt,
            err: (k as f64).sqrt() / nt,
        })
        .collect::<Vec<_>>();
    let tv: f64 = 0.5
        * counts
            .iter()
            .zip(&probs)
            .map(|(&k, p)| (k as f64 / nt - p).abs())
            .sum::<f64>();
    let label = |o: &Vec<u8>| o.iter().map(|d| d.to_string()).collect::<String>();
    let mut table = ResultTable {
        name: config.preset.name().to_string(),
        classes: vec!["sampled".to_string()],
        rows,
        config: config
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        results: Vec::new(),
        x_label: "output index (canonical order)".to_string(),
        y_label: "sampled frequency".to_string(),
        plot_offset: 0.0,
        plot_scale: 1.0,
    };
    table.push_result("boson.input", label(&input));
    table.push_result(
        "boson.outputs",
        outputs.iter().map(label).collect::<Vec<_>>().join(" "),
    );
    table.push_result(
        "boson.exact",
        probs.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" "),
    );
    table.push_result("boson.total_variation", tv);
    Ok(table)
}

/// Statement field addressed by `--sweep`: `raman.duration`, `wait.duration`,
/// `raman.angle`, `raman.rabi`. A 1-based index such as `raman[2].duration`
/// selects one statement; without it every matching statement is swept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepTarget {
    pub kind: StatementKind,
    pub index: Option<usize>,
    pub field: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatementKind {
    Raman,
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Duration,
    Angle,
    Rabi,
}

/// Parses `key:start:stop:steps`.
pub fn parse_sweep_spec(spec: &str) -> Result<(SweepTarget, Sweep), ConfigError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = |reason: &str| ConfigError::BadValue {
        key: "--sweep".to_string(),
        value: spec.to_string(),
        reason: reason.to_string(),
    };
    if parts.len() != 4 {
        return Err(bad("expected key:start:stop:steps"));
    }
    let (head, field) = parts[0]
        .split_once('.')
        .ok_or_else(|| bad("key must look like raman.duration"))?;
    let (kind, index) = match head.split_once('[') {
        Some((k, rest)) => {
            let i: usize = rest
                .strip_suffix(']')
                .and_then(|s| s.parse().ok())
                .filter(|&i| i >= 1)
                .ok_or_else(|| bad("statement index must be a positive integer"))?;
            (k, Some(i))
        }
        None => (head, None),
    };
    let kind = match kind.to_ascii_lowercase().as_str() {
        "raman" => StatementKind::Raman,
        "wait" => StatementKind::Wait,
        _ => return Err(bad("only raman and wait statements can be swept")),
    };
    let field = match (kind, field.to_ascii_lowercase().as_str()) {
        (_, "duration") => Field::Duration,
        (StatementKind::Raman, "angle") => Field::Angle,
        (StatementKind::Raman, "rabi") => Field::Rabi,
        _ => return Err(bad("unknown field")),
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("malformed number"));
    let steps: usize = parts[3].parse().map_err(|_| bad("malformed step count"))?;
    let sweep = Sweep::new(num(parts[1])?, num(parts[2])?, steps);
    sweep.validate()?;
    Ok((SweepTarget { kind, index, field }, sweep))
}

impl SweepTarget {
    /// Copy of `program` with the target set to `value`; errors if nothing matches.
    pub fn apply(&self, program: &PulseProgram, value: f64) -> Result<PulseProgram, ConfigError> {
        let mut out = program.clone();
        let mut seen = 0;
        let mut hit = false;
        for st in &mut out.statements {
            let matches = matches!(
                (self.kind, &*st),
                (StatementKind::Raman, Statement::Raman { .. }) | (StatementKind::Wait, Statement::Wait(_))
            );
            if !matches {
                continue;
            }
            seen += 1;
            if self.index.is_some_and(|i| i != seen) {
                continue;
            }
            hit = true;
            match (st, self.field) {
                (Statement::Wait(d), Field::Duration) => *d = ns(value)?,
                (Statement::Raman { duration_ns, .. }, Field::Duration) => *duration_ns = ns(value)?,
                (Statement::Raman { kshift, .. }, Field::Angle) => *kshift = value.round() as i32,
                (Statement::Raman { rabi_mhz, .. }, Field::Rabi) => {
                    if !(value > 0.0) {
                        return Err(ConfigError::Invalid(format!("rabi {value} MHz must be positive")));
                    }
                    *rabi_mhz = Some(value)
                }
                _ => unreachable!("field checked at parse time"),
            }
        }
        if !hit {
            return Err(ConfigError::Invalid("sweep key matches no statement in the program".into()));
        }
        Ok(out)
    }
}

/// Runs a user program over a sweep. The rate column is the {1,1}
/// coincidence rate when both windows are read, else the singles rate of the
/// read window.
pub fn run_program(
    name: &str,
    program: &PulseProgram,
    target: &SweepTarget,
    sweep: &Sweep,
    config: &ExperimentConfig,
) -> Result<ResultTable, RunError> {
    config.validate()?;
    sweep.validate()?;
    let xs = sweep.values();
    let programs = xs
        .iter()
        .map(|&x| target.apply(program, x))
        .collect::<Result<Vec<_>, _>>()?;
    let reads: Vec<Spin> = program
        .statements
        .iter()
        .filter_map(|s| match s {
            Statement::Read(spin) => Some(*spin),
            _ => None,
        })
        .collect();
    let derived = match reads.as_slice() {
        [only] => Derived::Singles(*only),
        _ => Derived::Class(1, 1),
    };
    let (mut table, _) = run_sweep(name, &xs, &programs, derived, config, &config.physics)?;
    table.x_label = format!("{:?} {:?}", target.kind, target.field).to_lowercase();
    table.push_result("program", program.print().trim_end().replace('\n', "; "));
    Ok(table)
}
