//! Batch front-end: TOML run configuration in, CSV files and a manifest out.
//!
//! Everything is computed in memory first; each output file is then written
//! to a temporary file in the output directory and renamed into place, and
//! `manifest.json` is written last. A failed run leaves no partial outputs.
//! See `FORMATS.md` at the repository root for config keys and CSV schemas.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    cir_from_freq_response, format_cir, load_cir_file, load_freq_response_file, ChannelEnsemble,
    SyntheticProfile, DEFAULT_DECAY_TAPS, DEFAULT_ENSEMBLE_SEED, DEFAULT_NOISE_FLOOR,
    DEFAULT_N_CIRS, DEFAULT_N_TAPS, DEFAULT_TAP_SPACING,
};
use crate::error::{Error, Result};
use crate::precoder::ShiftDirection;
use crate::scenario::{
    default_peak_grid, default_sweep, run_multiuser_sir, run_peak_vs_shift, GridPoint,
    MultiuserConfig, MultiuserSirResult, PeakVsShiftResult, ShiftSchedule, DEFAULT_BUDGET,
    DEFAULT_N_USERS, DEFAULT_STEP_PERCENT, DEFAULT_SUBSET_SEED,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_INPUT_FORMAT: i32 = 5;
pub const EXIT_COMPUTE: i32 = 6;

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Format { .. } => EXIT_INPUT_FORMAT,
        _ => EXIT_COMPUTE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    PeakVsShift,
    MultiuserSir,
    GenerateEnsemble,
    IngestFreq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleSource {
    Synthetic,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub source: EnsembleSource,
    pub path: Option<PathBuf>,
    pub n_cirs: usize,
    pub n_taps: usize,
    pub decay_taps: f64,
    pub noise_floor: f64,
    pub tap_spacing: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            source: EnsembleSource::Synthetic,
            path: None,
            n_cirs: DEFAULT_N_CIRS,
            n_taps: DEFAULT_N_TAPS,
            decay_taps: DEFAULT_DECAY_TAPS,
            noise_floor: DEFAULT_NOISE_FLOOR,
            tap_spacing: DEFAULT_TAP_SPACING,
            seed: DEFAULT_ENSEMBLE_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakVsShiftConfig {
    pub directions: Vec<ShiftDirection>,
    pub percents: Vec<f64>,
}

impl Default for PeakVsShiftConfig {
    fn default() -> Self {
        let grid = default_peak_grid();
        let mut percents: Vec<f64> = grid.iter().map(|g| g.percent).collect();
        percents.dedup();
        percents.truncate(grid.len() / 2);
        PeakVsShiftConfig {
            directions: vec![ShiftDirection::Left, ShiftDirection::Right],
            percents,
        }
    }
}

impl PeakVsShiftConfig {
    pub fn grid(&self) -> Vec<GridPoint> {
        self.directions
            .iter()
            .flat_map(|&d| self.percents.iter().map(move |&p| GridPoint::new(d, p)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiuserSirConfig {
    pub n_users: usize,
    /// Explicit per-user percents; overrides `step_percent` when present.
    pub schedule: Option<Vec<f64>>,
    pub step_percent: f64,
    pub schedule_direction: ShiftDirection,
    pub sweep_directions: Vec<ShiftDirection>,
    pub sweep_percents: Vec<f64>,
    pub budget: usize,
    pub subset_seed: u64,
    pub align_directions: bool,
}

impl Default for MultiuserSirConfig {
    fn default() -> Self {
        let sweep = default_sweep();
        let mut percents: Vec<f64> = sweep.iter().map(|g| g.percent).collect();
        percents.truncate(sweep.len() / 2);
        MultiuserSirConfig {
            n_users: DEFAULT_N_USERS,
            schedule: None,
            step_percent: DEFAULT_STEP_PERCENT,
            schedule_direction: ShiftDirection::Right,
            sweep_directions: vec![ShiftDirection::Right, ShiftDirection::Left],
            sweep_percents: percents,
            budget: DEFAULT_BUDGET,
            subset_seed: DEFAULT_SUBSET_SEED,
            align_directions: true,
        }
    }
}

impl MultiuserSirConfig {
    pub fn to_scenario(&self) -> Result<MultiuserConfig> {
        let percents = match &self.schedule {
            Some(p) => p.clone(),
            None => (0..self.n_users)
                .map(|j| j as f64 * self.step_percent)
                .collect(),
        };
        let schedule = ShiftSchedule::new(
            percents
                .into_iter()
                .map(|p| GridPoint::new(self.schedule_direction, p))
                .collect(),
        )
        .map_err(|e| Error::config("multiuser_sir.schedule", e.to_string()))?;
        let sweep = self
            .sweep_directions
            .iter()
            .flat_map(|&d| {
                self.sweep_percents
                    .iter()
                    .map(move |&p| GridPoint::new(d, p))
            })
            .collect();
        Ok(MultiuserConfig {
            n_users: self.n_users,
            schedule,
            sweep,
            budget: self.budget,
            seed: self.subset_seed,
            align_directions: self.align_directions,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestFreqConfig {
    pub inputs: Vec<PathBuf>,
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 means available parallelism.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub peak_vs_shift: PeakVsShiftConfig,
    #[serde(default)]
    pub multiuser_sir: MultiuserSirConfig,
    #[serde(default)]
    pub ingest_freq: IngestFreqConfig,
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// Replaces both the synthetic ensemble seed and the subset seed.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn check_percent(key: &str, p: f64, upper_open: bool) -> Result<()> {
    let ok = p.is_finite() && p >= 0.0 && if upper_open { p < 100.0 } else { p <= 100.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, format!("percent {p} out of range")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::config("<toml>", e.to_string().trim_end().replace('\n', " | ")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::parse(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    /// Make relative input/output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.ensemble.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output_dir.as_mut() {
            fix(p);
        }
        self.ingest_freq.inputs.iter_mut().for_each(fix);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.ensemble.seed = seed;
            self.multiuser_sir.subset_seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = Some(dir.clone());
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    /// Check every parameter the selected experiment uses.
    pub fn validate(&self) -> Result<()> {
        let needs_ensemble = matches!(
            self.experiment,
            Experiment::PeakVsShift | Experiment::MultiuserSir | Experiment::GenerateEnsemble
        );
        if needs_ensemble {
            let e = &self.ensemble;
            match e.source {
                EnsembleSource::File => {
                    if e.path.is_none() {
                        return Err(Error::config(
                            "ensemble.path",
                            "required when source = \"file\"",
                        ));
                    }
                    if self.experiment == Experiment::GenerateEnsemble {
                        return Err(Error::config(
                            "ensemble.source",
                            "generate_ensemble needs a synthetic source",
                        ));
                    }
                }
                EnsembleSource::Synthetic => {
                    if e.n_cirs == 0 {
                        return Err(Error::config("ensemble.n_cirs", "must be at least 1"));
                    }
                    if e.n_taps == 0 {
                        return Err(Error::config("ensemble.n_taps", "must be at least 1"));
                    }
                    if !(e.decay_taps.is_finite() && e.decay_taps > 0.0) {
                        return Err(Error::config("ensemble.decay_taps", "must be positive"));
                    }
                    if !(e.noise_floor.is_finite() && e.noise_floor >= 0.0) {
                        return Err(Error::config(
                            "ensemble.noise_floor",
                            "must be non-negative",
                        ));
                    }
                    if !(e.tap_spacing.is_finite() && e.tap_spacing > 0.0) {
                        return Err(Error::config("ensemble.tap_spacing", "must be positive"));
                    }
                }
            }
        }
        match self.experiment {
            Experiment::PeakVsShift => {
                let c = &self.peak_vs_shift;
                if c.directions.is_empty() {
                    return Err(Error::config(
                        "peak_vs_shift.directions",
                        "must not be empty",
                    ));
                }
                if c.percents.is_empty() {
                    return Err(Error::config("peak_vs_shift.percents", "must not be empty"));
                }
                for (i, &p) in c.percents.iter().enumerate() {
                    check_percent(&format!("peak_vs_shift.percents[{i}]"), p, false)?;
                }
            }
            Experiment::MultiuserSir => {
                let c = &self.multiuser_sir;
                if c.n_users == 0 {
                    return Err(Error::config("multiuser_sir.n_users", "must be at least 1"));
                }
                if c.budget == 0 {
                    return Err(Error::config("multiuser_sir.budget", "must be at least 1"));
                }
                if let Some(s) = &c.schedule {
                    if s.len() != c.n_users {
                        return Err(Error::config(
                            "multiuser_sir.schedule",
                            format!("has {} entries for {} users", s.len(), c.n_users),
                        ));
                    }
                    for (i, &p) in s.iter().enumerate() {
                        check_percent(&format!("multiuser_sir.schedule[{i}]"), p, true)?;
                    }
                } else {
                    let last = c.step_percent * c.n_users.saturating_sub(1) as f64;
                    if !(c.step_percent.is_finite() && c.step_percent >= 0.0) || last >= 100.0 {
                        return Err(Error::config(
                            "multiuser_sir.step_percent",
                            "staggered schedule must stay within [0, 100)",
                        ));
                    }
                }
                for (i, &p) in c.sweep_percents.iter().enumerate() {
                    check_percent(&format!("multiuser_sir.sweep_percents[{i}]"), p, true)?;
                }
                if c.sweep_directions.is_empty() != c.sweep_percents.is_empty() {
                    return Err(Error::config(
                        "multiuser_sir.sweep_directions",
                        "sweep needs both directions and percents, or neither",
                    ));
                }
                if self.ensemble.source == EnsembleSource::Synthetic
                    && self.ensemble.n_cirs < c.n_users
                {
                    return Err(Error::config(
                        "multiuser_sir.n_users",
                        format!("exceeds ensemble.n_cirs = {}", self.ensemble.n_cirs),
                    ));
                }
            }
            Experiment::IngestFreq => {
                if self.ingest_freq.inputs.is_empty() {
                    return Err(Error::config(
                        "ingest_freq.inputs",
                        "must list at least one file",
                    ));
                }
            }
            Experiment::GenerateEnsemble => {}
        }
        Ok(())
    }

    /// Digest of everything that influences results (not paths or workers).
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.workers = 0;
        let text = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One file listed in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub format: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub experiment: Experiment,
    pub config_digest: String,
    pub files: Vec<ManifestEntry>,
    pub warnings: Vec<String>,
}

/// An output file held in memory until the run succeeds.
#[derive(Debug, Clone)]
pub struct OutputFile {
    pub name: String,
    pub format: &'static str,
    pub contents: String,
}

impl OutputFile {
    fn new(name: impl Into<String>, format: &'static str, contents: String) -> Self {
        OutputFile {
            name: name.into(),
            format,
            contents,
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn fmt_percent(p: f64) -> String {
    let s = format!("{p}");
    s.replace('.', "p")
}

pub fn peak_vs_shift_csv(r: &PeakVsShiftResult) -> String {
    let mut out =
        String::from("cir_id,direction,percent,norm_signal_peak_power,norm_image_peak_power\n");
    for row in &r.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.cir_id,
            row.direction,
            fmt_num(row.percent),
            fmt_num(row.norm_signal_peak_power),
            fmt_num(row.norm_image_peak_power)
        )
        .unwrap();
    }
    for a in &r.average {
        writeln!(
            out,
            "_avg,{},{},{},{}",
            a.direction,
            fmt_num(a.percent),
            fmt_num(a.signal.mean),
            fmt_num(a.image.mean)
        )
        .unwrap();
    }
    out
}

pub fn peak_vs_shift_stats_csv(r: &PeakVsShiftResult) -> String {
    let mut out = String::from(
        "direction,percent,shift_taps,signal_mean,signal_median,signal_p10,signal_p90,\
         image_mean,image_median,image_p10,image_p90\n",
    );
    for a in &r.average {
        let (s, i) = (&a.signal, &a.image);
        let cols = [
            s.mean, s.median, s.p10, s.p90, i.mean, i.median, i.p10, i.p90,
        ]
        .map(fmt_num)
        .join(",");
        writeln!(
            out,
            "{},{},{},{cols}",
            a.direction,
            fmt_num(a.percent),
            a.shift_taps
        )
        .unwrap();
    }
    out
}

fn point_label(p: Option<&GridPoint>) -> (String, String) {
    match p {
        Some(g) => (g.direction.to_string(), fmt_num(g.percent)),
        None => ("schedule".into(), String::new()),
    }
}

pub fn multiuser_files(r: &MultiuserSirResult, ensemble: &ChannelEnsemble) -> Vec<OutputFile> {
    let mut files = Vec::new();
    for pt in &r.points {
        let name = match &pt.point {
            Some(g) => format!("sir_{}_{}.csv", g.direction, fmt_percent(g.percent)),
            None => "sir_schedule.csv".into(),
        };
        let mut out = String::from("subset,user,cir_id,shift_direction,shift_taps,sir_db\n");
        for (s, subset) in r.subsets.iter().enumerate() {
            for u in &pt.users {
                let shift = pt.shifts[u.user - 1];
                writeln!(
                    out,
                    "{s},{},{},{},{},{}",
                    u.user,
                    ensemble.cirs()[subset[u.user - 1]].id(),
                    shift.direction(),
                    shift.amount(),
                    fmt_num(u.sir_db[s])
                )
                .unwrap();
            }
        }
        files.push(OutputFile::new(name, "sir_point/v1", out));
    }
    for user in 1..=r.config.n_users {
        let mut out = String::from("direction,percent,sir_db,probability\n");
        for pt in &r.points {
            let (d, p) = point_label(pt.point.as_ref());
            for &(v, prob) in &pt.users[user - 1].cdf.points {
                writeln!(out, "{d},{p},{},{}", fmt_num(v), fmt_num(prob)).unwrap();
            }
        }
        files.push(OutputFile::new(
            format!("cdf_user{user}.csv"),
            "sir_cdf/v1",
            out,
        ));
    }
    let mut out = String::from(
        "direction,percent,user,shift_direction,shift_taps,median_sir_db,mean_finite_sir_db,\
         n_subsets,excluded_infinite\n",
    );
    for pt in &r.points {
        let (d, p) = point_label(pt.point.as_ref());
        for u in &pt.users {
            let shift = pt.shifts[u.user - 1];
            writeln!(
                out,
                "{d},{p},{},{},{},{},{},{},{}",
                u.user,
                shift.direction(),
                shift.amount(),
                fmt_num(u.median_db),
                u.mean_finite_db.map(fmt_num).unwrap_or_default(),
                u.sir_db.len(),
                u.cdf.excluded_infinite
            )
            .unwrap();
        }
    }
    files.push(OutputFile::new("summary.csv", "sir_summary/v1", out));
    files
}

fn build_ensemble(cfg: &RunConfig) -> Result<ChannelEnsemble> {
    let e = &cfg.ensemble;
    match e.source {
        EnsembleSource::File => load_cir_file(e.path.as_ref().expect("validated")),
        EnsembleSource::Synthetic => {
            let profile = SyntheticProfile {
                n_taps: e.n_taps,
                decay_taps: e.decay_taps,
                noise_floor: e.noise_floor,
                tap_spacing: e.tap_spacing,
            };
            ChannelEnsemble::synthetic(e.n_cirs, &profile, e.seed)
        }
    }
}

/// Run the configured experiment and return the files it would write plus
/// any warnings, without touching the filesystem except to read inputs.
pub fn execute(cfg: &RunConfig) -> Result<(Vec<OutputFile>, Vec<String>)> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    pool.install(|| match cfg.experiment {
        Experiment::GenerateEnsemble => {
            let e = build_ensemble(cfg)?;
            Ok((
                vec![OutputFile::new("ensemble.cir", "CIRv1", format_cir(&e)?)],
                vec![],
            ))
        }
        Experiment::IngestFreq => {
            let cirs = cfg
                .ingest_freq
                .inputs
                .iter()
                .map(|p| {
                    let fr = load_freq_response_file(p)?;
                    let id = p
                        .file_stem()
                        .map(|s| s.to_string_lossy().replace(char::is_whitespace, "_"))
                        .unwrap_or_else(|| "fr".into());
                    cir_from_freq_response(&fr, id)
                })
                .collect::<Result<Vec<_>>>()?;
            let e = ChannelEnsemble::new(cirs, None)?;
            Ok((
                vec![OutputFile::new("ensemble.cir", "CIRv1", format_cir(&e)?)],
                vec![],
            ))
        }
        Experiment::PeakVsShift => {
            let e = build_ensemble(cfg)?;
            let r = run_peak_vs_shift(&e, &cfg.peak_vs_shift.grid())?;
            Ok((
                vec![
                    OutputFile::new(
                        "peak_vs_shift.csv",
                        "peak_vs_shift/v1",
                        peak_vs_shift_csv(&r),
                    ),
                    OutputFile::new(
                        "peak_vs_shift_stats.csv",
                        "peak_vs_shift_stats/v1",
                        peak_vs_shift_stats_csv(&r),
                    ),
                ],
                vec![],
            ))
        }
        Experiment::MultiuserSir => {
            let e = build_ensemble(cfg)?;
            if e.len() < cfg.multiuser_sir.n_users {
                return Err(Error::config(
                    "multiuser_sir.n_users",
                    format!("exceeds the {} channels in the ensemble", e.len()),
                ));
            }
            let r = run_multiuser_sir(&e, &cfg.multiuser_sir.to_scenario()?)?;
            Ok((multiuser_files(&r, &e), r.warnings.clone()))
        }
    })
}

fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    let target = dir.join(name);
    std::io::Write::write_all(&mut tmp, contents).map_err(|e| Error::io(&target, e))?;
    tmp.persist(&target)
        .map_err(|e| Error::io(&target, e.error))?;
    Ok(())
}

/// Load, run and write. Returns the manifest that was written.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<Manifest> {
    let mut cfg = RunConfig::load(config_path)?;
    cfg.apply(overrides);
    run_config(&cfg)
}

pub fn run_config(cfg: &RunConfig) -> Result<Manifest> {
    let (files, warnings) = execute(cfg)?;
    let out_dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut entries = Vec::with_capacity(files.len());
    for f in &files {
        write_atomic(&out_dir, &f.name, f.contents.as_bytes())?;
        entries.push(ManifestEntry {
            name: f.name.clone(),
            format: f.format.to_string(),
            sha256: hex::encode(Sha256::digest(f.contents.as_bytes())),
            bytes: f.contents.len(),
        });
    }
    let manifest = Manifest {
        format: "manifest/v1".into(),
        experiment: cfg.experiment,
        config_digest: cfg.digest(),
        files: entries,
        warnings,
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_atomic(&out_dir, "manifest.json", text.as_bytes())?;
    Ok(manifest)
}
