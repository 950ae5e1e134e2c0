//! Seeded Monte Carlo sweeps over distribution, dimension, sample size and order.
//!
//! Every trial draws its sample from [`derive_seed`]`(base_seed, cell, trial)`, so
//! the output is a pure function of the plan whatever the worker count.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{Spectrum, SpectrumKind};
use crate::error::{Error, Result};
use crate::rates::{competing_even_rate, competing_guedon_rate, prop31_lower_rate, thm1_expectation_rate, TensorRateInputs};
use crate::sampling::{gaussian_psi2_constant, DistributionSpec, Family, GENERATOR_ID};
use crate::tensornorm::{check_population_supported, exact_oracle_p2, maximize_deviation, DeviationProblem, SolverConfig, Variant};

mod experiments;
mod stats;
pub mod suites;

pub use experiments::{
    lm_norm_empirical, lm_norm_empirical_with, max_norm_moment, rademacher_tail_check, top_singular_value,
    HoeffdingCheck, LmIndex, MomentEstimate,
};
pub use stats::{
    fit_loglog_slope, fit_precise_cells, mean_deviation, median, sandwich_check, tail_exceedance, RatioSpread,
    SandwichCell, SandwichReport, ScalingFit,
};

pub const SCHEMA_VERSION: u32 = 1;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `h(h(h(base) ^ cell) ^ trial)` with `h` the SplitMix64 finalizer, a bijection of `u64`.
pub fn derive_seed(base_seed: u64, cell_index: u64, trial_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ cell_index) ^ trial_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyEntry {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumEntry {
    pub spectrum: SpectrumKind,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantChoice {
    /// Signed for even `p`, absolute for odd `p`.
    #[default]
    Auto,
    Signed,
    Absolute,
}

impl VariantChoice {
    pub fn resolve(self, p: u32) -> Variant {
        match self {
            VariantChoice::Auto if p % 2 == 1 => Variant::Absolute,
            VariantChoice::Auto | VariantChoice::Signed => Variant::Signed,
            VariantChoice::Absolute => Variant::Absolute,
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub families: Vec<FamilyEntry>,
    pub spectra: Vec<SpectrumEntry>,
    pub n_values: Vec<usize>,
    pub p_values: Vec<u32>,
    #[serde(default)]
    pub variant: VariantChoice,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Solve signed `p = 2` cells with the eigensolver instead of the ascent.
    #[serde(default = "yes")]
    pub exact_p2: bool,
    /// Sub-Gaussian constant in the upper rate; defaults to the Gaussian value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_subg: Option<f64>,
    /// Record per-trial wall time; off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub spec: DistributionSpec,
    pub spectrum_kind: SpectrumKind,
    pub n: usize,
    pub p: u32,
    pub variant: Variant,
}

impl Cell {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    pub fn label(&self) -> String {
        format!(
            "{} {}{} d={} N={} p={} {}",
            self.family().name(),
            kind_name(&self.spectrum_kind),
            kind_param(&self.spectrum_kind).map(|q| format!("({q})")).unwrap_or_default(),
            self.dim(),
            self.n,
            self.p,
            self.variant.name()
        )
    }
}

pub fn kind_name(kind: &SpectrumKind) -> &'static str {
    match kind {
        SpectrumKind::Identity => "identity",
        SpectrumKind::Geometric { .. } => "geometric",
        SpectrumKind::Polynomial { .. } => "polynomial",
        SpectrumKind::Custom { .. } => "custom",
    }
}

pub fn kind_param(kind: &SpectrumKind) -> Option<f64> {
    match kind {
        SpectrumKind::Geometric { ratio } => Some(*ratio),
        SpectrumKind::Polynomial { exponent } => Some(*exponent),
        _ => None,
    }
}

impl SweepPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: SweepPlan =
            serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("sweep plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.cells().map(|_| ())
    }

    /// Cells in plan order: family, spectrum entry, dimension, `N`, `p`.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let empty = |what: &str| Err(Error::InvalidParameter(format!("sweep plan has no {what}")));
        if self.families.is_empty() {
            return empty("families");
        }
        if self.spectra.is_empty() || self.spectra.iter().any(|s| s.dims.is_empty()) {
            return empty("spectra or dims");
        }
        if self.n_values.is_empty() {
            return empty("n_values");
        }
        if self.p_values.is_empty() {
            return empty("p_values");
        }
        if self.trials < 2 {
            return Err(Error::InvalidParameter("trials must be at least 2".into()));
        }
        if let Some(&p) = self.p_values.iter().find(|&&p| p < 2) {
            return Err(Error::InvalidParameter(format!("p = {p} must be at least 2")));
        }
        if self.n_values.contains(&0) {
            return Err(Error::InvalidParameter("n_values must be positive".into()));
        }
        if let Some(k) = self.k_subg {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::InvalidParameter(format!("k_subg = {k} must be positive")));
            }
        }
        self.solver.validate()?;
        let mut cells = Vec::new();
        for fam in &self.families {
            let family = Family::from_name(&fam.family, fam.dof)?;
            for entry in &self.spectra {
                for &d in &entry.dims {
                    let spec = DistributionSpec::new(family, Spectrum::new(&entry.spectrum, d)?)?;
                    for &n in &self.n_values {
                        for &p in &self.p_values {
                            spec.check_moment_exists(p as f64)?;
                            let variant = self.variant.resolve(p);
                            check_population_supported(&spec, p, variant)?;
                            cells.push(Cell {
                                index: cells.len(),
                                spec: spec.clone(),
                                spectrum_kind: entry.spectrum.clone(),
                                n,
                                p,
                                variant,
                            });
                        }
                    }
                }
            }
        }
        Ok(cells)
    }

    fn k_subg(&self) -> f64 {
        self.k_subg.unwrap_or_else(gaussian_psi2_constant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cell_index: usize,
    pub family: String,
    pub spectrum_kind: String,
    pub spectrum_param: Option<f64>,
    pub d: usize,
    pub n: usize,
    pub p: u32,
    pub variant: Variant,
    pub trial: usize,
    pub derived_seed: u64,
    /// `NaN` when the trial failed.
    pub deviation: f64,
    pub restarts_agree_frac: f64,
    /// Fraction of ascent runs that met the convergence test.
    pub converged: f64,
    /// `max_i |X_i|^p` of the trial's sample.
    pub max_norm_pow: f64,
    pub wall_ms: u64,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

fn run_trial(plan: &SweepPlan, cell: &Cell, trial: usize) -> TrialRecord {
    let seed = derive_seed(plan.base_seed, cell.index as u64, trial as u64);
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64, f64, f64)> {
        let x = cell.spec.sample(cell.n, seed)?;
        let max_norm = experiments::block_max_norm_pow(&x, cell.p as f64);
        if plan.exact_p2 && cell.p == 2 && cell.variant == Variant::Signed {
            return Ok((exact_oracle_p2(&x, &cell.spec)?, 1.0, 1.0, max_norm));
        }
        let prob = DeviationProblem::new(x, cell.spec.clone(), cell.p, cell.variant)?;
        let r = maximize_deviation(&prob, &plan.solver, splitmix64(seed))?;
        Ok((r.value, r.agree_fraction, r.converged_fraction, max_norm))
    })();
    let wall_ms = if plan.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let (deviation, agree, converged, max_norm_pow, error) = match outcome {
        Ok((v, a, c, m)) => (v, a, c, m, None),
        Err(e) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN, Some(e.to_string())),
    };
    TrialRecord {
        cell_index: cell.index,
        family: cell.family().name().to_string(),
        spectrum_kind: kind_name(&cell.spectrum_kind).to_string(),
        spectrum_param: kind_param(&cell.spectrum_kind),
        d: cell.dim(),
        n: cell.n,
        p: cell.p,
        variant: cell.variant,
        trial,
        derived_seed: seed,
        deviation,
        restarts_agree_frac: agree,
        converged,
        max_norm_pow,
        wall_ms,
        error,
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub plan: SweepPlan,
    pub cells: Vec<Cell>,
    /// Sorted by `(cell_index, trial)`.
    pub records: Vec<TrialRecord>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Runs every cell and trial of `plan` on at most `workers` threads (default: all cores).
pub fn run_sweep(plan: &SweepPlan, workers: Option<usize>) -> Result<SweepOutput> {
    let cells = plan.cells()?;
    let started_unix_ms = unix_ms();
    let tasks: Vec<(usize, usize)> =
        cells.iter().flat_map(|c| (0..plan.trials).map(move |t| (c.index, t))).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut records: Vec<TrialRecord> =
        pool.install(|| tasks.par_iter().map(|&(c, t)| run_trial(plan, &cells[c], t)).collect());
    records.sort_by_key(|r| (r.cell_index, r.trial));
    Ok(SweepOutput { plan: plan.clone(), cells, records, started_unix_ms, finished_unix_ms: unix_ms() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell_index: usize,
    pub family: String,
    pub spectrum_kind: String,
    pub spectrum_param: Option<f64>,
    pub d: usize,
    pub n: usize,
    pub p: u32,
    pub variant: Variant,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean: f64,
    pub halfwidth95: f64,
    pub rate_thm1: f64,
    pub rate_prop31: f64,
    /// `mean / rate_prop31`.
    pub ratio: f64,
    pub competing_guedon: f64,
    pub competing_even: f64,
    pub min_agree_frac: f64,
    pub mean_converged: f64,
}

impl SweepOutput {
    pub fn records_for(&self, cell_index: usize) -> &[TrialRecord] {
        let lo = self.records.partition_point(|r| r.cell_index < cell_index);
        let hi = self.records.partition_point(|r| r.cell_index <= cell_index);
        &self.records[lo..hi]
    }

    pub fn deviations(&self, cell_index: usize) -> Vec<f64> {
        self.records_for(cell_index).iter().filter(|r| r.ok()).map(|r| r.deviation).collect()
    }

    /// Cells where more than half of the trials failed.
    pub fn failed_cells(&self) -> Vec<(&Cell, String)> {
        self.cells
            .iter()
            .filter_map(|c| {
                let recs = self.records_for(c.index);
                let failed: Vec<&TrialRecord> = recs.iter().filter(|r| !r.ok()).collect();
                (2 * failed.len() > recs.len()).then(|| (c, failed[0].error.clone().unwrap_or_default()))
            })
            .collect()
    }

    pub fn summary(&self, cell: &Cell) -> CellSummary {
        let recs = self.records_for(cell.index);
        let ok: Vec<&TrialRecord> = recs.iter().filter(|r| r.ok()).collect();
        let values: Vec<f64> = ok.iter().map(|r| r.deviation).collect();
        let (mean, halfwidth95) = mean_deviation(&values).unwrap_or((f64::NAN, f64::NAN));
        let spectrum = cell.spec.spectrum();
        let (op, r) = (spectrum.operator_norm(), spectrum.effective_rank());
        let inputs = TensorRateInputs::new(op, r, cell.n as u64, cell.p as f64).with_k(self.plan.k_subg());
        let rate_thm1 = thm1_expectation_rate(&inputs).unwrap_or(f64::NAN);
        let rate_prop31 = prop31_lower_rate(&inputs).unwrap_or(f64::NAN);
        let max_norm = if ok.is_empty() {
            f64::NAN
        } else {
            ok.iter().map(|r| r.max_norm_pow).sum::<f64>() / ok.len() as f64
        };
        let p = cell.p as f64;
        let n = cell.n as u64;
        CellSummary {
            cell_index: cell.index,
            family: cell.family().name().to_string(),
            spectrum_kind: kind_name(&cell.spectrum_kind).to_string(),
            spectrum_param: kind_param(&cell.spectrum_kind),
            d: cell.dim(),
            n: cell.n,
            p: cell.p,
            variant: cell.variant,
            trials_ok: ok.len(),
            trials_failed: recs.len() - ok.len(),
            mean,
            halfwidth95,
            rate_thm1,
            rate_prop31,
            ratio: mean / rate_prop31,
            competing_guedon: competing_guedon_rate(op, p, n, max_norm).unwrap_or(f64::NAN),
            competing_even: competing_even_rate(op, r, n, p, cell.dim() as u64).unwrap_or(f64::NAN),
            min_agree_frac: ok.iter().map(|r| r.restarts_agree_frac).fold(f64::NAN, f64::min),
            mean_converged: if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().map(|r| r.converged).sum::<f64>() / ok.len() as f64
            },
        }
    }

    pub fn summaries(&self) -> Vec<CellSummary> {
        self.cells.iter().map(|c| self.summary(c)).collect()
    }

    pub fn trials_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        w.write_record([
            "family",
            "spectrum_kind",
            "spectrum_param",
            "d",
            "N",
            "p",
            "variant",
            "trial",
            "derived_seed",
            "deviation",
            "restarts_agree_frac",
            "converged",
            "wall_ms",
            "max_norm_pow",
            "error",
        ])?;
        for r in &self.records {
            w.write_record([
                r.family.clone(),
                r.spectrum_kind.clone(),
                opt(r.spectrum_param),
                r.d.to_string(),
                r.n.to_string(),
                r.p.to_string(),
                r.variant.name().to_string(),
                r.trial.to_string(),
                r.derived_seed.to_string(),
                num(r.deviation),
                num(r.restarts_agree_frac),
                num(r.converged),
                r.wall_ms.to_string(),
                num(r.max_norm_pow),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer();
        w.write_record([
            "family",
            "spectrum_kind",
            "spectrum_param",
            "d",
            "N",
            "p",
            "variant",
            "trials_ok",
            "trials_failed",
            "mean",
            "halfwidth95",
            "rate_thm1",
            "rate_prop31",
            "ratio",
            "competing_guedon",
            "competing_even",
            "min_agree_frac",
            "mean_converged",
        ])?;
        for s in self.summaries() {
            w.write_record([
                s.family,
                s.spectrum_kind,
                opt(s.spectrum_param),
                s.d.to_string(),
                s.n.to_string(),
                s.p.to_string(),
                s.variant.name().to_string(),
                s.trials_ok.to_string(),
                s.trials_failed.to_string(),
                num(s.mean),
                num(s.halfwidth95),
                num(s.rate_thm1),
                num(s.rate_prop31),
                num(s.ratio),
                num(s.competing_guedon),
                num(s.competing_even),
                num(s.min_agree_frac),
                num(s.mean_converged),
            ])?;
        }
        finish(w)
    }

    pub fn metadata_json(&self) -> Result<String> {
        let meta = serde_json::json!({
            "plan": self.plan,
            "build_id": build_id(),
            "generator_id": GENERATOR_ID,
            "started_unix_ms": self.started_unix_ms as u64,
            "finished_unix_ms": self.finished_unix_ms as u64,
            "cells": self.cells.len(),
            "records": self.records.len(),
            "failed_trials": self.records.iter().filter(|r| !r.ok()).count(),
        });
        let mut s = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `trials.csv`, `summary.csv` and `metadata.json` into `dir`.
    pub fn write_outputs(&self, dir: &Path, force: bool) -> Result<OutputPaths> {
        let paths = OutputPaths {
            trials: dir.join("trials.csv"),
            summary: dir.join("summary.csv"),
            metadata: dir.join("metadata.json"),
        };
        if !force {
            for p in [&paths.trials, &paths.summary, &paths.metadata] {
                if p.exists() {
                    return Err(Error::InvalidArgument(format!(
                        "{} exists; pass --force to overwrite",
                        p.display()
                    )));
                }
            }
        }
        fs::create_dir_all(dir)?;
        fs::write(&paths.trials, self.trials_csv()?)?;
        fs::write(&paths.summary, self.summary_csv()?)?;
        fs::write(&paths.metadata, self.metadata_json()?)?;
        Ok(paths)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub trials: PathBuf,
    pub summary: PathBuf,
    pub metadata: PathBuf,
}

pub fn build_id() -> String {
    let profile = if cfg!(debug_assertions) { "debug" } else { "release" };
    format!("tensorconc-core {} ({profile})", env!("CARGO_PKG_VERSION"))
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Shortest round-trip decimal; empty for `NaN`.
fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
