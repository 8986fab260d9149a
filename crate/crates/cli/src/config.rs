//! Experiment configuration: strict JSON, validated before any compute.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hcdd::coarse::{MassWeight, Selection};
use hcdd::coeff::Pattern;
use hcdd::precond::{CoarseOperator, LocalWeighting};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub grid: GridConfig,
    pub coefficient: CoefficientConfig,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub pcg: PcgConfig,
    /// Sweep blocks; each is a cartesian product over the lists it sets.
    #[serde(default)]
    pub sweep: Vec<SweepConfig>,
    /// Output directory, overridden by `--out`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_name() -> String {
    "run".into()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_fine: usize,
    pub n_coarse: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    /// Generated field; exclusive with `csv`.
    #[serde(default)]
    pub pattern: Option<Pattern>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Field read from a CSV file, relative to the config file.
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseVariant {
    /// One χ_i per interior coarse node.
    Hat,
    /// Local spectral problems on the full local space.
    Spectral,
    /// Local spectral problems inside random snapshot spaces.
    Gmsfem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodConfig {
    OneLevel {
        /// Fine layers added around each coarse block.
        overlap: usize,
    },
    TwoLevel {
        variant: CoarseVariant,
        #[serde(default = "default_mass")]
        mass: MassWeight,
        #[serde(default)]
        selection: Option<Selection>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default = "default_snapshot_seed")]
        snapshot_seed: u64,
        /// Fine layers around coarse blocks; coarse neighborhoods when absent.
        #[serde(default)]
        overlap: Option<usize>,
    },
    Hybrid {
        basis_per_block: usize,
        k: usize,
        #[serde(default)]
        weighting: LocalWeighting,
        #[serde(default)]
        coarse_operator: CoarseOperator,
    },
}

fn default_mass() -> MassWeight {
    MassWeight::MsMass
}

fn default_snapshot_seed() -> u64 {
    7
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::OneLevel { .. } => "one_level",
            MethodConfig::TwoLevel { .. } => "two_level",
            MethodConfig::Hybrid { .. } => "hybrid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcgConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_maxit")]
    pub maxit: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_maxit() -> usize {
    500
}

impl Default for PcgConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            maxit: default_maxit(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    /// Oversampling layers of hybrid methods.
    #[serde(default)]
    pub k: Option<Vec<usize>>,
    /// Overlap of one- and two-level methods.
    #[serde(default)]
    pub overlap: Option<Vec<usize>>,
    /// Basis functions per region (two-level spectral spaces) or per block (hybrid).
    #[serde(default)]
    pub basis: Option<Vec<usize>>,
}

/// One row of the result table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub eta: Option<f64>,
    pub method: MethodConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let mut cfg = Self::from_json(&text)
            .with_context(|| format!("in {}", path.display()))?;
        if let (Some(csv), Some(dir)) = (&cfg.coefficient.csv, path.parent()) {
            if csv.is_relative() {
                cfg.coefficient.csv = Some(dir.join(csv));
            }
        }
        Ok(cfg)
    }

    /// Checks every field; messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            );
        }
        let GridConfig { n_fine, n_coarse } = self.grid;
        if n_coarse < 2 {
            bail!("grid.n_coarse: must be at least 2, got {n_coarse}");
        }
        if n_fine == 0 || n_fine % n_coarse != 0 {
            bail!("grid.n_fine: {n_fine} is not a positive multiple of grid.n_coarse = {n_coarse}");
        }
        let c = &self.coefficient;
        match (&c.pattern, &c.csv) {
            (Some(_), Some(_)) => bail!("coefficient: set either pattern or csv, not both"),
            (None, None) => bail!("coefficient: one of pattern or csv is required"),
            (Some(_), None) => match c.eta {
                Some(eta) if eta >= 1.0 && eta.is_finite() => {}
                Some(eta) => bail!("coefficient.eta: must be a finite value >= 1, got {eta}"),
                None => bail!("coefficient.eta: required with a generated pattern"),
            },
            (None, Some(_)) => {
                if c.eta.is_some() {
                    bail!("coefficient.eta: not allowed with csv, the contrast comes from the file");
                }
                if self.sweep.iter().any(|s| s.eta.is_some()) {
                    bail!("sweep.eta: contrast sweeps need a generated pattern");
                }
            }
        }
        if self.methods.is_empty() {
            bail!("methods: at least one method is required");
        }
        for (i, m) in self.methods.iter().enumerate() {
            validate_method(m, n_fine / n_coarse).with_context(|| format!("methods[{i}]"))?;
        }
        if !(self.pcg.tol > 0.0 && self.pcg.tol < 1.0) {
            bail!("pcg.tol: must lie in (0, 1), got {}", self.pcg.tol);
        }
        if self.pcg.maxit == 0 {
            bail!("pcg.maxit: must be positive");
        }
        for (i, s) in self.sweep.iter().enumerate() {
            let field = |name: &str| format!("sweep[{i}].{name}");
            if let Some(etas) = &s.eta {
                if etas.is_empty() {
                    bail!("{}: empty list", field("eta"));
                }
                if let Some(bad) = etas.iter().find(|e| !(**e >= 1.0 && e.is_finite())) {
                    bail!("{}: contrast must be a finite value >= 1, got {bad}", field("eta"));
                }
            }
            for (name, list) in [("k", &s.k), ("overlap", &s.overlap), ("basis", &s.basis)] {
                if list.as_ref().is_some_and(|l| l.is_empty()) {
                    bail!("{}: empty list", field(name));
                }
            }
            for p in self.points_of(s) {
                validate_method(&p.method, n_fine / n_coarse)
                    .with_context(|| format!("{} with {}", field("*"), p.method.name()))?;
            }
        }
        Ok(())
    }

    /// Sweep points in output order: block, contrast, method, parameters.
    pub fn points(&self) -> Vec<SweepPoint> {
        if self.sweep.is_empty() {
            return self.points_of(&SweepConfig::default());
        }
        self.sweep.iter().flat_map(|s| self.points_of(s)).collect()
    }

    fn points_of(&self, s: &SweepConfig) -> Vec<SweepPoint> {
        let etas: Vec<Option<f64>> = match &s.eta {
            Some(list) => list.iter().map(|&e| Some(e)).collect(),
            None => vec![self.coefficient.eta],
        };
        let mut out = Vec::new();
        for eta in etas {
            for m in &self.methods {
                for method in expand(m, s) {
                    out.push(SweepPoint { eta, method });
                }
            }
        }
        out
    }
}

fn expand(m: &MethodConfig, s: &SweepConfig) -> Vec<MethodConfig> {
    match m {
        MethodConfig::OneLevel { overlap } => s
            .overlap
            .clone()
            .unwrap_or_else(|| vec![*overlap])
            .into_iter()
            .map(|overlap| MethodConfig::OneLevel { overlap })
            .collect(),
        MethodConfig::TwoLevel {
            variant,
            mass,
            selection,
            samples,
            snapshot_seed,
            overlap,
        } => {
            let overlaps: Vec<Option<usize>> = match &s.overlap {
                Some(l) => l.iter().map(|&o| Some(o)).collect(),
                None => vec![*overlap],
            };
            let selections: Vec<Option<Selection>> = match (&s.basis, variant) {
                (Some(l), CoarseVariant::Spectral | CoarseVariant::Gmsfem) => l
                    .iter()
                    .map(|&count| Some(Selection::Fixed { count }))
                    .collect(),
                _ => vec![*selection],
            };
            let mut out = Vec::new();
            for &overlap in &overlaps {
                for &selection in &selections {
                    out.push(MethodConfig::TwoLevel {
                        variant: *variant,
                        mass: *mass,
                        selection,
                        samples: *samples,
                        snapshot_seed: *snapshot_seed,
                        overlap,
                    });
                }
            }
            out
        }
        MethodConfig::Hybrid {
            basis_per_block,
            k,
            weighting,
            coarse_operator,
        } => {
            let ks = s.k.clone().unwrap_or_else(|| vec![*k]);
            let bases = s.basis.clone().unwrap_or_else(|| vec![*basis_per_block]);
            let mut out = Vec::new();
            for &k in &ks {
                for &basis_per_block in &bases {
                    out.push(MethodConfig::Hybrid {
                        basis_per_block,
                        k,
                        weighting: *weighting,
                        coarse_operator: *coarse_operator,
                    });
                }
            }
            out
        }
    }
}

fn validate_method(m: &MethodConfig, ratio: usize) -> Result<()> {
    match m {
        MethodConfig::OneLevel { overlap } => {
            if *overlap > ratio {
                bail!("overlap: {overlap} fine layers exceed the coarse cell width {ratio}");
            }
        }
        MethodConfig::TwoLevel {
            variant,
            selection,
            samples,
            overlap,
            ..
        } => {
            if let Some(o) = overlap {
                if *o > ratio {
                    bail!("overlap: {o} fine layers exceed the coarse cell width {ratio}");
                }
            }
            match variant {
                CoarseVariant::Hat => {
                    if selection.is_some() || samples.is_some() {
                        bail!("variant hat takes no selection or samples");
                    }
                }
                CoarseVariant::Spectral => {
                    if selection.is_none() {
                        bail!("selection: required for variant spectral");
                    }
                    if samples.is_some() {
                        bail!("samples: only used by variant gmsfem");
                    }
                }
                CoarseVariant::Gmsfem => {
                    if selection.is_none() {
                        bail!("selection: required for variant gmsfem");
                    }
                    if samples.is_none() {
                        bail!("samples: required for variant gmsfem");
                    }
                }
            }
            if let Some(sel) = selection {
                validate_selection(sel)?;
            }
        }
        MethodConfig::Hybrid {
            basis_per_block, k, ..
        } => {
            if *k == 0 {
                bail!("k: the hybrid method needs at least one oversampling layer");
            }
            if *basis_per_block == 0 {
                bail!("basis_per_block: must be positive");
            }
        }
    }
    Ok(())
}

fn validate_selection(sel: &Selection) -> Result<()> {
    match *sel {
        Selection::Fixed { count: 0 } => bail!("selection.count: must be positive"),
        Selection::Threshold { value, max } => {
            if !(value > 0.0) {
                bail!("selection.value: must be positive, got {value}");
            }
            if max == 0 {
                bail!("selection.max: must be positive");
            }
        }
        Selection::Gap { max: 0 } => bail!("selection.max: must be positive"),
        _ => {}
    }
    Ok(())
}
