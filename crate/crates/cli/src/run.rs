use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use hcdd::coarse::{
    build_all_snapshots, build_cem_aux, build_cem_basis, build_gmsfem_space, build_hat_space,
    build_pou, build_spectral_space, CoarseSpaceInfo, Selection,
};
use hcdd::coeff::{generate, CoefficientField, CoefficientMeta};
use hcdd::fem::{assemble_load, global_operator, Load};
use hcdd::precond::{
    pcg, HybridCem, HybridOptions, OneLevel, PcgOptions, Preconditioner, SolveReport, TwoLevel,
};
use hcdd::{Basis, Field, GridHierarchy};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CoarseVariant, ExperimentConfig, MethodConfig, SweepPoint, SCHEMA_VERSION};

pub const CSV_HEADER: &str =
    "method,variant,eta,H,h,overlap_or_k,basis_count,coarse_dim,iterations,cond_estimate,wall_ms";

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub method: String,
    pub variant: String,
    pub eta: f64,
    #[serde(rename = "H")]
    pub coarse_h: f64,
    pub h: f64,
    pub overlap_or_k: Option<usize>,
    pub basis_count: Option<usize>,
    pub coarse_dim: usize,
    pub iterations: usize,
    pub cond_estimate: Option<f64>,
    pub wall_ms: f64,
    pub converged: bool,
    pub setup_ms: f64,
    pub report: SolveReport,
}

impl Row {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let cond = self.cond_estimate.map(|c| format!("{c:.6e}")).unwrap_or_default();
        format!(
            "{},{},{:e},{},{},{},{},{},{},{},{:.3}",
            self.method,
            self.variant,
            self.eta,
            self.coarse_h,
            self.h,
            opt(self.overlap_or_k),
            opt(self.basis_count),
            self.coarse_dim,
            self.iterations,
            cond,
            self.wall_ms
        )
    }
}

#[derive(Serialize)]
struct RunOutput<'a> {
    schema_version: u32,
    name: &'a str,
    rows: &'a [Row],
}

pub fn load_field(cfg: &ExperimentConfig, g: &GridHierarchy, eta: Option<f64>) -> Result<Field> {
    let c = &cfg.coefficient;
    let field = match (&c.pattern, &c.csv) {
        (Some(p), _) => generate(g, p, eta.expect("validated"), c.seed)?,
        (None, Some(path)) => CoefficientField::load_csv(path)
            .with_context(|| format!("coefficient.csv: {}", path.display()))?,
        (None, None) => unreachable!("validated"),
    };
    anyhow::ensure!(
        field.n_fine() == g.n_fine(),
        "coefficient.csv: field has {} cells per side, grid.n_fine is {}",
        field.n_fine(),
        g.n_fine()
    );
    Ok(field)
}

fn variant_label(m: &MethodConfig) -> String {
    match m {
        MethodConfig::OneLevel { .. } => "none".into(),
        MethodConfig::TwoLevel { variant, samples, .. } => match variant {
            CoarseVariant::Hat => "hat".into(),
            CoarseVariant::Spectral => "spectral".into(),
            CoarseVariant::Gmsfem => format!("gmsfem-{}", samples.unwrap_or(0)),
        },
        MethodConfig::Hybrid { .. } => "cem".into(),
    }
}

fn basis_count(selection: &Selection, counts: &[usize]) -> usize {
    match selection {
        Selection::Fixed { count } => *count,
        _ => counts.iter().copied().max().unwrap_or(0),
    }
}

/// Builds the preconditioner of one sweep point, runs PCG and returns its row.
pub fn execute(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    export: Option<(&Path, usize)>,
) -> Result<Row> {
    let start = Instant::now();
    let g = GridHierarchy::new(cfg.grid.n_fine, cfg.grid.n_coarse)?;
    let field = load_field(cfg, &g, point.eta)?;
    let a = global_operator(&g, &field);
    let pou = build_pou(&g);
    let mut coarse: Option<(CoarseSpaceInfo, Basis)> = None;
    let (precond, overlap_or_k, basis): (Box<dyn Preconditioner<f64>>, Option<usize>, Option<usize>) =
        match &point.method {
            MethodConfig::OneLevel { overlap } => {
                let subs = g.overlapping_decomposition(*overlap);
                (Box::new(OneLevel::new(&g, &field, &subs)?), Some(*overlap), None)
            }
            MethodConfig::TwoLevel {
                variant,
                mass,
                selection,
                samples,
                snapshot_seed,
                overlap,
            } => {
                let space = match variant {
                    CoarseVariant::Hat => build_hat_space(&g, &pou)?,
                    CoarseVariant::Spectral => {
                        build_spectral_space(&g, &field, &pou, *mass, selection.expect("validated"))?
                    }
                    CoarseVariant::Gmsfem => {
                        let snaps = build_all_snapshots(
                            &g,
                            &field,
                            &pou,
                            samples.expect("validated"),
                            *snapshot_seed,
                        )?;
                        build_gmsfem_space(&g, &field, &pou, &snaps, *mass, selection.expect("validated"))?
                    }
                };
                let count = selection.map(|s| basis_count(&s, &space.counts()));
                let subs = match overlap {
                    Some(o) => g.overlapping_decomposition(*o),
                    None => g.neighborhood_decomposition(),
                };
                coarse = Some((space.info(), space.basis.clone()));
                let m = TwoLevel::new(&g, &field, &subs, space.basis, a.matrix())?;
                (Box::new(m), *overlap, count.or(Some(1)))
            }
            MethodConfig::Hybrid {
                basis_per_block,
                k,
                weighting,
                coarse_operator,
            } => {
                let aux = build_cem_aux(&g, &field, &pou, Selection::Fixed { count: *basis_per_block })?;
                let cem = build_cem_basis(&g, &field, &aux, *k)?;
                let options = HybridOptions {
                    weighting: *weighting,
                    coarse_operator: *coarse_operator,
                    ..HybridOptions::default()
                };
                let m = HybridCem::new(&g, &field, &pou, &cem, *k, options)?;
                coarse = Some((cem.info(), cem.basis.clone()));
                (Box::new(m), Some(*k), Some(*basis_per_block))
            }
        };
    let coarse_dim = coarse.as_ref().map_or(0, |(_, b)| b.dim());
    if let (Some((dir, index)), Some((info, basis))) = (export, &coarse) {
        info.export(basis, dir, &format!("coarse_{index:03}"))?;
    }
    let setup_ms = start.elapsed().as_secs_f64() * 1e3;
    let f = vec![1.0; g.fine_cell_count()];
    let b = assemble_load(&g, Load::Cellwise(&f));
    let opts = PcgOptions {
        tol: cfg.pcg.tol,
        max_iterations: cfg.pcg.maxit,
    };
    let (_, report) = pcg(a.matrix(), &b, precond.as_ref(), &opts)?;
    if !report.converged {
        log::warn!(
            "{} ({}) did not converge in {} iterations",
            point.method.name(),
            variant_label(&point.method),
            report.iterations
        );
    }
    Ok(Row {
        method: point.method.name().into(),
        variant: variant_label(&point.method),
        eta: field.eta(),
        coarse_h: g.H(),
        h: g.h(),
        overlap_or_k,
        basis_count: basis,
        coarse_dim,
        iterations: report.iterations,
        cond_estimate: report.cond_estimate,
        wall_ms: report.wall_ms,
        converged: report.converged,
        setup_ms,
        report,
    })
}

/// Runs every sweep point (concurrently, rows kept in sweep order) and
/// writes `results.csv` and `results.json`.
pub fn run(cfg: &ExperimentConfig, out: &Path, export_coarse: bool) -> Result<Vec<Row>> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let points = cfg.points();
    log::info!("{}: {} sweep points", cfg.name, points.len());
    let coarse_dir = out.join("coarse");
    let rows: Vec<Row> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let export = export_coarse.then_some((coarse_dir.as_path(), i));
            let row = execute(cfg, p, export)
                .with_context(|| format!("sweep point {i} ({})", p.method.name()))?;
            log::info!(
                "point {i}: {} {} eta={:e} iterations={}",
                row.method,
                row.variant,
                row.eta,
                row.iterations
            );
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    fs::write(out.join("results.csv"), csv)?;
    let json = serde_json::to_string_pretty(&RunOutput {
        schema_version: SCHEMA_VERSION,
        name: &cfg.name,
        rows: &rows,
    })?;
    fs::write(out.join("results.json"), json)?;
    Ok(rows)
}

/// Per-region eigenvalues of every method with a spectral coarse space.
pub fn dump_eigs(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<std::path::PathBuf>> {
    fs::create_dir_all(out)?;
    let g = GridHierarchy::new(cfg.grid.n_fine, cfg.grid.n_coarse)?;
    let field = load_field(cfg, &g, cfg.coefficient.eta)?;
    let pou = build_pou(&g);
    let mut written = Vec::new();
    for (i, m) in cfg.methods.iter().enumerate() {
        let spectra: Vec<Vec<f64>> = match m {
            MethodConfig::OneLevel { .. } => continue,
            MethodConfig::TwoLevel {
                variant: CoarseVariant::Hat,
                ..
            } => continue,
            MethodConfig::TwoLevel {
                variant,
                mass,
                selection,
                samples,
                snapshot_seed,
                ..
            } => {
                let sel = selection.expect("validated");
                let space = if *variant == CoarseVariant::Gmsfem {
                    let snaps =
                        build_all_snapshots(&g, &field, &pou, samples.expect("validated"), *snapshot_seed)?;
                    build_gmsfem_space(&g, &field, &pou, &snaps, *mass, sel)?
                } else {
                    build_spectral_space(&g, &field, &pou, *mass, sel)?
                };
                space.regions.into_iter().map(|r| r.eigenvalues).collect()
            }
            MethodConfig::Hybrid { basis_per_block, .. } => {
                build_cem_aux(&g, &field, &pou, Selection::Fixed { count: *basis_per_block })?
                    .cells
                    .into_iter()
                    .map(|c| c.eigenvalues)
                    .collect()
            }
        };
        let mut csv = String::from("region_id,index,lambda\n");
        for (region, values) in spectra.iter().enumerate() {
            for (k, v) in values.iter().enumerate() {
                writeln!(csv, "{region},{},{v:.12e}", k + 1).expect("write to string");
            }
        }
        let path = out.join(format!("eigs_{i:02}_{}.csv", variant_label(m)));
        fs::write(&path, csv)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the coefficient of the configuration and its provenance sidecar.
pub fn gen_coeff(cfg: &ExperimentConfig, out: &Path) -> Result<std::path::PathBuf> {
    fs::create_dir_all(out)?;
    let g = GridHierarchy::new(cfg.grid.n_fine, cfg.grid.n_coarse)?;
    let field = load_field(cfg, &g, cfg.coefficient.eta)?;
    let path = out.join("coefficient.csv");
    field.save_csv(&path)?;
    let pattern = cfg
        .coefficient
        .pattern
        .as_ref()
        .map_or("csv", |p| p.name())
        .to_string();
    CoefficientMeta {
        n_fine: g.n_fine(),
        pattern,
        eta: field.eta(),
        seed: cfg.coefficient.seed,
    }
    .write(out.join("coefficient.json"))?;
    Ok(path)
}
