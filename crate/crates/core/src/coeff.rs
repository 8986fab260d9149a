//! Piecewise-constant high-contrast coefficients κ on the fine mesh.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridHierarchy;
use crate::scalar::Scalar;

/// κ per fine cell, row-major with the cell row (y index) ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField<T> {
    n_fine: usize,
    values: Vec<T>,
    kappa_min: T,
    kappa_max: T,
}

impl<T: Scalar> CoefficientField<T> {
    pub fn from_values(n_fine: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n_fine * n_fine {
            return Err(Error::Dimension(format!(
                "expected {} cell values, got {}",
                n_fine * n_fine,
                values.len()
            )));
        }
        let mut kappa_min = T::infinity();
        let mut kappa_max = T::zero();
        for (c, &v) in values.iter().enumerate() {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidCoefficient(format!(
                    "cell {c} has non-positive or non-finite value {v}"
                )));
            }
            kappa_min = kappa_min.min(v);
            kappa_max = kappa_max.max(v);
        }
        Ok(Self {
            n_fine,
            values,
            kappa_min,
            kappa_max,
        })
    }

    pub fn constant(g: &GridHierarchy, value: T) -> Self {
        Self::from_values(g.n_fine(), vec![value; g.fine_cell_count()])
            .expect("positive constant")
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, cell: usize) -> T {
        self.values[cell]
    }

    pub fn kappa_min(&self) -> T {
        self.kappa_min
    }

    pub fn kappa_max(&self) -> T {
        self.kappa_max
    }

    /// Contrast η = κ_max / κ_min.
    pub fn eta(&self) -> T {
        self.kappa_max / self.kappa_min
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self::from_values(self.n_fine, self.values.iter().map(|&v| v * factor).collect())
            .expect("scaling by a positive factor")
    }

    /// Cells whose value exceeds the geometric mean of the extrema.
    pub fn high_mask(&self) -> Vec<bool> {
        let cut = (self.kappa_min * self.kappa_max).sqrt();
        self.values.iter().map(|&v| v > cut).collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let n = self.n_fine;
        for row in self.values.chunks(n) {
            let line: Vec<String> = row.iter().map(|v| format!("{}", v.to64())).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads an `n × n` CSV (one row per fine-cell row, y ascending).
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut values = Vec::new();
        let mut n = None;
        let mut rows = 0;
        for (row, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut count = 0;
            for tok in line.split(',') {
                let v: f64 = tok.trim().parse().map_err(|_| Error::Csv {
                    row,
                    msg: format!("cannot parse {tok:?} as a number"),
                })?;
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::Csv {
                        row,
                        msg: format!("non-positive permeability {v}"),
                    });
                }
                values.push(T::of(v));
                count += 1;
            }
            match n {
                None => n = Some(count),
                Some(expected) if expected != count => {
                    return Err(Error::Csv {
                        row,
                        msg: format!("expected {expected} columns, found {count}"),
                    })
                }
                _ => {}
            }
            rows += 1;
        }
        let n = n.ok_or(Error::Csv {
            row: 0,
            msg: "empty file".into(),
        })?;
        if rows != n {
            return Err(Error::Csv {
                row: rows,
                msg: format!("expected {n} rows for a square grid, found {rows}"),
            });
        }
        Self::from_values(n, values)
    }
}

/// Geometry of the high-permeability features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pattern", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pattern {
    /// κ ≡ 1.
    Constant,
    /// One rectangle strictly inside each coarse cell, sides in `[min_size, max_size]` fine cells.
    InteriorInclusions { min_size: usize, max_size: usize },
    /// A `size × size` square straddling every interior coarse edge.
    BoundaryInclusions { size: usize },
    /// Axis-aligned strips. Horizontal strips run across the domain up to
    /// `margin` fine cells from each side; vertical strips are segments
    /// spanning at least `min_length` coarse cells.
    Channels(ChannelParams),
    /// User mask, row-major over fine cells; `true` marks κ = η.
    BinaryMask { mask: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub horizontal: usize,
    pub vertical: usize,
    /// Strip width in fine cells.
    pub width: usize,
    /// Minimum vertical segment length in coarse cells.
    pub min_length: usize,
    /// Minimum number of background fine cells between parallel strips.
    pub min_gap: usize,
    /// Fine cells left free between horizontal strip ends and the boundary.
    #[serde(default)]
    pub margin: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            horizontal: 3,
            vertical: 3,
            width: 2,
            min_length: 2,
            min_gap: 2,
            margin: 0,
        }
    }
}

impl Pattern {
    pub fn name(&self) -> &'static str {
        match self {
            Pattern::Constant => "constant",
            Pattern::InteriorInclusions { .. } => "interior_inclusions",
            Pattern::BoundaryInclusions { .. } => "boundary_inclusions",
            Pattern::Channels(_) => "channels",
            Pattern::BinaryMask { .. } => "binary_mask",
        }
    }
}

/// Provenance written next to a coefficient CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientMeta {
    pub n_fine: usize,
    pub pattern: String,
    pub eta: f64,
    pub seed: u64,
}

impl CoefficientMeta {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Builds a binary field: background κ = 1, features κ = η. Pure in all arguments.
pub fn generate<T: Scalar>(
    g: &GridHierarchy,
    pattern: &Pattern,
    eta: f64,
    seed: u64,
) -> Result<CoefficientField<T>> {
    if !(eta >= 1.0) || !eta.is_finite() {
        return Err(Error::InvalidCoefficient(format!(
            "contrast must be a finite value >= 1, got {eta}"
        )));
    }
    let mask = feature_mask(g, pattern, seed)?;
    let hi = T::of(eta);
    let values = mask
        .iter()
        .map(|&m| if m { hi } else { T::one() })
        .collect();
    CoefficientField::from_values(g.n_fine(), values)
}

fn feature_mask(g: &GridHierarchy, pattern: &Pattern, seed: u64) -> Result<Vec<bool>> {
    let n = g.n_fine();
    let r = g.ratio();
    let nc = g.n_coarse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n * n];
    let fill = |mask: &mut [bool], x0: usize, x1: usize, y0: usize, y1: usize| {
        for j in y0..y1.min(n) {
            for i in x0..x1.min(n) {
                mask[j * n + i] = true;
            }
        }
    };
    match pattern {
        Pattern::Constant => {}
        Pattern::InteriorInclusions { min_size, max_size } => {
            if *min_size == 0 || min_size > max_size {
                return Err(Error::InvalidCoefficient(format!(
                    "inclusion sizes must satisfy 0 < min_size <= max_size, got {min_size}..{max_size}"
                )));
            }
            // strictly inside: one background cell between the blob and every coarse edge
            if *max_size + 2 > r {
                return Err(Error::FeatureTooLarge {
                    size: *max_size,
                    cell: r,
                });
            }
            for cj in 0..nc {
                for ci in 0..nc {
                    let w = rng.gen_range(*min_size..=*max_size);
                    let h = rng.gen_range(*min_size..=*max_size);
                    let ox = rng.gen_range(1..=r - 1 - w);
                    let oy = rng.gen_range(1..=r - 1 - h);
                    let x0 = ci * r + ox;
                    let y0 = cj * r + oy;
                    fill(&mut mask, x0, x0 + w, y0, y0 + h);
                }
            }
        }
        Pattern::BoundaryInclusions { size } => {
            let s = *size;
            if s < 2 {
                return Err(Error::InvalidCoefficient(
                    "boundary inclusions need size >= 2 to straddle an edge".into(),
                ));
            }
            if s > r {
                return Err(Error::FeatureTooLarge { size: s, cell: r });
            }
            // vertical coarse edges x = ci * r, one per coarse row segment
            for cj in 0..nc {
                for ci in 1..nc {
                    let x0 = ci * r - s / 2;
                    let y0 = cj * r + rng.gen_range(0..=r - s);
                    fill(&mut mask, x0, x0 + s, y0, y0 + s);
                }
            }
            for cj in 1..nc {
                for ci in 0..nc {
                    let y0 = cj * r - s / 2;
                    let x0 = ci * r + rng.gen_range(0..=r - s);
                    fill(&mut mask, x0, x0 + s, y0, y0 + s);
                }
            }
        }
        Pattern::Channels(p) => {
            if p.width == 0 {
                return Err(Error::InvalidCoefficient("channel width must be positive".into()));
            }
            if p.width + 2 > n {
                return Err(Error::FeatureTooLarge {
                    size: p.width,
                    cell: n,
                });
            }
            let rows = place_strips(&mut rng, n, p.width, p.min_gap, p.horizontal)
                .ok_or_else(|| {
                    Error::InvalidCoefficient(format!(
                        "cannot fit {} horizontal channels of width {} with gap {}",
                        p.horizontal, p.width, p.min_gap
                    ))
                })?;
            if 2 * p.margin + r > n {
                return Err(Error::InvalidCoefficient(format!(
                    "channel margin {} leaves strips shorter than a coarse cell",
                    p.margin
                )));
            }
            for y0 in rows {
                fill(&mut mask, p.margin, n - p.margin, y0, y0 + p.width);
            }
            let cols = place_strips(&mut rng, n, p.width, p.min_gap, p.vertical).ok_or_else(
                || {
                    Error::InvalidCoefficient(format!(
                        "cannot fit {} vertical channels of width {} with gap {}",
                        p.vertical, p.width, p.min_gap
                    ))
                },
            )?;
            let min_len = (p.min_length.max(1) * r).min(n - 2);
            for x0 in cols {
                let len = rng.gen_range(min_len..=n - 2);
                let y0 = rng.gen_range(1..=n - 1 - len);
                fill(&mut mask, x0, x0 + p.width, y0, y0 + len);
            }
        }
        Pattern::BinaryMask { mask: user } => {
            if user.len() != n * n {
                return Err(Error::Dimension(format!(
                    "mask has {} entries, grid has {} fine cells",
                    user.len(),
                    n * n
                )));
            }
            mask.copy_from_slice(user);
        }
    }
    Ok(mask)
}

/// Chooses `count` strip offsets in `[1, n - width - 1]` with at least `gap`
/// cells between strips, in random order.
fn place_strips(
    rng: &mut ChaCha8Rng,
    n: usize,
    width: usize,
    gap: usize,
    count: usize,
) -> Option<Vec<usize>> {
    let lo = 1;
    let hi = n - width - 1;
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    let mut attempts = 0;
    while chosen.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return None;
        }
        let s = rng.gen_range(lo..=hi);
        let clear = chosen
            .iter()
            .all(|&c| s + width + gap <= c || c + width + gap <= s);
        if clear {
            chosen.push(s);
        }
    }
    Some(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 8-connected components of a cell mask (cells sharing a node are coupled by Q1 elements).
    fn components(mask: &[bool], n: usize) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; mask.len()];
        let mut out = Vec::new();
        for start in 0..mask.len() {
            if !mask[start] || label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = vec![];
            let mut stack = vec![start];
            label[start] = id;
            while let Some(c) = stack.pop() {
                comp.push(c);
                let (i, j) = ((c % n) as i64, (c / n) as i64);
                for dj in -1..=1 {
                    for di in -1..=1 {
                        let (a, b) = (i + di, j + dj);
                        if a < 0 || b < 0 || a >= n as i64 || b >= n as i64 {
                            continue;
                        }
                        let nb = b as usize * n + a as usize;
                        if mask[nb] && label[nb] == usize::MAX {
                            label[nb] = id;
                            stack.push(nb);
                        }
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    #[test]
    fn constant_field_has_unit_contrast() {
        let g = GridHierarchy::new(8, 2).unwrap();
        let f: CoefficientField<f64> = generate(&g, &Pattern::Constant, 1.0, 0).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0));
        assert_eq!(f.eta(), 1.0);
    }

    #[test]
    fn channels_are_binary_and_span_the_domain() {
        let g = GridHierarchy::new(40, 8).unwrap();
        let f: CoefficientField<f64> =
            generate(&g, &Pattern::Channels(ChannelParams::default()), 1e4, 3).unwrap();
        assert!(f.values().iter().all(|&v| v == 1.0 || v == 1e4));
        assert_eq!(f.eta(), 1e4);
        let n = g.n_fine();
        let comps = components(&f.high_mask(), n);
        let spans = comps.iter().any(|c| {
            let xs: Vec<usize> = c.iter().map(|&k| k % n).collect();
            let ys: Vec<usize> = c.iter().map(|&k| k / n).collect();
            (xs.contains(&0) && xs.contains(&(n - 1))) || (ys.contains(&0) && ys.contains(&(n - 1)))
        });
        assert!(spans);
    }

    #[test]
    fn interior_inclusions_stay_inside_coarse_cells() {
        let g = GridHierarchy::new(60, 10).unwrap();
        let pattern = Pattern::InteriorInclusions {
            min_size: 2,
            max_size: 4,
        };
        let f: CoefficientField<f64> = generate(&g, &pattern, 1e6, 11).unwrap();
        let n = g.n_fine();
        let r = g.ratio();
        let comps = components(&f.high_mask(), n);
        assert_eq!(comps.len(), 100);
        for c in &comps {
            let coarse = g.coarse_cell_of(c[0]);
            for &cell in c {
                assert_eq!(g.coarse_cell_of(cell), coarse);
                let (i, j) = (cell % n, cell / n);
                // no blob cell touches a coarse edge
                assert!(i % r != 0 && i % r != r - 1 && j % r != 0 && j % r != r - 1);
            }
        }
    }

    #[test]
    fn oversized_features_are_rejected() {
        let g = GridHierarchy::new(20, 5).unwrap();
        let err = generate::<f64>(
            &g,
            &Pattern::InteriorInclusions {
                min_size: 1,
                max_size: 3,
            },
            10.0,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::FeatureTooLarge { .. }));
        assert!(generate::<f64>(&g, &Pattern::BoundaryInclusions { size: 4 }, 10.0, 0).is_ok());
        assert!(generate::<f64>(&g, &Pattern::BoundaryInclusions { size: 5 }, 10.0, 0).is_err());
        assert!(generate::<f64>(&g, &Pattern::Constant, 0.5, 0).is_err());
    }

    #[test]
    fn boundary_inclusions_straddle_edges() {
        let g = GridHierarchy::new(24, 4).unwrap();
        let f: CoefficientField<f64> =
            generate(&g, &Pattern::BoundaryInclusions { size: 2 }, 100.0, 5).unwrap();
        let n = g.n_fine();
        let comps = components(&f.high_mask(), n);
        assert!(!comps.is_empty());
        for c in &comps {
            let first = g.coarse_cell_of(c[0]);
            assert!(c.iter().any(|&cell| g.coarse_cell_of(cell) != first));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = GridHierarchy::new(40, 4).unwrap();
        let p = Pattern::Channels(ChannelParams::default());
        let a: CoefficientField<f64> = generate(&g, &p, 1e3, 42).unwrap();
        let b: CoefficientField<f64> = generate(&g, &p, 1e3, 42).unwrap();
        let c: CoefficientField<f64> = generate(&g, &p, 1e3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn binary_mask_pattern() {
        let g = GridHierarchy::new(4, 2).unwrap();
        let mut mask = vec![false; 16];
        mask[5] = true;
        let f: CoefficientField<f64> =
            generate(&g, &Pattern::BinaryMask { mask: mask.clone() }, 7.0, 0).unwrap();
        assert_eq!(f.get(5), 7.0);
        assert_eq!(f.high_mask(), mask);
        assert!(generate::<f64>(&g, &Pattern::BinaryMask { mask: vec![true; 3] }, 7.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridHierarchy::new(12, 3).unwrap();
        let path = dir.path().join("k.csv");
        let ones: CoefficientField<f64> = generate(&g, &Pattern::Constant, 1.0, 0).unwrap();
        ones.save_csv(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.lines().all(|l| l.split(',').all(|t| t == "1")));

        let values: Vec<f64> = (0..144).map(|k| 1.0 + (k as f64) / 7.0 + 1e-13).collect();
        let f = CoefficientField::from_values(12, values).unwrap();
        f.save_csv(&path).unwrap();
        assert_eq!(CoefficientField::<f64>::load_csv(&path).unwrap(), f);

        fs::write(&path, "1,2,3\n1,2\n1,2,3\n").unwrap();
        match CoefficientField::<f64>::load_csv(&path).unwrap_err() {
            Error::Csv { row, .. } => assert_eq!(row, 1),
            e => panic!("unexpected {e}"),
        }
        fs::write(&path, "1,2\n0,2\n").unwrap();
        assert!(CoefficientField::<f64>::load_csv(&path).is_err());
        fs::write(&path, "1,2\n3,4\n5,6\n").unwrap();
        assert!(CoefficientField::<f64>::load_csv(&path).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = CoefficientMeta {
            n_fine: 200,
            pattern: "channels".into(),
            eta: 1e4,
            seed: 9,
        };
        let p = dir.path().join("k.json");
        meta.write(&p).unwrap();
        assert_eq!(CoefficientMeta::read(&p).unwrap(), meta);
    }
}
