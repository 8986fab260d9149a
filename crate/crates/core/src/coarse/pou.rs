//! Partition of unity from the coarse bilinear hat functions.

use crate::grid::{GridHierarchy, Region};
use crate::scalar::Scalar;

/// One hat function χ_i, stored on the closed neighborhood ω_i of its coarse node.
#[derive(Clone, Debug)]
pub struct HatFunction<T> {
    pub coarse_node: usize,
    pub region: Region,
    /// Values at `region.nodes` (row-major over the region box).
    pub values: Vec<T>,
}

impl<T: Scalar> HatFunction<T> {
    /// Value at a fine node; zero outside the support.
    pub fn value_at(&self, g: &GridHierarchy, node: usize) -> T {
        let (i, j) = g.fine_node_ij(node);
        let b = self.region.cell_box;
        if b.contains_node(i, j) {
            self.values[(j - b.y0) * (b.width() + 1) + (i - b.x0)]
        } else {
            T::zero()
        }
    }
}

/// Partition of unity {χ_i}, one function per coarse node (boundary nodes included).
#[derive(Clone, Debug)]
pub struct PartitionOfUnity<T> {
    functions: Vec<HatFunction<T>>,
}

impl<T: Scalar> PartitionOfUnity<T> {
    pub fn functions(&self) -> &[HatFunction<T>] {
        &self.functions
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn get(&self, coarse_node: usize) -> &HatFunction<T> {
        &self.functions[coarse_node]
    }

    /// χ_i as a vector over all fine nodes.
    pub fn to_global(&self, g: &GridHierarchy, coarse_node: usize) -> Vec<T> {
        let f = &self.functions[coarse_node];
        let mut out = vec![T::zero(); g.fine_node_count()];
        for (&nd, &v) in f.region.nodes.iter().zip(&f.values) {
            out[nd] = v;
        }
        out
    }

    /// Σ_i χ_i at every fine node.
    pub fn sum(&self, g: &GridHierarchy) -> Vec<T> {
        let mut out = vec![T::zero(); g.fine_node_count()];
        for f in &self.functions {
            for (&nd, &v) in f.region.nodes.iter().zip(&f.values) {
                out[nd] += v;
            }
        }
        out
    }
}

/// Coarse Q1 hats interpolated at the fine nodes.
pub fn build_pou<T: Scalar>(g: &GridHierarchy) -> PartitionOfUnity<T> {
    let r = g.ratio();
    let inv = T::of(1.0 / r as f64);
    let functions = (0..g.coarse_node_count())
        .map(|cn| {
            let region = g.neighborhood(cn).expect("valid coarse node");
            let (ci, cj) = g.coarse_node_ij(cn);
            let (xc, yc) = (ci * r, cj * r);
            let values = region
                .nodes
                .iter()
                .map(|&nd| {
                    let (i, j) = g.fine_node_ij(nd);
                    let fx = T::of((r - i.abs_diff(xc)) as f64) * inv;
                    let fy = T::of((r - j.abs_diff(yc)) as f64) * inv;
                    fx * fy
                })
                .collect();
            HatFunction {
                coarse_node: cn,
                region,
                values,
            }
        })
        .collect();
    PartitionOfUnity { functions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nodal_interpolation_properties() {
        let g = GridHierarchy::new(12, 3).unwrap();
        let pou = build_pou::<f64>(&g);
        assert_eq!(pou.len(), 16);
        let centre = g.coarse_node(1, 1);
        let chi = pou.get(centre);
        for cn in 0..g.coarse_node_count() {
            let (ci, cj) = g.coarse_node_ij(cn);
            let nd = g.fine_node(ci * 4, cj * 4);
            let expect = if cn == centre { 1.0 } else { 0.0 };
            assert_eq!(chi.value_at(&g, nd), expect);
        }
        // midpoint of an adjacent coarse cell
        assert_eq!(chi.value_at(&g, g.fine_node(6, 6)), 0.25);
        assert_eq!(chi.value_at(&g, g.fine_node(2, 2)), 0.25);
    }

    proptest! {
        #[test]
        fn sums_to_one(nc in 2usize..6, r in 1usize..6) {
            let g = GridHierarchy::new(nc * r, nc).unwrap();
            let pou = build_pou::<f64>(&g);
            for s in pou.sum(&g) {
                prop_assert!((s - 1.0).abs() <= 1e-14);
            }
            for f in pou.functions() {
                prop_assert!(f.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
