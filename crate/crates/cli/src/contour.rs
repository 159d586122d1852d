//! Log-density grids for contour plots. Targets with more than two
//! dimensions are sliced: the other coordinates are held at an anchor
//! point, so the grid is a conditional slice rather than a marginal.

use std::path::{Path, PathBuf};

use anyhow::bail;
use gris_core::{Density, Point};
use serde::{Deserialize, Serialize};

use crate::config::TargetConfig;
use crate::output::{fmt17, write_csv, write_json};
use crate::problem::{build_density, slice_anchor, Env};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
    /// Zero-based coordinates on the two axes.
    pub dims: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourMeta {
    pub target: String,
    pub grid: GridSpec,
    /// `exact` for two-dimensional targets, `conditional_slice` otherwise.
    pub kind: String,
    pub anchor: Vec<f64>,
}

fn axis(n: usize, lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// `nx · ny` rows of `(x, y, log f)`, `x` varying slowest.
pub fn contour_grid(density: &dyn Density, anchor: &Point, spec: &GridSpec) -> anyhow::Result<Vec<(f64, f64, f64)>> {
    let d = density.dim();
    if spec.nx < 2 || spec.ny < 2 {
        bail!("grid needs nx, ny >= 2");
    }
    if spec.dims.0 >= d || spec.dims.1 >= d || spec.dims.0 == spec.dims.1 {
        bail!("dims {:?} invalid for a {d}-dimensional target", spec.dims);
    }
    let mut out = Vec::with_capacity(spec.nx * spec.ny);
    for x in axis(spec.nx, spec.xmin, spec.xmax) {
        for y in axis(spec.ny, spec.ymin, spec.ymax) {
            let mut p = anchor.clone();
            p[spec.dims.0] = x;
            p[spec.dims.1] = y;
            out.push((x, y, density.log_density(&p)));
        }
    }
    Ok(out)
}

pub fn meta_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the grid CSV to `out` and its metadata to `<out>.meta.json`.
pub fn emit_contour(cfg: &TargetConfig, env: &Env, spec: GridSpec, out: &Path) -> anyhow::Result<ContourMeta> {
    let density = build_density(cfg, env)?;
    let anchor = slice_anchor(cfg, density.as_ref())?;
    let rows = contour_grid(density.as_ref(), &anchor, &spec)?;
    let header = ["x", "y", "log_f"].map(String::from);
    let rows: Vec<Vec<String>> = rows.iter().map(|(x, y, l)| vec![fmt17(*x), fmt17(*y), fmt17(*l)]).collect();
    write_csv(out, &header, &rows)?;
    let meta = ContourMeta {
        target: cfg.name().to_string(),
        grid: spec,
        kind: if density.dim() == 2 { "exact" } else { "conditional_slice" }.to_string(),
        anchor: anchor.iter().copied().collect(),
    };
    write_json(&meta_path(out), &meta)?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gris_core::targets::{Banana, Gaussian};
    use nalgebra::DVector;

    fn spec(n: usize, half: f64) -> GridSpec {
        GridSpec { nx: n, ny: n, xmin: -half, xmax: half, ymin: -half, ymax: half, dims: (0, 1) }
    }

    #[test]
    fn grid_size_and_symmetry() {
        let g = Gaussian::diagonal(DVector::zeros(2), &[1.0, 3.0]).unwrap();
        let rows = contour_grid(&g, &DVector::zeros(2), &spec(10, 4.0)).unwrap();
        assert_eq!(rows.len(), 100);
        for (i, r) in rows.iter().enumerate() {
            let m = rows[rows.len() - 1 - i];
            assert!((r.0 + m.0).abs() < 1e-12 && (r.1 + m.1).abs() < 1e-12);
            assert!((r.2 - m.2).abs() < 1e-12);
        }
    }

    #[test]
    fn banana_argmax_lies_on_the_ridge() {
        let b = Banana::default();
        let s = GridSpec { nx: 81, ny: 401, xmin: -20.0, xmax: 20.0, ymin: -10.0, ymax: 10.0, dims: (0, 1) };
        let rows = contour_grid(&b, &DVector::zeros(2), &s).unwrap();
        let best = rows.iter().max_by(|a, c| a.2.total_cmp(&c.2)).unwrap();
        let dy = 20.0 / 400.0;
        assert!((best.1 - b.b * (best.0 * best.0 - b.s)).abs() <= dy);
    }

    #[test]
    fn rejects_degenerate_grids() {
        let g = Gaussian::standard(2);
        assert!(contour_grid(&g, &DVector::zeros(2), &spec(1, 1.0)).is_err());
        let bad = GridSpec { dims: (0, 2), ..spec(3, 1.0) };
        assert!(contour_grid(&g, &DVector::zeros(2), &bad).is_err());
    }
}
