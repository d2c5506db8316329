//! Uniform grids, sampled nonnegative potentials, and the quadratures shared by
//! every solver.
//!
//! Two geometries are supported. [`Grid1D`] discretises an interval of the line
//! with Dirichlet end points; [`RadialGrid`] discretises `(0, r_max)` for radial
//! functions on `R^d`, with the surface measure `|S^{d-1}| r^{d-1}` folded into
//! the quadrature weights. Boundary nodes are implicit and carry the value zero,
//! so the trapezoidal rule reduces to `h` (times the radial weight) per node.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Area of the unit sphere `S^{k}` embedded in `R^{k+1}`.
pub fn unit_sphere_area(k: usize) -> f64 {
    let m = (k + 1) as f64;
    2.0 * PI.powf(m / 2.0) / gamma_fn(m / 2.0)
}

/// Gamma function on the positive half-line (Lanczos, g = 7).
pub fn gamma_fn(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    /// Interior node count.
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(LabError::invalid(format!(
                "grid bounds must satisfy x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n < 3 {
            return Err(LabError::invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        Ok(Grid1D { x_min, x_max, n })
    }

    /// The box `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n + 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + (i + 1) as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_max: f64,
    pub n: usize,
    pub dim: usize,
}

impl RadialGrid {
    pub fn new(r_max: f64, n: usize, dim: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(LabError::invalid(format!("r_max must be positive, got {r_max}")));
        }
        if n < 3 {
            return Err(LabError::invalid(format!("grid needs at least 3 nodes, got {n}")));
        }
        if dim < 2 {
            return Err(LabError::invalid(format!("radial grids need dim >= 2, got {dim}")));
        }
        Ok(RadialGrid { r_max, n, dim })
    }

    pub fn spacing(&self) -> f64 {
        self.r_max / (self.n + 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grid {
    Line(Grid1D),
    Radial(RadialGrid),
}

impl From<Grid1D> for Grid {
    fn from(g: Grid1D) -> Self {
        Grid::Line(g)
    }
}

impl From<RadialGrid> for Grid {
    fn from(g: RadialGrid) -> Self {
        Grid::Radial(g)
    }
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::Line(g) => g.n,
            Grid::Radial(g) => g.n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        match self {
            Grid::Line(g) => g.spacing(),
            Grid::Radial(g) => g.spacing(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Grid::Line(_) => 1,
            Grid::Radial(g) => g.dim,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        match self {
            Grid::Line(g) => g.node(i),
            Grid::Radial(g) => g.node(i),
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        match self {
            Grid::Line(g) => g.nodes(),
            Grid::Radial(g) => g.nodes(),
        }
    }

    /// Trapezoidal weights with the zero boundary values dropped.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Grid::Line(g) => vec![g.spacing(); g.n],
            Grid::Radial(g) => {
                let h = g.spacing();
                let area = unit_sphere_area(g.dim - 1);
                g.nodes()
                    .iter()
                    .map(|r| h * area * r.powi(g.dim as i32 - 1))
                    .collect()
            }
        }
    }

    /// Largest distance from the origin (half-extent for the line).
    pub fn extent(&self) -> f64 {
        match self {
            Grid::Line(g) => g.x_min.abs().max(g.x_max.abs()),
            Grid::Radial(g) => g.r_max,
        }
    }

    fn coordinate_label(&self) -> &'static str {
        match self {
            Grid::Line(_) => "x",
            Grid::Radial(_) => "r",
        }
    }
}

/// A nonnegative potential sampled on the interior nodes of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl PotentialField {
    pub fn new(grid: impl Into<Grid>, values: Vec<f64>) -> Result<Self> {
        let grid = grid.into();
        if values.len() != grid.len() {
            return Err(LabError::DimensionMismatch {
                expected: format!("{} samples", grid.len()),
                found: format!("{} samples", values.len()),
            });
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LabError::invalid(format!("non-finite potential value {v} at node {i}")));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(LabError::invalid(format!("negative potential value {v} at node {i}")));
        }
        Ok(PotentialField { grid, values })
    }

    pub fn from_fn(grid: impl Into<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = grid.into();
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: impl Into<Grid>) -> Self {
        let grid = grid.into();
        let n = grid.len();
        PotentialField { grid, values: vec![0.0; n] }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Multiply every sample by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Self {
        PotentialField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    /// Linear interpolation of the samples at coordinate `x`, zero outside the
    /// grid. Radial fields are extended evenly through the origin.
    pub fn sample_at(&self, x: f64) -> f64 {
        match &self.grid {
            Grid::Line(g) => {
                let h = g.spacing();
                let s = (x - g.x_min) / h;
                if !(s > 0.0 && s < (g.n + 1) as f64) {
                    return 0.0;
                }
                let k = s.floor() as usize;
                let frac = s - k as f64;
                // Node k in "boundary-inclusive" numbering is interior index k-1.
                let left = if k == 0 { 0.0 } else { self.values[k - 1] };
                let right = if k >= g.n { 0.0 } else { self.values[k] };
                left + frac * (right - left)
            }
            Grid::Radial(g) => {
                let h = g.spacing();
                let s = x.abs() / h;
                if s >= (g.n + 1) as f64 {
                    return 0.0;
                }
                if s <= 1.0 {
                    return self.values[0];
                }
                let k = s.floor() as usize;
                let frac = s - k as f64;
                let left = self.values[k - 1];
                let right = if k >= g.n { 0.0 } else { self.values[k] };
                left + frac * (right - left)
            }
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([self.grid.coordinate_label(), "value"])?;
        for (x, v) in self.grid.nodes().iter().zip(&self.values) {
            w.write_record([format!("{x:.16e}"), format!("{v:.16e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the two-column CSV written by [`PotentialField::write_csv`].
    /// Radial files carry no dimension, so `dim` must be supplied for them.
    pub fn read_csv<R: Read>(reader: R, dim: Option<usize>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        let label = header.get(0).unwrap_or("").trim().to_string();
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                let s = rec.get(i).ok_or_else(|| LabError::invalid("short CSV record"))?;
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| LabError::invalid(format!("bad number {s:?}: {e}")))
            };
            xs.push(parse(0)?);
            vs.push(parse(1)?);
        }
        if xs.len() < 3 {
            return Err(LabError::invalid("CSV potential needs at least 3 rows"));
        }
        let n = xs.len();
        let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        let grid: Grid = match label.as_str() {
            "x" => Grid1D::new(xs[0] - h, xs[n - 1] + h, n)?.into(),
            "r" => {
                let dim = dim.ok_or_else(|| {
                    LabError::invalid("radial CSV input needs an explicit dimension")
                })?;
                RadialGrid::new(xs[n - 1] + h, n, dim)?.into()
            }
            other => return Err(LabError::invalid(format!("unknown CSV coordinate {other:?}"))),
        };
        PotentialField::new(grid, vs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: PotentialField = serde_json::from_str(s)?;
        PotentialField::new(raw.grid, raw.values)
    }
}

/// `∫ V(x)^p dx` by the trapezoidal rule.
pub fn lp_norm_power(v: &PotentialField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(LabError::invalid(format!("exponent p must be >= 1, got {p}")));
    }
    if v.values.iter().any(|x| !x.is_finite()) {
        return Err(LabError::invalid("non-finite potential values"));
    }
    Ok(v.grid
        .weights()
        .iter()
        .zip(&v.values)
        .map(|(w, x)| w * x.powf(p))
        .sum())
}

/// The field `t² V(t·)` on the same grid.
pub fn rescale(v: &PotentialField, t: f64) -> Result<PotentialField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::invalid(format!("dilation factor must be positive, got {t}")));
    }
    if t == 1.0 {
        return Ok(v.clone());
    }
    let values = v
        .grid
        .nodes()
        .iter()
        .map(|x| t * t * v.sample_at(t * x))
        .collect();
    PotentialField::new(v.grid.clone(), values)
}

/// Amplitude factor `c` such that `∫ (cV)^p = 1`.
pub fn normalization_factor(v: &PotentialField, p: f64) -> Result<f64> {
    let np = lp_norm_power(v, p)?;
    if np <= 0.0 {
        return Err(LabError::DegenerateInput("zero potential cannot be normalised".into()));
    }
    Ok(np.powf(-1.0 / p))
}

/// `sup_y ∫_{B_R(y)} V^p`, one entry per radius, with centres on grid nodes.
pub fn mass_profile(v: &PotentialField, p: f64, radii: &[f64]) -> Result<Vec<f64>> {
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(LabError::invalid("radii must be positive"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::invalid("radii must be strictly increasing"));
    }
    let density: Vec<f64> = v.values.iter().map(|x| x.powf(p)).collect();
    let mut out: Vec<f64> = radii.iter().map(|&r| local_mass_sup(v, &density, r)).collect();
    // Node-inclusion quadrature is already monotone; the running max guards
    // against rounding in the radial cap formula.
    for i in 1..out.len() {
        out[i] = out[i].max(out[i - 1]);
    }
    Ok(out)
}

pub(crate) fn local_mass_sup(v: &PotentialField, density: &[f64], radius: f64) -> f64 {
    match &v.grid {
        Grid::Line(g) => {
            let h = g.spacing();
            let n = g.n;
            let mut prefix = vec![0.0; n + 1];
            for i in 0..n {
                prefix[i + 1] = prefix[i] + h * density[i];
            }
            // Window [y-R, y+R] around node y contains nodes within floor(R/h).
            let reach = ((radius / h) * (1.0 + 1e-12)).floor() as usize;
            (0..n)
                .map(|c| {
                    let lo = c.saturating_sub(reach);
                    let hi = (c + reach + 1).min(n);
                    prefix[hi] - prefix[lo]
                })
                .fold(0.0, f64::max)
        }
        Grid::Radial(g) => {
            let stride = (g.n / 256).max(1);
            let mut centres: Vec<f64> = vec![0.0];
            centres.extend((0..g.n).step_by(stride).map(|i| g.node(i)));
            centres
                .iter()
                .map(|&a| radial_ball_mass(g, density, a, radius))
                .fold(0.0, f64::max)
        }
    }
}

/// `∫_{B_R(y)} f(|x|) dx` for a radial density sampled on `g`, `|y| = a`.
fn radial_ball_mass(g: &RadialGrid, density: &[f64], a: f64, radius: f64) -> f64 {
    let d = g.dim;
    let h = g.spacing();
    let full = unit_sphere_area(d - 1);
    let rim = unit_sphere_area(d - 2);
    let mut total = 0.0;
    for (i, f) in density.iter().enumerate() {
        if *f == 0.0 {
            continue;
        }
        let s = g.node(i);
        let area = if s + a <= radius {
            full * s.powi(d as i32 - 1)
        } else if s >= a + radius || s <= a - radius {
            0.0
        } else {
            let cos0 = ((s * s + a * a - radius * radius) / (2.0 * a * s)).clamp(-1.0, 1.0);
            rim * s.powi(d as i32 - 1) * sine_power_integral(d - 2, cos0.acos())
        };
        total += h * f * area;
    }
    total
}

/// `∫_0^θ sin^k(t) dt`.
fn sine_power_integral(k: usize, theta: f64) -> f64 {
    match k {
        0 => theta,
        1 => 1.0 - theta.cos(),
        _ => {
            let kf = k as f64;
            -theta.sin().powi(k as i32 - 1) * theta.cos() / kf
                + (kf - 1.0) / kf * sine_power_integral(k - 2, theta)
        }
    }
}
