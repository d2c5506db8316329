//! Reflectionless (KdV multi-soliton) potentials and the distance of a 1D
//! potential to the normalised soliton manifolds.
//!
//! For speeds `β_1 > … > β_m > 0` and centres `X` the well depth is
//! `V = 2 (log det A)''` with
//! `A_jk = δ_jk + 2√(β_jβ_k)/(β_j+β_k) · e^{-β_j(x-X_j) - β_k(x-X_k)}`,
//! whose Schrödinger spectrum is exactly `{-β_j²}`. The prefactor makes a lone
//! soliton `2β² sech²(β(x - X))` centred at `X`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{Grid, Grid1D, PotentialField};
use crate::schrodinger::{lowest_eigenpairs, SpectrumRequest};

/// `Σ β_j³` on the normalised manifold (unit `∫V²`).
pub const MANIFOLD_CUBE_SUM: f64 = 3.0 / 16.0;

/// Eigenvalues above this are treated as threshold noise when fitting.
const LEVEL_CUTOFF: f64 = -1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub betas: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl SolitonSpec {
    pub fn new(betas: Vec<f64>, shifts: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(LabError::invalid("a soliton needs at least one speed"));
        }
        if betas.len() != shifts.len() {
            return Err(LabError::invalid(format!(
                "{} speeds but {} shifts",
                betas.len(),
                shifts.len()
            )));
        }
        if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(LabError::invalid("soliton speeds must be positive"));
        }
        if betas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LabError::invalid("soliton speeds must be strictly decreasing"));
        }
        if shifts.iter().any(|x| !x.is_finite()) {
            return Err(LabError::invalid("soliton shifts must be finite"));
        }
        Ok(SolitonSpec { betas, shifts })
    }

    /// Speeds with every shift at the origin.
    pub fn centred(betas: Vec<f64>) -> Result<Self> {
        let n = betas.len();
        Self::new(betas, vec![0.0; n])
    }

    pub fn order(&self) -> usize {
        self.betas.len()
    }

    pub fn cube_sum(&self) -> f64 {
        self.betas.iter().map(|b| b.powi(3)).sum()
    }

    /// Closed form `∫ V² = (16/3) Σ β³`.
    pub fn l2_norm_squared(&self) -> f64 {
        16.0 / 3.0 * self.cube_sum()
    }

    /// Well depth at a single point.
    pub fn depth_at(&self, x: f64) -> f64 {
        depth_at(&self.betas, &self.shifts, x)
    }
}

fn depth_at(betas: &[f64], shifts: &[f64], x: f64) -> f64 {
    let m = betas.len();
    // A = S Ĝ S with S = diag(max(1, E_j)); on each branch log det S is linear
    // in x, so (log det A)'' = (log det Ĝ)'' and every entry of Ĝ stays bounded.
    let mut sigma = [0.0; MAX_ORDER];
    let mut dsigma = [0.0; MAX_ORDER];
    let mut ddsigma = [0.0; MAX_ORDER];
    let mut f = [0.0; MAX_ORDER];
    let mut rate = [0.0; MAX_ORDER];
    for j in 0..m {
        let b = betas[j];
        let t = 0.5 * (2.0 * b).ln() - b * (x - shifts[j]);
        if t > 0.0 {
            let s = (-2.0 * t).exp();
            sigma[j] = s;
            dsigma[j] = 2.0 * b * s;
            ddsigma[j] = 4.0 * b * b * s;
            f[j] = 1.0;
            rate[j] = 0.0;
        } else {
            sigma[j] = 1.0;
            dsigma[j] = 0.0;
            ddsigma[j] = 0.0;
            f[j] = t.exp();
            rate[j] = -b;
        }
    }
    let mut g = [[0.0; MAX_ORDER]; MAX_ORDER];
    let mut g1 = [[0.0; MAX_ORDER]; MAX_ORDER];
    let mut g2 = [[0.0; MAX_ORDER]; MAX_ORDER];
    for j in 0..m {
        for k in 0..m {
            let base = f[j] * f[k] / (betas[j] + betas[k]);
            let r = rate[j] + rate[k];
            g[j][k] = base;
            g1[j][k] = r * base;
            g2[j][k] = r * r * base;
        }
        g[j][j] += sigma[j];
        g1[j][j] += dsigma[j];
        g2[j][j] += ddsigma[j];
    }
    let chol = cholesky(&g, m);
    let x1 = chol_solve_matrix(&chol, &g1, m);
    let x2 = chol_solve_matrix(&chol, &g2, m);
    let mut tr2 = 0.0;
    let mut tr11 = 0.0;
    for j in 0..m {
        tr2 += x2[j][j];
        for k in 0..m {
            tr11 += x1[j][k] * x1[k][j];
        }
    }
    (2.0 * (tr2 - tr11)).max(0.0)
}

const MAX_ORDER: usize = 12;
type Mat = [[f64; MAX_ORDER]; MAX_ORDER];

fn cholesky(a: &Mat, m: usize) -> Mat {
    let mut l = [[0.0; MAX_ORDER]; MAX_ORDER];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                l[i][i] = s.max(f64::MIN_POSITIVE).sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    l
}

fn chol_solve_matrix(l: &Mat, b: &Mat, m: usize) -> Mat {
    let mut x = [[0.0; MAX_ORDER]; MAX_ORDER];
    for col in 0..m {
        let mut y = [0.0; MAX_ORDER];
        for i in 0..m {
            let mut s = b[i][col];
            for k in 0..i {
                s -= l[i][k] * y[k];
            }
            y[i] = s / l[i][i];
        }
        for i in (0..m).rev() {
            let mut s = y[i];
            for k in i + 1..m {
                s -= l[k][i] * x[k][col];
            }
            x[i][col] = s / l[i][i];
        }
    }
    x
}

/// Samples the soliton well depth on a line grid.
pub fn soliton_profile(spec: &SolitonSpec, grid: &Grid1D) -> Result<PotentialField> {
    if spec.order() > MAX_ORDER {
        return Err(LabError::invalid(format!("soliton order above {MAX_ORDER} unsupported")));
    }
    let values = grid.nodes().iter().map(|&x| spec.depth_at(x)).collect();
    PotentialField::new(grid.clone(), values)
}

/// `{-β_1², …, -β_N²}` in ascending order.
pub fn exact_spectrum(spec: &SolitonSpec) -> Vec<f64> {
    spec.betas.iter().map(|b| -b * b).collect()
}

/// Scale `β → cβ` so that `Σβ³ = 3/16`; shifts follow the dilation `t²V(t·)`
/// with `t = c`, i.e. `X → X / c`.
pub fn normalize_to_manifold(spec: &SolitonSpec) -> SolitonSpec {
    let c = (MANIFOLD_CUBE_SUM / spec.cube_sum()).cbrt();
    SolitonSpec {
        betas: spec.betas.iter().map(|b| b * c).collect(),
        shifts: spec.shifts.iter().map(|x| x / c).collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifoldFit {
    /// Best-fitting normalised soliton, `None` when `V` has no bound state.
    pub fitted_spec: Option<SolitonSpec>,
    pub l2_distance: f64,
    /// Order `m` of the fitted soliton (0 for the zero potential).
    pub order: usize,
}

/// L² distance from `V` to the normalised solitons of order `m ≤ n_max`.
///
/// Speeds start from `β_j = √|λ_j|`, are projected onto `Σβ³ = 3/16`, and the
/// centres are fitted by three passes of per-coordinate scan plus golden-section
/// search. A final local polish alternates speeds (along the constraint) and
/// centres, which removes the `O(h²)` bias of the discrete eigenvalues.
pub fn manifold_distance(v: &PotentialField, n_max: usize) -> Result<ManifoldFit> {
    let grid = match &v.grid {
        Grid::Line(g) => g.clone(),
        Grid::Radial(_) => {
            return Err(LabError::DimensionMismatch {
                expected: "line grid".into(),
                found: "radial grid".into(),
            })
        }
    };
    if n_max == 0 {
        return Err(LabError::invalid("n_max must be at least 1"));
    }
    let h = grid.spacing();
    let norm_v = (v.values.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
    let spec = lowest_eigenpairs(&SpectrumRequest::new(v, n_max.min(MAX_ORDER)).values_only())?;
    let betas: Vec<f64> = spec
        .eigenvalues
        .iter()
        .filter(|e| **e < LEVEL_CUTOFF)
        .map(|e| (-e).sqrt())
        .collect();
    if betas.is_empty() {
        return Ok(ManifoldFit { fitted_spec: None, l2_distance: norm_v, order: 0 });
    }
    let fitter = Fitter::new(v, &grid);
    let mut best: Option<ManifoldFit> = None;
    for m in 1..=betas.len() {
        let mut trial = betas[..m].to_vec();
        if trial.windows(2).any(|w| w[1] >= w[0]) {
            continue;
        }
        let c = (MANIFOLD_CUBE_SUM / trial.iter().map(|b| b.powi(3)).sum::<f64>()).cbrt();
        trial.iter_mut().for_each(|b| *b *= c);
        let (spec, dist) = fitter.fit(trial);
        if best.as_ref().map_or(true, |b| dist < b.l2_distance) {
            best = Some(ManifoldFit { fitted_spec: Some(spec), l2_distance: dist, order: m });
        }
    }
    best.ok_or_else(|| LabError::NumericalFailure {
        what: "soliton manifold fit".into(),
        residual: norm_v,
    })
}

struct Fitter<'a> {
    target: &'a [f64],
    nodes: Vec<f64>,
    h: f64,
    window: (f64, f64),
}

impl<'a> Fitter<'a> {
    fn new(v: &'a PotentialField, grid: &Grid1D) -> Self {
        let nodes = grid.nodes();
        let vmax = v.max_value();
        let support: Vec<f64> = nodes
            .iter()
            .zip(&v.values)
            .filter(|(_, y)| **y > 1e-6 * vmax)
            .map(|(x, _)| *x)
            .collect();
        let window = match (support.first(), support.last()) {
            (Some(a), Some(b)) => (*a, *b),
            _ => (grid.x_min, grid.x_max),
        };
        Fitter { target: &v.values, nodes, h: grid.spacing(), window }
    }

    fn distance2(&self, betas: &[f64], shifts: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(self.target)
            .map(|(&x, &t)| {
                let d = depth_at(betas, shifts, x) - t;
                d * d
            })
            .sum::<f64>()
            * self.h
    }

    fn fit(&self, betas: Vec<f64>) -> (SolitonSpec, f64) {
        let m = betas.len();
        let centre = {
            let (mut s, mut w) = (0.0, 0.0);
            for (x, t) in self.nodes.iter().zip(self.target) {
                s += x * t * t;
                w += t * t;
            }
            if w > 0.0 {
                s / w
            } else {
                0.0
            }
        };
        let betas = betas;
        let mut shifts = vec![centre; m];
        let (lo, hi) = self.window;
        let pad = 0.25 * (hi - lo) + 1.0;
        let (lo, hi) = (lo - pad, hi + pad);

        for _pass in 0..3 {
            for j in 0..m {
                let f = |x: f64| {
                    let mut s = shifts.clone();
                    s[j] = x;
                    self.distance2(&betas, &s)
                };
                shifts[j] = scan_then_golden(&f, lo, hi, 64);
            }
        }

        let (betas, shifts, current) = self.polish(betas, shifts);
        let spec = SolitonSpec { betas, shifts };
        (spec, current.max(0.0).sqrt())
    }
}

impl Fitter<'_> {
    fn residual(&self, betas: &[f64], shifts: &[f64]) -> Vec<f64> {
        self.nodes
            .iter()
            .zip(self.target)
            .map(|(&x, &t)| depth_at(betas, shifts, x) - t)
            .collect()
    }

    /// Levenberg-Marquardt on `(log β_2/β_1, …, X_1, …)` with the speeds kept
    /// on the manifold; the Jacobian is taken by central differences.
    fn polish(&self, betas: Vec<f64>, shifts: Vec<f64>) -> (Vec<f64>, Vec<f64>, f64) {
        let m = betas.len();
        let unpack = |p: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut b: Vec<f64> = std::iter::once(1.0)
                .chain(p[..m - 1].iter().map(|t| t.exp()))
                .collect();
            let c = (MANIFOLD_CUBE_SUM / b.iter().map(|x| x.powi(3)).sum::<f64>()).cbrt();
            b.iter_mut().for_each(|x| *x *= c);
            (b, p[m - 1..].to_vec())
        };
        let mut p: Vec<f64> = betas[1..]
            .iter()
            .map(|b| (b / betas[0]).ln())
            .chain(shifts.iter().copied())
            .collect();
        let np = p.len();
        let cost = |p: &[f64]| {
            let (b, x) = unpack(p);
            if b.windows(2).any(|w| w[1] >= w[0]) {
                return f64::INFINITY;
            }
            self.distance2(&b, &x)
        };
        let mut current = cost(&p);
        let mut lambda = 1e-3;
        for _ in 0..40 {
            let (b, x) = unpack(&p);
            let r = self.residual(&b, &x);
            let eps = 1e-6;
            let mut jac = Vec::with_capacity(np);
            for k in 0..np {
                let mut hi = p.clone();
                let mut lo = p.clone();
                hi[k] += eps;
                lo[k] -= eps;
                let (bh, xh) = unpack(&hi);
                let (bl, xl) = unpack(&lo);
                let col: Vec<f64> = self
                    .nodes
                    .iter()
                    .map(|&t| (depth_at(&bh, &xh, t) - depth_at(&bl, &xl, t)) / (2.0 * eps))
                    .collect();
                jac.push(col);
            }
            let mut jtj = vec![vec![0.0; np]; np];
            let mut jtr = vec![0.0; np];
            for a in 0..np {
                jtr[a] = jac[a].iter().zip(&r).map(|(x, y)| x * y).sum();
                for c in 0..=a {
                    let v: f64 = jac[a].iter().zip(&jac[c]).map(|(x, y)| x * y).sum();
                    jtj[a][c] = v;
                    jtj[c][a] = v;
                }
            }
            let mut improved = false;
            for _ in 0..12 {
                let mut sys = jtj.clone();
                for a in 0..np {
                    sys[a][a] *= 1.0 + lambda;
                    sys[a][a] += 1e-300;
                }
                let Some(step) = solve_dense(sys, jtr.clone()) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a - s).collect();
                let c = cost(&trial);
                if c < current {
                    let gain = current - c;
                    p = trial;
                    current = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = gain > 1e-14 * current.max(1e-300);
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        let (b, x) = unpack(&p);
        (b, x, current)
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn scan_then_golden(f: &impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> f64 {
    let step = (hi - lo) / samples as f64;
    let (mut best_i, mut best_v) = (0, f64::INFINITY);
    for i in 0..=samples {
        let val = f(lo + i as f64 * step);
        if val < best_v {
            best_v = val;
            best_i = i;
        }
    }
    let x = lo + best_i as f64 * step;
    golden(f, x - step, x + step, 1e-10)
}

/// Golden-section minimisation on `[a, b]`.
pub(crate) fn golden(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + a.abs().max(b.abs())) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
