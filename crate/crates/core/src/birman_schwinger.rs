//! Critical case `γ = 0`, `d ≥ 3`: eigenvalues `μ_j(V)` of `√V (-Δ)^{-1} √V`
//! on radial potentials, channel by channel, as the reciprocals of the
//! generalised eigenvalues of `A_ℓ u = ν diag(V) u`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{lp_norm_power, unit_sphere_area, Grid, PotentialField, RadialGrid};
use crate::schrodinger::{channel_multiplicity, kinetic_operator, L_MAX_CAP};
use crate::tridiag::SymTridiagonal;

/// Relative floor below which `V` is dropped from the mass matrix.
const MASS_FLOOR: f64 = 1e-14;

/// Condition imposed at `r_max`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// `u(r_max + h) = 0`.
    Dirichlet,
    /// Matches the decaying free solution `r^{-(ℓ+(d-3)/2)}` outside the box,
    /// which removes most of the truncation error for potentials with tails.
    #[default]
    Harmonic,
}

#[derive(Clone, Debug)]
pub struct BsOptions {
    pub count: usize,
    pub l_max: Option<usize>,
    pub boundary: OuterBoundary,
}

impl BsOptions {
    pub fn new(count: usize) -> Self {
        BsOptions { count, l_max: None, boundary: OuterBoundary::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsChannel {
    pub l: usize,
    pub multiplicity: usize,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BirmanSchwingerResult {
    pub dim: usize,
    /// Descending, each channel value repeated with its multiplicity.
    pub mus: Vec<f64>,
    pub channels: Vec<BsChannel>,
    /// `N ↦ N μ_N^{d/2} / ∫V^{d/2}`.
    pub ell_estimates: BTreeMap<usize, f64>,
    pub norm_power: f64,
}

impl BirmanSchwingerResult {
    /// Levels within `tol` of `value`, with their total multiplicity.
    pub fn cluster_near(&self, value: f64, tol: f64) -> (Vec<&BsChannel>, usize) {
        let hits: Vec<&BsChannel> =
            self.channels.iter().filter(|c| (c.value - value).abs() <= tol).collect();
        let total = hits.iter().map(|c| c.multiplicity).sum();
        (hits, total)
    }
}

fn radial_grid(v: &PotentialField) -> Result<RadialGrid> {
    match &v.grid {
        Grid::Radial(g) if g.dim >= 3 => Ok(g.clone()),
        Grid::Radial(g) => Err(LabError::invalid(format!(
            "the critical case needs d >= 3, got d = {}",
            g.dim
        ))),
        Grid::Line(_) => Err(LabError::invalid("the critical case needs d >= 3, got d = 1")),
    }
}

fn channel_operator(grid: &RadialGrid, l: usize, boundary: OuterBoundary) -> SymTridiagonal {
    let mut a = kinetic_operator(&Grid::Radial(grid.clone()), l);
    if boundary == OuterBoundary::Harmonic {
        let n = grid.n;
        let h = grid.spacing();
        let s = l as f64 + (grid.dim as f64 - 3.0) / 2.0;
        let rho = (grid.node(n - 1) / (grid.node(n - 1) + h)).powf(s);
        a.diag[n - 1] -= rho / (h * h);
    }
    a
}

fn mass(v: &PotentialField) -> Vec<f64> {
    let floor = MASS_FLOOR * v.max_value();
    v.values.iter().map(|&x| if x > floor { x } else { 0.0 }).collect()
}

/// The `count` largest `μ_j(V)` and the derived `ℓ^(N)` lower bounds.
pub fn mu_spectrum(v: &PotentialField, count: usize, l_max: Option<usize>) -> Result<BirmanSchwingerResult> {
    mu_spectrum_with(v, &BsOptions { count, l_max, boundary: OuterBoundary::default() })
}

pub fn mu_spectrum_with(v: &PotentialField, opts: &BsOptions) -> Result<BirmanSchwingerResult> {
    let grid = radial_grid(v)?;
    if opts.count == 0 {
        return Err(LabError::invalid("count must be at least 1"));
    }
    if v.is_zero() {
        return Err(LabError::invalid("V vanishes on the whole grid"));
    }
    let dim = grid.dim;
    let m = mass(v);
    let cap = opts.l_max.unwrap_or(L_MAX_CAP);
    let count = opts.count;
    let batch = rayon::current_num_threads().clamp(1, 8);

    let mut channels: Vec<BsChannel> = Vec::new();
    let mut certified = false;
    let mut last_l = 0;
    let mut l0 = 0;
    'outer: while l0 <= cap {
        let ls: Vec<usize> = (l0..=(l0 + batch - 1).min(cap)).collect();
        let solved: Vec<(usize, Vec<f64>)> = ls
            .par_iter()
            .map(|&l| {
                let a = channel_operator(&grid, l, opts.boundary);
                let nus = a.lowest_pencil_eigenvalues(&m, count);
                let mus = nus.into_iter().filter(|x| x.is_finite() && *x > 0.0).map(|x| 1.0 / x).collect();
                (l, mus)
            })
            .collect();
        for (l, mus) in solved {
            last_l = l;
            let top = mus.first().copied();
            let mult = channel_multiplicity(l, dim);
            channels.extend(mus.into_iter().map(|value| BsChannel { l, multiplicity: mult, value }));
            match top {
                None => {
                    certified = true;
                    break 'outer;
                }
                Some(t) => {
                    if let Some(threshold) = nth_largest(&channels, count) {
                        if t <= threshold {
                            certified = true;
                            break 'outer;
                        }
                    }
                }
            }
        }
        l0 += batch;
    }
    if !certified {
        return Err(LabError::ChannelExhaustion { l: last_l.min(cap) });
    }
    channels.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.l.cmp(&b.l)));
    let mut mus = Vec::with_capacity(count);
    let mut kept = Vec::new();
    for c in channels {
        if mus.len() >= count {
            break;
        }
        for _ in 0..c.multiplicity {
            if mus.len() < count {
                mus.push(c.value);
            }
        }
        kept.push(c);
    }
    let half = dim as f64 / 2.0;
    let norm_power = lp_norm_power(v, half)?;
    let ell_estimates = mus
        .iter()
        .enumerate()
        .map(|(i, mu)| (i + 1, (i + 1) as f64 * mu.powf(half) / norm_power))
        .collect();
    Ok(BirmanSchwingerResult { dim, mus, channels: kept, ell_estimates, norm_power })
}

fn nth_largest(channels: &[BsChannel], n: usize) -> Option<f64> {
    let mut vals: Vec<(f64, usize)> = channels.iter().map(|c| (c.value, c.multiplicity)).collect();
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut seen = 0;
    for (v, m) in vals {
        seen += m;
        if seen >= n {
            return Some(v);
        }
    }
    None
}

/// Number of `μ_j(V) > threshold`, with multiplicity, from Sturm counts of
/// `A_ℓ - diag(V)/threshold`.
pub fn count_mu_above(v: &PotentialField, threshold: f64, boundary: OuterBoundary) -> Result<usize> {
    let grid = radial_grid(v)?;
    if !(threshold > 0.0) {
        return Err(LabError::invalid("threshold must be positive"));
    }
    let m = mass(v);
    let mut total = 0;
    for l in 0..=L_MAX_CAP {
        let c = channel_operator(&grid, l, boundary).count_below(1.0 / threshold, Some(&m));
        if c == 0 {
            return Ok(total);
        }
        total += c * channel_multiplicity(l, grid.dim);
    }
    Err(LabError::ChannelExhaustion { l: L_MAX_CAP })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpherePotentialSpec {
    pub l: usize,
    pub dim: usize,
}

impl SpherePotentialSpec {
    pub fn new(l: usize, dim: usize) -> Result<Self> {
        if dim < 3 {
            return Err(LabError::invalid("sphere potentials need d >= 3"));
        }
        Ok(SpherePotentialSpec { l, dim })
    }

    fn factors(&self) -> (f64, f64) {
        let (l, d) = (self.l as f64, self.dim as f64);
        (l + (d - 2.0) / 2.0, l + d / 2.0)
    }

    pub fn value_at(&self, r: f64) -> f64 {
        let (a, b) = self.factors();
        4.0 * a * b / (1.0 + r * r).powi(2)
    }

    /// `∫ V_L^{d/2} = (L+(d-2)/2)^{d/2} (L+d/2)^{d/2} |S^d|`.
    pub fn closed_form_norm_power(&self) -> f64 {
        let (a, b) = self.factors();
        let half = self.dim as f64 / 2.0;
        a.powf(half) * b.powf(half) * unit_sphere_area(self.dim)
    }

    /// `μ` of the degree-`k` harmonics on `S^d`.
    pub fn mu_of_degree(&self, k: usize) -> f64 {
        let (a, b) = self.factors();
        let (k, d) = (k as f64, self.dim as f64);
        a * b / ((k + (d - 2.0) / 2.0) * (k + d / 2.0))
    }
}

/// `V_L` sampled on the grid, together with its closed-form `∫V^{d/2}`.
pub fn sphere_potential(spec: &SpherePotentialSpec, grid: &RadialGrid) -> Result<(PotentialField, f64)> {
    if grid.dim != spec.dim {
        return Err(LabError::DimensionMismatch {
            expected: format!("d = {}", spec.dim),
            found: format!("d = {}", grid.dim),
        });
    }
    let v = PotentialField::from_fn(grid.clone(), |r| spec.value_at(r))?;
    Ok((v, spec.closed_form_norm_power()))
}

#[derive(Clone, Debug)]
pub struct Inversion {
    pub field: PotentialField,
    /// Nodes whose mirror point `1/r` lies beyond `r_max` (zero-filled).
    pub out_of_range: usize,
}

impl Inversion {
    pub fn extrapolated(&self) -> bool {
        self.out_of_range > 0
    }
}

/// `W(r) = r^{-4} V(1/r)`, resampled by linear interpolation.
pub fn inversion_transform(v: &PotentialField) -> Result<Inversion> {
    let grid = match &v.grid {
        Grid::Radial(g) => g.clone(),
        Grid::Line(_) => return Err(LabError::invalid("inversion needs a radial grid")),
    };
    let mut out_of_range = 0;
    let values = grid
        .nodes()
        .iter()
        .map(|&r| {
            let mirror = 1.0 / r;
            if mirror > grid.r_max {
                out_of_range += 1;
                0.0
            } else {
                v.sample_at(mirror) / r.powi(4)
            }
        })
        .collect();
    Ok(Inversion { field: PotentialField::new(grid, values)?, out_of_range })
}

/// Least-squares `c` in `r⁴V(r) ≈ c + b/r²` over the outer 20% of the grid.
pub fn decay_tail_check(v: &PotentialField) -> Result<f64> {
    let grid = match &v.grid {
        Grid::Radial(g) => g.clone(),
        Grid::Line(_) => return Err(LabError::invalid("the tail check needs a radial grid")),
    };
    let (mut s00, mut s01, mut s11, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, y) in grid.nodes().iter().zip(&v.values) {
        if *r < 0.8 * grid.r_max {
            continue;
        }
        let z = r.powi(4) * y;
        let x = 1.0 / (r * r);
        s00 += 1.0;
        s01 += x;
        s11 += x * x;
        t0 += z;
        t1 += x * z;
    }
    let det = s00 * s11 - s01 * s01;
    if det.abs() < 1e-300 {
        return Ok(if s00 > 0.0 { t0 / s00 } else { 0.0 });
    }
    Ok((t0 * s11 - t1 * s01) / det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schrodinger::{lowest_eigenpairs, SpectrumRequest};

    fn sobolev(dim: usize, r_max: f64, n: usize) -> PotentialField {
        let g = RadialGrid::new(r_max, n, dim).unwrap();
        sphere_potential(&SpherePotentialSpec::new(0, dim).unwrap(), &g).unwrap().0
    }

    #[test]
    fn sobolev_levels_d3() {
        let v = sobolev(3, 200.0, 16384);
        let res = mu_spectrum(&v, 4, None).unwrap();
        assert!((res.mus[0] - 1.0).abs() < 1e-3, "{:?}", res.mus);
        for k in 1..4 {
            assert!((res.mus[k] - 0.2).abs() < 1e-3, "{:?}", res.mus);
        }
        assert_eq!(res.channels[0].l, 0);
    }

    #[test]
    fn sphere_oracle_levels() {
        let s = SpherePotentialSpec::new(0, 3).unwrap();
        assert!((s.mu_of_degree(0) - 1.0).abs() < 1e-15);
        assert!((s.mu_of_degree(1) - 0.2).abs() < 1e-15);
        let s1 = SpherePotentialSpec::new(1, 3).unwrap();
        assert!((s1.mu_of_degree(1) - 1.0).abs() < 1e-15);
        assert!(SpherePotentialSpec::new(0, 2).is_err());
    }

    #[test]
    fn linearity_in_v() {
        let g = RadialGrid::new(20.0, 2000, 3).unwrap();
        let v = PotentialField::from_fn(g, |r| (-r * r / 4.0).exp()).unwrap();
        let a = mu_spectrum(&v, 3, None).unwrap();
        let b = mu_spectrum(&v.scaled(2.0), 3, None).unwrap();
        for (x, y) in a.mus.iter().zip(&b.mus) {
            assert!((y - 2.0 * x).abs() <= 1e-10 * y, "{x} {y}");
        }
    }

    #[test]
    fn sobolev_is_inversion_fixed_point() {
        let v = sobolev(3, 200.0, 10000);
        let w = inversion_transform(&v).unwrap();
        assert!(!w.extrapolated());
        let worst = v.values.iter().zip(&w.field.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // Linear resampling error h²|V''|/8 with h = 0.02 and |V''| ≤ 12.
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn inversion_is_an_involution() {
        let g = RadialGrid::new(50.0, 20000, 3).unwrap();
        let v = PotentialField::from_fn(g, |r| 2.0 * (-(r - 1.0).powi(2)).exp()).unwrap();
        let w = inversion_transform(&v).unwrap();
        let back = inversion_transform(&w.field).unwrap();
        let worst = v.values.iter().zip(&back.field.values).zip(v.grid.nodes())
            // Below 1/r_max the first inversion was zero-filled.
            .filter(|(_, r)| *r > 0.05 && *r < 5.0)
            .map(|((a, b), _)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn tail_constants() {
        let v = sobolev(3, 200.0, 8000);
        assert!((decay_tail_check(&v).unwrap() - 3.0).abs() < 1e-6);
        let g = RadialGrid::new(200.0, 8000, 5).unwrap();
        let (v5, _) = sphere_potential(&SpherePotentialSpec::new(1, 5).unwrap(), &g).unwrap();
        assert!((decay_tail_check(&v5).unwrap() - 35.0).abs() < 1e-6);
        let bump = PotentialField::from_fn(g, |r| (1.0 - r * r).max(0.0)).unwrap();
        assert_eq!(decay_tail_check(&bump).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_norm_matches_quadrature() {
        for (l, d) in [(0, 3), (1, 3), (1, 5)] {
            let g = RadialGrid::new(200.0, 16384, d).unwrap();
            let (v, exact) = sphere_potential(&SpherePotentialSpec::new(l, d).unwrap(), &g).unwrap();
            let got = lp_norm_power(&v, d as f64 / 2.0).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-4, "l={l} d={d}: {got} vs {exact}");
        }
    }

    #[test]
    fn counting_agrees_with_schrodinger_under_dirichlet() {
        let g = RadialGrid::new(15.0, 1500, 3).unwrap();
        for amp in [0.5, 3.0, 12.0] {
            let v = PotentialField::from_fn(g.clone(), |r| amp * (-r * r / 2.0).exp()).unwrap();
            let direct = lowest_eigenpairs(&SpectrumRequest::new(&v, 1).values_only()).unwrap().negative_count;
            let bs = count_mu_above(&v, 1.0, OuterBoundary::Dirichlet).unwrap();
            assert_eq!(direct, bs, "amplitude {amp}");
        }
    }

    #[test]
    fn rejects_low_dimension_and_zero() {
        let g = RadialGrid::new(10.0, 100, 2).unwrap();
        let v = PotentialField::from_fn(g, |r| (-r * r).exp()).unwrap();
        assert!(mu_spectrum(&v, 1, None).is_err());
        let z = PotentialField::zeros(RadialGrid::new(10.0, 100, 3).unwrap());
        assert!(mu_spectrum(&z, 1, None).is_err());
    }

    #[test]
    fn ell_estimates_consistent() {
        let v = sobolev(3, 100.0, 4000);
        let res = mu_spectrum(&v, 4, None).unwrap();
        for (n, e) in &res.ell_estimates {
            let mu = res.mus[n - 1];
            assert!((e - *n as f64 * mu.powf(1.5) / res.norm_power).abs() < 1e-14);
        }
        assert!(res.mus.windows(2).all(|w| w[0] >= w[1]));
    }
}
