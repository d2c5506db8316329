//! Damped self-consistent iteration of the Euler–Lagrange map
//! `V = (2γ/((d+2γ)L) Σ_{j≤N} |λ_j|^{γ-1} |u_j|²)^{1/(γ+d/2-1)}`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::functional::{check_admissible, riesz_sum};
use crate::grid::{lp_norm_power, unit_sphere_area, Grid, Grid1D, PotentialField, RadialGrid};
use crate::profiles::ProfileRegistry;
use crate::schrodinger::{lowest_eigenpairs, SpectrumRequest, SpectrumResult};

/// Extra levels requested beyond `N` so a degenerate shell at the cut is seen whole.
const SHELL_LOOKAHEAD: usize = 16;
const ETA_MIN: f64 = 1.0 / 8192.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScfConfig {
    pub gamma: f64,
    pub dim: usize,
    pub n_states: usize,
    pub eta: f64,
    pub max_iter: usize,
    /// Relative `L^{γ+d/2}` distance between `V` and its normalised image.
    pub tol_fixed_point: f64,
    /// Allowed drop of the quotient before the damping is halved.
    pub tol_objective: f64,
    pub degeneracy_tol: f64,
    pub grid_n: usize,
    /// Half-width of the line box, or the outer radius.
    pub extent: f64,
    pub l_max: Option<usize>,
    /// Profile descriptor understood by [`ProfileRegistry`].
    pub init: String,
    pub seed: u64,
}

impl Default for ScfConfig {
    fn default() -> Self {
        ScfConfig {
            gamma: 1.5,
            dim: 1,
            n_states: 1,
            eta: 0.5,
            max_iter: 500,
            tol_fixed_point: 1e-8,
            tol_objective: 1e-6,
            degeneracy_tol: 1e-9,
            grid_n: 4000,
            extent: 40.0,
            l_max: None,
            init: "gaussian".into(),
            seed: 0,
        }
    }
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        check_admissible(self.gamma, self.dim)?;
        if self.gamma + self.dim as f64 / 2.0 <= 1.0 {
            return Err(LabError::invalid("the Euler-Lagrange exponent needs gamma + d/2 > 1"));
        }
        if self.n_states == 0 {
            return Err(LabError::invalid("n_states must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(LabError::invalid("mixing eta must lie in (0, 1]"));
        }
        for (name, t) in [
            ("tol_fixed_point", self.tol_fixed_point),
            ("tol_objective", self.tol_objective),
            ("degeneracy_tol", self.degeneracy_tol),
        ] {
            if !(t > 0.0) {
                return Err(LabError::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.extent > 0.0) {
            return Err(LabError::invalid("grid extent must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(match self.dim {
            1 => Grid1D::symmetric(self.extent, self.grid_n)?.into(),
            d => RadialGrid::new(self.extent, self.grid_n, d)?.into(),
        })
    }

    fn exponent(&self) -> f64 {
        self.gamma + self.dim as f64 / 2.0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScfTraceEntry {
    pub iteration: usize,
    pub ratio: f64,
    pub residual: f64,
    pub eta: f64,
    /// Set when the quotient dropped although the damping was already minimal.
    pub objective_drop: bool,
}

#[derive(Clone, Debug)]
pub struct ScfResult {
    pub v_star: PotentialField,
    pub spectrum: SpectrumResult,
    pub l_estimate: f64,
    pub gap: f64,
    pub decay_rate_fit: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residual: f64,
    pub n_states: usize,
    pub degeneracy_tol: f64,
    pub trace: Vec<ScfTraceEntry>,
}

impl ScfResult {
    pub fn to_json_value(&self, config: &ScfConfig) -> serde_json::Value {
        serde_json::json!({
            "config": config,
            "L_estimate": self.l_estimate,
            "eigenvalues": self.spectrum.eigenvalues[..self.n_states.min(self.spectrum.eigenvalues.len())],
            "gap": self.gap,
            "decay_rate_fit": self.decay_rate_fit,
            "iterations": self.iterations,
            "converged": self.converged,
            "residual": self.residual,
        })
    }

    /// The trace as JSON lines.
    pub fn write_trace<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for e in &self.trace {
            serde_json::to_writer(&mut w, e)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Occupation weights for the flat (ascending) eigenvalue list: the `N`
/// lowest negative levels, with a shell of levels within `tol` of the cut
/// filled fractionally.
pub fn occupations(eigenvalues: &[f64], n_states: usize, tol: f64) -> Vec<f64> {
    let neg = eigenvalues.iter().take_while(|e| **e < 0.0).count();
    let mut w = vec![0.0; eigenvalues.len()];
    if neg == 0 {
        return w;
    }
    if neg <= n_states {
        w[..neg].iter_mut().for_each(|x| *x = 1.0);
        return w;
    }
    let cut = eigenvalues[n_states - 1];
    let start = eigenvalues[..n_states].iter().position(|e| (e - cut).abs() <= tol).unwrap();
    let end = start + eigenvalues[start..neg].iter().take_while(|e| (**e - cut).abs() <= tol).count();
    w[..start].iter_mut().for_each(|x| *x = 1.0);
    let share = (n_states - start) as f64 / (end - start) as f64;
    w[start..end].iter_mut().for_each(|x| *x = share);
    w
}

/// `Σ_j w_j |λ_j|^{γ-1} |u_j|²` as a pointwise density.
fn weighted_density(v: &PotentialField, spec: &SpectrumResult, weights: &[f64], gamma: f64) -> Vec<f64> {
    let n = v.values.len();
    let mut rho = vec![0.0; n];
    for (j, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let c = w * (-spec.eigenvalues[j]).powf(gamma - 1.0);
        for (r, u) in rho.iter_mut().zip(spec.eigenfunction(j)) {
            *r += c * u * u;
        }
    }
    if let Grid::Radial(g) = &v.grid {
        // χ² → |f|² summed over the spherical harmonics of the shell.
        let area = unit_sphere_area(g.dim - 1);
        for (r, x) in rho.iter_mut().zip(g.nodes()) {
            *r /= area * x.powi(g.dim as i32 - 1);
        }
    }
    rho
}

/// One application of the Euler–Lagrange map.
pub fn euler_lagrange_map(
    v: &PotentialField,
    gamma: f64,
    n_states: usize,
    l_current: f64,
    degeneracy_tol: f64,
) -> Result<PotentialField> {
    let dim = v.dim();
    check_admissible(gamma, dim)?;
    if gamma + dim as f64 / 2.0 <= 1.0 {
        return Err(LabError::invalid("the Euler-Lagrange exponent needs gamma + d/2 > 1"));
    }
    if !(l_current > 0.0) {
        return Err(LabError::invalid("L_current must be positive"));
    }
    let spec = lowest_eigenpairs(&SpectrumRequest::new(v, n_states + SHELL_LOOKAHEAD))?;
    el_from_spectrum(v, &spec, gamma, n_states, l_current, degeneracy_tol)
}

fn el_from_spectrum(
    v: &PotentialField,
    spec: &SpectrumResult,
    gamma: f64,
    n_states: usize,
    l_current: f64,
    degeneracy_tol: f64,
) -> Result<PotentialField> {
    let d = v.dim() as f64;
    if spec.eigenvalues.first().map_or(true, |e| *e >= 0.0) {
        return Err(LabError::Breakdown("no negative eigenvalue, the iteration cannot proceed".into()));
    }
    let weights = occupations(&spec.eigenvalues, n_states, degeneracy_tol);
    let rho = weighted_density(v, spec, &weights, gamma);
    let coef = 2.0 * gamma / ((d + 2.0 * gamma) * l_current);
    let expo = 1.0 / (gamma + d / 2.0 - 1.0);
    let values = rho.iter().map(|r| (coef * r).powf(expo)).collect();
    PotentialField::new(v.grid.clone(), values)
}

/// Amplitude scaling to unit `∫V^q`.
pub fn normalize_amplitude(v: &PotentialField, q: f64) -> Result<PotentialField> {
    let norm = lp_norm_power(v, q)?;
    if norm == 0.0 {
        return Err(LabError::DegenerateInput("cannot normalise the zero potential".into()));
    }
    Ok(v.scaled(norm.powf(-1.0 / q)))
}

fn q_distance(a: &PotentialField, b: &PotentialField, q: f64) -> f64 {
    let w = a.grid.weights();
    let s: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .zip(&w)
        .map(|((x, y), w)| w * (x - y).abs().powf(q))
        .sum();
    s.powf(1.0 / q)
}

struct Iterate {
    v: PotentialField,
    spectrum: SpectrumResult,
    ratio: f64,
    residual: f64,
}

fn evaluate(v: PotentialField, cfg: &ScfConfig) -> Result<Iterate> {
    let q = cfg.exponent();
    let mut req = SpectrumRequest::new(&v, cfg.n_states + SHELL_LOOKAHEAD);
    req.l_max = cfg.l_max;
    let spectrum = lowest_eigenpairs(&req)?;
    let norm = lp_norm_power(&v, q)?;
    let n_cut = cfg.n_states.min(spectrum.eigenvalues.len());
    let ratio = riesz_sum(&spectrum.eigenvalues[..n_cut], cfg.gamma) / norm;
    if !(ratio > 0.0) {
        return Err(LabError::Breakdown("the spectrum emptied during the iteration".into()));
    }
    let image = el_from_spectrum(&v, &spectrum, cfg.gamma, cfg.n_states, ratio, cfg.degeneracy_tol)?;
    let image = normalize_amplitude(&image, q)?;
    let residual = q_distance(&image, &v, q) / norm.powf(1.0 / q);
    Ok(Iterate { v, spectrum, ratio, residual })
}

fn quotient(v: &PotentialField, cfg: &ScfConfig) -> Result<f64> {
    let mut req = SpectrumRequest::new(v, cfg.n_states).values_only();
    req.l_max = cfg.l_max;
    let spec = lowest_eigenpairs(&req)?;
    Ok(riesz_sum(&spec.eigenvalues, cfg.gamma) / lp_norm_power(v, cfg.exponent())?)
}

/// Runs the iteration from the configured initial profile.
pub fn run(config: &ScfConfig) -> Result<ScfResult> {
    config.validate()?;
    let grid = config.grid()?;
    let v0 = ProfileRegistry::standard().build(&config.init, &grid, config.seed)?;
    run_from(config, v0, |_| {})
}

/// Runs the iteration from `v0`, reporting every step to `observer`.
pub fn run_from(
    config: &ScfConfig,
    v0: PotentialField,
    mut observer: impl FnMut(&ScfTraceEntry),
) -> Result<ScfResult> {
    config.validate()?;
    if v0.dim() != config.dim {
        return Err(LabError::DimensionMismatch {
            expected: format!("d = {}", config.dim),
            found: format!("d = {}", v0.dim()),
        });
    }
    let q = config.exponent();
    let mut eta = config.eta;
    let mut current = evaluate(normalize_amplitude(&v0, q)?, config)?;
    let mut best: Option<Iterate> = None;
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let entry = ScfTraceEntry {
            iteration: iterations,
            ratio: current.ratio,
            residual: current.residual,
            eta,
            objective_drop: false,
        };
        if current.residual <= config.tol_fixed_point {
            converged = true;
        }
        if converged || iterations >= config.max_iter {
            observer(&entry);
            trace.push(entry);
            break;
        }
        let image = el_from_spectrum(
            &current.v,
            &current.spectrum,
            config.gamma,
            config.n_states,
            current.ratio,
            config.degeneracy_tol,
        )?;
        let mut dropped = false;
        let next = loop {
            let mixed: Vec<f64> = current
                .v
                .values
                .iter()
                .zip(&image.values)
                .map(|(a, b)| (1.0 - eta) * a + eta * b)
                .collect();
            let cand = normalize_amplitude(&PotentialField::new(current.v.grid.clone(), mixed)?, q)?;
            let r = quotient(&cand, config)?;
            if r >= current.ratio - config.tol_objective {
                break cand;
            }
            if eta <= ETA_MIN {
                dropped = true;
                break cand;
            }
            eta = (eta * 0.5).max(ETA_MIN);
        };
        let entry = ScfTraceEntry { objective_drop: dropped, ..entry };
        observer(&entry);
        trace.push(entry);
        let previous = std::mem::replace(&mut current, evaluate(next, config)?);
        if best.as_ref().map_or(true, |b| previous.ratio > b.ratio) {
            best = Some(previous);
        }
        iterations += 1;
    }
    let chosen = match best {
        Some(b) if !converged && b.ratio > current.ratio => b,
        _ => current,
    };
    finish(chosen, config, iterations, converged, trace)
}

fn finish(
    it: Iterate,
    cfg: &ScfConfig,
    iterations: usize,
    converged: bool,
    trace: Vec<ScfTraceEntry>,
) -> Result<ScfResult> {
    let n = cfg.n_states;
    let eig = &it.spectrum.eigenvalues;
    let gap = eig.get(n).copied().unwrap_or(0.0) - eig[n - 1];
    let decay_rate_fit = decay_rate(&it.v);
    Ok(ScfResult {
        l_estimate: it.ratio,
        gap,
        decay_rate_fit,
        iterations,
        converged,
        residual: it.residual,
        n_states: n,
        degeneracy_tol: cfg.degeneracy_tol,
        spectrum: it.spectrum,
        v_star: it.v,
        trace,
    })
}

/// Least-squares exponential decay rate of `V` over the outer 20% of the grid
/// (measured from the box centre on a line grid).
pub fn decay_rate(v: &PotentialField) -> f64 {
    let nodes = v.grid.nodes();
    let (centre, reach) = match &v.grid {
        Grid::Line(g) => (0.5 * (g.x_min + g.x_max), 0.5 * (g.x_max - g.x_min)),
        Grid::Radial(g) => (0.0, g.r_max),
    };
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut k = 0.0;
    for (x, y) in nodes.iter().zip(&v.values) {
        let s = (x - centre).abs();
        if s >= 0.8 * reach && *y > f64::MIN_POSITIVE {
            let ly = y.ln();
            sx += s;
            sy += ly;
            sxx += s * s;
            sxy += s * ly;
            k += 1.0;
        }
    }
    if k < 2.0 {
        return f64::NAN;
    }
    -(k * sxy - sx * sy) / (k * sxx - sx * sx)
}

/// `λ_N < λ_{N+1} - degeneracy_tol`, with missing levels read as 0.
pub fn gap_check(result: &ScfResult) -> bool {
    let eig = &result.spectrum.eigenvalues;
    let n = result.n_states;
    let next = eig.get(n).copied().unwrap_or(0.0);
    eig[n - 1] < next - result.degeneracy_tol
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BindingReport {
    pub separation: f64,
    #[serde(rename = "A_R")]
    pub a_r: f64,
    #[serde(rename = "e_R")]
    pub e_r: f64,
    #[serde(rename = "B_R")]
    pub b_r: f64,
    /// Quotient of the two-copy trial potential for `2N` states.
    pub trial_ratio: f64,
    /// Quotient of the single copy for `N` states.
    pub single_ratio: f64,
    /// Leading-order bound `L^(N) (1 + ½(d/2 + γ - 1) A_R)`.
    pub leading_bound: f64,
}

/// Two-copy trial state built from the density of `v_opt` (line grids only).
pub fn binding_correction(
    v_opt: &PotentialField,
    gamma: f64,
    n_states: usize,
    separation: f64,
    dim: usize,
) -> Result<BindingReport> {
    let grid = match &v_opt.grid {
        Grid::Line(g) if dim == 1 => g.clone(),
        _ => {
            return Err(LabError::DimensionMismatch {
                expected: "line grid with d = 1".into(),
                found: format!("d = {dim}, {}-dimensional grid", v_opt.dim()),
            })
        }
    };
    check_admissible(gamma, dim)?;
    if !(separation > 0.0) || separation >= grid.x_max - grid.x_min {
        return Err(LabError::invalid("separation must be positive and smaller than the box"));
    }
    let d = dim as f64;
    let q = gamma + d / 2.0;
    let p = q / (q - 1.0);
    let spec = lowest_eigenpairs(&SpectrumRequest::new(v_opt, n_states))?;
    let m = spec.eigenvalues.iter().filter(|e| **e < 0.0).count();
    if m < n_states {
        return Err(LabError::invalid(format!(
            "binding needs {n_states} bound states, the potential has {m}"
        )));
    }
    let single_ratio = riesz_sum(&spec.eigenvalues, gamma) / lp_norm_power(v_opt, q)?;
    let beta = 2.0 * gamma / (single_ratio * (d + 2.0 * gamma));
    let weights = vec![1.0; n_states];
    let rho = weighted_density(v_opt, &spec, &weights, gamma);
    let brho = PotentialField::new(grid.clone(), rho.iter().map(|r| beta * r).collect())?;

    let nodes = grid.nodes();
    let h = grid.spacing();
    let half = 0.5 * separation;
    let minus: Vec<f64> = nodes.iter().map(|x| brho.sample_at(x - half)).collect();
    let plus: Vec<f64> = nodes.iter().map(|x| brho.sample_at(x + half)).collect();
    let v_r: Vec<f64> = minus.iter().zip(&plus).map(|(a, b)| (a + b).powf(p - 1.0)).collect();
    let a_r = minus
        .iter()
        .zip(&plus)
        .map(|(a, b)| (a + b).powf(p) - a.powf(p) - b.powf(p))
        .sum::<f64>()
        * h;

    let shifted = |j: usize, by: f64| -> Vec<f64> {
        let f = PotentialField::new(grid.clone(), spec.eigenfunction(j).iter().map(|u| u.abs()).collect())
            .expect("moduli are nonnegative");
        nodes.iter().map(|x| f.sample_at(x + by)).collect()
    };
    let u_minus: Vec<Vec<f64>> = (0..n_states).map(|j| shifted(j, -half)).collect();
    let u_plus: Vec<Vec<f64>> = (0..n_states).map(|j| shifted(j, half)).collect();
    let v_plus: Vec<f64> = plus.iter().map(|b| b.powf(p - 1.0)).collect();
    let mut e_r: f64 = 0.0;
    let mut b_r: f64 = 0.0;
    for i in 0..n_states {
        for j in 0..n_states {
            let e: f64 = u_minus[i].iter().zip(&u_plus[j]).map(|(a, b)| a * b).sum::<f64>() * h;
            let b: f64 = (0..nodes.len())
                .map(|k| u_plus[i][k] * u_plus[j][k] * (v_r[k] - v_plus[k]))
                .sum::<f64>()
                * h;
            e_r = e_r.max(e);
            b_r = b_r.max(b);
        }
    }
    let trial = PotentialField::new(grid, v_r)?;
    let trial_spec = lowest_eigenpairs(&SpectrumRequest::new(&trial, 2 * n_states).values_only())?;
    let trial_ratio = riesz_sum(&trial_spec.eigenvalues, gamma) / lp_norm_power(&trial, q)?;
    Ok(BindingReport {
        separation,
        a_r,
        e_r,
        b_r,
        trial_ratio,
        single_ratio,
        leading_bound: single_ratio * (1.0 + 0.5 * (d / 2.0 + gamma - 1.0) * a_r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kdv::{normalize_to_manifold, soliton_profile, SolitonSpec};

    fn rel_q_gap(a: &PotentialField, b: &PotentialField, q: f64) -> f64 {
        q_distance(a, b, q) / lp_norm_power(b, q).unwrap().powf(1.0 / q)
    }

    #[test]
    fn occupation_weights() {
        assert_eq!(occupations(&[-3.0, -1.0, 0.0], 1, 1e-9), vec![1.0, 0.0, 0.0]);
        assert_eq!(occupations(&[-3.0, 0.0, 0.0], 2, 1e-9), vec![1.0, 0.0, 0.0]);
        assert_eq!(occupations(&[-3.0, -1.0, -1.0, -1.0, -0.5], 2, 1e-9), vec![1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(occupations(&[-1.0, -1.0, -0.2], 2, 1e-9), vec![1.0, 1.0, 0.0]);
        assert_eq!(occupations(&[0.0, 0.0], 1, 1e-9), vec![0.0, 0.0]);
    }

    #[test]
    fn one_soliton_is_a_fixed_point() {
        let spec = normalize_to_manifold(&SolitonSpec::centred(vec![1.0]).unwrap());
        let g = Grid1D::symmetric(60.0, 8192).unwrap();
        let v = soliton_profile(&spec, &g).unwrap();
        let out = euler_lagrange_map(&v, 1.5, 1, 0.1875, 1e-9).unwrap();
        assert!(rel_q_gap(&out, &v, 2.0) < 1e-5, "{}", rel_q_gap(&out, &v, 2.0));
    }

    #[test]
    fn two_soliton_is_a_fixed_point() {
        let spec = normalize_to_manifold(&SolitonSpec::new(vec![0.8, 0.5], vec![-1.0, 1.5]).unwrap());
        let g = Grid1D::symmetric(60.0, 8192).unwrap();
        let v = soliton_profile(&spec, &g).unwrap();
        let out = euler_lagrange_map(&v, 1.5, 2, 0.1875, 1e-9).unwrap();
        assert!(rel_q_gap(&out, &v, 2.0) < 1e-5, "{}", rel_q_gap(&out, &v, 2.0));
    }

    #[test]
    fn exponent_singularity_is_rejected() {
        let g = Grid1D::symmetric(10.0, 100).unwrap();
        let v = PotentialField::from_fn(g, |x| (-x * x).exp()).unwrap();
        assert!(euler_lagrange_map(&v, 0.5, 1, 0.2, 1e-9).is_err());
        let cfg = ScfConfig { gamma: 0.3, ..ScfConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn breakdown_without_bound_state() {
        let g = Grid1D::symmetric(10.0, 100).unwrap();
        let v = PotentialField::zeros(g);
        assert!(matches!(euler_lagrange_map(&v, 1.5, 1, 0.2, 1e-9), Err(LabError::Breakdown(_))));
    }

    #[test]
    fn gap_check_flags() {
        let g = Grid1D::symmetric(60.0, 4000).unwrap();
        let v = soliton_profile(&SolitonSpec::centred(vec![0.6]).unwrap(), &g).unwrap();
        let cfg = ScfConfig { n_states: 1, ..ScfConfig::default() };
        let it = evaluate(v, &cfg).unwrap();
        let mut res = finish(it, &cfg, 0, true, vec![]).unwrap();
        assert!(gap_check(&res));
        res.spectrum.eigenvalues[1] = res.spectrum.eigenvalues[0];
        assert!(!gap_check(&res));

        let v2 = soliton_profile(&SolitonSpec::centred(vec![0.8, 0.5]).unwrap(), &g).unwrap();
        let cfg2 = ScfConfig { n_states: 2, ..ScfConfig::default() };
        let res2 = finish(evaluate(v2, &cfg2).unwrap(), &cfg2, 0, true, vec![]).unwrap();
        assert!(gap_check(&res2));
    }

    #[test]
    fn binding_requires_line() {
        let g = RadialGrid::new(10.0, 100, 3).unwrap();
        let v = PotentialField::from_fn(g, |r| (-r * r).exp()).unwrap();
        assert!(matches!(
            binding_correction(&v, 2.0, 1, 5.0, 3),
            Err(LabError::DimensionMismatch { .. })
        ));
    }
}
