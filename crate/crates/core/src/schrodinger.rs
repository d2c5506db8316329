//! Lowest min-max levels of `-Δ - V` on a line grid or, channel by channel, on
//! a radial grid.
//!
//! On a radial grid the reduced function `χ(r) = r^{(d-1)/2} f(r)` of angular
//! momentum `ℓ` solves `-χ'' + κ_{ℓ,d}/r² χ - V χ = λ χ` with
//! `κ_{ℓ,d} = ℓ(ℓ+d-2) + (d-1)(d-3)/4` and Dirichlet conditions at both ends.
//! Each channel level is `m_ℓ(d)`-fold degenerate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::grid::{local_mass_sup, Grid, PotentialField, RadialGrid};
use crate::tridiag::SymTridiagonal;

/// Hard cap for the automatic angular-momentum search.
pub const L_MAX_CAP: usize = 64;

/// Dimension of the space of degree-`l` spherical harmonics on `S^{d-1}`.
pub fn channel_multiplicity(l: usize, dim: usize) -> usize {
    match dim {
        1 => 1,
        2 => {
            if l == 0 {
                1
            } else {
                2
            }
        }
        _ => binomial(l + dim - 1, dim - 1) - if l >= 2 { binomial(l + dim - 3, dim - 1) } else { 0 },
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Centrifugal coefficient `κ_{ℓ,d}` of the reduced radial equation.
pub fn centrifugal_coefficient(l: usize, dim: usize) -> f64 {
    let (l, d) = (l as f64, dim as f64);
    l * (l + d - 2.0) + (d - 1.0) * (d - 3.0) / 4.0
}

/// Kinetic part `-d²/dr² + κ/r²` (or `-d²/dx²`) with Dirichlet ends.
pub(crate) fn kinetic_operator(grid: &Grid, l: usize) -> SymTridiagonal {
    let h = grid.spacing();
    let n = grid.len();
    let inv_h2 = 1.0 / (h * h);
    let diag = match grid {
        Grid::Line(_) => vec![2.0 * inv_h2; n],
        Grid::Radial(g) => {
            let kappa = centrifugal_coefficient(l, g.dim);
            g.nodes().iter().map(|r| 2.0 * inv_h2 + kappa / (r * r)).collect()
        }
    };
    SymTridiagonal::new(diag, vec![-inv_h2; n - 1])
}

fn schrodinger_operator(v: &PotentialField, l: usize) -> SymTridiagonal {
    let mut t = kinetic_operator(&v.grid, l);
    for (d, x) in t.diag.iter_mut().zip(&v.values) {
        *d -= x;
    }
    t
}

#[derive(Clone, Debug)]
pub struct SpectrumRequest<'a> {
    pub potential: &'a PotentialField,
    pub count: usize,
    /// Highest angular channel to solve; `None` searches automatically up to
    /// [`L_MAX_CAP`]. Ignored on line grids.
    pub l_max: Option<usize>,
    /// Absolute eigenvalue tolerance; bisection runs to machine precision, so
    /// this only needs to be positive.
    pub tol: f64,
    pub eigenfunctions: bool,
}

impl<'a> SpectrumRequest<'a> {
    pub fn new(potential: &'a PotentialField, count: usize) -> Self {
        SpectrumRequest { potential, count, l_max: None, tol: 1e-12, eigenfunctions: true }
    }

    pub fn with_l_max(mut self, l_max: usize) -> Self {
        self.l_max = Some(l_max);
        self
    }

    pub fn values_only(mut self) -> Self {
        self.eigenfunctions = false;
        self
    }
}

/// One computed negative level: a radial channel eigenvalue (or a 1D
/// eigenvalue, reported as `l = 0`, multiplicity 1).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Level {
    pub l: usize,
    pub multiplicity: usize,
    pub value: f64,
    /// Grid-normalised eigenfunction (`Σ u_i² h = 1`); on radial grids this is the
    /// reduced profile `χ`. Empty when eigenfunctions were not requested.
    #[serde(skip)]
    pub eigenfunction: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SpectrumResult {
    /// The `count` lowest min-max levels, ascending, padded with zeros.
    pub eigenvalues: Vec<f64>,
    /// Distinct levels that occur among the negative entries of `eigenvalues`.
    pub levels: Vec<Level>,
    /// For each negative entry of `eigenvalues`, its index into `levels`.
    pub level_of: Vec<usize>,
    /// Total number of negative eigenvalues of the discrete operator, with
    /// multiplicity (not truncated to `count`).
    pub negative_count: usize,
}

#[derive(Serialize)]
struct SpectrumJson<'a> {
    eigenvalues: &'a [f64],
    channels: &'a [Level],
    negative_count: usize,
}

impl SpectrumResult {
    /// Number of negative entries among the requested levels.
    pub fn filled(&self) -> usize {
        self.level_of.len()
    }

    /// Eigenfunction belonging to entry `j` of `eigenvalues`.
    pub fn eigenfunction(&self, j: usize) -> &[f64] {
        &self.levels[self.level_of[j]].eigenfunction
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(SpectrumJson {
            eigenvalues: &self.eigenvalues,
            channels: &self.levels,
            negative_count: self.negative_count,
        })
        .expect("spectrum serialises")
    }

    /// Eigenfunctions as CSV, one column per negative level.
    pub fn write_eigenfunctions_csv<W: std::io::Write>(&self, grid: &Grid, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["coordinate".to_string()];
        header.extend(self.levels.iter().enumerate().map(|(i, l)| format!("level{i}_l{}", l.l)));
        w.write_record(&header)?;
        for (i, x) in grid.nodes().iter().enumerate() {
            let mut row = vec![format!("{x:.16e}")];
            row.extend(
                self.levels
                    .iter()
                    .map(|l| format!("{:.16e}", l.eigenfunction.get(i).copied().unwrap_or(0.0))),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn solve_channel(v: &PotentialField, l: usize, wanted: usize, vectors: bool) -> (usize, Vec<Level>) {
    let t = schrodinger_operator(v, l);
    let negative = t.count_below(0.0, None);
    let k = negative.min(wanted);
    let values = t.lowest_eigenvalues(k);
    let h = v.grid.spacing();
    let mut funcs = if vectors && k > 0 { t.eigenvectors(&values, None) } else { vec![Vec::new(); k] };
    for f in funcs.iter_mut() {
        let s = 1.0 / h.sqrt();
        f.iter_mut().for_each(|x| *x *= s);
    }
    let m = channel_multiplicity(l, v.dim());
    let levels = values
        .into_iter()
        .zip(funcs)
        .map(|(value, eigenfunction)| Level { l, multiplicity: m, value, eigenfunction })
        .collect();
    (negative, levels)
}

/// The `count` lowest min-max levels of the discretised `-Δ - V`.
pub fn lowest_eigenpairs(req: &SpectrumRequest<'_>) -> Result<SpectrumResult> {
    if req.count == 0 {
        return Err(LabError::invalid("eigenvalue count must be at least 1"));
    }
    if !(req.tol > 0.0) {
        return Err(LabError::invalid("eigenvalue tolerance must be positive"));
    }
    let v = req.potential;
    let n_req = req.count;
    let (negative_count, mut levels) = match &v.grid {
        Grid::Line(_) => solve_channel(v, 0, n_req, req.eigenfunctions),
        Grid::Radial(g) => collect_radial(v, g, req)?,
    };
    levels.sort_by(|a, b| a.value.total_cmp(&b.value).then(a.l.cmp(&b.l)));

    let mut eigenvalues = Vec::with_capacity(n_req);
    let mut level_of = Vec::new();
    let mut kept = Vec::new();
    for level in levels {
        if eigenvalues.len() >= n_req {
            break;
        }
        let idx = kept.len();
        for _ in 0..level.multiplicity {
            if eigenvalues.len() >= n_req {
                break;
            }
            eigenvalues.push(level.value);
            level_of.push(idx);
        }
        kept.push(level);
    }
    eigenvalues.resize(n_req, 0.0);
    Ok(SpectrumResult { eigenvalues, levels: kept, level_of, negative_count })
}

fn collect_radial(
    v: &PotentialField,
    g: &RadialGrid,
    req: &SpectrumRequest<'_>,
) -> Result<(usize, Vec<Level>)> {
    let n_req = req.count;
    let cap = req.l_max.unwrap_or(L_MAX_CAP);
    let mut levels: Vec<Level> = Vec::new();
    let mut certified = false;
    let mut last_l = 0;

    // Channels are solved in batches; within a batch they are independent.
    let batch = rayon::current_num_threads().clamp(1, 8);
    let mut l0 = 0;
    'outer: while l0 <= cap {
        let ls: Vec<usize> = (l0..=(l0 + batch - 1).min(cap)).collect();
        let solved: Vec<(usize, usize, Vec<Level>)> = ls
            .par_iter()
            .map(|&l| {
                let (neg, lv) = solve_channel(v, l, n_req, req.eigenfunctions);
                (l, neg, lv)
            })
            .collect();
        for (l, _neg, lv) in solved {
            last_l = l;
            let lowest = lv.first().map(|x| x.value);
            levels.extend(lv);
            let threshold = nth_flat_level(&levels, n_req).unwrap_or(0.0);
            match lowest {
                None => {
                    certified = true;
                    break 'outer;
                }
                Some(low) if low >= threshold && flat_len(&levels) >= n_req => {
                    // Only levels from this channel above the threshold could be
                    // displaced; higher channels sit even higher.
                    certified = true;
                    break 'outer;
                }
                _ => {}
            }
        }
        l0 += batch;
    }
    if !certified {
        return Err(LabError::ChannelExhaustion { l: last_l.min(cap) });
    }

    let negative_count = radial_negative_count(v, g);
    Ok((negative_count, levels))
}

fn flat_len(levels: &[Level]) -> usize {
    levels.iter().map(|l| l.multiplicity).sum()
}

fn nth_flat_level(levels: &[Level], n: usize) -> Option<f64> {
    let mut vals: Vec<(f64, usize)> = levels.iter().map(|l| (l.value, l.multiplicity)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut seen = 0;
    for (v, m) in vals {
        seen += m;
        if seen >= n {
            return Some(v);
        }
    }
    None
}

/// Total number of negative eigenvalues over all channels, with multiplicity.
fn radial_negative_count(v: &PotentialField, g: &RadialGrid) -> usize {
    let mut total = 0;
    for l in 0.. {
        let c = schrodinger_operator(v, l).count_below(0.0, None);
        if c == 0 {
            break;
        }
        total += c * channel_multiplicity(l, g.dim);
    }
    total
}

/// Largest local `p`-mass `sup_y ∫_{B_r(y)} V^p` over grid-centred balls.
/// Reporting only.
pub fn vanishing_bound_probe(v: &PotentialField, radius: f64, exponent: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(LabError::invalid("probe radius must be positive"));
    }
    let density: Vec<f64> = v.values.iter().map(|x| x.powf(exponent)).collect();
    Ok(local_mass_sup(v, &density, radius))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{lp_norm_power, Grid1D};

    #[test]
    fn multiplicities() {
        assert_eq!((0..5).map(|l| channel_multiplicity(l, 3)).collect::<Vec<_>>(), vec![1, 3, 5, 7, 9]);
        assert_eq!((0..4).map(|l| channel_multiplicity(l, 2)).collect::<Vec<_>>(), vec![1, 2, 2, 2]);
        // d = 4: (l+1)²
        assert_eq!((0..4).map(|l| channel_multiplicity(l, 4)).collect::<Vec<_>>(), vec![1, 4, 9, 16]);
        assert_eq!(channel_multiplicity(1, 7), 7);
        assert_eq!(channel_multiplicity(2, 7), 27);
    }

    #[test]
    fn multiplicity_matches_closed_form() {
        for d in 3..9usize {
            for l in 1..8usize {
                let closed = (2 * l + d - 2) as f64 / (l + d - 2) as f64
                    * binomial(l + d - 2, l) as f64;
                assert_eq!(channel_multiplicity(l, d) as f64, closed.round(), "l={l} d={d}");
            }
        }
    }

    #[test]
    fn free_laplacian_has_no_bound_states() {
        let v = PotentialField::zeros(Grid1D::symmetric(10.0, 200).unwrap());
        let s = lowest_eigenpairs(&SpectrumRequest::new(&v, 3)).unwrap();
        assert_eq!(s.eigenvalues, vec![0.0; 3]);
        assert_eq!(s.negative_count, 0);
        let rv = PotentialField::zeros(RadialGrid::new(10.0, 200, 3).unwrap());
        let s = lowest_eigenpairs(&SpectrumRequest::new(&rv, 3)).unwrap();
        assert_eq!(s.negative_count, 0);
        assert_eq!(s.eigenvalues, vec![0.0; 3]);
    }

    /// Even ground state of the square well of depth `v0`, half-width `a`:
    /// `k tan(k a) = κ` with `k² + κ² = v0`. Solved by bisection on k.
    fn square_well_ground(v0: f64, a: f64) -> f64 {
        let f = |k: f64| k * (k * a).tan() - (v0 - k * k).sqrt();
        let (mut lo, mut hi) = (1e-12, (v0.sqrt()).min(std::f64::consts::FRAC_PI_2 / a - 1e-12));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let k = 0.5 * (lo + hi);
        k * k - v0
    }

    #[test]
    fn square_well_ground_state() {
        let exact = square_well_ground(1.0, 1.0);
        // Node-aligned well edges with half-weight at the jump keep the error O(h²).
        let g = Grid1D::symmetric(20.0, 7999).unwrap();
        let h = g.spacing();
        let v = PotentialField::from_fn(g, |x| {
            let d = x.abs() - 1.0;
            if d < -0.5 * h {
                1.0
            } else if d.abs() <= 0.5 * h {
                0.5
            } else {
                0.0
            }
        })
        .unwrap();
        let s = lowest_eigenpairs(&SpectrumRequest::new(&v, 1)).unwrap();
        assert!((s.eigenvalues[0] - exact).abs() < 1e-5, "{} vs {}", s.eigenvalues[0], exact);
    }

    #[test]
    fn pads_with_zero_and_truncates() {
        let beta = 0.6;
        let v = PotentialField::from_fn(Grid1D::symmetric(40.0, 4000).unwrap(), |x| {
            2.0 * beta * beta / (beta * x).cosh().powi(2)
        })
        .unwrap();
        let s = lowest_eigenpairs(&SpectrumRequest::new(&v, 3)).unwrap();
        assert_eq!(s.negative_count, 1);
        assert_eq!(&s.eigenvalues[1..], &[0.0, 0.0]);
        assert!((s.eigenvalues[0] + beta * beta).abs() < 1e-4);
        assert_eq!(s.filled(), 1);
        let norm: f64 = s.eigenfunction(0).iter().map(|u| u * u).sum::<f64>() * v.grid.spacing();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radial_free_well_d3_matches_odd_line_states() {
        // In d = 3, ℓ = 0, the reduced equation is the 1D problem on (0, R)
        // with a Dirichlet node at the origin.
        let rg = RadialGrid::new(20.0, 1999, 3).unwrap();
        let v = PotentialField::from_fn(rg, |r| 3.0 * (-r * r / 2.0).exp()).unwrap();
        let s = lowest_eigenpairs(&SpectrumRequest::new(&v, 6)).unwrap();
        let lg = Grid1D::symmetric(20.0, 3999).unwrap();
        let lv = PotentialField::from_fn(lg, |x| 3.0 * (-x * x / 2.0).exp()).unwrap();
        let ls = lowest_eigenpairs(&SpectrumRequest::new(&lv, 6)).unwrap();
        // Odd 1D states are the s-wave states in d = 3.
        let odd: Vec<f64> = ls.eigenvalues.iter().skip(1).step_by(2).cloned().collect();
        let s_wave: Vec<f64> = s
            .levels
            .iter()
            .filter(|l| l.l == 0)
            .map(|l| l.value)
            .collect();
        for (a, b) in s_wave.iter().zip(&odd) {
            if *b < 0.0 {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
        // p-levels carry multiplicity 3 in the flat list.
        if let Some(p) = s.levels.iter().position(|l| l.l == 1) {
            let n = s.level_of.iter().filter(|&&i| i == p).count();
            assert!(n == 3 || s.eigenvalues.len() == s.filled());
        }
    }

    #[test]
    fn channel_exhaustion_reported() {
        // A deep wide well binds many channels; l_max = 0 cannot certify 10 levels.
        let rg = RadialGrid::new(15.0, 800, 3).unwrap();
        let v = PotentialField::from_fn(rg, |r| if r < 5.0 { 10.0 } else { 0.0 }).unwrap();
        let err = lowest_eigenpairs(&SpectrumRequest::new(&v, 10).with_l_max(0)).unwrap_err();
        assert!(matches!(err, LabError::ChannelExhaustion { l: 0 }), "{err}");
        let ok = lowest_eigenpairs(&SpectrumRequest::new(&v, 10)).unwrap();
        assert!(ok.eigenvalues.iter().all(|e| *e < 0.0));
        assert!(ok.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn probe_values() {
        let g = Grid1D::symmetric(40.0, 8000).unwrap();
        let zero = PotentialField::zeros(g.clone());
        assert_eq!(vanishing_bound_probe(&zero, 1.0, 2.0).unwrap(), 0.0);
        let bump = |c: f64| {
            move |x: f64| {
                let s = (x - c) / 0.9;
                if s.abs() < 1.0 {
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        };
        let one = PotentialField::from_fn(g.clone(), bump(0.0)).unwrap();
        let total = lp_norm_power(&one, 2.0).unwrap();
        let p1 = vanishing_bound_probe(&one, 1.0, 2.0).unwrap();
        assert!((p1 - total).abs() < 1e-14, "{p1} vs {total}");
        let (b1, b2) = (bump(-15.0), bump(15.0));
        let two = PotentialField::from_fn(g, |x| b1(x) + b2(x)).unwrap();
        let p2 = vanishing_bound_probe(&two, 1.0, 2.0).unwrap();
        assert!((p2 - p1).abs() < 1e-10, "{p2} vs {p1}");
        assert!(vanishing_bound_probe(&two, 0.0, 2.0).is_err());
    }
}
