//! The acceptance suite as a registry of named checks.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::birman_schwinger::{
    count_mu_above, inversion_transform, mu_spectrum, sphere_potential, OuterBoundary, SpherePotentialSpec,
};
use crate::error::Result;
use crate::functional::riesz_ratio;
use crate::grid::{lp_norm_power, Grid, Grid1D, PotentialField, RadialGrid};
use crate::kdv::{exact_spectrum, manifold_distance, normalize_to_manifold, soliton_profile, SolitonSpec};
use crate::profiles::ProfileRegistry;
use crate::scf::{binding_correction, euler_lagrange_map, gap_check, run, ScfConfig};
use crate::schrodinger::{lowest_eigenpairs, SpectrumRequest};

/// Outcome of a single check: `Ok(detail)` on pass, `Err(detail)` on fail.
pub type Verdict = std::result::Result<String, String>;

pub trait Criterion: Send + Sync {
    fn id(&self) -> usize;
    fn name(&self) -> &'static str;
    /// Part of the sub-minute subset.
    fn quick(&self) -> bool;
    fn check(&self) -> Result<Verdict>;
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub struct CriterionRegistry {
    criteria: Vec<Box<dyn Criterion>>,
}

impl CriterionRegistry {
    pub fn standard() -> Self {
        CriterionRegistry {
            criteria: vec![
                Box::new(SolitonSpectrum),
                Box::new(ThreeHalvesIdentity),
                Box::new(StrictOffManifold),
                Box::new(ScfOneBubble),
                Box::new(ScfTwoStates),
                Box::new(Binding),
                Box::new(FixedPoint),
                Box::new(SpherePotentials),
                Box::new(StrictGainD7),
                Box::new(InversionInvariance),
                Box::new(BirmanSchwingerCount),
                Box::new(Dichotomy),
            ],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Criterion> {
        self.criteria.iter().map(|c| c.as_ref())
    }

    pub fn get(&self, id: usize) -> Option<&dyn Criterion> {
        self.iter().find(|c| c.id() == id)
    }

    /// Runs the selected checks one after another (each may use all cores).
    pub fn run(&self, quick_only: bool, mut report: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
        let mut out = Vec::new();
        for c in self.iter().filter(|c| !quick_only || c.quick()) {
            let outcome = evaluate(c);
            report(&outcome);
            out.push(outcome);
        }
        out
    }
}

pub fn evaluate(c: &dyn Criterion) -> CriterionOutcome {
    let start = Instant::now();
    let (passed, detail) = match c.check() {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome { id: c.id(), name: c.name(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn max_abs_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct SolitonSpectrum;

impl Criterion for SolitonSpectrum {
    fn id(&self) -> usize {
        1
    }
    fn name(&self) -> &'static str {
        "soliton spectrum oracle"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let start = Instant::now();
        let spec = SolitonSpec::centred(vec![0.9, 0.6, 0.3])?;
        let exact = exact_spectrum(&spec);
        let solve = |n: usize| -> Result<f64> {
            let g = Grid1D::symmetric(60.0, n)?;
            let v = soliton_profile(&spec, &g)?;
            let got = lowest_eigenpairs(&SpectrumRequest::new(&v, 3).values_only())?;
            Ok(max_abs_gap(&got.eigenvalues, &exact))
        };
        let main = solve(8192)?;
        // Exact halvings of h = 120/(n+1).
        let errs = [solve(2047)?, solve(4095)?, solve(8191)?];
        let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
        let secs = start.elapsed().as_secs_f64();
        Ok(verdict(
            main <= 1e-4 && min_order >= 1.9 && secs < 30.0,
            format!("max |Δλ| = {main:.2e} at n = 8192, orders {orders:.3?}, {secs:.1} s"),
        ))
    }
}

fn random_speeds(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    loop {
        let mut b: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
        b.sort_by(|x, y| y.total_cmp(x));
        if b.windows(2).all(|w| w[0] - w[1] >= 0.05) {
            return b;
        }
    }
}

struct ThreeHalvesIdentity;

impl Criterion for ThreeHalvesIdentity {
    fn id(&self) -> usize {
        2
    }
    fn name(&self) -> &'static str {
        "gamma = 3/2 identity on solitons"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Grid1D::symmetric(60.0, 8192)?;
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for m in 1..=4 {
            for _ in 0..3 {
                let b = random_speeds(&mut rng, m);
                let x = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let v = soliton_profile(&SolitonSpec::new(b, x)?, &g)?;
                let r = riesz_ratio(&v, 1.5, m)?;
                worst = worst.max((r.ratio - 0.1875).abs());
                count += 1;
            }
        }
        Ok(verdict(worst <= 1e-4, format!("{count} solitons, max |ratio - 3/16| = {worst:.2e}")))
    }
}

struct StrictOffManifold;

impl Criterion for StrictOffManifold {
    fn id(&self) -> usize {
        3
    }
    fn name(&self) -> &'static str {
        "strict inequality off the soliton manifold"
    }
    fn quick(&self) -> bool {
        false
    }
    fn check(&self) -> Result<Verdict> {
        let g: Grid = Grid1D::symmetric(30.0, 3000)?.into();
        let reg = ProfileRegistry::standard();
        let n = 6;
        let rows: Vec<Result<(f64, f64)>> = (0..100u64)
            .into_par_iter()
            .map(|seed| {
                let v = reg.build("random", &g, seed)?;
                let ratio = riesz_ratio(&v, 1.5, n)?.ratio;
                let dist = manifold_distance(&v, n)?.l2_distance;
                Ok((ratio, dist))
            })
            .collect();
        let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
        let off: Vec<&(f64, f64)> = rows.iter().filter(|(_, d)| *d > 1e-2).collect();
        let bad = off.iter().filter(|(r, _)| *r >= 0.1875 - 1e-4).count();
        let max_ratio = off.iter().map(|(r, _)| *r).fold(0.0, f64::max);
        let min_dist = rows.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
        Ok(verdict(
            bad == 0,
            format!(
                "{} of 100 bumps off the manifold, {bad} violations, max ratio {max_ratio:.5}, min distance {min_dist:.3e}",
                off.len()
            ),
        ))
    }
}

struct ScfOneBubble;

impl Criterion for ScfOneBubble {
    fn id(&self) -> usize {
        4
    }
    fn name(&self) -> &'static str {
        "SCF recovers the one-soliton"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        // A wide box keeps the wall out of the tail fit.
        let cfg = ScfConfig { extent: 100.0, grid_n: 10000, ..ScfConfig::default() };
        let res = run(&cfg)?;
        let dist = manifold_distance(&res.v_star, 1)?.l2_distance;
        let expected = 2.0 * (-res.spectrum.eigenvalues[0]).sqrt();
        let decay_err = (res.decay_rate_fit / expected - 1.0).abs();
        let gap = gap_check(&res);
        Ok(verdict(
            res.converged && (res.l_estimate - 0.1875).abs() <= 1e-4 && dist <= 1e-3 && gap && decay_err <= 0.1,
            format!(
                "L = {:.6}, distance {dist:.2e}, gap {gap}, decay {:.4} vs {expected:.4} ({:.1}%), {} iterations",
                res.l_estimate,
                res.decay_rate_fit,
                100.0 * decay_err,
                res.iterations
            ),
        ))
    }
}

struct ScfTwoStates;

impl Criterion for ScfTwoStates {
    fn id(&self) -> usize {
        5
    }
    fn name(&self) -> &'static str {
        "SCF with two states at gamma = 3/2"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        // Every normalised 2-soliton is a maximiser, so the residual stalls at
        // the discretisation level while the iterate drifts along the manifold.
        let cfg = ScfConfig {
            n_states: 2,
            init: "bumps:2,6".into(),
            tol_fixed_point: 1e-5,
            ..ScfConfig::default()
        };
        let res = run(&cfg)?;
        let fit = manifold_distance(&res.v_star, 2)?;
        Ok(verdict(
            res.converged && fit.l2_distance <= 1e-2 && (res.l_estimate - 0.1875).abs() <= 1e-3,
            format!(
                "L = {:.6}, distance {:.2e} (order {}), residual {:.1e}, {} iterations",
                res.l_estimate, fit.l2_distance, fit.order, res.residual, res.iterations
            ),
        ))
    }
}

struct Binding;

impl Criterion for Binding {
    fn id(&self) -> usize {
        6
    }
    fn name(&self) -> &'static str {
        "binding at gamma = 2"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let one = run(&ScfConfig { gamma: 2.0, ..ScfConfig::default() })?;
        let two = run(&ScfConfig { gamma: 2.0, n_states: 2, init: "bumps:2,6".into(), ..ScfConfig::default() })?;
        let b = binding_correction(&one.v_star, 2.0, 1, 15.0, 1)?;
        let margin = two.l_estimate - one.l_estimate;
        Ok(verdict(
            one.converged && two.converged && margin > 1e-4 && b.a_r > 0.0 && b.trial_ratio > one.l_estimate,
            format!(
                "L1 = {:.6}, L2 = {:.6} (margin {margin:.2e}); R = 15: A_R = {:.3e}, e_R = {:.2e}, B_R = {:.2e}, trial {:.6}",
                one.l_estimate, two.l_estimate, b.a_r, b.e_r, b.b_r, b.trial_ratio
            ),
        ))
    }
}

struct FixedPoint;

impl Criterion for FixedPoint {
    fn id(&self) -> usize {
        7
    }
    fn name(&self) -> &'static str {
        "Euler-Lagrange fixed point on solitons"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let g = Grid1D::symmetric(60.0, 8192)?;
        let mut gaps = Vec::new();
        for spec in [SolitonSpec::centred(vec![1.0])?, SolitonSpec::new(vec![0.8, 0.5], vec![-1.0, 1.5])?] {
            let spec = normalize_to_manifold(&spec);
            let v = soliton_profile(&spec, &g)?;
            let out = euler_lagrange_map(&v, 1.5, spec.order(), 0.1875, 1e-9)?;
            let diff = PotentialField::new(
                g.clone(),
                out.values.iter().zip(&v.values).map(|(a, b)| (a - b).abs()).collect(),
            )?;
            gaps.push((lp_norm_power(&diff, 2.0)? / lp_norm_power(&v, 2.0)?).sqrt());
        }
        let worst = gaps.iter().cloned().fold(0.0, f64::max);
        Ok(verdict(worst <= 1e-5, format!("relative L² change {:.2e}, {:.2e}", gaps[0], gaps[1])))
    }
}

struct SpherePotentials;

impl Criterion for SpherePotentials {
    fn id(&self) -> usize {
        8
    }
    fn name(&self) -> &'static str {
        "CLR sphere potentials in d = 3"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let g = RadialGrid::new(200.0, 16384, 3)?;
        let (v1, _) = sphere_potential(&SpherePotentialSpec::new(1, 3)?, &g)?;
        let r1 = mu_spectrum(&v1, 6, None)?;
        let (hits, total) = r1.cluster_near(1.0, 1e-3);
        let at_l1 = hits.iter().filter(|c| c.l == 1).count();
        let (v0, _) = sphere_potential(&SpherePotentialSpec::new(0, 3)?, &g)?;
        let r0 = mu_spectrum(&v0, 2, None)?;
        let ok = total == 4 && at_l1 == 1 && (r0.mus[0] - 1.0).abs() <= 1e-3 && (r0.mus[1] - 0.2).abs() <= 1e-3;
        let levels: Vec<String> = hits.iter().map(|c| format!("l={} x{} {:.6}", c.l, c.multiplicity, c.value)).collect();
        Ok(verdict(
            ok,
            format!(
                "V_1 level 1 multiplicity {total} [{}]; Sobolev mu1 = {:.6}, mu2 = {:.6}",
                levels.join(", "),
                r0.mus[0],
                r0.mus[1]
            ),
        ))
    }
}

struct StrictGainD7;

impl Criterion for StrictGainD7 {
    fn id(&self) -> usize {
        9
    }
    fn name(&self) -> &'static str {
        "d = 7 strict gain of V_1"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let g = RadialGrid::new(200.0, 16384, 7)?;
        let (v1, _) = sphere_potential(&SpherePotentialSpec::new(1, 7)?, &g)?;
        let (v0, _) = sphere_potential(&SpherePotentialSpec::new(0, 7)?, &g)?;
        let e9 = mu_spectrum(&v1, 9, None)?.ell_estimates[&9];
        let e1 = mu_spectrum(&v0, 1, None)?.ell_estimates[&1];
        let target = 5f64.powf(3.5) / 9f64.powf(2.5);
        let ratio = e9 / e1;
        Ok(verdict(
            (ratio / target - 1.0).abs() <= 0.01 && ratio > 1.0,
            format!("ell9(V_1)/ell1(Sobolev) = {ratio:.5}, expected {target:.5}"),
        ))
    }
}

struct InversionInvariance;

impl Criterion for InversionInvariance {
    fn id(&self) -> usize {
        10
    }
    fn name(&self) -> &'static str {
        "inversion invariance of mu_j"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let g: Grid = RadialGrid::new(200.0, 20000, 3)?.into();
        let v = ProfileRegistry::standard().build("random", &g, 10)?;
        let w = inversion_transform(&v)?;
        let a = mu_spectrum(&v, 3, None)?;
        let b = mu_spectrum(&w.field, 3, None)?;
        let gap = max_abs_gap(&a.mus, &b.mus);
        let sob = ProfileRegistry::standard().build("sobolev", &g, 0)?;
        let sw = inversion_transform(&sob)?;
        let fixed = max_abs_gap(&sob.values, &sw.field.values);
        Ok(verdict(
            gap <= 1e-3 && fixed <= 1e-3,
            format!(
                "mu {:.5?} vs {:.5?} (max gap {gap:.2e}); Sobolev self-gap {fixed:.2e}",
                a.mus, b.mus
            ),
        ))
    }
}

struct BirmanSchwingerCount;

impl Criterion for BirmanSchwingerCount {
    fn id(&self) -> usize {
        11
    }
    fn name(&self) -> &'static str {
        "Birman-Schwinger counting principle"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        let g: Grid = RadialGrid::new(30.0, 3000, 3)?.into();
        let reg = ProfileRegistry::standard();
        let rows: Vec<Result<(usize, usize)>> = (0..20u64)
            .into_par_iter()
            .map(|i| {
                // Growing depth so the counts range over several values.
                let v = reg.build("random", &g, 100 + i)?.scaled(1.0 + 1.5 * i as f64);
                let direct = lowest_eigenpairs(&SpectrumRequest::new(&v, 1).values_only())?.negative_count;
                let bs = count_mu_above(&v, 1.0 + 1e-6, OuterBoundary::Dirichlet)?;
                Ok((direct, bs))
            })
            .collect();
        let rows: Vec<(usize, usize)> = rows.into_iter().collect::<Result<_>>()?;
        let mismatches = rows.iter().filter(|(a, b)| a != b).count();
        let counts: Vec<usize> = rows.iter().map(|r| r.0).collect();
        Ok(verdict(mismatches == 0, format!("counts {counts:?}, {mismatches} mismatches")))
    }
}

struct Dichotomy;

impl Criterion for Dichotomy {
    fn id(&self) -> usize {
        12
    }
    fn name(&self) -> &'static str {
        "dichotomy decoupling"
    }
    fn quick(&self) -> bool {
        true
    }
    fn check(&self) -> Result<Verdict> {
        // h = 0.01 so both separations shift the bump by whole cells.
        let g = Grid1D::new(-80.0, 80.0, 15999)?;
        let bump = |x: f64| 2.0 * (-x * x / 2.0).exp();
        let single = PotentialField::from_fn(g.clone(), bump)?;
        let s = lowest_eigenpairs(&SpectrumRequest::new(&single, 8).values_only())?;
        let n = s.negative_count.min(8);
        let mut doubled: Vec<f64> = s.eigenvalues[..n].iter().flat_map(|e| [*e, *e]).collect();
        doubled.sort_by(f64::total_cmp);
        let err = |r: f64| -> Result<f64> {
            let v = PotentialField::from_fn(g.clone(), |x| bump(x - r / 2.0) + bump(x + r / 2.0))?;
            let e = lowest_eigenpairs(&SpectrumRequest::new(&v, 2 * n).values_only())?;
            Ok(max_abs_gap(&e.eigenvalues, &doubled))
        };
        let (e30, e60) = (err(30.0)?, err(60.0)?);
        Ok(verdict(
            n >= 1 && e60 * 2.0 <= e30,
            format!("N = {n}; error {e30:.2e} at R = 30, {e60:.2e} at R = 60"),
        ))
    }
}
