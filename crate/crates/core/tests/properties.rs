use ltlab_core::birman_schwinger::mu_spectrum;
use ltlab_core::functional::riesz_ratio;
use ltlab_core::grid::{lp_norm_power, mass_profile, rescale, Grid1D, PotentialField, RadialGrid};
use ltlab_core::kdv::{exact_spectrum, normalize_to_manifold, SolitonSpec, MANIFOLD_CUBE_SUM};
use ltlab_core::scf::occupations;
use ltlab_core::schrodinger::{lowest_eigenpairs, SpectrumRequest};
use ltlab_core::tridiag::SymTridiagonal;
use proptest::prelude::*;

fn gaussian(grid: impl Into<ltlab_core::Grid>, a: f64, c: f64, w: f64) -> PotentialField {
    PotentialField::from_fn(grid, |x| a * (-((x - c) / w).powi(2)).exp()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Sum and sum of squares of the spectrum equal the trace and the Frobenius norm.
    #[test]
    fn tridiagonal_spectrum_invariants(
        diag in prop::collection::vec(-5.0f64..5.0, 2..30),
        off_seed in prop::collection::vec(-2.0f64..2.0, 29),
    ) {
        let n = diag.len();
        let off = off_seed[..n - 1].to_vec();
        let t = SymTridiagonal::new(diag.clone(), off.clone());
        let ev = t.lowest_eigenvalues(n);
        let trace: f64 = diag.iter().sum();
        let frob: f64 = diag.iter().map(|d| d * d).sum::<f64>() + 2.0 * off.iter().map(|e| e * e).sum::<f64>();
        prop_assert!((ev.iter().sum::<f64>() - trace).abs() < 1e-9 * (1.0 + frob));
        prop_assert!((ev.iter().map(|e| e * e).sum::<f64>() - frob).abs() < 1e-9 * (1.0 + frob));
        prop_assert!(ev.windows(2).all(|w| w[0] <= w[1]));
        for (k, e) in ev.iter().enumerate() {
            prop_assert!(t.count_below(*e - 1e-9, None) <= k);
            prop_assert!(t.count_below(*e + 1e-9, None) >= k + 1);
        }
    }

    // Min-max: a larger potential has lower levels.
    #[test]
    fn levels_are_monotone_in_the_potential(
        a in 0.3f64..3.0, c in -3.0f64..3.0, w in 0.5f64..2.0, b in 0.0f64..2.0, c2 in -5.0f64..5.0,
    ) {
        let grid = Grid1D::symmetric(25.0, 800).unwrap();
        let v1 = gaussian(grid.clone(), a, c, w);
        let bump = gaussian(grid, b, c2, 1.0);
        let v2 = PotentialField::new(v1.grid.clone(), v1.values.iter().zip(&bump.values).map(|(x, y)| x + y).collect()).unwrap();
        let l1 = lowest_eigenpairs(&SpectrumRequest::new(&v1, 3).values_only()).unwrap();
        let l2 = lowest_eigenpairs(&SpectrumRequest::new(&v2, 3).values_only()).unwrap();
        for j in 0..3 {
            prop_assert!(l2.eigenvalues[j] <= l1.eigenvalues[j] + 1e-12);
        }
        prop_assert!(l2.negative_count >= l1.negative_count);
    }

    #[test]
    fn rescale_scales_the_norm(a in 0.5f64..2.0, t in 0.6f64..1.8, p in 1.0f64..3.0) {
        let grid = Grid1D::symmetric(30.0, 6000).unwrap();
        let v = gaussian(grid, a, 0.0, 1.5);
        let base = lp_norm_power(&v, p).unwrap();
        let scaled = lp_norm_power(&rescale(&v, t).unwrap(), p).unwrap();
        let expected = t.powf(2.0 * p - 1.0) * base;
        prop_assert!((scaled / expected - 1.0).abs() < 1e-4, "{scaled} vs {expected}");
    }

    #[test]
    fn quotient_is_dilation_invariant(a in 1.0f64..3.0, t in 0.8f64..1.25, n in 1usize..3) {
        let grid = Grid1D::symmetric(30.0, 3000).unwrap();
        let v = gaussian(grid, a, 0.0, 2.0);
        let r0 = riesz_ratio(&v, 1.5, n).unwrap().ratio;
        let r1 = riesz_ratio(&rescale(&v, t).unwrap(), 1.5, n).unwrap().ratio;
        prop_assert!((r1 / r0 - 1.0).abs() < 2e-3, "{r0} vs {r1}");
    }

    #[test]
    fn mass_profile_is_monotone_and_homogeneous(a in 0.2f64..3.0, c in -5.0f64..5.0, s in 0.5f64..4.0) {
        let grid = Grid1D::symmetric(20.0, 800).unwrap();
        let v = gaussian(grid, a, c, 1.0);
        let radii = [0.5, 1.0, 2.0, 4.0, 8.0];
        let m = mass_profile(&v, 2.0, &radii).unwrap();
        prop_assert!(m.windows(2).all(|w| w[0] <= w[1]));
        let ms = mass_profile(&v.scaled(s), 2.0, &radii).unwrap();
        for (x, y) in m.iter().zip(&ms) {
            prop_assert!((y - s * s * x).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    // mu_j(λV) = λ mu_j(V), and the stored ell estimates agree with mus.
    #[test]
    fn birman_schwinger_linearity(a in 0.3f64..3.0, w in 0.5f64..2.0, lambda in 0.5f64..4.0) {
        let grid = RadialGrid::new(20.0, 800, 3).unwrap();
        let v = gaussian(grid, a, 0.0, w);
        let r = mu_spectrum(&v, 4, None).unwrap();
        let rs = mu_spectrum(&v.scaled(lambda), 4, None).unwrap();
        for (m, ms) in r.mus.iter().zip(&rs.mus) {
            prop_assert!((ms - lambda * m).abs() <= 1e-10 * ms.abs().max(1e-300));
        }
        prop_assert!(r.mus.windows(2).all(|w| w[0] >= w[1]) && r.mus.iter().all(|m| *m >= 0.0));
        for (&n, &ell) in &r.ell_estimates {
            let direct = n as f64 * r.mus[n - 1].powf(1.5) / r.norm_power;
            prop_assert!((ell - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn occupations_fill_n_states(
        raw in prop::collection::vec(-5.0f64..1.0, 1..12), n in 1usize..8, dup in 0usize..3,
    ) {
        let mut ev = raw;
        // Force a degenerate shell near the cut.
        let first = ev[0];
        ev.extend(std::iter::repeat(first).take(dup));
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let w = occupations(&ev, n, 1e-9);
        let neg = ev.iter().filter(|e| **e < 0.0).count();
        let total: f64 = w.iter().sum();
        prop_assert!((total - n.min(neg) as f64).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!(w.iter().zip(&ev).all(|(x, e)| *e < 0.0 || *x == 0.0));
    }

    #[test]
    fn manifold_normalisation(mut betas in prop::collection::vec(0.05f64..2.0, 1..5)) {
        betas.sort_by(|a, b| b.partial_cmp(a).unwrap());
        betas.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let spec = SolitonSpec::centred(betas).unwrap();
        let m = normalize_to_manifold(&spec);
        prop_assert!((m.cube_sum() - MANIFOLD_CUBE_SUM).abs() < 1e-12);
        let ratio = m.betas[0] / spec.betas[0];
        for (b, b0) in m.betas.iter().zip(&spec.betas) {
            prop_assert!((b / b0 - ratio).abs() < 1e-12);
        }
        let ex = exact_spectrum(&m);
        prop_assert!(ex.iter().zip(&m.betas).all(|(e, b)| (e + b * b).abs() < 1e-15));
    }
}
