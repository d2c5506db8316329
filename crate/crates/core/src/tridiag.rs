//! Symmetric tridiagonal pencils `(T, M)` with `M` diagonal and nonnegative.
//!
//! Eigenvalues come from Sturm-sequence bisection, eigenvectors from inverse
//! iteration with a pivoted LU of the shifted matrix. Every operator in the
//! crate (1D Schrödinger, radial channels, Birman–Schwinger pencils) reduces to
//! this form.

/// Symmetric tridiagonal matrix stored as its diagonal and first off-diagonal.
#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert!(!diag.is_empty(), "empty tridiagonal matrix");
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length mismatch");
        SymTridiagonal { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Gershgorin enclosure of the spectrum of `T`.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let mut r = 0.0;
            if i > 0 {
                r += self.off[i - 1].abs();
            }
            if i + 1 < n {
                r += self.off[i].abs();
            }
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    fn norm_estimate(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE)
    }

    fn pivmin(&self) -> f64 {
        let emax = self.off.iter().map(|e| e * e).fold(1.0, f64::max);
        f64::MIN_POSITIVE * emax
    }

    /// Number of eigenvalues of the pencil `(T, M)` strictly below `sigma`, i.e.
    /// the number of negative pivots of `T - sigma M`. `mass = None` means `M = I`.
    pub fn count_below(&self, sigma: f64, mass: Option<&[f64]>) -> usize {
        let pivmin = self.pivmin();
        let shift = |i: usize| match mass {
            Some(m) => sigma * m[i],
            None => sigma,
        };
        let mut count = 0;
        let mut d = self.diag[0] - shift(0);
        if d.abs() < pivmin {
            d = -pivmin;
        }
        if d < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let e = self.off[i - 1];
            d = self.diag[i] - shift(i) - e * e / d;
            if d.abs() < pivmin {
                d = -pivmin;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `count` smallest eigenvalues of `T` in ascending order.
    pub fn lowest_eigenvalues(&self, count: usize) -> Vec<f64> {
        let (lo, hi) = self.gershgorin();
        let scale = self.norm_estimate();
        (0..count.min(self.len()))
            .map(|k| self.bisect(k, None, lo - 1e-12 * scale, hi + 1e-12 * scale, scale))
            .collect()
    }

    /// The `count` smallest eigenvalues of the pencil `T u = ν M u`, assuming `T`
    /// positive definite and `M ≥ 0`. Eigenvalues at infinity (from the kernel of
    /// `M`) are returned as `f64::INFINITY`.
    pub fn lowest_pencil_eigenvalues(&self, mass: &[f64], count: usize) -> Vec<f64> {
        assert_eq!(mass.len(), self.len());
        let mut upper = {
            // Rayleigh-quotient bound from the heaviest mass node.
            let (i, m) = mass
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, m)| if *m > acc.1 { (i, *m) } else { acc });
            if m <= 0.0 {
                return vec![f64::INFINITY; count];
            }
            self.diag[i] / m
        };
        let mut out = Vec::with_capacity(count);
        for k in 0..count.min(self.len()) {
            let mut tries = 0;
            while self.count_below(upper, Some(mass)) <= k && tries < 200 {
                upper *= 2.0;
                tries += 1;
            }
            if self.count_below(upper, Some(mass)) <= k {
                out.resize(count, f64::INFINITY);
                return out;
            }
            let lo = out.last().copied().unwrap_or(0.0);
            out.push(self.bisect(k, Some(mass), lo * (1.0 - 1e-12), upper, 0.0));
        }
        out.resize(count, f64::INFINITY);
        out
    }

    /// Bisection for the `k`-th (0-based) eigenvalue inside `(lo, hi]`.
    fn bisect(&self, k: usize, mass: Option<&[f64]>, mut lo: f64, mut hi: f64, scale: f64) -> f64 {
        let abs_tol = 4.0 * f64::EPSILON * scale;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= abs_tol.max(2.0 * f64::EPSILON * mid.abs()) || mid == lo || mid == hi {
                break;
            }
            if self.count_below(mid, mass) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Solve `(T - shift·M) x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve_shifted(&self, shift: f64, mass: Option<&[f64]>, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let tiny = f64::EPSILON * self.norm_estimate();
        let mut d: Vec<f64> = (0..n)
            .map(|i| self.diag[i] - shift * mass.map_or(1.0, |m| m[i]))
            .collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - dl[i] * b[i];
            } else {
                b[i + 1] -= dl[i] * b[i];
            }
        }
        b[n - 1] /= d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
        b
    }

    /// Eigenvectors for the given (ascending) eigenvalues of the pencil, by inverse
    /// iteration. Vectors are orthonormal in the `M`-inner product (Euclidean when
    /// `mass` is `None`); vectors of close eigenvalues are re-orthogonalised.
    pub fn eigenvectors(&self, eigenvalues: &[f64], mass: Option<&[f64]>) -> Vec<Vec<f64>> {
        let n = self.len();
        let norm = self.norm_estimate();
        let cluster_gap = 1e-3 * norm;
        let min_sep = 10.0 * f64::EPSILON * norm;
        let dot = |a: &[f64], b: &[f64]| -> f64 {
            match mass {
                Some(m) => a.iter().zip(b).zip(m).map(|((x, y), w)| x * y * w).sum(),
                None => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            }
        };
        let apply_mass = |x: &[f64]| -> Vec<f64> {
            match mass {
                Some(m) => x.iter().zip(m).map(|(a, w)| a * w).collect(),
                None => x.to_vec(),
            }
        };
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(eigenvalues.len());
        let mut shifts: Vec<f64> = Vec::with_capacity(eigenvalues.len());
        let mut seed: u64 = 0x9E37_79B9_7F4A_7C15;
        for (k, &lambda) in eigenvalues.iter().enumerate() {
            let mut shift = lambda;
            if let Some(&prev) = shifts.last() {
                if shift - prev < min_sep {
                    shift = prev + min_sep;
                }
            }
            shifts.push(shift);
            let cluster: Vec<usize> = (0..k)
                .filter(|&j| (eigenvalues[j] - lambda).abs() < cluster_gap)
                .collect();
            let mut x: Vec<f64> = (0..n)
                .map(|_| {
                    seed ^= seed << 13;
                    seed ^= seed >> 7;
                    seed ^= seed << 17;
                    (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            for _ in 0..4 {
                for &j in &cluster {
                    let c = dot(&x, &vectors[j]);
                    for (xi, vi) in x.iter_mut().zip(&vectors[j]) {
                        *xi -= c * vi;
                    }
                }
                let nrm = dot(&x, &x).sqrt();
                if nrm > 0.0 {
                    x.iter_mut().for_each(|v| *v /= nrm);
                }
                let rhs = apply_mass(&x);
                x = self.solve_shifted(shift, mass, &rhs);
            }
            for _ in 0..2 {
                for &j in &cluster {
                    let c = dot(&x, &vectors[j]);
                    for (xi, vi) in x.iter_mut().zip(&vectors[j]) {
                        *xi -= c * vi;
                    }
                }
            }
            let nrm = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
            // Deterministic sign: largest-magnitude component positive.
            let (imax, _) = x
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
            if x[imax] < 0.0 {
                x.iter_mut().for_each(|v| *v = -*v);
            }
            vectors.push(x);
        }
        vectors
    }
}
