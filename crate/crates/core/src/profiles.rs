//! Named initial and test potentials, selected at run time by a descriptor
//! `name[:argument]`, e.g. `gaussian:2`, `bumps:2,8`, `soliton:0.8,0.5@-1,2`,
//! `vl:1`, `file:v.csv`, `random`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::birman_schwinger::{sphere_potential, SpherePotentialSpec};
use crate::error::{LabError, Result};
use crate::grid::{Grid, PotentialField};
use crate::kdv::{soliton_profile, SolitonSpec};

pub trait PotentialProfile: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn build(&self, arg: Option<&str>, grid: &Grid, seed: u64) -> Result<PotentialField>;
}

pub struct ProfileRegistry {
    profiles: Vec<Box<dyn PotentialProfile>>,
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        ProfileRegistry { profiles: Vec::new() }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Gaussian));
        r.register(Box::new(Bumps));
        r.register(Box::new(Soliton));
        r.register(Box::new(Sobolev));
        r.register(Box::new(SphereLevel));
        r.register(Box::new(FromFile));
        r.register(Box::new(RandomBump));
        r
    }

    pub fn register(&mut self, profile: Box<dyn PotentialProfile>) {
        self.profiles.retain(|p| p.name() != profile.name());
        self.profiles.push(profile);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.profiles.iter().map(|p| p.name()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&dyn PotentialProfile> {
        self.profiles.iter().find(|p| p.name() == name).map(|p| p.as_ref())
    }

    pub fn build(&self, descriptor: &str, grid: &Grid, seed: u64) -> Result<PotentialField> {
        let (name, arg) = match descriptor.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (descriptor, None),
        };
        let profile = self.get(name).ok_or_else(|| {
            LabError::invalid(format!(
                "unknown potential profile '{name}' (known: {})",
                self.names().join(", ")
            ))
        })?;
        profile.build(arg, grid, seed)
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<f64>().map_err(|_| LabError::invalid(format!("not a number: '{t}'"))))
        .collect()
}

fn parse_one(arg: Option<&str>, default: f64) -> Result<f64> {
    match arg {
        None => Ok(default),
        Some(a) => a.trim().parse().map_err(|_| LabError::invalid(format!("not a number: '{a}'"))),
    }
}

fn line_only(grid: &Grid, what: &str) -> Result<()> {
    match grid {
        Grid::Line(_) => Ok(()),
        Grid::Radial(_) => Err(LabError::invalid(format!("profile '{what}' is only defined on a line grid"))),
    }
}

struct Gaussian;

impl PotentialProfile for Gaussian {
    fn name(&self) -> &'static str {
        "gaussian"
    }
    fn summary(&self) -> &'static str {
        "exp(-(x/w)^2), width w (default 2)"
    }
    fn build(&self, arg: Option<&str>, grid: &Grid, _seed: u64) -> Result<PotentialField> {
        let w = parse_one(arg, 2.0)?;
        if !(w > 0.0) {
            return Err(LabError::invalid("gaussian width must be positive"));
        }
        PotentialField::from_fn(grid.clone(), |x| (-(x / w).powi(2)).exp())
    }
}

struct Bumps;

impl PotentialProfile for Bumps {
    fn name(&self) -> &'static str {
        "bumps"
    }
    fn summary(&self) -> &'static str {
        "k unit gaussians spaced s apart around the origin: bumps:k[,s] (default 2,6)"
    }
    fn build(&self, arg: Option<&str>, grid: &Grid, _seed: u64) -> Result<PotentialField> {
        line_only(grid, self.name())?;
        let vals = match arg {
            Some(a) => parse_list(a)?,
            None => vec![],
        };
        let k = vals.first().copied().unwrap_or(2.0);
        let sep = vals.get(1).copied().unwrap_or(6.0);
        if !(k >= 1.0 && k.fract() == 0.0) {
            return Err(LabError::invalid("bump count must be a positive integer"));
        }
        let k = k as usize;
        let centres: Vec<f64> = (0..k).map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * sep).collect();
        PotentialField::from_fn(grid.clone(), |x| centres.iter().map(|c| (-(x - c).powi(2)).exp()).sum())
    }
}

struct Soliton;

impl PotentialProfile for Soliton {
    fn name(&self) -> &'static str {
        "soliton"
    }
    fn summary(&self) -> &'static str {
        "KdV soliton: soliton:b1,b2,...[@x1,x2,...]"
    }
    fn build(&self, arg: Option<&str>, grid: &Grid, _seed: u64) -> Result<PotentialField> {
        let Grid::Line(g) = grid else {
            return Err(LabError::invalid("profile 'soliton' is only defined on a line grid"));
        };
        let arg = arg.ok_or_else(|| LabError::invalid("soliton needs speeds, e.g. soliton:0.8,0.5"))?;
        let (b, x) = match arg.split_once('@') {
            Some((b, x)) => (parse_list(b)?, parse_list(x)?),
            None => {
                let b = parse_list(arg)?;
                let n = b.len();
                (b, vec![0.0; n])
            }
        };
        soliton_profile(&SolitonSpec::new(b, x)?, g)
    }
}

fn radial_sphere(grid: &Grid, l: usize) -> Result<PotentialField> {
    let Grid::Radial(g) = grid else {
        return Err(LabError::invalid("sphere potentials need a radial grid with d >= 3"));
    };
    Ok(sphere_potential(&SpherePotentialSpec::new(l, g.dim)?, g)?.0)
}

struct Sobolev;

impl PotentialProfile for Sobolev {
    fn name(&self) -> &'static str {
        "sobolev"
    }
    fn summary(&self) -> &'static str {
        "d(d-2)/(1+r^2)^2 on a radial grid, d >= 3"
    }
    fn build(&self, _arg: Option<&str>, grid: &Grid, _seed: u64) -> Result<PotentialField> {
        radial_sphere(grid, 0)
    }
}

struct SphereLevel;

impl PotentialProfile for SphereLevel {
    fn name(&self) -> &'static str {
        "vl"
    }
    fn summary(&self) -> &'static str {
        "(L+(d-2)/2)(L+d/2) 4/(1+r^2)^2: vl:L"
    }
    fn build(&self, arg: Option<&str>, grid: &Grid, _seed: u64) -> Result<PotentialField> {
        let l: usize = arg
            .ok_or_else(|| LabError::invalid("vl needs a level, e.g. vl:1"))?
            .trim()
            .parse()
            .map_err(|_| LabError::invalid("vl level must be a nonnegative integer"))?;
        radial_sphere(grid, l)
    }
}

struct FromFile;

impl PotentialProfile for FromFile {
    fn name(&self) -> &'static str {
        "file"
    }
    fn summary(&self) -> &'static str {
        "CSV potential (x,value or r,value), resampled onto the grid: file:path"
    }
    fn build(&self, arg: Option<&str>, grid: &Grid, _seed: u64) -> Result<PotentialField> {
        let path = arg.ok_or_else(|| LabError::invalid("file needs a path, e.g. file:v.csv"))?;
        let f = std::fs::File::open(path)
            .map_err(|e| LabError::invalid(format!("cannot open potential file '{path}': {e}")))?;
        let v = PotentialField::read_csv(f, Some(grid.dim()))?;
        if &v.grid == grid {
            return Ok(v);
        }
        PotentialField::from_fn(grid.clone(), |x| v.sample_at(x))
    }
}

/// One to three gaussian components with seeded amplitude, width and centre.
struct RandomBump;

impl PotentialProfile for RandomBump {
    fn name(&self) -> &'static str {
        "random"
    }
    fn summary(&self) -> &'static str {
        "seeded sum of 1-3 gaussians (amplitude 0.2-1, width 0.5-2, centre within 3)"
    }
    fn build(&self, _arg: Option<&str>, grid: &Grid, seed: u64) -> Result<PotentialField> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=3);
        let radial = matches!(grid, Grid::Radial(_));
        let parts: Vec<(f64, f64, f64)> = (0..k)
            .map(|_| {
                let a = rng.gen_range(0.2..1.0);
                let w = rng.gen_range(0.5..2.0);
                let c = if radial { rng.gen_range(0.0..3.0) } else { rng.gen_range(-3.0..3.0) };
                (a, w, c)
            })
            .collect();
        PotentialField::from_fn(grid.clone(), |x| {
            parts.iter().map(|(a, w, c)| a * (-((x - c) / w).powi(2)).exp()).sum()
        })
    }
}
