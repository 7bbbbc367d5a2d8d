//! Design matrices with i.i.d. standardized entries.

use crate::error::{config_err, Error, Result};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// Default ceiling on `m * n` for a single matrix.
pub const DEFAULT_MAX_ENTRIES: usize = 100_000_000;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed of replication `r` derived from a base seed (SplitMix64 finalizer,
/// so nested derivations for different `(r, s)` orders do not collide).
pub fn replication_seed(base: u64, r: u64) -> u64 {
    let mut z = base.wrapping_add(r.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

/// A user-supplied entry law together with its declared moments.
#[derive(Clone)]
pub struct CustomDesign {
    pub name: String,
    pub mean: f64,
    pub variance: f64,
    pub third_moment: f64,
    pub sampler: SamplerFn,
}

impl CustomDesign {
    pub fn new(
        name: impl Into<String>,
        mean: f64,
        variance: f64,
        third_moment: f64,
        sampler: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomDesign {
            name: name.into(),
            mean,
            variance,
            third_moment,
            sampler: Arc::new(sampler),
        }
    }
}

impl fmt::Debug for CustomDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDesign")
            .field("name", &self.name)
            .field("mean", &self.mean)
            .field("variance", &self.variance)
            .field("third_moment", &self.third_moment)
            .finish()
    }
}

/// Entry distribution of a design matrix.
#[derive(Clone, Debug)]
pub enum DesignKind {
    Gaussian,
    Rademacher,
    /// `Exp(1) - 1`.
    StdExponential,
    Custom(CustomDesign),
}

impl DesignKind {
    pub fn name(&self) -> String {
        match self {
            DesignKind::Gaussian => "gaussian".into(),
            DesignKind::Rademacher => "rademacher".into(),
            DesignKind::StdExponential => "std_exponential".into(),
            DesignKind::Custom(c) => format!("custom:{}", c.name),
        }
    }

    pub fn third_moment(&self) -> f64 {
        match self {
            DesignKind::Gaussian | DesignKind::Rademacher => 0.0,
            DesignKind::StdExponential => 2.0,
            DesignKind::Custom(c) => c.third_moment,
        }
    }

    /// Resolve a config name; `custom:<name>` is looked up in `registry`.
    pub fn parse(name: &str, registry: &DesignRegistry) -> Result<Self> {
        match name {
            "gaussian" => Ok(DesignKind::Gaussian),
            "rademacher" => Ok(DesignKind::Rademacher),
            "std_exponential" => Ok(DesignKind::StdExponential),
            other => match other.strip_prefix("custom:") {
                Some(key) => registry
                    .get(key)
                    .map(|c| DesignKind::Custom(c.clone()))
                    .ok_or_else(|| Error::Config(format!("unknown custom design `{key}`"))),
                None => config_err(format!("unknown design kind `{other}`")),
            },
        }
    }

    fn validate(&self) -> Result<()> {
        if let DesignKind::Custom(c) = self {
            if c.mean.abs() > 1e-12 || (c.variance - 1.0).abs() > 1e-12 {
                return config_err(format!(
                    "custom design `{}` declares mean {} and variance {}; need 0 and 1",
                    c.name, c.mean, c.variance
                ));
            }
        }
        Ok(())
    }

    /// Draw one entry.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            DesignKind::Gaussian => rng.sample(StandardNormal),
            DesignKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            DesignKind::StdExponential => {
                let e: f64 = rng.sample(Exp1);
                e - 1.0
            }
            DesignKind::Custom(c) => {
                let mut dynrng = DynRng(rng);
                (c.sampler)(&mut dynrng)
            }
        }
    }
}

struct DynRng<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for DynRng<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

/// Named custom designs reachable from config files.
#[derive(Clone, Debug, Default)]
pub struct DesignRegistry {
    entries: BTreeMap<String, CustomDesign>,
}

impl DesignRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry preloaded with `uniform` (variance-one uniform on `[-sqrt3, sqrt3]`).
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        let half_width = 3f64.sqrt();
        reg.insert(CustomDesign::new("uniform", 0.0, 1.0, 0.0, move |rng| {
            half_width * (2.0 * rng.random::<f64>() - 1.0)
        }));
        reg
    }

    pub fn insert(&mut self, design: CustomDesign) {
        self.entries.insert(design.name.clone(), design);
    }

    pub fn get(&self, name: &str) -> Option<&CustomDesign> {
        self.entries.get(name)
    }
}

/// Dense `m x n` design stored row-major by sample.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    m: usize,
    n: usize,
    entries: Vec<f64>,
    kind: DesignKind,
    seed: u64,
}

const ROW_BLOCK: usize = 256;

impl DesignMatrix {
    /// Wrap existing row-major entries.
    pub fn from_rows(m: usize, n: usize, entries: Vec<f64>, kind: DesignKind, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return config_err("design needs m >= 1 and n >= 1");
        }
        if entries.len() != m * n {
            return config_err(format!("expected {} entries, got {}", m * n, entries.len()));
        }
        Ok(DesignMatrix { m, n, entries, kind, seed })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Aspect ratio `m / n`.
    pub fn aspect_ratio(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn kind(&self) -> &DesignKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `X v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must equal column count");
        self.entries
            .par_chunks(self.n)
            .map(|row| dot(row, v))
            .collect()
    }

    /// `X^T w`, summed over fixed row blocks so the result does not depend on
    /// the number of worker threads.
    pub fn tr_mul_vec(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.m, "vector length must equal row count");
        let n = self.n;
        let partials: Vec<Vec<f64>> = self
            .entries
            .par_chunks(ROW_BLOCK * n)
            .zip(w.par_chunks(ROW_BLOCK))
            .map(|(block, wb)| {
                let mut acc = vec![0.0; n];
                for (row, &wi) in block.chunks(n).zip(wb) {
                    if wi != 0.0 {
                        for (a, &x) in acc.iter_mut().zip(row) {
                            *a += wi * x;
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; n];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    /// Little-endian bytes of the entries, for byte-level comparisons.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries.iter().flat_map(|x| x.to_le_bytes()).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Sample an `m x n` design, capped at [`DEFAULT_MAX_ENTRIES`].
pub fn sample_design(kind: &DesignKind, m: usize, n: usize, seed: u64) -> Result<DesignMatrix> {
    sample_design_capped(kind, m, n, seed, DEFAULT_MAX_ENTRIES)
}

pub fn sample_design_capped(
    kind: &DesignKind,
    m: usize,
    n: usize,
    seed: u64,
    max_entries: usize,
) -> Result<DesignMatrix> {
    if m == 0 || n == 0 {
        return config_err("design needs m >= 1 and n >= 1");
    }
    let total = m
        .checked_mul(n)
        .filter(|&t| t <= max_entries)
        .ok_or_else(|| Error::Config(format!("design {m} x {n} exceeds the entry cap {max_entries}")))?;
    kind.validate()?;
    let mut rng = rng_from_seed(seed);
    let entries = (0..total).map(|_| kind.draw(&mut rng)).collect();
    DesignMatrix::from_rows(m, n, entries, kind.clone(), seed)
}

/// Pooled empirical central moment of all entries, `order` in 1..=4.
///
/// Order 1 returns the raw mean.
pub fn empirical_moments(x: &DesignMatrix, order: u32) -> Result<f64> {
    if !(1..=4).contains(&order) {
        return config_err(format!("moment order {order} outside 1..=4"));
    }
    let e = x.entries();
    let len = e.len() as f64;
    let mean = e.iter().sum::<f64>() / len;
    if order == 1 {
        return Ok(mean);
    }
    let k = order as i32;
    Ok(e.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / len)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_support_and_second_moment() {
        let x = sample_design(&DesignKind::Rademacher, 4, 4, 11).unwrap();
        assert!(x.entries().iter().all(|&v| v == 1.0 || v == -1.0));
        let big = sample_design(&DesignKind::Rademacher, 300, 300, 5).unwrap();
        let mean = empirical_moments(&big, 1).unwrap();
        // Central second moment of +-1 entries is 1 - mean^2.
        let m2 = empirical_moments(&big, 2).unwrap();
        assert!((m2 - (1.0 - mean * mean)).abs() < 1e-12);
        let m3 = empirical_moments(&big, 3).unwrap();
        assert!(m3.abs() < 4.0 / (300.0f64 * 300.0).sqrt());
    }

    #[test]
    fn exponential_moments_match_population() {
        let x = sample_design(&DesignKind::StdExponential, 1000, 100, 3).unwrap();
        let n = 1e5f64;
        assert!(empirical_moments(&x, 1).unwrap().abs() < 4.0 / n.sqrt());
        assert!((empirical_moments(&x, 2).unwrap() - 1.0).abs() < 4e-2);
        // Var of (E-1)^3 is E(E-1)^6 - 4 = 265 - 4; five standard errors.
        let se = (261.0f64 / n).sqrt();
        assert!((empirical_moments(&x, 3).unwrap() - 2.0).abs() < 5.0 * se);
    }

    #[test]
    fn gaussian_fourth_moment() {
        let x = sample_design(&DesignKind::Gaussian, 500, 200, 9).unwrap();
        let mn = 1e5f64;
        assert!((empirical_moments(&x, 4).unwrap() - 3.0).abs() < 10.0 / mn.sqrt());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = sample_design(&DesignKind::StdExponential, 17, 9, 42).unwrap();
        let b = sample_design(&DesignKind::StdExponential, 17, 9, 42).unwrap();
        let c = sample_design(&DesignKind::StdExponential, 17, 9, 43).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn custom_design_validation_and_registry() {
        let bad = DesignKind::Custom(CustomDesign::new("shifted", 0.5, 1.0, 0.0, |_| 0.5));
        assert!(matches!(sample_design(&bad, 2, 2, 0), Err(Error::Config(_))));
        let reg = DesignRegistry::with_builtins();
        let kind = DesignKind::parse("custom:uniform", &reg).unwrap();
        let x = sample_design(&kind, 200, 100, 1).unwrap();
        let lim = 3f64.sqrt();
        assert!(x.entries().iter().all(|v| v.abs() <= lim));
        assert!((empirical_moments(&x, 2).unwrap() - 1.0).abs() < 0.03);
        assert!(DesignKind::parse("custom:nope", &reg).is_err());
        assert!(DesignKind::parse("cauchy", &reg).is_err());
    }

    #[test]
    fn entry_cap_rejects_huge_designs() {
        assert!(sample_design_capped(&DesignKind::Gaussian, 100, 100, 0, 9_999).is_err());
        assert!(sample_design(&DesignKind::Gaussian, 0, 3, 0).is_err());
    }

    #[test]
    fn transposed_product_matches_naive_sum() {
        let x = sample_design(&DesignKind::Gaussian, 700, 5, 8).unwrap();
        let w: Vec<f64> = (0..700).map(|i| (i as f64).sin()).collect();
        let fast = x.tr_mul_vec(&w);
        for j in 0..5 {
            let naive: f64 = (0..700).map(|i| x.row(i)[j] * w[i]).sum();
            assert!((fast[j] - naive).abs() < 1e-10);
        }
    }
}
