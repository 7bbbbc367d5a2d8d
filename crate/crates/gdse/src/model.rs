//! Link functions, noise laws, losses and the score `S(x, z, xi)`.
//!
//! The score is the loss gradient evaluated at a response generated from a
//! latent index: `S(x, z, xi) = d/dx L(x, F(z, xi))`. Everything downstream
//! (state evolution, mean-field recursion, diagnostics) only talks to a model
//! through the score and its partial derivatives.

use crate::design::{rng_from_seed, SamplerFn};
use crate::error::{config_err, Result};
use crate::quad;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use std::fmt;
use std::sync::Arc;

/// Default Gauss–Hermite nodes per axis.
pub const DEFAULT_NODES: usize = 60;
/// Nodes used when a Gaussian noise law has to be integrated out.
pub const NOISE_NODES: usize = 24;
/// Draws used for non-Gaussian custom noise laws that cannot be averaged analytically.
pub const NOISE_MC_DRAWS: usize = 4096;

pub type LinkEval = Arc<dyn Fn(f64) -> [f64; 5] + Send + Sync>;
pub type Scalar2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Scalar3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A scalar link `phi` with derivatives up to order four.
#[derive(Clone)]
pub struct LinkFunction {
    name: String,
    eval: LinkEval,
}

impl fmt::Debug for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LinkFunction({})", self.name)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl LinkFunction {
    /// `eval(x)` must return `[phi, phi', phi'', phi''', phi'''']`.
    pub fn custom(name: impl Into<String>, eval: impl Fn(f64) -> [f64; 5] + Send + Sync + 'static) -> Self {
        LinkFunction { name: name.into(), eval: Arc::new(eval) }
    }

    pub fn identity() -> Self {
        Self::custom("identity", |x| [x, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn sigmoid() -> Self {
        Self::custom("sigmoid", |x| {
            let s = sigmoid(x);
            let d1 = s * (1.0 - s);
            let u = 1.0 - 2.0 * s;
            [s, d1, d1 * u, d1 * (1.0 - 6.0 * s + 6.0 * s * s), d1 * u * (1.0 - 12.0 * s + 12.0 * s * s)]
        })
    }

    pub fn x_plus_sin() -> Self {
        Self::custom("x_plus_sin", |x| {
            let (s, c) = x.sin_cos();
            [x + s, 1.0 + c, -s, -c, s]
        })
    }

    /// `x^2 + 2x`.
    pub fn quad_plus_linear() -> Self {
        Self::custom("quad_plus_linear", |x| [x * x + 2.0 * x, 2.0 * x + 2.0, 2.0, 0.0, 0.0])
    }

    /// Phase retrieval link `x^2`.
    pub fn square() -> Self {
        Self::custom("square", |x| [x * x, 2.0 * x, 2.0, 0.0, 0.0])
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity()),
            "sigmoid" => Ok(Self::sigmoid()),
            "x_plus_sin" => Ok(Self::x_plus_sin()),
            "quad_plus_linear" => Ok(Self::quad_plus_linear()),
            "square" => Ok(Self::square()),
            other => config_err(format!("unknown link `{other}`")),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn derivs(&self, x: f64) -> [f64; 5] {
        (self.eval)(x)
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        (self.eval)(x)[0]
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        (self.eval)(x)[1]
    }

    /// `inf_{|x| <= z} |phi'(x)|` on a 1000-point grid.
    pub fn kappa(&self, z: f64) -> f64 {
        const GRID: usize = 1000;
        let z = z.abs();
        (0..GRID)
            .map(|k| -z + 2.0 * z * k as f64 / (GRID - 1) as f64)
            .map(|x| self.d1(x).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// `kappa(6 (1 + |mu0|))^2`.
    pub fn kappa_star(&self, mu0_norm: f64) -> f64 {
        self.kappa(6.0 * (1.0 + mu0_norm)).powi(2)
    }
}

/// Law of the additive noise.
#[derive(Clone)]
pub enum NoiseLaw {
    Zero,
    Gaussian { mean: f64, sigma: f64 },
    /// A realized noise vector; expectations average over it exactly.
    Empirical(Arc<[f64]>),
    Custom { name: String, sampler: SamplerFn },
}

/// Noise law plus its mean.
#[derive(Clone)]
pub struct NoiseSpec {
    pub law: NoiseLaw,
    pub mean: f64,
}

impl fmt::Debug for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.law {
            NoiseLaw::Zero => write!(f, "Noise(zero)"),
            NoiseLaw::Gaussian { mean, sigma } => write!(f, "Noise(gaussian mean={mean} sigma={sigma})"),
            NoiseLaw::Empirical(v) => write!(f, "Noise(empirical n={} mean={})", v.len(), self.mean),
            NoiseLaw::Custom { name, .. } => write!(f, "Noise(custom {name} mean={})", self.mean),
        }
    }
}

impl NoiseSpec {
    pub fn zero() -> Self {
        NoiseSpec { law: NoiseLaw::Zero, mean: 0.0 }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self::gaussian_with_mean(0.0, sigma)
    }

    pub fn gaussian_with_mean(mean: f64, sigma: f64) -> Self {
        NoiseSpec { law: NoiseLaw::Gaussian { mean, sigma: sigma.abs() }, mean }
    }

    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return config_err("empirical noise vector is empty");
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Ok(NoiseSpec { law: NoiseLaw::Empirical(values.into()), mean })
    }

    pub fn custom(
        name: impl Into<String>,
        mean: f64,
        sampler: impl Fn(&mut dyn RngCore) -> f64 + Send + Sync + 'static,
    ) -> Self {
        NoiseSpec {
            law: NoiseLaw::Custom { name: name.into(), sampler: Arc::new(sampler) },
            mean,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.law, NoiseLaw::Zero)
    }

    pub fn describe(&self) -> String {
        format!("{self:?}")
    }

    /// One draw from the law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.law {
            NoiseLaw::Zero => 0.0,
            NoiseLaw::Gaussian { mean, sigma } => mean + sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseLaw::Empirical(v) => v[rng.random_range(0..v.len())],
            NoiseLaw::Custom { sampler, .. } => {
                let mut core = rng_from_seed(rng.next_u64());
                sampler(&mut core)
            }
        }
    }

    /// `E g(xi)`; deterministic for every law.
    pub fn expect<const K: usize>(&self, g: impl Fn(f64) -> [f64; K]) -> [f64; K] {
        let mut acc = [0.0; K];
        match &self.law {
            NoiseLaw::Zero => return g(0.0),
            NoiseLaw::Gaussian { mean, sigma } => {
                let rule = quad::hermite(NOISE_NODES);
                for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                    add_scaled(&mut acc, &g(mean + sigma * x), w);
                }
            }
            NoiseLaw::Empirical(v) => {
                let w = 1.0 / v.len() as f64;
                for &xi in v.iter() {
                    add_scaled(&mut acc, &g(xi), w);
                }
            }
            NoiseLaw::Custom { sampler, .. } => {
                let mut rng = rng_from_seed(0x6E6F_6973_6520_0001);
                let w = 1.0 / NOISE_MC_DRAWS as f64;
                for _ in 0..NOISE_MC_DRAWS {
                    let xi = sampler(&mut rng);
                    add_scaled(&mut acc, &g(xi), w);
                }
            }
        }
        acc
    }
}

#[inline]
fn add_scaled<const K: usize>(acc: &mut [f64; K], v: &[f64; K], w: f64) {
    for k in 0..K {
        acc[k] += w * v[k];
    }
}

/// A loss supplied through closures.
///
/// `loss_grad(x, y)` is the derivative of the loss in its first argument and
/// `response(z, xi)` generates the observation. Partials of the score default
/// to central finite differences unless supplied.
#[derive(Clone)]
pub struct CustomScore {
    pub name: String,
    loss_grad: Scalar2,
    response: Scalar2,
    d1: Option<Scalar3>,
    d2: Option<Scalar3>,
    affine_in_noise: bool,
}

impl fmt::Debug for CustomScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomScore({})", self.name)
    }
}

impl CustomScore {
    pub fn new(
        name: impl Into<String>,
        loss_grad: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        response: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomScore {
            name: name.into(),
            loss_grad: Arc::new(loss_grad),
            response: Arc::new(response),
            d1: None,
            d2: None,
            affine_in_noise: false,
        }
    }

    /// Analytic `dS/dx` and `dS/dz`.
    pub fn with_partials(
        mut self,
        d1: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        d2: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.d1 = Some(Arc::new(d1));
        self.d2 = Some(Arc::new(d2));
        self
    }

    /// Declare that `dS/dx` and `dS/dz` are affine in the noise, so noise
    /// expectations may substitute the mean.
    pub fn affine_in_noise(mut self, yes: bool) -> Self {
        self.affine_in_noise = yes;
        self
    }
}

#[derive(Clone, Debug)]
pub enum Loss {
    /// `L(x, y) = (phi(x) - y)^2 / 2` with `y = phi(z) + xi`.
    SquaredOnLink,
    Custom(CustomScore),
}

/// Link, loss and noise bundled together.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub link: LinkFunction,
    pub loss: Loss,
    pub noise: NoiseSpec,
    pub nodes: usize,
}

const FD_FIRST: f64 = 1e-5;
const FD_HIGHER: f64 = 1e-4;
const FD_SCORE_THIRD: f64 = 1e-3;

impl ModelSpec {
    pub fn squared_on_link(link: LinkFunction, noise: NoiseSpec) -> Self {
        ModelSpec { link, loss: Loss::SquaredOnLink, noise, nodes: DEFAULT_NODES }
    }

    pub fn custom(link: LinkFunction, score: CustomScore, noise: NoiseSpec) -> Self {
        ModelSpec { link, loss: Loss::Custom(score), noise, nodes: DEFAULT_NODES }
    }

    pub fn with_nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes.max(2);
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    /// Whether the first partials of the score are affine in the noise.
    pub fn affine_in_noise(&self) -> bool {
        match &self.loss {
            Loss::SquaredOnLink => true,
            Loss::Custom(c) => c.affine_in_noise,
        }
    }

    /// `F(z, xi)`.
    #[inline]
    pub fn response(&self, z: f64, xi: f64) -> f64 {
        match &self.loss {
            Loss::SquaredOnLink => self.link.value(z) + xi,
            Loss::Custom(c) => (c.response)(z, xi),
        }
    }

    /// `dL/dx (x, y)`.
    #[inline]
    pub fn loss_grad(&self, x: f64, y: f64) -> f64 {
        match &self.loss {
            Loss::SquaredOnLink => {
                let p = self.link.derivs(x);
                (p[0] - y) * p[1]
            }
            Loss::Custom(c) => (c.loss_grad)(x, y),
        }
    }

    /// `S(x, z, xi)`.
    #[inline]
    pub fn score(&self, x: f64, z: f64, xi: f64) -> f64 {
        match &self.loss {
            Loss::SquaredOnLink => {
                let p = self.link.derivs(x);
                (p[0] - self.link.value(z) - xi) * p[1]
            }
            Loss::Custom(c) => (c.loss_grad)(x, (c.response)(z, xi)),
        }
    }

    /// `dS/dx`.
    #[inline]
    pub fn d1(&self, x: f64, z: f64, xi: f64) -> f64 {
        match &self.loss {
            Loss::SquaredOnLink => {
                let p = self.link.derivs(x);
                p[1] * p[1] + (p[0] - self.link.value(z) - xi) * p[2]
            }
            Loss::Custom(c) => match &c.d1 {
                Some(f) => f(x, z, xi),
                None => {
                    let h = FD_FIRST;
                    (self.score(x + h, z, xi) - self.score(x - h, z, xi)) / (2.0 * h)
                }
            },
        }
    }

    /// `dS/dz`.
    #[inline]
    pub fn d2(&self, x: f64, z: f64, xi: f64) -> f64 {
        match &self.loss {
            Loss::SquaredOnLink => -self.link.d1(x) * self.link.d1(z),
            Loss::Custom(c) => match &c.d2 {
                Some(f) => f(x, z, xi),
                None => {
                    let h = FD_FIRST;
                    (self.score(x, z + h, xi) - self.score(x, z - h, xi)) / (2.0 * h)
                }
            },
        }
    }

    /// `(dS/dx, dS/dz)` in one call.
    #[inline]
    pub fn d1_d2(&self, x: f64, z: f64, xi: f64) -> (f64, f64) {
        match &self.loss {
            Loss::SquaredOnLink => {
                let p = self.link.derivs(x);
                let q = self.link.derivs(z);
                (p[1] * p[1] + (p[0] - q[0] - xi) * p[2], -p[1] * q[1])
            }
            Loss::Custom(_) => (self.d1(x, z, xi), self.d2(x, z, xi)),
        }
    }

    /// Second partials `[S_xx, S_xz, S_zz]`.
    pub fn second(&self, x: f64, z: f64, xi: f64) -> [f64; 3] {
        match &self.loss {
            Loss::SquaredOnLink => {
                let p = self.link.derivs(x);
                let q = self.link.derivs(z);
                let r = p[0] - q[0] - xi;
                [3.0 * p[1] * p[2] + r * p[3], -q[1] * p[2], -q[2] * p[1]]
            }
            Loss::Custom(_) => {
                let h = FD_HIGHER;
                let sxx = (self.d1(x + h, z, xi) - self.d1(x - h, z, xi)) / (2.0 * h);
                let sxz = (self.d1(x, z + h, xi) - self.d1(x, z - h, xi)) / (2.0 * h);
                let szz = (self.d2(x, z + h, xi) - self.d2(x, z - h, xi)) / (2.0 * h);
                [sxx, sxz, szz]
            }
        }
    }

    /// Third partials through `dS/dx`: `[S_xxx, S_xxz, S_xzz]`.
    pub fn third(&self, x: f64, z: f64, xi: f64) -> [f64; 3] {
        match &self.loss {
            Loss::SquaredOnLink => {
                let p = self.link.derivs(x);
                let q = self.link.derivs(z);
                let r = p[0] - q[0] - xi;
                [
                    3.0 * p[2] * p[2] + 4.0 * p[1] * p[3] + r * p[4],
                    -q[1] * p[3],
                    -q[2] * p[2],
                ]
            }
            Loss::Custom(c) if c.d1.is_none() => {
                // Stencils on the score itself; nesting finite differences
                // of a finite-difference partial loses too many digits.
                let h = FD_SCORE_THIRD;
                let s = |a: f64, b: f64| self.score(a, b, xi);
                let sxx = |b: f64| (s(x + h, b) - 2.0 * s(x, b) + s(x - h, b)) / (h * h);
                let sx = |b: f64| (s(x + h, b) - s(x - h, b)) / (2.0 * h);
                let xxx = (s(x + 2.0 * h, z) - 2.0 * s(x + h, z) + 2.0 * s(x - h, z) - s(x - 2.0 * h, z)) / (2.0 * h * h * h);
                let xxz = (sxx(z + h) - sxx(z - h)) / (2.0 * h);
                let xzz = (sx(z + h) - 2.0 * sx(z) + sx(z - h)) / (h * h);
                [xxx, xxz, xzz]
            }
            Loss::Custom(_) => {
                let h = FD_HIGHER;
                let g = |a: f64, b: f64| self.d1(a, b, xi);
                let c = g(x, z);
                let xxx = (g(x + h, z) - 2.0 * c + g(x - h, z)) / (h * h);
                let xxz = (g(x + h, z + h) - g(x + h, z - h) - g(x - h, z + h) + g(x - h, z - h)) / (4.0 * h * h);
                let xzz = (g(x, z + h) - 2.0 * c + g(x, z - h)) / (h * h);
                [xxx, xxz, xzz]
            }
        }
    }

    /// `(tau, delta) = (E dS/dx, -E dS/dz)` under `cov`.
    pub fn tau_delta(&self, cov: GaussianPairCov) -> (f64, f64) {
        let [t, d] = gauss2_expect_many(
            |g1, g2, xi| {
                let (a, b) = self.d1_d2(g1, g2, xi);
                [a, b]
            },
            cov,
            &self.noise,
            self.nodes,
            self.affine_in_noise(),
        );
        (t, -d)
    }

    /// `min{E dS/dx(rG, rG, xi), E G^2 dS/dx(rG, rG, xi)}` with `r = |mu*|`.
    pub fn rho_star(&self, mu_star_norm: f64) -> f64 {
        let rule = quad::hermite(self.nodes);
        let inner = |xi: f64| {
            let mut a = 0.0;
            let mut b = 0.0;
            for (&g, &w) in rule.nodes.iter().zip(&rule.weights) {
                let v = self.d1(mu_star_norm * g, mu_star_norm * g, xi);
                a += w * v;
                b += w * g * g * v;
            }
            [a, b]
        };
        let [a, b] = if self.affine_in_noise() { inner(self.noise.mean) } else { self.noise.expect(inner) };
        a.min(b)
    }
}

/// Covariance of `(<Z,u>, <Z,mu*>)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPairCov {
    pub gamma2: f64,
    pub alpha: f64,
    pub s2: f64,
}

impl GaussianPairCov {
    pub fn new(gamma2: f64, alpha: f64, s2: f64) -> Self {
        GaussianPairCov { gamma2, alpha, s2 }
    }

    /// Clip variances at zero and the correlation into `[-1, 1]`.
    pub fn projected(self) -> Self {
        let gamma2 = self.gamma2.max(0.0);
        let s2 = self.s2.max(0.0);
        let lim = (gamma2 * s2).sqrt();
        GaussianPairCov { gamma2, alpha: self.alpha.clamp(-lim, lim), s2 }
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.gamma2 >= 0.0 && self.s2 >= 0.0 && self.gamma2 * self.s2 - self.alpha * self.alpha >= -tol * self.gamma2 * self.s2
    }
}

/// `E f(G1, G2)` for a centered Gaussian pair, no noise.
pub fn gauss2_plain<const K: usize>(f: impl Fn(f64, f64) -> [f64; K], cov: GaussianPairCov, nodes: usize) -> [f64; K] {
    let cov = cov.projected();
    let rule = quad::hermite(nodes.max(2));
    let mut acc = [0.0; K];
    let tiny = 1e-14;
    if cov.s2 <= tiny * cov.gamma2.max(1e-300) || cov.s2 == 0.0 {
        let sd = cov.gamma2.sqrt();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            add_scaled(&mut acc, &f(sd * x, 0.0), w);
        }
        return acc;
    }
    let s = cov.s2.sqrt();
    let slope = cov.alpha / cov.s2;
    let resid = (cov.gamma2 - cov.alpha * slope).max(0.0);
    if resid <= tiny * cov.gamma2 {
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            let g2 = s * x;
            add_scaled(&mut acc, &f(slope * g2, g2), w);
        }
        return acc;
    }
    let r = resid.sqrt();
    for (&x2, &w2) in rule.nodes.iter().zip(&rule.weights) {
        let g2 = s * x2;
        let base = slope * g2;
        for (&x1, &w1) in rule.nodes.iter().zip(&rule.weights) {
            add_scaled(&mut acc, &f(base + r * x1, g2), w1 * w2);
        }
    }
    acc
}

/// Vector-valued `E f(G1, G2, xi)` with `xi` independent of the pair.
pub fn gauss2_expect_many<const K: usize>(
    f: impl Fn(f64, f64, f64) -> [f64; K],
    cov: GaussianPairCov,
    noise: &NoiseSpec,
    nodes: usize,
    affine_in_noise: bool,
) -> [f64; K] {
    if affine_in_noise || noise.is_zero() {
        let m = noise.mean;
        gauss2_plain(|a, b| f(a, b, m), cov, nodes)
    } else {
        noise.expect(|xi| gauss2_plain(|a, b| f(a, b, xi), cov, nodes))
    }
}

/// `E f(G1, G2, xi)` by tensorized Gauss–Hermite quadrature.
pub fn gauss2_expect(
    f: impl Fn(f64, f64, f64) -> f64,
    cov: GaussianPairCov,
    noise: &NoiseSpec,
    nodes: usize,
    affine_in_noise: bool,
) -> f64 {
    gauss2_expect_many(|a, b, xi| [f(a, b, xi)], cov, noise, nodes, affine_in_noise)[0]
}
