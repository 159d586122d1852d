//! Benchmark targets with analytic gradients, their known moments, and the
//! ground-truth tooling used when moments are not available in closed form.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::exec::Execution;
use crate::linalg::{log_sum_exp, Factor};
use crate::{Density, GrisError, Point, Result, RngStream};

/// Mean, covariance and log normalizing constant of a target.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_z: f64,
}

impl Moments {
    pub fn variance(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// `c · N(mean, cov)`, stored with `log c`.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    factor: Factor,
    pub log_c: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(GrisError::DimensionMismatch { expected: mean.len(), got: cov.nrows() });
        }
        let (l, _) = crate::linalg::factorize(cov, 0.0, "gaussian covariance")?;
        Ok(Gaussian { mean, factor: Factor::from_lower(l), log_c: 0.0 })
    }

    pub fn standard(dim: usize) -> Self {
        Gaussian { mean: DVector::zeros(dim), factor: Factor::identity(dim), log_c: 0.0 }
    }

    pub fn diagonal(mean: DVector<f64>, var: &[f64]) -> Result<Self> {
        Self::new(mean, &DMatrix::from_diagonal(&DVector::from_row_slice(var)))
    }

    pub fn scaled(mut self, log_c: f64) -> Self {
        self.log_c = log_c;
        self
    }

    pub fn factor(&self) -> &Factor {
        &self.factor
    }

    pub fn moments(&self) -> Moments {
        Moments { mean: self.mean.clone(), cov: self.factor.cov(), log_z: self.log_c }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        self.factor.sample(&self.mean, rng)
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &Point) -> f64 {
        self.log_c + self.factor.gaussian_logpdf(x, &self.mean)
    }

    fn log_density_grad(&self, x: &Point) -> (f64, Point) {
        let grad = -self.factor.solve(&(x - &self.mean));
        (self.log_density(x), grad)
    }
}

#[derive(Debug, Clone)]
struct GaussianComponent {
    log_w: f64,
    mean: DVector<f64>,
    factor: Factor,
}

/// Finite mixture of Gaussians.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
}

impl GaussianMixture {
    /// Weights are normalized internally.
    pub fn new(weights: &[f64], means: &[DVector<f64>], covs: &[DMatrix<f64>]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        let components = weights
            .iter()
            .zip(means)
            .zip(covs)
            .map(|((w, m), c)| {
                Ok(GaussianComponent { log_w: (w / total).ln(), mean: m.clone(), factor: Factor::from_cov(c, 0.0, "component covariance")? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianMixture { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.log_w.exp()).collect()
    }

    pub fn moments(&self) -> Moments {
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for c in &self.components {
            let w = c.log_w.exp();
            mean += &c.mean * w;
            second += (c.factor.cov() + &c.mean * c.mean.transpose()) * w;
        }
        let cov = second - &mean * mean.transpose();
        Moments { mean, cov, log_z: 0.0 }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let c = &self.components[pick(self.components.iter().map(|c| c.log_w.exp()), rng.random())];
        c.factor.sample(&c.mean, rng)
    }
}

fn pick(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

impl Density for GaussianMixture {
    fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    fn log_density(&self, x: &Point) -> f64 {
        let terms: Vec<f64> = self.components.iter().map(|c| c.log_w + c.factor.gaussian_logpdf(x, &c.mean)).collect();
        log_sum_exp(&terms)
    }

    fn log_density_grad(&self, x: &Point) -> (f64, Point) {
        let terms: Vec<f64> = self.components.iter().map(|c| c.log_w + c.factor.gaussian_logpdf(x, &c.mean)).collect();
        let total = log_sum_exp(&terms);
        let mut grad = DVector::zeros(self.dim());
        for (c, t) in self.components.iter().zip(&terms) {
            let r = (t - total).exp();
            grad -= c.factor.solve(&(x - &c.mean)) * r;
        }
        (total, grad)
    }
}

/// 2D mixture on a square lattice centred at the origin, with weights
/// `∝ exp(-‖μ‖ / τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGridSpec {
    pub grid_side: usize,
    pub spacing: f64,
    pub component_cov: DMatrix<f64>,
    pub weight_decay: f64,
}

impl Default for GaussianGridSpec {
    fn default() -> Self {
        GaussianGridSpec { grid_side: 5, spacing: 3.0, component_cov: DMatrix::identity(2, 2), weight_decay: 4.0 }
    }
}

pub fn gaussian_grid(spec: &GaussianGridSpec) -> Result<GaussianMixture> {
    let n = spec.grid_side;
    let half = (n as f64 - 1.0) / 2.0;
    let mut means = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let m = DVector::from_vec(vec![(i as f64 - half) * spec.spacing, (j as f64 - half) * spec.spacing]);
            weights.push((-m.norm() / spec.weight_decay).exp());
            means.push(m);
        }
    }
    let covs = vec![spec.component_cov.clone(); n * n];
    GaussianMixture::new(&weights, &means, &covs)
}

/// `f(x) = exp(-x₁²/(2s) - ½(x₂ - b(x₁² - s))²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Banana {
    pub b: f64,
    pub s: f64,
}

impl Default for Banana {
    fn default() -> Self {
        Banana { b: 0.03, s: 100.0 }
    }
}

impl Banana {
    pub fn new(b: f64, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(GrisError::Contract("banana scale s must be positive".into()));
        }
        Ok(Banana { b, s })
    }

    /// From `x₁ ~ N(0, s)`, `x₂ | x₁ ~ N(b(x₁² - s), 1)`: mean 0, variances
    /// `s` and `1 + 2b²s²`, uncorrelated, `Z = 2π√s`.
    pub fn moments(&self) -> Moments {
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![self.s, 1.0 + 2.0 * self.b * self.b * self.s * self.s]));
        Moments { mean: DVector::zeros(2), cov, log_z: (2.0 * PI * self.s.sqrt()).ln() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let x1 = self.s.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let x2 = self.b * (x1 * x1 - self.s) + rng.sample::<f64, _>(StandardNormal);
        DVector::from_vec(vec![x1, x2])
    }
}

impl Density for Banana {
    fn dim(&self) -> usize {
        2
    }

    fn log_density_grad(&self, x: &Point) -> (f64, Point) {
        let (x1, x2) = (x[0], x[1]);
        let r = x2 - self.b * (x1 * x1 - self.s);
        let logf = -x1 * x1 / (2.0 * self.s) - 0.5 * r * r;
        let g1 = -x1 / self.s + 2.0 * self.b * x1 * r;
        (logf, DVector::from_vec(vec![g1, -r]))
    }
}

#[derive(Debug, Clone)]
struct TComponent {
    log_w: f64,
    mean: DVector<f64>,
    factor: Factor,
    log_norm: f64,
}

/// Mixture of multivariate t distributions sharing one degrees-of-freedom value.
#[derive(Debug, Clone)]
pub struct TMixture {
    dof: f64,
    components: Vec<TComponent>,
}

/// Parameters of a t mixture. [`TMixtureSpec::generate`] builds the
/// benchmark instance reproducibly from a seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TMixtureSpec {
    pub dof: f64,
    pub means: Vec<DVector<f64>>,
    pub scales: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    pub gen_seed: Option<u64>,
}

impl TMixtureSpec {
    pub const DEFAULT_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];

    /// Three 10D components with 10 degrees of freedom: means uniform on
    /// `[-5, 5]^10`, scales inverse-Wishart(I, 10), weights (0.5, 0.3, 0.2).
    ///
    /// Draw order from `derive_run_stream(seed, 0)`: all means (component
    /// by component, coordinate by coordinate), then one Bartlett factor per
    /// component (row by row: chi-square diagonal, then normals left of it).
    pub fn generate(seed: u64) -> Self {
        Self::generate_with(seed, 3, 10, 10.0, &Self::DEFAULT_WEIGHTS)
    }

    pub fn generate_with(seed: u64, n_components: usize, dim: usize, dof: f64, weights: &[f64]) -> Self {
        let mut rng = crate::model::derive_run_stream(seed, 0);
        let means = (0..n_components).map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0))).collect();
        let scales = (0..n_components).map(|_| inverse_wishart_identity(dim, dof, &mut rng)).collect();
        TMixtureSpec { dof, means, scales, weights: weights.to_vec(), gen_seed: Some(seed) }
    }
}

/// Draw from inverse-Wishart with identity scale via the Bartlett
/// decomposition of the corresponding Wishart draw.
pub fn inverse_wishart_identity(dim: usize, dof: f64, rng: &mut RngStream) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(dof - i as f64).expect("dof > dim - 1");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let w = &a * a.transpose();
    let inv = w.cholesky().expect("Wishart draw is positive definite").inverse();
    (&inv + inv.transpose()) * 0.5
}

impl TMixture {
    pub fn new(spec: &TMixtureSpec) -> Result<Self> {
        if !(spec.dof > 2.0) {
            return Err(GrisError::Contract("t mixture needs dof > 2 for finite moments".into()));
        }
        let total: f64 = spec.weights.iter().sum();
        let d = spec.means[0].len() as f64;
        let nu = spec.dof;
        let components = spec
            .weights
            .iter()
            .zip(&spec.means)
            .zip(&spec.scales)
            .map(|((w, m), s)| {
                let factor = Factor::from_cov(s, 0.0, "t scale")?;
                let log_norm = libm::lgamma((nu + d) / 2.0)
                    - libm::lgamma(nu / 2.0)
                    - 0.5 * d * (nu * PI).ln()
                    - factor.log_det_half();
                Ok(TComponent { log_w: (w / total).ln(), mean: m.clone(), factor, log_norm })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TMixture { dof: nu, components })
    }

    pub fn moments(&self) -> Moments {
        let d = self.dim();
        let k = self.dof / (self.dof - 2.0);
        let mut mean = DVector::zeros(d);
        let mut second = DMatrix::zeros(d, d);
        for c in &self.components {
            let w = c.log_w.exp();
            mean += &c.mean * w;
            second += (c.factor.cov() * k + &c.mean * c.mean.transpose()) * w;
        }
        let cov = second - &mean * mean.transpose();
        Moments { mean, cov, log_z: 0.0 }
    }

    /// Average of the component means.
    pub fn center(&self) -> DVector<f64> {
        self.components.iter().fold(DVector::zeros(self.dim()), |a, c| a + &c.mean) / self.components.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let c = &self.components[pick(self.components.iter().map(|c| c.log_w.exp()), rng.random())];
        let z = c.factor.apply(&crate::linalg::standard_normal(self.dim(), rng));
        let u = ChiSquared::new(self.dof).expect("dof > 0").sample(rng);
        &c.mean + z * (self.dof / u).sqrt()
    }

    fn terms(&self, x: &Point) -> Vec<(f64, f64)> {
        let d = self.dim() as f64;
        self.components
            .iter()
            .map(|c| {
                let q = c.factor.mahalanobis_sq(&(x - &c.mean));
                (c.log_w + c.log_norm - 0.5 * (self.dof + d) * (1.0 + q / self.dof).ln(), q)
            })
            .collect()
    }
}

impl Density for TMixture {
    fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    fn log_density(&self, x: &Point) -> f64 {
        let t: Vec<f64> = self.terms(x).into_iter().map(|(l, _)| l).collect();
        log_sum_exp(&t)
    }

    fn log_density_grad(&self, x: &Point) -> (f64, Point) {
        let d = self.dim() as f64;
        let terms = self.terms(x);
        let logs: Vec<f64> = terms.iter().map(|(l, _)| *l).collect();
        let total = log_sum_exp(&logs);
        let mut grad = DVector::zeros(self.dim());
        for (c, (l, q)) in self.components.iter().zip(&terms) {
            let r = (l - total).exp();
            let coef = (self.dof + d) / (self.dof + q);
            grad -= c.factor.solve(&(x - &c.mean)) * (r * coef);
        }
        (total, grad)
    }
}

/// Logistic regression design: standardized features plus an intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub prior_var: f64,
}

pub const GERMAN_CREDIT_ROWS: usize = 1000;
pub const GERMAN_CREDIT_FIELDS: usize = 25;

/// Reads the whitespace-separated numeric German credit table (24
/// attributes, then a label in {1, 2}), standardizes every attribute and
/// appends an intercept column. Label 1 (good) maps to 0, 2 (bad) to 1.
pub fn load_german_credit(path: &Path) -> Result<LogRegModel> {
    let text = std::fs::read_to_string(path)?;
    parse_german_credit(&text, &path.display().to_string())
}

pub fn parse_german_credit(text: &str, source: &str) -> Result<LogRegModel> {
    let err = |line: usize, msg: String| GrisError::Ingest { path: source.to_string(), line, msg };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(GERMAN_CREDIT_ROWS);
    let mut labels = Vec::with_capacity(GERMAN_CREDIT_ROWS);
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| err(lineno, format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if fields.len() != GERMAN_CREDIT_FIELDS {
            return Err(err(lineno, format!("expected {GERMAN_CREDIT_FIELDS} fields, found {}", fields.len())));
        }
        let label = match fields[GERMAN_CREDIT_FIELDS - 1] {
            1.0 => 0.0,
            2.0 => 1.0,
            v => return Err(err(lineno, format!("label must be 1 or 2, found {v}"))),
        };
        labels.push(label);
        rows.push(fields[..GERMAN_CREDIT_FIELDS - 1].to_vec());
    }
    if rows.len() != GERMAN_CREDIT_ROWS {
        return Err(err(rows.len(), format!("expected {GERMAN_CREDIT_ROWS} rows, found {}", rows.len())));
    }
    let n = rows.len();
    let a = GERMAN_CREDIT_FIELDS - 1;
    let mut x = DMatrix::zeros(n, a + 1);
    for j in 0..a {
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (i, r) in rows.iter().enumerate() {
            x[(i, j)] = (r[j] - mean) / sd;
        }
    }
    for i in 0..n {
        x[(i, a)] = 1.0;
    }
    Ok(LogRegModel { x, y: DVector::from_vec(labels), prior_var: 100.0 })
}

/// Posterior of a logistic regression with an isotropic Gaussian prior.
#[derive(Debug, Clone)]
pub struct LogRegPosterior {
    model: LogRegModel,
}

pub fn logreg_posterior(model: LogRegModel) -> LogRegPosterior {
    LogRegPosterior { model }
}

/// `log(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl LogRegPosterior {
    pub fn model(&self) -> &LogRegModel {
        &self.model
    }

    pub fn log_likelihood(&self, beta: &Point) -> f64 {
        let eta = &self.model.x * beta;
        eta.iter().zip(self.model.y.iter()).map(|(e, y)| y * e - softplus(*e)).sum()
    }
}

impl Density for LogRegPosterior {
    fn dim(&self) -> usize {
        self.model.x.ncols()
    }

    fn log_density(&self, beta: &Point) -> f64 {
        self.log_likelihood(beta) - beta.norm_squared() / (2.0 * self.model.prior_var)
    }

    fn log_density_grad(&self, beta: &Point) -> (f64, Point) {
        let eta = &self.model.x * beta;
        let mut ll = 0.0;
        let mut resid = DVector::zeros(eta.len());
        for i in 0..eta.len() {
            let (e, y) = (eta[i], self.model.y[i]);
            ll += y * e - softplus(e);
            resid[i] = y - sigmoid(e);
        }
        let grad = self.model.x.tr_mul(&resid) - beta / self.model.prior_var;
        (ll - beta.norm_squared() / (2.0 * self.model.prior_var), grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions { grad_tol: 1e-8, max_iter: 200 }
    }
}

/// Mode by damped Newton ascent and covariance as the inverse of the
/// negated Hessian at the mode. Hessians are central differences of the
/// analytic gradient; a gradient step with backtracking is used whenever
/// the Hessian estimate is not negative definite.
pub fn laplace_approx(target: &dyn Density, x0: &Point, opts: LaplaceOptions) -> Result<(Point, DMatrix<f64>)> {
    let mode = find_mode(target, x0, opts)?;
    let ch = neg_hessian(target, &mode).cholesky().ok_or(GrisError::NotPositiveDefinite)?;
    let cov = ch.inverse();
    Ok((mode, (&cov + cov.transpose()) * 0.5))
}

fn neg_hessian(target: &dyn Density, x: &Point) -> DMatrix<f64> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for j in 0..d {
        let step = 1e-5 * (1.0 + x[j].abs());
        let mut up = x.clone();
        up[j] += step;
        let mut down = x.clone();
        down[j] -= step;
        let col = (target.log_density_grad(&down).1 - target.log_density_grad(&up).1) / (2.0 * step);
        h.set_column(j, &col);
    }
    (&h + h.transpose()) * 0.5
}

fn find_mode(target: &dyn Density, x0: &Point, opts: LaplaceOptions) -> Result<Point> {
    let mut x = x0.clone();
    let (mut f, mut g) = target.log_density_grad(&x);
    if !f.is_finite() {
        return Err(GrisError::Contract("Laplace start point has zero density".into()));
    }
    for _ in 0..opts.max_iter {
        let gn = g.norm();
        if gn < opts.grad_tol {
            return Ok(x);
        }
        let dir = match neg_hessian(target, &x).cholesky() {
            Some(ch) => ch.solve(&g),
            None => g.clone() / gn.max(1.0),
        };
        let slope = g.dot(&dir);
        let mut a = 1.0;
        let next = loop {
            let cand = &x + &dir * a;
            let (fc, gc) = target.log_density_grad(&cand);
            if fc.is_finite() && fc >= f + 1e-4 * a * slope {
                break Some((cand, fc, gc));
            }
            a *= 0.5;
            if a < 1e-20 {
                break None;
            }
        };
        match next {
            Some((xn, fnew, gnew)) => {
                x = xn;
                f = fnew;
                g = gnew;
            }
            // no further ascent is representable; accept if the gradient is already tiny
            None if gn < opts.grad_tol * 1e3 => return Ok(x),
            None => return Err(GrisError::NoConvergence { iterations: 0, grad_norm: gn }),
        }
    }
    Err(GrisError::NoConvergence { iterations: opts.max_iter, grad_norm: g.norm() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefensiveIsOptions {
    pub n_samples: usize,
    /// Weight of the un-inflated Laplace component.
    pub mix_weight: f64,
    pub scale_inflation: f64,
    pub ess_floor: f64,
}

impl Default for DefensiveIsOptions {
    fn default() -> Self {
        DefensiveIsOptions { n_samples: 10_000, mix_weight: 0.5, scale_inflation: 1.5, ess_floor: 1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefensiveIsEstimate {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub ess: f64,
    pub log_z: f64,
    pub below_floor: bool,
}

/// Importance sampling from `α N(mode, cov) + (1-α) N(mode, k² cov)`.
pub fn defensive_is_ground_truth(
    target: &dyn Density,
    laplace: (&Point, &DMatrix<f64>),
    opts: DefensiveIsOptions,
    rng: &mut RngStream,
    exec: Execution,
) -> Result<DefensiveIsEstimate> {
    let (mode, cov) = laplace;
    let a = opts.mix_weight;
    if !(a > 0.0 && a <= 1.0) {
        return Err(GrisError::Contract("mixture weight must be in (0, 1]".into()));
    }
    let narrow = Factor::from_cov(cov, 1e-12, "laplace covariance")?;
    let k = opts.scale_inflation;
    let wide = Factor::from_lower(narrow.lower() * k);
    let xs: Vec<Point> = (0..opts.n_samples)
        .map(|_| if rng.random::<f64>() < a { narrow.sample(mode, rng) } else { wide.sample(mode, rng) })
        .collect();
    let log_w: Vec<f64> = exec.map(&xs, |x| {
        let lq = log_sum_exp(&[a.ln() + narrow.gaussian_logpdf(x, mode), (1.0 - a).ln() + wide.gaussian_logpdf(x, mode)]);
        let lf = target.log_density(x);
        if lf.is_nan() {
            f64::NEG_INFINITY
        } else {
            lf - lq
        }
    });
    let probs = crate::resample::normalize(&crate::resample::LogWeights(log_w.clone()))?;
    let d = mode.len();
    let mut mean = DVector::zeros(d);
    for (x, w) in xs.iter().zip(&probs) {
        mean += x * *w;
    }
    let mut var = DVector::zeros(d);
    for (x, w) in xs.iter().zip(&probs) {
        let dev = x - &mean;
        var += dev.component_mul(&dev) * *w;
    }
    let ess = 1.0 / probs.iter().map(|w| w * w).sum::<f64>();
    let log_z = log_sum_exp(&log_w) - (log_w.len() as f64).ln();
    Ok(DefensiveIsEstimate { mean, var, ess, log_z, below_floor: ess < opts.ess_floor })
}
