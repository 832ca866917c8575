//! Monte Carlo checks on the Loewner simulator: drift tests for candidate
//! martingale observables, and left-passage frequencies against Schramm's
//! closed form.
//!
//! Ensembles are split into fixed-size chunks, each accumulated in
//! trajectory order and merged in chunk order, so reports are bit-identical
//! under any thread count.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::loewner::{driving_function, generate_trace, side_by_flow, FlowParams, FlowState, LoewnerFlow, Side};
use crate::rng::RngSpec;

const CHUNK: usize = 256;

/// Single-point test function `F(w)`.
#[derive(Clone)]
pub enum Observable {
    /// `w^p` on the principal branch.
    PowerLaw(f64),
    Constant(Complex64),
    /// Bilinear interpolation of samples on a rectangular grid; clamped
    /// outside it.
    Tabulated(Table),
    Custom { name: String, f: Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    /// `values[j][i]` at `re[i] + i·im[j]`.
    pub values: Vec<Vec<Complex64>>,
}

impl Table {
    pub fn new(re: Vec<f64>, im: Vec<f64>, values: Vec<Vec<Complex64>>) -> Result<Self> {
        let sorted = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|p| p[0] < p[1]);
        if !sorted(&re) || !sorted(&im) {
            return Err(Error::InvalidParameter("table axes need >= 2 strictly increasing points".into()));
        }
        if values.len() != im.len() || values.iter().any(|r| r.len() != re.len()) {
            return Err(Error::InvalidParameter("table values do not match the axes".into()));
        }
        Ok(Table { re, im, values })
    }

    pub fn eval(&self, w: Complex64) -> Complex64 {
        let (i, fx) = locate(&self.re, w.re);
        let (j, fy) = locate(&self.im, w.im);
        let v = &self.values;
        v[j][i] * (1.0 - fx) * (1.0 - fy) + v[j][i + 1] * fx * (1.0 - fy) + v[j + 1][i] * (1.0 - fx) * fy + v[j + 1][i + 1] * fx * fy
    }
}

fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let x = x.clamp(axis[0], axis[axis.len() - 1]);
    let i = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1) - 1;
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

impl Observable {
    pub fn eval(&self, w: Complex64) -> Complex64 {
        match self {
            Observable::PowerLaw(p) => w.powf(*p),
            Observable::Constant(c) => *c,
            Observable::Tabulated(t) => t.eval(w),
            Observable::Custom { f, .. } => f(w),
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::PowerLaw(p) => write!(f, "w^{p}"),
            Observable::Constant(c) => write!(f, "const {c}"),
            Observable::Tabulated(t) => write!(f, "table {}x{}", t.re.len(), t.im.len()),
            Observable::Custom { name, .. } => f.write_str(name),
        }
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({self})")
    }
}

/// Running mean and sum of squared deviations; merged with Chan's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, o: &Moments) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64 * o.n as f64 / n as f64);
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftParams {
    pub kappa: f64,
    pub start: Complex64,
    pub n_traj: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Driving draws per `split` steps; see [`FlowParams::split`].
    pub split: u32,
    /// Number of grid intervals the horizon is recorded on.
    pub grid: usize,
    /// Swallowed trajectories contribute their frozen value; when false they
    /// are dropped (biased toward survivors).
    pub stopped: bool,
}

impl DriftParams {
    pub fn new(kappa: f64, start: Complex64, n_traj: usize, dt: f64, horizon: f64) -> Self {
        DriftParams { kappa, start, n_traj, dt, horizon, split: 1, grid: 50, stopped: true }
    }

    fn validate(&self) -> Result<(usize, usize)> {
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_traj < 100 {
            return Err(Error::InvalidParameter(format!("drift test needs n_traj >= 100, got {}", self.n_traj)));
        }
        if self.grid == 0 {
            return Err(Error::InvalidParameter("grid must be >= 1".into()));
        }
        let n = FlowParams { dt: self.dt, horizon: self.horizon, split: self.split }.n_steps()?;
        if n == 0 {
            return Err(Error::InvalidParameter("horizon is shorter than one step".into()));
        }
        FlowState::new(self.kappa, &[self.start])?;
        let stride = (n / self.grid).max(1);
        Ok((n, stride))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_error: f64,
    pub ci95: (f64, f64),
    /// `|slope| / se`, zero when both vanish.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentReport {
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub slope: SlopeFit,
    /// `max_t |mean(t) − mean(0)| / se(t)`.
    pub max_deviation_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub observable: String,
    pub params: DriftParams,
    pub seed: u64,
    pub n_used: usize,
    pub n_swallowed: usize,
    pub times: Vec<f64>,
    pub re: ComponentReport,
    pub im: ComponentReport,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl DriftReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    /// Time series `t,mean_re,se_re,mean_im,se_im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mean_re,se_re,mean_im,se_im\n");
        for (k, t) in self.times.iter().enumerate() {
            out.push_str(&format!(
                "{t:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.re.mean[k], self.re.std_error[k], self.im.mean[k], self.im.std_error[k]
            ));
        }
        out
    }
}

/// Per-observable accumulators for one chunk.
#[derive(Clone)]
struct Acc {
    re: Vec<Moments>,
    im: Vec<Moments>,
    slope_re: Moments,
    slope_im: Moments,
}

impl Acc {
    fn new(n: usize) -> Self {
        Acc { re: vec![Moments::default(); n], im: vec![Moments::default(); n], slope_re: Moments::default(), slope_im: Moments::default() }
    }

    fn merge(&mut self, o: &Acc) {
        for (a, b) in self.re.iter_mut().zip(&o.re) {
            a.merge(b);
        }
        for (a, b) in self.im.iter_mut().zip(&o.im) {
            a.merge(b);
        }
        self.slope_re.merge(&o.slope_re);
        self.slope_im.merge(&o.slope_im);
    }
}

struct ChunkResult {
    accs: Vec<Acc>,
    swallowed: usize,
}

/// Positions `w` of one trajectory on the recording grid, plus whether it
/// was swallowed before the horizon.
fn record_path(params: &DriftParams, n_steps: usize, stride: usize, rng: RngSpec) -> (Vec<Complex64>, bool) {
    let state = FlowState::new(params.kappa, &[params.start]).expect("validated");
    let mut flow = LoewnerFlow::new(state, params.dt, params.split, rng).expect("validated");
    let mut path = Vec::with_capacity(n_steps / stride + 1);
    path.push(params.start);
    for k in 1..=n_steps {
        flow.step();
        if k % stride == 0 {
            path.push(flow.state().points[0].w);
        }
    }
    let alive = flow.state().points[0].alive;
    (path, !alive)
}

/// Drift test of several observables on one shared ensemble.
pub fn drift_test_many(observables: &[Observable], params: &DriftParams, rng: RngSpec) -> Result<Vec<DriftReport>> {
    let (n_steps, stride) = params.validate()?;
    let n_grid = n_steps / stride + 1;
    let times: Vec<f64> = (0..n_grid).map(|k| (k * stride) as f64 * params.dt).collect();
    let t_bar = times.iter().sum::<f64>() / n_grid as f64;
    let sxx: f64 = times.iter().map(|t| (t - t_bar).powi(2)).sum();
    let weights: Vec<f64> = times.iter().map(|t| if sxx > 0.0 { (t - t_bar) / sxx } else { 0.0 }).collect();

    let n_chunks = params.n_traj.div_ceil(CHUNK);
    let chunks: Vec<ChunkResult> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut accs = vec![Acc::new(n_grid); observables.len()];
            let mut swallowed = 0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(params.n_traj) {
                let (path, dead) = record_path(params, n_steps, stride, rng.member(i as u64));
                swallowed += dead as usize;
                if dead && !params.stopped {
                    continue;
                }
                for (obs, acc) in observables.iter().zip(&mut accs) {
                    let (mut s_re, mut s_im) = (0.0, 0.0);
                    let v0 = obs.eval(path[0]);
                    for (k, &w) in path.iter().enumerate() {
                        let v = obs.eval(w);
                        let d = v - v0;
                        acc.re[k].push(v.re);
                        acc.im[k].push(v.im);
                        s_re += weights[k] * d.re;
                        s_im += weights[k] * d.im;
                    }
                    acc.slope_re.push(s_re);
                    acc.slope_im.push(s_im);
                }
            }
            ChunkResult { accs, swallowed }
        })
        .collect();

    let mut total = vec![Acc::new(n_grid); observables.len()];
    let mut swallowed = 0;
    for ch in &chunks {
        swallowed += ch.swallowed;
        for (t, a) in total.iter_mut().zip(&ch.accs) {
            t.merge(a);
        }
    }
    let n_used = if params.stopped { params.n_traj } else { params.n_traj - swallowed };
    let warning = (!params.stopped && swallowed > 0)
        .then(|| format!("{swallowed} swallowed trajectories excluded; means are biased toward survivors"));
    if n_used < 2 {
        return Err(Error::InvalidParameter("fewer than two trajectories survived".into()));
    }

    Ok(observables
        .iter()
        .zip(total)
        .map(|(obs, acc)| {
            let re = component(&acc.re, &acc.slope_re);
            let im = component(&acc.im, &acc.slope_im);
            let verdict = if re.pass && im.pass { Verdict::Pass } else { Verdict::Fail };
            DriftReport {
                observable: obs.to_string(),
                params: *params,
                seed: rng.seed,
                n_used,
                n_swallowed: swallowed,
                times: times.clone(),
                re,
                im,
                verdict,
                warning: warning.clone(),
            }
        })
        .collect())
}

pub fn drift_test(obs: &Observable, params: &DriftParams, rng: RngSpec) -> Result<DriftReport> {
    Ok(drift_test_many(std::slice::from_ref(obs), params, rng)?.remove(0))
}

fn ratio(num: f64, se: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if se == 0.0 {
        f64::INFINITY
    } else {
        num / se
    }
}

fn component(grid: &[Moments], slope: &Moments) -> ComponentReport {
    let mean: Vec<f64> = grid.iter().map(|m| m.mean).collect();
    let std_error: Vec<f64> = grid.iter().map(Moments::std_error).collect();
    let max_deviation_ratio = mean
        .iter()
        .zip(&std_error)
        .map(|(m, se)| ratio((m - mean[0]).abs(), *se))
        .fold(0.0, f64::max);
    let se = slope.std_error();
    let fit = SlopeFit {
        slope: slope.mean,
        std_error: se,
        ci95: (slope.mean - 1.96 * se, slope.mean + 1.96 * se),
        z: ratio(slope.mean.abs(), se),
    };
    let pass = fit.z < 3.0 && max_deviation_ratio < 5.0;
    ComponentReport { mean, std_error, slope: fit, max_deviation_ratio, pass }
}

/// Largest `|mean_dt(t) − mean_{dt/2}(t)| / se_dt(t)` over the coarse grid,
/// real and imaginary parts, with both runs driven by the same coarse
/// Brownian path.
pub fn dt_halving_gap(obs: &Observable, params: &DriftParams, rng: RngSpec) -> Result<f64> {
    let coarse = drift_test(obs, params, rng)?;
    let fine_params = DriftParams { dt: params.dt / 2.0, split: params.split * 2, ..*params };
    let fine = drift_test(obs, &fine_params, rng)?;
    let mut gap: f64 = 0.0;
    for (k, t) in coarse.times.iter().enumerate() {
        let Some(j) = fine.times.iter().position(|s| (s - t).abs() < 1e-9 * params.dt) else {
            continue;
        };
        for (c, f) in [(&coarse.re, &fine.re), (&coarse.im, &fine.im)] {
            gap = gap.max(ratio((c.mean[k] - f.mean[j]).abs(), c.std_error[k]));
        }
    }
    Ok(gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PassageMethod {
    /// Sign of `Re(g_T(z) − U_T)` under the slit maps; linear in steps.
    Flow,
    /// Ray crossings against the zipper polyline; quadratic in steps.
    Polyline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassageParams {
    pub kappa: f64,
    pub target: Complex64,
    pub n_traces: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub method: PassageMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassageEstimate {
    pub params: PassageParams,
    pub seed: u64,
    /// Traces with the target on their right.
    pub right: usize,
    pub probability: f64,
    pub std_error: f64,
    /// Wilson score interval at 95%.
    pub wilson95: (f64, f64),
}

impl PassageEstimate {
    /// `|p̂ − p| / se`, using the exact binomial se at `p`.
    pub fn z_against(&self, p: f64) -> f64 {
        let se = (p * (1.0 - p) / self.params.n_traces as f64).sqrt();
        ratio((self.probability - p).abs(), se)
    }
}

pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Fraction of traces passing left of `target`, i.e. with the target in the
/// component to their right.
pub fn left_passage_estimate(params: &PassageParams, rng: RngSpec) -> Result<PassageEstimate> {
    if !(params.target.im > 0.0 && params.target.re.is_finite()) {
        return Err(Error::InvalidParameter(format!("target {} is not in the upper half-plane", params.target)));
    }
    if params.n_traces == 0 || params.n_steps == 0 {
        return Err(Error::InvalidParameter("n_traces and n_steps must be positive".into()));
    }
    if !(params.kappa >= 0.0 && params.kappa < 8.0) {
        return Err(Error::InvalidParameter(format!("kappa must lie in [0, 8), got {}", params.kappa)));
    }
    let n_chunks = params.n_traces.div_ceil(CHUNK);
    let per_chunk: Vec<Result<usize>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut right = 0;
            for i in c * CHUNK..((c + 1) * CHUNK).min(params.n_traces) {
                let r = rng.member(i as u64);
                let side = match params.method {
                    PassageMethod::Flow => {
                        let u = driving_function(params.kappa, params.n_steps, params.dt, r)?;
                        side_by_flow(&u, params.dt, params.target)
                    }
                    PassageMethod::Polyline => {
                        generate_trace(params.kappa, params.n_steps, params.dt, r)?.side_of(params.target)
                    }
                };
                right += (side == Side::Right) as usize;
            }
            Ok(right)
        })
        .collect();
    let mut right = 0;
    for r in per_chunk {
        right += r?;
    }
    let n = params.n_traces as f64;
    let p = right as f64 / n;
    Ok(PassageEstimate {
        params: *params,
        seed: rng.seed,
        right,
        probability: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        wilson95: wilson_interval(right, params.n_traces, 1.96),
    })
}

/// Probability that chordal SLE_κ passes left of a point at argument `θ`:
///
/// ```text
/// P = 1/2 + Γ(4/κ) / (√π Γ(4/κ − 1/2)) · cot θ · ₂F₁(1/2, 4/κ; 3/2; −cot²θ)
/// ```
///
/// The hypergeometric factor is `∫₀¹ (1 + cot²θ s²)^(−4/κ) ds`. For
/// `|cot θ| > 1` the integral is taken in angle form, `∫₀^θ sin^(8/κ−2)ψ dψ`,
/// with the endpoint singularity removed by substitution.
pub fn schramm_formula(kappa: f64, theta: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 8.0) {
        return Err(Error::InvalidParameter(format!("kappa must lie in (0, 8), got {kappa}")));
    }
    if !(theta > 0.0 && theta < PI) {
        return Err(Error::InvalidParameter(format!("theta must lie in (0, pi), got {theta}")));
    }
    let b = 4.0 / kappa;
    let norm = gamma(b) / (PI.sqrt() * gamma(b - 0.5));
    let x = (PI / 2.0 - theta).tan();
    if x.abs() <= 1.0 {
        let integral = adaptive_simpson(&|u: f64| (1.0 + u * u).powf(-b), 0.0, x.abs(), 1e-13) * x.signum();
        return Ok(0.5 + norm * integral);
    }
    // ∫_{cot θ}^∞ (1+u²)^(−b) du = ∫₀^θ sin^a ψ dψ, a = 2b − 2 > −1.
    let a = 2.0 * b - 2.0;
    let tail = |th: f64| {
        let f = |r: f64| {
            let psi = th * r.powf(1.0 / (a + 1.0));
            if psi == 0.0 {
                1.0
            } else {
                (psi.sin() / psi).powf(a)
            }
        };
        th.powf(a + 1.0) / (a + 1.0) * adaptive_simpson(&f, 0.0, 1.0, 1e-13)
    };
    Ok(if x > 0.0 { 1.0 - norm * tail(theta) } else { norm * tail(PI - theta) })
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}
