//! Chordal Loewner evolution: point tracking, zipper traces, and the
//! auxiliary Lie-algebra-valued Brownian motion.
//!
//! Tracked points follow the shifted flow `w_t = g_t(z) − √κ ξ_t`,
//!
//! ```text
//! dw = 2 dt / w − √κ dξ
//! ```
//!
//! integrated by Euler–Maruyama. All points of one flow share the same
//! realized driving increments.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{self, Matrix, Rational};
use crate::liealg::{KillingBasis, SimpleAlgebra};
use crate::rng::RngSpec;

/// Deepest substep level; a step is split into at most `4^MAX_REFINE` pieces.
pub const MAX_REFINE: u32 = 8;


#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackedPoint {
    pub id: usize,
    pub w: Complex64,
    pub alive: bool,
    pub swallowed_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowState {
    pub time: f64,
    pub kappa: f64,
    pub points: Vec<TrackedPoint>,
}

impl FlowState {
    pub fn new(kappa: f64, starts: &[Complex64]) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        if let Some(z) = starts.iter().find(|z| !(z.im > 0.0 && z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParameter(format!("start point {z} is not in the open upper half-plane")));
        }
        let points = starts
            .iter()
            .enumerate()
            .map(|(id, &w)| TrackedPoint { id, w, alive: true, swallowed_at: None })
            .collect();
        Ok(FlowState { time: 0.0, kappa, points })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowParams {
    pub dt: f64,
    pub horizon: f64,
    /// Driving increments are drawn at `dt·split` and Brownian-bridge split
    /// into `split` pieces. With a fixed coarse grid this couples runs at
    /// different `dt` to the same driving path.
    pub split: u32,
}

impl FlowParams {
    pub fn new(dt: f64, horizon: f64) -> Self {
        FlowParams { dt, horizon, split: 1 }
    }

    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if self.split == 0 {
            return Err(Error::InvalidParameter("split must be >= 1".into()));
        }
        Ok((self.horizon / self.dt + 1e-9).floor() as usize)
    }
}

/// Brownian increments over one coarse interval of length `span`, refined
/// by binary midpoint bridges on demand. Node `(j, i)` is the increment over
/// the `i`-th of `2^j` equal pieces. Each split draws one Gaussian from a
/// counter position fixed by `(coarse, j, i)`, so the path does not depend on
/// which resolution is requested first, and runs whose steps are dyadic
/// fractions of `span` see the same path.
struct BrownianTree {
    rng: RngSpec,
    seq: ChaCha8Rng,
    span: f64,
    coarse: u64,
    root: f64,
    memo: HashMap<(u32, u64), f64>,
}

impl BrownianTree {
    fn new(rng: RngSpec, span: f64) -> Self {
        BrownianTree { rng, seq: rng.driving(), span, coarse: 0, root: 0.0, memo: HashMap::new() }
    }

    /// Draws the next coarse increment.
    fn advance(&mut self, coarse: u64) {
        let z: f64 = self.seq.sample(StandardNormal);
        self.root = z * self.span.sqrt();
        self.coarse = coarse;
        self.memo.clear();
    }

    fn node(&mut self, j: u32, i: u64) -> f64 {
        if j == 0 {
            return self.root;
        }
        if let Some(&v) = self.memo.get(&(j, i)) {
            return v;
        }
        let parent = self.node(j - 1, i >> 1);
        let len = self.span / (1u64 << (j - 1)) as f64;
        let left = 0.5 * parent + 0.5 * len.sqrt() * self.split_normal(j, i >> 1);
        let right = parent - left;
        self.memo.insert((j, i & !1), left);
        self.memo.insert((j, i | 1), right);
        if i & 1 == 0 {
            left
        } else {
            right
        }
    }

    /// Box–Muller from exactly two words-pairs at a fixed counter position.
    fn split_normal(&self, j: u32, pair: u64) -> f64 {
        let mut r = self.rng.substream(j as u8, self.coarse);
        r.set_word_pos(r.get_word_pos() + 4 * pair as u128);
        let u1 = 1.0 - r.random::<f64>();
        let u2: f64 = r.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

enum Advance {
    Alive(Complex64),
    Swallowed { w: Complex64, at: f64 },
}

/// Steppable Loewner flow for a set of tracked points.
pub struct LoewnerFlow {
    state: FlowState,
    dt: f64,
    sqrt_kappa: f64,
    eps_swallow: f64,
    /// `log2(split)`.
    split_bits: u32,
    tree: BrownianTree,
    step: u64,
}

impl LoewnerFlow {
    /// `split` must be a power of two: steps are dyadic pieces of the
    /// coarse driving draws.
    pub fn new(state: FlowState, dt: f64, split: u32, rng: RngSpec) -> Result<Self> {
        FlowParams { dt, horizon: 0.0, split }.n_steps()?;
        if !split.is_power_of_two() || split > 1 << 6 {
            return Err(Error::InvalidParameter(format!("split must be a power of two <= 64, got {split}")));
        }
        let sqrt_kappa = state.kappa.sqrt();
        Ok(LoewnerFlow {
            state,
            dt,
            sqrt_kappa,
            eps_swallow: swallow_radius(dt),
            split_bits: split.trailing_zeros(),
            tree: BrownianTree::new(rng, dt * split as f64),
            step: 0,
        })
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn into_state(self) -> FlowState {
        self.state
    }

    /// Advances every alive point by one step of length `dt`.
    pub fn step(&mut self) {
        if self.step & ((1 << self.split_bits) - 1) == 0 {
            self.tree.advance(self.step >> self.split_bits);
        }
        let t0 = self.state.time;
        for i in 0..self.state.points.len() {
            if !self.state.points[i].alive {
                continue;
            }
            let w = self.state.points[i].w;
            match self.advance(w, t0, 0, 0) {
                Advance::Alive(next) => self.state.points[i].w = next,
                Advance::Swallowed { w, at } => {
                    let p = &mut self.state.points[i];
                    p.w = w;
                    p.alive = false;
                    p.swallowed_at = Some(at);
                }
            }
        }
        self.step += 1;
        self.state.time = self.step as f64 * self.dt;
    }

    /// Driving increment of piece `idx` of `4^level` within `step`, which
    /// must lie in the current coarse interval.
    fn piece(&mut self, step: u64, level: u32, idx: u64) -> f64 {
        let r = step & ((1 << self.split_bits) - 1);
        self.tree.node(self.split_bits + 2 * level, (r << (2 * level)) | idx)
    }

    fn advance(&mut self, w: Complex64, t0: f64, level: u32, idx: u64) -> Advance {
        let h = self.dt / 4f64.powi(level as i32);
        if level < MAX_REFINE && w.norm_sqr() < 100.0 * h {
            return self.refine(w, t0, level, idx);
        }
        let db = self.piece(self.step, level, idx);
        let next = w + 2.0 * h / w - self.sqrt_kappa * db;
        if next.im <= 0.0 {
            if level < MAX_REFINE {
                return self.refine(w, t0, level, idx);
            }
            return Advance::Swallowed { w, at: t0 + h };
        }
        if next.norm() < self.eps_swallow {
            return Advance::Swallowed { w: next, at: t0 + h };
        }
        Advance::Alive(next)
    }

    fn refine(&mut self, mut w: Complex64, mut t: f64, level: u32, idx: u64) -> Advance {
        let h = self.dt / 4f64.powi(level as i32 + 1);
        for c in 0..4 {
            match self.advance(w, t, level + 1, 4 * idx + c) {
                Advance::Alive(next) => w = next,
                swallowed => return swallowed,
            }
            t += h;
        }
        Advance::Alive(w)
    }
}

/// Swallowing radius: the substep criterion `|w|² < 100·h` at the finest
/// substep `h = dt/4^MAX_REFINE`.
pub fn swallow_radius(dt: f64) -> f64 {
    10.0 * (dt / 4f64.powi(MAX_REFINE as i32)).sqrt()
}

/// Euler–Maruyama trajectory of the tracked points, one snapshot per step
/// (the initial state included).
pub fn evolve_points(state: FlowState, params: &FlowParams, rng: RngSpec) -> Result<Vec<FlowState>> {
    let n = params.n_steps()?;
    if let Some(p) = state.points.iter().find(|p| !p.alive || p.w.im <= 0.0) {
        return Err(Error::InvalidParameter(format!("point {} is not alive in the upper half-plane", p.id)));
    }
    let mut flow = LoewnerFlow::new(state, params.dt, params.split, rng)?;
    let mut out = Vec::with_capacity(n + 1);
    out.push(flow.state().clone());
    for _ in 0..n {
        flow.step();
        out.push(flow.state().clone());
    }
    Ok(out)
}

/// Square root with non-negative imaginary part; on the real axis the sign
/// follows `side`.
fn sqrt_upper(z: Complex64, side: f64) -> Complex64 {
    let s = z.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re.signum() != side.signum() && s.re != 0.0) {
        -s
    } else {
        s
    }
}

/// Which side of a curve a point lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Tip positions of a chordal SLE at uniform capacity steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub kappa: f64,
    pub dt: f64,
    /// `√κ·ξ` at `t = 0, dt, …, n·dt`.
    pub driving: Vec<f64>,
    /// `z_t` at the same times; `samples[0] = 0`.
    pub samples: Vec<Complex64>,
}

/// Driving function `√κ·ξ` at `0, dt, …, n·dt`.
pub fn driving_function(kappa: f64, n_steps: usize, dt: f64, rng: RngSpec) -> Result<Vec<f64>> {
    FlowParams::new(dt, dt).n_steps()?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!("kappa must be >= 0, got {kappa}")));
    }
    let mut seq = rng.driving();
    let (sk, sd) = (kappa.sqrt(), dt.sqrt());
    let mut u = Vec::with_capacity(n_steps + 1);
    u.push(0.0);
    let mut acc = 0.0;
    for _ in 0..n_steps {
        acc += sk * sd * seq.sample::<f64, _>(StandardNormal);
        u.push(acc);
    }
    Ok(u)
}

/// Zipper trace: the driving function is held constant on each step, so the
/// step-`j` map removes a vertical slit of capacity `dt` at `U_j`. The tip at
/// step `k` is `φ_1⁻¹ ∘ … ∘ φ_k⁻¹(U_k)` with
/// `φ_j⁻¹(w) = U_j + √((w − U_j)² − 4dt)`. Cost is quadratic in `n_steps`.
pub fn generate_trace(kappa: f64, n_steps: usize, dt: f64, rng: RngSpec) -> Result<Trace> {
    let driving = driving_function(kappa, n_steps, dt, rng)?;
    let mut samples = Vec::with_capacity(n_steps + 1);
    samples.push(Complex64::new(0.0, 0.0));
    for k in 1..=n_steps {
        let mut z = Complex64::new(driving[k], 0.0);
        for j in (1..=k).rev() {
            let d = z - driving[j];
            z = driving[j] + sqrt_upper(d * d - 4.0 * dt, d.re);
        }
        samples.push(z);
    }
    Ok(Trace { kappa, dt, driving, samples })
}

/// Image `g_T(z) − U_T` of `target` under the same slit maps the zipper uses.
pub fn flow_image(driving: &[f64], dt: f64, target: Complex64) -> Complex64 {
    let mut x = target;
    for &u in &driving[1..] {
        let d = x - u;
        x = u + sqrt_upper(d * d + 4.0 * dt, d.re);
    }
    x - driving.last().copied().unwrap_or(0.0)
}

/// Side of the curve `target` lies on, read from the sign of
/// `Re(g_T(z) − U_T)`: left-side boundary maps left of the tip image.
pub fn side_by_flow(driving: &[f64], dt: f64, target: Complex64) -> Side {
    if flow_image(driving, dt, target).re > 0.0 {
        Side::Right
    } else {
        Side::Left
    }
}

impl Trace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.samples.len()).map(move |k| k as f64 * self.dt)
    }

    /// Side of the polyline `target` lies on: odd number of crossings of the
    /// horizontal ray from `target` toward `+∞` means left.
    pub fn side_of(&self, target: Complex64) -> Side {
        let y = target.im;
        let crossings = self
            .samples
            .windows(2)
            .filter(|seg| {
                let (p, q) = (seg[0], seg[1]);
                if (p.im > y) == (q.im > y) {
                    return false;
                }
                let x = p.re + (y - p.im) * (q.re - p.re) / (q.im - p.im);
                x > target.re
            })
            .count();
        if crossings % 2 == 1 {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// CSV with columns `t,re,im`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im\n");
        for (t, z) in self.times().zip(&self.samples) {
            out.push_str(&format!("{t:.16e},{:.16e},{:.16e}\n", z.re, z.im));
        }
        out
    }
}

/// Brownian motion on the algebra, Killing-normalized and restricted to the
/// orthogonal complement of a subalgebra.
#[derive(Debug, Clone)]
pub struct GroupNoise {
    algebra: SimpleAlgebra,
    basis: KillingBasis,
    generators: Vec<Vec<Rational>>,
    projection: Matrix,
    projection_f64: Vec<Vec<f64>>,
    gram_f64: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
    tau: f64,
}

impl GroupNoise {
    /// `generators` are vectors in the coordinates of
    /// [`SimpleAlgebra::killing_basis`]; they may be linearly dependent.
    pub fn new(algebra: SimpleAlgebra, generators: Vec<Vec<Rational>>, tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
        }
        let basis = algebra.killing_basis();
        let d = basis.dim();
        if let Some(g) = generators.iter().find(|g| g.len() != d) {
            return Err(Error::InvalidParameter(format!(
                "subalgebra generator has {} coordinates, {algebra} has dimension {d}",
                g.len()
            )));
        }
        let g = &basis.gram;
        // Gram–Schmidt in the invariant form, then P = I − Σ u (Gu)ᵀ / (uᵀGu).
        let mut ortho: Vec<(Vec<Rational>, Vec<Rational>, Rational)> = Vec::new();
        for v in &generators {
            let mut u = v.clone();
            for (b, gb, nb) in &ortho {
                let coef = gb.iter().zip(v).map(|(x, y)| x * y).sum::<Rational>() / nb;
                for (ui, bi) in u.iter_mut().zip(b) {
                    *ui -= &coef * bi;
                }
            }
            let gu: Vec<Rational> = (0..d).map(|i| (0..d).map(|j| &g[i][j] * &u[j]).sum()).collect();
            let norm: Rational = gu.iter().zip(&u).map(|(x, y)| x * y).sum();
            if norm != Rational::from_integer(0.into()) {
                ortho.push((u, gu, norm));
            }
        }
        let mut projection = exact::identity(d);
        for (u, gu, norm) in &ortho {
            for i in 0..d {
                for j in 0..d {
                    projection[i][j] -= &u[i] * &gu[j] / norm;
                }
            }
        }
        let to_f64 = |m: &Matrix| -> Vec<Vec<f64>> { m.iter().map(|r| r.iter().map(exact::to_f64).collect()).collect() };
        let gram_f64 = to_f64(g);
        let chol = cholesky(&gram_f64);
        Ok(GroupNoise {
            projection_f64: to_f64(&projection),
            projection,
            gram_f64,
            chol,
            algebra,
            basis,
            generators,
            tau,
        })
    }

    /// Subalgebra spanned by the Cartan coroots.
    pub fn cartan(algebra: SimpleAlgebra, tau: f64) -> Result<Self> {
        let d = algebra.dimension();
        let gens = (0..algebra.rank())
            .map(|i| (0..d).map(|j| exact::int((i == j) as i64)).collect())
            .collect();
        GroupNoise::new(algebra, gens, tau)
    }

    pub fn algebra(&self) -> &SimpleAlgebra {
        &self.algebra
    }

    pub fn basis(&self) -> &KillingBasis {
        &self.basis
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Exact projection onto the orthogonal complement of the subalgebra.
    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn gram_f64(&self) -> &[Vec<f64>] {
        &self.gram_f64
    }

    /// Unprojected increment with covariance `G·dt`.
    pub fn raw_increment<R: Rng>(&self, dt: f64, rng: &mut R) -> Vec<f64> {
        let d = self.chol.len();
        let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * dt.sqrt()).collect();
        (0..d).map(|i| (0..=i).map(|j| self.chol[i][j] * z[j]).sum()).collect()
    }

    /// Projected increment `dθ` (not yet scaled by `√τ`).
    pub fn increment<R: Rng>(&self, dt: f64, rng: &mut R) -> Vec<f64> {
        let xi = self.raw_increment(dt, rng);
        self.projection_f64
            .iter()
            .map(|row| row.iter().zip(&xi).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// `√τ·dθ`, the increment as it enters the field transformation.
    pub fn scaled_increment<R: Rng>(&self, dt: f64, rng: &mut R) -> Vec<f64> {
        let s = self.tau.sqrt();
        self.increment(dt, rng).into_iter().map(|x| s * x).collect()
    }

    /// Largest `|K(v, g)|` over the subalgebra generators `g`.
    pub fn orthogonality_defect(&self, v: &[f64]) -> f64 {
        self.generators
            .iter()
            .map(|g| {
                let g: Vec<f64> = g.iter().map(exact::to_f64).collect();
                let mut acc = 0.0;
                for i in 0..g.len() {
                    for j in 0..v.len() {
                        acc += g[i] * self.gram_f64[i][j] * v[j];
                    }
                }
                acc.abs()
            })
            .fold(0.0, f64::max)
    }

    /// Path `θ_t` (scaled by `√τ`) at `0, dt, …, n·dt`.
    pub fn walk(&self, n_steps: usize, dt: f64, rng: RngSpec) -> Result<Vec<Vec<f64>>> {
        check_dt(dt)?;
        let mut r = rng.driving();
        let mut theta = vec![0.0; self.basis.dim()];
        let mut out = vec![theta.clone()];
        for _ in 0..n_steps {
            for (t, x) in theta.iter_mut().zip(self.scaled_increment(dt, &mut r)) {
                *t += x;
            }
            out.push(theta.clone());
        }
        Ok(out)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")))
    }
}

/// Sample covariance of `n` projected increments (divided by `dt`) against
/// the expected `P G Pᵀ`, entrywise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub n: usize,
    pub expected: Vec<Vec<f64>>,
    pub sample: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
    /// Largest `|sample − expected| / se` over entries with `se > 0`.
    pub max_z: f64,
    /// Largest Killing pairing of any increment with a subalgebra generator.
    pub max_orthogonality_defect: f64,
}

pub fn covariance_check(gn: &GroupNoise, n: usize, dt: f64, rng: RngSpec) -> Result<CovarianceCheck> {
    check_dt(dt)?;
    let d = gn.basis.dim();
    let mut r = rng.driving();
    let mut sum = vec![vec![0.0; d]; d];
    let mut sq = vec![vec![0.0; d]; d];
    let mut defect: f64 = 0.0;
    for _ in 0..n {
        let v = gn.increment(dt, &mut r);
        defect = defect.max(gn.orthogonality_defect(&v));
        for i in 0..d {
            for j in 0..d {
                let x = v[i] * v[j] / dt;
                sum[i][j] += x;
                sq[i][j] += x * x;
            }
        }
    }
    let nf = n as f64;
    let p = &gn.projection_f64;
    let g = &gn.gram_f64;
    let mut expected = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            for a in 0..d {
                for b in 0..d {
                    expected[i][j] += p[i][a] * g[a][b] * p[j][b];
                }
            }
        }
    }
    let sample: Vec<Vec<f64>> = sum.iter().map(|r| r.iter().map(|x| x / nf).collect()).collect();
    let std_error: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| ((sq[i][j] / nf - sample[i][j].powi(2)).max(0.0) / nf).sqrt()).collect())
        .collect();
    let mut max_z: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            if std_error[i][j] > 0.0 {
                max_z = max_z.max((sample[i][j] - expected[i][j]).abs() / std_error[i][j]);
            }
        }
    }
    Ok(CovarianceCheck { n, expected, sample, std_error, max_z, max_orthogonality_defect: defect })
}

/// One projected increment from the start of `rng`'s stream.
pub fn group_noise_step(gn: &GroupNoise, dt: f64, rng: RngSpec) -> Result<Vec<f64>> {
    check_dt(dt)?;
    Ok(gn.increment(dt, &mut rng.driving()))
}

fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    #[test]
    fn deterministic_flow_matches_closed_form() {
        // κ = 0: dw = 2dt/w, so w_t² = w_0² + 4t.
        let w0 = Complex64::new(1.0, 1.0);
        let traj = evolve_points(FlowState::new(0.0, &[w0]).unwrap(), &FlowParams::new(1e-4, 1.0), RngSpec::new(1, 0)).unwrap();
        let w = traj.last().unwrap().points[0].w;
        assert!((w * w - (w0 * w0 + 4.0)).norm() < 1e-3, "{w}");
        // On the slit itself the point reaches the tip at t = |w0|²/4.
        let traj = evolve_points(FlowState::new(0.0, &[I]).unwrap(), &FlowParams::new(1e-4, 1.0), RngSpec::new(1, 0)).unwrap();
        let p = &traj.last().unwrap().points[0];
        assert!(!p.alive && (p.swallowed_at.unwrap() - 0.25).abs() < 1e-3, "{p:?}");
        let w0 = Complex64::new(0.3, 0.7);
        let traj = evolve_points(FlowState::new(0.0, &[w0]).unwrap(), &FlowParams::new(1e-4, 0.5), RngSpec::new(1, 0)).unwrap();
        let w = traj.last().unwrap().points[0].w;
        assert!((w * w - (w0 * w0 + 2.0)).norm() < 1e-3);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let state = FlowState::new(3.0, &[I, Complex64::new(1.0, 0.5)]).unwrap();
        let traj = evolve_points(state.clone(), &FlowParams::new(1e-3, 0.0), RngSpec::new(1, 0)).unwrap();
        assert_eq!(traj, vec![state]);
    }

    #[test]
    fn parameter_errors() {
        let state = FlowState::new(3.0, &[I]).unwrap();
        assert!(evolve_points(state.clone(), &FlowParams::new(0.0, 1.0), RngSpec::new(1, 0)).is_err());
        assert!(evolve_points(state, &FlowParams::new(-1e-3, 1.0), RngSpec::new(1, 0)).is_err());
        assert!(FlowState::new(3.0, &[Complex64::new(1.0, 0.0)]).is_err());
        assert!(FlowState::new(-1.0, &[I]).is_err());
    }

    #[test]
    fn identical_rng_identical_trajectory() {
        let state = FlowState::new(6.0, &[I, Complex64::new(-0.5, 0.2), Complex64::new(0.1, 1e-3)]).unwrap();
        let p = FlowParams::new(1e-3, 0.3);
        let a = evolve_points(state.clone(), &p, RngSpec::new(42, 7)).unwrap();
        let b = evolve_points(state.clone(), &p, RngSpec::new(42, 7)).unwrap();
        assert_eq!(a, b);
        let c = evolve_points(state, &p, RngSpec::new(42, 8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn alive_points_stay_in_upper_half_plane() {
        let starts: Vec<Complex64> = (0..20).map(|k| Complex64::new(-1.0 + 0.1 * k as f64, 1e-3 + 0.01 * k as f64)).collect();
        for seed in 0..5 {
            let traj = evolve_points(FlowState::new(6.0, &starts).unwrap(), &FlowParams::new(1e-3, 1.0), RngSpec::new(seed, 0)).unwrap();
            for s in &traj {
                for p in &s.points {
                    assert!(p.w.im > 0.0, "{:?}", p);
                    if !p.alive {
                        assert!(p.swallowed_at.unwrap() <= s.time + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn swallowed_points_are_frozen() {
        let state = FlowState::new(6.0, &[Complex64::new(0.05, 1e-6)]).unwrap();
        let traj = evolve_points(state, &FlowParams::new(1e-3, 2.0), RngSpec::new(3, 0)).unwrap();
        let first_dead = traj.iter().position(|s| !s.points[0].alive).expect("swallowed");
        let frozen = &traj[first_dead].points[0];
        for s in &traj[first_dead..] {
            assert_eq!(&s.points[0], frozen);
        }
    }

    #[test]
    fn near_boundary_points_get_swallowed_for_kappa_above_4() {
        // For a real start x, w/√κ is a Bessel process of dimension 1 + 4/κ,
        // which hits 0 at T = x²/(2κG) with G ~ Gamma(1/2 − 2/κ, 1).
        let (kappa, x, horizon, n) = (6.0, 0.5, 3.0, 400);
        let mut dead = 0;
        for stream in 0..n {
            let traj = evolve_points(
                FlowState::new(kappa, &[Complex64::new(x, 1e-6)]).unwrap(),
                &FlowParams::new(1e-3, horizon),
                RngSpec::new(11, stream),
            )
            .unwrap();
            dead += !traj.last().unwrap().points[0].alive as usize;
        }
        let frac = dead as f64 / n as f64;
        let exact = statrs::function::gamma::gamma_ur(0.5 - 2.0 / kappa, x * x / (2.0 * kappa * horizon));
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((frac - exact).abs() < 4.0 * se, "{frac} vs {exact}");
    }

    #[test]
    fn refinement_triggers_near_origin() {
        // A point closer than 10√dt gets substepped instead of swallowed.
        let dt = 1e-3;
        let start = Complex64::new(0.05, 0.05);
        assert!(start.norm_sqr() < 100.0 * dt);
        assert!(start.norm() > swallow_radius(dt));
        let traj = evolve_points(FlowState::new(0.0, &[start]).unwrap(), &FlowParams::new(dt, 0.01), RngSpec::new(1, 0)).unwrap();
        let w = traj.last().unwrap().points[0].w;
        // exact: w² = w0² + 4t
        assert!((w * w - (start * start + 0.04)).norm() < 1e-3, "{w}");
    }

    #[test]
    fn tree_nodes_sum_to_parents() {
        let mut t = BrownianTree::new(RngSpec::new(5, 1), 0.01);
        t.advance(3);
        let deep = t.node(6, 41);
        for j in 1..12u32 {
            for i in [0u64, 1, 5, (1 << j) - 1] {
                let i = i.min((1 << j) - 1);
                let (l, r) = (t.node(j, i & !1), t.node(j, i | 1));
                assert!((l + r - t.node(j - 1, i >> 1)).abs() < 1e-15);
            }
        }
        // Order of requests does not matter.
        let mut u = BrownianTree::new(RngSpec::new(5, 1), 0.01);
        u.advance(3);
        u.node(11, 2000);
        assert_eq!(u.node(6, 41), deep);
    }

    #[test]
    fn tree_pieces_have_brownian_variance() {
        let mut t = BrownianTree::new(RngSpec::new(2, 0), 1.0);
        let (mut sq, mut cross, n) = (0.0, 0.0, 20_000);
        for k in 0..n {
            t.advance(k);
            let (a, b) = (t.node(3, 2), t.node(3, 3));
            sq += a * a;
            cross += a * b;
        }
        assert!((sq / n as f64 - 0.125).abs() < 0.006, "{}", sq / n as f64);
        assert!((cross / n as f64).abs() < 0.006);
    }

    #[test]
    fn halved_step_sees_same_path() {
        // Two steps of dt/2 with split 2 share every driving increment with
        // one step of dt, down through the refinement levels.
        let rng = RngSpec::new(7, 0);
        let start = [Complex64::new(0.2, 0.03)];
        let mut coarse = LoewnerFlow::new(FlowState::new(2.0, &start).unwrap(), 2e-3, 1, rng).unwrap();
        let mut fine = LoewnerFlow::new(FlowState::new(2.0, &start).unwrap(), 1e-3, 2, rng).unwrap();
        for k in 0..20 {
            coarse.step();
            fine.step();
            fine.step();
            let c = coarse.piece(k, 0, 0);
            assert!((c - fine.piece(2 * k, 0, 0) - fine.piece(2 * k + 1, 0, 0)).abs() < 1e-15);
            // quarter pieces of the coarse step are half pieces of the fine ones
            let q2 = coarse.piece(k, 1, 2);
            assert!((q2 - fine.piece(2 * k + 1, 1, 0) - fine.piece(2 * k + 1, 1, 1)).abs() < 1e-15);
            let q3 = coarse.piece(k, 1, 3);
            assert!((q2 + q3 - fine.piece(2 * k + 1, 0, 0)).abs() < 1e-15);
        }
        assert!(LoewnerFlow::new(FlowState::new(2.0, &start).unwrap(), 1e-3, 3, rng).is_err());
    }

    #[test]
    fn zero_kappa_trace_is_vertical_slit() {
        let n = 200;
        let dt = 0.01;
        let tr = generate_trace(0.0, n, dt, RngSpec::new(1, 0)).unwrap();
        assert_eq!(tr.samples[0], Complex64::zero());
        for (k, z) in tr.samples.iter().enumerate() {
            let expect = 2.0 * (k as f64 * dt).sqrt();
            assert!(z.re.abs() < 1e-9 && (z.im - expect).abs() < 1e-9, "{k} {z}");
        }
        let tiny = generate_trace(1e-8, n, dt, RngSpec::new(1, 0)).unwrap();
        let dev = tiny.samples.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
    }

    #[test]
    fn trace_samples_in_closed_upper_half_plane() {
        for kappa in [2.0, 4.0, 6.0] {
            let tr = generate_trace(kappa, 300, 1e-3, RngSpec::new(2, 0)).unwrap();
            assert!(tr.samples.iter().all(|z| z.im >= 0.0 && z.re.is_finite()));
        }
    }

    #[test]
    fn trace_csv_round_trips() {
        let tr = generate_trace(3.0, 20, 1e-2, RngSpec::new(4, 0)).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,re,im"));
        for (line, z) in lines.zip(&tr.samples) {
            let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_eq!(f[1], z.re);
            assert_eq!(f[2], z.im);
        }
    }

    #[test]
    fn slit_sides() {
        let tr = generate_trace(0.0, 100, 0.01, RngSpec::new(1, 0)).unwrap();
        assert_eq!(tr.side_of(Complex64::new(0.5, 1.0)), Side::Right);
        assert_eq!(tr.side_of(Complex64::new(-0.5, 1.0)), Side::Left);
        assert_eq!(side_by_flow(&tr.driving, tr.dt, Complex64::new(0.5, 1.0)), Side::Right);
        assert_eq!(side_by_flow(&tr.driving, tr.dt, Complex64::new(-0.5, 1.0)), Side::Left);
    }

    #[test]
    fn flow_and_polyline_classifiers_agree() {
        // The polyline classifier is only as good as its chords: it misreads
        // targets near the trace, and targets sealed in fjords whose necks are
        // narrower than a chord. Compare on exposed targets only.
        let target = Complex64::new(0.2, 0.5);
        let (mut clear, mut agree) = (0, 0);
        for stream in 0..200 {
            let tr = generate_trace(8.0 / 3.0, 1500, 2e-3, RngSpec::new(17, stream)).unwrap();
            let dist = tr.samples.iter().map(|z| (z - target).norm()).fold(f64::INFINITY, f64::min);
            let img = flow_image(&tr.driving, tr.dt, target);
            if dist > 0.05 && img.im > 1e-3 * img.norm() {
                clear += 1;
                agree += (tr.side_of(target) == side_by_flow(&tr.driving, tr.dt, target)) as usize;
            }
        }
        assert!(clear > 100, "{clear}");
        assert_eq!(agree, clear, "{agree}/{clear}");
    }

    #[test]
    fn flow_image_tracks_point_flow() {
        // The slit-map composition and the Euler flow integrate the same
        // Loewner equation on a shared driving path.
        let dt = 1e-4;
        let n = 5000;
        let rng = RngSpec::new(8, 2);
        let target = Complex64::new(0.3, 1.0);
        let u = driving_function(3.0, n, dt, rng).unwrap();
        let via_maps = flow_image(&u, dt, target);
        let traj = evolve_points(FlowState::new(3.0, &[target]).unwrap(), &FlowParams::new(dt, n as f64 * dt), rng).unwrap();
        let via_euler = traj.last().unwrap().points[0].w;
        assert!((via_maps - via_euler).norm() < 0.05, "{via_maps} vs {via_euler}");
    }

    #[test]
    fn mean_horizontal_displacement_grows_with_kappa() {
        let mean_dev = |kappa: f64| {
            (0..100)
                .map(|s| generate_trace(kappa, 200, 5e-3, RngSpec::new(23, s)).unwrap().samples.last().unwrap().re.abs())
                .sum::<f64>()
                / 100.0
        };
        assert!(mean_dev(6.0) > mean_dev(3.0));
    }

    #[test]
    fn brownian_scaling_of_driving_marginals() {
        // U at (4dt, n) vs 2·U at (dt, n): same law. Two-sample KS at α = 0.001.
        let n = 64;
        let m = 2000;
        let mut a: Vec<f64> = (0..m).map(|s| *driving_function(1.0, n, 4e-3, RngSpec::new(1, s)).unwrap().last().unwrap()).collect();
        let mut b: Vec<f64> =
            (0..m).map(|s| 2.0 * driving_function(1.0, n, 1e-3, RngSpec::new(2, s)).unwrap().last().unwrap()).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < m as usize && j < m as usize {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / m as f64 - j as f64 / m as f64).abs());
        }
        let crit = 1.95 * (2.0 / m as f64).sqrt();
        assert!(d < crit, "KS {d} >= {crit}");
    }

    #[test]
    fn whole_algebra_subalgebra_kills_noise() {
        let a1 = SimpleAlgebra::a(1);
        let gens = (0..3).map(|i| (0..3).map(|j| exact::int((i == j) as i64)).collect()).collect();
        let gn = GroupNoise::new(a1, gens, 1.0).unwrap();
        let mut rng = RngSpec::new(1, 0).driving();
        for _ in 0..100 {
            assert!(gn.increment(0.01, &mut rng).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn projection_is_exact_idempotent_and_self_adjoint() {
        for name in ["A1", "A2", "B2", "G2"] {
            let alg: SimpleAlgebra = name.parse().unwrap();
            let d = alg.dimension();
            // Cartan plus one skew generator mixing two coordinates.
            let mut gens: Vec<Vec<Rational>> =
                (0..alg.rank()).map(|i| (0..d).map(|j| exact::int((i == j) as i64)).collect()).collect();
            let mut extra = vec![Rational::zero(); d];
            extra[d - 1] = exact::int(1);
            extra[d - 2] = exact::q(1, 3);
            gens.push(extra);
            let gn = GroupNoise::new(alg, gens, 0.5).unwrap();
            let p = gn.projection();
            assert_eq!(&exact::mat_mul(p, p), p, "{name}");
            let gp = exact::mat_mul(&gn.basis().gram, p);
            assert_eq!(gp, exact::transpose(&gp), "{name}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let gens = vec![vec![exact::int(1), exact::int(0)]];
        assert!(GroupNoise::new(SimpleAlgebra::a(1), gens, 1.0).is_err());
        let gn = GroupNoise::cartan(SimpleAlgebra::a(1), 1.0).unwrap();
        assert!(group_noise_step(&gn, 0.0, RngSpec::new(1, 0)).is_err());
    }

    #[test]
    fn unprojected_covariance_is_killing_gram() {
        let gn = GroupNoise::new(SimpleAlgebra::a(1), vec![], 1.0).unwrap();
        let c = covariance_check(&gn, 20_000, 1e-2, RngSpec::new(8, 0)).unwrap();
        assert_eq!(c.expected, gn.gram_f64().to_vec());
        assert!(c.max_z < 5.0, "{c:?}");
        let gn = GroupNoise::new("B2".parse().unwrap(), vec![], 1.0).unwrap();
        assert!(covariance_check(&gn, 20_000, 1e-2, RngSpec::new(8, 1)).unwrap().max_z < 5.0);
    }

    #[test]
    fn cartan_component_vanishes_exactly() {
        let gn = GroupNoise::cartan(SimpleAlgebra::a(1), 2.0).unwrap();
        let mut rng = RngSpec::new(4, 0).driving();
        for _ in 0..1000 {
            let v = gn.increment(1e-2, &mut rng);
            assert_eq!(v[0], 0.0);
            assert_eq!(gn.orthogonality_defect(&v), 0.0);
        }
        let path = gn.walk(10, 0.1, RngSpec::new(1, 0)).unwrap();
        assert_eq!(path.len(), 11);
        assert!(path.iter().all(|th| th[0] == 0.0));
    }
}
