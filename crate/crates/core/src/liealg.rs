//! Simple Lie algebras (and `u(1)`) from Cartan data, in exact arithmetic.
//!
//! Conventions: the Cartan matrix is stored row-wise so that row `i` holds the
//! Dynkin labels of the simple root `α_i`, i.e. `A_ij = 2(α_i, α_j)/(α_j, α_j)`.
//! The invariant form is normalized so that long roots have squared length 2.
//! For `u(1)` the form on charges is `(l, l') = l·l'/2`.
//!
//! Roots are enumerated from the Cartan matrix by closure under addition of
//! simple roots (root strings); no per-kind tables beyond the Cartan data.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Matrix, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    U1,
}

/// A weight in the Dynkin (fundamental-weight) basis. For `u(1)` the single
/// label is the charge.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Weight {
    pub labels: Vec<Rational>,
}

impl Weight {
    pub fn new(labels: Vec<Rational>) -> Self {
        Weight { labels }
    }

    pub fn from_ints(labels: &[i64]) -> Self {
        Weight { labels: labels.iter().map(|&l| exact::int(l)).collect() }
    }

    pub fn zero(rank: usize) -> Self {
        Weight { labels: vec![Rational::zero(); rank] }
    }

    pub fn rank(&self) -> usize {
        self.labels.len()
    }

    pub fn is_dominant_integral(&self) -> bool {
        self.labels.iter().all(|l| l.is_integer() && l >= &Rational::zero())
    }

    pub fn scaled(&self, s: &Rational) -> Weight {
        Weight { labels: self.labels.iter().map(|l| l * s).collect() }
    }
}

impl std::ops::Add<&Weight> for &Weight {
    type Output = Weight;
    fn add(self, rhs: &Weight) -> Weight {
        Weight { labels: self.labels.iter().zip(&rhs.labels).map(|(a, b)| a + b).collect() }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A simple Lie algebra, or `u(1)`, with all derived data precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleAlgebra {
    kind: Kind,
    rank: usize,
    cartan: Vec<Vec<i64>>,
    /// Squared lengths `(α_i, α_i)` of the simple roots.
    root_lengths: Vec<Rational>,
    /// `(ω_i, ω_j)`.
    quad_form: Matrix,
    /// Positive roots in simple-root coordinates, ordered by height.
    positive_roots: Vec<Vec<i64>>,
    dual_coxeter: u32,
}

impl SimpleAlgebra {
    pub fn new(kind: Kind, rank: usize) -> Result<Self> {
        let ok = match kind {
            Kind::A => rank >= 1,
            Kind::B | Kind::C => rank >= 2,
            Kind::D => rank >= 3,
            Kind::E => (6..=8).contains(&rank),
            Kind::F => rank == 4,
            Kind::G => rank == 2,
            Kind::U1 => rank == 1,
        };
        if !ok {
            return Err(Error::InvalidAlgebra(format!("{} has no rank {rank}", kind_letter(kind))));
        }
        if kind == Kind::U1 {
            return Ok(SimpleAlgebra {
                kind,
                rank: 1,
                cartan: Vec::new(),
                root_lengths: Vec::new(),
                quad_form: vec![vec![exact::q(1, 2)]],
                positive_roots: Vec::new(),
                dual_coxeter: 0,
            });
        }
        let cartan = cartan_matrix(kind, rank);
        let root_lengths = symmetrizer(&cartan);
        let a: Matrix = cartan.iter().map(|r| r.iter().map(|&x| exact::int(x)).collect()).collect();
        let inv = exact::inverse(&a).expect("Cartan matrices are nonsingular");
        let quad_form = (0..rank)
            .map(|i| (0..rank).map(|j| &inv[i][j] * &root_lengths[j] / exact::int(2)).collect())
            .collect();
        let positive_roots = enumerate_positive_roots(&cartan);
        // Highest root = unique root of maximal height; comarks a_i·|α_i|²/2.
        let theta = positive_roots.last().expect("nonempty root system");
        let comarks = theta
            .iter()
            .zip(&root_lengths)
            .fold(Rational::zero(), |acc, (&c, len)| acc + exact::int(c) * len / exact::int(2));
        let dual = Rational::one() + comarks;
        debug_assert!(dual.is_integer());
        let dual_coxeter = exact::to_f64(&dual) as u32;
        Ok(SimpleAlgebra {
            kind,
            rank,
            cartan,
            root_lengths,
            quad_form,
            positive_roots,
            dual_coxeter,
        })
    }

    pub fn u1() -> Self {
        SimpleAlgebra::new(Kind::U1, 1).expect("u1")
    }

    pub fn a(rank: usize) -> Self {
        SimpleAlgebra::new(Kind::A, rank).expect("A_n with n >= 1")
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_abelian(&self) -> bool {
        self.kind == Kind::U1
    }

    /// `None` for `u(1)`.
    pub fn cartan_matrix(&self) -> Option<&[Vec<i64>]> {
        (!self.is_abelian()).then_some(self.cartan.as_slice())
    }

    pub fn simple_root_lengths(&self) -> &[Rational] {
        &self.root_lengths
    }

    /// Matrix of `(ω_i, ω_j)`.
    pub fn quadratic_form(&self) -> &Matrix {
        &self.quad_form
    }

    pub fn positive_roots(&self) -> &[Vec<i64>] {
        &self.positive_roots
    }

    pub fn check(&self, w: &Weight) -> Result<()> {
        if w.rank() != self.rank {
            return Err(Error::InvalidWeight(format!(
                "{w} has {} labels, {self} has rank {}",
                w.rank(),
                self.rank
            )));
        }
        Ok(())
    }

    pub fn inner_product(&self, w1: &Weight, w2: &Weight) -> Result<Rational> {
        self.check(w1)?;
        self.check(w2)?;
        Ok(exact::bilinear(&self.quad_form, &w1.labels, &w2.labels))
    }

    /// ρ: all Dynkin labels 1; the zero weight for `u(1)`.
    pub fn weyl_vector(&self) -> Weight {
        if self.is_abelian() {
            Weight::zero(1)
        } else {
            Weight::new(vec![Rational::one(); self.rank])
        }
    }

    /// Quadratic Casimir eigenvalue `(μ, μ + 2ρ)`.
    pub fn casimir(&self, mu: &Weight) -> Result<Rational> {
        let two_rho = self.weyl_vector().scaled(&exact::int(2));
        self.check(mu)?;
        self.inner_product(mu, &(mu + &two_rho))
    }

    pub fn dual_coxeter(&self) -> u32 {
        self.dual_coxeter
    }

    pub fn dimension(&self) -> usize {
        self.rank + 2 * self.positive_roots.len()
    }

    /// Dynkin labels of a root given in simple-root coordinates.
    pub fn root_to_weight(&self, root: &[i64]) -> Weight {
        let labels = (0..self.rank)
            .map(|j| exact::int(root.iter().enumerate().map(|(i, &c)| c * self.cartan[i][j]).sum()))
            .collect();
        Weight::new(labels)
    }

    /// Highest root θ as a weight; `None` for `u(1)`.
    pub fn highest_root(&self) -> Option<Weight> {
        self.positive_roots.last().map(|r| self.root_to_weight(r))
    }

    /// Squared length of a root given in simple-root coordinates.
    pub fn root_length(&self, root: &[i64]) -> Rational {
        let w = self.root_to_weight(root);
        exact::bilinear(&self.quad_form, &w.labels, &w.labels)
    }

    /// Basis and Gram matrix of the invariant form on the (compact real form
    /// of the) algebra, in the same normalization as [`Self::inner_product`].
    pub fn killing_basis(&self) -> KillingBasis {
        if self.is_abelian() {
            return KillingBasis { labels: vec!["H".into()], gram: vec![vec![exact::int(2)]] };
        }
        let r = self.rank;
        let d = self.dimension();
        let mut gram = vec![vec![Rational::zero(); d]; d];
        let mut labels = Vec::with_capacity(d);
        // Coroots: (α_i^∨, α_j^∨) = 2 A_ij / |α_i|².
        for i in 0..r {
            labels.push(format!("H{}", i + 1));
            for j in 0..r {
                gram[i][j] = exact::int(2 * self.cartan[i][j]) / &self.root_lengths[i];
            }
        }
        // X_α = E_α + E_{-α}, Y_α = i(E_α - E_{-α}): mutually orthogonal, norm 4/|α|².
        for (k, root) in self.positive_roots.iter().enumerate() {
            let norm = exact::int(4) / self.root_length(root);
            let tag: Vec<String> = root.iter().map(i64::to_string).collect();
            let tag = tag.join("");
            for (off, prefix) in [(0, "X"), (1, "Y")] {
                let idx = r + 2 * k + off;
                labels.push(format!("{prefix}{tag}"));
                gram[idx][idx] = norm.clone();
            }
        }
        KillingBasis { labels, gram }
    }
}

/// Real basis of an algebra with its exact Gram matrix: Cartan coroots first,
/// then one `(X_α, Y_α)` pair per positive root.
#[derive(Debug, Clone, PartialEq)]
pub struct KillingBasis {
    pub labels: Vec<String>,
    pub gram: Matrix,
}

impl KillingBasis {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }
}

impl fmt::Display for SimpleAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::U1 => write!(f, "u1"),
            k => write!(f, "{}{}", kind_letter(k), self.rank),
        }
    }
}

impl FromStr for SimpleAlgebra {
    type Err = Error;

    /// Parses names like `A1`, `D4`, `E8`, `u1` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("u1") {
            return Ok(SimpleAlgebra::u1());
        }
        let bad = || Error::InvalidAlgebra(format!("unknown algebra name {s:?}"));
        let mut chars = t.chars();
        let kind = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('A') => Kind::A,
            Some('B') => Kind::B,
            Some('C') => Kind::C,
            Some('D') => Kind::D,
            Some('E') => Kind::E,
            Some('F') => Kind::F,
            Some('G') => Kind::G,
            _ => return Err(bad()),
        };
        let rank: usize = chars.as_str().parse().map_err(|_| bad())?;
        SimpleAlgebra::new(kind, rank)
    }
}

impl Serialize for SimpleAlgebra {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SimpleAlgebra {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn kind_letter(k: Kind) -> &'static str {
    match k {
        Kind::A => "A",
        Kind::B => "B",
        Kind::C => "C",
        Kind::D => "D",
        Kind::E => "E",
        Kind::F => "F",
        Kind::G => "G",
        Kind::U1 => "u",
    }
}

fn cartan_matrix(kind: Kind, n: usize) -> Vec<Vec<i64>> {
    let mut a = vec![vec![0i64; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 2;
    }
    let mut link = |i: usize, j: usize| {
        a[i][j] = -1;
        a[j][i] = -1;
    };
    match kind {
        Kind::A | Kind::B | Kind::C => (0..n - 1).for_each(|i| link(i, i + 1)),
        Kind::D => {
            (0..n - 2).for_each(|i| link(i, i + 1));
            link(n - 3, n - 1);
        }
        // Bourbaki numbering: 1-3-4-5-..., node 2 attached to 4.
        Kind::E => {
            link(0, 2);
            link(1, 3);
            (2..n - 1).for_each(|i| link(i, i + 1));
        }
        Kind::F => (0..3).for_each(|i| link(i, i + 1)),
        Kind::G => link(0, 1),
        Kind::U1 => unreachable!(),
    }
    match kind {
        // α_n short.
        Kind::B => a[n - 2][n - 1] = -2,
        // α_n long.
        Kind::C => a[n - 1][n - 2] = -2,
        // α_1, α_2 long; α_3, α_4 short.
        Kind::F => a[1][2] = -2,
        // α_1 short, α_2 long.
        Kind::G => a[1][0] = -3,
        _ => {}
    }
    a
}

/// Squared simple-root lengths from `A_ij |α_j|² = A_ji |α_i|²`, scaled so the
/// longest is 2.
fn symmetrizer(cartan: &[Vec<i64>]) -> Vec<Rational> {
    let n = cartan.len();
    let mut len: Vec<Option<Rational>> = vec![None; n];
    len[0] = Some(Rational::one());
    let mut stack = vec![0usize];
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if i != j && cartan[i][j] != 0 && len[j].is_none() {
                let li = len[i].clone().unwrap();
                len[j] = Some(li * exact::int(cartan[j][i]) / exact::int(cartan[i][j]));
                stack.push(j);
            }
        }
    }
    let len: Vec<Rational> = len.into_iter().map(|l| l.expect("connected Dynkin diagram")).collect();
    let max = len.iter().max().unwrap().clone();
    len.into_iter().map(|l| l * exact::int(2) / &max).collect()
}

/// Positive roots (simple-root coordinates) sorted by height, built layer by
/// layer with the root-string rule `p = q - <β, α_j^∨>`.
fn enumerate_positive_roots(cartan: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = cartan.len();
    let mut all: Vec<Vec<i64>> = Vec::new();
    let mut seen: HashSet<Vec<i64>> = HashSet::new();
    let mut layer: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            let mut e = vec![0; n];
            e[i] = 1;
            e
        })
        .collect();
    while !layer.is_empty() {
        for r in &layer {
            seen.insert(r.clone());
        }
        all.extend(layer.iter().cloned());
        let mut next: Vec<Vec<i64>> = Vec::new();
        for beta in &layer {
            for j in 0..n {
                let pairing: i64 = (0..n).map(|i| beta[i] * cartan[i][j]).sum();
                let mut q = 0;
                let mut down = beta.clone();
                loop {
                    down[j] -= 1;
                    if seen.contains(&down) {
                        q += 1;
                    } else {
                        break;
                    }
                }
                if q - pairing > 0 {
                    let mut up = beta.clone();
                    up[j] += 1;
                    if !next.contains(&up) {
                        next.push(up);
                    }
                }
            }
        }
        next.sort();
        layer = next;
    }
    all
}
