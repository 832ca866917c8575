//! Coset specifications `G/A` and their CFT data.
//!
//! Central charge and conformal weights follow the difference formulas
//!
//! ```text
//! c = Σ_i k_i dim g_i / (k_i + h∨_i)  −  K dim a / (K + h∨_a)
//! h = Σ_i C(μ_i) / (2(k_i + h∨_i))    −  C(ν) / (2(K + h∨_a))
//! ```
//!
//! with denominator level `K = Σ_i x_e,i k_i`. Conformal weights are the raw
//! formula values; field identification and branching only fix them modulo
//! integers, so [`HConvention::Shifted`] offers the `[0, 1)` representative.

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Rational};
use crate::liealg::{SimpleAlgebra, Weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `su(2)_N / u(1)`: the Z_N parafermions.
    Parafermion,
    /// `su(2)_N ⊕ su(2)_1 / su(2)_{N+1}`: unitary minimal models.
    Minimal,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "parafermion" => Ok(Family::Parafermion),
            "minimal" => Ok(Family::Minimal),
            other => Err(Error::InvalidCoset(format!("unknown family {other:?}"))),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Parafermion => "parafermion",
            Family::Minimal => "minimal",
        })
    }
}

/// Which representative of `h mod 1` feeds the martingale relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HConvention {
    /// The formula value, possibly negative.
    #[default]
    Raw,
    /// The representative in `[0, 1)`.
    Shifted,
}

impl std::str::FromStr for HConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(HConvention::Raw),
            "shifted" => Ok(HConvention::Shifted),
            other => Err(Error::Parse(format!("unknown h convention {other:?}"))),
        }
    }
}

impl fmt::Display for HConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HConvention::Raw => "raw",
            HConvention::Shifted => "shifted",
        })
    }
}

/// One numerator factor `g_i` at level `k_i`, embedded with index `x_e,i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub algebra: SimpleAlgebra,
    pub level: Rational,
    pub embedding_index: Rational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosetSpec {
    numerator: Vec<Factor>,
    denominator: SimpleAlgebra,
    family: Option<(Family, u32)>,
}

/// A coset primary `(μ, ν)`; `mu` has one weight per numerator factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrimaryLabel {
    pub mu: Vec<Weight>,
    pub nu: Weight,
}

impl PrimaryLabel {
    pub fn new(mu: Vec<Weight>, nu: Weight) -> Self {
        PrimaryLabel { mu, nu }
    }

    /// Parafermion label `(k, l)`.
    pub fn parafermion(k: i64, l: i64) -> Self {
        PrimaryLabel { mu: vec![Weight::from_ints(&[k])], nu: Weight::from_ints(&[l]) }
    }

    /// Minimal-model label `(n1, n2; m)`.
    pub fn minimal(n1: i64, n2: i64, m: i64) -> Self {
        PrimaryLabel {
            mu: vec![Weight::from_ints(&[n1]), Weight::from_ints(&[n2])],
            nu: Weight::from_ints(&[m]),
        }
    }

    pub fn mu_labels(&self) -> Vec<Rational> {
        self.mu.iter().flat_map(|w| w.labels.iter().cloned()).collect()
    }

    fn ints(&self) -> Option<Vec<i64>> {
        let mut out = Vec::new();
        for l in self.mu_labels().iter().chain(&self.nu.labels) {
            if !l.is_integer() {
                return None;
            }
            out.push(exact::to_f64(l) as i64);
        }
        Some(out)
    }
}

impl fmt::Display for PrimaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mu: Vec<String> = self.mu_labels().iter().map(|l| l.to_string()).collect();
        let nu: Vec<String> = self.nu.labels.iter().map(|l| l.to_string()).collect();
        let sep = if mu.len() == 1 { "," } else { ";" };
        write!(f, "({}{sep}{})", mu.join(","), nu.join(","))
    }
}

/// The six numbers the martingale relations consume, bypassing the algebra.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCosetData {
    #[serde(with = "exact::serde_rational")]
    pub h: Rational,
    #[serde(with = "exact::serde_rational")]
    pub c: Rational,
    #[serde(rename = "C_mu", with = "exact::serde_rational")]
    pub c_mu: Rational,
    #[serde(rename = "C_nu", with = "exact::serde_rational")]
    pub c_nu: Rational,
    #[serde(with = "exact::serde_rational")]
    pub k_dim_g: Rational,
    #[serde(with = "exact::serde_rational")]
    pub xe_k_dim_a: Rational,
}

impl RawCosetData {
    pub fn zero() -> Self {
        RawCosetData {
            h: Rational::zero(),
            c: Rational::zero(),
            c_mu: Rational::zero(),
            c_nu: Rational::zero(),
            k_dim_g: Rational::zero(),
            xe_k_dim_a: Rational::zero(),
        }
    }

    /// Sets a field by its external name (`h`, `c`, `C_mu`, `C_nu`,
    /// `k_dim_g`, `xe_k_dim_a`).
    pub fn set(&mut self, key: &str, value: Rational) -> Result<()> {
        let slot = match key {
            "h" => &mut self.h,
            "c" => &mut self.c,
            "C_mu" => &mut self.c_mu,
            "C_nu" => &mut self.c_nu,
            "k_dim_g" => &mut self.k_dim_g,
            "xe_k_dim_a" => &mut self.xe_k_dim_a,
            _ => return Err(Error::Parse(format!("unknown raw coset field {key:?}"))),
        };
        *slot = value;
        Ok(())
    }
}

/// Contents of a coset config file: a built-in family or raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CosetConfig {
    Family {
        family: Family,
        #[serde(rename = "N")]
        n: u32,
    },
    Raw(RawCosetData),
}

impl CosetConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("coset config: {e}")))
    }
}

impl CosetSpec {
    pub fn new(numerator: Vec<Factor>, denominator: SimpleAlgebra) -> Result<Self> {
        if numerator.is_empty() {
            return Err(Error::InvalidCoset("numerator has no factors".into()));
        }
        for f in &numerator {
            if !f.level.is_positive() {
                return Err(Error::InvalidCoset(format!("level {} of {} is not positive", f.level, f.algebra)));
            }
            if !f.embedding_index.is_positive() {
                return Err(Error::InvalidCoset(format!(
                    "embedding index {} of {} is not positive",
                    f.embedding_index, f.algebra
                )));
            }
        }
        Ok(CosetSpec { numerator, denominator, family: None })
    }

    pub fn numerator(&self) -> &[Factor] {
        &self.numerator
    }

    pub fn denominator(&self) -> &SimpleAlgebra {
        &self.denominator
    }

    pub fn family(&self) -> Option<(Family, u32)> {
        self.family
    }

    /// `K = Σ_i x_e,i k_i`.
    pub fn denominator_level(&self) -> Rational {
        self.numerator.iter().map(|f| &f.embedding_index * &f.level).sum()
    }

    /// `k dim g`, summed over numerator factors.
    pub fn k_dim_g(&self) -> Rational {
        self.numerator.iter().map(|f| &f.level * exact::int(f.algebra.dimension() as i64)).sum()
    }

    /// `x_e k dim a = K dim a`.
    pub fn xe_k_dim_a(&self) -> Rational {
        self.denominator_level() * exact::int(self.denominator.dimension() as i64)
    }

    pub fn central_charge(&self) -> Rational {
        let num: Rational = self
            .numerator
            .iter()
            .map(|f| {
                &f.level * exact::int(f.algebra.dimension() as i64)
                    / (&f.level + exact::int(f.algebra.dual_coxeter() as i64))
            })
            .sum();
        let big_k = self.denominator_level();
        let den = &big_k * exact::int(self.denominator.dimension() as i64)
            / (&big_k + exact::int(self.denominator.dual_coxeter() as i64));
        num - den
    }

    /// Shape check, plus range and selection rule for built-in families.
    pub fn check_label(&self, p: &PrimaryLabel) -> Result<()> {
        if p.mu.len() != self.numerator.len() {
            return Err(Error::InvalidLabel(format!(
                "{p}: expected {} numerator weights, got {}",
                self.numerator.len(),
                p.mu.len()
            )));
        }
        for (w, f) in p.mu.iter().zip(&self.numerator) {
            f.algebra.check(w)?;
        }
        self.denominator.check(&p.nu)?;
        if self.family.is_some() && !self.is_allowed(p) {
            return Err(Error::InvalidLabel(format!("{p} is not a primary of {self}")));
        }
        Ok(())
    }

    /// `(Σ_i C(μ_i), C(ν))`.
    pub fn casimirs(&self, p: &PrimaryLabel) -> Result<(Rational, Rational)> {
        self.check_label(p)?;
        let mut c_mu = Rational::zero();
        for (w, f) in p.mu.iter().zip(&self.numerator) {
            c_mu += f.algebra.casimir(w)?;
        }
        Ok((c_mu, self.denominator.casimir(&p.nu)?))
    }

    /// Raw `h_(μ,ν)`; may be negative.
    pub fn conformal_weight(&self, p: &PrimaryLabel) -> Result<Rational> {
        self.check_label(p)?;
        let two = exact::int(2);
        let mut h = Rational::zero();
        for (w, f) in p.mu.iter().zip(&self.numerator) {
            let shift = &f.level + exact::int(f.algebra.dual_coxeter() as i64);
            h += f.algebra.casimir(w)? / (&two * shift);
        }
        let shift = self.denominator_level() + exact::int(self.denominator.dual_coxeter() as i64);
        h -= self.denominator.casimir(&p.nu)? / (&two * shift);
        Ok(h)
    }

    pub fn conformal_weight_as(&self, p: &PrimaryLabel, conv: HConvention) -> Result<Rational> {
        let h = self.conformal_weight(p)?;
        Ok(match conv {
            HConvention::Raw => h,
            HConvention::Shifted => exact::frac(&h),
        })
    }

    pub fn data(&self, p: &PrimaryLabel, conv: HConvention) -> Result<RawCosetData> {
        let (c_mu, c_nu) = self.casimirs(p)?;
        Ok(RawCosetData {
            h: self.conformal_weight_as(p, conv)?,
            c: self.central_charge(),
            c_mu,
            c_nu,
            k_dim_g: self.k_dim_g(),
            xe_k_dim_a: self.xe_k_dim_a(),
        })
    }

    /// Selection rule of a built-in family; `true` for custom specs.
    pub fn is_allowed(&self, p: &PrimaryLabel) -> bool {
        let Some((family, n)) = self.family else {
            return true;
        };
        let n = n as i64;
        let Some(v) = p.ints() else {
            return false;
        };
        match (family, v.as_slice()) {
            (Family::Parafermion, &[k, l]) => (0..=n).contains(&k) && -n < l && l <= n && (k - l).rem_euclid(2) == 0,
            (Family::Minimal, &[n1, n2, m]) => {
                (0..=n).contains(&n1) && (0..=1).contains(&n2) && (0..=n + 1).contains(&m) && (n1 + n2 + m) % 2 == 0
            }
            _ => false,
        }
    }

    /// Field-identification partner of a built-in-family label.
    pub fn identify(&self, p: &PrimaryLabel) -> Option<PrimaryLabel> {
        let (family, n) = self.family?;
        let n = n as i64;
        let v = p.ints()?;
        match (family, v.as_slice()) {
            (Family::Parafermion, &[k, l]) => {
                let mut l2 = l - n;
                if l2 <= -n {
                    l2 += 2 * n;
                }
                Some(PrimaryLabel::parafermion(n - k, l2))
            }
            (Family::Minimal, &[n1, n2, m]) => Some(PrimaryLabel::minimal(n - n1, 1 - n2, n + 1 - m)),
            _ => None,
        }
    }

    /// One representative per identification orbit of the family's primaries.
    pub fn list_primaries(&self) -> Result<Vec<PrimaryLabel>> {
        let Some((family, n)) = self.family else {
            return Err(Error::Unsupported("list_primaries needs a built-in coset family".into()));
        };
        let n = n as i64;
        let mut all = Vec::new();
        match family {
            Family::Parafermion => {
                for k in 0..=n {
                    for l in (-n + 1)..=n {
                        all.push(PrimaryLabel::parafermion(k, l));
                    }
                }
            }
            Family::Minimal => {
                for n1 in 0..=n {
                    for m in 0..=n + 1 {
                        for n2 in 0..=1 {
                            all.push(PrimaryLabel::minimal(n1, n2, m));
                        }
                    }
                }
            }
        }
        let mut reps = Vec::new();
        for p in all.into_iter().filter(|p| self.is_allowed(p)) {
            let partner = self.identify(&p).expect("family label");
            let rep = if representative_key(family, &p) <= representative_key(family, &partner) {
                p
            } else {
                partner
            };
            if !reps.contains(&rep) {
                reps.push(rep);
            }
        }
        Ok(reps)
    }
}

/// Ordering used to pick an orbit representative (smaller wins).
///
/// Parafermions: even `k` first (one per orbit for odd `N`), then `|l| ≤ k`,
/// then smaller `k`, then `l ≥ 0`. Minimal models: `|n1 − m| ≤ 1` first (raw
/// `h` is then the Kac weight itself), then `n2 = 0`, then smaller `n1`, `m`.
fn representative_key(family: Family, p: &PrimaryLabel) -> (bool, bool, i64, i64) {
    let v = p.ints().expect("integral family label");
    match family {
        Family::Parafermion => {
            let (k, l) = (v[0], v[1]);
            (k % 2 != 0, l.abs() > k, k, if l >= 0 { 0 } else { 1 })
        }
        Family::Minimal => {
            let (n1, n2, m) = (v[0], v[1], v[2]);
            ((n1 - m).abs() > 1, n2 != 0, n1, m)
        }
    }
}

/// Built-in coset families; embedding indices are catalog data (`x_e = 1`).
pub fn make_family(family: Family, n: u32) -> Result<CosetSpec> {
    if n == 0 {
        return Err(Error::InvalidCoset(format!("{family} needs N >= 1")));
    }
    let level = exact::int(n as i64);
    let mut spec = match family {
        Family::Parafermion => CosetSpec::new(
            vec![Factor { algebra: SimpleAlgebra::a(1), level, embedding_index: Rational::one() }],
            SimpleAlgebra::u1(),
        )?,
        Family::Minimal => CosetSpec::new(
            vec![
                Factor { algebra: SimpleAlgebra::a(1), level, embedding_index: Rational::one() },
                Factor { algebra: SimpleAlgebra::a(1), level: Rational::one(), embedding_index: Rational::one() },
            ],
            SimpleAlgebra::a(1),
        )?,
    };
    spec.family = Some((family, n));
    Ok(spec)
}

impl fmt::Display for CosetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num: Vec<String> = self.numerator.iter().map(|x| format!("{}_{}", x.algebra, x.level)).collect();
        write!(f, "{} / {}_{}", num.join(" + "), self.denominator, self.denominator_level())
    }
}
