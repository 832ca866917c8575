//! The two linear martingale relations in `(κ, τ)` and their exact solution.
//!
//! For a coset primary with data `(h, c, C_μ, C̃_ν, k dim g, x_e k dim a)`:
//!
//! ```text
//! (3κ − 8) h − c + τ (k dim g − x_e k dim a) = 0
//! −12 h + 2κ h (2h + 1) + τ (C_μ − C̃_ν)     = 0
//! ```
//!
//! stored as rows `a κ + b τ = rhs`.

use std::fmt;

use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coset::{CosetSpec, HConvention, PrimaryLabel, RawCosetData};
use crate::error::{Error, Result};
use crate::exact::{self, Rational};

/// `kappa·κ + tau·τ = rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    #[serde(with = "exact::serde_rational")]
    pub kappa: Rational,
    #[serde(with = "exact::serde_rational")]
    pub tau: Rational,
    #[serde(with = "exact::serde_rational")]
    pub rhs: Rational,
}

impl Relation {
    pub fn residual(&self, kappa: &Rational, tau: &Rational) -> Rational {
        &self.kappa * kappa + &self.tau * tau - &self.rhs
    }

    fn is_zero_lhs(&self) -> bool {
        self.kappa.is_zero() && self.tau.is_zero()
    }

    fn scaled(&self, s: &Rational) -> Relation {
        Relation { kappa: &self.kappa * s, tau: &self.tau * s, rhs: &self.rhs * s }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})κ + ({})τ = {}", self.kappa, self.tau, self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MartingaleSystem {
    /// From the `L_2` relation.
    pub row1: Relation,
    /// From the `L_1²` relation.
    pub row2: Relation,
    pub provenance: RawCosetData,
}

impl MartingaleSystem {
    pub fn from_data(d: &RawCosetData) -> Self {
        let two = exact::int(2);
        let row1 = Relation {
            kappa: exact::int(3) * &d.h,
            tau: &d.k_dim_g - &d.xe_k_dim_a,
            rhs: exact::int(8) * &d.h + &d.c,
        };
        let row2 = Relation {
            kappa: &two * &d.h * (&two * &d.h + Rational::one()),
            tau: &d.c_mu - &d.c_nu,
            rhs: exact::int(12) * &d.h,
        };
        MartingaleSystem { row1, row2, provenance: d.clone() }
    }

    pub fn residuals(&self, kappa: &Rational, tau: &Rational) -> (Rational, Rational) {
        (self.row1.residual(kappa, tau), self.row2.residual(kappa, tau))
    }

    /// Both rows multiplied by `s`; provenance is kept.
    pub fn scaled(&self, s: &Rational) -> Self {
        MartingaleSystem { row1: self.row1.scaled(s), row2: self.row2.scaled(s), provenance: self.provenance.clone() }
    }

    pub fn solve(&self) -> MartingaleSolution {
        solve(self)
    }

    /// Same 2×2 solve in `f64` (Cramer's rule); `None` when singular.
    pub fn solve_f64(&self) -> Option<(f64, f64)> {
        let f = exact::to_f64;
        let (a1, b1, c1) = (f(&self.row1.kappa), f(&self.row1.tau), f(&self.row1.rhs));
        let (a2, b2, c2) = (f(&self.row2.kappa), f(&self.row2.tau), f(&self.row2.rhs));
        let det = a1 * b2 - a2 * b1;
        if det == 0.0 {
            return None;
        }
        Some(((c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det))
    }

    /// Value of `κ` forced by the second relation at `τ = 0`, when `h ≠ 0`
    /// and `2h + 1 ≠ 0`; equivalently `h = (6 − κ)/(2κ)`.
    pub fn kappa_at_tau_zero(&self) -> Option<Rational> {
        if self.row2.kappa.is_zero() {
            return None;
        }
        Some(&self.row2.rhs / &self.row2.kappa)
    }
}

pub fn build_system(spec: &CosetSpec, p: &PrimaryLabel, conv: HConvention) -> Result<MartingaleSystem> {
    Ok(MartingaleSystem::from_data(&spec.data(p, conv)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Unique,
    OneParameterFamily,
    Inconsistent,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Unique => "unique",
            Classification::OneParameterFamily => "one_parameter_family",
            Classification::Inconsistent => "inconsistent",
        })
    }
}

impl std::str::FromStr for Classification {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unique" => Ok(Classification::Unique),
            "one_parameter_family" => Ok(Classification::OneParameterFamily),
            "inconsistent" => Ok(Classification::Inconsistent),
            other => Err(Error::Parse(format!("unknown classification {other:?}"))),
        }
    }
}

/// Solution set of an underdetermined, consistent system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolutionFamily {
    /// `point + s·direction`.
    Line { point: (Rational, Rational), direction: (Rational, Rational) },
    /// Both relations vanish identically: every `(κ, τ)`.
    Unconstrained,
}

impl SolutionFamily {
    pub fn contains(&self, kappa: &Rational, tau: &Rational) -> bool {
        match self {
            SolutionFamily::Unconstrained => true,
            SolutionFamily::Line { point, direction } => {
                // (x - p) parallel to d
                (kappa - &point.0) * &direction.1 == (tau - &point.1) * &direction.0
            }
        }
    }

    /// The member with `τ = 0`, if there is exactly one.
    pub fn at_tau_zero(&self) -> Option<Rational> {
        match self {
            SolutionFamily::Line { point, direction } if !direction.1.is_zero() => {
                Some(&point.0 - &point.1 / &direction.1 * &direction.0)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    KappaNonPositive,
    KappaAbove8,
    TauNegative,
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::KappaNonPositive => "kappa_non_positive",
            Flag::KappaAbove8 => "kappa_above_8",
            Flag::TauNegative => "tau_negative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MartingaleSolution {
    pub classification: Classification,
    pub kappa: Option<Rational>,
    pub tau: Option<Rational>,
    pub family: Option<SolutionFamily>,
    pub flags: Vec<Flag>,
}

impl MartingaleSolution {
    /// Whether some solution has `τ = 0`.
    pub fn admits_tau_zero(&self) -> bool {
        match self.classification {
            Classification::Unique => self.tau.as_ref().is_some_and(Zero::is_zero),
            Classification::OneParameterFamily => match self.family.as_ref() {
                Some(SolutionFamily::Unconstrained) => true,
                Some(SolutionFamily::Line { point, direction }) => {
                    !direction.1.is_zero() || point.1.is_zero()
                }
                None => false,
            },
            Classification::Inconsistent => false,
        }
    }

    pub fn contains(&self, kappa: &Rational, tau: &Rational) -> bool {
        match self.classification {
            Classification::Unique => self.kappa.as_ref() == Some(kappa) && self.tau.as_ref() == Some(tau),
            Classification::OneParameterFamily => self.family.as_ref().is_some_and(|f| f.contains(kappa, tau)),
            Classification::Inconsistent => false,
        }
    }
}

/// Exact 2×2 solve with rank classification. Unique solutions are checked by
/// back-substitution.
pub fn solve(sys: &MartingaleSystem) -> MartingaleSolution {
    let (r1, r2) = (&sys.row1, &sys.row2);
    let det = &r1.kappa * &r2.tau - &r2.kappa * &r1.tau;
    if !det.is_zero() {
        let kappa = (&r1.rhs * &r2.tau - &r2.rhs * &r1.tau) / &det;
        let tau = (&r1.kappa * &r2.rhs - &r2.kappa * &r1.rhs) / &det;
        let (e1, e2) = sys.residuals(&kappa, &tau);
        assert!(e1.is_zero() && e2.is_zero(), "back-substitution failed: {e1}, {e2}");
        let mut flags = Vec::new();
        if !kappa.is_positive() {
            flags.push(Flag::KappaNonPositive);
        }
        if kappa > exact::int(8) {
            flags.push(Flag::KappaAbove8);
        }
        if tau.is_negative() {
            flags.push(Flag::TauNegative);
        }
        return MartingaleSolution {
            classification: Classification::Unique,
            kappa: Some(kappa),
            tau: Some(tau),
            family: None,
            flags,
        };
    }
    let inconsistent = MartingaleSolution {
        classification: Classification::Inconsistent,
        kappa: None,
        tau: None,
        family: None,
        flags: Vec::new(),
    };
    let family = |f: SolutionFamily| MartingaleSolution {
        classification: Classification::OneParameterFamily,
        kappa: None,
        tau: None,
        family: Some(f),
        flags: Vec::new(),
    };
    match (r1.is_zero_lhs(), r2.is_zero_lhs()) {
        (true, true) => {
            if r1.rhs.is_zero() && r2.rhs.is_zero() {
                family(SolutionFamily::Unconstrained)
            } else {
                inconsistent
            }
        }
        (lead_zero, _) => {
            let (lead, other) = if lead_zero { (r2, r1) } else { (r1, r2) };
            let point = if !lead.kappa.is_zero() {
                (&lead.rhs / &lead.kappa, Rational::zero())
            } else {
                (Rational::zero(), &lead.rhs / &lead.tau)
            };
            // Rank 1: `other` is proportional on the left, so one point decides.
            if other.residual(&point.0, &point.1).is_zero() {
                family(SolutionFamily::Line { point, direction: (-lead.tau.clone(), lead.kappa.clone()) })
            } else {
                inconsistent
            }
        }
    }
}

/// One scanned primary.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub label: PrimaryLabel,
    pub convention: HConvention,
    pub system: MartingaleSystem,
    pub solution: MartingaleSolution,
}

impl ScanRow {
    pub fn h(&self) -> &Rational {
        &self.system.provenance.h
    }

    pub fn record(&self) -> SolutionRecord {
        SolutionRecord::new(&self.label, self.convention, &self.system, &self.solution)
    }
}

/// Solves every identification representative of a built-in family, sorted
/// by `h` (ties keep the primary-list order).
pub fn scan(spec: &CosetSpec, conv: HConvention) -> Result<Vec<ScanRow>> {
    let labels = spec.list_primaries()?;
    let mut rows = labels
        .par_iter()
        .map(|label| {
            let system = build_system(spec, label, conv)?;
            let solution = system.solve();
            Ok(ScanRow { label: label.clone(), convention: conv, system, solution })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.h().cmp(b.h()));
    Ok(rows)
}

/// Flat, string-valued form of a solved primary used for JSON and CSV output.
/// Carries the full provenance so a reader can re-check it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub label: String,
    pub mu: Vec<String>,
    pub nu: Vec<String>,
    pub h: String,
    pub h_mod_1: String,
    pub h_convention: HConvention,
    pub c: String,
    #[serde(rename = "C_mu")]
    pub c_mu: String,
    #[serde(rename = "C_nu")]
    pub c_nu: String,
    pub k_dim_g: String,
    pub xe_k_dim_a: String,
    pub classification: Classification,
    pub kappa: Option<String>,
    pub tau: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_point: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_direction: Option<[String; 2]>,
    pub flags: Vec<String>,
}

/// Outcome of re-checking a [`SolutionRecord`] against its own provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verification {
    pub label: String,
    pub residuals: Vec<Rational>,
    pub ok: bool,
}

impl SolutionRecord {
    pub fn new(label: &PrimaryLabel, conv: HConvention, sys: &MartingaleSystem, sol: &MartingaleSolution) -> Self {
        let d = &sys.provenance;
        let (family_point, family_direction) = match &sol.family {
            Some(SolutionFamily::Line { point, direction }) => (
                Some([exact::fmt(&point.0), exact::fmt(&point.1)]),
                Some([exact::fmt(&direction.0), exact::fmt(&direction.1)]),
            ),
            _ => (None, None),
        };
        SolutionRecord {
            label: label.to_string(),
            mu: label.mu_labels().iter().map(exact::fmt).collect(),
            nu: label.nu.labels.iter().map(exact::fmt).collect(),
            h: exact::fmt(&d.h),
            h_mod_1: exact::fmt(&exact::frac(&d.h)),
            h_convention: conv,
            c: exact::fmt(&d.c),
            c_mu: exact::fmt(&d.c_mu),
            c_nu: exact::fmt(&d.c_nu),
            k_dim_g: exact::fmt(&d.k_dim_g),
            xe_k_dim_a: exact::fmt(&d.xe_k_dim_a),
            classification: sol.classification,
            kappa: sol.kappa.as_ref().map(exact::fmt),
            tau: sol.tau.as_ref().map(exact::fmt),
            family_point,
            family_direction,
            flags: sol.flags.iter().map(Flag::to_string).collect(),
        }
    }

    /// Record for raw-mode input, which has no weight labels.
    pub fn raw(sys: &MartingaleSystem, sol: &MartingaleSolution) -> Self {
        let mut r = SolutionRecord::new(&PrimaryLabel::new(vec![], crate::Weight::new(vec![])), HConvention::Raw, sys, sol);
        r.label = "raw".into();
        r
    }

    pub fn data(&self) -> Result<RawCosetData> {
        Ok(RawCosetData {
            h: exact::parse(&self.h)?,
            c: exact::parse(&self.c)?,
            c_mu: exact::parse(&self.c_mu)?,
            c_nu: exact::parse(&self.c_nu)?,
            k_dim_g: exact::parse(&self.k_dim_g)?,
            xe_k_dim_a: exact::parse(&self.xe_k_dim_a)?,
        })
    }

    /// Rebuilds the system from the recorded provenance and back-substitutes
    /// the recorded solution.
    pub fn verify(&self) -> Result<Verification> {
        let sys = MartingaleSystem::from_data(&self.data()?);
        let fresh = sys.solve();
        let parse_pair = |p: &Option<[String; 2]>| -> Result<Option<(Rational, Rational)>> {
            p.as_ref().map(|[a, b]| Ok((exact::parse(a)?, exact::parse(b)?))).transpose()
        };
        let (residuals, ok) = match self.classification {
            Classification::Unique => {
                let (Some(k), Some(t)) = (&self.kappa, &self.tau) else {
                    return Err(Error::Parse(format!("{}: unique row without kappa/tau", self.label)));
                };
                let (e1, e2) = sys.residuals(&exact::parse(k)?, &exact::parse(t)?);
                let ok = e1.is_zero() && e2.is_zero();
                (vec![e1, e2], ok)
            }
            Classification::OneParameterFamily => match (parse_pair(&self.family_point)?, parse_pair(&self.family_direction)?) {
                (Some(p), Some(d)) => {
                    let (e1, e2) = sys.residuals(&p.0, &p.1);
                    let h1 = &sys.row1.kappa * &d.0 + &sys.row1.tau * &d.1;
                    let h2 = &sys.row2.kappa * &d.0 + &sys.row2.tau * &d.1;
                    let nonzero_dir = !(d.0.is_zero() && d.1.is_zero());
                    let ok = e1.is_zero() && e2.is_zero() && h1.is_zero() && h2.is_zero() && nonzero_dir;
                    (vec![e1, e2, h1, h2], ok)
                }
                _ => (vec![], fresh.family == Some(SolutionFamily::Unconstrained)),
            },
            Classification::Inconsistent => (vec![], fresh.classification == Classification::Inconsistent),
        };
        Ok(Verification { label: self.label.clone(), residuals, ok: ok && fresh.classification == self.classification })
    }

    pub const CSV_HEADER: [&'static str; 17] = [
        "label",
        "mu",
        "nu",
        "h",
        "h_mod_1",
        "h_convention",
        "c",
        "C_mu",
        "C_nu",
        "k_dim_g",
        "xe_k_dim_a",
        "classification",
        "kappa",
        "tau",
        "family_point",
        "family_direction",
        "flags",
    ];

    /// Fields in [`Self::CSV_HEADER`] order; lists are space-separated.
    pub fn csv_fields(&self) -> Vec<String> {
        let pair = |p: &Option<[String; 2]>| p.as_ref().map(|[a, b]| format!("{a} {b}")).unwrap_or_default();
        vec![
            self.label.clone(),
            self.mu.join(" "),
            self.nu.join(" "),
            self.h.clone(),
            self.h_mod_1.clone(),
            self.h_convention.to_string(),
            self.c.clone(),
            self.c_mu.clone(),
            self.c_nu.clone(),
            self.k_dim_g.clone(),
            self.xe_k_dim_a.clone(),
            self.classification.to_string(),
            self.kappa.clone().unwrap_or_default(),
            self.tau.clone().unwrap_or_default(),
            pair(&self.family_point),
            pair(&self.family_direction),
            self.flags.join(" "),
        ]
    }
}

/// Solution of one primary under one `h` convention, compared against an
/// externally supplied `(κ, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConventionCheck {
    pub convention: HConvention,
    pub system: MartingaleSystem,
    pub solution: MartingaleSolution,
    /// Back-substitution residuals of the unique solution.
    pub residuals: Option<(Rational, Rational)>,
    pub matches_reference: Option<bool>,
}

/// Solves `p` under both `h` conventions and flags agreement with `reference`.
pub fn compare_conventions(
    spec: &CosetSpec,
    p: &PrimaryLabel,
    reference: Option<&(Rational, Rational)>,
) -> Result<Vec<ConventionCheck>> {
    [HConvention::Raw, HConvention::Shifted]
        .into_iter()
        .map(|conv| {
            let system = build_system(spec, p, conv)?;
            let solution = system.solve();
            let residuals = match (&solution.kappa, &solution.tau) {
                (Some(k), Some(t)) => Some(system.residuals(k, t)),
                _ => None,
            };
            let matches_reference = reference.map(|(k, t)| solution.contains(k, t));
            Ok(ConventionCheck { convention: conv, system, solution, residuals, matches_reference })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coset::{make_family, Family};
    use crate::exact::{int, q};
    use proptest::prelude::*;

    fn pf(n: u32) -> CosetSpec {
        make_family(Family::Parafermion, n).unwrap()
    }

    fn mm(n: u32) -> CosetSpec {
        make_family(Family::Minimal, n).unwrap()
    }

    fn rel(a: Rational, b: Rational, c: Rational) -> Relation {
        Relation { kappa: a, tau: b, rhs: c }
    }

    /// `r` is a nonzero multiple of `(a, b, c)`.
    fn proportional(r: &Relation, a: i64, b: i64, c: i64) -> bool {
        let target = [int(a), int(b), int(c)];
        let have = [&r.kappa, &r.tau, &r.rhs];
        let Some(i) = (0..3).find(|&i| !target[i].is_zero()) else { return false };
        let s = have[i] / &target[i];
        !s.is_zero() && (0..3).all(|j| have[j] == &(&target[j] * &s))
    }

    #[test]
    fn ising_energy_rows() {
        let sys = build_system(&pf(2), &PrimaryLabel::parafermion(2, 0), HConvention::Raw).unwrap();
        assert_eq!(sys.row1, rel(q(3, 2), int(4), q(9, 2)));
        assert_eq!(sys.row2, rel(int(2), int(4), int(6)));
        let d = &sys.provenance;
        assert_eq!((&d.h, &d.c, &d.c_mu, &d.c_nu), (&q(1, 2), &q(1, 2), &int(4), &int(0)));
        assert_eq!((&d.k_dim_g, &d.xe_k_dim_a), (&int(6), &int(2)));
    }

    #[test]
    fn z3_rows_by_hand_substitution() {
        // h = 1/15, c = 4/5, C_mu = 4, C_nu = 2, dims (9, 3):
        // row1: (3/15)κ + 6τ = 8/15 + 4/5  → 3κ + 90τ = 20
        // row2: 2κ(1/15)(17/15) + 2τ = 12/15 → 17κ + 225τ = 90
        let sys = build_system(&pf(3), &PrimaryLabel::parafermion(2, 2), HConvention::Raw).unwrap();
        assert!(proportional(&sys.row1, 3, 90, 20), "{}", sys.row1);
        assert!(proportional(&sys.row2, 17, 225, 90), "{}", sys.row2);
    }

    #[test]
    fn raw_vacuum_row2_has_only_casimir_term() {
        let mut d = RawCosetData::zero();
        d.c = q(1, 2);
        d.c_mu = int(3);
        d.c_nu = int(1);
        let sys = MartingaleSystem::from_data(&d);
        assert_eq!(sys.row2, rel(int(0), int(2), int(0)));
    }

    #[test]
    fn paper_solutions() {
        let cases = [
            (2, (2, 0), (int(3), int(0))),
            (2, (1, 1), (q(16, 3), int(0))),
            (3, (2, 0), (q(10, 3), int(0))),
            (3, (2, 2), (q(80, 19), q(14, 171))),
        ];
        for (n, (k, l), (kappa, tau)) in cases {
            let sol = build_system(&pf(n), &PrimaryLabel::parafermion(k, l), HConvention::Raw).unwrap().solve();
            assert_eq!(sol.classification, Classification::Unique);
            assert_eq!(sol.kappa, Some(kappa));
            assert_eq!(sol.tau, Some(tau));
        }
    }

    #[test]
    fn z3_charged_field_both_conventions() {
        let checks =
            compare_conventions(&pf(3), &PrimaryLabel::parafermion(0, 2), Some(&(q(208, 25), q(242, 225)))).unwrap();
        let raw = &checks[0];
        assert_eq!(raw.convention, HConvention::Raw);
        assert_eq!(raw.solution.kappa, Some(q(208, 25)));
        assert_eq!(raw.solution.tau, Some(q(242, 225)));
        assert_eq!(raw.matches_reference, Some(true));
        let shifted = &checks[1];
        assert_eq!(shifted.solution.kappa, Some(q(226, 85)));
        assert_eq!(shifted.solution.tau, Some(q(104, 765)));
        assert_eq!(shifted.matches_reference, Some(false));
        for c in &checks {
            let (e1, e2) = c.residuals.clone().unwrap();
            assert!(e1.is_zero() && e2.is_zero());
        }
    }

    #[test]
    fn all_zero_system_is_unconstrained_family() {
        let sol = MartingaleSystem::from_data(&RawCosetData::zero()).solve();
        assert_eq!(sol.classification, Classification::OneParameterFamily);
        assert_eq!(sol.family, Some(SolutionFamily::Unconstrained));
        assert!(sol.admits_tau_zero());
    }

    #[test]
    fn vacuum_rows() {
        // Minimal models: τ drops out of the first row, which reads 0 = c.
        let sol = build_system(&mm(2), &PrimaryLabel::minimal(0, 0, 0), HConvention::Raw).unwrap().solve();
        assert_eq!(sol.classification, Classification::Inconsistent);
        // Parafermions: first row fixes τ = c / (k dim g − x_e k dim a), κ is free.
        let sol = build_system(&pf(3), &PrimaryLabel::parafermion(0, 0), HConvention::Raw).unwrap().solve();
        assert_eq!(sol.classification, Classification::OneParameterFamily);
        assert!(sol.contains(&int(5), &q(2, 15)));
        assert!(!sol.admits_tau_zero());
    }

    #[test]
    fn equal_casimirs_give_a_line() {
        // Ising σ in the minimal-model realization: C_mu = C_nu and
        // k dim g = x_e k dim a, so τ drops out and κ = 16/3 on both rows.
        let sys = build_system(&mm(1), &PrimaryLabel::minimal(1, 0, 1), HConvention::Raw).unwrap();
        let sol = sys.solve();
        assert_eq!(sol.classification, Classification::OneParameterFamily);
        let fam = sol.family.clone().unwrap();
        assert!(fam.contains(&q(16, 3), &int(0)));
        assert!(fam.contains(&q(16, 3), &int(7)));
        assert!(!fam.contains(&int(3), &int(0)));
        assert!(sol.admits_tau_zero());
        assert_eq!(fam.at_tau_zero(), Some(q(16, 3)));
    }

    #[test]
    fn rank_one_inconsistent() {
        let sys = MartingaleSystem {
            row1: rel(int(1), int(2), int(3)),
            row2: rel(int(2), int(4), int(5)),
            provenance: RawCosetData::zero(),
        };
        assert_eq!(sys.solve().classification, Classification::Inconsistent);
        let sys = MartingaleSystem {
            row1: rel(int(0), int(0), int(1)),
            row2: rel(int(2), int(4), int(5)),
            provenance: RawCosetData::zero(),
        };
        assert_eq!(sys.solve().classification, Classification::Inconsistent);
        let sys = MartingaleSystem {
            row1: rel(int(0), int(0), int(0)),
            row2: rel(int(0), int(4), int(5)),
            provenance: RawCosetData::zero(),
        };
        let sol = sys.solve();
        assert_eq!(sol.classification, Classification::OneParameterFamily);
        assert!(sol.contains(&int(-11), &q(5, 4)));
        assert!(!sol.admits_tau_zero());
    }

    #[test]
    fn flags_reported_not_suppressed() {
        let sys = MartingaleSystem {
            row1: rel(int(1), int(0), int(-1)),
            row2: rel(int(0), int(1), int(-2)),
            provenance: RawCosetData::zero(),
        };
        let sol = sys.solve();
        assert_eq!(sol.flags, vec![Flag::KappaNonPositive, Flag::TauNegative]);
        let sys = MartingaleSystem {
            row1: rel(int(1), int(0), int(9)),
            row2: rel(int(0), int(1), int(0)),
            provenance: RawCosetData::zero(),
        };
        assert_eq!(sys.solve().flags, vec![Flag::KappaAbove8]);
    }

    #[test]
    fn scan_parafermion_n2() {
        let rows = scan(&pf(2), HConvention::Raw).unwrap();
        assert_eq!(rows.len(), 3);
        // sorted by h: vacuum 0, σ 1/16, ε 1/2
        assert_eq!(rows[0].label, PrimaryLabel::parafermion(0, 0));
        assert_eq!(rows[1].label, PrimaryLabel::parafermion(1, 1));
        assert_eq!(rows[1].solution.kappa, Some(q(16, 3)));
        assert_eq!(rows[2].label, PrimaryLabel::parafermion(2, 0));
        assert_eq!(rows[2].solution.kappa, Some(int(3)));
        assert!(rows[1..].iter().all(|r| r.solution.tau == Some(int(0))));
    }

    #[test]
    fn scan_parafermion_n3_singlet() {
        let rows = scan(&pf(3), HConvention::Raw).unwrap();
        let row = rows.iter().find(|r| r.label == PrimaryLabel::parafermion(2, 0)).unwrap();
        assert_eq!(row.solution.kappa, Some(q(10, 3)));
        assert_eq!(row.solution.tau, Some(int(0)));
        assert!(rows.windows(2).all(|w| w[0].h() <= w[1].h()));
    }

    #[test]
    fn minimal_tau_zero_rows_are_exactly_the_degenerate_fields() {
        // τ drops out of the first row (k dim g = x_e k dim a), which then
        // reads c = h(3κ − 8). τ = 0 is consistent iff additionally
        // κ = 6/(2h+1), i.e. 16h² + (2c − 10)h + c = 0.
        for n in 1..=20u32 {
            let spec = mm(n);
            let c = spec.central_charge();
            for row in scan(&spec, HConvention::Raw).unwrap() {
                let h = row.h().clone();
                let degenerate = !h.is_zero()
                    && exact::int(16) * &h * &h + (exact::int(2) * &c - exact::int(10)) * &h + &c == Rational::zero();
                assert_eq!(row.solution.admits_tau_zero(), degenerate, "N={n} {} h={h}", row.label);
            }
        }
    }

    #[test]
    fn minimal_tau_zero_implications_hold_symbolically() {
        for n in 1..=20u32 {
            let spec = mm(n);
            for row in scan(&spec, HConvention::Raw).unwrap() {
                let sys = &row.system;
                assert!(sys.row1.tau.is_zero());
                let Some(kappa) = sys.kappa_at_tau_zero() else { continue };
                let h = row.h();
                // second relation at τ = 0 ⇒ h = (6 − κ)/(2κ)
                assert_eq!(h, &((int(6) - &kappa) / (int(2) * &kappa)));
                // first relation then ⇒ c = (6 − κ)(3κ − 8)/(2κ)
                let implied_c = &sys.row1.kappa * &kappa - exact::int(8) * h;
                assert_eq!(implied_c, (int(6) - &kappa) * (int(3) * &kappa - int(8)) / (int(2) * &kappa));
                if row.solution.admits_tau_zero() {
                    assert_eq!(implied_c, spec.central_charge());
                }
            }
        }
    }

    #[test]
    fn exact_and_float_solves_agree() {
        for n in 1..=20u32 {
            for spec in [pf(n), mm(n)] {
                for conv in [HConvention::Raw, HConvention::Shifted] {
                    for row in scan(&spec, conv).unwrap() {
                        let (Some(k), Some(t)) = (&row.solution.kappa, &row.solution.tau) else { continue };
                        let (kf, tf) = row.system.solve_f64().unwrap();
                        for (exact_v, float_v) in [(k, kf), (t, tf)] {
                            let e = exact::to_f64(exact_v);
                            assert!((e - float_v).abs() <= 1e-12 * e.abs().max(1.0), "{e} vs {float_v}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn records_verify_and_reject_tampering() {
        for spec in [pf(3), mm(3)] {
            for row in scan(&spec, HConvention::Raw).unwrap() {
                let rec = row.record();
                assert!(rec.verify().unwrap().ok, "{}", rec.label);
                let json = serde_json::to_string(&rec).unwrap();
                let back: SolutionRecord = serde_json::from_str(&json).unwrap();
                assert_eq!(back, rec);
            }
        }
        let row = &scan(&pf(3), HConvention::Raw).unwrap()[2];
        let mut rec = row.record();
        rec.kappa = Some("1/1".into());
        rec.classification = Classification::Unique;
        rec.tau = Some("0/1".into());
        assert!(!rec.verify().unwrap().ok);
    }

    fn small_rational() -> impl Strategy<Value = Rational> {
        (-30i64..=30, 1i64..=12).prop_map(|(n, d)| q(n, d))
    }

    proptest! {
        #[test]
        fn solve_is_scale_invariant(
            vals in proptest::collection::vec(small_rational(), 6),
            s in small_rational().prop_filter("nonzero", |s| !s.is_zero()),
        ) {
            let sys = MartingaleSystem {
                row1: rel(vals[0].clone(), vals[1].clone(), vals[2].clone()),
                row2: rel(vals[3].clone(), vals[4].clone(), vals[5].clone()),
                provenance: RawCosetData::zero(),
            };
            let a = sys.solve();
            let b = sys.scaled(&s).solve();
            prop_assert_eq!(a.classification, b.classification);
            prop_assert_eq!(&a.kappa, &b.kappa);
            prop_assert_eq!(&a.tau, &b.tau);
            if let (Some(fa), Some(fb)) = (&a.family, &b.family) {
                if let SolutionFamily::Line { point, .. } = fb {
                    prop_assert!(fa.contains(&point.0, &point.1));
                }
            }
        }

        #[test]
        fn unique_solutions_back_substitute(vals in proptest::collection::vec(small_rational(), 6)) {
            let sys = MartingaleSystem {
                row1: rel(vals[0].clone(), vals[1].clone(), vals[2].clone()),
                row2: rel(vals[3].clone(), vals[4].clone(), vals[5].clone()),
                provenance: RawCosetData::zero(),
            };
            let sol = sys.solve();
            if let (Some(k), Some(t)) = (&sol.kappa, &sol.tau) {
                let (e1, e2) = sys.residuals(k, t);
                prop_assert!(e1.is_zero() && e2.is_zero());
            }
        }
    }
}
