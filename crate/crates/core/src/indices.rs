//! Exponent bookkeeping for the weighted energy estimates and the γ regimes
//! in which each family of constraints admits a solution.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexSet {
    pub gamma: f64,
    pub r1: f64,
    pub sigma1: f64,
    pub l1: f64,
    pub r2: f64,
    pub l2: f64,
    pub l3: f64,
    pub r3: f64,
    pub r4: f64,
    pub l4: f64,
    pub frak_a: f64,
    pub frak_b: f64,
    pub case1: bool,
    pub case2: bool,
    pub case3: bool,
}

impl IndexSet {
    pub fn compute(gamma: f64, r1: f64, sigma1: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::invalid("gamma must exceed 1"));
        }
        if !r1.is_finite() || !sigma1.is_finite() {
            return Err(Error::invalid("r1 and sigma1 must be finite"));
        }
        let g6 = 6.0 * gamma - 6.0;
        let l1 = g6 - r1;
        let r2 = r1 + 2.0 * sigma1 - 2.0;
        let r4 = 2.0 - r2;
        Ok(Self {
            gamma,
            r1,
            sigma1,
            l1,
            r2,
            l2: g6 - r2,
            l3: l1 + 2.0,
            r3: r1,
            r4,
            l4: g6 + r4,
            frak_a: r1 + sigma1 + 1.0,
            frak_b: r1,
            case1: satisfies(Case::One, gamma, r1, sigma1),
            case2: satisfies(Case::Two, gamma, r1, sigma1),
            case3: satisfies(Case::Three, gamma, r1, sigma1),
        })
    }

    /// Whether the base chain holds, which is what keeps every weight in the
    /// energy functionals meaningful.
    pub fn feasible(&self) -> bool {
        self.case1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    One,
    Two,
    Three,
}

impl Case {
    pub fn from_number(k: u32) -> Option<Self> {
        match k {
            1 => Some(Case::One),
            2 => Some(Case::Two),
            3 => Some(Case::Three),
            _ => None,
        }
    }

    pub fn number(self) -> u32 {
        match self {
            Case::One => 1,
            Case::Two => 2,
            Case::Three => 3,
        }
    }
}

/// `lower < 2σ₁ < r₁ < min(6γ-6, 2)` where the lower bound tightens from
/// `2 - r₁` (case 1) to `max(3γ-3-r₁, 2-r₁)` (case 2) and
/// `max(3γ-1-r₁, 2-r₁)` (case 3).
pub fn satisfies(case: Case, gamma: f64, r1: f64, sigma1: f64) -> bool {
    let base = 2.0 - r1;
    let lower = match case {
        Case::One => base,
        Case::Two => (3.0 * gamma - 3.0 - r1).max(base),
        Case::Three => (3.0 * gamma - 1.0 - r1).max(base),
    };
    let two_sigma = 2.0 * sigma1;
    lower < two_sigma && two_sigma < r1 && r1 < (6.0 * gamma - 6.0).min(2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Regime {
    pub i0: bool,
    pub i1: bool,
    pub i2: bool,
}

impl Regime {
    pub fn contains(&self, case: Case) -> bool {
        match case {
            Case::One => self.i0,
            Case::Two => self.i1,
            Case::Three => self.i2,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.i0, "I0"), (self.i1, "I1"), (self.i2, "I2")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

pub const I0: (f64, f64) = (7.0 / 6.0, f64::INFINITY);
pub const I1: (f64, f64) = (7.0 / 6.0, 7.0 / 3.0);
pub const I2: (f64, f64) = (11.0 / 9.0, 5.0 / 3.0);

pub fn regime(gamma: f64) -> Regime {
    let inside = |(lo, hi): (f64, f64)| lo < gamma && gamma < hi;
    Regime {
        i0: inside(I0),
        i1: inside(I1),
        i2: inside(I2),
    }
}

pub const MIN_SCAN_GRID: usize = 100;

/// Brute-force scan of `r₁ ∈ (0, 2.5]`, `σ₁ ∈ (0, 1.25]` on a `grid × grid`
/// lattice. Returns the first lattice point satisfying the case's chain,
/// scanning `r₁` upward and `σ₁` upward.
pub fn feasible_window(gamma: f64, case: Case, grid: usize) -> Result<Option<(f64, f64)>> {
    if grid < MIN_SCAN_GRID {
        return Err(Error::invalid(format!("scan grid must be at least {MIN_SCAN_GRID}")));
    }
    if !(gamma > 1.0) {
        return Err(Error::invalid("gamma must exceed 1"));
    }
    let g = grid as f64;
    for i in 1..=grid {
        let r1 = 2.5 * i as f64 / g;
        for j in 1..=grid {
            let sigma1 = 1.25 * j as f64 / g;
            if satisfies(case, gamma, r1, sigma1) {
                return Ok(Some((r1, sigma1)));
            }
        }
    }
    Ok(None)
}

/// The lattice point deepest inside the case's feasible set, measured by the
/// smallest slack over the chain's inequalities. Used as the default index
/// choice when a run does not specify one.
pub fn central_witness(gamma: f64, case: Case, grid: usize) -> Result<Option<(f64, f64)>> {
    if grid < MIN_SCAN_GRID {
        return Err(Error::invalid(format!("scan grid must be at least {MIN_SCAN_GRID}")));
    }
    let g = grid as f64;
    let mut best: Option<(f64, (f64, f64))> = None;
    for i in 1..=grid {
        let r1 = 2.5 * i as f64 / g;
        for j in 1..=grid {
            let sigma1 = 1.25 * j as f64 / g;
            if !satisfies(case, gamma, r1, sigma1) {
                continue;
            }
            let base = 2.0 - r1;
            let lower = match case {
                Case::One => base,
                Case::Two => (3.0 * gamma - 3.0 - r1).max(base),
                Case::Three => (3.0 * gamma - 1.0 - r1).max(base),
            };
            let slack = (2.0 * sigma1 - lower)
                .min(r1 - 2.0 * sigma1)
                .min((6.0 * gamma - 6.0).min(2.0) - r1);
            if best.is_none_or(|(s, _)| slack > s) {
                best = Some((slack, (r1, sigma1)));
            }
        }
    }
    Ok(best.map(|(_, w)| w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn hand_evaluated_index_set() {
        let s = IndexSet::compute(1.5, 1.8, 0.5).unwrap();
        assert!(close(s.l1, 1.2));
        assert!(close(s.r2, 0.8));
        assert!(close(s.l2, 2.2));
        assert!(close(s.l3, 3.2));
        assert!(close(s.r3, 1.8));
        assert!(close(s.r4, 1.2));
        assert!(close(s.l4, 4.2));
        assert!(close(s.frak_a, 3.3));
        assert!(close(s.frak_b, 1.8));
        assert!(s.case1);
    }

    #[test]
    fn case_flags_on_examples() {
        let s = IndexSet::compute(1.5, 1.8, 0.875).unwrap();
        assert!(s.case3 && s.case2 && s.case1);
        let s = IndexSet::compute(1.5, 1.8, 0.05).unwrap();
        assert!(!s.case1 && !s.case2 && !s.case3);
    }

    #[test]
    fn regime_examples() {
        assert_eq!(regime(1.5), Regime { i0: true, i1: true, i2: true });
        assert_eq!(regime(1.2), Regime { i0: true, i1: true, i2: false });
        assert_eq!(regime(7.0 / 6.0), Regime::default());
        assert_eq!(regime(3.0), Regime { i0: true, i1: false, i2: false });
        assert_eq!(regime(1.5).to_string(), "{I0,I1,I2}");
    }

    #[test]
    fn window_examples() {
        assert!(feasible_window(1.4, Case::Three, 200).unwrap().is_some());
        assert!(feasible_window(2.0, Case::Three, 200).unwrap().is_none());
        assert!(feasible_window(1.1, Case::One, 200).unwrap().is_none());
        assert!(feasible_window(1.5, Case::One, 50).is_err());
    }

    #[test]
    fn witness_satisfies_its_case() {
        for case in [Case::One, Case::Two, Case::Three] {
            let (r1, s1) = feasible_window(1.5, case, 200).unwrap().unwrap();
            assert!(satisfies(case, 1.5, r1, s1));
            let (r1, s1) = central_witness(1.5, case, 200).unwrap().unwrap();
            assert!(satisfies(case, 1.5, r1, s1));
        }
    }

    proptest! {
        #[test]
        fn identities_and_nesting(gamma in 1.001f64..4.0, r1 in -1.0f64..3.0, sigma1 in -1.0f64..2.0) {
            let s = IndexSet::compute(gamma, r1, sigma1).unwrap();
            prop_assert_eq!(s.l1, 6.0 * gamma - 6.0 - r1);
            prop_assert_eq!(s.r2, r1 + 2.0 * sigma1 - 2.0);
            prop_assert_eq!(s.l3, s.l1 + 2.0);
            prop_assert_eq!(s.l4, 6.0 * gamma - 6.0 + s.r4);
            prop_assert!(!s.case3 || s.case2);
            prop_assert!(!s.case2 || s.case1);
            if s.case1 {
                prop_assert!(s.r2 <= s.r1);
            }
        }
    }
}
