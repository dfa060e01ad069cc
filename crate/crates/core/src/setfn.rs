//! Set functions over a small ground set, stored as explicit tables.
//!
//! Subsets are bitmasks: agent `i` (zero-based) is bit `i`. A table for `n`
//! agents therefore has `2^n` entries and is indexed directly by mask.
//!
//! Validity checks use the local form of each property: monotonicity is
//! checked on every pair `(S, S ∪ {i})` and submodularity on every pair
//! `(S ∪ {i}, S ∪ {j})` with distinct `i, j ∉ S`. Both local forms are
//! equivalent to the global definitions, so the reported witnesses form a
//! complete certificate of failure.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Bitmask over the agents.
pub type Subset = u32;

/// Largest ground set an explicit table is allowed to describe.
pub const MAX_AGENTS: usize = 20;

/// Comparison tolerance for real-valued rank tables.
pub const TOL: f64 = 1e-9;

/// Mask containing the listed (zero-based) agents.
pub fn subset_of(agents: &[usize]) -> Subset {
    agents.iter().fold(0, |mask, &i| mask | (1 << i))
}

pub fn full_set(n_agents: usize) -> Subset {
    ((1u64 << n_agents) - 1) as Subset
}

#[inline]
pub fn contains(mask: Subset, agent: usize) -> bool {
    mask & (1 << agent) != 0
}

pub(crate) fn check_ground_set(n_agents: usize) -> Result<()> {
    if n_agents == 0 || n_agents > MAX_AGENTS {
        return Err(Error::GroundSetSize(n_agents));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Normalization,
    Monotonicity,
    Submodularity,
}

/// A failed check: the two witness subsets and the (negative) slack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub property: Property,
    pub s: Subset,
    pub t: Subset,
    pub slack: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        ValidationReport {
            is_valid: violations.is_empty(),
            violations,
        }
    }

    pub fn has(&self, property: Property) -> bool {
        self.violations.iter().any(|v| v.property == property)
    }
}

/// Checks normalization, monotonicity and submodularity of any table-like
/// set function. Integer tables pass `tol = 0.0` for exact checks.
pub(crate) fn check_set_function(
    n_agents: usize,
    value: impl Fn(Subset) -> f64,
    tol: f64,
) -> ValidationReport {
    let mut violations = Vec::new();
    let empty = value(0);
    if empty.abs() > tol {
        violations.push(Violation {
            property: Property::Normalization,
            s: 0,
            t: 0,
            slack: -empty.abs(),
        });
    }
    let size = 1u32 << n_agents;
    for s in 0..size {
        let fs = value(s);
        for i in (0..n_agents).filter(|&i| !contains(s, i)) {
            let si = s | (1 << i);
            let fsi = value(si);
            let step = fsi - fs;
            if step < -tol {
                violations.push(Violation {
                    property: Property::Monotonicity,
                    s,
                    t: si,
                    slack: step,
                });
            }
            for j in (i + 1..n_agents).filter(|&j| !contains(s, j)) {
                let sj = s | (1 << j);
                let d = fsi + value(sj) - fs - value(si | sj);
                if d < -tol {
                    violations.push(Violation {
                        property: Property::Submodularity,
                        s: si,
                        t: sj,
                        slack: d,
                    });
                }
            }
        }
    }
    ValidationReport::from_violations(violations)
}

/// Where the minimum distance is attained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceWitness {
    pub base: Subset,
    pub i: usize,
    pub j: usize,
    pub distance: f64,
}

/// A perturbed rank function together with the constants used to build it.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub rank: RankFunction,
    /// Curvature weight: the new minimum distance is at least `2 * gamma`.
    pub gamma: f64,
    /// Shrink factor applied to the original table.
    pub theta: f64,
}

/// Explicit table of a set function `f: 2^N -> R`, indexed by bitmask.
#[derive(Clone, Debug, PartialEq)]
pub struct RankFunction {
    n_agents: usize,
    values: Vec<f64>,
}

impl RankFunction {
    /// Wraps a complete table. Only the shape is checked here; call
    /// [`RankFunction::validate`] for the polymatroid properties.
    pub fn from_table(n_agents: usize, values: Vec<f64>) -> Result<Self> {
        check_ground_set(n_agents)?;
        let expected = 1usize << n_agents;
        if values.len() != expected {
            return Err(Error::TableSize {
                got: values.len(),
                expected,
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidRankFunction(format!(
                "entries must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(RankFunction { n_agents, values })
    }

    pub fn from_fn(n_agents: usize, f: impl Fn(Subset) -> f64) -> Result<Self> {
        check_ground_set(n_agents)?;
        let values = (0..1u32 << n_agents).map(f).collect();
        Self::from_table(n_agents, values)
    }

    /// `f(S) = Σ_{i∈S} weights[i]`.
    pub fn modular(weights: &[f64]) -> Result<Self> {
        Self::from_fn(weights.len(), |s| {
            weights
                .iter()
                .enumerate()
                .filter(|(i, _)| contains(s, *i))
                .map(|(_, w)| w)
                .sum()
        })
    }

    /// Per-agent cap `c` with a shared total: `f(S) = min(c·|S|, total)`.
    pub fn uniform_cap(n_agents: usize, cap: f64, total: f64) -> Result<Self> {
        Self::from_fn(n_agents, |s| (cap * s.count_ones() as f64).min(total))
    }

    /// Two agents, `x1 ≤ 0.6`, `x2 ≤ 0.6`, `x1 + x2 ≤ 1`.
    pub fn example1() -> Self {
        Self::from_table(2, vec![0.0, 0.6, 0.6, 1.0]).expect("static table")
    }

    /// Three agents, singletons `≤ 0.7`, pairs `≤ 0.9`, total `≤ 1`.
    pub fn example2() -> Self {
        Self::from_fn(3, |s| match s.count_ones() {
            0 => 0.0,
            1 => 0.7,
            2 => 0.9,
            _ => 1.0,
        })
        .expect("static table")
    }

    /// Worst-case family for the quantized mechanism:
    /// `x1 ≤ 1 − η`, `x2 ≤ 2/3 + η`, `x1 + x2 ≤ 1`.
    pub fn tightness(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0 / 3.0) {
            return Err(Error::InvalidParameter(format!(
                "tightness eta must lie in (0, 1/3], got {eta}"
            )));
        }
        Self::from_table(2, vec![0.0, 1.0 - eta, 2.0 / 3.0 + eta, 1.0])
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn full_set(&self) -> Subset {
        full_set(self.n_agents)
    }

    /// `f(N)`.
    pub fn total(&self) -> f64 {
        self.values[self.full_set() as usize]
    }

    /// Unchecked lookup for masks known to be in range.
    #[inline]
    pub(crate) fn at(&self, s: Subset) -> f64 {
        self.values[s as usize]
    }

    pub fn evaluate(&self, s: Subset) -> Result<f64> {
        self.values
            .get(s as usize)
            .copied()
            .ok_or(Error::SubsetOutOfRange {
                mask: s,
                n_agents: self.n_agents,
            })
    }

    pub fn validate(&self, tol: f64) -> ValidationReport {
        check_set_function(self.n_agents, |s| self.at(s), tol)
    }

    /// `D_f(S ∪ {i}, S ∪ {j})` for `i, j ∉ S`.
    pub fn local_distance(&self, base: Subset, i: usize, j: usize) -> f64 {
        let si = base | (1 << i);
        let sj = base | (1 << j);
        self.at(si) + self.at(sj) - self.at(base) - self.at(si | sj)
    }

    /// Minimum over all `S` and distinct `i, j ∉ S` of `|D_f(S ∪ {i}, S ∪ {j})|`,
    /// with the subset where it is attained.
    pub fn min_distance_witness(&self) -> Result<DistanceWitness> {
        let n = self.n_agents;
        if n < 2 {
            return Err(Error::NoAgentPairs);
        }
        let mut best: Option<DistanceWitness> = None;
        for base in 0..1u32 << n {
            for i in (0..n).filter(|&i| !contains(base, i)) {
                for j in (i + 1..n).filter(|&j| !contains(base, j)) {
                    let distance = self.local_distance(base, i, j).abs();
                    if best.is_none_or(|b| distance < b.distance) {
                        best = Some(DistanceWitness {
                            base,
                            i,
                            j,
                            distance,
                        });
                    }
                }
            }
        }
        Ok(best.expect("n >= 2 guarantees at least one pair"))
    }

    pub fn min_distance(&self) -> Result<f64> {
        Ok(self.min_distance_witness()?.distance)
    }

    /// Builds a rank function with strictly positive minimum distance that lies
    /// inside this one and is at most `eta` away from it on every subset.
    ///
    /// The table is shrunk towards the strictly submodular cardinality function
    /// `r(S) = m·(n² − |S^c|²)/n²`, where `m = min_i f({i})`:
    ///
    /// `f̃(S) = (1 − θ)·f(S) + γ·(n² − |S^c|²)`, with `θ = γ·n²/m`
    /// and `γ = min(η·m / (n²·f(N)), m / n²)`.
    ///
    /// Every local distance of the second term equals `2γ`, so
    /// `Δf̃ ≥ (1 − θ)·Δf + 2γ ≥ 2γ`, and `0 ≤ f − f̃ ≤ θ·f(N) ≤ η`.
    pub fn perturb(&self, eta: f64) -> Result<Perturbation> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "perturbation size must be positive, got {eta}"
            )));
        }
        let report = self.validate(TOL);
        if !report.is_valid {
            return Err(Error::InvalidRankFunction(format!(
                "{} violations",
                report.violations.len()
            )));
        }
        let n = self.n_agents;
        let min_single = (0..n)
            .map(|i| self.at(1 << i))
            .fold(f64::INFINITY, f64::min);
        if min_single <= 0.0 {
            return Err(Error::InvalidRankFunction(
                "every singleton must have positive rank".into(),
            ));
        }
        let n_sq = (n * n) as f64;
        let gamma = (eta * min_single / (n_sq * self.total())).min(min_single / n_sq);
        let theta = gamma * n_sq / min_single;
        let rank = Self::from_fn(n, |s| {
            let outside = (n - s.count_ones() as usize) as f64;
            ((1.0 - theta) * self.at(s) + gamma * (n_sq - outside * outside)).max(0.0)
        })?;
        Ok(Perturbation { rank, gamma, theta })
    }

    /// Rescales so that `f(N) = 1`; returns the scale `f(N)` as well.
    pub fn normalize(&self) -> Result<(RankFunction, f64)> {
        let scale = self.total();
        if scale <= 0.0 {
            return Err(Error::ZeroTotal);
        }
        let values = self.values.iter().map(|v| v / scale).collect();
        Ok((Self::from_table(self.n_agents, values)?, scale))
    }

    /// Relabels agents: agent `i` of `self` becomes agent `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<RankFunction> {
        let n = self.n_agents;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        let mut values = vec![0.0; self.values.len()];
        for s in 0..1u32 << n {
            let image = (0..n)
                .filter(|&i| contains(s, i))
                .fold(0, |m, i| m | (1 << perm[i]));
            values[image as usize] = self.at(s);
        }
        Self::from_table(n, values)
    }
}

#[derive(Serialize)]
struct RankTable {
    n_agents: usize,
    values: BTreeMap<u32, String>,
}

// String keys so the table also parses when buffered, e.g. inside an
// untagged enum.
#[derive(Deserialize)]
struct RankTableIn {
    n_agents: usize,
    values: BTreeMap<String, String>,
}

impl Serialize for RankFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        RankTable {
            n_agents: self.n_agents,
            values: self
                .values
                .iter()
                .enumerate()
                .map(|(mask, v)| (mask as u32, v.to_string()))
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RankFunction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let table = RankTableIn::deserialize(deserializer)?;
        check_ground_set(table.n_agents).map_err(D::Error::custom)?;
        let size = 1usize << table.n_agents;
        let mut values = vec![None; size];
        for (key, text) in &table.values {
            let mask: u32 = key
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("bad subset key {key:?}")))?;
            let slot = values
                .get_mut(mask as usize)
                .ok_or_else(|| D::Error::custom(format!("mask {mask} out of range")))?;
            let v: f64 = text
                .trim()
                .parse()
                .map_err(|_| D::Error::custom(format!("mask {mask}: bad decimal {text:?}")))?;
            *slot = Some(v);
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(mask, v)| v.ok_or_else(|| D::Error::custom(format!("mask {mask} missing"))))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        RankFunction::from_table(table.n_agents, values).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: f64, b: f64, ab: f64) -> RankFunction {
        RankFunction::from_table(2, vec![0.0, a, b, ab]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(RankFunction::example1().evaluate(subset_of(&[0])).unwrap(), 0.6);
        assert_eq!(RankFunction::example2().evaluate(subset_of(&[0, 1])).unwrap(), 0.9);
        assert_eq!(RankFunction::example2().evaluate(0).unwrap(), 0.0);
        assert!(matches!(
            RankFunction::example1().evaluate(4),
            Err(Error::SubsetOutOfRange { mask: 4, .. })
        ));
    }

    #[test]
    fn examples_are_valid() {
        assert!(RankFunction::example1().validate(TOL).is_valid);
        assert!(RankFunction::example2().validate(TOL).is_valid);
        assert!(RankFunction::tightness(0.001).unwrap().validate(TOL).is_valid);
    }

    #[test]
    fn modular_is_valid_with_zero_slack() {
        let f = RankFunction::modular(&[0.2, 0.3, 0.5]).unwrap();
        assert!(f.validate(TOL).is_valid);
        assert!(f.min_distance().unwrap() < 1e-12);
    }

    #[test]
    fn supermodular_pair_is_reported() {
        let report = pair(1.0, 1.0, 2.5).validate(TOL);
        assert!(!report.is_valid);
        assert!(!report.has(Property::Monotonicity));
        let v = &report.violations[0];
        assert_eq!(v.property, Property::Submodularity);
        assert_eq!((v.s, v.t), (subset_of(&[0]), subset_of(&[1])));
        assert!((v.slack + 0.5).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_and_unnormalized() {
        let f = RankFunction::from_table(2, vec![0.1, 0.6, 0.3, 0.5]).unwrap();
        let report = f.validate(TOL);
        assert!(report.has(Property::Normalization));
        assert!(report.has(Property::Monotonicity));
    }

    #[test]
    fn min_distance_examples() {
        let d1 = RankFunction::example1().min_distance().unwrap();
        assert!((d1 - 0.2).abs() < 1e-12);
        let tight = RankFunction::tightness(0.001).unwrap().min_distance().unwrap();
        assert!((tight - 2.0 / 3.0).abs() < 1e-12);
        // witnessed at S = {3}: 0.9 + 0.9 − 0.7 − 1
        let w = RankFunction::example2().min_distance_witness().unwrap();
        assert!((w.distance - 0.1).abs() < 1e-12);
        assert_eq!(w.base.count_ones(), 1);
    }

    #[test]
    fn min_distance_needs_two_agents() {
        let f = RankFunction::from_table(1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(f.min_distance(), Err(Error::NoAgentPairs)));
    }

    #[test]
    fn perturb_modular_pair() {
        let f = RankFunction::modular(&[0.5, 0.5]).unwrap();
        let p = f.perturb(0.04).unwrap();
        // gamma = 0.04·0.5/(4·1), theta = gamma·4/0.5
        assert!((p.gamma - 0.005).abs() < 1e-15);
        assert!((p.theta - 0.04).abs() < 1e-15);
        let g = &p.rank;
        assert!((g.at(1) - 0.495).abs() < 1e-12);
        assert!((g.at(2) - 0.495).abs() < 1e-12);
        assert!((g.at(3) - 0.98).abs() < 1e-12);
        assert!(g.validate(TOL).is_valid);
        assert!((g.min_distance().unwrap() - 2.0 * p.gamma).abs() < 1e-12);
    }

    #[test]
    fn perturb_example1_keeps_distance() {
        let f = RankFunction::example1();
        let p = f.perturb(0.02).unwrap();
        let gap = (0..4).map(|s| f.at(s) - p.rank.at(s)).fold(f64::MIN, f64::max);
        assert!(gap <= 0.02 + 1e-12);
        assert!(p.rank.min_distance().unwrap() >= f.min_distance().unwrap() - 1e-12);
    }

    #[test]
    fn perturb_vanishes_with_eta() {
        let f = RankFunction::example2();
        let p = f.perturb(1e-12).unwrap();
        for s in 0..8 {
            assert!((f.at(s) - p.rank.at(s)).abs() < 1e-11);
        }
    }

    #[test]
    fn perturb_rejects_bad_input() {
        let f = RankFunction::example1();
        assert!(f.perturb(0.0).is_err());
        assert!(f.perturb(-1.0).is_err());
        let zero_single = RankFunction::modular(&[0.0, 1.0]).unwrap();
        assert!(zero_single.perturb(0.1).is_err());
    }

    #[test]
    fn normalize_scales() {
        let f = RankFunction::uniform_cap(2, 1.2, 2.0).unwrap();
        let (g, scale) = f.normalize().unwrap();
        assert_eq!(scale, 2.0);
        assert_eq!(g.values(), &[0.0, 0.6, 0.6, 1.0]);
        let (h, again) = g.normalize().unwrap();
        assert_eq!(again, 1.0);
        assert_eq!(h, g);
        let (same, one) = RankFunction::example1().normalize().unwrap();
        assert_eq!(one, 1.0);
        assert_eq!(same, RankFunction::example1());
        let zero = RankFunction::from_table(2, vec![0.0; 4]).unwrap();
        assert!(matches!(zero.normalize(), Err(Error::ZeroTotal)));
    }

    #[test]
    fn relabel_permutes_table() {
        let f = RankFunction::from_table(2, vec![0.0, 0.3, 0.7, 0.9]).unwrap();
        let g = f.relabel(&[1, 0]).unwrap();
        assert_eq!(g.values(), &[0.0, 0.7, 0.3, 0.9]);
        assert!(f.relabel(&[0, 0]).is_err());
    }

    #[test]
    fn table_shape_errors() {
        assert!(matches!(
            RankFunction::from_table(2, vec![0.0; 3]),
            Err(Error::TableSize { got: 3, expected: 4 })
        ));
        assert!(RankFunction::from_table(0, vec![0.0]).is_err());
        assert!(RankFunction::from_table(21, vec![]).is_err());
        assert!(RankFunction::from_table(1, vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn json_uses_decimal_strings() {
        let f = RankFunction::example1();
        let text = serde_json::to_string(&f).unwrap();
        assert_eq!(
            text,
            r#"{"n_agents":2,"values":{"0":"0","1":"0.6","2":"0.6","3":"1"}}"#
        );
        let back: RankFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let missing = r#"{"n_agents":2,"values":{"0":"0","1":"0.6","3":"1"}}"#;
        assert!(serde_json::from_str::<RankFunction>(missing).is_err());
    }
}
