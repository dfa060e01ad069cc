//! Polytope operations on `P_f` and the integral construction that turns a
//! real-valued rank function into a table of partition counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::setfn::{check_set_function, contains, full_set, RankFunction, Subset, ValidationReport, TOL};

/// Added before flooring so that products like `0.6 * 10` that land just
/// below an integer in binary floating point still floor to that integer.
pub const FLOOR_GUARD: f64 = 1e-9;

/// Integer capacity table over subsets of agents, measured in partitions.
pub trait CapacityTable {
    fn n_agents(&self) -> usize;
    /// Number of equal partitions `M` the resource was split into.
    fn partitions(&self) -> u64;
    fn capacity(&self, s: Subset) -> u64;
}

fn check_dimension(f: &RankFunction, x: &[f64]) -> Result<()> {
    if x.len() != f.n_agents() {
        return Err(Error::DimensionMismatch {
            got: x.len(),
            expected: f.n_agents(),
        });
    }
    Ok(())
}

fn subset_sum(x: &[f64], s: Subset) -> f64 {
    x.iter()
        .enumerate()
        .filter(|(i, _)| contains(s, *i))
        .map(|(_, v)| v)
        .sum()
}

/// Membership in `P_f`: `x ≥ 0` and `Σ_{n∈S} x_n ≤ f(S)` for every `S`.
pub fn contains_point(f: &RankFunction, x: &[f64]) -> Result<bool> {
    check_dimension(f, x)?;
    if x.iter().any(|v| *v < -TOL) {
        return Ok(false);
    }
    Ok((1..=f.full_set()).all(|s| subset_sum(x, s) <= f.at(s) + TOL))
}

pub fn on_dominant_face(f: &RankFunction, x: &[f64], tol: f64) -> Result<bool> {
    if !contains_point(f, x)? {
        return Err(Error::OutsidePolymatroid);
    }
    Ok((x.iter().sum::<f64>() - f.total()).abs() <= tol)
}

/// Residual polymatroid after allocating `x_star`:
/// `f̃(S) = min_{T ⊇ S} (f(T) − Σ_{n∈T} x*_n)`.
pub fn contract(f: &RankFunction, x_star: &[f64]) -> Result<RankFunction> {
    if !contains_point(f, x_star)? {
        return Err(Error::OutsidePolymatroid);
    }
    let n = f.n_agents();
    let mut residual: Vec<f64> = (0..=f.full_set())
        .map(|t| f.at(t) - subset_sum(x_star, t))
        .collect();
    // superset-min transform, one agent at a time
    for i in 0..n {
        for s in 0..=f.full_set() {
            if !contains(s, i) {
                let with_i = residual[(s | 1 << i) as usize];
                if with_i < residual[s as usize] {
                    residual[s as usize] = with_i;
                }
            }
        }
    }
    // tolerance noise from points on the boundary
    for v in residual.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    RankFunction::from_table(n, residual)
}

/// Smallest `M` with `M ≥ 2 / Δf`.
pub fn partition_threshold(min_distance: f64) -> Result<u64> {
    if !(min_distance > 0.0) {
        return Err(Error::ZeroMinDistance(min_distance));
    }
    Ok(((2.0 / min_distance) - FLOOR_GUARD).ceil().max(1.0) as u64)
}

fn floor_table(f: &RankFunction, partitions: u64) -> Vec<u64> {
    f.values()
        .iter()
        .map(|v| (v * partitions as f64 + FLOOR_GUARD).floor() as u64)
        .collect()
}

fn check_integer_table(n_agents: usize, values: &[u64]) -> ValidationReport {
    check_set_function(n_agents, |s| values[s as usize] as f64, 0.0)
}

/// Integer-valued polymatroid rank function with `f̃(N) = M`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "IntegerTable", into = "IntegerTable")]
pub struct IntegralRankFunction {
    n_agents: usize,
    partitions: u64,
    values: Vec<u64>,
}

impl IntegralRankFunction {
    /// Accepts a table only if it is an exact integral polymatroid whose total
    /// equals the partition count.
    pub fn from_table(n_agents: usize, partitions: u64, values: Vec<u64>) -> Result<Self> {
        crate::setfn::check_ground_set(n_agents)?;
        let expected = 1usize << n_agents;
        if values.len() != expected {
            return Err(Error::TableSize {
                got: values.len(),
                expected,
            });
        }
        let report = check_integer_table(n_agents, &values);
        if !report.is_valid {
            return Err(Error::InvalidRankFunction(format!(
                "integer table fails {} checks",
                report.violations.len()
            )));
        }
        if values[full_set(n_agents) as usize] != partitions {
            return Err(Error::InvalidRankFunction(format!(
                "total {} differs from partition count {partitions}",
                values[full_set(n_agents) as usize]
            )));
        }
        Ok(IntegralRankFunction {
            n_agents,
            partitions,
            values,
        })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    /// The same table with every entry divided by `M`.
    pub fn scaled(&self) -> RankFunction {
        let m = self.partitions as f64;
        RankFunction::from_table(self.n_agents, self.values.iter().map(|v| *v as f64 / m).collect())
            .expect("integral table has a valid shape")
    }
}

impl CapacityTable for IntegralRankFunction {
    fn n_agents(&self) -> usize {
        self.n_agents
    }
    fn partitions(&self) -> u64 {
        self.partitions
    }
    fn capacity(&self, s: Subset) -> u64 {
        self.values[s as usize]
    }
}

/// Floor-quantized table with no validity guarantee. Used to reproduce what
/// goes wrong when the resource is partitioned without enough divisions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerRegion {
    pub n_agents: usize,
    pub partitions: u64,
    pub values: Vec<u64>,
    pub is_polymatroid: bool,
}

impl CapacityTable for IntegerRegion {
    fn n_agents(&self) -> usize {
        self.n_agents
    }
    fn partitions(&self) -> u64 {
        self.partitions
    }
    fn capacity(&self, s: Subset) -> u64 {
        self.values[s as usize]
    }
}

/// Integral polymatroid construction: `f̃(S) = ⌊M·f(S)⌋`.
///
/// Without `partitions`, `M` is the smallest integer with `M ≥ 2/Δf`. A
/// smaller user-supplied `M` is accepted when the floored table happens to be
/// an integral polymatroid anyway; the threshold is sufficient, not necessary.
/// This also covers rank functions with `Δf = 0` whose scaled table is
/// already integral.
pub fn quantize(f: &RankFunction, partitions: Option<u64>) -> Result<IntegralRankFunction> {
    let report = f.validate(TOL);
    if !report.is_valid {
        return Err(Error::InvalidRankFunction(format!(
            "{} violations",
            report.violations.len()
        )));
    }
    if (f.total() - 1.0).abs() > TOL {
        return Err(Error::NotNormalized(f.total()));
    }
    let distance = match f.n_agents() {
        1 => None,
        _ => Some(f.min_distance()?),
    };
    let threshold = distance.filter(|d| *d > 0.0).map(partition_threshold).transpose()?;
    let partitions = match (partitions, threshold, distance) {
        (Some(0), _, _) => {
            return Err(Error::InvalidParameter("partition count must be positive".into()))
        }
        (Some(m), _, _) => m,
        (None, Some(t), _) => t,
        (None, None, Some(d)) => return Err(Error::ZeroMinDistance(d)),
        (None, None, None) => {
            return Err(Error::InvalidParameter(
                "a single agent has no minimum distance; supply M explicitly".into(),
            ))
        }
    };
    let values = floor_table(f, partitions);
    IntegralRankFunction::from_table(f.n_agents(), partitions, values).map_err(|_| match threshold {
        Some(threshold) => Error::InadmissiblePartitions {
            partitions,
            threshold,
        },
        None => Error::ZeroMinDistance(distance.unwrap_or(0.0)),
    })
}

/// Floor-quantizes without requiring the result to be a polymatroid.
pub fn naive_quantize(f: &RankFunction, partitions: u64) -> IntegerRegion {
    let values = floor_table(f, partitions);
    let is_polymatroid = check_integer_table(f.n_agents(), &values).is_valid;
    IntegerRegion {
        n_agents: f.n_agents(),
        partitions,
        values,
        is_polymatroid,
    }
}

#[derive(Serialize, Deserialize)]
struct IntegerTable {
    n_agents: usize,
    #[serde(rename = "M")]
    partitions: u64,
    values: BTreeMap<u32, u64>,
}

impl From<IntegralRankFunction> for IntegerTable {
    fn from(f: IntegralRankFunction) -> Self {
        IntegerTable {
            n_agents: f.n_agents,
            partitions: f.partitions,
            values: f
                .values
                .iter()
                .enumerate()
                .map(|(s, v)| (s as u32, *v))
                .collect(),
        }
    }
}

impl TryFrom<IntegerTable> for IntegralRankFunction {
    type Error = Error;
    fn try_from(t: IntegerTable) -> Result<Self> {
        crate::setfn::check_ground_set(t.n_agents)?;
        let size = 1usize << t.n_agents;
        if t.values.len() != size || t.values.keys().any(|k| *k as usize >= size) {
            return Err(Error::TableSize {
                got: t.values.len(),
                expected: size,
            });
        }
        Self::from_table(t.n_agents, t.partitions, t.values.into_values().collect())
    }
}
