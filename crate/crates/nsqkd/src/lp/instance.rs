//! Canonical LP representation: variables with box bounds, equality
//! constraints, and a linear objective to maximize.
//!
//! Instances are immutable after construction and safe to share read-only
//! across solver workers. The JSON export schema
//! `{num_vars, var_names, objective, equalities, bounds, metadata}` allows
//! cross-checking against any external LP solver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which formulation an instance carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpForm {
    /// All 48 joint probabilities `P(a, b, e | x, y)`.
    Full,
    /// The 24 even-outcome variables left after eliminating the odd ones
    /// through the marginal pair sums.
    Reduced,
}

/// Column blocks are labeled `x, y, z, u, v, w` for the setting pairs
/// `(0,0), (0,1), (1,0), (1,1), (2,0), (2,1)` in that fixed order.
pub const BLOCK_LETTERS: [char; 6] = ['x', 'y', 'z', 'u', 'v', 'w'];

/// One joint-probability variable: the setting pair and the outcome triple
/// `(a, b, e)` encoded as the binary number `abe` in `0..8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointIndex {
    pub x: u8,
    pub y: u8,
    pub outcome: u8,
}

impl JointIndex {
    pub fn new(x: u8, y: u8, a: u8, b: u8, e: u8) -> Self {
        debug_assert!(x < 3 && y < 2 && a < 2 && b < 2 && e < 2);
        Self { x, y, outcome: a * 4 + b * 2 + e }
    }

    pub fn a(self) -> u8 {
        self.outcome >> 2 & 1
    }

    pub fn b(self) -> u8 {
        self.outcome >> 1 & 1
    }

    pub fn e(self) -> u8 {
        self.outcome & 1
    }

    /// Block position in the fixed ordering `x, y, z, u, v, w`.
    pub fn block(self) -> usize {
        (2 * self.x + self.y) as usize
    }

    /// Flat column index in the full 48-variable form.
    pub fn full_index(self) -> usize {
        self.block() * 8 + self.outcome as usize
    }

    /// Flat column index in the reduced 24-variable form. Only even
    /// outcomes survive the reduction.
    pub fn reduced_index(self) -> Option<usize> {
        (self.outcome % 2 == 0).then(|| self.block() * 4 + self.outcome as usize / 2)
    }

    /// Column label, e.g. `x5` for `P(1, 0, 1 | 0, 0)`.
    pub fn label(self) -> String {
        format!("{}{}", BLOCK_LETTERS[self.block()], self.outcome)
    }
}

/// All 48 joint indices in the fixed column order of the full form.
pub fn full_order() -> impl Iterator<Item = JointIndex> {
    (0..3u8).flat_map(|x| {
        (0..2u8).flat_map(move |y| (0..8u8).map(move |outcome| JointIndex { x, y, outcome }))
    })
}

/// The 24 even-outcome indices in the fixed column order of the reduced form.
pub fn reduced_order() -> impl Iterator<Item = JointIndex> {
    full_order().filter(|ix| ix.outcome % 2 == 0)
}

/// Linear objective `coeffs · point + constant`, to be maximized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl Objective {
    pub fn evaluate(&self, point: &[f64]) -> f64 {
        dot(&self.coeffs, point) + self.constant
    }
}

/// One equality row `coeffs · point = rhs`. The label names the constraint
/// family for diagnostics; it is not part of the export schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Equality {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub label: String,
}

impl Equality {
    pub fn residual(&self, point: &[f64]) -> f64 {
        (dot(&self.coeffs, point) - self.rhs).abs()
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite bound on variable {0}")]
    NonFiniteBound(usize),
    #[error("empty bound interval on variable {index}: [{lower}, {upper}]")]
    EmptyBound { index: usize, lower: f64, upper: f64 },
    #[error("malformed LP JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A box-bounded equality-form LP: maximize the objective subject to
/// `equalities` and `lower ≤ point ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub form: LpForm,
    /// Werner parameter the instance was built from, when applicable.
    pub p: Option<f64>,
    pub var_names: Vec<String>,
    pub objective: Objective,
    pub equalities: Vec<Equality>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpInstance {
    pub fn num_vars(&self) -> usize {
        self.var_names.len()
    }

    /// Consistency of dimensions and finiteness of bounds.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.num_vars();
        if self.objective.coeffs.len() != n {
            return Err(InstanceError::Dimension(format!(
                "objective has {} coefficients for {} variables",
                self.objective.coeffs.len(),
                n
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(InstanceError::Dimension(format!(
                "bounds have lengths {}/{} for {} variables",
                self.lower.len(),
                self.upper.len(),
                n
            )));
        }
        for (i, row) in self.equalities.iter().enumerate() {
            if row.coeffs.len() != n {
                return Err(InstanceError::Dimension(format!(
                    "equality {i} has {} coefficients for {n} variables",
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() {
                return Err(InstanceError::Dimension(format!("equality {i} has non-finite rhs")));
            }
        }
        for j in 0..n {
            if !self.lower[j].is_finite() || !self.upper[j].is_finite() {
                return Err(InstanceError::NonFiniteBound(j));
            }
            if self.lower[j] > self.upper[j] {
                return Err(InstanceError::EmptyBound {
                    index: j,
                    lower: self.lower[j],
                    upper: self.upper[j],
                });
            }
        }
        Ok(())
    }

    /// Same instance with the objective replaced; used for probing the
    /// feasible set in arbitrary directions.
    pub fn with_objective(&self, coeffs: Vec<f64>, constant: f64) -> Self {
        assert_eq!(coeffs.len(), self.num_vars());
        let mut inst = self.clone();
        inst.objective = Objective { coeffs, constant };
        inst
    }

    /// Largest equality residual of `point`.
    pub fn max_equality_residual(&self, point: &[f64]) -> f64 {
        self.equalities
            .iter()
            .map(|row| row.residual(point))
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `point` (zero when inside the box).
    pub fn max_bound_violation(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .enumerate()
            .map(|(j, &v)| (self.lower[j] - v).max(v - self.upper[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Whether `point` satisfies all constraints within `tol`.
    pub fn is_feasible(&self, point: &[f64], tol: f64) -> bool {
        point.len() == self.num_vars()
            && self.max_bound_violation(point) <= tol
            && self.max_equality_residual(point) <= tol
    }

    /// Serialize to the documented export schema.
    pub fn to_export_json(&self) -> String {
        let schema = ExportSchema {
            num_vars: self.num_vars(),
            var_names: self.var_names.clone(),
            objective: self.objective.clone(),
            equalities: self
                .equalities
                .iter()
                .map(|row| ExportEquality { coeffs: row.coeffs.clone(), rhs: row.rhs })
                .collect(),
            bounds: ExportBounds { lower: self.lower.clone(), upper: self.upper.clone() },
            metadata: ExportMetadata { p: self.p, form: self.form },
        };
        serde_json::to_string_pretty(&schema).expect("LP serialization")
    }

    /// Parse the export schema back into an instance. Row labels are not
    /// part of the schema and come back as generic `eq{i}` names.
    pub fn from_export_json(text: &str) -> Result<Self, InstanceError> {
        let schema: ExportSchema = serde_json::from_str(text)?;
        if schema.var_names.len() != schema.num_vars {
            return Err(InstanceError::Dimension(format!(
                "num_vars = {} but {} names given",
                schema.num_vars,
                schema.var_names.len()
            )));
        }
        let inst = LpInstance {
            form: schema.metadata.form,
            p: schema.metadata.p,
            var_names: schema.var_names,
            objective: schema.objective,
            equalities: schema
                .equalities
                .into_iter()
                .enumerate()
                .map(|(i, row)| Equality { coeffs: row.coeffs, rhs: row.rhs, label: format!("eq{i}") })
                .collect(),
            lower: schema.bounds.lower,
            upper: schema.bounds.upper,
        };
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Serialize, Deserialize)]
struct ExportSchema {
    num_vars: usize,
    var_names: Vec<String>,
    objective: Objective,
    equalities: Vec<ExportEquality>,
    bounds: ExportBounds,
    metadata: ExportMetadata,
}

#[derive(Serialize, Deserialize)]
struct ExportEquality {
    coeffs: Vec<f64>,
    rhs: f64,
}

#[derive(Serialize, Deserialize)]
struct ExportBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ExportMetadata {
    p: Option<f64>,
    form: LpForm,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_index_bijection() {
        let ix = JointIndex::new(0, 0, 1, 0, 1);
        assert_eq!(ix.outcome, 5);
        assert_eq!(ix.label(), "x5");
        assert_eq!((ix.a(), ix.b(), ix.e()), (1, 0, 1));

        let all: Vec<_> = full_order().collect();
        assert_eq!(all.len(), 48);
        for (flat, ix) in all.iter().enumerate() {
            assert_eq!(ix.full_index(), flat);
        }
        let evens: Vec<_> = reduced_order().collect();
        assert_eq!(evens.len(), 24);
        for (flat, ix) in evens.iter().enumerate() {
            assert_eq!(ix.reduced_index(), Some(flat));
        }
        assert_eq!(JointIndex::new(2, 1, 1, 1, 1).full_index(), 47);
        assert_eq!(JointIndex::new(0, 1, 0, 0, 0).label(), "y0");
    }

    #[test]
    fn validate_flags_bad_dimensions_and_bounds() {
        let inst = LpInstance {
            form: LpForm::Reduced,
            p: None,
            var_names: vec!["a".into(), "b".into()],
            objective: Objective { coeffs: vec![1.0, 0.0], constant: 0.0 },
            equalities: vec![Equality { coeffs: vec![1.0, 1.0], rhs: 1.0, label: "sum".into() }],
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 1.0],
        };
        inst.validate().unwrap();

        let mut bad = inst.clone();
        bad.upper[1] = f64::INFINITY;
        assert!(matches!(bad.validate(), Err(InstanceError::NonFiniteBound(1))));

        let mut bad = inst.clone();
        bad.lower[0] = 2.0;
        assert!(matches!(bad.validate(), Err(InstanceError::EmptyBound { index: 0, .. })));

        let mut bad = inst;
        bad.objective.coeffs.pop();
        assert!(matches!(bad.validate(), Err(InstanceError::Dimension(_))));
    }
}
