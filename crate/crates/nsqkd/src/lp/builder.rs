//! Assembly of the eavesdropper LP over joint distributions
//! `P(a, b, e | x, y)` with a binary eavesdropper outcome `e`.
//!
//! Two equivalent formulations are built from a correlation table:
//!
//! * the **full** form over all 48 joint probabilities, constrained by the
//!   Alice–Bob marginals and the no-signaling conditions on the Alice–Eve
//!   and Bob–Eve marginals;
//! * the **reduced** form over the 24 even-outcome variables, where each
//!   odd variable has been eliminated against its marginal pair sum and
//!   the redundant constraint rows are dropped.
//!
//! [`verify_redundancies`] certifies, numerically, that every dropped row
//! (normalization, Eve-marginal no-signaling, and the odd-index
//! no-signaling rows) is a linear combination of the retained rows, so the
//! two forms describe the same polytope.

use thiserror::Error;

use super::instance::{dot, full_order, reduced_order, Equality, JointIndex, LpForm, LpInstance, Objective};
use crate::protocol::{validate_table, CorrelationTable, TableSource, TABLE_TOL};

/// Residual threshold for certifying a dropped row as a linear combination
/// of retained rows.
pub const REDUNDANCY_TOL: f64 = 1e-10;

/// Tolerance for reconstructed odd variables when lifting a reduced point.
pub const LIFT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("correlation table failed validation: {check} (residual {residual:.3e})")]
    InvalidTable { check: String, residual: f64 },
    #[error("reduction inapplicable: {detail}; build the full form instead")]
    ReductionInapplicable { detail: String },
    #[error("expected a {expected:?}-form instance, got {actual:?}")]
    WrongForm { expected: LpForm, actual: LpForm },
    #[error("point has {actual} entries, instance has {expected} variables")]
    PointDimension { expected: usize, actual: usize },
    #[error("lifted variable {label} would be {value:.3e} < -{LIFT_TOL:.0e}; input point infeasible")]
    InfeasibleLift { label: String, value: f64 },
}

fn require_valid(t: &CorrelationTable) -> Result<(), BuildError> {
    let report = validate_table(t);
    match report.first_failure() {
        None => Ok(()),
        Some(c) => Err(BuildError::InvalidTable { check: c.name.clone(), residual: c.residual }),
    }
}

/// Guessing-probability objective over the full variable order: the joint
/// mass where Eve's bit equals Bob's bit in the key basis,
/// `R(0,0) + R(1,1) = x0 + x4 + x3 + x7`.
pub fn guessing_objective_full() -> Objective {
    let mut coeffs = vec![0.0; 48];
    for ix in full_order().filter(|ix| ix.x == 0 && ix.y == 0 && ix.b() == ix.e()) {
        coeffs[ix.full_index()] = 1.0;
    }
    Objective { coeffs, constant: 0.0 }
}

/// The same objective over the reduced order, with the odd variables
/// substituted out: `(x0 + x4) − (x2 + x6) + ½`.
pub fn guessing_objective_reduced() -> Objective {
    let mut coeffs = vec![0.0; 24];
    for ix in reduced_order().filter(|ix| ix.x == 0 && ix.y == 0) {
        let k = ix.reduced_index().unwrap();
        coeffs[k] = if ix.b() == 0 { 1.0 } else { -1.0 };
    }
    Objective { coeffs, constant: 0.5 }
}

/// The 24 Alice–Bob marginal rows `Σ_e P(a, b, e | x, y) = t(a, b | x, y)`.
fn marginal_rows(t: &CorrelationTable) -> Vec<Equality> {
    let mut rows = Vec::with_capacity(24);
    for x in 0..3u8 {
        for y in 0..2u8 {
            for a in 0..2u8 {
                for b in 0..2u8 {
                    let mut coeffs = vec![0.0; 48];
                    for e in 0..2u8 {
                        coeffs[JointIndex::new(x, y, a, b, e).full_index()] = 1.0;
                    }
                    rows.push(Equality {
                        coeffs,
                        rhs: t.prob(x, y, a, b),
                        label: format!("marginal(x={x},y={y},a={a},b={b})"),
                    });
                }
            }
        }
    }
    rows
}

/// Alice–Eve no-signaling rows `Σ_b P(a,b,e|x,0) = Σ_b P(a,b,e|x,1)` for
/// the given Eve outcomes (all of `0..2` in the full form, `e = 0` only
/// among the retained reduced rows).
fn alice_eve_rows(eve_outcomes: &[u8]) -> Vec<Equality> {
    let mut rows = Vec::new();
    for x in 0..3u8 {
        for a in 0..2u8 {
            for &e in eve_outcomes {
                let mut coeffs = vec![0.0; 48];
                for b in 0..2u8 {
                    coeffs[JointIndex::new(x, 0, a, b, e).full_index()] += 1.0;
                    coeffs[JointIndex::new(x, 1, a, b, e).full_index()] -= 1.0;
                }
                rows.push(Equality {
                    coeffs,
                    rhs: 0.0,
                    label: format!("alice-eve-ns(x={x},a={a},e={e})"),
                });
            }
        }
    }
    rows
}

/// Bob–Eve no-signaling rows, chained over Alice's settings:
/// `Σ_a P(a,b,e|0,y) = Σ_a P(a,b,e|1,y)` and
/// `Σ_a P(a,b,e|1,y) = Σ_a P(a,b,e|2,y)`.
fn bob_eve_rows(eve_outcomes: &[u8]) -> Vec<Equality> {
    let mut rows = Vec::new();
    for y in 0..2u8 {
        for b in 0..2u8 {
            for &e in eve_outcomes {
                for (x_left, x_right) in [(0u8, 1u8), (1, 2)] {
                    let mut coeffs = vec![0.0; 48];
                    for a in 0..2u8 {
                        coeffs[JointIndex::new(x_left, y, a, b, e).full_index()] += 1.0;
                        coeffs[JointIndex::new(x_right, y, a, b, e).full_index()] -= 1.0;
                    }
                    rows.push(Equality {
                        coeffs,
                        rhs: 0.0,
                        label: format!("bob-eve-ns(y={y},b={b},e={e},link={x_left}-{x_right})"),
                    });
                }
            }
        }
    }
    rows
}

/// Build the full 48-variable form. Normalization and the Eve-marginal
/// no-signaling rows are omitted; they are implied by the rows kept here
/// (see [`verify_redundancies`]).
pub fn build_full(t: &CorrelationTable) -> Result<LpInstance, BuildError> {
    require_valid(t)?;
    let mut equalities = marginal_rows(t);
    equalities.extend(alice_eve_rows(&[0, 1]));
    equalities.extend(bob_eve_rows(&[0, 1]));
    let inst = LpInstance {
        form: LpForm::Full,
        p: werner_parameter_of(t),
        var_names: full_order().map(JointIndex::label).collect(),
        objective: guessing_objective_full(),
        equalities,
        lower: vec![0.0; 48],
        upper: vec![1.0; 48],
        };
    debug_assert!(inst.validate().is_ok());
    Ok(inst)
}

/// Build the reduced 24-variable form. Each even variable is boxed by its
/// marginal pair sum, and only the even-outcome no-signaling rows remain.
///
/// Requires the pairwise-equal structure (equal diagonal and equal
/// off-diagonal entries per setting); tables without it are routed to
/// [`build_full`].
pub fn build_reduced(t: &CorrelationTable) -> Result<LpInstance, BuildError> {
    require_valid(t)?;
    if !t.has_symmetric_structure(TABLE_TOL) {
        return Err(BuildError::ReductionInapplicable {
            detail: "table lacks pairwise-equal diagonal/off-diagonal marginals".into(),
        });
    }

    // Box bounds: 0 <= B_2k <= pair total, the pair total being the
    // Alice-Bob marginal shared with the eliminated odd partner.
    let upper: Vec<f64> = reduced_order().map(|ix| t.prob(ix.x, ix.y, ix.a(), ix.b())).collect();

    let mut equalities = Vec::with_capacity(14);
    for row in alice_eve_rows(&[0]).into_iter().chain(bob_eve_rows(&[0])) {
        equalities.push(project_row(&row));
    }

    let inst = LpInstance {
        form: LpForm::Reduced,
        p: werner_parameter_of(t),
        var_names: reduced_order().map(JointIndex::label).collect(),
        objective: guessing_objective_reduced(),
        equalities,
        lower: vec![0.0; 24],
        upper,
    };
    debug_assert!(inst.validate().is_ok());
    Ok(inst)
}

/// Restrict a full-space row touching only even outcomes to the reduced
/// variable order.
fn project_row(row: &Equality) -> Equality {
    let mut coeffs = vec![0.0; 24];
    for ix in full_order() {
        let c = row.coeffs[ix.full_index()];
        if c != 0.0 {
            let k = ix
                .reduced_index()
                .expect("row touches an odd outcome; not projectable");
            coeffs[k] = c;
        }
    }
    Equality { coeffs, rhs: row.rhs, label: row.label.clone() }
}

fn werner_parameter_of(t: &CorrelationTable) -> Option<f64> {
    (t.source() == TableSource::WernerModel).then(|| t.key_basis_correlation())
}

/// Reconstruct the full 48-entry point from a reduced one: each odd
/// variable is its pair total minus the even partner. Reconstructed values
/// in `[-LIFT_TOL, 0)` are clamped to zero; anything lower is an error.
pub fn lift_solution(reduced: &LpInstance, point: &[f64]) -> Result<Vec<f64>, BuildError> {
    if reduced.form != LpForm::Reduced {
        return Err(BuildError::WrongForm { expected: LpForm::Reduced, actual: reduced.form });
    }
    if point.len() != reduced.num_vars() {
        return Err(BuildError::PointDimension { expected: reduced.num_vars(), actual: point.len() });
    }
    let mut full = vec![0.0; 48];
    for ix in reduced_order() {
        let k = ix.reduced_index().unwrap();
        let even = point[k];
        // lower bounds are all zero, so the upper bound is the pair total.
        let odd = reduced.upper[k] - even;
        let odd_ix = JointIndex { x: ix.x, y: ix.y, outcome: ix.outcome + 1 };
        if odd < -LIFT_TOL {
            return Err(BuildError::InfeasibleLift { label: odd_ix.label(), value: odd });
        }
        full[ix.full_index()] = even;
        full[odd_ix.full_index()] = odd.max(0.0);
    }
    Ok(full)
}

/// The point that splits every Alice–Bob marginal equally over Eve's
/// outcomes. It satisfies all constraints of either form.
pub fn uniform_feasible_point(t: &CorrelationTable, form: LpForm) -> Vec<f64> {
    match form {
        LpForm::Full => full_order()
            .map(|ix| t.prob(ix.x, ix.y, ix.a(), ix.b()) / 2.0)
            .collect(),
        LpForm::Reduced => reduced_order()
            .map(|ix| t.prob(ix.x, ix.y, ix.a(), ix.b()) / 2.0)
            .collect(),
    }
}

/// Certification result for one dropped constraint row.
#[derive(Debug, Clone)]
pub struct RedundancyRow {
    pub label: String,
    pub family: &'static str,
    /// Least-squares residual of representing the row (coefficients and
    /// right-hand side jointly) in the span of the retained rows.
    pub residual: f64,
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct RedundancyReport {
    pub rows: Vec<RedundancyRow>,
    pub threshold: f64,
}

impl RedundancyReport {
    pub fn all_certified(&self) -> bool {
        self.rows.iter().all(|r| r.certified)
    }

    pub fn family(&self, family: &str) -> impl Iterator<Item = &RedundancyRow> {
        self.rows.iter().filter(move |r| r.family == family)
    }
}

/// Certify the constraint eliminations behind both forms: the per-setting
/// normalization rows, the Eve-marginal no-signaling rows, and the
/// odd-outcome no-signaling rows must each be a linear combination of the
/// retained rows (the 24 marginal rows plus the 14 even-outcome
/// no-signaling rows, in the full variable space).
///
/// A failed certification signals a builder bug, not a table problem, and
/// is reported per row rather than raised as an error.
pub fn verify_redundancies(t: &CorrelationTable) -> Result<RedundancyReport, BuildError> {
    require_valid(t)?;

    let mut retained = marginal_rows(t);
    retained.extend(alice_eve_rows(&[0]));
    retained.extend(bob_eve_rows(&[0]));
    let basis = OrthoBasis::from_rows(&retained.iter().map(augment).collect::<Vec<_>>());

    let mut dropped: Vec<(&'static str, Equality)> = Vec::new();

    // Normalization: each setting's eight joint probabilities sum to one.
    for x in 0..3u8 {
        for y in 0..2u8 {
            let mut coeffs = vec![0.0; 48];
            for outcome in 0..8u8 {
                coeffs[JointIndex { x, y, outcome }.full_index()] = 1.0;
            }
            dropped.push((
                "normalization",
                Equality { coeffs, rhs: 1.0, label: format!("normalization(x={x},y={y})") },
            ));
        }
    }

    // Eve-marginal no-signaling: P(e | x, y) = P(e | 0, 0) for the five
    // non-key settings.
    for x in 0..3u8 {
        for y in 0..2u8 {
            if (x, y) == (0, 0) {
                continue;
            }
            for e in 0..2u8 {
                let mut coeffs = vec![0.0; 48];
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        coeffs[JointIndex::new(x, y, a, b, e).full_index()] += 1.0;
                        coeffs[JointIndex::new(0, 0, a, b, e).full_index()] -= 1.0;
                    }
                }
                dropped.push((
                    "eve-marginal",
                    Equality { coeffs, rhs: 0.0, label: format!("eve-marginal(x={x},y={y},e={e})") },
                ));
            }
        }
    }

    // The odd-outcome halves of the no-signaling families.
    for row in alice_eve_rows(&[1]) {
        dropped.push(("alice-eve-ns-dropped", row));
    }
    for row in bob_eve_rows(&[1]) {
        dropped.push(("bob-eve-ns-dropped", row));
    }

    let rows = dropped
        .into_iter()
        .map(|(family, row)| {
            let residual = basis.projection_residual(&augment(&row));
            RedundancyRow { label: row.label, family, residual, certified: residual <= REDUNDANCY_TOL }
        })
        .collect();

    Ok(RedundancyReport { rows, threshold: REDUNDANCY_TOL })
}

/// Row as a vector over coefficients plus right-hand side, so linear
/// combination certificates account for both sides of the equation.
fn augment(row: &Equality) -> Vec<f64> {
    let mut v = row.coeffs.clone();
    v.push(row.rhs);
    v
}

/// Orthonormal basis of a row span, via modified Gram-Schmidt with
/// reorthogonalization.
struct OrthoBasis {
    q: Vec<Vec<f64>>,
}

impl OrthoBasis {
    fn from_rows(rows: &[Vec<f64>]) -> Self {
        let mut q: Vec<Vec<f64>> = Vec::new();
        for row in rows {
            let mut v = row.clone();
            for _ in 0..2 {
                for qi in &q {
                    let coeff = dot(qi, &v);
                    for (vj, qj) in v.iter_mut().zip(qi) {
                        *vj -= coeff * qj;
                    }
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-12 {
                for vj in &mut v {
                    *vj /= norm;
                }
                q.push(v);
            }
        }
        Self { q }
    }

    /// Norm of the component of `row` orthogonal to the span.
    fn projection_residual(&self, row: &[f64]) -> f64 {
        let mut v = row.to_vec();
        for _ in 0..2 {
            for qi in &self.q {
                let coeff = dot(qi, &v);
                for (vj, qj) in v.iter_mut().zip(qi) {
                    *vj -= coeff * qj;
                }
            }
        }
        dot(&v, &v).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{werner_correlations, WernerParameter};

    fn table(p: f64) -> CorrelationTable {
        werner_correlations(WernerParameter::new(p).unwrap())
    }

    #[test]
    fn full_form_shape_and_rhs() {
        let inst = build_full(&table(1.0)).unwrap();
        assert_eq!(inst.num_vars(), 48);
        assert_eq!(inst.equalities.len(), 24 + 12 + 16);
        assert_eq!(inst.form, LpForm::Full);
        assert_eq!(inst.p, Some(1.0));

        // Key-basis diagonal marginal rows have rhs 1/2 at p = 1.
        let diag = inst
            .equalities
            .iter()
            .find(|r| r.label == "marginal(x=0,y=0,a=0,b=0)")
            .unwrap();
        assert_eq!(diag.rhs, 0.5);

        // At p = 0 every marginal rhs is 1/4.
        let inst0 = build_full(&table(0.0)).unwrap();
        for row in inst0.equalities.iter().take(24) {
            assert_eq!(row.rhs, 0.25);
        }
    }

    #[test]
    fn uniform_point_is_feasible_for_both_forms() {
        for &p in &[0.0, 0.3, 0.77, 1.0] {
            let t = table(p);
            let full = build_full(&t).unwrap();
            let u = uniform_feasible_point(&t, LpForm::Full);
            assert!(full.is_feasible(&u, 1e-12), "full uniform infeasible at p={p}");

            let reduced = build_reduced(&t).unwrap();
            let u = uniform_feasible_point(&t, LpForm::Reduced);
            assert!(reduced.is_feasible(&u, 1e-12), "reduced uniform infeasible at p={p}");
            // The even split makes Eve's guess uncorrelated with Bob's bit.
            assert!((reduced.objective.evaluate(&u) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_form_shape_and_bounds_at_noiseless_point() {
        let inst = build_reduced(&table(1.0)).unwrap();
        assert_eq!(inst.num_vars(), 24);
        assert_eq!(inst.equalities.len(), 14);
        assert_eq!(inst.var_names[0], "x0");
        assert_eq!(inst.var_names[23], "w6");

        let ub = |name: &str| {
            let j = inst.var_names.iter().position(|n| n == name).unwrap();
            inst.upper[j]
        };
        assert_eq!(ub("x0"), 0.5);
        assert_eq!(ub("x2"), 0.0);
        let alpha = (2.0 + 2.0_f64.sqrt()) / 8.0;
        let beta = (2.0 - 2.0_f64.sqrt()) / 8.0;
        assert!((ub("z0") - alpha).abs() < 1e-15);
        assert!((ub("w0") - beta).abs() < 1e-15);
        assert!((ub("w2") - alpha).abs() < 1e-15);
        for j in 0..24 {
            assert_eq!(inst.lower[j], 0.0);
        }
    }

    #[test]
    fn objective_representations_agree_through_lifting() {
        let t = table(0.62);
        let reduced = build_reduced(&t).unwrap();
        let full_obj = guessing_objective_full();
        let point = uniform_feasible_point(&t, LpForm::Reduced);
        let lifted = lift_solution(&reduced, &point).unwrap();
        let direct = full_obj.evaluate(&lifted);
        let substituted = reduced.objective.evaluate(&point);
        assert!((direct - substituted).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_table_is_rejected_by_reduction() {
        // A valid no-signaling table without the pairwise-equal structure:
        // Alice's outcome is a deterministic 0, Bob's is uniform.
        let mut probs = [[[[0.0_f64; 2]; 2]; 2]; 3];
        for x in 0..3 {
            for y in 0..2 {
                probs[x][y][0][0] = 0.5;
                probs[x][y][0][1] = 0.5;
            }
        }
        let t = CorrelationTable::from_entries(probs, TableSource::Ingested);
        assert!(validate_table(&t).is_valid());
        let err = build_reduced(&t).unwrap_err();
        assert!(matches!(err, BuildError::ReductionInapplicable { .. }));
        build_full(&t).unwrap();
    }

    #[test]
    fn invalid_table_is_rejected_by_all_builders() {
        let mut probs = table(0.5).joint(0, 0);
        probs[0][0] -= 0.01; // break normalization at (0,0)
        let mut full = [[[[0.25_f64; 2]; 2]; 2]; 3];
        full[0][0] = probs;
        let t = CorrelationTable::from_entries(full, TableSource::Ingested);
        for err in [
            build_full(&t).unwrap_err(),
            build_reduced(&t).unwrap_err(),
            verify_redundancies(&t).unwrap_err(),
        ] {
            match err {
                BuildError::InvalidTable { check, .. } => {
                    assert!(check.contains("x=0,y=0"), "{check}")
                }
                other => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn dropped_rows_are_certified() {
        let report = verify_redundancies(&table(0.8)).unwrap();
        assert_eq!(report.rows.len(), 6 + 10 + 6 + 8);
        assert_eq!(report.family("normalization").count(), 6);
        assert_eq!(report.family("eve-marginal").count(), 10);
        assert_eq!(report.family("alice-eve-ns-dropped").count(), 6);
        assert_eq!(report.family("bob-eve-ns-dropped").count(), 8);
        for row in &report.rows {
            assert!(row.certified, "{} residual {:.3e}", row.label, row.residual);
        }
    }

    #[test]
    fn lift_of_uniform_split_at_p_zero_is_flat() {
        let t = table(0.0);
        let reduced = build_reduced(&t).unwrap();
        let lifted = lift_solution(&reduced, &uniform_feasible_point(&t, LpForm::Reduced)).unwrap();
        for v in lifted {
            assert!((v - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn lift_rejects_overfull_even_component() {
        let t = table(0.5);
        let reduced = build_reduced(&t).unwrap();
        let mut point = uniform_feasible_point(&t, LpForm::Reduced);
        point[0] = reduced.upper[0] + 1e-3; // odd partner would go negative
        let err = lift_solution(&reduced, &point).unwrap_err();
        assert!(matches!(err, BuildError::InfeasibleLift { .. }));
    }
}
