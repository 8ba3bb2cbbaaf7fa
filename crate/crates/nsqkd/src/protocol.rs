//! Protocol model: correlation tables for the three-setting/two-setting
//! protocol on a Werner state, plus validation of externally supplied tables.
//!
//! Alice measures in one of three bases at angles `0`, `π/4`, `−π/4`
//! (settings `x = 0, 1, 2`); Bob in one of two bases at angles `0`, `π/2`
//! (settings `y = 0, 1`). All measurements are binary. The key is distilled
//! from the `(x, y) = (0, 0)` outcomes.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use thiserror::Error;

/// Number of Alice settings.
pub const NUM_ALICE_SETTINGS: usize = 3;
/// Number of Bob settings.
pub const NUM_BOB_SETTINGS: usize = 2;
/// Number of (x, y) setting pairs.
pub const NUM_SETTING_PAIRS: usize = NUM_ALICE_SETTINGS * NUM_BOB_SETTINGS;

/// Tolerance for the numeric consistency checks on correlation tables.
pub const TABLE_TOL: f64 = 1e-12;

/// Diagonal weight of the correlated settings: `cos²(π/8) = (2 + √2)/4`.
///
/// The commonly quoted 0.854 is this value rounded to three digits; all
/// computations here use the closed form.
pub fn diagonal_weight() -> f64 {
    (2.0 + 2.0_f64.sqrt()) / 4.0
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("werner parameter {0} outside [0, 1]")]
    WernerParameterOutOfRange(f64),
    #[error("sifting probability {name} = {value} outside (0, 1]")]
    SiftingProbabilityOutOfRange { name: &'static str, value: f64 },
    #[error("entropy argument {0} outside [0, 1]")]
    EntropyArgumentOutOfRange(f64),
}

/// Structural errors raised while parsing a correlation-table JSON document.
///
/// These are distinct from numeric violations, which [`validate_table`]
/// reports per check.
#[derive(Debug, Error)]
pub enum TableParseError {
    #[error("malformed table JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("setting pair (x={x}, y={y}) out of range (x in 0..3, y in 0..2)")]
    SettingOutOfRange { x: u8, y: u8 },
    #[error("duplicate setting pair (x={x}, y={y})")]
    DuplicateSetting { x: u8, y: u8 },
    #[error("missing setting pair (x={x}, y={y})")]
    MissingSetting { x: u8, y: u8 },
    #[error("non-finite probability at (x={x}, y={y}, a={a}, b={b})")]
    NonFiniteEntry { x: u8, y: u8, a: u8, b: u8 },
}

/// Mixing weight of the Werner state, `p` in `[0, 1]`.
///
/// `p = 1` is the pure maximally entangled state, `p = 0` the maximally
/// mixed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WernerParameter(f64);

impl WernerParameter {
    pub fn new(p: f64) -> Result<Self, ProtocolError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(ProtocolError::WernerParameterOutOfRange(p));
        }
        Ok(Self(p))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// One measurement setting: the party, its setting index, and the basis
/// angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub party: Party,
    pub index: u8,
    pub angle: f64,
}

impl MeasurementSetting {
    /// Alice's setting `x` in `0..3`, at angles `0`, `π/4`, `−π/4`.
    pub fn alice(x: u8) -> Self {
        assert!((x as usize) < NUM_ALICE_SETTINGS, "alice setting out of range");
        let angle = match x {
            0 => 0.0,
            1 => FRAC_PI_4,
            _ => -FRAC_PI_4,
        };
        Self { party: Party::Alice, index: x, angle }
    }

    /// Bob's setting `y` in `0..2`, at angles `0`, `π/2`.
    pub fn bob(y: u8) -> Self {
        assert!((y as usize) < NUM_BOB_SETTINGS, "bob setting out of range");
        let angle = if y == 0 { 0.0 } else { FRAC_PI_2 };
        Self { party: Party::Bob, index: y, angle }
    }
}

/// Sifting weights for the setting choices. Carried for protocol fidelity
/// and echoed into reports; they never enter any computation (the analysis
/// is asymptotic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub q: f64,
    pub q_prime: f64,
}

impl ProtocolConfig {
    pub fn new(q: f64, q_prime: f64) -> Result<Self, ProtocolError> {
        for (name, value) in [("q", q), ("q_prime", q_prime)] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(ProtocolError::SiftingProbabilityOutOfRange { name, value });
            }
        }
        Ok(Self { q, q_prime })
    }
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { q: 1.0, q_prime: 1.0 }
    }
}

/// Where a correlation table came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableSource {
    WernerModel,
    Ingested,
}

/// The Alice–Bob marginals `P(a, b | x, y)` for the six setting pairs.
///
/// `probs[x][y][a][b]` is the probability of outcomes `(a, b)` under
/// settings `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    probs: [[[[f64; 2]; 2]; NUM_BOB_SETTINGS]; NUM_ALICE_SETTINGS],
    source: TableSource,
}

impl CorrelationTable {
    pub fn from_entries(
        probs: [[[[f64; 2]; 2]; NUM_BOB_SETTINGS]; NUM_ALICE_SETTINGS],
        source: TableSource,
    ) -> Self {
        Self { probs, source }
    }

    pub fn source(&self) -> TableSource {
        self.source
    }

    /// `P(a, b | x, y)`.
    pub fn prob(&self, x: u8, y: u8, a: u8, b: u8) -> f64 {
        self.probs[x as usize][y as usize][a as usize][b as usize]
    }

    /// The 2×2 joint for one setting pair, indexed `[a][b]`.
    pub fn joint(&self, x: u8, y: u8) -> [[f64; 2]; 2] {
        self.probs[x as usize][y as usize]
    }

    /// Alice's marginal `P(a | x, y) = Σ_b P(a, b | x, y)`.
    pub fn alice_marginal(&self, x: u8, y: u8, a: u8) -> f64 {
        self.prob(x, y, a, 0) + self.prob(x, y, a, 1)
    }

    /// Bob's marginal `P(b | x, y) = Σ_a P(a, b | x, y)`.
    pub fn bob_marginal(&self, x: u8, y: u8, b: u8) -> f64 {
        self.prob(x, y, 0, b) + self.prob(x, y, 1, b)
    }

    /// Outcome correlation of the key-generating pair `(x, y) = (0, 0)`:
    /// `P(a = b) − P(a ≠ b)`. Equals the Werner parameter exactly for
    /// model-generated tables, and serves as the recorded noise proxy for
    /// ingested ones.
    pub fn key_basis_correlation(&self) -> f64 {
        let j = self.joint(0, 0);
        (j[0][0] + j[1][1]) - (j[0][1] + j[1][0])
    }

    /// Whether every setting pair has equal diagonal entries and equal
    /// off-diagonal entries (within `tol`). The reduced LP form requires
    /// this pairwise-equal structure.
    pub fn has_symmetric_structure(&self, tol: f64) -> bool {
        (0..NUM_ALICE_SETTINGS as u8).all(|x| {
            (0..NUM_BOB_SETTINGS as u8).all(|y| {
                let j = self.joint(x, y);
                (j[0][0] - j[1][1]).abs() <= tol && (j[0][1] - j[1][0]).abs() <= tol
            })
        })
    }

    /// Parse the documented JSON schema: an object with key `"settings"`
    /// holding exactly six records `{x, y, probs: [[P00, P01], [P10, P11]]}`.
    /// Duplicate or missing setting pairs are rejected.
    pub fn from_json(text: &str) -> Result<Self, TableParseError> {
        let raw: RawTable = serde_json::from_str(text)?;
        let mut probs = [[[[f64::NAN; 2]; 2]; NUM_BOB_SETTINGS]; NUM_ALICE_SETTINGS];
        let mut seen = [[false; NUM_BOB_SETTINGS]; NUM_ALICE_SETTINGS];
        for rec in &raw.settings {
            if rec.x as usize >= NUM_ALICE_SETTINGS || rec.y as usize >= NUM_BOB_SETTINGS {
                return Err(TableParseError::SettingOutOfRange { x: rec.x, y: rec.y });
            }
            if seen[rec.x as usize][rec.y as usize] {
                return Err(TableParseError::DuplicateSetting { x: rec.x, y: rec.y });
            }
            seen[rec.x as usize][rec.y as usize] = true;
            for a in 0..2 {
                for b in 0..2 {
                    let v = rec.probs[a][b];
                    if !v.is_finite() {
                        return Err(TableParseError::NonFiniteEntry {
                            x: rec.x,
                            y: rec.y,
                            a: a as u8,
                            b: b as u8,
                        });
                    }
                    probs[rec.x as usize][rec.y as usize][a][b] = v;
                }
            }
        }
        for x in 0..NUM_ALICE_SETTINGS {
            for y in 0..NUM_BOB_SETTINGS {
                if !seen[x][y] {
                    return Err(TableParseError::MissingSetting { x: x as u8, y: y as u8 });
                }
            }
        }
        Ok(Self { probs, source: TableSource::Ingested })
    }

    /// Serialize to the documented JSON schema, settings ordered by (x, y).
    pub fn to_json(&self) -> String {
        let settings = (0..NUM_ALICE_SETTINGS as u8)
            .flat_map(|x| {
                (0..NUM_BOB_SETTINGS as u8).map(move |y| RawSetting {
                    x,
                    y,
                    probs: self.joint(x, y),
                })
            })
            .collect();
        serde_json::to_string_pretty(&RawTable { settings }).expect("table serialization")
    }
}

#[derive(Serialize, Deserialize)]
struct RawTable {
    settings: Vec<RawSetting>,
}

#[derive(Serialize, Deserialize)]
struct RawSetting {
    x: u8,
    y: u8,
    probs: [[f64; 2]; 2],
}

/// Joint outcome distribution of one basis pair on the Werner state:
/// `P(a, b) = ¼ · [1 + (−1)^(a⊕b) · p · cos(angle_a − angle_b)]`.
///
/// The difference convention `cos(angle_a − angle_b)` is what reproduces
/// the protocol's tabulated values at the settings above; see
/// [`werner_correlations`].
pub fn born_joint(angle_a: f64, angle_b: f64, p: WernerParameter) -> [[f64; 2]; 2] {
    let c = p.value() * (angle_a - angle_b).cos();
    let agree = 0.25 * (1.0 + c);
    let differ = 0.25 * (1.0 - c);
    [[agree, differ], [differ, agree]]
}

/// The exact six correlation tables of the protocol on a Werner state with
/// parameter `p`, in closed form:
///
/// * `(0,0)`: diagonal `p/2 + (1−p)/4`, off-diagonal `(1−p)/4`;
/// * `(0,1)`: all entries `1/4`;
/// * `(1,0)`, `(1,1)`, `(2,0)`: diagonal `α = cos²(π/8)·p/2 + (1−p)/4`,
///   off-diagonal `β = sin²(π/8)·p/2 + (1−p)/4`;
/// * `(2,1)`: diagonal `β`, off-diagonal `α`.
pub fn werner_correlations(p: WernerParameter) -> CorrelationTable {
    let pv = p.value();
    let mixed = (1.0 - pv) / 4.0;
    let entry = |weight: f64| weight * pv / 2.0 + mixed;

    let c = diagonal_weight();
    let key = pair_table(entry(1.0), entry(0.0));
    let flat = pair_table(0.25, 0.25);
    let tilted = pair_table(entry(c), entry(1.0 - c));
    let anti = pair_table(entry(1.0 - c), entry(c));

    CorrelationTable::from_entries(
        [[key, flat], [tilted, tilted], [tilted, anti]],
        TableSource::WernerModel,
    )
}

fn pair_table(diag: f64, off: f64) -> [[f64; 2]; 2] {
    [[diag, off], [off, diag]]
}

/// One consistency check of [`validate_table`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Outcome of validating a correlation table: nonnegativity, per-setting
/// normalization, and both marginal no-signaling conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }

    pub fn first_failure(&self) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| !c.pass)
    }
}

/// Check a table's own consistency: every entry nonnegative, each setting
/// pair normalized, Alice's marginals independent of `y`, and Bob's
/// marginals independent of `x`. Returns per-check residuals.
pub fn validate_table(t: &CorrelationTable) -> ValidationReport {
    let mut checks = Vec::new();

    for x in 0..NUM_ALICE_SETTINGS as u8 {
        for y in 0..NUM_BOB_SETTINGS as u8 {
            let j = t.joint(x, y);
            let most_negative = j
                .iter()
                .flatten()
                .fold(0.0_f64, |worst, &v| worst.max(-v));
            checks.push(check(
                format!("nonnegativity(x={x},y={y})"),
                most_negative,
            ));
            let sum: f64 = j.iter().flatten().sum();
            checks.push(check(
                format!("normalization(x={x},y={y})"),
                (sum - 1.0).abs(),
            ));
        }
    }

    // Alice-marginal no-signaling: sum over b is independent of y.
    for x in 0..NUM_ALICE_SETTINGS as u8 {
        for a in 0..2u8 {
            let residual = (t.alice_marginal(x, 0, a) - t.alice_marginal(x, 1, a)).abs();
            checks.push(check(
                format!("alice-marginal no-signaling(x={x},a={a})"),
                residual,
            ));
        }
    }

    // Bob-marginal no-signaling: sum over a is independent of x.
    for y in 0..NUM_BOB_SETTINGS as u8 {
        for b in 0..2u8 {
            let m0 = t.bob_marginal(0, y, b);
            let m1 = t.bob_marginal(1, y, b);
            let m2 = t.bob_marginal(2, y, b);
            let residual = (m0 - m1).abs().max((m1 - m2).abs());
            checks.push(check(
                format!("bob-marginal no-signaling(y={y},b={b})"),
                residual,
            ));
        }
    }

    ValidationReport { checks }
}

fn check(name: String, residual: f64) -> ValidationCheck {
    ValidationCheck { name, residual, tolerance: TABLE_TOL, pass: residual <= TABLE_TOL }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(p: f64) -> WernerParameter {
        WernerParameter::new(p).unwrap()
    }

    #[test]
    fn werner_parameter_rejects_out_of_range() {
        assert!(WernerParameter::new(-0.1).is_err());
        assert!(WernerParameter::new(1.1).is_err());
        assert!(WernerParameter::new(f64::NAN).is_err());
        assert!(WernerParameter::new(0.0).is_ok());
        assert!(WernerParameter::new(1.0).is_ok());
    }

    #[test]
    fn noiseless_key_basis_is_perfectly_correlated() {
        let t = werner_correlations(wp(1.0));
        assert_eq!(t.prob(0, 0, 0, 0), 0.5);
        assert_eq!(t.prob(0, 0, 1, 1), 0.5);
        assert_eq!(t.prob(0, 0, 0, 1), 0.0);
        assert_eq!(t.prob(0, 0, 1, 0), 0.0);
    }

    #[test]
    fn maximally_mixed_state_is_uniform() {
        let t = werner_correlations(wp(0.0));
        for x in 0..3 {
            for y in 0..2 {
                for a in 0..2 {
                    for b in 0..2 {
                        assert_eq!(t.prob(x, y, a, b), 0.25);
                    }
                }
            }
        }
    }

    #[test]
    fn tilted_setting_matches_exact_constants() {
        // Diagonal (2+sqrt2)/8, off-diagonal (2-sqrt2)/8 at p = 1.
        let t = werner_correlations(wp(1.0));
        let diag = (2.0 + 2.0_f64.sqrt()) / 8.0;
        let off = (2.0 - 2.0_f64.sqrt()) / 8.0;
        assert!((t.prob(1, 0, 0, 0) - diag).abs() < 1e-15);
        assert!((t.prob(1, 0, 0, 1) - off).abs() < 1e-15);
        // Setting (2,1) swaps the roles.
        assert!((t.prob(2, 1, 0, 0) - off).abs() < 1e-15);
        assert!((t.prob(2, 1, 0, 1) - diag).abs() < 1e-15);
    }

    #[test]
    fn born_joint_examples() {
        let j = born_joint(0.0, 0.0, wp(1.0));
        assert_eq!(j[0][0], 0.5);
        assert_eq!(j[1][1], 0.5);

        let j = born_joint(FRAC_PI_4, 0.0, wp(1.0));
        let half_cos2_pi8 = 0.5 * diagonal_weight();
        assert!((j[0][0] - half_cos2_pi8).abs() < 1e-15);

        let j = born_joint(-FRAC_PI_4, FRAC_PI_2, wp(1.0));
        let expected = (2.0 - 2.0_f64.sqrt()) / 8.0;
        assert!((j[0][0] - expected).abs() < 1e-15);
    }

    #[test]
    fn born_joint_reproduces_all_table_entries() {
        for &p in &[0.0, 0.17, 0.5, 0.854, 1.0] {
            let t = werner_correlations(wp(p));
            for x in 0..3u8 {
                for y in 0..2u8 {
                    let j = born_joint(
                        MeasurementSetting::alice(x).angle,
                        MeasurementSetting::bob(y).angle,
                        wp(p),
                    );
                    for a in 0..2 {
                        for b in 0..2 {
                            assert!(
                                (j[a][b] - t.prob(x, y, a as u8, b as u8)).abs() < 1e-12,
                                "mismatch at p={p} x={x} y={y} a={a} b={b}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn model_tables_validate_cleanly() {
        let report = validate_table(&werner_correlations(wp(0.9)));
        assert!(report.is_valid());
        assert!(report.max_residual() <= 1e-15);
    }

    #[test]
    fn normalization_violation_names_the_setting() {
        let mut t = werner_correlations(wp(0.9));
        t.probs[0][0][0][0] -= 0.01;
        let report = validate_table(&t);
        assert!(!report.is_valid());
        let failure = report.first_failure().unwrap();
        assert!(failure.name.contains("normalization(x=0,y=0)"), "{}", failure.name);
    }

    #[test]
    fn signaling_violation_names_the_marginal() {
        // Shift mass between b-outcomes under (0,0) only: normalization still
        // holds but Alice's marginal now depends on y.
        let mut t = werner_correlations(wp(0.5));
        t.probs[0][0][0][0] += 0.02;
        t.probs[0][0][1][0] -= 0.02;
        let report = validate_table(&t);
        let failure = report
            .checks
            .iter()
            .find(|c| !c.pass && c.name.contains("alice-marginal no-signaling"))
            .expect("alice-marginal check should fail");
        assert!((failure.residual - 0.02).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_structural_errors() {
        let t = werner_correlations(wp(0.83));
        let parsed = CorrelationTable::from_json(&t.to_json()).unwrap();
        for x in 0..3 {
            for y in 0..2 {
                assert_eq!(parsed.joint(x, y), t.joint(x, y));
            }
        }
        assert_eq!(parsed.source(), TableSource::Ingested);

        // Missing pair.
        let mut doc: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        doc["settings"].as_array_mut().unwrap().pop();
        let err = CorrelationTable::from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(err, TableParseError::MissingSetting { x: 2, y: 1 }));

        // Duplicate pair.
        let mut doc: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        let first = doc["settings"][0].clone();
        doc["settings"].as_array_mut().unwrap()[5] = first;
        let err = CorrelationTable::from_json(&doc.to_string()).unwrap_err();
        assert!(matches!(err, TableParseError::DuplicateSetting { x: 0, y: 0 }));
    }

    #[test]
    fn key_basis_correlation_recovers_p() {
        for &p in &[0.0, 0.25, 0.7071, 0.95, 1.0] {
            let t = werner_correlations(wp(p));
            assert!((t.key_basis_correlation() - p).abs() < 1e-15);
        }
    }
}
