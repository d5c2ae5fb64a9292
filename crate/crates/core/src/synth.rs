//! Observer construction, existence-condition checks and gain search.
//!
//! The plant is an uncertain switched positive system whose output matrix is
//! `C = [I_p 0]`. For a nonnegative gain `L` the reduced-order observer acts on
//! `w = x2 - L x1` (dimension `n - p`); the lower and upper observers pair the
//! lower/upper blocks of each subsystem so that the true error dynamics are
//! sandwiched between them.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{self, Certificate, CertifyError, Feasibility};
use crate::matcore::{
    self, first_negative, first_non_metzler, partition, IntervalMat, Mat, MatError,
    PartitionedBlocks, DEFAULT_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Continuous,
    Discrete,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Continuous => "continuous",
            Domain::Discrete => "discrete",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid partition: output rank p = {p} must satisfy 1 <= p < n = {n}")]
    InvalidPartition { n: usize, p: usize },
    #[error("{0}")]
    Assumption(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("observer gain must be nonnegative: L({row},{col}) = {value}")]
    NegativeGain { row: usize, col: usize, value: f64 },
    #[error("operation requires a {expected} system, got {actual}")]
    DomainMismatch { expected: Domain, actual: Domain },
    #[error("corollary check needs exactly one subsystem, got {0}")]
    NotSingleSubsystem(usize),
    #[error("no feasible gain after {evaluated} candidates (best penalty {best_penalty:.6e})")]
    NotFound { evaluated: usize, best_penalty: f64 },
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

/// Uncertain plant: interval bounds on every subsystem matrix and on the
/// initial state. The output matrix is implicitly `[I_p 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSystem {
    domain: Domain,
    n: usize,
    p: usize,
    a: Vec<IntervalMat>,
    x0_lower: Vec<f64>,
    x0_upper: Vec<f64>,
}

fn assumption_label(domain: Domain) -> &'static str {
    match domain {
        Domain::Continuous => "Assumption 1",
        Domain::Discrete => "Assumption 2",
    }
}

impl IntervalSystem {
    /// Validates every standing assumption. Error messages use 1-based indices.
    pub fn new(
        domain: Domain,
        p: usize,
        a_lower: Vec<Mat>,
        a_upper: Vec<Mat>,
        x0_lower: Vec<f64>,
        x0_upper: Vec<f64>,
    ) -> Result<IntervalSystem> {
        let label = assumption_label(domain);
        let first = a_lower
            .first()
            .ok_or_else(|| SynthError::Dimension("at least one subsystem is required".into()))?;
        let n = first.rows();
        if p < 1 || p >= n {
            return Err(SynthError::InvalidPartition { n, p });
        }
        if a_lower.len() != a_upper.len() {
            return Err(SynthError::Dimension(format!(
                "{} lower bounds but {} upper bounds",
                a_lower.len(),
                a_upper.len()
            )));
        }
        for (name, list) in [("A_lower", &a_lower), ("A_upper", &a_upper)] {
            for (i, m) in list.iter().enumerate() {
                if m.shape() != (n, n) {
                    return Err(SynthError::Dimension(format!(
                        "{name}[{}] is {}x{}, expected {n}x{n}",
                        i + 1,
                        m.rows(),
                        m.cols()
                    )));
                }
            }
        }
        for (name, v) in [("x0_lower", &x0_lower), ("x0_upper", &x0_upper)] {
            if v.len() != n {
                return Err(SynthError::Dimension(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
        }
        for k in 0..n {
            if !(x0_lower[k] >= 0.0) {
                return Err(SynthError::Assumption(format!(
                    "{label}(i): x0_lower[{}] = {} is negative",
                    k + 1,
                    x0_lower[k]
                )));
            }
            if !(x0_lower[k] <= x0_upper[k]) {
                return Err(SynthError::Assumption(format!(
                    "{label}(i): x0_lower[{k1}] = {} exceeds x0_upper[{k1}] = {}",
                    x0_lower[k],
                    x0_upper[k],
                    k1 = k + 1
                )));
            }
        }
        let mut a = Vec::with_capacity(a_lower.len());
        for (i, (lo, up)) in a_lower.into_iter().zip(a_upper).enumerate() {
            let sub = i + 1;
            match domain {
                Domain::Continuous => {
                    if let Some((r, c, _)) = first_non_metzler(&lo, 0.0)? {
                        return Err(SynthError::Assumption(format!(
                            "{label}(iii): A_lower[{sub}] not Metzler at ({},{})",
                            r + 1,
                            c + 1
                        )));
                    }
                }
                Domain::Discrete => {
                    if let Some((r, c, _)) = first_negative(&lo, 0.0) {
                        return Err(SynthError::Assumption(format!(
                            "{label}(iii): A_lower[{sub}] not nonnegative at ({},{})",
                            r + 1,
                            c + 1
                        )));
                    }
                }
            }
            let interval = IntervalMat::new(lo, up).map_err(|e| match e {
                MatError::IntervalOrder { row, col, .. } => SynthError::Assumption(format!(
                    "{label}(ii): A_lower[{sub}] exceeds A_upper[{sub}] at ({},{})",
                    row + 1,
                    col + 1
                )),
                other => other.into(),
            })?;
            a.push(interval);
        }
        Ok(IntervalSystem {
            domain,
            n,
            p,
            a,
            x0_lower,
            x0_upper,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Dimension of the reduced-order observer, `n - p`.
    pub fn q(&self) -> usize {
        self.n - self.p
    }

    pub fn subsystems(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self) -> &[IntervalMat] {
        &self.a
    }

    pub fn a_lower(&self, i: usize) -> &Mat {
        self.a[i].lower()
    }

    pub fn a_upper(&self, i: usize) -> &Mat {
        self.a[i].upper()
    }

    pub fn x0_lower(&self) -> &[f64] {
        &self.x0_lower
    }

    pub fn x0_upper(&self) -> &[f64] {
        &self.x0_upper
    }

    /// Same plant restricted to a single subsystem.
    pub fn restrict(&self, i: usize) -> IntervalSystem {
        IntervalSystem {
            a: vec![self.a[i].clone()],
            ..self.clone()
        }
    }

    fn blocks(&self, i: usize) -> (PartitionedBlocks, PartitionedBlocks) {
        (
            partition(self.a_lower(i), self.p).expect("validated partition"),
            partition(self.a_upper(i), self.p).expect("validated partition"),
        )
    }

    /// `x0_lower^2 - L x0_upper^1`: largest admissible lower observer initial state.
    pub fn omega_lower_bound(&self, gain: &Mat) -> Vec<f64> {
        let (x1_hi, x2_lo) = (&self.x0_upper[..self.p], &self.x0_lower[self.p..]);
        let lx = gain.matvec(x1_hi).expect("gain shape");
        x2_lo.iter().zip(lx).map(|(a, b)| a - b).collect()
    }

    /// `x0_upper^2 - L x0_lower^1`: smallest admissible upper observer initial state.
    pub fn omega_upper_bound(&self, gain: &Mat) -> Vec<f64> {
        let (x1_lo, x2_hi) = (&self.x0_lower[..self.p], &self.x0_upper[self.p..]);
        let lx = gain.matvec(x1_lo).expect("gain shape");
        x2_hi.iter().zip(lx).map(|(a, b)| a - b).collect()
    }
}

/// All matrices that define the lower and upper reduced-order observers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObserverRealization {
    pub gain_l: Mat,
    pub ahat_lower: Vec<Mat>,
    pub ahat_upper: Vec<Mat>,
    pub g_lower: Vec<Mat>,
    pub g_upper: Vec<Mat>,
    /// `[-L I]`
    pub f: Mat,
    /// `[0; I]`
    pub chat: Mat,
    /// `[I; L]`
    pub dhat: Mat,
    pub omega0_lower: Vec<f64>,
    pub omega0_upper: Vec<f64>,
}

impl ObserverRealization {
    pub fn q(&self) -> usize {
        self.gain_l.rows()
    }

    pub fn p(&self) -> usize {
        self.gain_l.cols()
    }

    /// `xhat = Chat w + Dhat y`, evaluated structurally: the top `p` rows are
    /// `y` and the rest `w + L y`.
    pub fn estimate(&self, omega: &[f64], y: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p() + self.q());
        out.extend_from_slice(y);
        let ly = self.gain_l.matvec(y).expect("output length");
        out.extend(omega.iter().zip(ly).map(|(w, v)| w + v));
        out
    }
}

/// Exact-parameter observer matrices `(Ahat_i, G_i)` for a single realization,
/// as used by the intermediate comparison systems.
pub fn exact_observer_matrices(a: &Mat, gain: &Mat, p: usize) -> Result<(Mat, Mat)> {
    let b = partition(a, p)?;
    let ahat = &b.a22 - &(gain * &b.a12);
    let g = &(&(&ahat * gain) + &b.a21) - &(gain * &b.a11);
    Ok((ahat, g))
}

fn check_gain(sys: &IntervalSystem, gain: &Mat) -> Result<()> {
    if gain.shape() != (sys.q(), sys.p()) {
        return Err(SynthError::Dimension(format!(
            "gain L is {}x{}, expected {}x{}",
            gain.rows(),
            gain.cols(),
            sys.q(),
            sys.p()
        )));
    }
    if let Some((row, col, value)) = first_negative(gain, 0.0) {
        return Err(SynthError::NegativeGain { row, col, value });
    }
    Ok(())
}

pub fn build_observer(
    sys: &IntervalSystem,
    gain_l: &Mat,
    omega0_lower: &[f64],
    omega0_upper: &[f64],
) -> Result<ObserverRealization> {
    check_gain(sys, gain_l)?;
    let (p, q) = (sys.p(), sys.q());
    for (name, v) in [
        ("omega0_lower", omega0_lower),
        ("omega0_upper", omega0_upper),
    ] {
        if v.len() != q {
            return Err(SynthError::Dimension(format!(
                "{name} has length {}, expected {q}",
                v.len()
            )));
        }
    }
    let l = gain_l;
    let n_sub = sys.subsystems();
    let mut ahat_lower = Vec::with_capacity(n_sub);
    let mut ahat_upper = Vec::with_capacity(n_sub);
    let mut g_lower = Vec::with_capacity(n_sub);
    let mut g_upper = Vec::with_capacity(n_sub);
    for i in 0..n_sub {
        let (lo, up) = sys.blocks(i);
        // lower uses the upper coupling blocks and vice versa, which is what
        // makes the sandwich hold for L >= 0
        let ahl = &lo.a22 - &(l * &up.a12);
        let ahu = &up.a22 - &(l * &lo.a12);
        let gl = &(&(&ahl * l) + &lo.a21) - &(l * &up.a11);
        let gu = &(&(&ahu * l) + &up.a21) - &(l * &lo.a11);
        ahat_lower.push(ahl);
        ahat_upper.push(ahu);
        g_lower.push(gl);
        g_upper.push(gu);
    }
    let f = Mat::hstack(&(-l), &Mat::identity(q))?;
    let chat = Mat::vstack(&Mat::zeros(p, q), &Mat::identity(q))?;
    let dhat = Mat::vstack(&Mat::identity(p), l)?;
    Ok(ObserverRealization {
        gain_l: l.clone(),
        ahat_lower,
        ahat_upper,
        g_lower,
        g_upper,
        f,
        chat,
        dhat,
        omega0_lower: omega0_lower.to_vec(),
        omega0_upper: omega0_upper.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    I,
    Ii,
    Iii,
    Iv,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionId::I => "(i)",
            ConditionId::Ii => "(ii)",
            ConditionId::Iii => "(iii)",
            ConditionId::Iv => "(iv)",
        })
    }
}

/// Where a condition first failed. Indices are 1-based for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: ConditionId,
    pub subsystem: Option<usize>,
    pub entry: Option<(usize, usize)>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "condition {}", self.condition)?;
        if let Some(s) = self.subsystem {
            write!(f, ", subsystem {s}")?;
        }
        if let Some((r, c)) = self.entry {
            write!(f, ", entry ({r},{c})")?;
        }
        write!(f, ": {}", self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub domain: Domain,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub cond_iii: bool,
    pub cond_iv: bool,
    pub certificate: Option<Certificate>,
    pub first_violation: Option<Violation>,
    /// Continuous: every upper `Ahat` is Metzler; discrete: every upper `Ahat`
    /// is nonnegative. Implied by (i) and the sandwich, kept as a diagnostic.
    pub upper_structure_ok: bool,
    pub notes: Vec<String>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.cond_i && self.cond_ii && self.cond_iii && self.cond_iv
    }

    pub fn verdicts(&self) -> [(ConditionId, bool); 4] {
        [
            (ConditionId::I, self.cond_i),
            (ConditionId::Ii, self.cond_ii),
            (ConditionId::Iii, self.cond_iii),
            (ConditionId::Iv, self.cond_iv),
        ]
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "pass" } else { "FAIL" };
        writeln!(f, "domain: {}", self.domain)?;
        for (id, ok) in self.verdicts() {
            writeln!(f, "condition {id:<5} {}", mark(ok))?;
        }
        match &self.certificate {
            Some(c) => writeln!(
                f,
                "lambda: [{}] (margin {:e})",
                c.lambda
                    .iter()
                    .map(|v| format!("{v:.6}"))
                    .collect::<Vec<_>>()
                    .join(", "),
                c.margin
            )?,
            None => writeln!(f, "lambda: none")?,
        }
        if let Some(v) = &self.first_violation {
            writeln!(f, "first violation: {v}")?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        write!(f, "overall: {}", mark(self.passed()))
    }
}

/// Accumulates verdicts and keeps the first violation in condition order.
struct ReportBuilder {
    report: ConditionReport,
}

impl ReportBuilder {
    fn new(domain: Domain) -> Self {
        ReportBuilder {
            report: ConditionReport {
                domain,
                cond_i: true,
                cond_ii: true,
                cond_iii: true,
                cond_iv: true,
                certificate: None,
                first_violation: None,
                upper_structure_ok: true,
                notes: vec![
                    "condition (iv) also requires omega0_lower >= 0 (observer initial states are nonnegative)"
                        .into(),
                ],
            },
        }
    }

    fn fail(&mut self, v: Violation) {
        let slot = match v.condition {
            ConditionId::I => &mut self.report.cond_i,
            ConditionId::Ii => &mut self.report.cond_ii,
            ConditionId::Iii => &mut self.report.cond_iii,
            ConditionId::Iv => &mut self.report.cond_iv,
        };
        if *slot {
            *slot = false;
            if self.report.first_violation.is_none() {
                self.report.first_violation = Some(v);
            }
        }
    }
}

fn check_structure(b: &mut ReportBuilder, obs: &ObserverRealization, domain: Domain) {
    for (i, (ahl, ahu)) in obs.ahat_lower.iter().zip(&obs.ahat_upper).enumerate() {
        let bad = match domain {
            Domain::Continuous => first_non_metzler(ahl, DEFAULT_TOL).expect("square"),
            Domain::Discrete => first_negative(ahl, DEFAULT_TOL),
        };
        if let Some((r, c, v)) = bad {
            b.fail(Violation {
                condition: ConditionId::I,
                subsystem: Some(i + 1),
                entry: Some((r + 1, c + 1)),
                detail: match domain {
                    Domain::Continuous => {
                        format!("lower Ahat has negative off-diagonal entry {v:e}")
                    }
                    Domain::Discrete => format!("lower Ahat has negative entry {v:e}"),
                },
            });
        }
        let upper_ok = match domain {
            Domain::Continuous => first_non_metzler(ahu, DEFAULT_TOL)
                .expect("square")
                .is_none(),
            Domain::Discrete => first_negative(ahu, DEFAULT_TOL).is_none(),
        };
        b.report.upper_structure_ok &= upper_ok;
    }
    for (i, gl) in obs.g_lower.iter().enumerate() {
        if let Some((r, c, v)) = first_negative(gl, DEFAULT_TOL) {
            b.fail(Violation {
                condition: ConditionId::Ii,
                subsystem: Some(i + 1),
                entry: Some((r + 1, c + 1)),
                detail: format!("lower G has negative entry {v:e}"),
            });
        }
    }
}

fn check_initial_states(b: &mut ReportBuilder, sys: &IntervalSystem, obs: &ObserverRealization) {
    let lo_bound = sys.omega_lower_bound(&obs.gain_l);
    let up_bound = sys.omega_upper_bound(&obs.gain_l);
    for k in 0..sys.q() {
        let (wl, wu) = (obs.omega0_lower[k], obs.omega0_upper[k]);
        let detail = if wl < -DEFAULT_TOL {
            Some(format!("omega0_lower[{}] = {wl} is negative", k + 1))
        } else if wl > lo_bound[k] + DEFAULT_TOL {
            Some(format!(
                "omega0_lower[{}] = {wl} exceeds x0_lower^2 - L x0_upper^1 = {}",
                k + 1,
                lo_bound[k]
            ))
        } else if up_bound[k] > wu + DEFAULT_TOL {
            Some(format!(
                "omega0_upper[{}] = {wu} is below x0_upper^2 - L x0_lower^1 = {}",
                k + 1,
                up_bound[k]
            ))
        } else {
            None
        };
        if let Some(detail) = detail {
            b.fail(Violation {
                condition: ConditionId::Iv,
                subsystem: None,
                entry: Some((k + 1, 1)),
                detail,
            });
        }
    }
}

fn check_observer_shape(sys: &IntervalSystem, obs: &ObserverRealization) -> Result<()> {
    check_gain(sys, &obs.gain_l)?;
    if obs.ahat_lower.len() != sys.subsystems()
        || obs.ahat_upper.len() != sys.subsystems()
        || obs.g_lower.len() != sys.subsystems()
        || obs.g_upper.len() != sys.subsystems()
    {
        return Err(SynthError::Dimension(
            "observer and system disagree on the number of subsystems".into(),
        ));
    }
    if obs.omega0_lower.len() != sys.q() || obs.omega0_upper.len() != sys.q() {
        return Err(SynthError::Dimension(
            "observer initial state length".into(),
        ));
    }
    Ok(())
}

/// Matrices whose common copositive certificate is condition (iii).
pub fn stability_matrices(domain: Domain, obs: &ObserverRealization) -> Vec<Mat> {
    match domain {
        Domain::Continuous => obs.ahat_upper.clone(),
        Domain::Discrete => {
            let eye = Mat::identity(obs.q());
            obs.ahat_upper.iter().map(|a| a - &eye).collect()
        }
    }
}

fn check_theorem(
    sys: &IntervalSystem,
    obs: &ObserverRealization,
    margin: f64,
    expected: Domain,
) -> Result<ConditionReport> {
    if sys.domain() != expected {
        return Err(SynthError::DomainMismatch {
            expected,
            actual: sys.domain(),
        });
    }
    check_observer_shape(sys, obs)?;
    let mut b = ReportBuilder::new(expected);
    check_structure(&mut b, obs, expected);
    match certify::find_lambda_sweep(&stability_matrices(expected, obs), margin)? {
        Feasibility::Feasible(cert) => b.report.certificate = Some(cert),
        Feasibility::Infeasible(inf) => b.fail(Violation {
            condition: ConditionId::Iii,
            subsystem: None,
            entry: None,
            detail: format!(
                "no common copositive certificate (margin swept down to {:e})",
                inf.margin
            ),
        }),
    }
    check_initial_states(&mut b, sys, obs);
    Ok(b.report)
}

/// Existence conditions (i)-(iv) for continuous-time switched plants.
pub fn check_theorem1(
    sys: &IntervalSystem,
    obs: &ObserverRealization,
    margin: f64,
) -> Result<ConditionReport> {
    check_theorem(sys, obs, margin, Domain::Continuous)
}

/// Existence conditions (i)-(iv) for discrete-time switched plants.
pub fn check_theorem2(
    sys: &IntervalSystem,
    obs: &ObserverRealization,
    margin: f64,
) -> Result<ConditionReport> {
    check_theorem(sys, obs, margin, Domain::Discrete)
}

pub fn check_conditions(
    sys: &IntervalSystem,
    obs: &ObserverRealization,
    margin: f64,
) -> Result<ConditionReport> {
    check_theorem(sys, obs, margin, sys.domain())
}

/// Non-switched variant: condition (iii) becomes Hurwitz (continuous) or Schur
/// (discrete) stability of the single upper `Ahat`. The LP certificate is
/// computed alongside and disagreement is noted in the report.
pub fn check_corollary(sys: &IntervalSystem, obs: &ObserverRealization) -> Result<ConditionReport> {
    if sys.subsystems() != 1 {
        return Err(SynthError::NotSingleSubsystem(sys.subsystems()));
    }
    check_observer_shape(sys, obs)?;
    let domain = sys.domain();
    let mut b = ReportBuilder::new(domain);
    check_structure(&mut b, obs, domain);
    let ahu = &obs.ahat_upper[0];
    let stable = match domain {
        Domain::Continuous => matcore::metzler_is_hurwitz(ahu),
        Domain::Discrete => matcore::nonneg_is_schur(ahu),
    };
    let stable = match stable {
        Ok(s) => Some(s),
        Err(MatError::NotMetzler { .. } | MatError::NotNonnegative { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let lp = certify::find_lambda_sweep(&stability_matrices(domain, obs), certify::DEFAULT_MARGIN)?;
    match stable {
        Some(true) => {}
        Some(false) => b.fail(Violation {
            condition: ConditionId::Iii,
            subsystem: Some(1),
            entry: None,
            detail: match domain {
                Domain::Continuous => "upper Ahat is not Hurwitz".into(),
                Domain::Discrete => "upper Ahat is not Schur".into(),
            },
        }),
        None => b.fail(Violation {
            condition: ConditionId::Iii,
            subsystem: Some(1),
            entry: None,
            detail: "upper Ahat lacks the sign structure the stability test needs".into(),
        }),
    }
    if stable.is_some() && stable != Some(lp.is_feasible()) {
        b.report.notes.push(format!(
            "stability test and LP certificate disagree (stable: {:?}, certificate: {})",
            stable,
            lp.is_feasible()
        ));
    }
    b.report.certificate = lp.certificate().cloned();
    check_initial_states(&mut b, sys, obs);
    Ok(b.report)
}

/// How observer initial states are chosen during design.
#[derive(Debug, Clone, PartialEq)]
pub enum OmegaPolicy {
    /// `omega0_lower = max(0, x0_lower^2 - L x0_upper^1)`,
    /// `omega0_upper = x0_upper^2 - L x0_lower^1`.
    Tight,
    Given {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl OmegaPolicy {
    pub fn resolve(&self, sys: &IntervalSystem, gain: &Mat) -> (Vec<f64>, Vec<f64>) {
        match self {
            OmegaPolicy::Tight => (
                sys.omega_lower_bound(gain)
                    .into_iter()
                    .map(|v| v.max(0.0))
                    .collect(),
                sys.omega_upper_bound(gain),
            ),
            OmegaPolicy::Given { lower, upper } => (lower.clone(), upper.clone()),
        }
    }
}

/// Sum of violation magnitudes over conditions (i), (ii) and (iv), plus a
/// column-sum surrogate for (iii) when no certificate exists.
fn penalty(sys: &IntervalSystem, obs: &ObserverRealization, report: &ConditionReport) -> f64 {
    let neg = |v: f64| (-v).max(0.0);
    let mut total = 0.0;
    for ahl in &obs.ahat_lower {
        total += ahl
            .entries()
            .filter(|&(i, j, _)| sys.domain() == Domain::Discrete || i != j)
            .map(|(_, _, v)| neg(v))
            .sum::<f64>();
    }
    for gl in &obs.g_lower {
        total += gl.entries().map(|(_, _, v)| neg(v)).sum::<f64>();
    }
    if !report.cond_iii {
        let ones = vec![1.0; sys.q()];
        let surrogate: f64 = stability_matrices(sys.domain(), obs)
            .iter()
            .map(|m| {
                let t = m.transpose();
                t.matvec(&ones)
                    .expect("square")
                    .into_iter()
                    .map(|v| v.max(0.0))
                    .sum::<f64>()
            })
            .sum();
        total += 1.0 + surrogate;
    }
    let lo_bound = sys.omega_lower_bound(&obs.gain_l);
    let up_bound = sys.omega_upper_bound(&obs.gain_l);
    for k in 0..sys.q() {
        total += neg(obs.omega0_lower[k]);
        total += (obs.omega0_lower[k] - lo_bound[k]).max(0.0);
        total += (up_bound[k] - obs.omega0_upper[k]).max(0.0);
    }
    total
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub observer: ObserverRealization,
    pub report: ConditionReport,
    /// Candidates evaluated, including `L = 0`.
    pub evaluated: usize,
}

fn evaluate(
    sys: &IntervalSystem,
    gain: &Mat,
    policy: &OmegaPolicy,
) -> Result<(ObserverRealization, ConditionReport, f64)> {
    let (wl, wu) = policy.resolve(sys, gain);
    let obs = build_observer(sys, gain, &wl, &wu)?;
    let report = check_conditions(sys, &obs, certify::DEFAULT_MARGIN)?;
    let pen = if report.passed() {
        0.0
    } else {
        penalty(sys, &obs, &report)
    };
    Ok((obs, report, pen))
}

/// Searches for a nonnegative gain that passes the full condition check.
///
/// `L = 0` is tried first; afterwards a seeded randomized coordinate search
/// minimises the violation penalty, halving its step after repeated
/// rejections and restarting from a random point once the step collapses.
pub fn search_gain(
    sys: &IntervalSystem,
    policy: &OmegaPolicy,
    budget: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    if budget == 0 {
        return Err(SynthError::NotFound {
            evaluated: 0,
            best_penalty: f64::INFINITY,
        });
    }
    let (q, p) = (sys.q(), sys.p());
    let mut current = Mat::zeros(q, p);
    let (obs, report, mut current_pen) = evaluate(sys, &current, policy)?;
    let mut evaluated = 1;
    if report.passed() {
        return Ok(SearchOutcome {
            observer: obs,
            report,
            evaluated,
        });
    }
    let mut best_pen = current_pen;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let initial_step = 0.5;
    let mut step = initial_step;
    let mut rejections = 0;
    while evaluated < budget {
        let (r, c) = (rng.gen_range(0..q), rng.gen_range(0..p));
        let delta = step * rng.gen_range(0.05..=1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let mut candidate = current.clone();
        candidate[(r, c)] = (candidate[(r, c)] + delta).max(0.0);
        if candidate == current {
            rejections += 1;
        } else {
            let (obs, report, pen) = evaluate(sys, &candidate, policy)?;
            evaluated += 1;
            if report.passed() {
                return Ok(SearchOutcome {
                    observer: obs,
                    report,
                    evaluated,
                });
            }
            best_pen = best_pen.min(pen);
            if pen < current_pen {
                current = candidate;
                current_pen = pen;
                rejections = 0;
            } else {
                rejections += 1;
            }
        }
        if rejections >= 4 * q * p {
            step *= 0.5;
            rejections = 0;
            if step < 1e-6 {
                step = initial_step;
                current = Mat::from_vec(
                    q,
                    p,
                    (0..q * p)
                        .map(|_| rng.gen_range(0.0..initial_step))
                        .collect(),
                )
                .expect("gain shape");
                let (obs, report, pen) = evaluate(sys, &current, policy)?;
                evaluated += 1;
                if report.passed() {
                    return Ok(SearchOutcome {
                        observer: obs,
                        report,
                        evaluated,
                    });
                }
                best_pen = best_pen.min(pen);
                current_pen = pen;
            }
        }
    }
    Err(SynthError::NotFound {
        evaluated,
        best_penalty: best_pen,
    })
}

#[derive(Debug, Clone)]
pub struct DesignOutcome {
    pub observer: ObserverRealization,
    pub report: ConditionReport,
    /// One line per design step.
    pub log: Vec<String>,
}

/// Runs the six-step design: dimensions, partition, initial states, gain,
/// observer matrices, final check.
///
/// A supplied gain is used as-is (the report may then fail); a missing gain is
/// searched for, and search failure is propagated.
pub fn run_design_procedure(
    sys: &IntervalSystem,
    gain: Option<&Mat>,
    omega: Option<(Vec<f64>, Vec<f64>)>,
    budget: usize,
    seed: u64,
) -> Result<DesignOutcome> {
    let mut log = Vec::new();
    log.push(format!(
        "step 1: n = {}, p = {}, N = {} ({})",
        sys.n(),
        sys.p(),
        sys.subsystems(),
        sys.domain()
    ));
    log.push(format!(
        "step 2: partitioned {} subsystem bounds at p = {} (observer order {})",
        sys.subsystems(),
        sys.p(),
        sys.q()
    ));
    let policy = match omega {
        Some((lower, upper)) => {
            log.push(format!(
                "step 3: observer initial states given: lower {lower:?}, upper {upper:?}"
            ));
            OmegaPolicy::Given { lower, upper }
        }
        None => {
            log.push("step 3: observer initial states chosen tight from the gain".into());
            OmegaPolicy::Tight
        }
    };
    let (gain, searched) = match gain {
        Some(g) => {
            check_gain(sys, g)?;
            log.push(format!("step 4: gain supplied: {:?}", g.to_rows()));
            (g.clone(), None)
        }
        None => {
            let found = search_gain(sys, &policy, budget, seed)?;
            log.push(format!(
                "step 4: gain found after {} candidates: {:?}",
                found.evaluated,
                found.observer.gain_l.to_rows()
            ));
            (found.observer.gain_l.clone(), Some(found))
        }
    };
    let (observer, report) = match searched {
        Some(found) => (found.observer, found.report),
        None => {
            let (wl, wu) = policy.resolve(sys, &gain);
            let obs = build_observer(sys, &gain, &wl, &wu)?;
            let report = check_conditions(sys, &obs, certify::DEFAULT_MARGIN)?;
            (obs, report)
        }
    };
    log.push("step 5: observer matrices computed".into());
    log.push(format!(
        "step 6: conditions {}",
        if report.passed() {
            "satisfied"
        } else {
            "violated"
        }
    ));
    Ok(DesignOutcome {
        observer,
        report,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::check_lambda;
    use crate::fixtures;

    fn m(rows: &[&[f64]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn continuous_fixture_passes() {
        let fx = fixtures::continuous_example();
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        let report = check_theorem1(&fx.system, &obs, certify::DEFAULT_MARGIN).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.upper_structure_ok);
        let cert = report.certificate.as_ref().unwrap();
        assert!(check_lambda(&obs.ahat_upper, cert));
    }

    #[test]
    fn continuous_lower_initial_state_too_large() {
        let fx = fixtures::continuous_example();
        assert_eq!(
            fx.system
                .omega_lower_bound(&fx.gain)
                .iter()
                .map(|v| (v * 1e12).round() / 1e12)
                .collect::<Vec<_>>(),
            vec![3.4, 0.1, 2.15]
        );
        let obs = build_observer(&fx.system, &fx.gain, &[4.0, 4.0, 4.0], &fx.omega0_upper).unwrap();
        let report = check_theorem1(&fx.system, &obs, certify::DEFAULT_MARGIN).unwrap();
        assert!(report.cond_i && report.cond_ii && report.cond_iii);
        assert!(!report.cond_iv);
        assert_eq!(report.first_violation.unwrap().condition, ConditionId::Iv);
    }

    #[test]
    fn discrete_fixture_passes() {
        let fx = fixtures::discrete_example();
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        let report = check_theorem2(&fx.system, &obs, certify::DEFAULT_MARGIN).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn discrete_upper_initial_state_too_small() {
        let fx = fixtures::discrete_example();
        let ub = fx.system.omega_upper_bound(&fx.gain);
        assert!((ub[0] - 10.872).abs() < 1e-12 && (ub[1] - 6.912).abs() < 1e-12);
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &[10.0, 6.0]).unwrap();
        let report = check_theorem2(&fx.system, &obs, certify::DEFAULT_MARGIN).unwrap();
        assert!(!report.cond_iv);
        assert!(report.cond_i && report.cond_ii && report.cond_iii);
    }

    #[test]
    fn theorem_checks_reject_wrong_domain() {
        let fx = fixtures::discrete_example();
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        assert!(matches!(
            check_theorem1(&fx.system, &obs, 1e-6),
            Err(SynthError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn discrete_negative_lower_ahat_is_located() {
        // n = 2, p = 1: Ahat_lower = A22_lower - L A12_upper = 0.1 - 1.0 * 0.5
        let sys = IntervalSystem::new(
            Domain::Discrete,
            1,
            vec![m(&[&[0.2, 0.1], &[0.3, 0.1]])],
            vec![m(&[&[0.3, 0.5], &[0.4, 0.2]])],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let gain = m(&[&[1.0]]);
        let obs = build_observer(&sys, &gain, &[0.0], &[5.0]).unwrap();
        let report = check_theorem2(&sys, &obs, 1e-6).unwrap();
        assert!(!report.cond_i);
        let v = report.first_violation.unwrap();
        assert_eq!(v.condition, ConditionId::I);
        assert_eq!(v.subsystem, Some(1));
        assert_eq!(v.entry, Some((1, 1)));
    }

    #[test]
    fn zero_gain_reduces_to_plain_blocks() {
        let fx = fixtures::continuous_example();
        let zero = Mat::zeros(3, 2);
        let obs = build_observer(&fx.system, &zero, &[0.0; 3], &[9.0; 3]).unwrap();
        for i in 0..3 {
            let b = partition(fx.system.a_lower(i), 2).unwrap();
            assert_eq!(obs.ahat_lower[i], b.a22);
            assert_eq!(obs.g_lower[i], b.a21);
        }
        assert_eq!(obs.dhat, Mat::vstack(&Mat::identity(2), &zero).unwrap());
        let report = check_theorem1(&fx.system, &obs, 1e-6).unwrap();
        assert!(report.cond_i && report.cond_ii);
    }

    #[test]
    fn zero_width_intervals_collapse() {
        let a = m(&[&[-3.0, 1.0, 0.5], &[0.4, -2.0, 0.3], &[0.2, 0.6, -4.0]]);
        let sys = IntervalSystem::new(
            Domain::Continuous,
            1,
            vec![a.clone()],
            vec![a.clone()],
            vec![1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0],
        )
        .unwrap();
        let gain = m(&[&[0.3], &[0.1]]);
        let obs = build_observer(&sys, &gain, &[0.0, 0.0], &[3.0, 3.0]).unwrap();
        assert_eq!(obs.ahat_lower, obs.ahat_upper);
        assert_eq!(obs.g_lower, obs.g_upper);
        let (ahat, g) = exact_observer_matrices(&a, &gain, 1).unwrap();
        assert_eq!(ahat, obs.ahat_lower[0]);
        assert_eq!(g, obs.g_lower[0]);
    }

    #[test]
    fn structural_matrices() {
        let fx = fixtures::continuous_example();
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        let l = &fx.gain;
        assert_eq!(obs.f, Mat::hstack(&(-l), &Mat::identity(3)).unwrap());
        assert_eq!(obs.chat.submatrix(0, 0, 2, 3), Mat::zeros(2, 3));
        assert_eq!(obs.chat.submatrix(2, 0, 3, 3), Mat::identity(3));
        assert_eq!(obs.dhat.submatrix(2, 0, 3, 2), *l);
    }

    #[test]
    fn build_rejects_bad_gain() {
        let fx = fixtures::continuous_example();
        let mut g = fx.gain.clone();
        g[(1, 0)] = -0.1;
        assert!(matches!(
            build_observer(&fx.system, &g, &fx.omega0_lower, &fx.omega0_upper),
            Err(SynthError::NegativeGain { row: 1, col: 0, .. })
        ));
        assert!(matches!(
            build_observer(
                &fx.system,
                &Mat::zeros(2, 2),
                &fx.omega0_lower,
                &fx.omega0_upper
            ),
            Err(SynthError::Dimension(_))
        ));
    }

    #[test]
    fn system_validation_messages() {
        let good = m(&[&[-1.0, 0.5], &[0.2, -1.0]]);
        let err = IntervalSystem::new(
            Domain::Continuous,
            2,
            vec![good.clone()],
            vec![good.clone()],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap_err();
        assert_eq!(err, SynthError::InvalidPartition { n: 2, p: 2 });

        let bad = m(&[&[-1.0, 0.5, 0.0], &[0.2, -1.0, 0.0], &[-0.3, 0.0, -1.0]]);
        let err = IntervalSystem::new(
            Domain::Continuous,
            1,
            vec![bad.clone(), bad.clone()],
            vec![bad.clone(), bad],
            vec![0.0; 3],
            vec![1.0; 3],
        )
        .unwrap_err();
        assert_eq!(
            err.to_string(),
            "Assumption 1(iii): A_lower[1] not Metzler at (3,1)"
        );

        let err = IntervalSystem::new(
            Domain::Discrete,
            1,
            vec![m(&[&[0.1, 0.0], &[0.0, 0.1]])],
            vec![m(&[&[0.2, 0.0], &[0.0, 0.05]])],
            vec![0.0; 2],
            vec![1.0; 2],
        )
        .unwrap_err();
        assert_eq!(
            err.to_string(),
            "Assumption 2(ii): A_lower[1] exceeds A_upper[1] at (2,2)"
        );

        let err = IntervalSystem::new(
            Domain::Discrete,
            1,
            vec![m(&[&[0.1, 0.0], &[0.0, 0.1]])],
            vec![m(&[&[0.2, 0.0], &[0.0, 0.2]])],
            vec![0.0, 2.0],
            vec![1.0, 1.0],
        )
        .unwrap_err();
        assert!(err.to_string().starts_with("Assumption 2(i)"));
    }

    #[test]
    fn corollary_examples() {
        let fx = fixtures::continuous_example();
        let single = fx.system.restrict(0);
        let obs = build_observer(&single, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        let report = check_corollary(&single, &obs).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.certificate.is_some());

        // discrete, n = 2, p = 1, upper Ahat = [[0.5]]
        let sys = IntervalSystem::new(
            Domain::Discrete,
            1,
            vec![m(&[&[0.1, 0.0], &[0.1, 0.5]])],
            vec![m(&[&[0.2, 0.0], &[0.2, 0.5]])],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let obs = build_observer(&sys, &m(&[&[0.0]]), &[1.0], &[1.0]).unwrap();
        assert_eq!(obs.ahat_upper[0], m(&[&[0.5]]));
        assert!(check_corollary(&sys, &obs).unwrap().passed());

        // continuous with upper Ahat = [[0]]
        let sys = IntervalSystem::new(
            Domain::Continuous,
            1,
            vec![m(&[&[-1.0, 0.0], &[0.0, 0.0]])],
            vec![m(&[&[-1.0, 0.0], &[0.0, 0.0]])],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let obs = build_observer(&sys, &m(&[&[0.0]]), &[1.0], &[1.0]).unwrap();
        let report = check_corollary(&sys, &obs).unwrap();
        assert!(!report.cond_iii);
        assert!(report.certificate.is_none());

        assert!(matches!(
            check_corollary(&fx.system, &obs),
            Err(SynthError::NotSingleSubsystem(3))
        ));
    }

    #[test]
    fn search_accepts_zero_gain_when_feasible() {
        let a = m(&[&[-3.0, 1.0, 0.5], &[0.4, -2.0, 0.3], &[0.2, 0.6, -4.0]]);
        let sys = IntervalSystem::new(
            Domain::Continuous,
            1,
            vec![a.clone()],
            vec![a],
            vec![1.0, 1.0, 1.0],
            vec![2.0, 2.0, 2.0],
        )
        .unwrap();
        let out = search_gain(&sys, &OmegaPolicy::Tight, 10, 1).unwrap();
        assert_eq!(out.evaluated, 1);
        assert_eq!(out.observer.gain_l, Mat::zeros(2, 1));
        assert!(out.report.passed());
    }

    #[test]
    fn search_reports_not_found_for_unstabilizable_plant() {
        let sys = unstabilizable();
        match search_gain(&sys, &OmegaPolicy::Tight, 50, 3) {
            Err(SynthError::NotFound {
                evaluated,
                best_penalty,
            }) => {
                assert_eq!(evaluated, 50);
                assert!(best_penalty > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    pub(crate) fn unstabilizable() -> IntervalSystem {
        IntervalSystem::new(
            Domain::Discrete,
            1,
            vec![m(&[&[0.5, 0.0], &[0.3, 2.0]])],
            vec![m(&[&[0.5, 0.0], &[0.3, 2.0]])],
            vec![1.0, 1.0],
            vec![2.0, 2.0],
        )
        .unwrap()
    }

    #[test]
    fn search_needs_nonzero_gain() {
        // Ahat_lower = 1.2 - L and Ahat_upper = 1.5 - L: L = 0 is not Schur,
        // any L in (0.5, 1.1] passes every condition.
        let sys = IntervalSystem::new(
            Domain::Discrete,
            1,
            vec![m(&[&[0.1, 1.0], &[0.0, 1.2]])],
            vec![m(&[&[0.1, 1.0], &[0.0, 1.5]])],
            vec![0.0, 0.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        let zero = search_gain(&sys, &OmegaPolicy::Tight, 1, 0);
        assert!(matches!(zero, Err(SynthError::NotFound { .. })));
        let out = search_gain(&sys, &OmegaPolicy::Tight, 2000, 5).unwrap();
        assert!(out.report.passed());
        assert!(out.observer.gain_l[(0, 0)] > 0.0);
        let again = search_gain(&sys, &OmegaPolicy::Tight, 2000, 5).unwrap();
        assert_eq!(again.observer, out.observer);
    }

    #[test]
    fn search_on_continuous_fixture() {
        let fx = fixtures::continuous_example();
        let out = search_gain(&fx.system, &OmegaPolicy::Tight, 500, 42).unwrap();
        assert!(out.report.passed());
        let recheck = check_theorem1(&fx.system, &out.observer, 1e-6).unwrap();
        assert_eq!(recheck, out.report);
    }

    #[test]
    fn design_procedure_with_fixture_inputs() {
        let fx = fixtures::continuous_example();
        let out = run_design_procedure(
            &fx.system,
            Some(&fx.gain),
            Some((fx.omega0_lower.clone(), fx.omega0_upper.clone())),
            10,
            0,
        )
        .unwrap();
        assert!(out.report.passed());
        assert_eq!(out.log.len(), 6);
        assert_eq!(out.observer.gain_l, fx.gain);

        let fx = fixtures::discrete_example();
        let out = run_design_procedure(
            &fx.system,
            Some(&fx.gain),
            Some((fx.omega0_lower.clone(), fx.omega0_upper.clone())),
            10,
            0,
        )
        .unwrap();
        assert!(out.report.passed());
    }

    #[test]
    fn design_without_gain_matches_search() {
        let fx = fixtures::continuous_example();
        let design = run_design_procedure(&fx.system, None, None, 200, 9).unwrap();
        let found = search_gain(&fx.system, &OmegaPolicy::Tight, 200, 9).unwrap();
        assert_eq!(design.observer, found.observer);
        assert!(matches!(
            run_design_procedure(&unstabilizable(), None, None, 20, 9),
            Err(SynthError::NotFound { .. })
        ));
    }
}
