//! Co-simulation of one admissible realization of the plant together with the
//! lower/upper observers and the two exact-parameter comparison observers.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matcore::Mat;
use crate::synth::{exact_observer_matrices, Domain, IntervalSystem, ObserverRealization};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("true system outside its intervals: {0}")]
    TruthOutside(String),
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("operation requires a {expected} system, got {actual}")]
    DomainMismatch { expected: Domain, actual: Domain },
    #[error("invalid switching signal: {0}")]
    Signal(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// One admissible realization: exact subsystem matrices and initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueSystem {
    a: Vec<Mat>,
    x0: Vec<f64>,
}

impl TrueSystem {
    pub fn new(sys: &IntervalSystem, a: Vec<Mat>, x0: Vec<f64>) -> Result<TrueSystem> {
        if a.len() != sys.subsystems() {
            return Err(SimError::Dimension(format!(
                "{} true matrices for {} subsystems",
                a.len(),
                sys.subsystems()
            )));
        }
        let n = sys.n();
        for (i, m) in a.iter().enumerate() {
            if m.shape() != (n, n) {
                return Err(SimError::Dimension(format!(
                    "A[{}] is {}x{}, expected {n}x{n}",
                    i + 1,
                    m.rows(),
                    m.cols()
                )));
            }
            let (lo, up) = (sys.a_lower(i), sys.a_upper(i));
            if let Some((r, c, v)) = m
                .entries()
                .find(|&(r, c, v)| !(lo[(r, c)] <= v && v <= up[(r, c)]))
            {
                return Err(SimError::TruthOutside(format!(
                    "A[{}] entry ({},{}) = {v} not in [{}, {}]",
                    i + 1,
                    r + 1,
                    c + 1,
                    lo[(r, c)],
                    up[(r, c)]
                )));
            }
        }
        if x0.len() != n {
            return Err(SimError::Dimension(format!(
                "x0 has length {}, expected {n}",
                x0.len()
            )));
        }
        for (k, &v) in x0.iter().enumerate() {
            let (lo, up) = (sys.x0_lower()[k], sys.x0_upper()[k]);
            if !(lo <= v && v <= up) {
                return Err(SimError::TruthOutside(format!(
                    "x0[{}] = {v} not in [{lo}, {up}]",
                    k + 1
                )));
            }
        }
        Ok(TrueSystem { a, x0 })
    }

    /// Entries drawn uniformly from their intervals.
    pub fn sample(sys: &IntervalSystem, seed: u64) -> TrueSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: f64, hi: f64| if lo < hi { rng.gen_range(lo..=hi) } else { lo };
        let a = (0..sys.subsystems())
            .map(|i| {
                let (lo, up) = (sys.a_lower(i), sys.a_upper(i));
                let mut m = lo.clone();
                for (r, c, v) in lo.entries() {
                    m[(r, c)] = uniform(v, up[(r, c)]);
                }
                m
            })
            .collect();
        let x0 = sys
            .x0_lower()
            .iter()
            .zip(sys.x0_upper())
            .map(|(&lo, &hi)| uniform(lo, hi))
            .collect();
        TrueSystem { a, x0 }
    }

    pub fn a(&self) -> &[Mat] {
        &self.a
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
}

/// Piecewise-constant subsystem selection.
///
/// Interval `k` is `[switch_times[k], switch_times[k+1])`, the last one ending
/// at `horizon`. `indices` are 0-based subsystem numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSignal {
    pub switch_times: Vec<f64>,
    pub indices: Vec<usize>,
    pub horizon: f64,
    pub seed: u64,
    pub min_dwell: f64,
}

impl SwitchingSignal {
    /// A signal that never switches.
    pub fn constant(index: usize, horizon: f64) -> SwitchingSignal {
        SwitchingSignal {
            switch_times: vec![0.0],
            indices: vec![index],
            horizon,
            seed: 0,
            min_dwell: horizon,
        }
    }

    pub fn index_at(&self, t: f64) -> usize {
        let k = self.switch_times.partition_point(|&s| s <= t);
        self.indices[k.saturating_sub(1)]
    }

    pub fn interval_lengths(&self) -> Vec<f64> {
        self.switch_times
            .iter()
            .zip(self.switch_times.iter().skip(1).chain([&self.horizon]))
            .map(|(a, b)| b - a)
            .collect()
    }

    pub fn validate(&self, n_subsystems: usize) -> Result<()> {
        if self.switch_times.first() != Some(&0.0) {
            return Err(SimError::Signal("must start at 0".into()));
        }
        if self.switch_times.len() != self.indices.len() {
            return Err(SimError::Signal(
                "one index per interval is required".into(),
            ));
        }
        if self.switch_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SimError::Signal(
                "switch times must increase strictly".into(),
            ));
        }
        if self.switch_times.last().is_some_and(|&t| t >= self.horizon) {
            return Err(SimError::Signal(
                "switch time at or past the horizon".into(),
            ));
        }
        if let Some(&i) = self.indices.iter().find(|&&i| i >= n_subsystems) {
            return Err(SimError::Signal(format!(
                "subsystem index {} out of range 1..={n_subsystems}",
                i + 1
            )));
        }
        let lengths = self.interval_lengths();
        // the final interval may be truncated by the horizon
        if lengths[..lengths.len() - 1]
            .iter()
            .any(|&l| l < self.min_dwell * (1.0 - 1e-12))
        {
            return Err(SimError::Signal(
                "interval shorter than the dwell time".into(),
            ));
        }
        Ok(())
    }
}

fn next_index(rng: &mut ChaCha8Rng, n: usize, prev: Option<usize>) -> usize {
    match prev {
        Some(p) if n > 1 => {
            let k = rng.gen_range(0..n - 1);
            if k >= p {
                k + 1
            } else {
                k
            }
        }
        _ => rng.gen_range(0..n),
    }
}

/// Random switching over `[0, horizon)` with dwell times uniform in
/// `[min_dwell, 2 min_dwell]`; consecutive subsystems differ when `n > 1`.
///
/// `min_dwell >= horizon` yields one interval. `min_dwell = 0` draws dwell
/// times uniformly from `(0, horizon / 10]`.
pub fn make_switching_signal(
    n_subsystems: usize,
    horizon: f64,
    min_dwell: f64,
    seed: u64,
) -> Result<SwitchingSignal> {
    if n_subsystems == 0 {
        return Err(SimError::Signal(
            "at least one subsystem is required".into(),
        ));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::Horizon(horizon));
    }
    if !(min_dwell >= 0.0 && min_dwell.is_finite()) {
        return Err(SimError::Signal(format!("invalid dwell time {min_dwell}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0];
    let mut indices = vec![next_index(&mut rng, n_subsystems, None)];
    if n_subsystems > 1 && min_dwell < horizon {
        let (lo, hi) = if min_dwell > 0.0 {
            (min_dwell, 2.0 * min_dwell)
        } else {
            (0.0, horizon / 10.0)
        };
        let mut t = 0.0;
        loop {
            let dwell = if min_dwell > 0.0 {
                rng.gen_range(lo..=hi)
            } else {
                // (0, hi]
                hi - rng.gen_range(lo..hi)
            };
            t += dwell;
            if t >= horizon {
                break;
            }
            times.push(t);
            let prev = *indices.last().expect("nonempty");
            indices.push(next_index(&mut rng, n_subsystems, Some(prev)));
        }
    }
    Ok(SwitchingSignal {
        switch_times: times,
        indices,
        horizon,
        seed,
        min_dwell,
    })
}

/// Integer-step variant: dwell uniform in `{d, ..., 2d}` steps with
/// `d = max(1, min_dwell_steps)`.
pub fn make_discrete_switching_signal(
    n_subsystems: usize,
    steps: usize,
    min_dwell_steps: usize,
    seed: u64,
) -> Result<SwitchingSignal> {
    if n_subsystems == 0 {
        return Err(SimError::Signal(
            "at least one subsystem is required".into(),
        ));
    }
    if steps == 0 {
        return Err(SimError::Horizon(0.0));
    }
    let d = min_dwell_steps.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times = vec![0.0];
    let mut indices = vec![next_index(&mut rng, n_subsystems, None)];
    if n_subsystems > 1 {
        let mut k = 0;
        loop {
            k += rng.gen_range(d..=2 * d);
            if k >= steps {
                break;
            }
            times.push(k as f64);
            let prev = *indices.last().expect("nonempty");
            indices.push(next_index(&mut rng, n_subsystems, Some(prev)));
        }
    }
    Ok(SwitchingSignal {
        switch_times: times,
        indices,
        horizon: steps as f64,
        seed,
        min_dwell: d as f64,
    })
}

/// Sampled trajectories. Every series is indexed like `times`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub domain: Domain,
    pub p: usize,
    pub times: Vec<f64>,
    /// Active subsystem (0-based) on the interval starting at each sample.
    pub sigma: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Vec<f64>>,
    pub omega_lower: Vec<Vec<f64>>,
    pub omega_upper: Vec<Vec<f64>>,
    /// Comparison observer with exact matrices started from `omega0_lower`.
    pub omega_exact_lower: Vec<Vec<f64>>,
    /// Comparison observer with exact matrices started from `omega0_upper`.
    pub omega_exact_upper: Vec<Vec<f64>>,
    pub xhat_lower: Vec<Vec<f64>>,
    pub xhat_upper: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    /// `F x - omega_exact_lower`
    pub eps_lower: Vec<Vec<f64>>,
    /// `omega_exact_upper - F x`
    pub eps_upper: Vec<Vec<f64>>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Euclidean norm of `xi` at every sample.
    pub fn xi_norms(&self) -> Vec<f64> {
        self.xi.iter().map(|v| norm(v)).collect()
    }

    /// CSV with header `t,x1..xn,xhatl1..xhatln,xhatu1..xhatun,xi1..xin,sigma`;
    /// `sigma` is 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n();
        let mut header = vec!["t".to_string()];
        for prefix in ["x", "xhatl", "xhatu", "xi"] {
            header.extend((1..=n).map(|k| format!("{prefix}{k}")));
        }
        header.push("sigma".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let mut line = fmt_num(self.times[k]);
            for series in [&self.x, &self.xhat_lower, &self.xhat_upper, &self.xi] {
                for v in &series[k] {
                    line.push(',');
                    line.push_str(&fmt_num(*v));
                }
            }
            line.push(',');
            line.push_str(&(self.sigma[k] + 1).to_string());
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.14e}")
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Per-subsystem matrices driving the five coupled states.
struct Dynamics<'a> {
    truth: &'a TrueSystem,
    obs: &'a ObserverRealization,
    exact: Vec<(Mat, Mat)>,
    n: usize,
    p: usize,
    q: usize,
}

impl<'a> Dynamics<'a> {
    fn new(
        sys: &IntervalSystem,
        truth: &'a TrueSystem,
        obs: &'a ObserverRealization,
    ) -> Result<Self> {
        if obs.p() != sys.p() || obs.q() != sys.q() {
            return Err(SimError::Dimension(format!(
                "observer gain is {}x{}, system needs {}x{}",
                obs.q(),
                obs.p(),
                sys.q(),
                sys.p()
            )));
        }
        if obs.ahat_lower.len() != sys.subsystems() || truth.a.len() != sys.subsystems() {
            return Err(SimError::Dimension("subsystem count mismatch".into()));
        }
        let exact = truth
            .a
            .iter()
            .map(|a| exact_observer_matrices(a, &obs.gain_l, sys.p()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| SimError::Dimension(e.to_string()))?;
        Ok(Dynamics {
            truth,
            obs,
            exact,
            n: sys.n(),
            p: sys.p(),
            q: sys.q(),
        })
    }

    fn dim(&self) -> usize {
        self.n + 4 * self.q
    }

    fn initial(&self) -> Vec<f64> {
        let mut z = self.truth.x0.clone();
        z.extend_from_slice(&self.obs.omega0_lower);
        z.extend_from_slice(&self.obs.omega0_upper);
        z.extend_from_slice(&self.obs.omega0_lower);
        z.extend_from_slice(&self.obs.omega0_upper);
        z
    }

    /// `out = f_i(z)` where `f_i` is the right-hand side (continuous) or the
    /// one-step map (discrete) of subsystem `i`.
    fn apply(&self, i: usize, z: &[f64], out: &mut [f64]) {
        let (n, p, q) = (self.n, self.p, self.q);
        out.iter_mut().for_each(|v| *v = 0.0);
        let (x, rest) = z.split_at(n);
        let y = &x[..p];
        let (ox, orest) = out.split_at_mut(n);
        self.truth.a[i].matvec_acc(x, ox);
        let (ahat, g) = &self.exact[i];
        let pairs: [(&Mat, &Mat); 4] = [
            (&self.obs.ahat_lower[i], &self.obs.g_lower[i]),
            (&self.obs.ahat_upper[i], &self.obs.g_upper[i]),
            (ahat, g),
            (ahat, g),
        ];
        for (k, (a, gm)) in pairs.into_iter().enumerate() {
            let w = &rest[k * q..(k + 1) * q];
            let o = &mut orest[k * q..(k + 1) * q];
            a.matvec_acc(w, o);
            gm.matvec_acc(y, o);
        }
    }

    fn record(&self, trace: &mut SimulationTrace, t: f64, sigma: usize, z: &[f64]) {
        let (n, p, q) = (self.n, self.p, self.q);
        let x = z[..n].to_vec();
        let y = x[..p].to_vec();
        let part = |k: usize| z[n + k * q..n + (k + 1) * q].to_vec();
        let (wl, wu, wel, weu) = (part(0), part(1), part(2), part(3));
        let xl = self.obs.estimate(&wl, &y);
        let xu = self.obs.estimate(&wu, &y);
        let xi = xu.iter().zip(&xl).map(|(a, b)| a - b).collect();
        let ly = self.obs.gain_l.matvec(&y).expect("output length");
        let fx: Vec<f64> = x[p..].iter().zip(&ly).map(|(a, b)| a - b).collect();
        trace
            .eps_lower
            .push(fx.iter().zip(&wel).map(|(a, b)| a - b).collect());
        trace
            .eps_upper
            .push(weu.iter().zip(&fx).map(|(a, b)| a - b).collect());
        trace.times.push(t);
        trace.sigma.push(sigma);
        trace.x.push(x);
        trace.y.push(y);
        trace.omega_lower.push(wl);
        trace.omega_upper.push(wu);
        trace.omega_exact_lower.push(wel);
        trace.omega_exact_upper.push(weu);
        trace.xhat_lower.push(xl);
        trace.xhat_upper.push(xu);
        trace.xi.push(xi);
    }
}

fn empty_trace(domain: Domain, p: usize, capacity: usize) -> SimulationTrace {
    fn v<T>(capacity: usize) -> Vec<T> {
        Vec::with_capacity(capacity)
    }
    SimulationTrace {
        domain,
        p,
        times: v(capacity),
        sigma: v(capacity),
        x: v(capacity),
        y: v(capacity),
        omega_lower: v(capacity),
        omega_upper: v(capacity),
        omega_exact_lower: v(capacity),
        omega_exact_upper: v(capacity),
        xhat_lower: v(capacity),
        xhat_upper: v(capacity),
        xi: v(capacity),
        eps_lower: v(capacity),
        eps_upper: v(capacity),
    }
}

/// Uniform grid `k * step` merged with every switch time and the horizon.
/// Grid points within `1e-9 step` of a switch time are replaced by it.
pub fn time_grid(sig: &SwitchingSignal, step: f64, horizon: f64) -> Vec<f64> {
    let snap = 1e-9 * step;
    let mut pts: Vec<f64> = sig
        .switch_times
        .iter()
        .copied()
        .filter(|&t| t < horizon)
        .collect();
    let count = (horizon / step).floor() as usize;
    for k in 0..=count {
        let t = k as f64 * step;
        if t < horizon - snap {
            pts.push(t);
        }
    }
    pts.push(horizon);
    pts.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = Vec::with_capacity(pts.len());
    for t in pts {
        match grid.last() {
            Some(&last) if t - last <= snap => {
                // prefer exact switch times and the horizon over grid points
                if sig.switch_times.contains(&t) || t == horizon {
                    *grid.last_mut().expect("nonempty") = t;
                }
            }
            _ => grid.push(t),
        }
    }
    grid
}

/// Classical fixed-step RK4 on the coupled plant/observer system.
pub fn simulate_continuous(
    sys: &IntervalSystem,
    truth: &TrueSystem,
    obs: &ObserverRealization,
    sig: &SwitchingSignal,
    step: f64,
    horizon: f64,
) -> Result<SimulationTrace> {
    if sys.domain() != Domain::Continuous {
        return Err(SimError::DomainMismatch {
            expected: Domain::Continuous,
            actual: sys.domain(),
        });
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(SimError::Step(step));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::Horizon(horizon));
    }
    sig.validate(sys.subsystems())?;
    let dyn_ = Dynamics::new(sys, truth, obs)?;
    let grid = time_grid(sig, step, horizon);
    let dim = dyn_.dim();
    let mut trace = empty_trace(Domain::Continuous, sys.p(), grid.len());
    let mut z = dyn_.initial();
    let (mut k1, mut k2, mut k3, mut k4) = (
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    );
    let mut tmp = vec![0.0; dim];
    for (j, &t) in grid.iter().enumerate() {
        let i = sig.index_at(t);
        dyn_.record(&mut trace, t, i, &z);
        let Some(&t_next) = grid.get(j + 1) else {
            break;
        };
        let h = t_next - t;
        dyn_.apply(i, &z, &mut k1);
        axpy(&z, 0.5 * h, &k1, &mut tmp);
        dyn_.apply(i, &tmp, &mut k2);
        axpy(&z, 0.5 * h, &k2, &mut tmp);
        dyn_.apply(i, &tmp, &mut k3);
        axpy(&z, h, &k3, &mut tmp);
        dyn_.apply(i, &tmp, &mut k4);
        for d in 0..dim {
            z[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { time: t_next });
        }
    }
    Ok(trace)
}

fn axpy(z: &[f64], h: f64, k: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(z).zip(k) {
        *o = a + h * b;
    }
}

/// Exact iteration of the coupled recursions for `steps` steps
/// (`steps + 1` samples).
pub fn simulate_discrete(
    sys: &IntervalSystem,
    truth: &TrueSystem,
    obs: &ObserverRealization,
    sig: &SwitchingSignal,
    steps: usize,
) -> Result<SimulationTrace> {
    if sys.domain() != Domain::Discrete {
        return Err(SimError::DomainMismatch {
            expected: Domain::Discrete,
            actual: sys.domain(),
        });
    }
    if steps == 0 {
        return Err(SimError::Horizon(0.0));
    }
    if let Some(&i) = sig.indices.iter().find(|&&i| i >= sys.subsystems()) {
        return Err(SimError::Signal(format!(
            "subsystem index {} out of range",
            i + 1
        )));
    }
    let dyn_ = Dynamics::new(sys, truth, obs)?;
    let mut trace = empty_trace(Domain::Discrete, sys.p(), steps + 1);
    let mut z = dyn_.initial();
    let mut next = vec![0.0; dyn_.dim()];
    for k in 0..=steps {
        let t = k as f64;
        let i = sig.index_at(t);
        dyn_.record(&mut trace, t, i, &z);
        if k == steps {
            break;
        }
        dyn_.apply(i, &z, &mut next);
        std::mem::swap(&mut z, &mut next);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite { time: t + 1.0 });
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BracketLayer {
    /// `0 <= xhat_lower`
    LowerNonnegative,
    /// `xhat_lower <= x`
    LowerBelowState,
    /// `x <= xhat_upper`
    StateBelowUpper,
}

impl BracketLayer {
    pub fn label(self) -> &'static str {
        match self {
            BracketLayer::LowerNonnegative => "0 <= xhat_lower",
            BracketLayer::LowerBelowState => "xhat_lower <= x",
            BracketLayer::StateBelowUpper => "x <= xhat_upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstViolation {
    pub layer: BracketLayer,
    pub magnitude: f64,
    pub sample: usize,
    pub time: f64,
    /// 0-based state component.
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketReport {
    pub tol: f64,
    pub samples: usize,
    /// Violation counts in [`BracketLayer`] order.
    pub violations: [usize; 3],
    pub worst: Option<WorstViolation>,
    pub sup_xi_norm: f64,
    pub xi_norm_start: f64,
    pub xi_norm_end: f64,
    /// `y` is the leading block of `x` and of both estimates, bit for bit.
    pub outputs_match: bool,
}

impl BracketReport {
    pub fn total_violations(&self) -> usize {
        self.violations.iter().sum()
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0 && self.outputs_match
    }
}

pub fn verify_bracket(trace: &SimulationTrace, tol: f64) -> BracketReport {
    let mut violations = [0usize; 3];
    let mut worst: Option<WorstViolation> = None;
    let layers = [
        BracketLayer::LowerNonnegative,
        BracketLayer::LowerBelowState,
        BracketLayer::StateBelowUpper,
    ];
    for k in 0..trace.len() {
        let (x, xl, xu) = (&trace.x[k], &trace.xhat_lower[k], &trace.xhat_upper[k]);
        for c in 0..x.len() {
            let gaps = [-xl[c], xl[c] - x[c], x[c] - xu[c]];
            for (li, &gap) in gaps.iter().enumerate() {
                if !(gap <= tol) {
                    violations[li] += 1;
                    let magnitude = if gap.is_nan() { f64::INFINITY } else { gap };
                    if worst.as_ref().is_none_or(|w| magnitude > w.magnitude) {
                        worst = Some(WorstViolation {
                            layer: layers[li],
                            magnitude,
                            sample: k,
                            time: trace.times[k],
                            component: c,
                        });
                    }
                }
            }
        }
    }
    let norms = trace.xi_norms();
    let p = trace.p;
    let outputs_match = (0..trace.len()).all(|k| {
        let y = &trace.y[k];
        trace.x[k][..p] == y[..]
            && trace.xhat_lower[k][..p] == y[..]
            && trace.xhat_upper[k][..p] == y[..]
    });
    BracketReport {
        tol,
        samples: trace.len(),
        violations,
        worst,
        sup_xi_norm: norms.iter().cloned().fold(0.0, f64::max),
        xi_norm_start: norms.first().copied().unwrap_or(0.0),
        xi_norm_end: norms.last().copied().unwrap_or(0.0),
        outputs_match,
    }
}

/// Checks `0 <= omega_lower <= omega_exact_lower <= omega_exact_upper <= omega_upper`
/// at every sample; returns the number of violated component inequalities and
/// the largest violation.
pub fn verify_order_chain(trace: &SimulationTrace, tol: f64) -> (usize, f64) {
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for k in 0..trace.len() {
        let chain = [
            &trace.omega_lower[k],
            &trace.omega_exact_lower[k],
            &trace.omega_exact_upper[k],
            &trace.omega_upper[k],
        ];
        for c in 0..chain[0].len() {
            let mut gaps = vec![-chain[0][c]];
            gaps.extend(chain.windows(2).map(|w| w[0][c] - w[1][c]));
            for g in gaps {
                if g > tol {
                    count += 1;
                    worst = worst.max(g);
                }
            }
        }
    }
    (count, worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::synth::build_observer;

    fn fixture_continuous() -> (
        IntervalSystem,
        TrueSystem,
        ObserverRealization,
        SwitchingSignal,
    ) {
        let fx = fixtures::continuous_example();
        let truth = TrueSystem::new(&fx.system, fx.truth_a.clone(), fx.truth_x0.clone()).unwrap();
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        let sig = make_switching_signal(3, fx.horizon, fx.min_dwell, fx.switching_seed).unwrap();
        (fx.system, truth, obs, sig)
    }

    #[test]
    fn single_subsystem_signal_is_constant() {
        let sig = make_switching_signal(1, 10.0, 0.5, 3).unwrap();
        assert_eq!(sig.switch_times, vec![0.0]);
        assert_eq!(sig.indices, vec![0]);
    }

    #[test]
    fn signal_is_deterministic_and_valid() {
        let a = make_switching_signal(3, 10.0, 0.5, 42).unwrap();
        let b = make_switching_signal(3, 10.0, 0.5, 42).unwrap();
        assert_eq!(a, b);
        a.validate(3).unwrap();
        assert!(a.switch_times.len() > 3);
        let total: f64 = a.interval_lengths().iter().sum();
        assert!((total - 10.0).abs() < 1e-12);
        assert!(a.indices.windows(2).all(|w| w[0] != w[1]));
        for l in &a.interval_lengths()[..a.indices.len() - 1] {
            assert!((0.5..=1.0).contains(l));
        }
        assert_ne!(a, make_switching_signal(3, 10.0, 0.5, 43).unwrap());
    }

    #[test]
    fn long_dwell_gives_single_interval() {
        let sig = make_switching_signal(3, 1.0, 2.0, 0).unwrap();
        assert_eq!(sig.switch_times.len(), 1);
        let sig = make_switching_signal(3, 1.0, 0.0, 0).unwrap();
        sig.validate(3).unwrap();
        assert!(sig.switch_times.len() > 5);
    }

    #[test]
    fn discrete_signal_has_integer_switches() {
        let sig = make_discrete_switching_signal(3, 60, 1, 7).unwrap();
        sig.validate(3).unwrap();
        assert!(sig.switch_times.iter().all(|t| t.fract() == 0.0));
        assert_eq!(sig.horizon, 60.0);
    }

    #[test]
    fn truth_outside_interval_is_named() {
        let fx = fixtures::continuous_example();
        let mut a = fx.truth_a.clone();
        a[1][(2, 0)] = 100.0;
        let err = TrueSystem::new(&fx.system, a, fx.truth_x0.clone()).unwrap_err();
        assert!(err.to_string().contains("A[2] entry (3,1)"), "{err}");
        let err = TrueSystem::new(&fx.system, fx.truth_a.clone(), vec![0.0; 5]).unwrap_err();
        assert!(err.to_string().contains("x0[1]"), "{err}");
    }

    #[test]
    fn sampled_truth_is_admissible() {
        let fx = fixtures::discrete_example();
        let t = TrueSystem::sample(&fx.system, 7);
        TrueSystem::new(&fx.system, t.a().to_vec(), t.x0().to_vec()).unwrap();
        assert_eq!(t, TrueSystem::sample(&fx.system, 7));
    }

    #[test]
    fn grid_contains_switch_times() {
        let sig = make_switching_signal(3, 2.0, 0.2, 5).unwrap();
        let grid = time_grid(&sig, 1e-3, 2.0);
        for t in &sig.switch_times {
            assert!(grid.contains(t));
        }
        assert_eq!(*grid.last().unwrap(), 2.0);
        assert!(grid
            .windows(2)
            .all(|w| w[1] > w[0] && w[1] - w[0] <= 1e-3 + 1e-15));
    }

    #[test]
    fn fixture_continuous_bracket_holds() {
        let (sys, truth, obs, sig) = fixture_continuous();
        let trace = simulate_continuous(&sys, &truth, &obs, &sig, 1e-3, 2.0).unwrap();
        let report = verify_bracket(&trace, 1e-6);
        assert_eq!(report.total_violations(), 0, "{:?}", report.worst);
        assert!(report.outputs_match);
        assert!(report.xi_norm_end < report.xi_norm_start);
        let (count, worst) = verify_order_chain(&trace, 1e-6);
        assert_eq!(count, 0, "worst {worst}");
    }

    #[test]
    fn error_systems_stay_nonnegative_under_refinement() {
        let (sys, truth, obs, sig) = fixture_continuous();
        let coarse = simulate_continuous(&sys, &truth, &obs, &sig, 1e-3, 2.0).unwrap();
        let fine = simulate_continuous(&sys, &truth, &obs, &sig, 5e-4, 2.0).unwrap();
        assert!(coarse.eps_lower[0].iter().all(|&v| v >= 0.0));
        for tr in [&coarse, &fine] {
            for (el, eu) in tr.eps_lower.iter().zip(&tr.eps_upper) {
                assert!(el.iter().chain(eu).all(|&v| v >= -1e-6));
            }
        }
        // the half-step run agrees with the full-step run at shared samples
        let mut j = 0;
        for (k, t) in coarse.times.iter().enumerate() {
            while fine.times[j] < *t {
                j += 1;
            }
            assert_eq!(fine.times[j], *t);
            for (a, b) in coarse.eps_lower[k].iter().zip(&fine.eps_lower[j]) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn collapsed_intervals_give_exact_estimates() {
        let a = Mat::from_rows(&[[-3.0, 1.0, 0.5], [0.4, -2.0, 0.3], [0.2, 0.6, -4.0]]).unwrap();
        let x0 = vec![1.0, 2.0, 0.5];
        let sys = IntervalSystem::new(
            Domain::Continuous,
            1,
            vec![a.clone()],
            vec![a.clone()],
            x0.clone(),
            x0.clone(),
        )
        .unwrap();
        let gain = Mat::from_rows(&[[0.2], [0.1]]).unwrap();
        let fx0 = vec![2.0 - 0.2, 0.5 - 0.1];
        let obs = build_observer(&sys, &gain, &fx0, &fx0).unwrap();
        let truth = TrueSystem::new(&sys, vec![a], x0).unwrap();
        let sig = SwitchingSignal::constant(0, 1.0);
        let trace = simulate_continuous(&sys, &truth, &obs, &sig, 1e-3, 1.0).unwrap();
        for k in 0..trace.len() {
            for c in 0..3 {
                assert!((trace.xhat_lower[k][c] - trace.x[k][c]).abs() < 1e-12);
                assert!((trace.xhat_upper[k][c] - trace.x[k][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_bad_step_and_domain() {
        let (sys, truth, obs, sig) = fixture_continuous();
        assert_eq!(
            simulate_continuous(&sys, &truth, &obs, &sig, 0.0, 2.0),
            Err(SimError::Step(0.0))
        );
        assert!(matches!(
            simulate_discrete(&sys, &truth, &obs, &sig, 10),
            Err(SimError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn unstable_truth_reports_blowup() {
        let a = Mat::from_rows(&[[300.0, 1.0], [1.0, 300.0]]).unwrap();
        let sys = IntervalSystem::new(
            Domain::Continuous,
            1,
            vec![a.clone()],
            vec![a.clone()],
            vec![1.0, 1.0],
            vec![1.0, 1.0],
        )
        .unwrap();
        let obs = build_observer(&sys, &Mat::zeros(1, 1), &[1.0], &[1.0]).unwrap();
        let truth = TrueSystem::new(&sys, vec![a], vec![1.0, 1.0]).unwrap();
        let sig = SwitchingSignal::constant(0, 10.0);
        assert!(matches!(
            simulate_continuous(&sys, &truth, &obs, &sig, 1e-2, 10.0),
            Err(SimError::NonFinite { .. })
        ));
    }

    #[test]
    fn fixture_discrete_bracket_and_decay() {
        let fx = fixtures::discrete_example();
        let truth = TrueSystem::new(&fx.system, fx.truth_a.clone(), fx.truth_x0.clone()).unwrap();
        let obs = build_observer(&fx.system, &fx.gain, &fx.omega0_lower, &fx.omega0_upper).unwrap();
        let sig = make_discrete_switching_signal(3, 60, 1, fx.switching_seed).unwrap();
        let trace = simulate_discrete(&fx.system, &truth, &obs, &sig, 60).unwrap();
        assert_eq!(trace.len(), 61);
        let report = verify_bracket(&trace, 1e-12);
        assert!(report.passed(), "{report:?}");
        assert!(report.xi_norm_end < 0.05 * report.xi_norm_start);
        let norms = trace.xi_norms();
        // nonincreasing once the transient is over
        assert!(norms[5..].windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert_eq!(verify_order_chain(&trace, 1e-12).0, 0);
    }

    #[test]
    fn zero_truth_dynamics() {
        let fx = fixtures::discrete_example();
        let zero_sys = IntervalSystem::new(
            Domain::Discrete,
            2,
            vec![Mat::zeros(4, 4); 3],
            (0..3).map(|i| fx.system.a_upper(i).clone()).collect(),
            fx.system.x0_lower().to_vec(),
            fx.system.x0_upper().to_vec(),
        )
        .unwrap();
        let truth =
            TrueSystem::new(&zero_sys, vec![Mat::zeros(4, 4); 3], fx.truth_x0.clone()).unwrap();
        let obs = build_observer(&zero_sys, &Mat::zeros(2, 2), &[1.0, 1.0], &[11.0, 7.0]).unwrap();
        let sig = make_discrete_switching_signal(3, 40, 1, 3).unwrap();
        let trace = simulate_discrete(&zero_sys, &truth, &obs, &sig, 40).unwrap();
        for x in &trace.x[1..] {
            assert!(x.iter().all(|&v| v == 0.0));
        }
        // lower observer has zero dynamics and zero input after the first step
        let last = trace.xhat_lower.last().unwrap();
        assert!(last[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bracket_detects_decremented_upper() {
        let (sys, truth, obs, sig) = fixture_continuous();
        let mut trace = simulate_continuous(&sys, &truth, &obs, &sig, 1e-2, 0.5).unwrap();
        for row in trace.xhat_upper.iter_mut() {
            for v in row.iter_mut() {
                *v -= 1.0;
            }
        }
        let report = verify_bracket(&trace, 1e-6);
        assert_eq!(report.violations[0], 0);
        assert!(report.violations[2] > 0);
        assert_eq!(report.worst.unwrap().layer, BracketLayer::StateBelowUpper);
    }

    #[test]
    fn csv_layout() {
        let (sys, truth, obs, sig) = fixture_continuous();
        let trace = simulate_continuous(&sys, &truth, &obs, &sig, 0.1, 0.5).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("t,x1,x2,x3,x4,x5,xhatl1,"));
        assert!(header.ends_with(",xi5,sigma"));
        assert_eq!(header.split(',').count(), 1 + 4 * 5 + 1);
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 22);
        assert_eq!(first[1].parse::<f64>().unwrap(), 4.45);
        assert!(first[1].contains('e'));
        let sigma: usize = first[21].parse().unwrap();
        assert!((1..=3).contains(&sigma));
    }
}
