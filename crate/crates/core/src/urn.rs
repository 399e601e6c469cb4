//! Model definition, tenability checks and the one-step law.
//!
//! The urn holds `R` red and `B` blue balls. A step first flips the player
//! coin `Y ~ Bernoulli(theta)`; then the R-column `(a, b)` is added with
//! probability `1 - p + (2p - 1) * Y * R / T`, otherwise the B-column `(c, d)`.
//! Ball counts stay exact integers and `R + B = T = K n + T0` always.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Result, UrnError};
use crate::prob::Probability;
use crate::rng::{stream_rng, unit_f64, SeedRecord};

/// Balanced replacement matrix with columns `R = (a, b)` and `B = (c, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementMatrix {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
}

impl ReplacementMatrix {
    pub const fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        ReplacementMatrix { a, b, c, d }
    }

    /// Balls added per step, read off the R-column.
    pub fn k(&self) -> i64 {
        self.a + self.b
    }

    pub fn r_column(&self) -> [i64; 2] {
        [self.a, self.b]
    }

    pub fn b_column(&self) -> [i64; 2] {
        [self.c, self.d]
    }

    /// The same urn with the two columns exchanged.
    pub fn swapped(&self) -> Self {
        ReplacementMatrix::new(self.c, self.d, self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    #[serde(flatten)]
    pub matrix: ReplacementMatrix,
    pub p: Probability,
    pub theta: Probability,
    pub r0: i64,
    pub b0: i64,
}

impl ModelParams {
    pub fn new(
        matrix: ReplacementMatrix,
        p: impl Into<Probability>,
        theta: impl Into<Probability>,
        r0: i64,
        b0: i64,
    ) -> Self {
        ModelParams {
            matrix,
            p: p.into(),
            theta: theta.into(),
            r0,
            b0,
        }
    }

    pub fn t0(&self) -> i64 {
        self.r0 + self.b0
    }
}

/// A broken tenability assumption (or an out-of-range probability).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "assumption", rename_all = "snake_case")]
pub enum Violation {
    /// (a) the urn must start non-empty.
    InitialTotal { t0: i64 },
    /// (b) both columns must add the same `K >= 1` balls.
    Unbalanced { r_column_sum: i64, b_column_sum: i64 },
    /// (c) `a != c`, otherwise `R_n` is deterministic.
    Degenerate { a: i64, c: i64 },
    /// (d) all entries (and initial counts) non-negative.
    NegativeEntry { entry: &'static str, value: i64 },
    ProbabilityRange { name: &'static str, value: f64 },
}

impl Violation {
    /// Short label of the assumption, `None` for the probability range check.
    pub fn label(&self) -> Option<char> {
        match self {
            Violation::InitialTotal { .. } => Some('a'),
            Violation::Unbalanced { .. } => Some('b'),
            Violation::Degenerate { .. } => Some('c'),
            Violation::NegativeEntry { .. } => Some('d'),
            Violation::ProbabilityRange { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InitialTotal { t0 } => write!(f, "(a) T0 > 0 fails: T0 = {t0}"),
            Violation::Unbalanced {
                r_column_sum,
                b_column_sum,
            } => write!(
                f,
                "(b) balance a+b = c+d = K >= 1 fails: a+b = {r_column_sum}, c+d = {b_column_sum}"
            ),
            Violation::Degenerate { a, c } => write!(f, "(c) a != c fails: a = {a}, c = {c}"),
            Violation::NegativeEntry { entry, value } => {
                write!(f, "(d) non-negative entries fails: {entry} = {value}")
            }
            Violation::ProbabilityRange { name, value } => {
                write!(f, "{name} = {value} is not in [0, 1]")
            }
        }
    }
}

/// Checks assumptions (a)–(d) and the probability ranges; empty means tenable.
pub fn validate_model(params: &ModelParams) -> Vec<Violation> {
    let m = &params.matrix;
    let mut out = Vec::new();
    if params.t0() <= 0 {
        out.push(Violation::InitialTotal { t0: params.t0() });
    }
    if m.a + m.b != m.c + m.d || m.a + m.b < 1 {
        out.push(Violation::Unbalanced {
            r_column_sum: m.a + m.b,
            b_column_sum: m.c + m.d,
        });
    }
    if m.a == m.c {
        out.push(Violation::Degenerate { a: m.a, c: m.c });
    }
    for (entry, value) in [
        ("a", m.a),
        ("b", m.b),
        ("c", m.c),
        ("d", m.d),
        ("R0", params.r0),
        ("B0", params.b0),
    ] {
        if value < 0 {
            out.push(Violation::NegativeEntry { entry, value });
        }
    }
    for (name, prob) in [("p", params.p), ("theta", params.theta)] {
        if !prob.in_unit_interval() {
            out.push(Violation::ProbabilityRange {
                name,
                value: prob.value(),
            });
        }
    }
    out
}

/// A tenable model. Construction is the only way to get one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    params: ModelParams,
    k: i64,
    one_minus_p: f64,
    slope: f64,
    theta: f64,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let violations = validate_model(&params);
        if !violations.is_empty() {
            return Err(UrnError::Validation(violations));
        }
        let p = params.p.value();
        Ok(Model {
            params,
            k: params.matrix.k(),
            one_minus_p: 1.0 - p,
            slope: 2.0 * p - 1.0,
            theta: params.theta.value(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn matrix(&self) -> &ReplacementMatrix {
        &self.params.matrix
    }

    pub fn k(&self) -> i64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.params.p.value()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn t0(&self) -> i64 {
        self.params.t0()
    }

    pub fn total_at(&self, n: u64) -> i64 {
        self.k * n as i64 + self.t0()
    }

    pub fn initial_state(&self) -> UrnState {
        UrnState {
            n: 0,
            r: self.params.r0,
            b: self.params.b0,
            t: self.t0(),
        }
    }

    /// Probability of the R-column given the player indicator.
    #[inline(always)]
    pub(crate) fn red_prob(&self, r: i64, t: i64, y: bool) -> f64 {
        if y {
            self.one_minus_p + self.slope * (r as f64 / t as f64)
        } else {
            self.one_minus_p
        }
    }

    /// One draw of `(Y, R-column?)`. Consumes exactly two `u64`s: the first
    /// decides the player, the second the column.
    #[inline(always)]
    pub(crate) fn draw<G: RngCore + ?Sized>(&self, r: i64, t: i64, rng: &mut G) -> (bool, bool) {
        let y = unit_f64(rng) < self.theta;
        let red = unit_f64(rng) < self.red_prob(r, t, y);
        (y, red)
    }

    /// Index `k` (number of R-column steps) with `r = R0 + k a + (n-k) c`.
    pub fn support_index(&self, n: u64, r: i64) -> Option<u64> {
        let m = self.matrix();
        let diff = r - self.params.r0 - n as i64 * m.c;
        let step = m.a - m.c;
        if diff % step != 0 {
            return None;
        }
        let k = diff / step;
        (0..=n as i64).contains(&k).then_some(k as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnState {
    pub n: u64,
    pub r: i64,
    pub b: i64,
    pub t: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Column {
    R,
    B,
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Column::R => "R",
            Column::B => "B",
        })
    }
}

/// `y = true` means the history-aware player acted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub y: bool,
    pub column: Column,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ModelParams,
    pub states: Vec<UrnState>,
    pub steps: Vec<StepRecord>,
    pub seed: SeedRecord,
}

impl Trajectory {
    pub fn y_sequence(&self) -> Vec<bool> {
        self.steps.iter().map(|s| s.y).collect()
    }

    pub fn final_state(&self) -> UrnState {
        *self.states.last().expect("trajectory always holds the initial state")
    }
}

/// Maximal run of memoryless steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LapseRecord {
    pub start: usize,
    pub length: usize,
}

fn check_counts(r: i64, t: i64) -> Result<()> {
    if t <= 0 {
        return Err(UrnError::domain(format!("total T = {t} must be positive")));
    }
    if !(0..=t).contains(&r) {
        return Err(UrnError::domain(format!("r = {r} outside [0, T = {t}]")));
    }
    Ok(())
}

/// `P(R-column | R = r, T, Y = y) = 1 - p + (2p - 1) y r / T`.
pub fn conditional_red_probability(r: i64, t: i64, y: bool, p: f64) -> Result<f64> {
    check_counts(r, t)?;
    let y = if y { 1.0 } else { 0.0 };
    Ok(1.0 - p + (2.0 * p - 1.0) * y * (r as f64 / t as f64))
}

/// The R-column probability with the player coin integrated out.
pub fn marginal_red_probability(r: i64, t: i64, p: f64, theta: f64) -> Result<f64> {
    check_counts(r, t)?;
    Ok(1.0 - p + theta * (2.0 * p - 1.0) * (r as f64 / t as f64))
}

/// Advances `state` by one reinforcement.
pub fn step<G: RngCore + ?Sized>(
    state: &UrnState,
    model: &Model,
    rng: &mut G,
) -> Result<(UrnState, StepRecord)> {
    if state.r < 0 || state.b < 0 || state.r + state.b != state.t || state.t != model.total_at(state.n) {
        return Err(UrnError::domain(format!(
            "state {state:?} is inconsistent with the model"
        )));
    }
    let (y, red) = model.draw(state.r, state.t, rng);
    Ok((apply(model, state, red), StepRecord {
        y,
        column: if red { Column::R } else { Column::B },
    }))
}

#[inline]
fn apply(model: &Model, state: &UrnState, red: bool) -> UrnState {
    let [dr, db] = if red {
        model.matrix().r_column()
    } else {
        model.matrix().b_column()
    };
    UrnState {
        n: state.n + 1,
        r: state.r + dr,
        b: state.b + db,
        t: state.t + model.k(),
    }
}

/// Simulates `n` steps on stream 0 of `seed`.
pub fn simulate(model: &Model, n: u64, seed: u64) -> Trajectory {
    simulate_stream(model, n, SeedRecord {
        master_seed: seed,
        stream: 0,
    })
}

pub fn simulate_stream(model: &Model, n: u64, seed: SeedRecord) -> Trajectory {
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(n as usize + 1);
    let mut steps = Vec::with_capacity(n as usize);
    let mut state = model.initial_state();
    states.push(state);
    for _ in 0..n {
        let (y, red) = model.draw(state.r, state.t, &mut rng);
        state = apply(model, &state, red);
        states.push(state);
        steps.push(StepRecord {
            y,
            column: if red { Column::R } else { Column::B },
        });
    }
    Trajectory {
        params: *model.params(),
        states,
        steps,
        seed,
    }
}

/// Red count after `n` steps on the given stream, without storing the path.
pub fn final_red(model: &Model, n: u64, master_seed: u64, stream: u64) -> i64 {
    let mut rng = stream_rng(master_seed, stream);
    let (a, c, k) = (model.matrix().a, model.matrix().c, model.k());
    let (mut r, mut t) = (model.params().r0, model.t0());
    for _ in 0..n {
        let (_, red) = model.draw(r, t, &mut rng);
        r += if red { a } else { c };
        t += k;
    }
    r
}

/// All maximal runs of `false` in the player sequence, in order.
pub fn extract_lapses(y: &[bool]) -> Vec<LapseRecord> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &yi) in y.iter().enumerate() {
        match (yi, start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(LapseRecord {
                    start: s,
                    length: i - s,
                });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(LapseRecord {
            start: s,
            length: y.len() - s,
        });
    }
    out
}
