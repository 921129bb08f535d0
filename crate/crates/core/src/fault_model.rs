//! Pairwise fault scenarios and their relative inconsistency costs.
//!
//! A [`PairRecord`] captures what happened between a monitoring node `A` and a
//! monitored node `B` during a run of `T` epochs: when each of them failed (if
//! at all) and when `A` first declared `B` faulty. From that timeline the
//! record is classified into one of seven scenarios and priced along twelve
//! cost streams, each normalised to `[0, 1]` by the longest window the stream
//! could possibly occupy.
//!
//! All windows are half-open: an event at epoch `e` changes the state starting
//! at `e + 1`, so a window `(a, b]` spans `b - a` epochs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Epoch, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("invalid pair record: {0}")]
    InvalidRecord(String),
    #[error("fault batches do not fit: m*k = {mk} exceeds n = {n}")]
    BatchesExceedNodes { n: u64, mk: u64 },
    #[error("scenario frequencies need at least two nodes, got {0}")]
    TooFewNodes(u64),
    #[error("negative cost weight for {0}")]
    NegativeWeight(String),
}

/// Timeline of one ordered monitor pair: `A` monitors `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairRecord {
    pub runtime: Epoch,
    pub threshold: Epoch,
    pub fault_a: Option<Epoch>,
    pub fault_b: Option<Epoch>,
    pub detection: Option<Epoch>,
}

impl PairRecord {
    pub fn new(
        runtime: Epoch,
        threshold: Epoch,
        fault_a: Option<Epoch>,
        fault_b: Option<Epoch>,
        detection: Option<Epoch>,
    ) -> Result<Self, ModelError> {
        let rec = Self {
            runtime,
            threshold,
            fault_a,
            fault_b,
            detection,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidRecord(msg));
        if self.threshold < 1 || self.threshold > self.runtime {
            return bad(format!(
                "threshold {} outside [1, {}]",
                self.threshold, self.runtime
            ));
        }
        for (name, v) in [
            ("fault_a", self.fault_a),
            ("fault_b", self.fault_b),
            ("detection", self.detection),
        ] {
            if let Some(e) = v {
                if e < 1 || e > self.runtime {
                    return bad(format!("{name} = {e} outside [1, {}]", self.runtime));
                }
            }
        }
        if let Some(d) = self.detection {
            if d < self.threshold {
                return bad(format!(
                    "detection {d} earlier than threshold {}",
                    self.threshold
                ));
            }
            if let Some(fa) = self.fault_a {
                if d >= fa {
                    return bad(format!("detection {d} not before monitor fault {fa}"));
                }
            }
        }
        Ok(())
    }
}

/// The seven fault scenarios, with scenario 5 split on detection timing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    /// Both nodes healthy.
    S1,
    /// Only the monitored node fails.
    S2,
    /// Only the monitor fails.
    S3,
    /// Monitor fails first.
    S4,
    /// Monitored node fails first, detected no later than its fault.
    S5Early,
    /// Monitored node fails first, detected late or never.
    S5Late,
    /// Both fail in the same epoch.
    S6,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 7] = [
        ScenarioId::S1,
        ScenarioId::S2,
        ScenarioId::S3,
        ScenarioId::S4,
        ScenarioId::S5Early,
        ScenarioId::S5Late,
        ScenarioId::S6,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::S1 => "S1",
            ScenarioId::S2 => "S2",
            ScenarioId::S3 => "S3",
            ScenarioId::S4 => "S4",
            ScenarioId::S5Early => "S5_1",
            ScenarioId::S5Late => "S5_2",
            ScenarioId::S6 => "S6",
        }
    }

    /// Coarse class used by the pair-count identity (S5 halves merged).
    pub fn class(self) -> ScenarioClass {
        match self {
            ScenarioId::S1 => ScenarioClass::S1,
            ScenarioId::S2 => ScenarioClass::S2,
            ScenarioId::S3 => ScenarioClass::S3,
            ScenarioId::S4 => ScenarioClass::S4,
            ScenarioId::S5Early | ScenarioId::S5Late => ScenarioClass::S5,
            ScenarioId::S6 => ScenarioClass::S6,
        }
    }

    pub fn streams(self) -> &'static [CostStream] {
        use CostStream::*;
        match self {
            ScenarioId::S1 => &[S1Fp],
            ScenarioId::S2 => &[S2Fp, S2Fn],
            ScenarioId::S3 => &[S3Fp],
            ScenarioId::S4 => &[S4Fp, S4Fn],
            ScenarioId::S5Early => &[S5EarlyFp, S5EarlyFn],
            ScenarioId::S5Late => &[S5LateFnLag, S5LateFnPost],
            ScenarioId::S6 => &[S6Fp, S6Fn],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioClass {
    S1,
    S2,
    S3,
    S4,
    S5,
    S6,
}

impl ScenarioClass {
    pub const ALL: [ScenarioClass; 6] = [
        ScenarioClass::S1,
        ScenarioClass::S2,
        ScenarioClass::S3,
        ScenarioClass::S4,
        ScenarioClass::S5,
        ScenarioClass::S6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioClass::S1 => "S1",
            ScenarioClass::S2 => "S2",
            ScenarioClass::S3 => "S3",
            ScenarioClass::S4 => "S4",
            ScenarioClass::S5 => "S5",
            ScenarioClass::S6 => "S6",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    FalsePositive,
    FalseNegative,
}

/// The twelve cost streams of the scenario table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostStream {
    S1Fp,
    S2Fp,
    S2Fn,
    S3Fp,
    S4Fp,
    S4Fn,
    S5EarlyFp,
    S5EarlyFn,
    S5LateFnLag,
    S5LateFnPost,
    S6Fp,
    S6Fn,
}

pub const STREAM_COUNT: usize = 12;

impl CostStream {
    pub const ALL: [CostStream; STREAM_COUNT] = [
        CostStream::S1Fp,
        CostStream::S2Fp,
        CostStream::S2Fn,
        CostStream::S3Fp,
        CostStream::S4Fp,
        CostStream::S4Fn,
        CostStream::S5EarlyFp,
        CostStream::S5EarlyFn,
        CostStream::S5LateFnLag,
        CostStream::S5LateFnPost,
        CostStream::S6Fp,
        CostStream::S6Fn,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CostStream::S1Fp => "S1-FP",
            CostStream::S2Fp => "S2-FP",
            CostStream::S2Fn => "S2-FN",
            CostStream::S3Fp => "S3-FP",
            CostStream::S4Fp => "S4-FP",
            CostStream::S4Fn => "S4-FN",
            CostStream::S5EarlyFp => "S5.1-FP",
            CostStream::S5EarlyFn => "S5.1-FN",
            CostStream::S5LateFnLag => "S5.2-FN-lag",
            CostStream::S5LateFnPost => "S5.2-FN-post",
            CostStream::S6Fp => "S6-FP",
            CostStream::S6Fn => "S6-FN",
        }
    }

    /// Short state label used in frequency tables.
    pub fn state_label(self) -> &'static str {
        match self {
            CostStream::S5LateFnLag => "FN_LAG",
            CostStream::S5LateFnPost => "FN_POST",
            s if s.polarity() == Polarity::FalsePositive => "FP",
            _ => "FN",
        }
    }

    pub fn scenario(self) -> ScenarioId {
        match self {
            CostStream::S1Fp => ScenarioId::S1,
            CostStream::S2Fp | CostStream::S2Fn => ScenarioId::S2,
            CostStream::S3Fp => ScenarioId::S3,
            CostStream::S4Fp | CostStream::S4Fn => ScenarioId::S4,
            CostStream::S5EarlyFp | CostStream::S5EarlyFn => ScenarioId::S5Early,
            CostStream::S5LateFnLag | CostStream::S5LateFnPost => ScenarioId::S5Late,
            CostStream::S6Fp | CostStream::S6Fn => ScenarioId::S6,
        }
    }

    pub fn polarity(self) -> Polarity {
        match self {
            CostStream::S1Fp
            | CostStream::S2Fp
            | CostStream::S3Fp
            | CostStream::S4Fp
            | CostStream::S5EarlyFp
            | CostStream::S6Fp => Polarity::FalsePositive,
            _ => Polarity::FalseNegative,
        }
    }

    /// Streams whose closed form is identically one: the monitor is dead and
    /// can no longer correct the target. These carry the false-negative
    /// calibration factor.
    pub fn is_dead_monitor_fn(self) -> bool {
        matches!(
            self,
            CostStream::S4Fn | CostStream::S5EarlyFn | CostStream::S5LateFnPost | CostStream::S6Fn
        )
    }
}

impl fmt::Display for CostStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Relative cost per stream, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub rho: [f64; STREAM_COUNT],
}

impl CostBreakdown {
    pub fn get(&self, stream: CostStream) -> f64 {
        self.rho[stream.index()]
    }

    fn set(&mut self, stream: CostStream, value: f64) {
        self.rho[stream.index()] = value;
    }
}

/// Per-scenario weights on false-negative and false-positive costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub eps_fp: [f64; 7],
    pub eps_fn: [f64; 7],
}

impl Default for CostWeights {
    fn default() -> Self {
        Self::uniform(1.0, 1.0)
    }
}

impl CostWeights {
    pub fn uniform(fp: f64, fn_: f64) -> Self {
        Self {
            eps_fp: [fp; 7],
            eps_fn: [fn_; 7],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for s in ScenarioId::ALL {
            if self.eps_fp[s.index()] < 0.0 || self.eps_fp[s.index()].is_nan() {
                return Err(ModelError::NegativeWeight(format!("{s} FP")));
            }
            if self.eps_fn[s.index()] < 0.0 || self.eps_fn[s.index()].is_nan() {
                return Err(ModelError::NegativeWeight(format!("{s} FN")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, stream: CostStream) -> f64 {
        let s = stream.scenario().index();
        match stream.polarity() {
            Polarity::FalsePositive => self.eps_fp[s],
            Polarity::FalseNegative => self.eps_fn[s],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostSummary {
    pub c_total: f64,
    pub c_fn: f64,
    pub c_fp: f64,
}

impl CostSummary {
    pub fn add(&mut self, stream: CostStream, weighted: f64) {
        match stream.polarity() {
            Polarity::FalsePositive => self.c_fp += weighted,
            Polarity::FalseNegative => self.c_fn += weighted,
        }
        self.c_total = self.c_fn + self.c_fp;
    }
}

impl std::ops::Add for CostSummary {
    type Output = CostSummary;
    fn add(self, rhs: Self) -> Self {
        let c_fn = self.c_fn + rhs.c_fn;
        let c_fp = self.c_fp + rhs.c_fp;
        CostSummary {
            c_total: c_fn + c_fp,
            c_fn,
            c_fp,
        }
    }
}

/// Outcome of a monitor pair at a single epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairState {
    TrueNegative,
    TruePositive,
    FalseNegative,
    FalsePositive,
    /// Target healthy but the monitor is gone; nothing is being decided.
    Unmonitored,
}

pub fn classify_scenario(rec: &PairRecord) -> ScenarioId {
    match (rec.fault_a, rec.fault_b) {
        (None, None) => ScenarioId::S1,
        (None, Some(_)) => ScenarioId::S2,
        (Some(_), None) => ScenarioId::S3,
        (Some(fa), Some(fb)) if fa < fb => ScenarioId::S4,
        (Some(fa), Some(fb)) if fa == fb => ScenarioId::S6,
        (Some(_), Some(fb)) => match rec.detection {
            Some(d) if d <= fb => ScenarioId::S5Early,
            _ => ScenarioId::S5Late,
        },
    }
}

/// State of the pair at epoch `tau`, derived directly from the timeline.
/// This is the reference the closed-form costs are checked against.
pub fn pair_state_at(rec: &PairRecord, tau: Epoch) -> PairState {
    let b_faulty = rec.fault_b.is_some_and(|fb| tau > fb);
    let a_alive = rec.fault_a.is_none_or(|fa| tau <= fa);
    let detected = rec.detection.is_some_and(|d| d < tau);

    if b_faulty {
        if detected && a_alive {
            PairState::TruePositive
        } else {
            PairState::FalseNegative
        }
    } else if !a_alive {
        PairState::Unmonitored
    } else if detected {
        PairState::FalsePositive
    } else {
        PairState::TrueNegative
    }
}

fn ratio(num: i64, den: i64) -> f64 {
    if den <= 0 || num <= 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn relative_costs(rec: &PairRecord) -> CostBreakdown {
    use CostStream::*;
    let mut out = CostBreakdown::default();
    let big_t = rec.runtime as i64;
    let t = rec.threshold as i64;
    let d = rec.detection.map(|v| v as i64);
    let fa = rec.fault_a.map(|v| v as i64);
    let fb = rec.fault_b.map(|v| v as i64);

    // FP window that closes when the target fails (or the monitor dies).
    let fp_until = |end: i64| {
        d.filter(|&d| d < end)
            .map_or(0.0, |d| ratio(end - d, end - t))
    };

    match classify_scenario(rec) {
        ScenarioId::S1 => {
            out.set(S1Fp, d.map_or(0.0, |d| ratio(big_t - d, big_t - t)));
        }
        ScenarioId::S2 => {
            let fb = fb.unwrap();
            match d {
                Some(d) if d < fb => out.set(S2Fp, ratio(fb - d, fb - t)),
                _ => {
                    let d = d.unwrap_or(big_t);
                    out.set(S2Fn, ratio(d - fb, big_t - fb));
                }
            }
        }
        ScenarioId::S3 => out.set(S3Fp, fp_until(fa.unwrap())),
        ScenarioId::S4 => {
            let fb = fb.unwrap();
            out.set(S4Fp, fp_until(fa.unwrap()));
            out.set(S4Fn, ratio(big_t - fb, big_t - fb));
        }
        ScenarioId::S5Early => {
            let fa = fa.unwrap();
            out.set(S5EarlyFp, fp_until(fb.unwrap()));
            out.set(S5EarlyFn, ratio(big_t - fa, big_t - fa));
        }
        ScenarioId::S5Late => {
            let (fa, fb) = (fa.unwrap(), fb.unwrap());
            let d = d.unwrap_or(fa);
            out.set(S5LateFnLag, ratio(d - fb, fa - fb));
            out.set(S5LateFnPost, ratio(big_t - fa, big_t - fa));
        }
        ScenarioId::S6 => {
            let fa = fa.unwrap();
            out.set(S6Fp, fp_until(fb.unwrap()));
            out.set(S6Fn, ratio(big_t - fa, big_t - fa));
        }
    }
    out
}

pub fn total_cost<'a, I>(records: I, weights: &CostWeights) -> CostSummary
where
    I: IntoIterator<Item = &'a PairRecord>,
{
    records
        .into_iter()
        .fold(CostSummary::default(), |mut acc, rec| {
            let costs = relative_costs(rec);
            for stream in classify_scenario(rec).streams() {
                acc.add(*stream, weights.weight(*stream) * costs.get(*stream));
            }
            acc
        })
}

/// Pair counts per scenario class for `n` nodes failing in `m` batches of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub counts: [u64; 6],
}

impl ScenarioCounts {
    pub fn get(&self, class: ScenarioClass) -> u64 {
        self.counts[class as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn scenario_frequencies(n: u64, m: u64, k: u64) -> Result<ScenarioCounts, ModelError> {
    if n < 2 {
        return Err(ModelError::TooFewNodes(n));
    }
    let mk = m * k;
    if mk > n {
        return Err(ModelError::BatchesExceedNodes { n, mk });
    }
    let healthy = n - mk;
    let cross = mk * healthy;
    // m k^2 (m-1) is always even since m(m-1) is.
    let ordered = m * k * k * m.saturating_sub(1) / 2;
    let same_batch = m * k * k.saturating_sub(1);
    Ok(ScenarioCounts {
        counts: [
            healthy * healthy.saturating_sub(1),
            cross,
            cross,
            ordered,
            ordered,
            same_batch,
        ],
    })
}

/// Inputs to the fault-tolerance inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryModel {
    pub correction_duration: Epoch,
    pub recovery_time: Epoch,
    pub propagation_time: Epoch,
}

/// Tolerating the fault costs nothing when the target is back (and seen to be
/// back) before a correction could have finished.
pub fn tolerance_is_costless(fault_b: Epoch, threshold: Epoch, model: &RecoveryModel) -> bool {
    let lhs = fault_b as u64 + threshold as u64 + model.correction_duration as u64;
    let rhs = model.recovery_time as u64 + model.propagation_time as u64;
    lhs > rhs
}

/// A record tagged with the node pair it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoredPair {
    pub monitor: NodeId,
    pub target: NodeId,
    pub record: PairRecord,
}
