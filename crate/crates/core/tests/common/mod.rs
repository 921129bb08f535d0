#![allow(dead_code)]

use healsim_core::fault_model::{CostStream, PairRecord, STREAM_COUNT};
use healsim_core::Epoch;
use proptest::prelude::*;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scen {
    S1,
    S2,
    S3,
    S4,
    S51,
    S52,
    S6,
}

pub fn scen_of(r: &PairRecord) -> Scen {
    match (r.fault_a, r.fault_b) {
        (None, None) => Scen::S1,
        (None, Some(_)) => Scen::S2,
        (Some(_), None) => Scen::S3,
        (Some(a), Some(b)) if a < b => Scen::S4,
        (Some(a), Some(b)) if a == b => Scen::S6,
        (Some(_), Some(b)) => match r.detection {
            Some(d) if d <= b => Scen::S51,
            _ => Scen::S52,
        },
    }
}

fn frac(num: u64, den: i64) -> f64 {
    if den <= 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Relative costs obtained by walking every epoch of the pair's timeline and
/// counting the epochs spent in a false-positive or false-negative state.
pub fn oracle_costs(r: &PairRecord) -> [f64; STREAM_COUNT] {
    use CostStream::*;
    let big_t = r.runtime;
    let b_down = |tau: Epoch| r.fault_b.is_some_and(|f| tau > f);
    let a_up = |tau: Epoch| r.fault_a.is_none_or(|f| tau <= f);
    let fired = |tau: Epoch| r.detection.is_some_and(|d| tau > d);

    let scen = scen_of(r);
    let (mut fp, mut missed_before_fa, mut missed_after_fa) = (0u64, 0u64, 0u64);
    for tau in 1..=big_t {
        if !b_down(tau) && a_up(tau) && fired(tau) {
            fp += 1;
        }
        if b_down(tau) && !(fired(tau) && a_up(tau)) {
            if a_up(tau) {
                missed_before_fa += 1;
            } else {
                missed_after_fa += 1;
            }
        }
    }
    let missed = missed_before_fa + missed_after_fa;
    let t = r.threshold as i64;
    let rt = big_t as i64;
    let fa = r.fault_a.map(|v| v as i64).unwrap_or(rt);
    let fb = r.fault_b.map(|v| v as i64).unwrap_or(rt);

    let mut out = [0.0; STREAM_COUNT];
    let mut set = |s: CostStream, v: f64| out[s.index()] = v;
    match scen {
        Scen::S1 => set(S1Fp, frac(fp, rt - t)),
        Scen::S2 => {
            set(S2Fp, frac(fp, fb - t));
            set(S2Fn, frac(missed, rt - fb));
        }
        Scen::S3 => set(S3Fp, frac(fp, fa - t)),
        Scen::S4 => {
            set(S4Fp, frac(fp, fa - t));
            set(S4Fn, frac(missed, rt - fb));
        }
        Scen::S51 => {
            set(S5EarlyFp, frac(fp, fb - t));
            set(S5EarlyFn, frac(missed, rt - fa));
        }
        Scen::S52 => {
            set(S5LateFnLag, frac(missed_before_fa, fa - fb));
            set(S5LateFnPost, frac(missed_after_fa, rt - fa));
        }
        Scen::S6 => {
            set(S6Fp, frac(fp, fb - t));
            set(S6Fn, frac(missed, rt - fa));
        }
    }
    out
}

fn build(
    runtime: Epoch,
    threshold: Epoch,
    fa: Option<Epoch>,
    fb: Option<Epoch>,
    d_raw: Option<Epoch>,
) -> PairRecord {
    // Clamp the detection into the valid window [t, min(F_A - 1, T)].
    let hi = fa.map_or(runtime, |a| a.saturating_sub(1));
    let detection = d_raw.and_then(|d| (threshold <= hi).then(|| d.clamp(threshold, hi)));
    PairRecord::new(runtime, threshold, fa, fb, detection).expect("generated record is valid")
}

pub fn random_record<R: Rng>(rng: &mut R) -> PairRecord {
    let runtime = rng.gen_range(20..=4000);
    let threshold = rng.gen_range(1..=runtime);
    let opt = |p: f64, rng: &mut R| rng.gen_bool(p).then(|| rng.gen_range(1..=runtime));
    let fa = opt(0.6, rng);
    let mut fb = opt(0.6, rng);
    if rng.gen_bool(0.1) {
        fb = fa;
    }
    let d = opt(0.7, rng);
    build(runtime, threshold, fa, fb, d)
}

pub fn arb_record() -> impl Strategy<Value = PairRecord> {
    (20u32..=3200).prop_flat_map(|rt| {
        (
            Just(rt),
            1..=rt,
            proptest::option::weighted(0.6, 1..=rt),
            proptest::option::weighted(0.6, 1..=rt),
            proptest::option::weighted(0.7, 1..=rt),
            any::<bool>(),
        )
            .prop_map(|(rt, t, fa, fb, d, tie)| {
                build(rt, t, fa, if tie && fa.is_some() { fa } else { fb }, d)
            })
    })
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot = a[col].clone();
            for (x, p) in a[row].iter_mut().zip(&pivot).skip(col) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

/// Intercept-first least squares through the normal equations.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len() + 1;
    let row = |r: &Vec<f64>| {
        std::iter::once(1.0)
            .chain(r.iter().copied())
            .collect::<Vec<_>>()
    };
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &yi) in x.iter().zip(y) {
        let z = row(r);
        for i in 0..p {
            xty[i] += z[i] * yi;
            for j in 0..p {
                xtx[i][j] += z[i] * z[j];
            }
        }
    }
    gauss_solve(xtx, xty)
}
