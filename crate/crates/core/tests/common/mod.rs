#![allow(dead_code)]

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use num_complex::Complex64;
use qtsgen::market::AlignedPrices;
use qtsgen::qsim::{Axis, Gate};

pub type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// 2×2 matrix of a single-qubit gate written out from its definition.
fn one_qubit(gate: &Gate) -> CMat {
    let rot = |axis: Axis, t: f64| {
        let (s, co) = (t / 2.0).sin_cos();
        match axis {
            Axis::X => CMat::from_row_slice(2, 2, &[c(co, 0.0), c(0.0, -s), c(0.0, -s), c(co, 0.0)]),
            Axis::Y => CMat::from_row_slice(2, 2, &[c(co, 0.0), c(-s, 0.0), c(s, 0.0), c(co, 0.0)]),
            Axis::Z => CMat::from_row_slice(2, 2, &[c(co, -s), c(0.0, 0.0), c(0.0, 0.0), c(co, s)]),
        }
    };
    match *gate {
        Gate::X(_) => CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]),
        Gate::RX(_, t) => rot(Axis::X, t),
        Gate::RY(_, t) => rot(Axis::Y, t),
        Gate::RZ(_, t) => rot(Axis::Z, t),
        Gate::Rot(_, [a, b, g]) => rot(Axis::Z, g) * rot(Axis::Y, b) * rot(Axis::Z, a),
        Gate::CNOT { .. } => unreachable!(),
    }
}

/// `m` on qubit `q` of `n`, identity elsewhere; qubit 0 is the leftmost factor.
fn embed(n: usize, q: usize, m: &CMat) -> CMat {
    let mut out = CMat::identity(1, 1);
    for i in 0..n {
        let f = if i == q { m.clone() } else { CMat::identity(2, 2) };
        out = out.kronecker(&f);
    }
    out
}

/// Full `2^n × 2^n` unitary of one gate, built from Kronecker products.
pub fn dense_gate(n: usize, gate: &Gate) -> CMat {
    match *gate {
        Gate::CNOT { control: ctrl, target: tgt } => {
            let p0 = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
            let p1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
            let x = one_qubit(&Gate::X(0));
            let mut a = CMat::identity(1, 1);
            let mut b = CMat::identity(1, 1);
            for i in 0..n {
                let (fa, fb) = if i == ctrl {
                    (p0.clone(), p1.clone())
                } else if i == tgt {
                    (CMat::identity(2, 2), x.clone())
                } else {
                    (CMat::identity(2, 2), CMat::identity(2, 2))
                };
                a = a.kronecker(&fa);
                b = b.kronecker(&fb);
            }
            a + b
        }
        Gate::X(q) | Gate::RX(q, _) | Gate::RY(q, _) | Gate::RZ(q, _) | Gate::Rot(q, _) => embed(n, q, &one_qubit(gate)),
    }
}

pub fn dense_circuit(n: usize, gates: &[Gate]) -> CMat {
    gates.iter().fold(CMat::identity(1 << n, 1 << n), |u, g| dense_gate(n, g) * u)
}

/// Weekday dates starting at `start`.
pub fn weekdays(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().unwrap();
    }
    out
}

/// Two assets whose daily log returns cycle through four distinct values, the
/// second asset one phase ahead. 2016 holds 261 weekdays, followed by
/// `extra` days of 2017.
pub fn cyclic_pair(extra: usize) -> AlignedPrices {
    let pattern = [-0.02, -0.005, 0.005, 0.02];
    let dates = weekdays(NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(), 261 + extra);
    let closes = (0..2)
        .map(|a| {
            let mut x = 100.0f64;
            (0..dates.len())
                .map(|t| {
                    if t > 0 {
                        x *= f64::exp(pattern[(t - 1 + a) % 4]);
                    }
                    x
                })
                .collect()
        })
        .collect();
    AlignedPrices {
        asset_ids: vec!["CYCA".into(), "CYCB".into()],
        dates,
        closes,
    }
}

/// Column-stochastic 4-state matrix used for recovery checks.
pub fn markov_truth() -> DMatrix<f64> {
    DMatrix::from_column_slice(
        4,
        4,
        &[
            0.7, 0.2, 0.1, 0.0, //
            0.1, 0.7, 0.2, 0.0, //
            0.0, 0.1, 0.7, 0.2, //
            0.2, 0.0, 0.1, 0.7,
        ],
    )
}

/// Largest total-variation distance between matching columns.
pub fn max_column_tv(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| 0.5 * (a.column(j) - b.column(j)).abs().sum())
        .fold(0.0, f64::max)
}
