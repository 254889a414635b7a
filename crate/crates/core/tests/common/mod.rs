#![allow(dead_code)]

use std::f64::consts::PI;

use anchor_fim::geometry::{ArrayGeometry, EulerAngles, Pose};
use anchor_fim::signal::{identity_plan, ChannelParams, Node, Regime, Scenario, TransmitPlan};
use nalgebra::{DMatrix, Vector3};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{FromPrimitive, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A link with random poses, array sizes, carrier, gain and plan.
pub fn random_scenario(rng: &mut impl Rng) -> Scenario {
    let carrier = [10e9, 28e9][rng.gen_range(0..2)];
    let n_b = [16, 36, 64, 100][rng.gen_range(0..4)];
    let n_u = [1, 4, 9, 16][rng.gen_range(0..4)];
    let t = rng.gen_range(1..=6);
    let gain = Complex64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(-PI..PI));
    let channel = ChannelParams::new(gain, carrier, 10f64.powf(rng.gen_range(-1.0..3.0))).unwrap();
    let half = channel.wavelength() / 2.0;
    let mut angles = || {
        EulerAngles::new(
            rng.gen_range(-PI..PI),
            rng.gen_range(-PI..PI),
            rng.gen_range(-PI..PI),
        )
        .unwrap()
    };
    let (a_b, a_u) = (angles(), angles());
    let p_b = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
    let dir = loop {
        let v = Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 && v.norm() < 1.0 {
            break v.normalize();
        }
    };
    let p_u = p_b + dir * rng.gen_range(0.5..8.0);
    let plan = if rng.gen_bool(0.5) {
        TransmitPlan::dft(n_b, 16, t).unwrap()
    } else {
        identity_plan(n_b, t).unwrap()
    };
    Scenario::new(
        Node::new(
            Pose::new(p_b, a_b).unwrap(),
            ArrayGeometry::upa(n_b, half).unwrap(),
        ),
        Node::new(
            Pose::new(p_u, a_u).unwrap(),
            ArrayGeometry::upa(n_u, half).unwrap(),
        ),
        channel,
        plan,
        Regime::NearField,
    )
    .unwrap()
}

pub fn random_scenarios(seed: u64, count: usize) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_scenario(&mut rng)).collect()
}

/// Exact inverse of the matrix whose entries are the given doubles, by
/// rational Gauss-Jordan elimination, rounded once at the end.
pub fn exact_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = m.nrows();
    let mut a: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..2 * n)
                .map(|j| {
                    if j < n {
                        BigRational::from_f64(m[(i, j)]).unwrap()
                    } else if j - n == i {
                        BigRational::from_integer(BigInt::from(1))
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for v in a[col].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col].clone();
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x -= &f * p;
                }
            }
        }
    }
    Some(DMatrix::from_fn(n, n, |i, j| a[i][n + j].to_f64().unwrap()))
}

pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}
