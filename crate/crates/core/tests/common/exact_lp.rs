//! Exact rational simplex for `max c·x, A x ≤ b, x ≥ 0` with `b ≥ 0`.
//!
//! Bland's rule on a dense tableau of big rationals. Written separately from
//! the crate's floating-point solver so it can serve as a test oracle.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub fn rational(v: f64) -> BigRational {
    BigRational::from_float(v).expect("finite value")
}

pub fn to_f64(v: &BigRational) -> f64 {
    let n: f64 = v.numer().to_string().parse().unwrap();
    let d: f64 = v.denom().to_string().parse().unwrap();
    n / d
}

/// Optimal value, or `None` when unbounded.
pub fn maximize(c: &[BigRational], a: &[Vec<BigRational>], b: &[BigRational]) -> Option<BigRational> {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t: Vec<Vec<BigRational>> = Vec::with_capacity(m + 1);
    for (i, row) in a.iter().enumerate() {
        assert!(!b[i].is_negative(), "right-hand sides must be nonnegative");
        let mut r = vec![BigRational::zero(); width];
        for (j, v) in row.iter().enumerate() {
            r[j] = v.clone();
        }
        r[n + i] = BigRational::one();
        r[width - 1] = b[i].clone();
        t.push(r);
    }
    let mut obj = vec![BigRational::zero(); width];
    for (j, v) in c.iter().enumerate() {
        obj[j] = -v.clone();
    }
    t.push(obj);
    let mut basis: Vec<usize> = (n..n + m).collect();
    loop {
        let Some(enter) = (0..width - 1).find(|&j| t[m][j].is_negative()) else {
            return Some(t[m][width - 1].clone());
        };
        let mut leave: Option<(usize, BigRational)> = None;
        for i in 0..m {
            if t[i][enter].is_positive() {
                let ratio = &t[i][width - 1] / &t[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave?;
        let p = t[r][enter].clone();
        for v in t[r].iter_mut() {
            *v = &*v / &p;
        }
        let pivot_row = t[r].clone();
        let nz: Vec<usize> = (0..width).filter(|&j| !pivot_row[j].is_zero()).collect();
        for (i, row) in t.iter_mut().enumerate() {
            if i == r || row[enter].is_zero() {
                continue;
            }
            let f = row[enter].clone();
            for &j in &nz {
                row[j] = &row[j] - &f * &pivot_row[j];
            }
        }
        basis[r] = enter;
    }
}

#[allow(dead_code)]
pub fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}
