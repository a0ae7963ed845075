//! Exact fractional edge covers.
//!
//! The covering LP `min Σ γ_e  s.t.  Σ_{e∋v} γ_e ≥ 1, γ ≥ 0` is solved through
//! its dual packing LP `max Σ y_v  s.t.  Σ_{v∈e} y_v ≤ 1, y ≥ 0`, whose origin
//! is feasible. A dense tableau simplex over big rationals with Bland's rule
//! finds the optimum; the primal weights are read off the reduced costs of
//! the slack columns.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Optimal fractional edge cover of a hypergraph on nodes `0..n`.
///
/// Returns the optimum weight and one optimal weight per edge. Returns
/// `None` when some node lies in no edge.
pub fn fractional_edge_cover(n: usize, edges: &[Vec<usize>]) -> Option<(Rational, Vec<Rational>)> {
    let m = edges.len();
    let mut covered = vec![false; n];
    for e in edges {
        for &v in e {
            covered[v] = true;
        }
    }
    if covered.iter().any(|c| !c) {
        return None;
    }
    if n == 0 {
        return Some((Rational::zero(), vec![Rational::zero(); m]));
    }

    // Columns: y_0..y_{n-1}, s_0..s_{m-1}, rhs.
    let cols = n + m;
    let mut t: Vec<Vec<Rational>> = Vec::with_capacity(m + 1);
    for (i, e) in edges.iter().enumerate() {
        let mut row = vec![Rational::zero(); cols + 1];
        for &v in e {
            row[v] = Rational::one();
        }
        row[n + i] = Rational::one();
        row[cols] = Rational::one();
        t.push(row);
    }
    let mut obj = vec![Rational::zero(); cols + 1];
    for c in obj.iter_mut().take(n) {
        *c = -Rational::one();
    }
    t.push(obj);
    let mut basis: Vec<usize> = (n..n + m).collect();

    loop {
        let Some(enter) = (0..cols).find(|&j| t[m][j].is_negative()) else {
            break;
        };
        let mut leave: Option<(usize, Rational)> = None;
        for i in 0..m {
            if t[i][enter].is_positive() {
                let ratio = &t[i][cols] / &t[i][enter];
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => ratio < *lr || (ratio == *lr && basis[i] < basis[*li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        // Bounded because every y_v appears in some constraint with coefficient 1.
        let (pr, _) = leave.expect("packing LP is bounded");
        let piv = t[pr][enter].clone();
        for x in t[pr].iter_mut() {
            *x = &*x / &piv;
        }
        let prow = t[pr].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i == pr || row[enter].is_zero() {
                continue;
            }
            let f = row[enter].clone();
            for (x, p) in row.iter_mut().zip(&prow) {
                *x -= &f * p;
            }
        }
        basis[pr] = enter;
    }

    let value = t[m][cols].clone();
    let weights = (0..m).map(|i| t[m][n + i].clone()).collect();
    Some((value, weights))
}
