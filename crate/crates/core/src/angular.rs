//! Wigner 3j and 6j symbols.
//!
//! Arguments are passed as *doubled* integers so that half-integer angular
//! momenta are exact: `wigner_3j(2, 2, 0, 0, 0, 0)` is (1 1 0; 0 0 0).

use std::sync::OnceLock;

const MAX_FACTORIAL: usize = 512;

fn ln_factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0.0; MAX_FACTORIAL + 1];
        for i in 1..=MAX_FACTORIAL {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    })
}

/// ln(x!) for a doubled argument `tx = 2x`; `tx` must be even and non-negative.
fn lnf(tx: i32) -> f64 {
    debug_assert!(tx >= 0 && tx % 2 == 0);
    ln_factorials()[(tx / 2) as usize]
}

fn triangle(ta: i32, tb: i32, tc: i32) -> bool {
    tc >= (ta - tb).abs() && tc <= ta + tb && (ta + tb + tc) % 2 == 0
}

fn ln_delta(ta: i32, tb: i32, tc: i32) -> f64 {
    0.5 * (lnf(ta + tb - tc) + lnf(ta - tb + tc) + lnf(-ta + tb + tc) - lnf(ta + tb + tc + 2))
}

fn parity_sign(tx: i32) -> f64 {
    // (-1)^x for doubled even tx
    if (tx / 2) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Wigner 3j symbol (j1 j2 j3; m1 m2 m3) with doubled arguments.
pub fn wigner_3j(tj1: i32, tj2: i32, tj3: i32, tm1: i32, tm2: i32, tm3: i32) -> f64 {
    if tm1 + tm2 + tm3 != 0 || !triangle(tj1, tj2, tj3) {
        return 0.0;
    }
    if tm1.abs() > tj1 || tm2.abs() > tj2 || tm3.abs() > tj3 {
        return 0.0;
    }
    if (tj1 + tm1) % 2 != 0 || (tj2 + tm2) % 2 != 0 || (tj3 + tm3) % 2 != 0 {
        return 0.0;
    }
    let pref = ln_delta(tj1, tj2, tj3)
        + 0.5
            * (lnf(tj1 + tm1)
                + lnf(tj1 - tm1)
                + lnf(tj2 + tm2)
                + lnf(tj2 - tm2)
                + lnf(tj3 + tm3)
                + lnf(tj3 - tm3));
    let kmin = 0.max(tj2 - tj3 - tm1).max(tj1 - tj3 + tm2);
    let kmax = (tj1 + tj2 - tj3).min(tj1 - tm1).min(tj2 + tm2);
    let mut sum = 0.0;
    let mut tk = kmin;
    while tk <= kmax {
        let den = lnf(tk)
            + lnf(tj3 - tj2 + tk + tm1)
            + lnf(tj3 - tj1 + tk - tm2)
            + lnf(tj1 + tj2 - tj3 - tk)
            + lnf(tj1 - tk - tm1)
            + lnf(tj2 - tk + tm2);
        sum += parity_sign(tk) * (pref - den).exp();
        tk += 2;
    }
    parity_sign(tj1 - tj2 - tm3) * sum
}

/// Wigner 6j symbol {j1 j2 j3; j4 j5 j6} with doubled arguments.
pub fn wigner_6j(tj1: i32, tj2: i32, tj3: i32, tj4: i32, tj5: i32, tj6: i32) -> f64 {
    if !triangle(tj1, tj2, tj3)
        || !triangle(tj1, tj5, tj6)
        || !triangle(tj4, tj2, tj6)
        || !triangle(tj4, tj5, tj3)
    {
        return 0.0;
    }
    let pref = ln_delta(tj1, tj2, tj3)
        + ln_delta(tj1, tj5, tj6)
        + ln_delta(tj4, tj2, tj6)
        + ln_delta(tj4, tj5, tj3);
    let a1 = tj1 + tj2 + tj3;
    let a2 = tj1 + tj5 + tj6;
    let a3 = tj4 + tj2 + tj6;
    let a4 = tj4 + tj5 + tj3;
    let b1 = tj1 + tj2 + tj4 + tj5;
    let b2 = tj2 + tj3 + tj5 + tj6;
    let b3 = tj3 + tj1 + tj6 + tj4;
    let tmin = a1.max(a2).max(a3).max(a4);
    let tmax = b1.min(b2).min(b3);
    let mut sum = 0.0;
    let mut tt = tmin;
    while tt <= tmax {
        let num = lnf(tt + 2);
        let den = lnf(tt - a1)
            + lnf(tt - a2)
            + lnf(tt - a3)
            + lnf(tt - a4)
            + lnf(b1 - tt)
            + lnf(b2 - tt)
            + lnf(b3 - tt);
        sum += parity_sign(tt) * (pref + num - den).exp();
        tt += 2;
    }
    sum
}

/// Clebsch–Gordan coefficient ⟨j1 m1; j2 m2 | J M⟩ with doubled arguments.
pub fn clebsch_gordan(tj1: i32, tm1: i32, tj2: i32, tm2: i32, tj: i32, tm: i32) -> f64 {
    let phase = parity_sign(tj1 - tj2 + tm);
    phase * ((tj + 1) as f64).sqrt() * wigner_3j(tj1, tj2, tj, tm1, tm2, -tm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simple_values() {
        // (1 1 0; 0 0 0) = -1/sqrt(3)
        assert_abs_diff_eq!(wigner_3j(2, 2, 0, 0, 0, 0), -1.0 / 3f64.sqrt(), epsilon = 1e-14);
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        assert_abs_diff_eq!(wigner_3j(1, 1, 2, 1, -1, 0), 1.0 / 6f64.sqrt(), epsilon = 1e-14);
        // (2 1 1; 0 0 0) = sqrt(2/15)
        assert_abs_diff_eq!(wigner_3j(4, 2, 2, 0, 0, 0), (2.0f64 / 15.0).sqrt(), epsilon = 1e-14);
        // {a b c; b a 0} = (-1)^(a+b+c)/sqrt((2a+1)(2b+1))
        assert_abs_diff_eq!(wigner_6j(1, 1, 2, 1, 1, 0), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(wigner_6j(2, 2, 2, 2, 2, 0), -1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn selection_rules_give_zero() {
        assert_eq!(wigner_3j(2, 2, 2, 0, 0, 0), 0.0);
        assert_eq!(wigner_3j(2, 2, 2, 2, 2, -2), 0.0);
        assert_eq!(wigner_3j(2, 2, 6, 0, 0, 0), 0.0);
        assert_eq!(wigner_6j(2, 2, 6, 2, 2, 2), 0.0);
    }

    #[test]
    fn three_j_orthogonality() {
        for &(tj1, tj2) in &[(1i32, 2i32), (4, 2), (5, 3), (20, 2)] {
            let mut tj3 = (tj1 - tj2).abs();
            while tj3 <= tj1 + tj2 {
                let mut tj3p = (tj1 - tj2).abs();
                while tj3p <= tj1 + tj2 {
                    let mut tm3 = -tj3.min(tj3p);
                    while tm3 <= tj3.min(tj3p) {
                        let mut s = 0.0;
                        let mut tm1 = -tj1;
                        while tm1 <= tj1 {
                            let tm2 = -tm3 - tm1;
                            s += wigner_3j(tj1, tj2, tj3, tm1, tm2, tm3)
                                * wigner_3j(tj1, tj2, tj3p, tm1, tm2, tm3);
                            tm1 += 2;
                        }
                        let expect = if tj3 == tj3p { 1.0 / (tj3 + 1) as f64 } else { 0.0 };
                        assert_abs_diff_eq!(s, expect, epsilon = 1e-12);
                        tm3 += 2;
                    }
                    tj3p += 2;
                }
                tj3 += 2;
            }
        }
    }

    #[test]
    fn six_j_orthogonality() {
        // sum_x (2x+1)(2c+1) {a b x; c d p}{a b x; c d q} = delta_pq
        let (ta, tb, tc, td) = (3, 2, 5, 4);
        for tp in [1, 3, 5, 7] {
            for tq in [1, 3, 5, 7] {
                let mut s = 0.0;
                for tx in 0..20 {
                    s += (tx + 1) as f64
                        * (tp + 1) as f64
                        * wigner_6j(ta, tb, tx, tc, td, tp)
                        * wigner_6j(ta, tb, tx, tc, td, tq);
                }
                let has = triangle(ta, td, tp) && triangle(tc, tb, tp);
                let expect = if tp == tq && has { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(s, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn clebsch_gordan_spin_half_coupling() {
        // |1 1/2; 3/2 1/2> = sqrt(2/3)|1,0>|+> + sqrt(1/3)|1,1>|->
        assert_abs_diff_eq!(clebsch_gordan(2, 0, 1, 1, 3, 1), (2.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(clebsch_gordan(2, 2, 1, -1, 3, 1), (1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
    }
}
