use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Zero-field state |n, l, j, m_j⟩ of a single-valence-electron atom.
///
/// `j2` and `mj2` hold twice the (half-integer) j and m_j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub n: u32,
    pub l: u32,
    pub j2: u32,
    pub mj2: i32,
}

impl BasisState {
    pub fn new(n: u32, l: u32, j2: u32, mj2: i32) -> Result<Self> {
        let s = BasisState { n, l, j2, mj2 };
        if !s.is_valid() {
            return invalid(format!("not a valid basis state: {s}"));
        }
        Ok(s)
    }

    pub fn is_valid(&self) -> bool {
        let j_ok = if self.l == 0 {
            self.j2 == 1
        } else {
            self.j2 == 2 * self.l + 1 || self.j2 + 1 == 2 * self.l
        };
        self.n >= 1
            && self.l < self.n
            && j_ok
            && self.mj2.unsigned_abs() <= self.j2
            && (self.mj2 - self.j2 as i32) % 2 == 0
    }

    pub fn j(&self) -> f64 {
        self.j2 as f64 / 2.0
    }

    pub fn mj(&self) -> f64 {
        self.mj2 as f64 / 2.0
    }

    /// (n, l, 2j): the part of the label that fixes the radial function.
    pub fn nlj(&self) -> (u32, u32, u32) {
        (self.n, self.l, self.j2)
    }
}

const L_LETTERS: &[char] = &['S', 'P', 'D', 'F', 'G', 'H', 'I', 'K'];

impl fmt::Display for BasisState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lsym = L_LETTERS
            .get(self.l as usize)
            .map(|c| c.to_string())
            .unwrap_or_else(|| format!("(l={})", self.l));
        write!(f, "|{}{}{}/2, mj={}/2⟩", self.n, lsym, self.j2, self.mj2)
    }
}

/// Ordered, duplicate-free list of basis states with a reverse index.
#[derive(Clone, Debug)]
pub struct Basis {
    states: Vec<BasisState>,
    index: HashMap<BasisState, usize>,
}

impl Basis {
    /// Sorts and de-duplicates `states`.
    pub fn from_states(mut states: Vec<BasisState>) -> Result<Self> {
        if let Some(bad) = states.iter().find(|s| !s.is_valid()) {
            return invalid(format!("not a valid basis state: {bad}"));
        }
        states.sort();
        states.dedup();
        if states.is_empty() {
            return invalid("empty basis");
        }
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Ok(Basis { states, index })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    pub fn get(&self, i: usize) -> BasisState {
        self.states[i]
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Keeps the states for which `keep` holds.
    pub fn filtered(&self, keep: impl Fn(&BasisState) -> bool) -> Result<Basis> {
        Basis::from_states(self.states.iter().copied().filter(|s| keep(s)).collect())
    }

    /// Distinct (n, l, 2j) triples in the basis.
    pub fn radial_labels(&self) -> Vec<(u32, u32, u32)> {
        let mut v: Vec<_> = self.states.iter().map(|s| s.nlj()).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Every |n, l, j, m_j⟩ with n_min ≤ n ≤ n_max and l ≤ l_max.
pub fn build_basis(n_min: u32, n_max: u32, l_max: Option<u32>) -> Result<Basis> {
    if n_min < 1 || n_min > n_max {
        return invalid(format!("empty n window [{n_min}, {n_max}]"));
    }
    if let Some(lm) = l_max {
        if lm >= n_max {
            return invalid(format!("l_max = {lm} must be below n_max = {n_max}"));
        }
    }
    let mut states = Vec::new();
    for n in n_min..=n_max {
        let top = l_max.map_or(n - 1, |lm| lm.min(n - 1));
        for l in 0..=top {
            let j2s: &[u32] = if l == 0 { &[1] } else { &[2 * l - 1, 2 * l + 1] };
            for &j2 in j2s {
                let mut mj2 = -(j2 as i32);
                while mj2 <= j2 as i32 {
                    states.push(BasisState { n, l, j2, mj2 });
                    mj2 += 2;
                }
            }
        }
    }
    Basis::from_states(states)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_s_level() {
        let b = build_basis(48, 48, Some(0)).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.get(0), BasisState { n: 48, l: 0, j2: 1, mj2: -1 });
        assert_eq!(b.get(1), BasisState { n: 48, l: 0, j2: 1, mj2: 1 });
    }

    #[test]
    fn full_manifold_count() {
        assert_eq!(build_basis(47, 47, None).unwrap().len(), 2 * 47 * 47);
    }

    #[test]
    fn desk_window_count_matches_enumeration() {
        // independent count: loop over every (n, l, j, mj) tuple directly
        let mut brute = 0usize;
        for n in 45..=51u32 {
            for l in 0..n {
                for j2 in [2 * l as i32 - 1, 2 * l as i32 + 1] {
                    if j2 < 1 {
                        continue;
                    }
                    brute += (j2 + 1) as usize;
                }
            }
        }
        assert_eq!(brute, 32_312);
        assert_eq!(build_basis(45, 51, None).unwrap().len(), brute);
    }

    #[test]
    fn rejects_bad_windows() {
        assert!(build_basis(5, 4, None).is_err());
        assert!(build_basis(0, 4, None).is_err());
        assert!(build_basis(4, 6, Some(6)).is_err());
    }

    #[test]
    fn invalid_states_rejected() {
        assert!(BasisState::new(3, 3, 7, 1).is_err());
        assert!(BasisState::new(3, 0, 3, 1).is_err());
        assert!(BasisState::new(3, 1, 3, 5).is_err());
        assert!(BasisState::new(3, 1, 3, 2).is_err());
        assert!(BasisState::new(3, 2, 3, -3).is_ok());
    }

    #[test]
    fn order_is_total_and_unique() {
        let b = build_basis(3, 5, None).unwrap();
        for w in b.states().windows(2) {
            assert!(w[0] < w[1]);
        }
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
        }
    }
}
