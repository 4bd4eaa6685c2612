//! Rydberg–Ritz quantum defect tables.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Rydberg–Ritz coefficients keyed by (l, 2j).
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumDefectTable {
    entries: BTreeMap<(u32, u32), (f64, f64)>,
    l_max: u32,
}

const RB87_TABLE: &str = include_str!("../../data/rb87_quantum_defects.txt");

impl QuantumDefectTable {
    /// The table shipped with the crate (⁸⁷Rb, s through f series).
    pub fn rb87() -> Self {
        Self::parse(RB87_TABLE, Path::new("<builtin rb87_quantum_defects.txt>"))
            .expect("builtin quantum defect table is valid")
    }

    /// All defects zero: hydrogenic energies.
    pub fn hydrogenic() -> Self {
        QuantumDefectTable {
            entries: BTreeMap::new(),
            l_max: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses `l=.. j=.. delta0=.. delta2=..` records, one per line.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (mut l, mut j2, mut d0, mut d2) = (None, None, None, None);
            for tok in content.split_whitespace() {
                let (key, value) = tok
                    .split_once('=')
                    .ok_or_else(|| err(lineno, format!("expected key=value, got '{tok}'")))?;
                match key {
                    "l" => {
                        l = Some(value.parse::<u32>().map_err(|e| err(lineno, format!("l: {e}")))?)
                    }
                    "j" => j2 = Some(parse_doubled(value).ok_or_else(|| err(lineno, format!("bad j '{value}'")))?),
                    "delta0" => {
                        d0 = Some(value.parse::<f64>().map_err(|e| err(lineno, format!("delta0: {e}")))?)
                    }
                    "delta2" => {
                        d2 = Some(value.parse::<f64>().map_err(|e| err(lineno, format!("delta2: {e}")))?)
                    }
                    other => return Err(err(lineno, format!("unknown key '{other}'"))),
                }
            }
            let (Some(l), Some(j2), Some(d0), Some(d2)) = (l, j2, d0, d2) else {
                return Err(err(lineno, "record needs l, j, delta0 and delta2".into()));
            };
            let j_ok = if l == 0 { j2 == 1 } else { j2 == 2 * l + 1 || j2 + 1 == 2 * l };
            if !j_ok {
                return Err(err(lineno, format!("j = {j2}/2 is not allowed for l = {l}")));
            }
            if !(d0.is_finite() && d2.is_finite()) || d0 < 0.0 {
                return Err(err(lineno, "delta0 must be finite and non-negative".into()));
            }
            if entries.insert((l, j2), (d0, d2)).is_some() {
                return Err(err(lineno, format!("duplicate entry for l = {l}, j = {j2}/2")));
            }
        }
        let l_max = entries.keys().map(|k| k.0).max().unwrap_or(0);
        for l in 0..=l_max {
            let needed: Vec<u32> = if l == 0 { vec![1] } else { vec![2 * l - 1, 2 * l + 1] };
            for j2 in needed {
                if !entries.contains_key(&(l, j2)) && !entries.is_empty() {
                    return Err(err(0, format!("missing entry for l = {l}, j = {j2}/2 (l_max = {l_max})")));
                }
            }
        }
        Ok(QuantumDefectTable { entries, l_max })
    }

    /// Highest l with a tabulated defect; beyond it the defect is exactly 0.
    pub fn l_max(&self) -> Option<u32> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.l_max)
        }
    }

    /// δ(n, l, j).
    pub fn defect(&self, n: u32, l: u32, j2: u32) -> f64 {
        match self.entries.get(&(l, j2)) {
            Some(&(d0, d2)) => {
                let x = n as f64 - d0;
                d0 + d2 / (x * x)
            }
            None => 0.0,
        }
    }

    /// Effective principal quantum number n − δ.
    pub fn n_eff(&self, n: u32, l: u32, j2: u32) -> f64 {
        n as f64 - self.defect(n, l, j2)
    }
}

fn parse_doubled(s: &str) -> Option<u32> {
    if let Some((num, den)) = s.split_once('/') {
        let num: u32 = num.trim().parse().ok()?;
        (den.trim() == "2" && num % 2 == 1).then_some(num)
    } else {
        let x: f64 = s.parse().ok()?;
        let d = 2.0 * x;
        (d.fract() == 0.0 && d > 0.0 && (d as u32) % 2 == 1).then_some(d as u32)
    }
}
