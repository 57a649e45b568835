//! Affine tensor index expressions such as `i`, `h+r` or `2*p+r+1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `coeff * loop` with `coeff >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub coeff: u64,
    pub var: usize,
}

/// One tensor coordinate as a sum of at most two loop terms plus a constant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexExpr {
    pub terms: Vec<Term>,
    pub offset: u64,
}

impl IndexExpr {
    pub fn var(var: usize) -> Self {
        Self {
            terms: vec![Term { coeff: 1, var }],
            offset: 0,
        }
    }

    pub fn parse(text: &str, loops: &[String]) -> Result<Self> {
        let fail = |message: &str| Error::Expr {
            expr: text.to_string(),
            message: message.to_string(),
        };
        let mut terms: Vec<Term> = Vec::new();
        let mut offset = 0u64;
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(fail("empty expression"));
        }
        for part in compact.split('+') {
            if part.is_empty() {
                return Err(fail("dangling `+`"));
            }
            let (coeff, name) = match part.split_once('*') {
                Some((c, n)) => {
                    let c: u64 = c
                        .parse()
                        .map_err(|_| fail("coefficient must be an integer"))?;
                    (c, Some(n))
                }
                None if part.chars().all(|c| c.is_ascii_digit()) => {
                    offset += part.parse::<u64>().map_err(|_| fail("bad constant"))?;
                    (0, None)
                }
                None => (1, Some(part)),
            };
            let Some(name) = name else { continue };
            if coeff == 0 {
                return Err(fail("coefficient must be at least 1"));
            }
            let var = loops
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| fail(&format!("unknown loop `{name}`")))?;
            match terms.iter_mut().find(|t| t.var == var) {
                Some(t) => t.coeff += coeff,
                None => terms.push(Term { coeff, var }),
            }
        }
        if terms.len() > 2 {
            return Err(fail("at most two loop terms are supported"));
        }
        Ok(Self { terms, offset })
    }

    pub fn eval(&self, point: &[u64]) -> u64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|t| t.coeff * point[t.var])
                .sum::<u64>()
    }

    /// Largest value over a box whose loop `l` spans `[0, extents[l])`, plus one.
    pub fn extent(&self, extents: &[u64]) -> u64 {
        self.offset
            + self
                .terms
                .iter()
                .map(|t| t.coeff * (extents[t.var] - 1))
                .sum::<u64>()
            + 1
    }

    /// Number of distinct values over a box of the given loop sizes.
    pub fn distinct(&self, sizes: &[u64]) -> u64 {
        match self.terms.as_slice() {
            [] => 1,
            [_] => 1.max(sizes[self.terms[0].var]),
            [a, b] => distinct_pair(a.coeff, sizes[a.var], b.coeff, sizes[b.var]),
            _ => unreachable!("validated at parse"),
        }
    }

    pub fn render(&self, loops: &[String]) -> String {
        let mut out = String::new();
        for (n, t) in self.terms.iter().enumerate() {
            if n > 0 {
                out.push('+');
            }
            if t.coeff != 1 {
                let _ = write!(out, "{}*", t.coeff);
            }
            out.push_str(&loops[t.var]);
        }
        if self.offset > 0 || self.terms.is_empty() {
            if !self.terms.is_empty() {
                out.push('+');
            }
            let _ = write!(out, "{}", self.offset);
        }
        out
    }
}

fn distinct_pair(ca: u64, la: u64, cb: u64, lb: u64) -> u64 {
    if la <= 1 || lb <= 1 {
        return la.max(lb).max(1);
    }
    if ca == cb {
        return la + lb - 1;
    }
    // Unit stride term covering the gaps of the other term makes the set contiguous.
    if cb == 1 && ca <= lb {
        return ca * (la - 1) + lb;
    }
    if ca == 1 && cb <= la {
        return cb * (lb - 1) + la;
    }
    let span = (ca * (la - 1) + cb * (lb - 1) + 1) as usize;
    let mut seen = vec![false; span];
    let mut count = 0;
    for x in 0..la {
        for y in 0..lb {
            let v = (ca * x + cb * y) as usize;
            if !seen[v] {
                seen[v] = true;
                count += 1;
            }
        }
    }
    count
}
