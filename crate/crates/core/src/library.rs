//! Candidate-function library `Θ(X)`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::state_names;
use crate::error::{Error, Result};
use crate::signal::{CandidateFrequencies, MeasurementSet};

/// Describes one library column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Constant,
    /// Product of states; `(state index, exponent)` pairs with ascending indices.
    Monomial { factors: Vec<(usize, u32)> },
    ForcedSin { freq_hz: f64 },
    ForcedCos { freq_hz: f64 },
}

impl Term {
    pub fn degree(&self) -> u32 {
        match self {
            Term::Monomial { factors } => factors.iter().map(|f| f.1).sum(),
            _ => 0,
        }
    }

    /// Evaluates the term for one row of `X` at absolute time `t`.
    pub fn evaluate(&self, state: &[f64], t: f64) -> f64 {
        match self {
            Term::Constant => 1.0,
            Term::Monomial { factors } => factors
                .iter()
                .map(|&(i, e)| state[i].powi(e as i32))
                .product(),
            Term::ForcedSin { freq_hz } => (2.0 * PI * freq_hz * t).sin(),
            Term::ForcedCos { freq_hz } => (2.0 * PI * freq_hz * t).cos(),
        }
    }

    /// Human-readable name given the state names.
    pub fn label(&self, names: &[String]) -> String {
        match self {
            Term::Constant => "1".into(),
            Term::Monomial { factors } => factors
                .iter()
                .map(|&(i, e)| {
                    if e == 1 {
                        names[i].clone()
                    } else {
                        format!("{}^{e}", names[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("*"),
            Term::ForcedSin { freq_hz } => format!("sin({freq_hz:.2}Hz)"),
            Term::ForcedCos { freq_hz } => format!("cos({freq_hz:.2}Hz)"),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Constant => write!(f, "1"),
            Term::Monomial { factors } => {
                let parts: Vec<String> = factors
                    .iter()
                    .map(|&(i, e)| if e == 1 { format!("x{i}") } else { format!("x{i}^{e}") })
                    .collect();
                write!(f, "{}", parts.join("*"))
            }
            Term::ForcedSin { freq_hz } => write!(f, "sin({freq_hz}Hz)"),
            Term::ForcedCos { freq_hz } => write!(f, "cos({freq_hz}Hz)"),
        }
    }
}

/// `Θ(X)` with its symbol table.
#[derive(Debug, Clone)]
pub struct FeatureLibrary {
    pub theta: DMatrix<f64>,
    pub terms: Vec<Term>,
    pub freqs: CandidateFrequencies,
    pub state_names: Vec<String>,
    pub degree: u32,
}

impl FeatureLibrary {
    pub fn n_features(&self) -> usize {
        self.terms.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.label(&self.state_names)).collect()
    }

    /// Library dump with descriptor-named headers.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        crate::io::write_matrix_csv(path, &self.labels(), None, &self.theta)
    }
}

/// Monomials over `n_vars` variables in graded lexicographic order,
/// degrees `1..=degree`.
pub fn monomials(n_vars: usize, degree: u32) -> Vec<Term> {
    fn rec(start: usize, n: usize, left: u32, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut terms = Vec::new();
    for d in 1..=degree {
        let mut combos = Vec::new();
        rec(0, n_vars, d, &mut Vec::new(), &mut combos);
        for combo in combos {
            let mut factors: Vec<(usize, u32)> = Vec::new();
            for i in combo {
                match factors.last_mut() {
                    Some(last) if last.0 == i => last.1 += 1,
                    _ => factors.push((i, 1)),
                }
            }
            terms.push(Term::Monomial { factors });
        }
    }
    terms
}

/// Builds `Θ(X)`: constant, state monomials up to `degree`, then a sin/cos pair
/// per candidate frequency in ascending order, evaluated at `t = t0 + k·dt`.
pub fn build_library(
    ms: &MeasurementSet,
    cands: &CandidateFrequencies,
    degree: u32,
) -> Result<FeatureLibrary> {
    if degree == 0 && cands.is_empty() {
        return Err(Error::DegenerateLibrary(
            "degree 0 with no candidate frequencies leaves only the constant".into(),
        ));
    }
    let n_vars = ms.x.ncols();
    let mut freqs = cands.freqs.clone();
    freqs.sort_by(f64::total_cmp);

    let mut terms = vec![Term::Constant];
    terms.extend(monomials(n_vars, degree));
    for &f in &freqs {
        terms.push(Term::ForcedSin { freq_hz: f });
        terms.push(Term::ForcedCos { freq_hz: f });
    }

    let m = ms.n_samples();
    let p = terms.len();
    if m < p {
        log::warn!("library has {p} columns but only {m} samples");
    }
    let mut theta = DMatrix::zeros(m, p);
    let mut row = vec![0.0; n_vars];
    for k in 0..m {
        for (c, v) in row.iter_mut().enumerate() {
            *v = ms.x[(k, c)];
        }
        let t = ms.time(k);
        for (j, term) in terms.iter().enumerate() {
            theta[(k, j)] = term.evaluate(&row, t);
        }
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("library contains non-finite entries".into()));
    }

    Ok(FeatureLibrary {
        theta,
        terms,
        freqs: cands.clone(),
        state_names: state_names(n_vars / 2),
        degree,
    })
}

/// Column of the exactly matching descriptor, if present.
pub fn column_index(lib: &FeatureLibrary, term: &Term) -> Option<usize> {
    lib.terms.iter().position(|t| t == term)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(r: usize, m: usize) -> MeasurementSet {
        let x = DMatrix::from_fn(m, 2 * r, |k, c| ((k + 1) as f64 * 0.37 + c as f64).sin());
        MeasurementSet {
            xdot: x.clone(),
            x,
            dt: 0.01,
            t0: 0.0,
        }
    }

    #[test]
    fn linear_library_single_turbine() {
        let lib = build_library(&ms(1, 10), &CandidateFrequencies::default(), 1).unwrap();
        assert_eq!(lib.n_features(), 3);
        assert_eq!(lib.labels(), vec!["1", "delta_1", "omega_1"]);
    }

    #[test]
    fn degenerate_library_rejected() {
        assert!(matches!(
            build_library(&ms(1, 10), &CandidateFrequencies::default(), 0),
            Err(Error::DegenerateLibrary(_))
        ));
    }

    #[test]
    fn quadratic_ordering() {
        let t = monomials(2, 2);
        let expect = vec![
            vec![(0, 1)],
            vec![(1, 1)],
            vec![(0, 2)],
            vec![(0, 1), (1, 1)],
            vec![(1, 2)],
        ];
        let got: Vec<_> = t
            .into_iter()
            .map(|t| match t {
                Term::Monomial { factors } => factors,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn missing_term_is_none() {
        let cands = CandidateFrequencies::from_freqs(&[0.71]);
        let lib = build_library(&ms(1, 10), &cands, 1).unwrap();
        assert_eq!(column_index(&lib, &Term::Constant), Some(0));
        assert_eq!(column_index(&lib, &Term::ForcedSin { freq_hz: 0.99 }), None);
    }
}
