//! Likelihood ratios, diagnostic odds ratio, and prevalence-conditional
//! predictive values.
//!
//! Two conventions are supported and every output carries its convention.
//! With `s` = sensitivity, `t` = TN/(TN+FP) and `p` = prevalence:
//!
//! | quantity | [`Convention::PaperLiteral`]       | [`Convention::Standard`]            |
//! |----------|------------------------------------|-------------------------------------|
//! | LR+      | `s / t`                            | `s / (1 − t)`                       |
//! | LR−      | `(1 − s) / (1 − t)`                | `(1 − s) / t`                       |
//! | PPV      | `sp / (sp + (1 − s)(1 − p))`       | `sp / (sp + (1 − t)(1 − p))`        |
//! | NPV      | `t(1 − p) / (t(1 − p) + sp)`       | `t(1 − p) / (t(1 − p) + (1 − s)p)`  |
//!
//! The paper-literal column puts `t` where textbook Bayes has `1 − t`; the
//! standard column is textbook Bayes. Neither is silently corrected into the other.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::confusion::AgreementRates;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[serde(alias = "paper")]
    PaperLiteral,
    Standard,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Convention::PaperLiteral => "paper",
            Convention::Standard => "standard",
        })
    }
}

impl FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" | "paper_literal" => Ok(Convention::PaperLiteral),
            "standard" => Ok(Convention::Standard),
            other => Err(Error::invalid(format!(
                "unknown convention {other:?} (expected paper or standard)"
            ))),
        }
    }
}

/// Nonnegative quotient with explicit flags for `x/0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    /// Positive numerator over a zero denominator.
    Infinite,
    /// `0/0`, `∞/∞`, or an undefined operand.
    Undefined,
}

impl Ratio {
    pub fn of(num: f64, den: f64) -> Ratio {
        if den != 0.0 {
            Ratio::Finite(num / den)
        } else if num != 0.0 {
            Ratio::Infinite
        } else {
            Ratio::Undefined
        }
    }

    /// `self / other` with the same flagging rules.
    pub fn over(self, other: Ratio) -> Ratio {
        match (self, other) {
            (Ratio::Undefined, _) | (_, Ratio::Undefined) => Ratio::Undefined,
            (Ratio::Infinite, Ratio::Infinite) => Ratio::Undefined,
            (Ratio::Infinite, Ratio::Finite(_)) => Ratio::Infinite,
            (Ratio::Finite(_), Ratio::Infinite) => Ratio::Finite(0.0),
            (Ratio::Finite(a), Ratio::Finite(b)) => Ratio::of(a, b),
        }
    }

    /// As a float: `+inf` for [`Ratio::Infinite`], NaN for undefined.
    pub fn value(self) -> f64 {
        match self {
            Ratio::Finite(v) => v,
            Ratio::Infinite => f64::INFINITY,
            Ratio::Undefined => f64::NAN,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Ratio::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        self == Ratio::Infinite
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(v) => f.write_str(&crate::fmt::sig6(*v)),
            Ratio::Infinite => f.write_str("inf"),
            Ratio::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodRatios {
    pub lr_pos: Ratio,
    pub lr_neg: Ratio,
    pub convention: Convention,
}

pub fn likelihood_ratios(r: &AgreementRates, convention: Convention) -> LikelihoodRatios {
    let (lr_pos, lr_neg) = match r.pair() {
        None => (Ratio::Undefined, Ratio::Undefined),
        Some((s, t)) => match convention {
            Convention::PaperLiteral => (Ratio::of(s, t), Ratio::of(1.0 - s, 1.0 - t)),
            Convention::Standard => (Ratio::of(s, 1.0 - t), Ratio::of(1.0 - s, t)),
        },
    };
    LikelihoodRatios {
        lr_pos,
        lr_neg,
        convention,
    }
}

/// LR+ / LR−.
pub fn diagnostic_odds_ratio(lr: &LikelihoodRatios) -> Ratio {
    lr.lr_pos.over(lr.lr_neg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveValues {
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub prevalence: f64,
    pub convention: Convention,
}

fn posterior(num: f64, rest: f64) -> Option<f64> {
    let den = num + rest;
    (den > 0.0).then(|| num / den)
}

pub fn predictive_values(
    r: &AgreementRates,
    prevalence: f64,
    convention: Convention,
) -> Result<PredictiveValues> {
    if !(0.0..=1.0).contains(&prevalence) {
        return Err(Error::invalid(format!(
            "prevalence {prevalence} outside [0, 1]"
        )));
    }
    let p = prevalence;
    let (ppv, npv) = match r.pair() {
        None => (None, None),
        Some((s, t)) => {
            let true_pos = s * p;
            let true_neg = t * (1.0 - p);
            match convention {
                Convention::PaperLiteral => (
                    posterior(true_pos, (1.0 - s) * (1.0 - p)),
                    posterior(true_neg, s * p),
                ),
                Convention::Standard => (
                    posterior(true_pos, (1.0 - t) * (1.0 - p)),
                    posterior(true_neg, (1.0 - s) * p),
                ),
            }
        }
    };
    Ok(PredictiveValues {
        ppv,
        npv,
        prevalence,
        convention,
    })
}

/// Predictive values at every prevalence in `grid`.
pub fn prevalence_sweep(
    r: &AgreementRates,
    grid: &[f64],
    convention: Convention,
) -> Result<Vec<PredictiveValues>> {
    grid.iter()
        .map(|&p| predictive_values(r, p, convention))
        .collect()
}

/// `n` evenly spaced prevalences covering [0, 1] inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}
