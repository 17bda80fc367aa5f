//! Two-by-two agreement between a simulated and an observed transition map.
//!
//! Rows are the simulated class, columns the observed class:
//!
//! ```text
//!                 observed 0   observed 1
//! simulated 0        TN           FN        SN
//! simulated 1        FP           TP        SP
//!                    RN           RP        GT
//! ```
//!
//! `TN / (TN + FP)` is stored once, as [`AgreementRates::tn_rate`]. Some
//! literature labels it "1 − specificity", the usual convention labels it
//! specificity; both names are exposed as accessors and every formula in this
//! crate is written against the cell counts so the label never matters.

use crate::raster::{BinaryGrid, Cell};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    /// Simulated positives, SP.
    pub fn sim_pos(&self) -> u64 {
        self.tp + self.fp
    }

    /// Simulated negatives, SN.
    pub fn sim_neg(&self) -> u64 {
        self.tn + self.fn_
    }

    /// Real (observed) positives, RP.
    pub fn real_pos(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Real (observed) negatives, RN.
    pub fn real_neg(&self) -> u64 {
        self.tn + self.fp
    }

    /// Grand total, GT.
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Swaps the roles of the two maps.
    pub fn transpose(&self) -> Self {
        ConfusionMatrix::new(self.tp, self.fn_, self.fp, self.tn)
    }
}

/// Counts cells classified in both grids.
pub fn build_confusion(sim: &BinaryGrid, obs: &BinaryGrid) -> Result<ConfusionMatrix> {
    if sim.shape() != obs.shape() {
        return Err(Error::ShapeMismatch {
            expected: sim.shape(),
            found: obs.shape(),
        });
    }
    let mut m = ConfusionMatrix::default();
    for (s, o) in sim.cells().iter().zip(obs.cells()) {
        match (s, o) {
            (Cell::One, Cell::One) => m.tp += 1,
            (Cell::One, Cell::Zero) => m.fp += 1,
            (Cell::Zero, Cell::One) => m.fn_ += 1,
            (Cell::Zero, Cell::Zero) => m.tn += 1,
            _ => {}
        }
    }
    if m.total() == 0 {
        return Err(Error::NoJointCells);
    }
    Ok(m)
}

/// Rates derived from a confusion matrix. `None` marks a rate whose
/// denominator is zero; it is never coerced to 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgreementRates {
    /// TP / (TP + FN).
    pub sensitivity: Option<f64>,
    /// TN / (TN + FP).
    pub tn_rate: Option<f64>,
    /// RP / GT.
    pub prevalence_observed: Option<f64>,
    /// Percent correct, (TP + TN) / GT.
    pub pcm: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl AgreementRates {
    /// Rates supplied directly, without a backing matrix.
    pub fn from_rates(sensitivity: f64, tn_rate: f64) -> Self {
        AgreementRates {
            sensitivity: Some(sensitivity),
            tn_rate: Some(tn_rate),
            prevalence_observed: None,
            pcm: None,
        }
    }

    /// Standard naming: specificity = TN / (TN + FP).
    pub fn specificity_std(&self) -> Option<f64> {
        self.tn_rate
    }

    /// The same quantity under the inverted naming, where TN / (TN + FP) is
    /// called "1 − specificity".
    pub fn one_minus_specificity_paper(&self) -> Option<f64> {
        self.tn_rate
    }

    /// Both rates, when both are defined.
    pub fn pair(&self) -> Option<(f64, f64)> {
        Some((self.sensitivity?, self.tn_rate?))
    }
}

pub fn agreement_rates(m: &ConfusionMatrix) -> AgreementRates {
    AgreementRates {
        sensitivity: ratio(m.tp, m.real_pos()),
        tn_rate: ratio(m.tn, m.real_neg()),
        prevalence_observed: ratio(m.real_pos(), m.total()),
        pcm: ratio(m.tp + m.tn, m.total()),
    }
}

/// `|sensitivity − tn_rate|`: zero exactly when the map agrees equally well
/// on presence and on absence.
pub fn perfect_agreement_gap(r: &AgreementRates) -> Option<f64> {
    let (sens, tn_rate) = r.pair()?;
    Some((sens - tn_rate).abs())
}

/// Rates of a classifier no better than a coin toss.
pub const COIN_TOSS_RATE: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(bits: &[i8]) -> BinaryGrid {
        BinaryGrid::from_bits(2, 2, bits).unwrap()
    }

    #[test]
    fn one_of_each() {
        let m = build_confusion(&grid(&[1, 0, 1, 0]), &grid(&[1, 1, 0, 0])).unwrap();
        assert_eq!(m, ConfusionMatrix::new(1, 1, 1, 1));
        assert_eq!((m.sim_pos(), m.sim_neg(), m.real_pos(), m.real_neg()), (2, 2, 2, 2));
    }

    #[test]
    fn identity_and_total_disagreement() {
        let g = grid(&[1, 1, 1, 0]);
        assert_eq!(build_confusion(&g, &g).unwrap(), ConfusionMatrix::new(3, 0, 0, 1));
        let m = build_confusion(&grid(&[1, 1, 1, 1]), &grid(&[0, 0, 0, 0])).unwrap();
        assert_eq!(m, ConfusionMatrix::new(0, 4, 0, 0));
    }

    #[test]
    fn exclusion_in_either_grid_drops_the_cell() {
        let m = build_confusion(&grid(&[1, -1, 0, 0]), &grid(&[-1, 1, 0, 1])).unwrap();
        assert_eq!(m, ConfusionMatrix::new(0, 0, 1, 1));
        let none = build_confusion(&grid(&[-1, -1, 0, 1]), &grid(&[0, 1, -1, -1]));
        assert!(matches!(none, Err(Error::NoJointCells)));
        let other = BinaryGrid::from_bits(1, 4, &[0; 4]).unwrap();
        assert!(matches!(
            build_confusion(&grid(&[0; 4]), &other),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rates() {
        let r = agreement_rates(&ConfusionMatrix::new(1, 0, 1, 0));
        assert_eq!(r.sensitivity, Some(0.5));
        assert_eq!(r.tn_rate, None);

        let r = agreement_rates(&ConfusionMatrix::new(0, 1, 0, 9));
        assert_eq!(r.tn_rate, Some(0.9));
        assert_eq!(r.sensitivity, None);

        let r = agreement_rates(&ConfusionMatrix::new(1, 1, 1, 1));
        assert_eq!(r.prevalence_observed, Some(0.5));
        assert_eq!(r.pcm, Some(0.5));
        assert_eq!(r.specificity_std(), r.one_minus_specificity_paper());
    }

    #[test]
    fn gap() {
        let g = |s, t| perfect_agreement_gap(&AgreementRates::from_rates(s, t)).unwrap();
        assert_eq!(g(0.8, 0.8), 0.0);
        assert!((g(0.9, 0.6) - 0.3).abs() < 1e-12);
        assert_eq!(g(COIN_TOSS_RATE, COIN_TOSS_RATE), 0.0);
        assert_eq!(perfect_agreement_gap(&AgreementRates::default()), None);
    }

    fn bits_strategy() -> impl Strategy<Value = (Vec<i8>, Vec<i8>)> {
        (1usize..80).prop_flat_map(|n| {
            (
                proptest::collection::vec(-1i8..=1, n),
                proptest::collection::vec(-1i8..=1, n),
            )
        })
    }

    proptest! {
        #[test]
        fn swap_transposes((a, b) in bits_strategy()) {
            let n = a.len();
            let sim = BinaryGrid::from_bits(1, n, &a).unwrap();
            let obs = BinaryGrid::from_bits(1, n, &b).unwrap();
            if let Ok(m) = build_confusion(&sim, &obs) {
                prop_assert_eq!(build_confusion(&obs, &sim).unwrap(), m.transpose());
            }
        }

        #[test]
        fn relabel_swaps_rates((a, b) in bits_strategy()) {
            let n = a.len();
            let flip = |v: &[i8]| v.iter().map(|&x| if x < 0 { x } else { 1 - x }).collect::<Vec<_>>();
            let sim = BinaryGrid::from_bits(1, n, &a).unwrap();
            let obs = BinaryGrid::from_bits(1, n, &b).unwrap();
            let sim_f = BinaryGrid::from_bits(1, n, &flip(&a)).unwrap();
            let obs_f = BinaryGrid::from_bits(1, n, &flip(&b)).unwrap();
            if let Ok(m) = build_confusion(&sim, &obs) {
                let r = agreement_rates(&m);
                let rf = agreement_rates(&build_confusion(&sim_f, &obs_f).unwrap());
                prop_assert_eq!(r.sensitivity, rf.tn_rate);
                prop_assert_eq!(r.tn_rate, rf.sensitivity);
            }
        }
    }
}
