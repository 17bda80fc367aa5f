//! Epanechnikov kernel density estimation and the crossing point of two
//! fitted densities.
//!
//! The kernel is the unit-variance form
//! `K(z) = 3/(4√5) · (1 − z²/5)` on `|z| ≤ √5`, and the estimate is
//! `f̂(x) = (1/(N·h)) · Σ K((x − Xᵢ)/h)`. Samples are kept sorted so each
//! evaluation only visits the samples within `√5·h` of `x`.

use serde::Serialize;

use crate::{Error, Result};

/// Half-width of the kernel support, `√5`.
pub const EPANECHNIKOV_RADIUS: f64 = 2.236_067_977_499_79;

/// Points in the sign scan that brackets density crossings.
pub const SCAN_POINTS: usize = 512;

const ROOT_TOLERANCE: f64 = 1e-6;

pub fn epanechnikov(z: f64) -> f64 {
    if z.abs() <= EPANECHNIKOV_RADIUS {
        0.75 / EPANECHNIKOV_RADIUS * (1.0 - z * z / 5.0).max(0.0)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Epanechnikov,
}

/// Type-7 (linear interpolation) quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {bad}")));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

fn silverman_sorted(sorted: &[f64]) -> Result<f64> {
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    // A zero IQR (more than half the samples tied) would zero the bandwidth
    // while the data still has spread; fall back to the standard deviation.
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if spread <= 0.0 {
        return Err(Error::Degenerate(
            "all samples identical; bandwidth would be 0".into(),
        ));
    }
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Silverman's rule of thumb, `0.9 · min(sd, IQR/1.34) · n^(−1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    silverman_sorted(&sorted_finite(samples)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Vec<f64>,
    bandwidth: f64,
    kernel: Kernel,
}

pub fn fit_kde(samples: &[f64], bandwidth: Option<f64>) -> Result<KdeModel> {
    let samples = sorted_finite(samples)?;
    let bandwidth = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
        None => silverman_sorted(&samples)?,
    };
    Ok(KdeModel {
        samples,
        bandwidth,
        kernel: Kernel::Epanechnikov,
    })
}

impl KdeModel {
    /// Samples in ascending order.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let reach = EPANECHNIKOV_RADIUS * h;
        let start = self.samples.partition_point(|&s| s < x - reach);
        let end = self.samples.partition_point(|&s| s <= x + reach);
        let sum: f64 = self.samples[start..end]
            .iter()
            .map(|&s| epanechnikov((x - s) / h))
            .sum();
        sum / (self.n() as f64 * h)
    }

    /// Interval outside which the density is exactly zero.
    pub fn support(&self) -> (f64, f64) {
        let reach = EPANECHNIKOV_RADIUS * self.bandwidth;
        (self.samples[0] - reach, self.samples[self.n() - 1] + reach)
    }

    /// `(x, f̂(x))` at `points` evenly spaced abscissae on `[lo, hi]`.
    pub fn evaluate_grid(&self, lo: f64, hi: f64, points: usize) -> Vec<(f64, f64)> {
        linspace(lo, hi, points)
            .into_iter()
            .map(|x| (x, self.evaluate(x)))
            .collect()
    }
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (points - 1) as f64;
            (0..points)
                .map(|i| if i == points - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub x: f64,
    pub f_pos: f64,
    pub f_neg: f64,
}

impl Crossing {
    /// Joint height used to rank crossings.
    pub fn height(&self) -> f64 {
        0.5 * (self.f_pos + self.f_neg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Intersection {
    /// The selected crossing abscissa.
    pub prevalence: f64,
    pub selected: Crossing,
    /// Every sign change found, in ascending `x`.
    pub crossings: Vec<Crossing>,
}

/// Where `f_pos` and `f_neg` cross inside `search ⊆ [0, 1]`.
///
/// A 512-point scan brackets every sign change of `g = f_pos − f_neg`, each
/// bracket is refined by bisection, and the crossing with the largest joint
/// density is selected. A run of scan points where `g` is exactly zero
/// between opposite signs (typically a gap where both densities vanish)
/// resolves to the midpoint of the run.
pub fn density_intersection(
    f_pos: &KdeModel,
    f_neg: &KdeModel,
    search: (f64, f64),
) -> Result<Intersection> {
    let (lo, hi) = search;
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::invalid(format!(
            "search interval [{lo}, {hi}] must be a nonempty part of [0, 1]"
        )));
    }
    let g = |x: f64| f_pos.evaluate(x) - f_neg.evaluate(x);
    let xs = linspace(lo, hi, SCAN_POINTS);
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();

    let mut roots = Vec::new();
    let mut last: Option<usize> = None;
    for (j, &gj) in gs.iter().enumerate() {
        if gj == 0.0 {
            continue;
        }
        if let Some(i) = last {
            if gs[i].signum() != gj.signum() {
                roots.push(if j == i + 1 {
                    bisect(&g, xs[i], xs[j], gs[i])
                } else {
                    0.5 * (xs[i + 1] + xs[j - 1])
                });
            }
        }
        last = Some(j);
    }

    if roots.is_empty() {
        let any_mass = xs
            .iter()
            .any(|&x| f_pos.evaluate(x) > 0.0 || f_neg.evaluate(x) > 0.0);
        return Err(if last.is_none() && any_mass {
            Error::IdenticalDensities
        } else {
            Error::NoCrossing { lo, hi }
        });
    }

    let crossings: Vec<Crossing> = roots
        .into_iter()
        .map(|x| Crossing {
            x,
            f_pos: f_pos.evaluate(x),
            f_neg: f_neg.evaluate(x),
        })
        .collect();
    let mut selected = crossings[0];
    for c in &crossings[1..] {
        if c.height() > selected.height() {
            selected = *c;
        }
    }
    Ok(Intersection {
        prevalence: selected.x,
        selected,
        crossings,
    })
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    while b - a > ROOT_TOLERANCE * 1e-3 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    use crate::rng::derived_rng;

    /// Composite Simpson on each interval between kernel breakpoints; the
    /// density is a quadratic there, so this is exact up to rounding.
    fn integrate(model: &KdeModel) -> f64 {
        let reach = EPANECHNIKOV_RADIUS * model.bandwidth();
        let mut knots: Vec<f64> = model
            .samples()
            .iter()
            .flat_map(|&s| [s - reach, s + reach])
            .collect();
        knots.sort_by(f64::total_cmp);
        knots
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                (b - a) / 6.0
                    * (model.evaluate(a) + 4.0 * model.evaluate(0.5 * (a + b)) + model.evaluate(b))
            })
            .sum()
    }

    #[test]
    fn kernel_values() {
        assert_abs_diff_eq!(epanechnikov(0.0), 0.335_410, epsilon = 1e-6);
        assert_eq!(epanechnikov(EPANECHNIKOV_RADIUS + 1e-12), 0.0);
        assert_abs_diff_eq!(epanechnikov(EPANECHNIKOV_RADIUS), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(EPANECHNIKOV_RADIUS, 5f64.sqrt(), epsilon = 1e-15);
        // Antiderivative of the kernel: c(z - z^3/15) with c = 3/(4√5).
        let c = 0.75 / 5f64.sqrt();
        let r = 5f64.sqrt();
        assert_abs_diff_eq!(2.0 * c * (r - r.powi(3) / 15.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hand_evaluated_density() {
        let m = fit_kde(&[0.0, 1.0], Some(1.0 / 5f64.sqrt())).unwrap();
        let expected = 0.5 * 5f64.sqrt() * (epanechnikov(0.0) + epanechnikov(5f64.sqrt()));
        assert_abs_diff_eq!(m.evaluate(0.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(m.evaluate(0.0), 0.375, epsilon = 1e-12);
    }

    #[test]
    fn silverman_reference() {
        // sd = 0.1, IQR = 0.1, so the IQR term wins.
        let h = silverman_bandwidth(&[0.6, 0.7, 0.8]).unwrap();
        assert_abs_diff_eq!(h, 0.9 * (0.1 / 1.34) * 3f64.powf(-0.2), epsilon = 1e-12);
        // Tied middle: IQR = 0, sd is used.
        let v = [0.0, 0.5, 0.5, 0.5, 0.5, 1.0];
        let sd = (0.5f64 / 5.0).sqrt();
        assert_abs_diff_eq!(silverman_bandwidth(&v).unwrap(), 0.9 * sd * 6f64.powf(-0.2), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(fit_kde(&[0.3, 0.3, 0.3], None), Err(Error::Degenerate(_))));
        assert!(fit_kde(&[0.3, 0.3, 0.3], Some(0.1)).is_ok());
        assert!(fit_kde(&[0.3], Some(0.1)).is_err());
        assert!(fit_kde(&[0.3, f64::NAN], Some(0.1)).is_err());
        assert!(fit_kde(&[0.3, 0.4], Some(0.0)).is_err());
    }

    #[test]
    fn mirrored_sets_cross_at_half() {
        let pos = fit_kde(&[0.6, 0.7, 0.8], None).unwrap();
        let neg = fit_kde(&[0.2, 0.3, 0.4], None).unwrap();
        let hit = density_intersection(&pos, &neg, (0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(hit.prevalence, 0.5, epsilon = 1e-6);
        assert_eq!(hit.crossings.len(), 1);
        let swapped = density_intersection(&neg, &pos, (0.0, 1.0)).unwrap();
        assert_eq!(swapped.prevalence, hit.prevalence);
    }

    #[test]
    fn identical_sets_have_no_isolated_root() {
        let a = fit_kde(&[0.2, 0.4, 0.5], None).unwrap();
        assert!(matches!(
            density_intersection(&a, &a.clone(), (0.0, 1.0)),
            Err(Error::IdenticalDensities)
        ));
    }

    #[test]
    fn disjoint_without_sign_change() {
        let a = fit_kde(&[0.1, 0.2], Some(0.01)).unwrap();
        let b = fit_kde(&[0.8, 0.9], Some(0.01)).unwrap();
        assert!(matches!(
            density_intersection(&a, &b, (0.0, 0.5)),
            Err(Error::NoCrossing { .. })
        ));
        // Over the full interval the zero gap between them counts as the crossing.
        let hit = density_intersection(&a, &b, (0.0, 1.0)).unwrap();
        let lo = 0.2 + EPANECHNIKOV_RADIUS * 0.01;
        let hi = 0.8 - EPANECHNIKOV_RADIUS * 0.01;
        assert!(hit.prevalence > lo && hit.prevalence < hi);
        assert_abs_diff_eq!(hit.prevalence, 0.5, epsilon = 2.0 / SCAN_POINTS as f64);
    }

    #[test]
    fn jointly_maximal_crossing_is_selected() {
        // neg is bimodal with a tall right mode; pos sits in between, giving
        // two crossings of unequal height.
        let neg = fit_kde(&[0.1, 0.8, 0.8, 0.8, 0.8], Some(0.15)).unwrap();
        let pos = fit_kde(&[0.45, 0.5, 0.55], Some(0.15)).unwrap();
        let hit = density_intersection(&pos, &neg, (0.0, 1.0)).unwrap();
        assert!(hit.crossings.len() >= 2);
        let best = hit
            .crossings
            .iter()
            .map(|c| c.height())
            .fold(f64::MIN, f64::max);
        assert_eq!(hit.selected.height(), best);
    }

    #[test]
    fn planted_normals() {
        // N(0.35, 0.1²) vs N(0.6, 0.15²): analytic crossing of the two pdfs
        // between the means, from the quadratic in x.
        let (m1, s1, m2, s2) = (0.35f64, 0.1f64, 0.6f64, 0.15f64);
        let a = 1.0 / (2.0 * s1 * s1) - 1.0 / (2.0 * s2 * s2);
        let b = m2 / (s2 * s2) - m1 / (s1 * s1);
        let c = m1 * m1 / (2.0 * s1 * s1) - m2 * m2 / (2.0 * s2 * s2) - (s2 / s1).ln();
        let disc = (b * b - 4.0 * a * c).sqrt();
        let analytic = [(-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a)]
            .into_iter()
            .find(|x| (m1..m2).contains(x))
            .unwrap();

        let draw = |m: f64, s: f64, label: &str| -> Vec<f64> {
            let mut rng = derived_rng(11, label);
            let d = Normal::new(m, s).unwrap();
            (0..200_000).map(|_| d.sample(&mut rng)).collect()
        };
        let neg = fit_kde(&draw(m1, s1, "neg"), None).unwrap();
        let pos = fit_kde(&draw(m2, s2, "pos"), None).unwrap();
        let hit = density_intersection(&pos, &neg, (m1, m2)).unwrap();
        assert_abs_diff_eq!(hit.prevalence, analytic, epsilon = 1e-3);
    }

    #[test]
    fn beats_rectangular_kernel_on_normal_draws() {
        let mut rng = derived_rng(2024, "efficiency");
        let xs: Vec<f64> = (0..1000).map(|_| rng.sample(StandardNormal)).collect();
        let model = fit_kde(&xs, None).unwrap();
        let h = model.bandwidth();
        // Unit-variance rectangle, support ±√3.
        let r3 = 3f64.sqrt();
        let rect = |x: f64| {
            xs.iter().filter(|&&s| ((x - s) / h).abs() <= r3).count() as f64
                / (2.0 * r3 * xs.len() as f64 * h)
        };
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let grid = linspace(-6.0, 6.0, 12_001);
        let dx = grid[1] - grid[0];
        let ise = |f: &dyn Fn(f64) -> f64| grid.iter().map(|&x| (f(x) - phi(x)).powi(2) * dx).sum::<f64>();
        let epa = ise(&|x| model.evaluate(x));
        let rec = ise(&rect);
        assert!(epa < rec, "epanechnikov ISE {epa} vs rectangular {rec}");
    }

    #[test]
    fn grid_evaluation_endpoints() {
        let m = fit_kde(&[0.2, 0.4], Some(0.1)).unwrap();
        let g = m.evaluate_grid(0.0, 1.0, SCAN_POINTS);
        assert_eq!(g.len(), SCAN_POINTS);
        assert_eq!(g[0].0, 0.0);
        assert_eq!(g[SCAN_POINTS - 1].0, 1.0);
        let (lo, hi) = m.support();
        assert_eq!(m.evaluate(lo - 1e-9), 0.0);
        assert_eq!(m.evaluate(hi + 1e-9), 0.0);
    }

    proptest! {
        #[test]
        fn normalized_and_nonnegative(
            samples in proptest::collection::vec(-3.0f64..3.0, 2..60),
            h in proptest::option::of(0.01f64..1.0),
        ) {
            if let Ok(m) = fit_kde(&samples, h) {
                prop_assert!((integrate(&m) - 1.0).abs() < 1e-6);
                for x in linspace(m.support().0, m.support().1, 97) {
                    prop_assert!(m.evaluate(x) >= 0.0);
                }
            }
        }

        #[test]
        fn translation_equivariant(
            samples in proptest::collection::vec(0.0f64..1.0, 2..30),
            shift in -5.0f64..5.0,
            x in -1.0f64..2.0,
        ) {
            let a = fit_kde(&samples, Some(0.2)).unwrap();
            let moved: Vec<f64> = samples.iter().map(|s| s + shift).collect();
            let b = fit_kde(&moved, Some(0.2)).unwrap();
            prop_assert!((a.evaluate(x) - b.evaluate(x + shift)).abs() < 1e-9);
        }

        #[test]
        fn crossing_symmetric_under_swap(
            p in proptest::collection::vec(0.3f64..1.0, 2..20),
            n in proptest::collection::vec(0.0f64..0.7, 2..20),
        ) {
            let (Ok(fp), Ok(fn_)) = (fit_kde(&p, Some(0.1)), fit_kde(&n, Some(0.1))) else {
                return Ok(());
            };
            let a = density_intersection(&fp, &fn_, (0.0, 1.0));
            let b = density_intersection(&fn_, &fp, (0.0, 1.0));
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert_eq!(a.prevalence, b.prevalence),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "asymmetric outcome"),
            }
        }
    }
}
