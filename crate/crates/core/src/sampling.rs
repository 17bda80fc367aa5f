//! Regional sampling: tile a study area into equal-area boxes, score each box
//! by the ratio of urban change to exclusionary area, sort the boxes into
//! three nested pools, and draw one box per change quantile.
//!
//! Draws use [`crate::rng::derived_rng`] with the pool letter as the label,
//! so each pool gets its own reseeded ChaCha8 stream.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{BinaryGrid, Cell};
use crate::rng::derived_rng;
use crate::{Error, Result};

pub const DEFAULT_QUANTILES: usize = 30;

/// Sampling pool / simulation group label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
    C,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::A, Group::B, Group::C];

    /// Smallest sampling index admitted to the pool.
    pub fn min_index(self) -> f64 {
        match self {
            Group::A => 0.0,
            Group::B => 0.5,
            Group::C => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::A => "A",
            Group::B => "B",
            Group::C => "C",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Group::A),
            "B" | "b" => Ok(Group::B),
            "C" | "c" => Ok(Group::C),
            other => Err(Error::UnknownGroup(other.to_string())),
        }
    }
}

/// One equal-area tile of the study region.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBox {
    pub box_id: usize,
    pub rows: Range<usize>,
    pub cols: Range<usize>,
    /// Fraction of the tile's cells that changed to urban.
    pub pct_urban_change: f64,
    /// Fraction of the tile's cells in the exclusionary zone.
    pub pct_exclusionary: f64,
    /// Change-to-exclusion ratio; may be `+inf`.
    pub index: f64,
}

/// Ratio of change fraction to exclusion fraction.
///
/// Zero exclusion gives `+inf` when any change exists and `0` otherwise.
pub fn sampling_index(pct_urban_change: f64, pct_exclusionary: f64) -> f64 {
    if pct_exclusionary > 0.0 {
        pct_urban_change / pct_exclusionary
    } else if pct_urban_change > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Splits the region into `box_side`×`box_side` tiles, dropping partial
/// tiles on the bottom and right edges. Box ids are row-major tile indices.
///
/// A cell counts as change when it is `One` in `urban_change`. It counts as
/// exclusionary when it is `One` or `Excluded` in `exclusion` (nodata in the
/// exclusion layer is treated as unsuitable land).
pub fn tile_region(
    urban_change: &BinaryGrid,
    exclusion: &BinaryGrid,
    box_side: usize,
) -> Result<Vec<SampleBox>> {
    if urban_change.shape() != exclusion.shape() {
        return Err(Error::ShapeMismatch {
            expected: urban_change.shape(),
            found: exclusion.shape(),
        });
    }
    let (rows, cols) = urban_change.shape();
    if box_side == 0 || box_side > rows || box_side > cols {
        return Err(Error::invalid(format!(
            "box side {box_side} does not fit a {rows}x{cols} region"
        )));
    }
    let tiles_down = rows / box_side;
    let tiles_across = cols / box_side;
    let area = (box_side * box_side) as f64;
    let mut boxes = Vec::with_capacity(tiles_down * tiles_across);
    for tr in 0..tiles_down {
        for tc in 0..tiles_across {
            let row_range = tr * box_side..(tr + 1) * box_side;
            let col_range = tc * box_side..(tc + 1) * box_side;
            let (mut change, mut excl) = (0usize, 0usize);
            for r in row_range.clone() {
                for c in col_range.clone() {
                    if urban_change.get(r, c) == Cell::One {
                        change += 1;
                    }
                    if exclusion.get(r, c) != Cell::Zero {
                        excl += 1;
                    }
                }
            }
            let pct_urban_change = change as f64 / area;
            let pct_exclusionary = excl as f64 / area;
            boxes.push(SampleBox {
                box_id: tr * tiles_across + tc,
                rows: row_range,
                cols: col_range,
                pct_urban_change,
                pct_exclusionary,
                index: sampling_index(pct_urban_change, pct_exclusionary),
            });
        }
    }
    Ok(boxes)
}

/// Pool membership of one box. Nested: `c` implies `b` implies `a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PoolSet {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

impl PoolSet {
    pub fn from_index(index: f64) -> Self {
        PoolSet {
            a: index >= Group::A.min_index(),
            b: index >= Group::B.min_index(),
            c: index >= Group::C.min_index(),
        }
    }

    pub fn contains(&self, group: Group) -> bool {
        match group {
            Group::A => self.a,
            Group::B => self.b,
            Group::C => self.c,
        }
    }

    /// Letters of the member pools, e.g. `"AB"`.
    pub fn label(&self) -> String {
        Group::ALL
            .iter()
            .filter(|g| self.contains(**g))
            .map(|g| g.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolAssignment {
    pub box_id: usize,
    pub member_of: PoolSet,
}

pub fn classify_pools(boxes: &[SampleBox]) -> Vec<PoolAssignment> {
    boxes
        .iter()
        .map(|b| PoolAssignment {
            box_id: b.box_id,
            member_of: PoolSet::from_index(b.index),
        })
        .collect()
}

/// Boxes admitted to `group`'s pool, in input order.
pub fn pool_members(boxes: &[SampleBox], group: Group) -> Vec<SampleBox> {
    boxes
        .iter()
        .filter(|b| PoolSet::from_index(b.index).contains(group))
        .cloned()
        .collect()
}

/// Contiguous bins over `n` ranked items; sizes differ by at most one and
/// the larger bins come first.
pub fn quantile_bins(n: usize, n_quantiles: usize) -> Vec<Range<usize>> {
    if n_quantiles == 0 {
        return Vec::new();
    }
    let base = n / n_quantiles;
    let extra = n % n_quantiles;
    let mut start = 0;
    (0..n_quantiles)
        .map(|q| {
            let len = base + usize::from(q < extra);
            let bin = start..start + len;
            start += len;
            bin
        })
        .collect()
}

/// Ranks `pool` by ascending change fraction (ties by box id), splits it
/// into `n_quantiles` bins, and draws one box uniformly from each bin.
///
/// The generator is freshly derived from `(seed, label)` for every call.
pub fn draw_quantile_sample(
    pool: &[SampleBox],
    n_quantiles: usize,
    seed: u64,
    label: &str,
) -> Result<Vec<SampleBox>> {
    if n_quantiles == 0 {
        return Err(Error::invalid("n_quantiles must be positive"));
    }
    if pool.len() < n_quantiles {
        return Err(Error::invalid(format!(
            "pool {label} has {} boxes, fewer than {n_quantiles} quantiles",
            pool.len()
        )));
    }
    let mut ranked: Vec<&SampleBox> = pool.iter().collect();
    ranked.sort_by(|a, b| {
        a.pct_urban_change
            .total_cmp(&b.pct_urban_change)
            .then(a.box_id.cmp(&b.box_id))
    });
    let mut rng = derived_rng(seed, label);
    Ok(quantile_bins(ranked.len(), n_quantiles)
        .into_iter()
        .map(|bin| ranked[rng.random_range(bin)].clone())
        .collect())
}

/// Draws every pool with its own `(seed, letter)` stream.
pub fn draw_pools(
    boxes: &[SampleBox],
    n_quantiles: usize,
    seed: u64,
) -> Result<Vec<(Group, Vec<SampleBox>)>> {
    Group::ALL
        .iter()
        .map(|&g| {
            let pool = pool_members(boxes, g);
            draw_quantile_sample(&pool, n_quantiles, seed, g.as_str()).map(|d| (g, d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_box(box_id: usize, pct_urban_change: f64) -> SampleBox {
        SampleBox {
            box_id,
            rows: 0..1,
            cols: 0..1,
            pct_urban_change,
            pct_exclusionary: 0.1,
            index: sampling_index(pct_urban_change, 0.1),
        }
    }

    #[test]
    fn four_tiles_from_four_by_four() {
        let zeros = BinaryGrid::from_bits(4, 4, &[0; 16]).unwrap();
        let boxes = tile_region(&zeros, &zeros, 2).unwrap();
        assert_eq!(boxes.len(), 4);
        assert_eq!(boxes[3].rows, 2..4);
        assert_eq!(boxes[3].cols, 2..4);
        assert!(tile_region(&zeros, &zeros, 5).is_err());
        assert!(tile_region(&zeros, &zeros, 0).is_err());
    }

    #[test]
    fn partial_edge_tiles_are_dropped() {
        let zeros = BinaryGrid::from_bits(5, 7, &[0; 35]).unwrap();
        assert_eq!(tile_region(&zeros, &zeros, 2).unwrap().len(), 2 * 3);
    }

    #[test]
    fn index_from_tile_counts() {
        let change = BinaryGrid::from_bits(2, 2, &[1, 1, 0, 0]).unwrap();
        let excl = BinaryGrid::from_bits(2, 2, &[0, 0, 1, 0]).unwrap();
        let b = &tile_region(&change, &excl, 2).unwrap()[0];
        assert_eq!(b.pct_urban_change, 0.5);
        assert_eq!(b.pct_exclusionary, 0.25);
        assert_eq!(b.index, 2.0);
    }

    #[test]
    fn zero_exclusion_limits() {
        assert_eq!(sampling_index(0.3, 0.0), f64::INFINITY);
        assert_eq!(sampling_index(0.0, 0.0), 0.0);
        assert_eq!(PoolSet::from_index(f64::INFINITY).label(), "ABC");
        assert_eq!(PoolSet::from_index(0.0).label(), "A");
    }

    #[test]
    fn pool_thresholds() {
        assert_eq!(PoolSet::from_index(0.3).label(), "A");
        assert_eq!(PoolSet::from_index(0.7).label(), "AB");
        assert_eq!(PoolSet::from_index(1.0).label(), "ABC");
        assert_eq!(PoolSet::from_index(0.5).label(), "AB");
    }

    #[test]
    fn bins_for_61_items() {
        let bins = quantile_bins(61, 30);
        let sizes: Vec<usize> = bins.iter().map(|b| b.len()).collect();
        assert_eq!(sizes[0], 3);
        assert!(sizes[1..].iter().all(|&s| s == 2));
        assert_eq!(sizes.iter().sum::<usize>(), 61);
        assert_eq!(bins.last().unwrap().end, 61);
    }

    #[test]
    fn full_pool_is_returned_whole() {
        let pool: Vec<_> = (0..30).map(|i| sample_box(i, i as f64 / 100.0)).collect();
        let drawn = draw_quantile_sample(&pool, 30, 1, "A").unwrap();
        let ids: Vec<usize> = drawn.iter().map(|b| b.box_id).collect();
        assert_eq!(ids, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn draws_are_reproducible() {
        let pool: Vec<_> = (0..60).map(|i| sample_box(i, (i * 7 % 60) as f64)).collect();
        let a = draw_quantile_sample(&pool, 30, 7, "A").unwrap();
        let b = draw_quantile_sample(&pool, 30, 7, "A").unwrap();
        assert_eq!(a, b);
        assert!(draw_quantile_sample(&pool[..29], 30, 7, "A").is_err());
    }

    #[test]
    fn ties_rank_by_box_id() {
        // Equal change everywhere: with one box per bin the draw is forced,
        // so output order reveals the ranking.
        let pool: Vec<_> = [5, 3, 9, 1].iter().map(|&i| sample_box(i, 0.2)).collect();
        let drawn = draw_quantile_sample(&pool, 4, 0, "B").unwrap();
        let ids: Vec<usize> = drawn.iter().map(|b| b.box_id).collect();
        assert_eq!(ids, vec![1, 3, 5, 9]);
    }

    #[test]
    fn group_labels_parse() {
        assert_eq!("C".parse::<Group>().unwrap(), Group::C);
        assert!(matches!("D".parse::<Group>(), Err(Error::UnknownGroup(_))));
    }
}
