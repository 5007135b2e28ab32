//! Attention heatmaps and salient-region extraction.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CreativeError;

/// A per-creative attention grid, weights row-major and max-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeatmap {
    pub creative_id: String,
    pub width: usize,
    pub height: usize,
    pub weights: Vec<f64>,
}

impl AttentionHeatmap {
    /// Checks the shape and scales weights so the maximum is 1.
    pub fn normalized(self) -> Result<Self, CreativeError> {
        let AttentionHeatmap {
            creative_id,
            width,
            height,
            weights,
        } = self;
        if width == 0 || height == 0 || weights.len() != width * height {
            return Err(CreativeError::ShapeMismatch {
                width,
                height,
                len: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(CreativeError::InvalidWeight(i));
        }
        let max = weights.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(CreativeError::AllZero);
        }
        let weights = weights.into_iter().map(|w| w / max).collect();
        Ok(AttentionHeatmap {
            creative_id,
            width,
            height,
            weights,
        })
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.width + x]
    }
}

pub fn parse_heatmap(json: &str) -> Result<AttentionHeatmap, CreativeError> {
    let raw: AttentionHeatmap = serde_json::from_str(json).map_err(|e| CreativeError::Parse(e.to_string()))?;
    raw.normalized()
}

pub fn load_heatmap(path: &Path) -> Result<AttentionHeatmap, CreativeError> {
    let text = std::fs::read_to_string(path).map_err(|e| CreativeError::Io(format!("{}: {e}", path.display())))?;
    parse_heatmap(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientRegion {
    pub region_id: String,
    /// `(x0, y0, x1, y1)`, inclusive grid cells.
    pub bbox: (usize, usize, usize, usize),
    pub mass: f64,
    pub peak: f64,
    /// Member cells as row-major indices, ascending.
    pub cells: Vec<usize>,
}

/// Connected components (4-neighbour) of cells with weight ≥ `threshold`,
/// ordered by mass descending, then by top-left corner `(y0, x0)`.
/// Region ids are `r1`, `r2`, … in that order.
pub fn rank_regions(heatmap: &AttentionHeatmap, threshold: f64) -> Result<Vec<SalientRegion>, CreativeError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(CreativeError::InvalidThreshold(threshold));
    }
    let (w, h) = (heatmap.width, heatmap.height);
    let hot: Vec<bool> = heatmap.weights.iter().map(|&v| v >= threshold).collect();
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();

    for start in 0..w * h {
        if !hot[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            cells.push(i);
            let (x, y) = (i % w, i / w);
            let mut neighbours = Vec::with_capacity(4);
            if x > 0 {
                neighbours.push(i - 1);
            }
            if x + 1 < w {
                neighbours.push(i + 1);
            }
            if y > 0 {
                neighbours.push(i - w);
            }
            if y + 1 < h {
                neighbours.push(i + w);
            }
            for n in neighbours {
                if hot[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        cells.sort_unstable();
        let xs = cells.iter().map(|i| i % w);
        let ys = cells.iter().map(|i| i / w);
        let bbox = (
            xs.clone().min().unwrap_or(0),
            ys.clone().min().unwrap_or(0),
            xs.max().unwrap_or(0),
            ys.max().unwrap_or(0),
        );
        let mass = cells.iter().map(|&i| heatmap.weights[i]).sum();
        let peak = cells.iter().map(|&i| heatmap.weights[i]).fold(0.0, f64::max);
        regions.push(SalientRegion {
            region_id: String::new(),
            bbox,
            mass,
            peak,
            cells,
        });
    }

    regions.sort_by(|a, b| {
        b.mass
            .total_cmp(&a.mass)
            .then((a.bbox.1, a.bbox.0).cmp(&(b.bbox.1, b.bbox.0)))
    });
    for (i, r) in regions.iter_mut().enumerate() {
        r.region_id = format!("r{}", i + 1);
    }
    Ok(regions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(width: usize, height: usize, weights: Vec<f64>) -> AttentionHeatmap {
        AttentionHeatmap {
            creative_id: "c1".into(),
            width,
            height,
            weights,
        }
    }

    #[test]
    fn normalizes_by_max() {
        assert_eq!(grid(2, 2, vec![0.0, 0.0, 0.0, 4.0]).normalized().unwrap().weights, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn shape_and_zero_errors() {
        assert!(matches!(grid(2, 2, vec![1.0; 3]).normalized(), Err(CreativeError::ShapeMismatch { .. })));
        assert_eq!(grid(2, 2, vec![0.0; 4]).normalized(), Err(CreativeError::AllZero));
        assert_eq!(grid(1, 2, vec![1.0, -1.0]).normalized(), Err(CreativeError::InvalidWeight(1)));
    }

    #[test]
    fn single_hot_cell() {
        let mut w = vec![0.1; 9];
        w[4] = 1.0;
        let r = rank_regions(&grid(3, 3, w).normalized().unwrap(), 0.5).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].bbox, (1, 1, 1, 1));
        assert_eq!(r[0].region_id, "r1");
    }

    #[test]
    fn two_blocks_come_out_in_mass_order() {
        // 6×3 grid; block A (right) sums to 3.2, block B (left) to 2.1.
        #[rustfmt::skip]
        let w = vec![
            0.5, 0.6, 0.0, 0.0, 0.8, 0.8,
            0.5, 0.5, 0.0, 0.0, 0.8, 0.8,
            0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ];
        let hm = grid(6, 3, w);
        let r = rank_regions(&hm, 0.4).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].mass - 3.2).abs() < 1e-12);
        assert_eq!(r[0].bbox, (4, 0, 5, 1));
        assert!((r[1].mass - 2.1).abs() < 1e-12);
        assert_eq!(r[1].bbox, (0, 0, 1, 1));
        assert_eq!(r[1].peak, 0.6);
    }

    #[test]
    fn sharp_threshold_on_a_gradient_keeps_only_the_peak() {
        // Radial falloff around (3,2) on a 7×5 grid.
        let w: Vec<f64> = (0..35)
            .map(|i| {
                let (x, y) = ((i % 7) as f64, (i / 7) as f64);
                1.0 / (1.0 + (x - 3.0).powi(2) + (y - 2.0).powi(2))
            })
            .collect();
        let r = rank_regions(&grid(7, 5, w).normalized().unwrap(), 0.99).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].bbox, (3, 2, 3, 2));
    }

    #[test]
    fn threshold_must_be_open_unit_interval() {
        let hm = grid(1, 1, vec![1.0]);
        for t in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(rank_regions(&hm, t), Err(CreativeError::InvalidThreshold(_))));
        }
    }

    #[test]
    fn diagonal_cells_are_separate_regions() {
        let r = rank_regions(&grid(2, 2, vec![1.0, 0.0, 0.0, 1.0]), 0.5).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].bbox, (0, 0, 0, 0));
    }

    fn arb_heatmap() -> impl Strategy<Value = AttentionHeatmap> {
        (1usize..9, 1usize..9).prop_flat_map(|(w, h)| {
            prop::collection::vec(0.0f64..10.0, w * h).prop_map(move |mut weights| {
                weights[0] += 0.5;
                grid(w, h, weights)
            })
        })
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(hm in arb_heatmap()) {
            let once = hm.normalized().unwrap();
            let json = serde_json::to_string(&once).unwrap();
            prop_assert_eq!(parse_heatmap(&json).unwrap(), once);
        }

        #[test]
        fn regions_partition_the_thresholded_cells(hm in arb_heatmap(), t in 0.01f64..0.99) {
            let hm = hm.normalized().unwrap();
            let regions = rank_regions(&hm, t).unwrap();
            let mut all: Vec<usize> = regions.iter().flat_map(|r| r.cells.iter().copied()).collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), total);
            let expected: Vec<usize> = (0..hm.weights.len()).filter(|&i| hm.weights[i] >= t).collect();
            prop_assert_eq!(all, expected);
            for r in &regions {
                prop_assert!(r.mass > 0.0);
                prop_assert!(r.bbox.0 <= r.bbox.2 && r.bbox.2 < hm.width);
                prop_assert!(r.bbox.1 <= r.bbox.3 && r.bbox.3 < hm.height);
            }
        }

        #[test]
        fn raising_the_threshold_never_adds_hot_cells(hm in arb_heatmap(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let hm = hm.normalized().unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let count = |t| rank_regions(&hm, t).unwrap().iter().map(|r| r.cells.len()).sum::<usize>();
            prop_assert!(count(hi) <= count(lo));
        }
    }
}
