//! Mask cleanup and thinning to one-pixel-wide skeletons.
//!
//! Thinning is Zhang–Suen with two safeguards. First, deletions within a
//! subiteration are applied sequentially and re-checked against the current
//! image with an (8,4) simple-point test, so connected components and holes
//! are preserved exactly (the textbook parallel rule erases isolated 2x2
//! blocks). Second, a post-pass removes redundant staircase corners until
//! no simple non-endpoint pixel remains, which makes `thin` idempotent.

use crate::raster::Mask;

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Foreground components strictly smaller than this are dropped.
    pub min_component_px: usize,
    /// Background holes strictly smaller than this are filled.
    pub max_hole_px: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            min_component_px: 20,
            max_hole_px: 10,
        }
    }
}

/// Despeckle and fill pinholes ahead of thinning.
pub fn preprocess_mask(mask: &Mask, cfg: &PreprocessConfig) -> Mask {
    let mut out = mask.clone();
    out.retain_components_min(cfg.min_component_px);
    out.fill_holes(cfg.max_hole_px);
    out
}

/// One-pixel-wide centerline raster produced by `thin`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton {
    mask: Mask,
}

impl Skeleton {
    /// Wrap a raster that is already one pixel wide without re-thinning,
    /// e.g. a hand-built fixture or a dumped skeleton loaded back.
    pub fn from_mask_unchecked(mask: Mask) -> Skeleton {
        Skeleton { mask }
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn into_mask(self) -> Mask {
        self.mask
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask.get(x, y)
    }

    pub fn count(&self) -> usize {
        self.mask.count_fg()
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.mask.pixels_fg()
    }
}

/// Ring offsets in Zhang–Suen order P2..P9: N, NE, E, SE, S, SW, W, NW.
const RING: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

fn ring_fg(m: &Mask, x: usize, y: usize) -> [bool; 8] {
    let mut r = [false; 8];
    for (i, &(dx, dy)) in RING.iter().enumerate() {
        r[i] = m.get_or_bg(x as i64 + dx, y as i64 + dy);
    }
    r
}

fn neighbor_count(m: &Mask, x: usize, y: usize) -> usize {
    ring_fg(m, x, y).iter().filter(|&&b| b).count()
}

/// (8,4) simple-point test: removing (x, y) neither splits/merges the
/// foreground (one 8-component in the punctured ring) nor opens/closes a
/// hole (one 4-component of ring background touching a 4-neighbor).
fn is_simple(m: &Mask, x: usize, y: usize) -> bool {
    let r = ring_fg(m, x, y);
    // Foreground 8-components within the ring.
    let mut seen = [false; 8];
    let mut fg_comps = 0;
    for start in 0..8 {
        if !r[start] || seen[start] {
            continue;
        }
        fg_comps += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..8 {
                if r[j] && !seen[j] {
                    let (ax, ay) = RING[i];
                    let (bx, by) = RING[j];
                    if (ax - bx).abs() <= 1 && (ay - by).abs() <= 1 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    if fg_comps != 1 {
        return false;
    }
    // Background 4-components within the ring that touch a 4-neighbor of p
    // (ring indices 0, 2, 4, 6).
    let mut seen = [false; 8];
    let mut bg_comps = 0;
    for start in [0usize, 2, 4, 6] {
        if r[start] || seen[start] {
            continue;
        }
        bg_comps += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for j in 0..8 {
                if !r[j] && !seen[j] {
                    let (ax, ay) = RING[i];
                    let (bx, by) = RING[j];
                    if (ax - bx).abs() + (ay - by).abs() == 1 {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    bg_comps == 1
}

/// Zhang–Suen candidacy on the snapshot `s` for the given subiteration.
fn zs_candidate(s: &Mask, x: usize, y: usize, phase: usize) -> bool {
    let r = ring_fg(s, x, y);
    let b: usize = r.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let mut a = 0;
    for i in 0..8 {
        if !r[i] && r[(i + 1) % 8] {
            a += 1;
        }
    }
    if a != 1 {
        return false;
    }
    let (p2, p4, p6, p8) = (r[0], r[2], r[4], r[6]);
    if phase == 0 {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Thin a binary mask to its skeleton. Topology-preserving: the result has
/// the same number of foreground components and holes as the input.
pub fn thin(mask: &Mask) -> Skeleton {
    let (w, h) = (mask.width(), mask.height());
    let mut m = mask.clone();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut deleted = 0usize;
        for phase in 0..2 {
            let snapshot = m.clone();
            candidates.clear();
            for (x, y) in snapshot.pixels_fg() {
                if zs_candidate(&snapshot, x, y, phase) {
                    candidates.push((x, y));
                }
            }
            for &(x, y) in &candidates {
                if neighbor_count(&m, x, y) >= 2 && is_simple(&m, x, y) {
                    m.set(x, y, false);
                    deleted += 1;
                }
            }
        }
        if deleted == 0 {
            break;
        }
    }
    // Staircase pass: strip remaining redundant corners.
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if m.get(x, y) && neighbor_count(&m, x, y) >= 2 && is_simple(&m, x, y) {
                    m.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Skeleton { mask: m }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::tests::mask_from_art;

    fn bg_components(m: &Mask) -> usize {
        // 4-connected background component count, border included.
        let (w, h) = (m.width(), m.height());
        let mut seen = vec![false; w * h];
        let mut comps = 0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if m.get(x, y) || seen[i] {
                    continue;
                }
                comps += 1;
                let mut stack = vec![(x, y)];
                seen[i] = true;
                while let Some((cx, cy)) = stack.pop() {
                    for (nx, ny) in crate::raster::neighbors4(cx, cy, w, h) {
                        let j = ny * w + nx;
                        if !m.get(nx, ny) && !seen[j] {
                            seen[j] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
        }
        comps
    }

    #[test]
    fn preprocess_drops_specks_keeps_vessels() {
        let mut m = Mask::new(64, 64);
        for x in 5..55 {
            for y in 30..34 {
                m.set(x, y, true);
            }
        }
        for (x, y) in [(2, 2), (3, 2), (2, 3), (3, 3), (60, 60)] {
            m.set(x, y, true);
        }
        let out = preprocess_mask(&m, &PreprocessConfig::default());
        assert_eq!(out.fg_components().len(), 1);
        assert_eq!(out.count_fg(), 50 * 4);
    }

    #[test]
    fn preprocess_fills_small_holes() {
        let mut m = Mask::new(40, 40);
        for x in 5..35 {
            for y in 10..20 {
                m.set(x, y, true);
            }
        }
        m.set(20, 14, false);
        m.set(21, 14, false);
        let out = preprocess_mask(&m, &PreprocessConfig::default());
        assert!(out.get(20, 14) && out.get(21, 14));
    }

    #[test]
    fn thin_empty_and_isolated() {
        let empty = Mask::new(10, 10);
        assert_eq!(thin(&empty).count(), 0);
        let mut dot = Mask::new(10, 10);
        dot.set(4, 7, true);
        let s = thin(&dot);
        assert_eq!(s.count(), 1);
        assert!(s.contains(4, 7));
    }

    #[test]
    fn thin_bar_to_center_row() {
        let mut m = Mask::new(60, 9);
        for x in 2..52 {
            for y in 3..6 {
                m.set(x, y, true);
            }
        }
        let s = thin(&m);
        assert_eq!(s.mask().fg_components().len(), 1);
        // No pixel retains more than two neighbors (pure chain).
        for (x, y) in s.pixels() {
            assert!(neighbor_count(s.mask(), x, y) <= 2, "({x},{y})");
        }
        // Away from the eroded ends the centerline sits on the middle row.
        for x in 6..48 {
            let col: Vec<usize> = (0..9).filter(|&y| s.contains(x, y)).collect();
            assert_eq!(col, vec![4], "column {x}");
        }
    }

    #[test]
    fn thin_plus_sign_single_junction_cluster() {
        let mut m = Mask::new(41, 41);
        for x in 4..37 {
            for y in 19..22 {
                m.set(x, y, true);
            }
        }
        for y in 4..37 {
            for x in 19..22 {
                m.set(x, y, true);
            }
        }
        let s = thin(&m);
        assert_eq!(s.mask().fg_components().len(), 1);
        let junctions: Vec<(usize, usize)> = s
            .pixels()
            .filter(|&(x, y)| neighbor_count(s.mask(), x, y) >= 3)
            .collect();
        assert!(!junctions.is_empty());
        for &(ax, ay) in &junctions {
            for &(bx, by) in &junctions {
                let cheb = (ax as i64 - bx as i64).abs().max((ay as i64 - by as i64).abs());
                assert!(cheb <= 2, "junction pixels {junctions:?} not one cluster");
            }
        }
        let endpoints = s
            .pixels()
            .filter(|&(x, y)| neighbor_count(s.mask(), x, y) == 1)
            .count();
        assert_eq!(endpoints, 4);
    }

    #[test]
    fn thin_preserves_component_count_and_holes() {
        let m = mask_from_art(&[
            "...................",
            ".#######...........",
            ".##...##....####...",
            ".##...##....####...",
            ".##...##........#..",
            ".#######........#..",
            "...................",
        ]);
        let s = thin(&m);
        assert_eq!(
            s.mask().fg_components().len(),
            m.fg_components().len(),
            "component count"
        );
        assert_eq!(bg_components(s.mask()), bg_components(&m), "hole count");
    }

    #[test]
    fn thin_survives_2x2_blocks() {
        // The parallel textbook rule deletes an isolated 2x2 square outright.
        let m = mask_from_art(&["....", ".##.", ".##.", "...."]);
        let s = thin(&m);
        assert!(s.count() >= 1, "2x2 block vanished");
        assert_eq!(s.mask().fg_components().len(), 1);
    }

    #[test]
    fn thin_is_idempotent() {
        let m = mask_from_art(&[
            "......................",
            ".######...............",
            ".#######..............",
            "..########............",
            "....########..######..",
            "......#######.######..",
            ".......#############..",
            "........####..######..",
            "......................",
        ]);
        let once = thin(&m);
        let twice = thin(once.mask());
        assert_eq!(once, twice);
    }

    #[test]
    fn thin_subset_of_input() {
        let m = mask_from_art(&[
            "..........",
            ".########.",
            ".########.",
            ".########.",
            "..........",
        ]);
        let s = thin(&m);
        for (x, y) in s.pixels() {
            assert!(m.get(x, y));
        }
    }

    #[test]
    fn simple_point_cases() {
        // Corner of an L is simple; a chain interior pixel is not.
        let l = mask_from_art(&["##.", ".#.", ".#."]);
        assert!(is_simple(&l, 1, 0));
        let chain = mask_from_art(&["...", "###", "..."]);
        assert!(!is_simple(&chain, 1, 1));
        // Deleting the top of a closed ring would open its hole.
        let ring = mask_from_art(&["###", "#.#", "###"]);
        assert!(!is_simple(&ring, 1, 0));
    }
}
