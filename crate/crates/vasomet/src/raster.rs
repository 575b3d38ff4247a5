//! Binary rasters: PNG round-trip, connected components, hole filling, and
//! the exact Euclidean distance transform.
//!
//! Foreground uses 8-connectivity and background 4-connectivity throughout,
//! the usual pairing that keeps digital Jordan curves consistent.

use std::path::Path;

use crate::error::{Error, Result};

/// Binary image; `true` is vessel foreground. Row-major, origin top-left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Bounds-checked read; out-of-range coordinates count as background.
    #[inline]
    pub fn get_or_bg(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            false
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count_fg(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn pixels_fg(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height)
            .flat_map(move |y| (0..self.width).map(move |x| (x, y)))
            .filter(move |&(x, y)| self.get(x, y))
    }

    /// Load from a PNG (or any decodable image); luma >= 128 is foreground.
    pub fn from_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut mask = Mask::new(w, h);
        for (x, y, p) in img.enumerate_pixels() {
            if p.0[0] >= 128 {
                mask.set(x as usize, y as usize, true);
            }
        }
        Ok(mask)
    }

    pub fn to_png(&self, path: &Path) -> Result<()> {
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            p.0[0] = if self.get(x as usize, y as usize) { 255 } else { 0 };
        }
        img.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// 8-connected foreground components, each a list of (x, y) pixels in
    /// raster scan order of discovery.
    pub fn fg_components(&self) -> Vec<Vec<(usize, usize)>> {
        let mut seen = vec![false; self.data.len()];
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                if !self.data[i] || seen[i] {
                    continue;
                }
                let mut comp = Vec::new();
                let mut stack = vec![(x, y)];
                seen[i] = true;
                while let Some((cx, cy)) = stack.pop() {
                    comp.push((cx, cy));
                    for (nx, ny) in neighbors8(cx, cy, self.width, self.height) {
                        let j = ny * self.width + nx;
                        if self.data[j] && !seen[j] {
                            seen[j] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
                out.push(comp);
            }
        }
        out
    }

    /// Drop foreground components smaller than `min_px`; returns how many
    /// components were removed.
    pub fn retain_components_min(&mut self, min_px: usize) -> usize {
        let comps = self.fg_components();
        let mut removed = 0;
        for comp in comps {
            if comp.len() < min_px {
                for (x, y) in comp {
                    self.set(x, y, false);
                }
                removed += 1;
            }
        }
        removed
    }

    /// Fill 4-connected background pockets strictly smaller than `lt_px`
    /// that do not touch the image border; returns how many were filled.
    pub fn fill_holes(&mut self, lt_px: usize) -> usize {
        let mut seen = vec![false; self.data.len()];
        let mut filled = 0;
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                if self.data[i] || seen[i] {
                    continue;
                }
                let mut comp = Vec::new();
                let mut touches_border = false;
                let mut stack = vec![(x, y)];
                seen[i] = true;
                while let Some((cx, cy)) = stack.pop() {
                    if cx == 0 || cy == 0 || cx == self.width - 1 || cy == self.height - 1 {
                        touches_border = true;
                    }
                    comp.push((cx, cy));
                    for (nx, ny) in neighbors4(cx, cy, self.width, self.height) {
                        let j = ny * self.width + nx;
                        if !self.data[j] && !seen[j] {
                            seen[j] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
                if !touches_border && comp.len() < lt_px {
                    for (cx, cy) in comp {
                        self.set(cx, cy, true);
                    }
                    filled += 1;
                }
            }
        }
        filled
    }

    /// Dilate by a Euclidean disc of radius `r` pixels.
    pub fn dilated(&self, r: f64) -> Mask {
        let ri = r.floor() as i64;
        let r2 = r * r;
        let mut offsets = Vec::new();
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if (dx * dx + dy * dy) as f64 <= r2 {
                    offsets.push((dx, dy));
                }
            }
        }
        let mut out = Mask::new(self.width, self.height);
        for (x, y) in self.pixels_fg() {
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < self.width && (ny as usize) < self.height {
                    out.set(nx as usize, ny as usize, true);
                }
            }
        }
        out
    }

    /// Exact Euclidean distance from every pixel to the nearest background
    /// pixel (0 on background). Image borders do not count as background.
    pub fn edt(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let inf = 1e18f64;
        let mut g = vec![0.0f64; w * h];
        // Pass 1: 1D transform down each column of the 0/inf indicator.
        let mut f = vec![0.0f64; h.max(w)];
        let mut d = vec![0.0f64; h.max(w)];
        let mut v = vec![0usize; h.max(w)];
        let mut z = vec![0.0f64; h.max(w) + 1];
        for x in 0..w {
            for y in 0..h {
                f[y] = if self.data[y * w + x] { inf } else { 0.0 };
            }
            dt1d(&f[..h], &mut d, &mut v, &mut z);
            for y in 0..h {
                g[y * w + x] = d[y];
            }
        }
        // Pass 2: along each row on the column result.
        let mut out = vec![0.0f64; w * h];
        for y in 0..h {
            f[..w].copy_from_slice(&g[y * w..(y + 1) * w]);
            dt1d(&f[..w], &mut d, &mut v, &mut z);
            for x in 0..w {
                out[y * w + x] = d[x].sqrt();
            }
        }
        out
    }
}

pub fn neighbors8(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    const OFF: [(i64, i64); 8] = [
        (-1, -1),
        (0, -1),
        (1, -1),
        (-1, 0),
        (1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    OFF.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
            Some((nx as usize, ny as usize))
        } else {
            None
        }
    })
}

pub fn neighbors4(
    x: usize,
    y: usize,
    w: usize,
    h: usize,
) -> impl Iterator<Item = (usize, usize)> {
    const OFF: [(i64, i64); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
    OFF.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
            Some((nx as usize, ny as usize))
        } else {
            None
        }
    })
}

/// Felzenszwalb–Huttenlocher 1D squared distance transform: lower envelope
/// of the parabolas y = f[i] + (q - i)^2.
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                // Parabola q dominates the current one everywhere right of
                // its own intersection; discard and retry.
                if k == 0 {
                    v[0] = q;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        d[q] = (q as f64 - p as f64).powi(2) + f[p];
    }
}
