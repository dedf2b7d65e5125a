//! Mathematical morphology on binary masks and grayscale planes.
//!
//! Structuring elements are origin-centered Euclidean disks. All operators
//! use clipped windows at the image border (the window is intersected with
//! the image):
//!
//! * dilation: a pixel is set iff some foreground pixel lies within the
//!   disk around it (out-of-image contributes nothing),
//! * erosion: a pixel survives iff every in-image pixel of the disk around
//!   it is foreground (out-of-image never disqualifies),
//! * opening is erosion followed by dilation; closing is dilation followed
//!   by erosion.
//!
//! With clipped windows the erosion is the lattice adjoint of the dilation
//! on the bounded frame, which gives the operators their textbook algebra
//! exactly: opening/closing are idempotent, opening is anti-extensive,
//! closing is extensive, a full-frame mask closes to itself, and a constant
//! grayscale plane passes through every operator unchanged.
//!
//! The binary operators are implemented with an exact squared Euclidean
//! distance transform (two-pass lower-envelope-of-parabolas algorithm), so
//! they run in O(pixels) regardless of the disk radius while producing
//! results identical to the window definition above.

use super::mask::BinaryMask;

/// Large finite stand-in for "no site in range" in the distance transform.
/// Kept finite so parabola intersection arithmetic never produces NaN.
const DT_INF: f64 = 1e20;

/// An origin-centered, symmetric structuring element.
///
/// Only disk-shaped elements can be constructed, which the fast binary
/// operators rely on: thresholding the Euclidean distance transform at the
/// disk radius is exactly the window definition above.
#[derive(Debug, Clone)]
pub struct StructuringElement {
    radius: u32,
    offsets: Vec<(i32, i32)>,
    /// Half-width of the disk row at each `dy` in `-radius..=radius`,
    /// used by the separable grayscale filters.
    row_half_widths: Vec<i32>,
}

/// Builds the disk of the given radius: all integer offsets `(dx, dy)` with
/// `dx*dx + dy*dy <= radius*radius`. `disk(0)` is the single-pixel identity
/// element; every disk is symmetric and contains the origin.
pub fn disk(radius: u32) -> StructuringElement {
    let r = radius as i32;
    let r2 = r * r;
    let mut offsets = Vec::new();
    let mut row_half_widths = Vec::with_capacity((2 * r + 1) as usize);
    for dy in -r..=r {
        let hw = ((r2 - dy * dy) as f64).sqrt().floor() as i32;
        // Guard against floating point sqrt landing one off an exact square.
        let hw = exact_row_half_width(hw, dy, r2);
        row_half_widths.push(hw);
        for dx in -hw..=hw {
            offsets.push((dx, dy));
        }
    }
    StructuringElement {
        radius,
        offsets,
        row_half_widths,
    }
}

fn exact_row_half_width(estimate: i32, dy: i32, r2: i32) -> i32 {
    let mut hw = estimate;
    while (hw + 1) * (hw + 1) + dy * dy <= r2 {
        hw += 1;
    }
    while hw > 0 && hw * hw + dy * dy > r2 {
        hw -= 1;
    }
    hw
}

impl StructuringElement {
    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// All `(dx, dy)` offsets covered by the element, in row-major order.
    pub fn offsets(&self) -> &[(i32, i32)] {
        &self.offsets
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
/// `f` holds per-position seed costs, `d` receives `min_q (p-q)^2 + f[q]`.
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -DT_INF;
    z[1] = DT_INF;
    for q in 1..n {
        loop {
            let vk = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[vk] + (vk * vk) as f64))
                / (2 * (q - vk)) as f64;
            if s <= z[k] {
                // The new parabola dominates the previous one entirely.
                if k == 0 {
                    v[0] = q;
                    z[1] = DT_INF;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = DT_INF;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let vq = v[k];
        let diff = q as isize - vq as isize;
        d[q] = (diff * diff) as f64 + f[vq];
    }
}

/// Squared Euclidean distance from every pixel to the nearest `true` pixel
/// of `sites` (row-major, `w x h`). Pixels with no site anywhere get a value
/// of at least `DT_INF`.
fn edt_squared(sites: &[bool], w: usize, h: usize) -> Vec<f64> {
    let n = w.max(h);
    let mut fbuf = vec![0.0f64; n];
    let mut dbuf = vec![0.0f64; n];
    let mut vbuf = vec![0usize; n];
    let mut zbuf = vec![0.0f64; n + 1];

    // Vertical pass: per-column squared distance to the nearest site row.
    let mut g = vec![0.0f64; w * h];
    for x in 0..w {
        for y in 0..h {
            fbuf[y] = if sites[y * w + x] { 0.0 } else { DT_INF };
        }
        dt1d(&fbuf[..h], &mut dbuf[..h], &mut vbuf[..h], &mut zbuf[..h + 1]);
        for y in 0..h {
            g[y * w + x] = dbuf[y];
        }
    }

    // Horizontal pass combines the per-column results.
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        fbuf[..w].copy_from_slice(&g[y * w..y * w + w]);
        dt1d(&fbuf[..w], &mut dbuf[..w], &mut vbuf[..w], &mut zbuf[..w + 1]);
        out[y * w..y * w + w].copy_from_slice(&dbuf[..w]);
    }
    out
}

/// Binary dilation: every pixel within `se.radius()` of a foreground pixel
/// becomes foreground.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r2 = (se.radius() * se.radius()) as f64;
    let dist = edt_squared(mask.bits(), w, h);
    let mut out = BinaryMask::new(w, h);
    let bits = out.bits_mut();
    for i in 0..w * h {
        bits[i] = dist[i] <= r2;
    }
    out
}

/// Binary erosion: a pixel survives iff every in-image pixel of the disk
/// around it is foreground.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let r2 = (se.radius() * se.radius()) as f64;
    // A pixel is eroded away exactly when some in-image background pixel
    // lies within the disk, i.e. when its distance to the background is
    // within the radius.
    let sites: Vec<bool> = mask.bits().iter().map(|&b| !b).collect();
    let dist = edt_squared(&sites, w, h);
    let mut out = BinaryMask::new(w, h);
    let bits = out.bits_mut();
    for i in 0..w * h {
        bits[i] = mask.bits()[i] && dist[i] > r2;
    }
    out
}

/// Morphological opening: erosion followed by dilation. Removes foreground
/// details narrower than the disk; never grows the mask.
pub fn open(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    dilate(&erode(mask, se), se)
}

/// Morphological closing: dilation followed by erosion. Fills background
/// details narrower than the disk; never removes foreground.
pub fn close(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    erode(&dilate(mask, se), se)
}

/// Sliding horizontal windowed maximum with clipped borders.
/// `dst[x] = max(src[x-hw ..= x+hw] ∩ [0, w))`, computed with a monotone
/// index deque in O(w).
fn row_window_minmax(src: &[f64], dst: &mut [f64], hw: usize, take_max: bool) {
    use std::collections::VecDeque;
    let w = src.len();
    let mut deque: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for x in 0..w {
        let upper = (x + hw).min(w - 1);
        while next <= upper {
            while let Some(&back) = deque.back() {
                let replace = if take_max {
                    src[back] <= src[next]
                } else {
                    src[back] >= src[next]
                };
                if replace {
                    deque.pop_back();
                } else {
                    break;
                }
            }
            deque.push_back(next);
            next += 1;
        }
        while let Some(&front) = deque.front() {
            if front + hw < x {
                deque.pop_front();
            } else {
                break;
            }
        }
        dst[x] = src[*deque.front().expect("window never empty")];
    }
}

/// Shared engine for grayscale dilation (max) and erosion (min): the disk is
/// decomposed into horizontal runs, each run filtered with a sliding-window
/// pass, and the per-row results combined across `dy`.
fn gray_minmax(plane: &[f64], w: usize, h: usize, se: &StructuringElement, take_max: bool) -> Vec<f64> {
    assert_eq!(plane.len(), w * h);
    let r = se.radius() as i32;
    if r == 0 {
        return plane.to_vec();
    }
    // One horizontal pass per distinct run half-width, shared across dy.
    let mut by_width: Vec<(i32, Vec<f64>)> = Vec::new();
    for &hw in &se.row_half_widths {
        if by_width.iter().any(|(w0, _)| *w0 == hw) {
            continue;
        }
        let mut filtered = vec![0.0f64; w * h];
        for y in 0..h {
            row_window_minmax(
                &plane[y * w..y * w + w],
                &mut filtered[y * w..y * w + w],
                hw as usize,
                take_max,
            );
        }
        by_width.push((hw, filtered));
    }
    let row_for = |hw: i32| -> &Vec<f64> {
        &by_width.iter().find(|(w0, _)| *w0 == hw).unwrap().1
    };

    let mut out = vec![if take_max { f64::NEG_INFINITY } else { f64::INFINITY }; w * h];
    for (idx, &hw) in se.row_half_widths.iter().enumerate() {
        let dy = idx as i32 - r;
        let filtered = row_for(hw);
        for y in 0..h {
            let sy = y as i32 + dy;
            if sy < 0 || sy >= h as i32 {
                continue;
            }
            let src_row = &filtered[sy as usize * w..sy as usize * w + w];
            let dst_row = &mut out[y * w..y * w + w];
            if take_max {
                for x in 0..w {
                    if src_row[x] > dst_row[x] {
                        dst_row[x] = src_row[x];
                    }
                }
            } else {
                for x in 0..w {
                    if src_row[x] < dst_row[x] {
                        dst_row[x] = src_row[x];
                    }
                }
            }
        }
    }
    out
}

/// Grayscale dilation: windowed maximum over the disk, window clipped at the
/// image border.
pub fn gray_dilate(plane: &[f64], w: usize, h: usize, se: &StructuringElement) -> Vec<f64> {
    gray_minmax(plane, w, h, se, true)
}

/// Grayscale erosion: windowed minimum over the disk, window clipped at the
/// image border.
pub fn gray_erode(plane: &[f64], w: usize, h: usize, se: &StructuringElement) -> Vec<f64> {
    gray_minmax(plane, w, h, se, false)
}

/// Grayscale opening: erosion followed by dilation.
pub fn gray_open(plane: &[f64], w: usize, h: usize, se: &StructuringElement) -> Vec<f64> {
    gray_dilate(&gray_erode(plane, w, h, se), w, h, se)
}

/// Grayscale closing: dilation followed by erosion. Fills dark details
/// narrower than the disk (the hair-removal workhorse).
pub fn gray_close(plane: &[f64], w: usize, h: usize, se: &StructuringElement) -> Vec<f64> {
    gray_erode(&gray_dilate(plane, w, h, se), w, h, se)
}

/// 3x3 median filter. Border windows replicate the edge pixels (coordinates
/// are clamped into the image), so every window holds exactly nine samples.
pub fn median3x3(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    assert_eq!(plane.len(), w * h);
    let mut out = vec![0.0f64; w * h];
    let mut window = [0.0f64; 9];
    for y in 0..h {
        for x in 0..w {
            let mut n = 0;
            for dy in -1i32..=1 {
                let sy = (y as i32 + dy).clamp(0, h as i32 - 1) as usize;
                for dx in -1i32..=1 {
                    let sx = (x as i32 + dx).clamp(0, w as i32 - 1) as usize;
                    window[n] = plane[sy * w + sx];
                    n += 1;
                }
            }
            window.sort_unstable_by(f64::total_cmp);
            out[y * w + x] = window[4];
        }
    }
    out
}
