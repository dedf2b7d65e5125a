//! Connected region extraction and shape measurement.

use super::mask::BinaryMask;

/// A single 8-connected foreground region together with its shape
/// measurements. Regions are produced by [`connected_components`]; the
/// stored mask has the dimensions of the source mask with only this
/// region's pixels set.
#[derive(Debug, Clone)]
pub struct Region {
    mask: BinaryMask,
    pixels: Vec<(u32, u32)>,
    area: usize,
    centroid: (f64, f64),
    perimeter: f64,
    convex_area: usize,
}

impl Region {
    fn from_pixels(width: usize, height: usize, pixels: Vec<(u32, u32)>) -> Region {
        debug_assert!(!pixels.is_empty());
        let mut mask = BinaryMask::new(width, height);
        let mut sx = 0.0f64;
        let mut sy = 0.0f64;
        for &(x, y) in &pixels {
            mask.set(x as usize, y as usize, true);
            sx += x as f64;
            sy += y as f64;
        }
        let area = pixels.len();
        let centroid = (sx / area as f64, sy / area as f64);
        let perimeter = trace_perimeter(&mask, pixels[0]);
        let hull = convex_hull(&row_extremes(&pixels));
        let convex_area = lattice_points_in_hull(&hull);
        Region {
            mask,
            pixels,
            area,
            centroid,
            perimeter,
            convex_area,
        }
    }

    /// Mask with exactly this region's pixels set, at source dimensions.
    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    /// The region's pixels as `(x, y)` pairs in raster scan order.
    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    /// Number of pixels in the region.
    pub fn area(&self) -> usize {
        self.area
    }

    /// Mean pixel position `(x, y)`.
    pub fn centroid(&self) -> (f64, f64) {
        self.centroid
    }

    /// Length of the closed outer boundary walk: axis steps count 1,
    /// diagonal steps √2. A single-pixel region has perimeter 0.
    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Number of lattice points inside or on the region's convex hull.
    /// Always at least `area`.
    pub fn convex_area(&self) -> usize {
        self.convex_area
    }
}

/// Extracts all 8-connected foreground regions in raster scan discovery
/// order (top to bottom, left to right by first pixel).
pub fn connected_components(mask: &BinaryMask) -> Vec<Region> {
    let (w, h) = (mask.width(), mask.height());
    let mut visited = vec![false; w * h];
    let mut regions = Vec::new();
    let mut queue: Vec<(u32, u32)> = Vec::new();
    for start_y in 0..h {
        for start_x in 0..w {
            let idx = start_y * w + start_x;
            if !mask.bits()[idx] || visited[idx] {
                continue;
            }
            visited[idx] = true;
            queue.clear();
            queue.push((start_x as u32, start_y as u32));
            let mut pixels = Vec::new();
            while let Some((x, y)) = queue.pop() {
                pixels.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = x as i64 + dx;
                        let ny = y as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let nidx = ny as usize * w + nx as usize;
                        if mask.bits()[nidx] && !visited[nidx] {
                            visited[nidx] = true;
                            queue.push((nx as u32, ny as u32));
                        }
                    }
                }
            }
            // Stack exploration order is not raster order; normalize so the
            // pixel list (and the centroid accumulation order) is canonical.
            pixels.sort_unstable_by_key(|&(x, y)| (y, x));
            regions.push(Region::from_pixels(w, h, pixels));
        }
    }
    regions
}

/// Fills holes: any background component not 4-connected to the image
/// border becomes foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut outside = vec![false; w * h];
    let mut queue: Vec<(usize, usize)> = Vec::new();
    let push = |outside: &mut Vec<bool>, queue: &mut Vec<(usize, usize)>, x: usize, y: usize| {
        let idx = y * w + x;
        if !mask.bits()[idx] && !outside[idx] {
            outside[idx] = true;
            queue.push((x, y));
        }
    };
    for x in 0..w {
        push(&mut outside, &mut queue, x, 0);
        push(&mut outside, &mut queue, x, h - 1);
    }
    for y in 0..h {
        push(&mut outside, &mut queue, 0, y);
        push(&mut outside, &mut queue, w - 1, y);
    }
    while let Some((x, y)) = queue.pop() {
        if x > 0 {
            push(&mut outside, &mut queue, x - 1, y);
        }
        if x + 1 < w {
            push(&mut outside, &mut queue, x + 1, y);
        }
        if y > 0 {
            push(&mut outside, &mut queue, x, y - 1);
        }
        if y + 1 < h {
            push(&mut outside, &mut queue, x, y + 1);
        }
    }
    let mut out = BinaryMask::new(w, h);
    for i in 0..w * h {
        out.bits_mut()[i] = mask.bits()[i] || !outside[i];
    }
    out
}

/// Moore neighborhood in clockwise order starting west, for a y-down grid.
const MOORE: [(i32, i32); 8] = [
    (-1, 0),  // W
    (-1, -1), // NW
    (0, -1),  // N
    (1, -1),  // NE
    (1, 0),   // E
    (1, 1),   // SE
    (0, 1),   // S
    (-1, 1),  // SW
];

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Length of the closed outer boundary walk via Moore-neighbor tracing.
/// `start` must be the topmost-leftmost pixel of the region so the west
/// neighbor is guaranteed background. Holes do not contribute: only the
/// outer boundary is traced.
fn trace_perimeter(mask: &BinaryMask, start: (u32, u32)) -> f64 {
    let (w, h) = (mask.width() as i32, mask.height() as i32);
    let at = |x: i32, y: i32| -> bool {
        x >= 0 && y >= 0 && x < w && y < h && mask.get(x as usize, y as usize)
    };
    let start = (start.0 as i32, start.1 as i32);
    let mut cur = start;
    // Entered conceptually from the west background neighbor.
    let mut backtrack = 0usize;
    let mut first_departure: Option<usize> = None;
    let mut total = 0.0f64;
    let step_cap = 4 * (w as usize * h as usize) + 8;
    for _ in 0..step_cap {
        // Scan clockwise from just past the backtrack direction.
        let mut found = None;
        for step in 1..=8usize {
            let d = (backtrack + step) % 8;
            let (dx, dy) = MOORE[d];
            if at(cur.0 + dx, cur.1 + dy) {
                found = Some(d);
                break;
            }
        }
        let d = match found {
            Some(d) => d,
            None => return 0.0, // isolated pixel
        };
        if cur == start {
            match first_departure {
                None => first_departure = Some(d),
                // Back at the start about to repeat the first move: the
                // boundary walk is closed.
                Some(d0) if d == d0 => break,
                _ => {}
            }
        }
        total += if d % 2 == 0 { 1.0 } else { SQRT2 };
        // The pixel examined just before the hit is background and adjacent
        // to the new current pixel; it becomes the new backtrack reference.
        let last_bg_dir = (d + 7) % 8;
        let bg = (cur.0 + MOORE[last_bg_dir].0, cur.1 + MOORE[last_bg_dir].1);
        let next = (cur.0 + MOORE[d].0, cur.1 + MOORE[d].1);
        let delta = (bg.0 - next.0, bg.1 - next.1);
        backtrack = MOORE
            .iter()
            .position(|&m| m == delta)
            .expect("backtrack pixel is always Moore-adjacent to the next pixel");
        cur = next;
    }
    total
}

/// Per-row extreme pixels: the leftmost and rightmost pixel of every row.
/// These are the only candidates for convex hull vertices.
fn row_extremes(pixels: &[(u32, u32)]) -> Vec<(i64, i64)> {
    use std::collections::BTreeMap;
    let mut rows: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for &(x, y) in pixels {
        rows.entry(y)
            .and_modify(|(lo, hi)| {
                *lo = (*lo).min(x);
                *hi = (*hi).max(x);
            })
            .or_insert((x, x));
    }
    let mut pts = Vec::with_capacity(rows.len() * 2);
    for (y, (lo, hi)) in rows {
        pts.push((lo as i64, y as i64));
        if hi != lo {
            pts.push((hi as i64, y as i64));
        }
    }
    pts
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone chain convex hull; collinear points are dropped. Returns the
/// hull in counterclockwise order (for y pointing down), or fewer than three
/// points for degenerate inputs.
fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // All input points were collinear; keep the two extremes.
        let mut ends = vec![pts[0], pts[pts.len() - 1]];
        ends.dedup();
        return ends;
    }
    lower
}

fn div_floor(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    a.div_euclid(b)
}

fn div_ceil(a: i64, b: i64) -> i64 {
    debug_assert!(b > 0);
    -(-a).div_euclid(b)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Exact count of lattice points inside or on a convex hull, computed per
/// integer row with rational edge intersections (no floating point).
fn lattice_points_in_hull(hull: &[(i64, i64)]) -> usize {
    match hull.len() {
        0 => 0,
        1 => 1,
        2 => {
            let (dx, dy) = (hull[1].0 - hull[0].0, hull[1].1 - hull[0].1);
            (gcd(dx, dy) + 1) as usize
        }
        _ => {
            let y_min = hull.iter().map(|p| p.1).min().unwrap();
            let y_max = hull.iter().map(|p| p.1).max().unwrap();
            let mut count = 0usize;
            for y in y_min..=y_max {
                // Intersect the row with every edge, tracking min/max x as
                // exact fractions num/den with den > 0.
                let mut lo: Option<(i64, i64)> = None;
                let mut hi: Option<(i64, i64)> = None;
                let mut update = |num: i64, den: i64| {
                    debug_assert!(den > 0);
                    match &mut lo {
                        None => lo = Some((num, den)),
                        Some((ln, ld)) => {
                            if num * *ld < *ln * den {
                                lo = Some((num, den));
                            }
                        }
                    }
                    match &mut hi {
                        None => hi = Some((num, den)),
                        Some((hn, hd)) => {
                            if num * *hd > *hn * den {
                                hi = Some((num, den));
                            }
                        }
                    }
                };
                for i in 0..hull.len() {
                    let p = hull[i];
                    let q = hull[(i + 1) % hull.len()];
                    if p.1 == q.1 {
                        if p.1 == y {
                            update(p.0, 1);
                            update(q.0, 1);
                        }
                        continue;
                    }
                    if y < p.1.min(q.1) || y > p.1.max(q.1) {
                        continue;
                    }
                    // x = p.x + (q.x - p.x) * (y - p.y) / (q.y - p.y)
                    let mut den = q.1 - p.1;
                    let mut num = p.0 * den + (q.0 - p.0) * (y - p.1);
                    if den < 0 {
                        den = -den;
                        num = -num;
                    }
                    update(num, den);
                }
                if let (Some((ln, ld)), Some((hn, hd))) = (lo, hi) {
                    let first = div_ceil(ln, ld);
                    let last = div_floor(hn, hd);
                    if last >= first {
                        count += (last - first + 1) as usize;
                    }
                }
            }
            count
        }
    }
}
