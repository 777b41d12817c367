//! Convex flake outlines and their rasterisation.

use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain; returns the hull counter-clockwise without the
/// closing point.
pub fn convex_hull(mut points: Vec<Point>) -> Vec<Point> {
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    points.dedup();
    if points.len() < 3 {
        return points;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(points.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> =
            if pass == 0 { Box::new(points.iter()) } else { Box::new(points.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Convex polygon approximating an axis-aligned ellipse with jittered
/// vertices. All vertices lie inside the ellipse.
pub fn random_flake(rng: &mut impl Rng, cx: f64, cy: f64, rx: f64, ry: f64) -> Vec<Point> {
    let n = rng.random_range(12..=18);
    let points = (0..n)
        .map(|i| {
            let theta = std::f64::consts::TAU * (i as f64 + rng.random_range(-0.3..0.3)) / n as f64;
            let r = rng.random_range(0.9..1.0);
            Point { x: cx + rx * r * theta.cos(), y: cy + ry * r * theta.sin() }
        })
        .collect();
    convex_hull(points)
}

/// Pixels whose centres fall inside the convex polygon, as `(row, col)`
/// runs `(row, first_col, end_col)` clipped to the raster.
pub fn rasterize(polygon: &[Point], height: usize, width: usize) -> Vec<(usize, usize, usize)> {
    if polygon.len() < 3 {
        return Vec::new();
    }
    let ymin = polygon.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = polygon.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let first = (ymin - 0.5).ceil().max(0.0) as usize;
    let last = ((ymax - 0.5).floor().min(height as f64 - 1.0)).max(-1.0);
    let mut runs = Vec::new();
    if last < first as f64 {
        return runs;
    }
    for row in first..=last as usize {
        let y = row as f64 + 0.5;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, &a) in polygon.iter().enumerate() {
            let b = polygon[(i + 1) % polygon.len()];
            if (a.y <= y && b.y >= y) || (b.y <= y && a.y >= y) {
                let x = if a.y == b.y {
                    lo = lo.min(a.x.min(b.x));
                    a.x.max(b.x)
                } else {
                    a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y)
                };
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            continue;
        }
        let c0 = (lo - 0.5).ceil().max(0.0) as usize;
        let c1 = ((hi - 0.5).floor() + 1.0).clamp(0.0, width as f64) as usize;
        if c0 < c1 {
            runs.push((row, c0, c1));
        }
    }
    runs
}
