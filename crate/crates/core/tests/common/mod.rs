//! Test oracles shared by the integration tests.

#![allow(dead_code)]

/// Smallest circle enclosing the points, by Welzl's move-to-front recursion
/// over a fixed order. Returns `(cx, cy, radius)`.
pub fn min_enclosing_circle(points: &[[f64; 2]]) -> (f64, f64, f64) {
    let mut pts = points.to_vec();
    let mut c = (0.0, 0.0, -1.0);
    for i in 0..pts.len() {
        if inside(c, pts[i]) {
            continue;
        }
        c = (pts[i][0], pts[i][1], 0.0);
        for j in 0..i {
            if inside(c, pts[j]) {
                continue;
            }
            c = from_two(pts[i], pts[j]);
            for k in 0..j {
                if !inside(c, pts[k]) {
                    c = from_three(pts[i], pts[j], pts[k]);
                }
            }
        }
    }
    pts.clear();
    c
}

fn inside(c: (f64, f64, f64), p: [f64; 2]) -> bool {
    c.2 >= 0.0 && ((p[0] - c.0).powi(2) + (p[1] - c.1).powi(2)).sqrt() <= c.2 * (1.0 + 1e-12) + 1e-12
}

fn from_two(a: [f64; 2], b: [f64; 2]) -> (f64, f64, f64) {
    let cx = 0.5 * (a[0] + b[0]);
    let cy = 0.5 * (a[1] + b[1]);
    (cx, cy, ((a[0] - cx).powi(2) + (a[1] - cy).powi(2)).sqrt())
}

fn from_three(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> (f64, f64, f64) {
    let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    if d.abs() < 1e-14 {
        // collinear: the widest pair
        let cands = [from_two(a, b), from_two(a, c), from_two(b, c)];
        return cands.into_iter().fold((0.0, 0.0, -1.0), |m, x| if x.2 > m.2 { x } else { m });
    }
    let sq = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
    let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / d;
    let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / d;
    (ux, uy, ((a[0] - ux).powi(2) + (a[1] - uy).powi(2)).sqrt())
}

/// Points that determine the minimal enclosing circle: those on its boundary.
pub fn boundary_points(points: &[[f64; 2]]) -> Vec<usize> {
    let (cx, cy, r) = min_enclosing_circle(points);
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| (((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt() - r).abs() < 1e-7 * (1.0 + r))
        .map(|(i, _)| i)
        .collect()
}
