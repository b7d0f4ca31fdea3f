//! Serpentine scan-line coverage of a drawn polygon.

use super::{GeometryError, Result, Stroke2D};

const EDGE_EPS: f64 = 1e-9;

/// Covers a closed polygon with horizontal scan strokes `spacing` pixels
/// apart, alternating direction from one scan line to the next.
///
/// Scan lines sit at `ymin + k*spacing`; one more line is added at `ymax`
/// when the last regular line leaves more than half a spacing uncovered.
/// Each stroke is sampled at unit-pixel steps including both clip points.
pub fn area_to_strokes(polygon: &Stroke2D, spacing: f64) -> Result<Vec<Stroke2D>> {
    if !(spacing >= 1.0) || !spacing.is_finite() {
        return Err(GeometryError::InvalidInput(format!(
            "spacing must be >= 1 px, got {spacing}"
        )));
    }
    let mut verts = polygon.pixels.clone();
    if verts.len() > 1 && verts.first() == verts.last() {
        verts.pop();
    }
    if verts.len() < 3 {
        return Err(GeometryError::InvalidPolygon(
            "fewer than three vertices".into(),
        ));
    }
    if verts
        .iter()
        .any(|p| !(p[0].is_finite() && p[1].is_finite()))
    {
        return Err(GeometryError::InvalidPolygon("non-finite vertex".into()));
    }
    if all_collinear(&verts) {
        return Ok(Vec::new());
    }
    if !polygon_is_simple(&verts) {
        return Err(GeometryError::InvalidPolygon("edges intersect".into()));
    }
    if signed_area(&verts).abs() < 1e-12 {
        return Ok(Vec::new());
    }

    let ymin = verts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let ymax = verts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let count = ((ymax - ymin) / spacing + 1e-9).floor() as usize;
    let mut rows: Vec<f64> = (0..=count).map(|k| ymin + k as f64 * spacing).collect();
    if ymax - rows[count] > spacing / 2.0 + 1e-9 {
        rows.push(ymax);
    }

    let mut strokes = Vec::new();
    let mut forward = true;
    for y in rows {
        let mut spans = merge(
            crossings(&verts, y - EDGE_EPS)
                .into_iter()
                .chain(crossings(&verts, y + EDGE_EPS))
                .collect(),
        );
        spans.retain(|&(a, b)| b - a > 1e-6);
        if spans.is_empty() {
            continue;
        }
        if !forward {
            spans.reverse();
        }
        for (a, b) in spans {
            let (start, end) = if forward { (a, b) } else { (b, a) };
            strokes.push(sample_segment(start, end, y));
        }
        forward = !forward;
    }
    Ok(strokes)
}

fn sample_segment(x0: f64, x1: f64, y: f64) -> Stroke2D {
    let len = (x1 - x0).abs();
    let steps = len.ceil().max(1.0) as usize;
    let pixels = (0..=steps)
        .map(|i| [x0 + (x1 - x0) * i as f64 / steps as f64, y])
        .collect();
    Stroke2D::new(pixels)
}

/// Interior intervals of the horizontal line at `y` (half-open edge rule).
fn crossings(verts: &[[f64; 2]], y: f64) -> Vec<(f64, f64)> {
    let n = verts.len();
    let mut xs: Vec<f64> = (0..n)
        .filter_map(|i| {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            ((a[1] <= y) != (b[1] <= y)).then(|| a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]))
        })
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.chunks_exact(2).map(|c| (c[0], c[1])).collect()
}

fn merge(mut spans: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in spans {
        match out.last_mut() {
            Some(last) if a <= last.1 + 1e-6 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn all_collinear(verts: &[[f64; 2]]) -> bool {
    let a = verts[0];
    let Some(b) = verts.iter().copied().find(|&p| p != a) else {
        return true;
    };
    verts.iter().all(|&p| orient(a, b, p).abs() < 1e-12)
}

fn signed_area(verts: &[[f64; 2]]) -> f64 {
    let n = verts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (verts[i], verts[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// True when no two edges of the closed polygon meet except adjacent edges at
/// their shared vertex.
pub fn polygon_is_simple(verts: &[[f64; 2]]) -> bool {
    let n = verts.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (verts[i], verts[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // Adjacent edges may only share their common vertex; they fold
                // back onto each other when collinear and opposed.
                let (p, q, shared) = if j == i + 1 { (a, d, b) } else { (b, c, a) };
                let u = [p[0] - shared[0], p[1] - shared[1]];
                let w = [q[0] - shared[0], q[1] - shared[1]];
                let cross = u[0] * w[1] - u[1] * w[0];
                if cross.abs() < 1e-12 && u[0] * w[0] + u[1] * w[1] > 0.0 {
                    return false;
                }
                continue;
            }
            if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

fn segments_touch(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let (o1, o2, o3, o4) = (
        orient(a, b, c),
        orient(a, b, d),
        orient(c, d, a),
        orient(c, d, b),
    );
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(v: &[[f64; 2]]) -> Stroke2D {
        Stroke2D::new(v.to_vec())
    }

    #[test]
    fn square_gives_six_alternating_strokes() {
        let sq = poly(&[
            [0.0, 0.0],
            [10.0, 0.0],
            [10.0, 10.0],
            [0.0, 10.0],
            [0.0, 0.0],
        ]);
        let s = area_to_strokes(&sq, 2.0).unwrap();
        assert_eq!(s.len(), 6);
        for (k, st) in s.iter().enumerate() {
            let first = st.pixels[0];
            let last = *st.pixels.last().unwrap();
            assert_eq!(first[1], 2.0 * k as f64);
            assert_eq!(st.len(), 11);
            if k % 2 == 0 {
                assert!(first[0] < last[0]);
            } else {
                assert!(first[0] > last[0]);
            }
            assert!((first[0] - last[0]).abs() > 10.0 - 1e-6);
        }
    }

    #[test]
    fn zero_area_is_empty() {
        let flat = poly(&[[0.0, 0.0], [5.0, 0.0], [10.0, 0.0]]);
        assert!(area_to_strokes(&flat, 2.0).unwrap().is_empty());
    }

    #[test]
    fn bow_tie_is_rejected() {
        let bow = poly(&[[0.0, 0.0], [10.0, 10.0], [10.0, 0.0], [0.0, 10.0]]);
        assert!(matches!(
            area_to_strokes(&bow, 2.0),
            Err(GeometryError::InvalidPolygon(_))
        ));
        assert!(matches!(
            area_to_strokes(&bow, 0.5),
            Err(GeometryError::InvalidInput(_))
        ));
    }

    #[test]
    fn concave_polygon_splits_scan_lines() {
        // U shape: two prongs joined at the bottom
        let u = poly(&[
            [0.0, 0.0],
            [30.0, 0.0],
            [30.0, 20.0],
            [20.0, 20.0],
            [20.0, 8.0],
            [10.0, 8.0],
            [10.0, 20.0],
            [0.0, 20.0],
        ]);
        let s = area_to_strokes(&u, 4.0).unwrap();
        let at_16: Vec<_> = s.iter().filter(|st| st.pixels[0][1] == 16.0).collect();
        assert_eq!(at_16.len(), 2);
    }
}
