//! Minimal SVG writer for particle paths over level lines of the potential.

use std::fmt::Write as _;

use nalgebra::DMatrix;

const SIZE: f64 = 600.0;
const GRID: usize = 80;
const LEVELS: usize = 10;
const MAX_PATHS: usize = 100;

struct Frame {
    x0: f64,
    y0: f64,
    scale_x: f64,
    scale_y: f64,
}

impl Frame {
    fn fit(snapshots: &[DMatrix<f64>]) -> Frame {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for s in snapshots {
            for row in s.row_iter() {
                for k in 0..2.min(row.len()) {
                    if row[k].is_finite() {
                        lo[k] = lo[k].min(row[k]);
                        hi[k] = hi[k].max(row[k]);
                    }
                }
            }
        }
        for k in 0..2 {
            if !lo[k].is_finite() {
                (lo[k], hi[k]) = (-1.0, 1.0);
            }
            let pad = 0.1 * (hi[k] - lo[k]).max(1e-9);
            lo[k] -= pad;
            hi[k] += pad;
        }
        Frame {
            x0: lo[0],
            y0: lo[1],
            scale_x: SIZE / (hi[0] - lo[0]),
            scale_y: SIZE / (hi[1] - lo[1]),
        }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) * self.scale_x, SIZE - (y - self.y0) * self.scale_y)
    }

    fn world(&self, i: usize, j: usize) -> (f64, f64) {
        let step = SIZE / GRID as f64;
        (
            self.x0 + i as f64 * step / self.scale_x,
            self.y0 + j as f64 * step / self.scale_y,
        )
    }
}

fn coord(m: &DMatrix<f64>, i: usize) -> (f64, f64) {
    (m[(i, 0)], if m.ncols() > 1 { m[(i, 1)] } else { 0.0 })
}

/// Renders the first two coordinates of the recorded `snapshots`. Level lines
/// of `potential` are drawn when it is given (two-dimensional targets).
pub fn render(snapshots: &[DMatrix<f64>], potential: Option<&dyn Fn(f64, f64) -> f64>) -> String {
    let frame = Frame::fit(snapshots);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(f) = potential {
        level_lines(&mut out, &frame, f);
    }
    let (Some(first), Some(last)) = (snapshots.first(), snapshots.last()) else {
        out.push_str("</svg>\n");
        return out;
    };
    for p in 0..first.nrows().min(MAX_PATHS) {
        let mut points = String::new();
        for s in snapshots {
            let (x, y) = coord(s, p);
            if x.is_finite() && y.is_finite() {
                let (u, v) = frame.px(x, y);
                let _ = write!(points, "{u:.2},{v:.2} ");
            }
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="gray" stroke-width="0.6"/>"#,
            points.trim_end()
        );
    }
    for i in 0..first.nrows() {
        let (x, y) = coord(first, i);
        let (u, v) = frame.px(x, y);
        let _ = writeln!(out, r#"<circle cx="{u:.2}" cy="{v:.2}" r="2.5" fill="blue"/>"#);
    }
    for i in 0..last.nrows() {
        let (x, y) = coord(last, i);
        if x.is_finite() && y.is_finite() {
            let (u, v) = frame.px(x, y);
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="5" height="5" fill="red"/>"#,
                u - 2.5,
                v - 2.5
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Marching squares on a `GRID × GRID` lattice, levels at quantiles of the
/// lower half of the grid values.
fn level_lines(out: &mut String, frame: &Frame, f: &dyn Fn(f64, f64) -> f64) {
    let n = GRID + 1;
    let values: Vec<f64> = (0..n * n)
        .map(|k| {
            let (x, y) = frame.world(k % n, k / n);
            f(x, y)
        })
        .collect();
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return;
    }
    sorted.sort_by(f64::total_cmp);
    let at = |i: usize, j: usize| values[j * n + i];
    let step = SIZE / GRID as f64;
    let mut path = String::new();
    for l in 1..=LEVELS {
        let level = sorted[(sorted.len() / 2) * l / (LEVELS + 1)];
        for j in 0..GRID {
            for i in 0..GRID {
                let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
                let mut crossings = Vec::with_capacity(4);
                for e in 0..4 {
                    let (a, b) = (corners[e], corners[(e + 1) % 4]);
                    let (va, vb) = (at(a.0, a.1), at(b.0, b.1));
                    if (va < level) != (vb < level) && va.is_finite() && vb.is_finite() {
                        let t = (level - va) / (vb - va);
                        let x = (a.0 as f64 + t * (b.0 as f64 - a.0 as f64)) * step;
                        let y = (a.1 as f64 + t * (b.1 as f64 - a.1 as f64)) * step;
                        crossings.push((x, SIZE - y));
                    }
                }
                for pair in crossings.chunks_exact(2) {
                    let _ = write!(
                        path,
                        "M{:.2},{:.2}L{:.2},{:.2}",
                        pair[0].0, pair[0].1, pair[1].0, pair[1].1
                    );
                }
            }
        }
    }
    let _ = writeln!(
        out,
        r##"<path d="{path}" fill="none" stroke="#9ab" stroke-width="0.8"/>"##
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers_for_initial_and_final_particles() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.1]);
        let f = |x: f64, y: f64| x * x + y * y;
        let svg = render(&[a, b], Some(&f));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("<path d=\"M"));
    }
}
