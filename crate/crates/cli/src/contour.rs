//! Zero-level contour of a sampled scalar field by marching squares.
//!
//! Crossings are located on grid edges whose endpoint signs differ, then
//! refined by a caller-supplied root finder and chained into polylines.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

/// Grid edge: `(i, j, horizontal)`. A horizontal edge joins `(i, j)` and
/// `(i + 1, j)`; a vertical one joins `(i, j)` and `(i, j + 1)`.
pub type Edge = (usize, usize, bool);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<P> {
    pub edge: Edge,
    pub point: P,
}

fn positive(v: f64) -> Option<bool> {
    v.is_finite().then_some(v > 0.0)
}

/// Segments of the zero contour, as pairs of crossed edges per cell.
///
/// `values[i][j]` sits at column `i`, row `j`. Cells with a missing corner
/// are skipped. Saddles are split by the sign of the corner mean.
pub fn cell_segments(values: &[Vec<f64>]) -> Vec<(Edge, Edge)> {
    let nx = values.len();
    let ny = values.first().map_or(0, |c| c.len());
    let mut out = Vec::new();
    for i in 0..nx.saturating_sub(1) {
        for j in 0..ny.saturating_sub(1) {
            let c = [
                values[i][j],
                values[i + 1][j],
                values[i + 1][j + 1],
                values[i][j + 1],
            ];
            let Some(s) = c
                .iter()
                .map(|v| positive(*v))
                .collect::<Option<Vec<bool>>>()
            else {
                continue;
            };
            let bottom = (i, j, true);
            let right = (i + 1, j, false);
            let top = (i, j + 1, true);
            let left = (i, j, false);
            let crossed: Vec<Edge> = [
                (bottom, s[0] != s[1]),
                (right, s[1] != s[2]),
                (top, s[2] != s[3]),
                (left, s[3] != s[0]),
            ]
            .into_iter()
            .filter_map(|(e, x)| x.then_some(e))
            .collect();
            match crossed.len() {
                2 => out.push((crossed[0], crossed[1])),
                4 => {
                    let centre = positive(c.iter().sum::<f64>() / 4.0).unwrap_or(false);
                    if centre == s[0] {
                        out.push((bottom, right));
                        out.push((top, left));
                    } else {
                        out.push((bottom, left));
                        out.push((top, right));
                    }
                }
                _ => {}
            }
        }
    }
    out
}

/// Chains segments into polylines of edges. Open chains come first, each
/// starting at a boundary end; closed chains repeat their first edge.
pub fn chain(segments: &[(Edge, Edge)]) -> Vec<Vec<Edge>> {
    let mut adj: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (k, (a, b)) in segments.iter().enumerate() {
        adj.entry(*a).or_default().push(k);
        adj.entry(*b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    let walk = |start: Edge, used: &mut Vec<bool>| -> Vec<Edge> {
        let mut line = vec![start];
        let mut at = start;
        while let Some(&k) = adj[&at].iter().find(|&&k| !used[k]) {
            used[k] = true;
            let (a, b) = segments[k];
            at = if a == at { b } else { a };
            line.push(at);
        }
        line
    };
    let ends: Vec<Edge> = adj
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(e, _)| *e)
        .collect();
    for e in ends {
        if adj[&e].iter().any(|&k| !used[k]) {
            lines.push(walk(e, &mut used));
        }
    }
    let starts: Vec<Edge> = adj.keys().copied().collect();
    for e in starts {
        if adj[&e].iter().any(|&k| !used[k]) {
            lines.push(walk(e, &mut used));
        }
    }
    lines
}

/// Contour polylines with every crossing refined once by `refine`.
pub fn zero_contour<P, F>(values: &[Vec<f64>], refine: F) -> Vec<Vec<Crossing<P>>>
where
    P: Clone + Send,
    F: Fn(Edge) -> P + Sync,
{
    let lines = chain(&cell_segments(values));
    let edges: BTreeSet<Edge> = lines.iter().flatten().copied().collect();
    let edges: Vec<Edge> = edges.into_iter().collect();
    let points: Vec<P> = edges.par_iter().map(|e| refine(*e)).collect();
    let cache: BTreeMap<Edge, P> = edges.into_iter().zip(points).collect();
    lines
        .into_iter()
        .map(|l| {
            l.into_iter()
                .map(|edge| Crossing {
                    edge,
                    point: cache[&edge].clone(),
                })
                .collect()
        })
        .collect()
}

/// Root of `f` on `[lo, hi]` (signs differ at the ends) by the Illinois
/// variant of regula falsi; stops when `|f| ≤ ftol` or the bracket is
/// below `xtol`. Returns `(x, f(x))`.
pub fn bracket_root<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    mut flo: f64,
    mut fhi: f64,
    ftol: f64,
    xtol: f64,
) -> (f64, f64) {
    let mut best = if flo.abs() < fhi.abs() {
        (lo, flo)
    } else {
        (hi, fhi)
    };
    let mut side = 0i8;
    for _ in 0..100 {
        if best.1.abs() <= ftol || (hi - lo).abs() <= xtol {
            break;
        }
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        if !x.is_finite() || x <= lo.min(hi) || x >= lo.max(hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if !fx.is_finite() {
            break;
        }
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if (fx > 0.0) == (flo > 0.0) {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    best
}
