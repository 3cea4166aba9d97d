//! Globally adaptive G7/K15 integration over a set of weighted 1D streams.
//!
//! Each stream is one direction of a polar decomposition; segments belong to a stream
//! and carry that stream's weight. Refinement bisects the largest-error segments in
//! rounds until the summed error meets `max(tol |V|, abs_tol, 64 eps A)`, where `V` is the
//! total value (plus a fixed offset) and `A` the integral of the absolute integrand.

use rayon::prelude::*;

use crate::gauss::{gk15_combine, gk15_nodes};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Segment {
    pub stream: usize,
    pub a: f64,
    pub b: f64,
    pub depth: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Settings {
    pub tol: f64,
    /// Absolute floor for the error target, for integrals that may vanish.
    pub abs_tol: f64,
    pub max_depth: u32,
    pub parallel: bool,
}

pub(crate) const MAX_SEGMENTS: usize = 1 << 21;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Outcome {
    pub value: f64,
    pub error: f64,
    /// Integral of the auxiliary component, carried along without driving refinement.
    pub aux: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    seg: Segment,
    value: f64,
    error: f64,
    abs: f64,
    aux: f64,
}

fn eval_panel<F>(f: &F, weights: &[f64], seg: Segment) -> Panel
where
    F: Fn(usize, f64) -> (f64, f64),
{
    let nodes = gk15_nodes(seg.a, seg.b);
    let mut main = [0.0; 15];
    let mut aux = [0.0; 15];
    for (i, &t) in nodes.iter().enumerate() {
        let (m, a) = f(seg.stream, t);
        main[i] = m;
        aux[i] = a;
    }
    let w = weights[seg.stream];
    let (value, error, abs) = gk15_combine(seg.a, seg.b, &main);
    let (aux_value, _, _) = gk15_combine(seg.a, seg.b, &aux);
    Panel {
        seg,
        value: w * value,
        error: w.abs() * error,
        abs: w.abs() * abs,
        aux: w * aux_value,
    }
}

fn eval_many<F>(f: &F, weights: &[f64], segs: &[Segment], parallel: bool) -> Vec<Panel>
where
    F: Fn(usize, f64) -> (f64, f64) + Sync,
{
    if parallel && segs.len() > 1 {
        segs.par_iter()
            .map(|s| eval_panel(f, weights, *s))
            .collect()
    } else {
        segs.iter().map(|s| eval_panel(f, weights, *s)).collect()
    }
}

pub(crate) fn integrate<F>(
    f: &F,
    weights: &[f64],
    initial: Vec<Segment>,
    offset: f64,
    settings: Settings,
) -> Outcome
where
    F: Fn(usize, f64) -> (f64, f64) + Sync,
{
    let mut panels = eval_many(f, weights, &initial, settings.parallel);
    let mut evaluations = 15 * panels.len();
    loop {
        let value: f64 = offset + panels.iter().map(|p| p.value).sum::<f64>();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        let abs: f64 = offset.abs() + panels.iter().map(|p| p.abs).sum::<f64>();
        let target = (settings.tol * value.abs())
            .max(settings.abs_tol)
            .max(64.0 * f64::EPSILON * abs);
        let done = |converged| Outcome {
            value: value - offset,
            error,
            aux: panels.iter().map(|p| p.aux).sum(),
            evaluations,
            converged,
        };
        if !error.is_finite() || !value.is_finite() {
            return done(false);
        }
        if error <= target {
            return done(true);
        }
        if panels.len() >= MAX_SEGMENTS {
            return done(false);
        }
        let mut order: Vec<usize> = (0..panels.len())
            .filter(|&i| panels[i].seg.depth < settings.max_depth && panels[i].error > 0.0)
            .collect();
        if order.is_empty() {
            return done(false);
        }
        order.sort_by(|&i, &j| panels[j].error.total_cmp(&panels[i].error));
        let mut remaining = error;
        let mut split = vec![false; panels.len()];
        let mut children = Vec::new();
        for &i in &order {
            if remaining <= 0.5 * target {
                break;
            }
            remaining -= panels[i].error;
            split[i] = true;
            let s = panels[i].seg;
            let mid = 0.5 * (s.a + s.b);
            children.push(Segment {
                b: mid,
                depth: s.depth + 1,
                ..s
            });
            children.push(Segment {
                a: mid,
                depth: s.depth + 1,
                ..s
            });
        }
        let fresh = eval_many(f, weights, &children, settings.parallel);
        evaluations += 15 * fresh.len();
        let mut keep = split.iter();
        panels.retain(|_| !*keep.next().unwrap());
        panels.extend(fresh);
    }
}

/// Sorted, de-duplicated breakpoints from `lo` to `hi`: a geometric ladder with ratio
/// `ratio` plus the given feature radii that fall strictly inside.
pub(crate) fn breakpoints(lo: f64, hi: f64, ratio: f64, features: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut r = lo * ratio;
    while r < hi {
        pts.push(r);
        r *= ratio;
    }
    pts.extend(features.iter().copied().filter(|&v| v > lo && v < hi));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-13 * a.abs().max(b.abs()));
    pts
}

pub(crate) fn segments_for(streams: usize, pts: &[f64]) -> Vec<Segment> {
    (0..streams)
        .flat_map(|stream| {
            pts.windows(2).map(move |w| Segment {
                stream,
                a: w[0],
                b: w[1],
                depth: 0,
            })
        })
        .collect()
}
