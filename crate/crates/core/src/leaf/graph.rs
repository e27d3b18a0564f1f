use nalgebra::DMatrix;

use super::{LeafChart, LeafGraph, GRAPH_NODES};
use crate::dynamics::{reduce_coord, PerturbedSystem};
#[cfg(test)]
use crate::dynamics::TorusPoint;
use crate::error::{Error, Result};
use crate::numeric::CubicHermite;

const STALL_TOLERANCE: f64 = 1e-13;
const STALL_AFTER: usize = 5;
/// Stages compared when deciding that the residual has stalled; single
/// stages may increase since the error decays with oscillation.
const STALL_WINDOW: usize = 3;

/// Coordinates adapted to the linear splitting `E^u (+) E^c (+) E^s`.
struct Frame {
    direction: Vec<f64>,
    complement: Vec<Vec<f64>>,
    inverse: DMatrix<f64>,
}

impl Frame {
    fn new(sys: &PerturbedSystem) -> Result<Self> {
        let base = sys.base();
        let direction = base
            .unstable_direction()
            .ok_or_else(|| Error::InvalidSystem("no unstable direction".into()))?
            .to_vec();
        let complement: Vec<Vec<f64>> = base
            .stable()
            .basis
            .iter()
            .chain(&base.center().basis)
            .cloned()
            .collect();
        let d = direction.len();
        let mut b = DMatrix::zeros(d, d);
        for i in 0..d {
            b[(i, 0)] = direction[i];
            for (k, w) in complement.iter().enumerate() {
                b[(i, k + 1)] = w[i];
            }
        }
        let inverse = b
            .try_inverse()
            .ok_or_else(|| Error::InvalidSystem("degenerate splitting".into()))?;
        Ok(Self {
            direction,
            complement,
            inverse,
        })
    }

    fn point(&self, base: &[f64], s: f64, h: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = base
            .iter()
            .zip(&self.direction)
            .map(|(b, v)| b + s * v)
            .collect();
        for (hk, w) in h.iter().zip(&self.complement) {
            for (pi, wi) in p.iter_mut().zip(w) {
                *pi += hk * wi;
            }
        }
        p
    }

    fn coordinates(&self, r: &[f64]) -> Vec<f64> {
        let d = r.len();
        (0..d)
            .map(|i| (0..d).map(|j| self.inverse[(i, j)] * r[j]).sum())
            .collect()
    }
}

/// Image of the graph `values` over `nodes` based at `src` under `F`,
/// re-expressed as a graph over the same nodes based at `dst`.
fn push_graph(
    sys: &PerturbedSystem,
    frame: &Frame,
    src: &[f64],
    dst: &[f64],
    nodes: &[f64],
    values: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let d = src.len();
    let c = frame.complement.len();
    let mut sigma = Vec::with_capacity(nodes.len());
    let mut eta = vec![Vec::with_capacity(nodes.len()); c];
    let mut image = vec![0.0; d];
    // src and dst are reduced; F(src) and dst differ by an integer vector
    sys.lift_map_into(src, &mut image);
    let shift: Vec<f64> = image.iter().zip(dst).map(|(a, b)| (a - b).round()).collect();
    let mut h = vec![0.0; c];
    for (i, &s) in nodes.iter().enumerate() {
        for k in 0..c {
            h[k] = values[k][i];
        }
        let q = frame.point(src, s, &h);
        sys.lift_map_into(&q, &mut image);
        let r: Vec<f64> = (0..d).map(|i| image[i] - dst[i] - shift[i]).collect();
        let coords = frame.coordinates(&r);
        sigma.push(coords[0]);
        for k in 0..c {
            eta[k].push(coords[k + 1]);
        }
    }
    if sigma.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NoConvergence("pushed graph folds over the unstable direction".into()));
    }
    let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
    if sigma[0] > lo || sigma[sigma.len() - 1] < hi {
        return Err(Error::NoConvergence("pushed graph does not cover the chart".into()));
    }
    let out = eta
        .into_iter()
        .map(|e| {
            let interp = CubicHermite::new(sigma.clone(), e);
            let offset = interp.eval(0.0);
            nodes.iter().map(|&s| interp.eval(s) - offset).collect()
        })
        .collect();
    Ok(out)
}

/// Refines `chart` (a chart centered at `x`) by the graph transform: the
/// graph is pulled back `k` steps along the backward orbit of `x` and pushed
/// forward `k` times, for `k = 1..=iterations`. The residual is the sup
/// difference between the last two stages. Fails with `NoConvergence` above
/// the cone threshold, when the graph folds, or when the residual exceeds
/// every residual of a recent window of stages before reaching round-off.
pub fn graph_transform_refine(
    sys: &PerturbedSystem,
    chart: &LeafChart,
    iterations: usize,
) -> Result<LeafChart> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("graph transform needs at least one iteration".into()));
    }
    if !sys.below_threshold() {
        return Err(Error::NoConvergence(format!(
            "magnitude {} is above the cone threshold {}",
            sys.magnitude(),
            sys.threshold()
        )));
    }
    let frame = Frame::new(sys)?;
    let delta = chart.radius();
    let center = chart.center().clone();
    let nodes = LeafGraph::chebyshev_nodes(delta);
    if sys.magnitude() == 0.0 {
        let graph = LeafGraph::zero(delta, frame.complement.clone());
        return Ok(LeafChart::with_graph(center, delta, frame.direction, graph));
    }

    let initial: Vec<Vec<f64>> = match chart.graph() {
        Some(g) if g.nodes == nodes && g.complement == frame.complement => g.values.clone(),
        _ => vec![vec![0.0; GRAPH_NODES]; frame.complement.len()],
    };

    // backward orbit, reduced: orbit[k] = f^{-k}(x)
    let mut orbit = vec![center.coords().to_vec()];
    for k in 0..iterations {
        let prev = sys.lift_inverse(&orbit[k])?;
        orbit.push(prev.into_iter().map(reduce_coord).collect());
    }

    let mut history = Vec::with_capacity(iterations);
    let mut previous = initial.clone();
    for k in 1..=iterations {
        let mut values = initial.clone();
        for step in (1..=k).rev() {
            values = push_graph(sys, &frame, &orbit[step], &orbit[step - 1], &nodes, &values)?;
        }
        let residual = values
            .iter()
            .zip(&previous)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        if !residual.is_finite() {
            return Err(Error::NoConvergence("graph transform produced non-finite values".into()));
        }
        if k > STALL_AFTER && residual > STALL_TOLERANCE {
            let recent = history[k - 1 - STALL_WINDOW..].iter().copied().fold(0.0, f64::max);
            if residual >= recent {
                return Err(Error::NoConvergence(format!(
                    "graph transform residual stalled at {residual:e}"
                )));
            }
        }
        history.push(residual);
        previous = values;
    }
    let residual = *history.last().unwrap();
    let graph = LeafGraph::new(nodes, previous, frame.complement.clone(), residual, history);
    Ok(LeafChart::with_graph(center, delta, frame.direction, graph))
}

/// Chart through `x` for a perturbed system, refined from the linear chart.
#[cfg(test)]
pub(crate) fn perturbed_chart(
    sys: &PerturbedSystem,
    x: &TorusPoint,
    delta: f64,
    iterations: usize,
) -> Result<LeafChart> {
    let direction = sys
        .base()
        .unstable_direction()
        .ok_or_else(|| Error::InvalidSystem("no unstable direction".into()))?
        .to_vec();
    graph_transform_refine(sys, &LeafChart::exact_linear(x.clone(), delta, direction), iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SystemSpec, TrigPerturbation, TrigTerm};
    use crate::leaf::{build_leaf_chart, ChartKind};

    fn perturbed(m: f64) -> PerturbedSystem {
        let base = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let pert = TrigPerturbation::new(vec![
            TrigTerm { component: 0, wave: vec![0, 0, 1], cos: 0.0, sin: 1.0 },
            TrigTerm { component: 2, wave: vec![1, 0, 0], cos: 0.0, sin: 1.0 },
        ]);
        PerturbedSystem::new_unchecked(base.linear_part().clone(), pert, m).unwrap()
    }

    #[test]
    fn residual_decreases_and_converges() {
        let sys = perturbed(0.01);
        let x = TorusPoint::new(vec![0.3, 0.1, 0.8]);
        let chart = perturbed_chart(&sys, &x, 0.1, 30).unwrap();
        assert_eq!(chart.kind(), ChartKind::GraphTransform);
        assert!(chart.residual() <= 1e-8, "{}", chart.residual());
        let hist = &chart.graph().unwrap().residual_history;
        assert!(hist[4] < hist[0]);
        // least-squares decay rate of log residual over the pre-round-off part
        let pts: Vec<(f64, f64)> = hist
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > 1e-13)
            .map(|(k, r)| (k as f64, r.ln()))
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = (
            pts.iter().map(|p| p.0).sum::<f64>() / n,
            pts.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!(slope.exp() <= 0.5, "decay ratio {}", slope.exp());
    }

    #[test]
    fn chart_is_invariant_under_the_map() {
        // F maps W^u(x, delta) into W^u(F x, lambda delta + ...); a point of
        // the chart at x must land on the chart at F(x).
        let sys = perturbed(0.01);
        let spec: SystemSpec = sys.clone().into();
        let x = TorusPoint::new(vec![0.3, 0.1, 0.8]);
        let fx = spec.apply_map(&x);
        let small = perturbed_chart(&sys, &x, 0.03, 30).unwrap();
        let big = perturbed_chart(&sys, &fx, 0.2, 30).unwrap();
        for &s in &[-0.03, -0.01, 0.0, 0.02, 0.03] {
            let image = spec.lift_map(&small.lift_point(s));
            let frame = Frame::new(&sys).unwrap();
            let r: Vec<f64> = image.iter().zip(big.lift_point(0.0)).map(|(a, b)| a - b).collect();
            let r: Vec<f64> = r.iter().map(|v| v - v.round()).collect();
            let sigma = frame.coordinates(&r)[0];
            let on_big = big.lift_point(sigma);
            let gap = crate::dynamics::torus_distance(&image, &on_big);
            assert!(gap < 1e-9, "s={s} gap={gap}");
        }
    }

    #[test]
    fn above_threshold_is_refused() {
        let sys = perturbed(0.5);
        let x = TorusPoint::new(vec![0.3, 0.1, 0.8]);
        assert!(matches!(
            perturbed_chart(&sys, &x, 0.1, 10),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn zero_iterations_rejected() {
        let sys = perturbed(0.01);
        let x = TorusPoint::new(vec![0.3, 0.1, 0.8]);
        assert!(perturbed_chart(&sys, &x, 0.1, 0).is_err());
        let spec: SystemSpec = sys.into();
        assert!(build_leaf_chart(&spec, &x, 0.1).is_ok());
    }
}
