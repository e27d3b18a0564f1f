//! Local unstable disks `W^u(x, delta)`: charts, the leafwise metric, the
//! Bowen metric along the unstable leaf, and discretization of the disk.

mod bowen;
mod graph;

pub use bowen::BowenDistanceEvaluator;
pub use graph::graph_transform_refine;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{torus_distance, SystemSpec, TorusPoint};
use crate::error::{Error, Result};
use crate::numeric::{linspace, CubicHermite};

/// Default leaf radius.
pub const DEFAULT_DELTA: f64 = 0.1;
/// Radii at or above this are refused: the chord of the disk must stay below
/// half the torus period so ambient distances are realized inside the lift.
pub const INJECTIVITY_CAP: f64 = 0.25;
/// Longest pushed-forward leaf (in leaf units) the evaluators will track.
pub const LIFT_BUDGET: f64 = 1e4;
/// Parameters closer than this are treated as equal.
pub const PARAM_TOLERANCE: f64 = 1e-12;
/// Number of graph nodes of a graph-transform chart.
pub const GRAPH_NODES: usize = 257;
/// Default number of graph-transform iterations.
pub const DEFAULT_GRAPH_ITERATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    ExactLinear,
    GraphTransform,
}

/// Graph of a leaf over the linear unstable direction:
/// `s -> center + s v + sum_k h_k(s) w_k`.
#[derive(Debug, Clone, Serialize)]
pub struct LeafGraph {
    pub nodes: Vec<f64>,
    /// `values[k][i] = h_k(nodes[i])`
    pub values: Vec<Vec<f64>>,
    pub complement: Vec<Vec<f64>>,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    #[serde(skip)]
    interpolants: Vec<CubicHermite>,
}

impl LeafGraph {
    pub(crate) fn new(
        nodes: Vec<f64>,
        values: Vec<Vec<f64>>,
        complement: Vec<Vec<f64>>,
        residual: f64,
        residual_history: Vec<f64>,
    ) -> Self {
        let interpolants = values
            .iter()
            .map(|v| CubicHermite::new(nodes.clone(), v.clone()))
            .collect();
        Self {
            nodes,
            values,
            complement,
            residual,
            residual_history,
            interpolants,
        }
    }

    /// Chebyshev-like nodes `-delta cos(pi i / (N - 1))`.
    pub(crate) fn chebyshev_nodes(delta: f64) -> Vec<f64> {
        let n = GRAPH_NODES;
        let mut nodes: Vec<f64> = (0..n)
            .map(|i| -delta * (std::f64::consts::PI * i as f64 / (n - 1) as f64).cos())
            .collect();
        nodes[0] = -delta;
        nodes[n - 1] = delta;
        nodes[(n - 1) / 2] = 0.0;
        nodes
    }

    pub(crate) fn zero(delta: f64, complement: Vec<Vec<f64>>) -> Self {
        let nodes = Self::chebyshev_nodes(delta);
        let values = vec![vec![0.0; nodes.len()]; complement.len()];
        Self::new(nodes, values, complement, 0.0, vec![0.0])
    }

    fn eval(&self, s: f64) -> Vec<(f64, f64)> {
        self.interpolants
            .iter()
            .map(|h| h.eval_with_derivative(s))
            .collect()
    }
}

/// Chart of a local unstable disk, parameterized over `[-delta, delta]`.
#[derive(Debug, Clone, Serialize)]
pub struct LeafChart {
    center: TorusPoint,
    radius: f64,
    /// Unit tangent of the leaf at the center.
    frame: Vec<f64>,
    /// Linear unstable direction the chart is a graph over.
    direction: Vec<f64>,
    kind: ChartKind,
    graph: Option<LeafGraph>,
}

impl LeafChart {
    pub(crate) fn exact_linear(center: TorusPoint, radius: f64, direction: Vec<f64>) -> Self {
        Self {
            center,
            radius,
            frame: direction.clone(),
            direction,
            kind: ChartKind::ExactLinear,
            graph: None,
        }
    }

    pub(crate) fn with_graph(
        center: TorusPoint,
        radius: f64,
        direction: Vec<f64>,
        graph: LeafGraph,
    ) -> Self {
        let mut chart = Self {
            center,
            radius,
            frame: direction.clone(),
            direction,
            kind: ChartKind::GraphTransform,
            graph: Some(graph),
        };
        let t = chart.tangent(0.0);
        let n = norm(&t);
        chart.frame = t.iter().map(|x| x / n).collect();
        chart
    }

    pub fn center(&self) -> &TorusPoint {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn frame(&self) -> &[f64] {
        &self.frame
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn graph(&self) -> Option<&LeafGraph> {
        self.graph.as_ref()
    }

    /// Convergence residual of the graph transform (0 for exact charts).
    pub fn residual(&self) -> f64 {
        self.graph.as_ref().map_or(0.0, |g| g.residual)
    }

    pub fn contains_param(&self, s: f64) -> bool {
        s.abs() <= self.radius + PARAM_TOLERANCE
    }

    fn check_param(&self, s: f64) -> Result<()> {
        if self.contains_param(s) {
            Ok(())
        } else {
            Err(Error::ParameterOutOfRange {
                value: s,
                radius: self.radius,
            })
        }
    }

    /// Chart point on the universal cover (no range check).
    pub fn lift_point(&self, s: f64) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .center
            .coords()
            .iter()
            .zip(&self.direction)
            .map(|(c, v)| c + s * v)
            .collect();
        if let Some(g) = &self.graph {
            for ((h, _), w) in g.eval(s).into_iter().zip(&g.complement) {
                for (pi, wi) in p.iter_mut().zip(w) {
                    *pi += h * wi;
                }
            }
        }
        p
    }

    /// Derivative of the chart map at `s`.
    pub fn tangent(&self, s: f64) -> Vec<f64> {
        let mut t = self.direction.clone();
        if let Some(g) = &self.graph {
            for ((_, dh), w) in g.eval(s).into_iter().zip(&g.complement) {
                for (ti, wi) in t.iter_mut().zip(w) {
                    *ti += dh * wi;
                }
            }
        }
        t
    }

    /// The chart map `s -> point`, reduced mod 1.
    pub fn param_to_point(&self, s: f64) -> Result<TorusPoint> {
        self.check_param(s)?;
        Ok(TorusPoint::new(self.lift_point(s)))
    }

    /// Leafwise arclength between the chart points at `s` and `t`.
    pub fn du_distance(&self, s: f64, t: f64) -> Result<f64> {
        self.check_param(s)?;
        self.check_param(t)?;
        Ok(self.arclength(s, t).abs())
    }

    /// Signed arclength from `s` to `t`; composite trapezoid at four times
    /// the graph-node density for graph charts.
    pub(crate) fn arclength(&self, s: f64, t: f64) -> f64 {
        match self.kind {
            ChartKind::ExactLinear => t - s,
            ChartKind::GraphTransform => {
                if s == t {
                    return 0.0;
                }
                let step = 2.0 * self.radius / (4.0 * (GRAPH_NODES - 1) as f64);
                let segments = ((t - s).abs() / step).ceil().max(1.0) as usize;
                let h = (t - s) / segments as f64;
                let speed = |x: f64| norm(&self.tangent(x));
                let mut acc = 0.5 * (speed(s) + speed(t));
                for i in 1..segments {
                    acc += speed(s + h * i as f64);
                }
                acc * h
            }
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Builds the chart of `W^u(x, delta)`: an exact segment for affine systems,
/// a graph-transform chart (with its convergence residual) for perturbed ones.
pub fn build_leaf_chart(sys: &SystemSpec, x: &TorusPoint, delta: f64) -> Result<LeafChart> {
    build_leaf_chart_with(sys, x, delta, DEFAULT_GRAPH_ITERATIONS)
}

/// [`build_leaf_chart`] with an explicit graph-transform iteration count.
pub fn build_leaf_chart_with(
    sys: &SystemSpec,
    x: &TorusPoint,
    delta: f64,
    iterations: usize,
) -> Result<LeafChart> {
    if !(delta > 0.0 && delta < INJECTIVITY_CAP) {
        return Err(Error::Radius {
            radius: delta,
            cap: INJECTIVITY_CAP,
        });
    }
    if x.dim() != sys.dim() {
        return Err(Error::DimensionMismatch(x.dim(), sys.dim()));
    }
    let direction = sys
        .linear_part()
        .unstable_direction()
        .ok_or_else(|| Error::InvalidSystem("no unstable direction".into()))?
        .to_vec();
    let linear = LeafChart::exact_linear(x.clone(), delta, direction);
    match sys {
        SystemSpec::Linear(_) => Ok(linear),
        SystemSpec::Perturbed(p) => graph_transform_refine(p, &linear, iterations),
    }
}

/// Equally spaced chart parameters with their torus points.
#[derive(Debug, Clone)]
pub struct LeafSample {
    params: Vec<f64>,
    points: Vec<TorusPoint>,
    resolution: f64,
}

impl LeafSample {
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Declared maximal gap between consecutive parameters.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }
}

/// `m` equally spaced parameters spanning `[-delta, delta]`, endpoints included.
pub fn sample_leaf(chart: &LeafChart, m: usize) -> Result<LeafSample> {
    if m < 2 {
        return Err(Error::InvalidArgument("leaf sample needs m >= 2".into()));
    }
    let delta = chart.radius();
    let params = linspace(-delta, delta, m);
    let points = params
        .iter()
        .map(|&s| TorusPoint::new(chart.lift_point(s)))
        .collect();
    Ok(LeafSample {
        params,
        points,
        resolution: 2.0 * delta / (m - 1) as f64,
    })
}

/// Sampled estimate of the comparability constant between leafwise and
/// ambient distance.
#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityReport {
    pub constant: f64,
    pub min_ratio: f64,
    /// `d <= d^u` held on every sampled pair.
    pub lower_bound_holds: bool,
    pub pairs: usize,
    pub seed: u64,
}

/// Max of `d^u / d` over random pairs of chart points.
pub fn estimate_comparability_constant(
    chart: &LeafChart,
    samples: usize,
    seed: u64,
) -> Result<ComparabilityReport> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let delta = chart.radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut constant: f64 = 1.0;
    let mut min_ratio = f64::INFINITY;
    let mut lower_ok = true;
    let mut pairs = 0;
    while pairs < samples {
        let s = rng.gen_range(-delta..=delta);
        let t = rng.gen_range(-delta..=delta);
        if (s - t).abs() < 1e-9 {
            continue;
        }
        let du = chart.du_distance(s, t)?;
        let d = torus_distance(&chart.lift_point(s), &chart.lift_point(t));
        let ratio = du / d;
        if d > du * (1.0 + 1e-9) {
            lower_ok = false;
        }
        constant = constant.max(ratio);
        min_ratio = min_ratio.min(ratio);
        pairs += 1;
    }
    Ok(ComparabilityReport {
        constant,
        min_ratio,
        lower_bound_holds: lower_ok,
        pairs,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{PerturbedSystem, TrigPerturbation, TrigTerm};

    fn lambda() -> f64 {
        (3.0 + 5f64.sqrt()) / 2.0
    }

    pub(crate) fn coupled(magnitude: f64) -> SystemSpec {
        let base = SystemSpec::cat_rotation(SystemSpec::golden_angle());
        let pert = TrigPerturbation::new(vec![
            TrigTerm { component: 0, wave: vec![0, 0, 1], cos: 0.0, sin: 1.0 },
            TrigTerm { component: 2, wave: vec![1, 0, 0], cos: 0.0, sin: 1.0 },
        ]);
        PerturbedSystem::new(base.linear_part().clone(), pert, magnitude)
            .unwrap()
            .into()
    }

    #[test]
    fn cat_chart_follows_unstable_eigenvector() {
        let cat = SystemSpec::cat_map();
        let x = TorusPoint::origin(2);
        let chart = build_leaf_chart(&cat, &x, 0.1).unwrap();
        assert_eq!(chart.kind(), ChartKind::ExactLinear);
        let v = chart.frame();
        assert!((v[0] / v[1] - (lambda() - 1.0)).abs() < 1e-12);
        assert!(chart.param_to_point(0.0).unwrap().approx_eq(&x));
        let p = chart.param_to_point(0.05).unwrap();
        assert!((p.distance(&x) - 0.05).abs() < 1e-14);
        assert!((chart.du_distance(0.0, 0.05).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn radius_is_validated() {
        let cat = SystemSpec::cat_map();
        let x = TorusPoint::origin(2);
        assert!(matches!(build_leaf_chart(&cat, &x, 0.0), Err(Error::Radius { .. })));
        assert!(matches!(build_leaf_chart(&cat, &x, 0.3), Err(Error::Radius { .. })));
    }

    #[test]
    fn du_distance_linear_examples() {
        let chart = build_leaf_chart(&SystemSpec::cat_map(), &TorusPoint::origin(2), 0.1).unwrap();
        assert!((chart.du_distance(-0.02, 0.03).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(chart.du_distance(0.04, 0.04).unwrap(), 0.0);
        assert!(matches!(
            chart.du_distance(0.0, 0.2),
            Err(Error::ParameterOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_magnitude_graph_chart_matches_linear() {
        let x = TorusPoint::new(vec![0.2, 0.4, 0.6]);
        let lin = build_leaf_chart(&SystemSpec::cat_rotation(SystemSpec::golden_angle()), &x, 0.1)
            .unwrap();
        let graph = build_leaf_chart(&coupled(0.0), &x, 0.1).unwrap();
        assert_eq!(graph.kind(), ChartKind::GraphTransform);
        assert_eq!(graph.residual(), 0.0);
        for s in linspace(-0.1, 0.1, 20) {
            let a = lin.param_to_point(s).unwrap();
            let b = graph.param_to_point(s).unwrap();
            assert!(a.distance(&b) < 1e-10);
        }
        let d = graph.du_distance(-0.07, 0.05).unwrap();
        assert!((d - 0.12).abs() < 1e-10);
    }

    #[test]
    fn sample_grid_examples() {
        let chart = build_leaf_chart(&SystemSpec::cat_map(), &TorusPoint::origin(2), 0.1).unwrap();
        let s = sample_leaf(&chart, 5).unwrap();
        let expected = [-0.1, -0.05, 0.0, 0.05, 0.1];
        for (a, b) in s.params().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(sample_leaf(&chart, 2).unwrap().params(), &[-0.1, 0.1]);
        let fine = sample_leaf(&chart, 101).unwrap();
        assert!((fine.resolution() - 0.002).abs() < 1e-15);
        assert!(fine.params().windows(2).all(|w| w[1] > w[0]));
        assert!(sample_leaf(&chart, 1).is_err());
    }

    #[test]
    fn comparability_on_straight_segment() {
        let chart = build_leaf_chart(&SystemSpec::cat_map(), &TorusPoint::origin(2), 0.1).unwrap();
        let r = estimate_comparability_constant(&chart, 10_000, 4).unwrap();
        assert!(r.lower_bound_holds);
        assert!(r.constant < 1.0 + 1e-9, "{r:?}");
    }

    #[test]
    fn comparability_on_perturbed_leaf() {
        let x = TorusPoint::new(vec![0.1, 0.3, 0.7]);
        let chart = build_leaf_chart(&coupled(0.01), &x, 0.1).unwrap();
        let r = estimate_comparability_constant(&chart, 2000, 5).unwrap();
        assert!(r.lower_bound_holds);
        assert!(r.constant >= 1.0 && r.constant <= 1.1, "{r:?}");
        let doubled = estimate_comparability_constant(&chart, 4000, 6).unwrap();
        assert!((doubled.constant - r.constant).abs() <= 0.05 * r.constant);
    }

    #[test]
    fn chart_serializes_to_json() {
        let x = TorusPoint::new(vec![0.1, 0.3, 0.7]);
        let chart = build_leaf_chart(&coupled(0.01), &x, 0.1).unwrap();
        let json = serde_json::to_value(&chart).unwrap();
        assert_eq!(json["kind"], "graph-transform");
        assert_eq!(json["graph"]["nodes"].as_array().unwrap().len(), GRAPH_NODES);
        assert!(json["graph"]["residual"].as_f64().unwrap() <= 1e-8);
    }
}
