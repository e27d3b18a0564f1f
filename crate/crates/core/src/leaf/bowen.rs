use rayon::prelude::*;

use super::{ChartKind, LeafChart, LIFT_BUDGET};
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::numeric::CubicHermite;

/// Cap on grid cells times depth for sampled push-forwards.
const GRID_BUDGET: usize = 20_000_000;
const MIN_CELLS: usize = 2048;
/// Target phase advance of the fastest mode per grid cell.
const PHASE_PER_CELL: f64 = 0.05;

const GAUSS_NODES: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];

#[derive(Debug, Clone)]
enum Levels {
    /// `C_j(s) = rate^j s`
    Linear { rate: f64 },
    /// `C_j` tabulated with exact derivatives.
    Sampled { coords: Vec<CubicHermite> },
}

/// Bowen metric `d^u_n` on one chart, precomputed for every `n <= depth`.
///
/// Level `j` carries the leaf coordinate `C_j`: arclength of `f^j` of the
/// chart measured from the center, so that
/// `d^u_n(s, t) = max_{j < n} |C_j(t) - C_j(s)|`.
/// The evaluator is immutable after construction.
#[derive(Debug, Clone)]
pub struct BowenDistanceEvaluator {
    chart: LeafChart,
    depth: usize,
    levels: Levels,
    lengths: Vec<f64>,
}

impl BowenDistanceEvaluator {
    pub fn new(sys: &SystemSpec, chart: &LeafChart, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::InvalidArgument("Bowen depth must be >= 1".into()));
        }
        let delta = chart.radius();
        let lam = sys.expansion_rate();
        let estimate = 2.0 * delta * lam.powi(depth as i32 - 1);
        if estimate > LIFT_BUDGET {
            return Err(Error::Depth {
                length: estimate,
                budget: LIFT_BUDGET,
            });
        }
        let levels = match (sys, chart.kind()) {
            (SystemSpec::Linear(_), ChartKind::ExactLinear) => Levels::Linear { rate: lam },
            (SystemSpec::Perturbed(p), ChartKind::GraphTransform) => {
                let freq = if p.magnitude() == 0.0 {
                    0.0
                } else {
                    p.perturbation().max_wave_norm()
                };
                sampled_levels(sys, chart, depth, freq)?
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "chart kind does not match the system".into(),
                ))
            }
        };
        let lengths: Vec<f64> = (0..depth)
            .map(|j| level_value(&levels, j, delta) - level_value(&levels, j, -delta))
            .collect();
        if let Some(&len) = lengths.last() {
            if len > LIFT_BUDGET {
                return Err(Error::Depth {
                    length: len,
                    budget: LIFT_BUDGET,
                });
            }
        }
        Ok(Self {
            chart: chart.clone(),
            depth,
            levels,
            lengths,
        })
    }

    pub fn chart(&self) -> &LeafChart {
        &self.chart
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.levels, Levels::Linear { .. })
    }

    /// Leaf expansion rate of an exact linear chart.
    pub fn linear_rate(&self) -> Option<f64> {
        match self.levels {
            Levels::Linear { rate } => Some(rate),
            _ => None,
        }
    }

    /// Length of `f^j(W^u(x, delta))`.
    pub fn pushed_length(&self, j: usize) -> f64 {
        self.lengths[j]
    }

    /// Length of the most expanded level.
    pub fn max_pushed_length(&self) -> f64 {
        self.lengths[self.depth - 1]
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j >= self.depth {
            return Err(Error::InvalidArgument(format!(
                "level {j} beyond evaluator depth {}",
                self.depth
            )));
        }
        Ok(())
    }

    fn check_param(&self, s: f64) -> Result<()> {
        if self.chart.contains_param(s) {
            Ok(())
        } else {
            Err(Error::ParameterOutOfRange {
                value: s,
                radius: self.chart.radius(),
            })
        }
    }

    /// `C_j(s)`.
    pub fn leaf_coordinate(&self, j: usize, s: f64) -> Result<f64> {
        self.check_level(j)?;
        self.check_param(s)?;
        Ok(level_value(&self.levels, j, s))
    }

    /// `C_0(s), ..., C_{n-1}(s)`.
    pub fn coordinates(&self, n: usize, s: f64) -> Result<Vec<f64>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        self.check_level(n - 1)?;
        self.check_param(s)?;
        Ok((0..n).map(|j| level_value(&self.levels, j, s)).collect())
    }

    /// `d^u_n(s, t)`.
    pub fn bowen_distance(&self, n: usize, s: f64, t: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidArgument("Bowen distance needs n >= 1".into()));
        }
        self.check_level(n - 1)?;
        self.check_param(s)?;
        self.check_param(t)?;
        Ok(match &self.levels {
            Levels::Linear { rate } => rate.powi(n as i32 - 1) * (t - s).abs(),
            Levels::Sampled { coords } => coords[..n]
                .iter()
                .map(|c| (c.eval(t) - c.eval(s)).abs())
                .fold(0.0, f64::max),
        })
    }
}

fn level_value(levels: &Levels, j: usize, s: f64) -> f64 {
    match levels {
        Levels::Linear { rate } => rate.powi(j as i32) * s,
        Levels::Sampled { coords } => coords[j].eval(s),
    }
}

/// Tangent speeds `|D f^j gamma'(s)|` for `j < depth`.
fn speeds(sys: &SystemSpec, chart: &LeafChart, s: f64, depth: usize) -> Vec<f64> {
    let mut p = chart.lift_point(s);
    let mut v = chart.tangent(s);
    let mut np = vec![0.0; p.len()];
    let mut nv = vec![0.0; v.len()];
    let mut out = Vec::with_capacity(depth);
    for j in 0..depth {
        out.push(super::norm(&v));
        if j + 1 < depth {
            sys.push_vector(&p, &v, &mut nv);
            sys.lift_map_into(&p, &mut np);
            std::mem::swap(&mut p, &mut np);
            std::mem::swap(&mut v, &mut nv);
        }
    }
    out
}

fn sampled_levels(sys: &SystemSpec, chart: &LeafChart, depth: usize, freq: f64) -> Result<Levels> {
    let delta = chart.radius();
    let span = 2.0 * delta;
    let lam = sys.expansion_rate() * 1.1;
    let scale = std::f64::consts::TAU * freq * lam.powi(depth as i32 - 1);
    let by_phase = if scale > 0.0 {
        (span * scale / PHASE_PER_CELL).ceil() as usize
    } else {
        0
    };
    let cells = by_phase.max(MIN_CELLS);
    if cells.saturating_mul(depth) > GRID_BUDGET {
        return Err(Error::Depth {
            length: span * lam.powi(depth as i32 - 1),
            budget: LIFT_BUDGET,
        });
    }
    let h = span / cells as f64;
    let grid: Vec<f64> = (0..=cells)
        .map(|i| if i == cells { delta } else { -delta + h * i as f64 })
        .collect();

    let node_speeds: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|&s| speeds(sys, chart, s, depth))
        .collect();
    let cell_integrals: Vec<Vec<f64>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (grid[i], grid[i + 1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            let mut acc = vec![0.0; depth];
            for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let sp = speeds(sys, chart, mid + half * x, depth);
                for j in 0..depth {
                    acc[j] += w * half * sp[j];
                }
            }
            acc
        })
        .collect();

    let mut coords = Vec::with_capacity(depth);
    for j in 0..depth {
        let mut values = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        values.push(0.0);
        for cell in &cell_integrals {
            if !(cell[j] > 0.0) {
                return Err(Error::UnsupportedStructure(format!(
                    "leaf coordinate at level {j} is not increasing"
                )));
            }
            acc += cell[j];
            values.push(acc);
        }
        let ds: Vec<f64> = node_speeds.iter().map(|sp| sp[j]).collect();
        let interp = CubicHermite::with_derivatives(grid.clone(), values, ds);
        let origin = interp.eval(0.0);
        let values: Vec<f64> = interp.ys().iter().map(|v| v - origin).collect();
        let ds: Vec<f64> = node_speeds.iter().map(|sp| sp[j]).collect();
        coords.push(CubicHermite::with_derivatives(grid.clone(), values, ds));
    }
    Ok(Levels::Sampled { coords })
}
