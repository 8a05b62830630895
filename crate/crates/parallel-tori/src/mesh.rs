//! The immersion X = Re ∫ Φ over a fundamental domain: grid integration,
//! lattice vectors, level sections and OBJ export.
//!
//! The default domain is the period parallelogram of the flat coordinate
//! u = ∫ dz/w. Along a grid edge (z, w) solves z' = w, w' = Q'(z)/2 (in the
//! reciprocal chart near z = ∞), which has no singularities at branch
//! points, and Φ = (½(1/g − g), i/2 (1/g + g), 1) φ du has poles only at ends.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{integrate_lifted, Chart, CurvePoint, LiftedCycle};
use crate::error::{Error, Result};
use crate::family::{FamilyAngles, StandardExample};
use crate::numerics::{c64, is_finite, QuadratureConfig, C64, I};
use crate::periods::{classify, Form, MarkedDatum, SphereValue};

pub const TRUNC_RADIUS: f64 = 0.05;
pub const MIN_RESOLUTION: usize = 8;
/// Integration leaves the standard chart when |z| exceeds this (and comes back symmetrically).
const SWITCH_RADIUS: f64 = 2.0;
const MAX_ODE_STEPS: usize = 200_000;
const MIN_ODE_STEP: f64 = 1e-12;

/// Bit flags in `SurfaceMesh::boundary_tags`.
pub mod tag {
    pub const LEFT: u8 = 1;
    pub const RIGHT: u8 = 2;
    pub const BOTTOM: u8 = 4;
    pub const TOP: u8 = 8;
    pub const END_RING: u8 = 16;
    /// A copy of a grid vertex translated by a multiple of H.
    pub const SEAM: u8 = 32;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridRegion {
    /// Vertex (i, j) sits at u = (i/n_u) ω₁ + (j/n_v) ω₂.
    FlatTorus,
    /// Vertex (i, j) sits at z = r_i e^{2πi j/n_v}, radii geometric from inner to outer.
    Annulus { inner: f64, outer: f64 },
}

/// Neighbour preference when choosing BFS parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeOrder {
    RowFirst,
    ColumnFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub region: GridRegion,
    pub n_u: usize,
    pub n_v: usize,
    pub trunc_radius: f64,
    pub tree: TreeOrder,
}

impl GridDomain {
    pub fn flat(n_u: usize, n_v: usize) -> Result<Self> {
        let d = GridDomain { region: GridRegion::FlatTorus, n_u, n_v, trunc_radius: TRUNC_RADIUS, tree: TreeOrder::RowFirst };
        d.validate()?;
        Ok(d)
    }

    pub fn annulus(inner: f64, outer: f64, n_r: usize, n_phi: usize) -> Result<Self> {
        let d = GridDomain {
            region: GridRegion::Annulus { inner, outer },
            n_u: n_r,
            n_v: n_phi,
            trunc_radius: TRUNC_RADIUS,
            tree: TreeOrder::RowFirst,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_trunc_radius(self, trunc_radius: f64) -> Result<Self> {
        let d = GridDomain { trunc_radius, ..self };
        d.validate()?;
        Ok(d)
    }

    pub fn with_tree(self, tree: TreeOrder) -> Self {
        GridDomain { tree, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u < MIN_RESOLUTION || self.n_v < MIN_RESOLUTION {
            return Err(Error::Invalid(format!(
                "resolution must be at least {MIN_RESOLUTION} in each direction, got {}x{}",
                self.n_u, self.n_v
            )));
        }
        if self.n_u.saturating_mul(self.n_v) > 16_000_000 {
            return Err(Error::Invalid("resolution too large".into()));
        }
        if !(self.trunc_radius > 0.0) || !self.trunc_radius.is_finite() {
            return Err(Error::Invalid(format!("trunc_radius must be positive, got {}", self.trunc_radius)));
        }
        if let GridRegion::Annulus { inner, outer } = self.region {
            if !(inner > 0.0 && outer > inner && outer.is_finite()) {
                return Err(Error::Invalid(format!("annulus radii must satisfy 0 < inner < outer, got {inner}, {outer}")));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        (self.n_u + 1) * (self.n_v + 1)
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.n_u + 1) + i
    }

    pub fn grid_position(&self, idx: usize) -> (usize, usize) {
        (idx % (self.n_u + 1), idx / (self.n_u + 1))
    }

    fn neighbours(&self, idx: usize) -> Vec<usize> {
        let (i, j) = self.grid_position(idx);
        let mut row = vec![];
        let mut col = vec![];
        if i < self.n_u {
            row.push(self.index(i + 1, j));
        }
        if i > 0 {
            row.push(self.index(i - 1, j));
        }
        if j < self.n_v {
            col.push(self.index(i, j + 1));
        }
        if j > 0 {
            col.push(self.index(i, j - 1));
        }
        match self.tree {
            TreeOrder::RowFirst => row.into_iter().chain(col).collect(),
            TreeOrder::ColumnFirst => col.into_iter().chain(row).collect(),
        }
    }

    /// The grid coordinate (u or z) of a vertex.
    fn coordinate(&self, idx: usize, omega: [C64; 2]) -> C64 {
        let (i, j) = self.grid_position(idx);
        let (s, t) = (i as f64 / self.n_u as f64, j as f64 / self.n_v as f64);
        match self.region {
            GridRegion::FlatTorus => omega[0] * s + omega[1] * t,
            GridRegion::Annulus { inner, outer } => {
                C64::from_polar(inner * (outer / inner).powf(s), 2.0 * PI * t)
            }
        }
    }

    /// Grid id with the periodic identifications applied.
    fn canonical(&self, idx: usize) -> usize {
        let (i, j) = self.grid_position(idx);
        let i = match self.region {
            GridRegion::FlatTorus => i % self.n_u,
            GridRegion::Annulus { .. } => i,
        };
        self.index(i, j % self.n_v)
    }
}

/// A datum together with a transverse cycle (nonzero height period) and the base point.
#[derive(Debug, Clone)]
pub struct ImmersionInput {
    pub datum: MarkedDatum,
    pub transverse: LiftedCycle,
    pub base: CurvePoint,
}

impl ImmersionInput {
    /// The rotated standard example, marked by γ₂, transverse cycle γ₁, base (0, +1).
    pub fn from_example(ex: &StandardExample, cfg: &QuadratureConfig) -> Result<Self> {
        Ok(ImmersionInput { datum: ex.marked_datum(cfg)?, transverse: ex.gamma1()?, base: ex.base_point() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    #[serde(rename = "H")]
    pub h: [f64; 3],
    #[serde(rename = "T")]
    pub t: [f64; 3],
}

#[derive(Debug, Clone, Copy)]
struct State {
    chart: Chart,
    x: C64,
    v: C64,
    f: [C64; 3],
}

impl State {
    fn point(&self) -> CurvePoint {
        CurvePoint { z: self.x, w: self.v, chart: self.chart }
    }

    fn pack(&self) -> [C64; 5] {
        [self.x, self.v, self.f[0], self.f[1], self.f[2]]
    }

    fn unpack(chart: Chart, y: [C64; 5]) -> State {
        State { chart, x: y[0], v: y[1], f: [y[2], y[3], y[4]] }
    }

    /// Coordinates (x, v) in the given chart, when the point is finite there.
    fn in_chart(&self, chart: Chart) -> Option<(C64, C64)> {
        if chart == self.chart {
            return Some((self.x, self.v));
        }
        if self.x.norm() == 0.0 {
            return None;
        }
        let y = 1.0 / self.x;
        // W = w ζ², w = W z²
        Some((y, self.v * y * y))
    }

    fn rechart(&mut self) {
        if self.x.norm() > SWITCH_RADIUS {
            let (x, v) = self.in_chart(other_chart(self.chart)).expect("nonzero coordinate");
            self.chart = other_chart(self.chart);
            self.x = x;
            self.v = v;
        }
    }
}

fn other_chart(c: Chart) -> Chart {
    match c {
        Chart::Standard => Chart::Reciprocal,
        Chart::Reciprocal => Chart::Standard,
    }
}

/// Direction of a straight edge, parametrized by s in [0, 1].
#[derive(Debug, Clone, Copy)]
enum Edge {
    Flat(C64),
    Plane(C64),
}

// Dormand–Prince 5(4)
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] =
    [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// Sample of the immersion at one grid vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSample {
    /// Grid coordinate: u on the flat torus, z on an annulus.
    pub coordinate: C64,
    pub point: Option<CurvePoint>,
    pub position: Option<[f64; 3]>,
    /// Unit normal from the Gauss map.
    pub normal: Option<[f64; 3]>,
    /// dF/d(coordinate), used to predict positions across seams.
    derivative: [C64; 3],
    /// Index of the end whose truncation disk removed the vertex.
    pub truncated_by: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
    pub boundary_tags: Vec<u8>,
    pub lattice: Lattice,
    pub domain: GridDomain,
    /// Grid vertex of each mesh vertex.
    pub vertex_grid: Vec<usize>,
    pub samples: Vec<GridSample>,
    /// Heights of the ends (flat torus only), modulo T₃.
    pub end_heights: Vec<f64>,
    /// Sign of the grid orientation relative to the conformal coordinate.
    pub orientation: f64,
}

pub struct Immersion {
    pub input: ImmersionInput,
    /// Periods of dz/w along the transverse and the marked cycle.
    pub omega: [C64; 2],
    pub lattice: Lattice,
    tol: f64,
}

fn re3(v: [C64; 3]) -> [f64; 3] {
    [v[0].re, v[1].re, v[2].re]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn length(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl Immersion {
    pub fn new(input: ImmersionInput, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        let d = &input.datum;
        if d.curve.degree() != 4 || d.k() != 1 {
            return Err(Error::Invalid("immersions are built for genus-one data with four ends".into()));
        }
        if !d.curve.on_curve(&input.base) || input.base.chart != Chart::Standard {
            return Err(Error::Invalid("base point must be a standard-chart point of the curve".into()));
        }
        let t = &input.transverse;
        let omega1 = integrate_lifted(&d.curve, &t.base, t.start_w, |_, w| 1.0 / w, cfg)?;
        let omega2 = c64(0.0, 2.0 * PI) / d.phi_coeff;
        if (omega1.conj() * omega2).im.abs() < 1e-10 * omega1.norm() * omega2.norm() {
            return Err(Error::DegenerateCycle("transverse and marked cycles have parallel periods".into()));
        }
        let t_vec = re3(d.weierstrass_period(t, cfg)?);
        if t_vec[2].abs() < 1e-12 {
            return Err(Error::DegenerateCycle("transverse cycle has zero height period".into()));
        }
        // loop around the first pole of g
        let q1 = d.ends.len() / 2;
        let r_inv = d.end_residue(Form::GInvPhi, q1, cfg)?;
        let r_g = d.end_residue(Form::GPhi, q1, cfg)?;
        let r_h = d.end_residue(Form::Phi, q1, cfg)?;
        let loop_int = [0.5 * (r_inv - r_g), 0.5 * I * (r_inv + r_g), r_h].map(|r| c64(0.0, 2.0 * PI) * r);
        let mut h = re3(loop_int);
        if h[1] < 0.0 {
            h = h.map(|x| -x);
        }
        let tol = 0.1 * cfg.abs_tol.min(cfg.rel_tol);
        Ok(Immersion { input, omega: [omega1, omega2], lattice: Lattice { h, t: t_vec }, tol })
    }

    pub fn from_example(ex: &StandardExample, cfg: &QuadratureConfig) -> Result<Self> {
        Immersion::new(ImmersionInput::from_example(ex, cfg)?, cfg)
    }

    fn datum(&self) -> &MarkedDatum {
        &self.input.datum
    }

    fn base_state(&self) -> State {
        let b = self.input.base;
        State { chart: Chart::Standard, x: b.z, v: b.w, f: [c64(0.0, 0.0); 3] }
    }

    fn gauss_at(&self, chart: Chart, x: C64) -> C64 {
        let m = &self.datum().gauss;
        match chart {
            Chart::Standard => (m.a * x + m.b) / (m.c * x + m.d),
            Chart::Reciprocal => m.eval_reciprocal(x),
        }
    }

    /// Φ as a multiple of du.
    fn phi(&self, chart: Chart, x: C64) -> [C64; 3] {
        let c = self.datum().phi_coeff;
        let g = self.gauss_at(chart, x);
        [0.5 * (1.0 / g - g) * c, 0.5 * I * (1.0 / g + g) * c, c]
    }

    fn rates(&self, chart: Chart, y: &[C64; 5], edge: Edge, forms: bool) -> Option<[C64; 5]> {
        let curve = &self.datum().curve;
        let (x, v) = (y[0], y[1]);
        let du = match (edge, chart) {
            (Edge::Flat(du), _) => du,
            (Edge::Plane(dz), Chart::Standard) => dz / v,
            (Edge::Plane(dz), Chart::Reciprocal) => dz * x * x / v,
        };
        let (dx, dv) = match chart {
            Chart::Standard => (v, 0.5 * curve.eval_q_prime(x)),
            Chart::Reciprocal => (-v, -0.5 * curve.eval_reciprocal_prime(x)),
        };
        let f = if forms { self.phi(chart, x) } else { [c64(0.0, 0.0), c64(0.0, 0.0), self.datum().phi_coeff] };
        let out = [dx * du, dv * du, f[0] * du, f[1] * du, f[2] * du];
        out.iter().all(|z| is_finite(*z)).then_some(out)
    }

    fn dp_step(&self, chart: Chart, y: &[C64; 5], h: f64, edge: Edge, forms: bool) -> Option<([C64; 5], f64)> {
        let mut k = [[c64(0.0, 0.0); 5]; 7];
        for stage in 0..7 {
            let mut ys = *y;
            for (prev, a) in DP_A[stage].iter().enumerate().take(stage) {
                for n in 0..5 {
                    ys[n] += h * a * k[prev][n];
                }
            }
            k[stage] = self.rates(chart, &ys, edge, forms)?;
        }
        let mut next = *y;
        let mut err = 0.0f64;
        for n in 0..5 {
            let mut hi = c64(0.0, 0.0);
            let mut lo = c64(0.0, 0.0);
            for s in 0..7 {
                hi += DP_B5[s] * k[s][n];
                lo += DP_B4[s] * k[s][n];
            }
            next[n] = y[n] + h * hi;
            let scale = self.tol * (1.0 + y[n].norm().max(next[n].norm()));
            err = err.max((h * (hi - lo)).norm() / scale);
        }
        next.iter().all(|z| is_finite(*z)).then_some((next, err))
    }

    /// Integrates the state along a straight edge.
    fn advance(&self, start: &State, edge: Edge, forms: bool) -> Result<State> {
        let mut chart = start.chart;
        let mut y = start.pack();
        let (mut s, mut h) = (0.0f64, 0.25f64);
        let mut steps = 0usize;
        while s < 1.0 {
            steps += 1;
            if steps > MAX_ODE_STEPS {
                return Err(Error::NonConvergence("edge integration exceeded the step budget".into()));
            }
            let h_try = h.min(1.0 - s);
            match self.dp_step(chart, &y, h_try, edge, forms) {
                Some((next, err)) if err <= 1.0 => {
                    s = if h_try == 1.0 - s { 1.0 } else { s + h_try };
                    let mut st = State::unpack(chart, next);
                    st.rechart();
                    chart = st.chart;
                    y = st.pack();
                    let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h = h_try * grow;
                }
                Some((_, err)) => h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9),
                None => h = h_try * 0.25,
            }
            if h < MIN_ODE_STEP {
                return Err(Error::NonConvergence(format!("edge integration stalled at s = {s:.6}, near a pole")));
            }
        }
        Ok(State::unpack(chart, y))
    }

    fn edge(&self, dom: &GridDomain, from: C64, to: C64) -> Edge {
        match dom.region {
            GridRegion::FlatTorus => Edge::Flat(to - from),
            GridRegion::Annulus { .. } => Edge::Plane(to - from),
        }
    }

    /// Level-synchronous BFS over the allowed vertices, integrating along tree edges.
    fn spread(
        &self,
        dom: &GridDomain,
        coords: &[C64],
        allowed: &[bool],
        root: usize,
        root_state: State,
        forms: bool,
    ) -> Vec<Option<State>> {
        let n = dom.vertex_count();
        let mut states: Vec<Option<State>> = vec![None; n];
        let mut level = vec![usize::MAX; n];
        states[root] = Some(root_state);
        level[root] = 0;
        let mut frontier = vec![root];
        let mut depth = 0usize;
        while !frontier.is_empty() {
            let mut children: Vec<usize> = frontier
                .iter()
                .flat_map(|&p| dom.neighbours(p))
                .filter(|&c| allowed[c] && states[c].is_none())
                .collect();
            children.sort_unstable();
            children.dedup();
            let reached: Vec<(usize, Option<State>)> = children
                .par_iter()
                .map(|&c| {
                    let parents = dom.neighbours(c).into_iter().filter(|&p| level[p] == depth);
                    for p in parents {
                        let from = states[p].expect("frontier vertex has a state");
                        if let Ok(s) = self.advance(&from, self.edge(dom, coords[p], coords[c]), forms) {
                            return (c, Some(s));
                        }
                    }
                    (c, None)
                })
                .collect();
            depth += 1;
            frontier.clear();
            for (c, s) in reached {
                if let Some(s) = s {
                    states[c] = Some(s);
                    level[c] = depth;
                    frontier.push(c);
                }
            }
        }
        states
    }

    /// Index of the end whose truncation disk contains the state, if any.
    fn truncating_end(&self, st: &State, radius: f64) -> Option<usize> {
        self.datum().ends.iter().position(|e| match st.in_chart(e.chart) {
            Some((x, v)) => (x - e.z).norm() < radius && (v - e.w).norm() < (v + e.w).norm(),
            None => false,
        })
    }

    /// Integrates the immersion over the domain.
    pub fn mesh(&self, dom: &GridDomain) -> Result<SurfaceMesh> {
        dom.validate()?;
        let n = dom.vertex_count();
        let coords: Vec<C64> = (0..n).map(|k| dom.coordinate(k, self.omega)).collect();
        let base = self.base_state();
        let (root, root_state, base_coord) = match dom.region {
            GridRegion::FlatTorus => (dom.index(0, 0), base, c64(0.0, 0.0)),
            GridRegion::Annulus { inner, outer } => {
                let curve = &self.datum().curve;
                for r in curve.finite_branch_points() {
                    let m = r.norm();
                    if m > inner - dom.trunc_radius && m < outer + dom.trunc_radius {
                        return Err(Error::Domain(format!("branch point {r} lies in the annulus")));
                    }
                }
                let root = dom.index(0, 0);
                let s = self.advance(&base, Edge::Plane(coords[root] - base.x), false)?;
                (root, s, base.x)
            }
        };

        // pass 1: the curve point at every vertex
        let everywhere = vec![true; n];
        let first = self.spread(dom, &coords, &everywhere, root, root_state, false);
        let truncated_by: Vec<Option<usize>> =
            first.iter().map(|s| s.as_ref().and_then(|s| self.truncating_end(s, dom.trunc_radius))).collect();
        let kept: Vec<bool> = (0..n).map(|k| first[k].is_some() && truncated_by[k].is_none()).collect();

        // pass 2: the immersion over the kept vertices
        let root2 = (0..n)
            .filter(|&k| kept[k])
            .min_by(|&a, &b| {
                (coords[a] - base_coord).norm().partial_cmp(&(coords[b] - base_coord).norm()).unwrap()
            })
            .ok_or_else(|| Error::Invalid("every grid vertex is truncated".into()))?;
        let mut start = first[root2].expect("kept vertex has a state");
        start.f = [c64(0.0, 0.0), c64(0.0, 0.0), start.f[2]];
        let second = self.spread(dom, &coords, &kept, root2, start, true);

        let samples: Vec<GridSample> = (0..n)
            .map(|k| {
                let st = second[k].or(first[k]);
                let (position, normal, derivative) = match (second[k], st) {
                    (Some(s), _) => {
                        let g = self.gauss_at(s.chart, s.x);
                        let gv = if is_finite(g) { SphereValue::Finite(g) } else { SphereValue::Infinity };
                        let unit = match dom.region {
                            GridRegion::FlatTorus => c64(1.0, 0.0),
                            GridRegion::Annulus { .. } => {
                                let (_, w) = s.in_chart(Chart::Standard).unwrap_or((c64(0.0, 0.0), c64(f64::NAN, 0.0)));
                                1.0 / w
                            }
                        };
                        let phi = self.phi(s.chart, s.x).map(|p| p * unit);
                        (Some(re3(s.f)), Some(gv.normal()), phi)
                    }
                    _ => (None, None, [c64(0.0, 0.0); 3]),
                };
                GridSample {
                    coordinate: coords[k],
                    point: st.map(|s| s.point()),
                    position,
                    normal,
                    derivative,
                    truncated_by: truncated_by[k],
                }
            })
            .collect();

        let orientation = match dom.region {
            GridRegion::FlatTorus => (self.omega[0].conj() * self.omega[1]).im.signum(),
            GridRegion::Annulus { .. } => 1.0,
        };
        let end_heights = match dom.region {
            GridRegion::FlatTorus => self.end_heights(&first)?,
            GridRegion::Annulus { .. } => vec![],
        };
        assemble(dom, samples, self.lattice, orientation, end_heights)
    }

    /// Heights Re(φ u_e) of the ends, located by Newton iteration from the nearest grid vertex.
    fn end_heights(&self, states: &[Option<State>]) -> Result<Vec<f64>> {
        let mut out = vec![];
        for e in &self.datum().ends {
            let nearest = states
                .iter()
                .filter_map(|s| s.as_ref())
                .filter_map(|s| s.in_chart(e.chart).map(|(x, v)| (s, x, v)))
                .filter(|(_, _, v)| (v - e.w).norm() < (v + e.w).norm())
                .min_by(|a, b| (a.1 - e.z).norm().partial_cmp(&(b.1 - e.z).norm()).unwrap())
                .map(|(s, _, _)| *s)
                .ok_or_else(|| Error::NonConvergence("no grid vertex near an end".into()))?;
            let located = self.locate(&nearest, e)?;
            out.push(located.f[2].re);
        }
        Ok(out)
    }

    /// Newton iteration in u towards the curve point `target`.
    fn locate(&self, from: &State, target: &CurvePoint) -> Result<State> {
        let mut st = *from;
        for _ in 0..40 {
            let (x, v) = st
                .in_chart(target.chart)
                .ok_or_else(|| Error::NonConvergence("end search left the chart".into()))?;
            let delta = match target.chart {
                Chart::Standard => -(x - target.z) / v,
                Chart::Reciprocal => (x - target.z) / v,
            };
            if !is_finite(delta) {
                return Err(Error::NonConvergence("end search hit a branch point".into()));
            }
            if delta.norm() < 1e-14 * (1.0 + st.f[2].norm() / self.datum().phi_coeff.norm()) {
                return Ok(st);
            }
            st = self.advance(&st, Edge::Flat(delta), false)?;
        }
        Err(Error::NonConvergence("end search did not converge".into()))
    }

    /// Flux Im ∫ Φ along the compact level curve at the given height, which
    /// runs from u₀ = height/φ to u₀ + ω₂.
    pub fn level_flux(&self, height: f64, end_heights: &[f64]) -> Result<[f64; 3]> {
        check_height(height, end_heights, self.lattice.t[2])?;
        let u0 = height / self.datum().phi_coeff;
        let start = self.advance(&self.base_state(), Edge::Flat(u0), false)?;
        let start = State { f: [c64(0.0, 0.0); 3], ..start };
        let end = self.advance(&start, Edge::Flat(self.omega[1]), true)?;
        Ok([end.f[0].im, end.f[1].im, end.f[2].im])
    }
}

pub fn integrate_immersion(input: ImmersionInput, dom: &GridDomain, cfg: &QuadratureConfig) -> Result<SurfaceMesh> {
    Immersion::new(input, cfg)?.mesh(dom)
}

fn check_height(height: f64, end_heights: &[f64], period: f64) -> Result<()> {
    if !height.is_finite() {
        return Err(Error::Invalid(format!("height must be finite, got {height}")));
    }
    for he in end_heights {
        let m = ((height - he) / period).round();
        if (height - he - m * period).abs() < 1e-6 {
            return Err(Error::DegenerateHeight(height));
        }
    }
    Ok(())
}

/// Triangulates the kept quads, translating corners by multiples of H where
/// the spanning tree went around an end on the other side.
fn assemble(
    dom: &GridDomain,
    samples: Vec<GridSample>,
    lattice: Lattice,
    orientation: f64,
    end_heights: Vec<f64>,
) -> Result<SurfaceMesh> {
    let h = lattice.h;
    let h2 = dot(h, h);
    let mut vertices = vec![];
    let mut vertex_grid = vec![];
    let mut shifts: Vec<i64> = vec![];
    let mut ids: HashMap<(usize, i64), usize> = HashMap::new();
    for (k, s) in samples.iter().enumerate() {
        if let Some(p) = s.position {
            ids.insert((k, 0), vertices.len());
            vertices.push(p);
            vertex_grid.push(k);
            shifts.push(0);
        }
    }
    let mut faces = vec![];
    for j in 0..dom.n_v {
        for i in 0..dom.n_u {
            let corners = [dom.index(i, j), dom.index(i + 1, j), dom.index(i + 1, j + 1), dom.index(i, j + 1)];
            if corners.iter().any(|&c| samples[c].position.is_none()) {
                continue;
            }
            let r = &samples[corners[0]];
            let p_ref = r.position.unwrap();
            let mut quad = [0usize; 4];
            let mut pos = [[0.0; 3]; 4];
            for (slot, &c) in corners.iter().enumerate() {
                let s = &samples[c];
                let p = s.position.unwrap();
                let dq = s.coordinate - r.coordinate;
                let step = [0, 1, 2].map(|m| (0.5 * (r.derivative[m] + s.derivative[m]) * dq).re);
                let predicted = [p_ref[0] + step[0], p_ref[1] + step[1], p_ref[2] + step[2]];
                let n = if h2 > 0.0 { (dot(sub(p, predicted), h) / h2).round() as i64 } else { 0 };
                let shifted = add_scaled(p, h, -(n as f64));
                let id = *ids.entry((c, n)).or_insert_with(|| {
                    vertices.push(shifted);
                    vertex_grid.push(c);
                    shifts.push(n);
                    vertices.len() - 1
                });
                quad[slot] = id;
                pos[slot] = shifted;
            }
            let tris = if length(sub(pos[0], pos[2])) <= length(sub(pos[1], pos[3])) {
                [[0, 1, 2], [0, 2, 3]]
            } else {
                [[0, 1, 3], [1, 2, 3]]
            };
            for t in tris {
                let mut f = [quad[t[0]], quad[t[1]], quad[t[2]]];
                if orientation < 0.0 {
                    f.swap(1, 2);
                }
                let area = 0.5 * length(cross(sub(vertices[f[1]], vertices[f[0]]), sub(vertices[f[2]], vertices[f[0]])));
                if area > 1e-14 {
                    faces.push(f);
                }
            }
        }
    }

    let mut boundary_tags = vec![0u8; vertices.len()];
    for (v, &k) in vertex_grid.iter().enumerate() {
        let (i, j) = dom.grid_position(k);
        let mut t = 0u8;
        if i == 0 {
            t |= tag::LEFT;
        }
        if i == dom.n_u {
            t |= tag::RIGHT;
        }
        if j == 0 {
            t |= tag::BOTTOM;
        }
        if j == dom.n_v {
            t |= tag::TOP;
        }
        if dom.neighbours(k).iter().any(|&m| samples[m].truncated_by.is_some()) {
            t |= tag::END_RING;
        }
        if shifts[v] != 0 {
            t |= tag::SEAM;
        }
        boundary_tags[v] = t;
    }
    Ok(SurfaceMesh {
        vertices,
        faces,
        boundary_tags,
        lattice,
        domain: *dom,
        vertex_grid,
        samples,
        end_heights,
        orientation,
    })
}

impl SurfaceMesh {
    pub fn face_normal(&self, f: &[usize; 3]) -> [f64; 3] {
        let [a, b, c] = f.map(|k| self.vertices[k]);
        cross(sub(b, a), sub(c, a))
    }

    /// Area-weighted vertex normals, accumulated per grid vertex so that
    /// seam copies contribute to the same vertex.
    fn grid_normals(&self) -> Vec<[f64; 3]> {
        let mut acc = vec![[0.0; 3]; self.samples.len()];
        for f in &self.faces {
            let n = self.face_normal(f);
            for &v in f {
                let k = self.vertex_grid[v];
                acc[k] = add_scaled(acc[k], n, 1.0);
            }
        }
        acc
    }

    fn is_interior(&self, k: usize) -> bool {
        let dom = &self.domain;
        let (i, j) = dom.grid_position(k);
        if i == 0 || j == 0 || i == dom.n_u || j == dom.n_v || self.samples[k].position.is_none() {
            return false;
        }
        dom.neighbours(k).iter().all(|&m| self.samples[m].position.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussDeviation {
    /// Largest angle (radians) between discrete and exact normals.
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

/// Discrete vertex normals against the stereographic image of g at interior vertices.
pub fn gauss_deviation(mesh: &SurfaceMesh) -> GaussDeviation {
    let normals = mesh.grid_normals();
    let mut max = 0.0f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, n) in normals.iter().enumerate() {
        if !mesh.is_interior(k) || length(*n) == 0.0 {
            continue;
        }
        let exact = mesh.samples[k].normal.expect("interior vertex has a normal");
        let angle = (dot(*n, exact) / length(*n)).clamp(-1.0, 1.0).acos();
        max = max.max(angle);
        sum += angle;
        count += 1;
    }
    GaussDeviation { max, mean: if count > 0 { sum / count as f64 } else { 0.0 }, count }
}

/// Largest mismatch (relative to |H|) between opposite domain sides after
/// translation by T + nH (left/right) and nH (bottom/top).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMatch {
    pub left_right: f64,
    pub bottom_top: f64,
    pub pairs: usize,
}

impl BoundaryMatch {
    pub fn max(&self) -> f64 {
        self.left_right.max(self.bottom_top)
    }
}

pub fn boundary_identification(mesh: &SurfaceMesh) -> BoundaryMatch {
    let dom = &mesh.domain;
    let h = mesh.lattice.h;
    let hn = length(h);
    let mismatch = |a: usize, b: usize, shift: [f64; 3]| -> Option<f64> {
        let (pa, pb) = (mesh.samples[a].position?, mesh.samples[b].position?);
        let d = sub(sub(pb, pa), shift);
        let n = (dot(d, h) / (hn * hn)).round();
        Some(length(add_scaled(d, h, -n)) / hn)
    };
    let mut out = BoundaryMatch { left_right: 0.0, bottom_top: 0.0, pairs: 0 };
    if dom.region == GridRegion::FlatTorus {
        for j in 0..=dom.n_v {
            if let Some(e) = mismatch(dom.index(0, j), dom.index(dom.n_u, j), mesh.lattice.t) {
                out.left_right = out.left_right.max(e);
                out.pairs += 1;
            }
        }
    }
    for i in 0..=dom.n_u {
        if let Some(e) = mismatch(dom.index(i, 0), dom.index(i, dom.n_v), [0.0; 3]) {
            out.bottom_top = out.bottom_top.max(e);
            out.pairs += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSection {
    pub height: f64,
    pub segments: Vec<[[f64; 3]; 2]>,
    pub polylines: Vec<Vec<[f64; 3]>>,
    /// Connected components, with the domain's periodic identifications.
    pub components: usize,
}

fn find(parent: &mut [usize], mut a: usize) -> usize {
    while parent[a] != a {
        parent[a] = parent[parent[a]];
        a = parent[a];
    }
    a
}

/// Intersection of the mesh with the plane x₃ = height.
pub fn level_section(mesh: &SurfaceMesh, height: f64) -> Result<LevelSection> {
    check_height(height, &mesh.end_heights, mesh.lattice.t[2])?;
    let dom = &mesh.domain;
    let key = |a: usize, b: usize| {
        let (ga, gb) = (dom.canonical(mesh.vertex_grid[a]), dom.canonical(mesh.vertex_grid[b]));
        (ga.min(gb), ga.max(gb))
    };
    let mut nodes: HashMap<(usize, usize), usize> = HashMap::new();
    let mut segments = vec![];
    let mut ends: Vec<[usize; 2]> = vec![];
    for f in &mesh.faces {
        let mut hits = vec![];
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let (za, zb) = (mesh.vertices[a][2] - height, mesh.vertices[b][2] - height);
            if (za >= 0.0) != (zb >= 0.0) {
                let t = za / (za - zb);
                let p = add_scaled(mesh.vertices[a], sub(mesh.vertices[b], mesh.vertices[a]), t);
                let n = nodes.len();
                let id = *nodes.entry(key(a, b)).or_insert(n);
                hits.push((p, id));
            }
        }
        if hits.len() == 2 {
            segments.push([hits[0].0, hits[1].0]);
            ends.push([hits[0].1, hits[1].1]);
        }
    }
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    for e in &ends {
        let (ra, rb) = (find(&mut parent, e[0]), find(&mut parent, e[1]));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut roots: Vec<usize> = ends.iter().map(|e| find(&mut parent, e[0])).collect();
    roots.sort_unstable();
    roots.dedup();
    let polylines = chain_segments(&segments, &ends, nodes.len());
    Ok(LevelSection { height, segments, polylines, components: roots.len() })
}

/// Orders segments into polylines by walking shared endpoints.
fn chain_segments(segments: &[[[f64; 3]; 2]], ends: &[[usize; 2]], n_nodes: usize) -> Vec<Vec<[f64; 3]>> {
    let mut incident: Vec<Vec<usize>> = vec![vec![]; n_nodes];
    for (s, e) in ends.iter().enumerate() {
        incident[e[0]].push(s);
        incident[e[1]].push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut order: Vec<usize> = (0..segments.len()).collect();
    // open chains first, starting at a node of degree one
    order.sort_by_key(|&s| !(incident[ends[s][0]].len() == 1 || incident[ends[s][1]].len() == 1));
    let mut out = vec![];
    for s0 in order {
        if used[s0] {
            continue;
        }
        let (mut node, mut line) = if incident[ends[s0][1]].len() == 1 {
            (ends[s0][0], vec![segments[s0][1], segments[s0][0]])
        } else {
            (ends[s0][1], vec![segments[s0][0], segments[s0][1]])
        };
        used[s0] = true;
        while let Some(&s) = incident[node].iter().find(|&&s| !used[s]) {
            used[s] = true;
            let (next, p) = if ends[s][0] == node { (ends[s][1], segments[s][1]) } else { (ends[s][0], segments[s][0]) };
            line.push(p);
            node = next;
        }
        out.push(line);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CatenoidFit {
    pub center: [f64; 3],
    /// Mean distance from the axis on the recentering ring.
    pub neck_radius: f64,
    /// Largest distance from a mesh vertex to the catenoid.
    pub forward: f64,
    /// Largest distance from a sampled catenoid point to the mesh.
    pub reverse: f64,
    pub hausdorff: f64,
}

/// Distance from (rho, height) to the meridian r = cosh t.
fn meridian_distance(rho: f64, height: f64) -> f64 {
    let d = |t: f64| ((rho - t.cosh()).powi(2) + (height - t).powi(2)).sqrt();
    let (lo, hi) = (height - 3.0, height + 3.0);
    let n = 600;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=n {
        let t = lo + (hi - lo) * k as f64 / n as f64;
        let v = d(t);
        if v < best.0 {
            best = (v, t);
        }
    }
    // golden-section refinement around the best sample
    let step = (hi - lo) / n as f64;
    let (mut a, mut b) = (best.1 - step, best.1 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let (c, e) = (b - g * (b - a), a + g * (b - a));
        if d(c) < d(e) {
            b = e;
        } else {
            a = c;
        }
    }
    d(0.5 * (a + b)).min(best.0)
}

fn point_triangle_distance(p: [f64; 3], a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> f64 {
    let (ab, ac, ap) = (sub(b, a), sub(c, a), sub(p, a));
    let (d1, d2) = (dot(ab, ap), dot(ac, ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return length(ap);
    }
    let bp = sub(p, b);
    let (d3, d4) = (dot(ab, bp), dot(ac, bp));
    if d3 >= 0.0 && d4 <= d3 {
        return length(bp);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return length(sub(p, add_scaled(a, ab, v)));
    }
    let cp = sub(p, c);
    let (d5, d6) = (dot(ab, cp), dot(ac, cp));
    if d6 >= 0.0 && d5 <= d6 {
        return length(cp);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return length(sub(p, add_scaled(a, ac, w)));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return length(sub(p, add_scaled(b, sub(c, b), w)));
    }
    let denom = 1.0 / (va + vb + vc);
    let (v, w) = (vb * denom, vc * denom);
    length(sub(p, add_scaled(add_scaled(a, ab, v), ac, w)))
}

/// Hausdorff distance between an annulus mesh, recentered at the mean of its
/// |z| = 1 ring, and the vertical catenoid r = cosh x₃ (vertical flux 2π).
pub fn catenoid_fit(mesh: &SurfaceMesh) -> Result<CatenoidFit> {
    let dom = &mesh.domain;
    let (inner, outer) = match dom.region {
        GridRegion::Annulus { inner, outer } => (inner, outer),
        GridRegion::FlatTorus => return Err(Error::Invalid("catenoid comparison needs an annulus domain".into())),
    };
    let ring = ((0.0 - inner.ln()) / (outer / inner).ln() * dom.n_u as f64).round() as usize;
    if ring > dom.n_u {
        return Err(Error::Invalid("annulus does not contain the unit circle".into()));
    }
    let ring_pts: Vec<[f64; 3]> = (0..dom.n_v).filter_map(|j| mesh.samples[dom.index(ring, j)].position).collect();
    if ring_pts.len() != dom.n_v {
        return Err(Error::Invalid("unit circle ring is incomplete".into()));
    }
    let mut center = [0.0; 3];
    for p in &ring_pts {
        center = add_scaled(center, *p, 1.0 / ring_pts.len() as f64);
    }
    let local: Vec<[f64; 3]> = mesh.vertices.iter().map(|p| sub(*p, center)).collect();
    let neck_radius = ring_pts.iter().map(|p| sub(*p, center)).map(|p| p[0].hypot(p[1])).sum::<f64>() / ring_pts.len() as f64;
    let forward = local
        .par_iter()
        .map(|p| meridian_distance(p[0].hypot(p[1]), p[2]))
        .reduce(|| 0.0, f64::max);

    // catenoid samples strictly between the boundary rings' heights
    let ring_height = |i: usize| {
        (0..dom.n_v).filter_map(|j| mesh.samples[dom.index(i, j)].position).map(|p| p[2] - center[2]).fold(f64::NAN, f64::max)
    };
    let (h0, h1) = (ring_height(0), ring_height(dom.n_u));
    let (lo, hi) = (h0.min(h1), h0.max(h1));
    let margin = 0.05 * (hi - lo);
    let (lo, hi) = (lo + margin, hi - margin);
    let (n_t, n_phi) = (48usize, 48usize);
    let probes: Vec<[f64; 3]> = (0..=n_t)
        .flat_map(|a| {
            let t = lo + (hi - lo) * a as f64 / n_t as f64;
            (0..n_phi).map(move |b| {
                let phi = 2.0 * PI * b as f64 / n_phi as f64;
                [t.cosh() * phi.cos(), t.cosh() * phi.sin(), t]
            })
        })
        .collect();
    let reverse = probes
        .par_iter()
        .map(|q| {
            mesh.faces
                .iter()
                .filter_map(|f| {
                    let [a, b, c] = f.map(|k| local[k]);
                    let zmin = a[2].min(b[2]).min(c[2]);
                    let zmax = a[2].max(b[2]).max(c[2]);
                    (q[2] > zmin - 0.5 && q[2] < zmax + 0.5).then(|| point_triangle_distance(*q, a, b, c))
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max);
    Ok(CatenoidFit { center, neck_radius, forward, reverse, hausdorff: forward.max(reverse) })
}

/// Inclusive ranges of lattice translates m·H + n·T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translates {
    pub m: (i32, i32),
    pub n: (i32, i32),
}

impl Translates {
    pub fn single() -> Self {
        Translates { m: (0, 0), n: (0, 0) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.0 > self.m.1 || self.n.0 > self.n.1 {
            return Err(Error::Invalid(format!("empty translate range {self:?}")));
        }
        if self.count() > 10_000 {
            return Err(Error::Invalid("too many translates".into()));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        ((self.m.1 - self.m.0 + 1) as usize) * ((self.n.1 - self.n.0 + 1) as usize)
    }
}

/// Nine significant digits, shortest form.
fn obj_float(x: f64) -> String {
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    if rounded == 0.0 {
        "0".into()
    } else {
        format!("{rounded}")
    }
}

/// Writes one OBJ object per translate; returns the number of vertices written.
pub fn export_obj(mesh: &SurfaceMesh, translates: &Translates, path: &Path) -> Result<usize> {
    translates.validate()?;
    let mut out = BufWriter::new(File::create(path)?);
    let Lattice { h, t } = mesh.lattice;
    let mut offset = 0usize;
    for m in translates.m.0..=translates.m.1 {
        for n in translates.n.0..=translates.n.1 {
            writeln!(out, "o tile_{m}_{n}")?;
            let shift = add_scaled([m as f64 * h[0], m as f64 * h[1], m as f64 * h[2]], t, n as f64);
            for v in &mesh.vertices {
                let p = add_scaled(*v, shift, 1.0);
                writeln!(out, "v {} {} {}", obj_float(p[0]), obj_float(p[1]), obj_float(p[2]))?;
            }
            for f in &mesh.faces {
                writeln!(out, "f {} {} {}", f[0] + offset + 1, f[1] + offset + 1, f[2] + offset + 1)?;
            }
            offset += mesh.vertices.len();
        }
    }
    out.flush()?;
    Ok(offset)
}

/// Metadata written next to an exported mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub lattice: Lattice,
    pub angles: Option<FamilyAngles>,
    pub a: f64,
    pub b: [f64; 2],
    pub mu: f64,
    #[serde(rename = "E")]
    pub e: [f64; 2],
}

impl Sidecar {
    pub fn for_example(ex: &StandardExample, lattice: Lattice, cfg: &QuadratureConfig) -> Result<Self> {
        let cv = classify(&ex.marked_datum(cfg)?, 1e-6, cfg)?;
        Ok(Sidecar {
            lattice,
            angles: Some(ex.angles),
            a: cv.a,
            b: [cv.b.re, cv.b.im],
            mu: ex.mu,
            e: [ex.e_factor.re, ex.e_factor.im],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn immersion(theta: f64, alpha: f64, beta: f64) -> Immersion {
        Immersion::from_example(&StandardExample::from_angles(theta, alpha, beta).unwrap(), &cfg()).unwrap()
    }

    #[test]
    fn periods_of_du_close_the_curve() {
        let im = immersion(0.7, 0.3, 0.2);
        let base = im.base_state();
        for omega in im.omega {
            let end = im.advance(&base, Edge::Flat(omega), false).unwrap();
            let (z, w) = end.in_chart(Chart::Standard).unwrap();
            assert!((z - base.x).norm() < 1e-9 && (w - base.v).norm() < 1e-9, "{z} {w}");
        }
        // height gained along omega_2 is purely imaginary: 2 pi i
        let end = im.advance(&base, Edge::Flat(im.omega[1]), false).unwrap();
        assert!((end.f[2] - c64(0.0, 2.0 * PI)).norm() < 1e-9);
    }

    #[test]
    fn end_loop_gives_horizontal_h() {
        let ex = StandardExample::from_angles(FRAC_PI_4, 0.0, 0.0).unwrap();
        let im = Immersion::from_example(&ex, &cfg()).unwrap();
        let expected = PI * ex.mu * ex.e_factor.norm();
        assert!((im.lattice.h[1] - expected).abs() < 1e-6 * expected);
        assert!(im.lattice.h[0].abs() < 1e-9 && im.lattice.h[2].abs() < 1e-9);
        assert!((im.lattice.h[1] - 7.528137118831375).abs() < 1e-9);
        assert!(im.lattice.t[2].abs() > 1.0);
    }

    #[test]
    fn mesh_closes_up_to_lattice() {
        let im = immersion(0.7, 0.3, 0.2);
        let m = im.mesh(&GridDomain::flat(24, 20).unwrap()).unwrap();
        let bm = boundary_identification(&m);
        assert!(bm.pairs > 30);
        assert!(bm.max() < 1e-6, "{bm:?}");
        assert!(m.faces.iter().all(|f| length(m.face_normal(f)) > 0.0));
    }

    #[test]
    fn truncation_keeps_clear_of_ends() {
        let im = immersion(FRAC_PI_4, 0.0, 0.0);
        let dom = GridDomain::flat(32, 32).unwrap();
        let m = im.mesh(&dom).unwrap();
        assert!(m.samples.iter().any(|s| s.truncated_by.is_some()));
        assert!(m.boundary_tags.iter().any(|t| t & tag::END_RING != 0));
        for s in m.samples.iter().filter(|s| s.position.is_some()) {
            let p = s.point.unwrap();
            let st = State { chart: p.chart, x: p.z, v: p.w, f: [c64(0.0, 0.0); 3] };
            assert!(im.truncating_end(&st, dom.trunc_radius).is_none());
        }
    }

    #[test]
    fn spanning_trees_agree() {
        let im = immersion(0.7, 0.3, 0.2);
        let dom = GridDomain::flat(16, 16).unwrap();
        let a = im.mesh(&dom).unwrap();
        let b = im.mesh(&dom.with_tree(TreeOrder::ColumnFirst)).unwrap();
        let h = im.lattice.h;
        let mut checked = 0;
        for (sa, sb) in a.samples.iter().zip(b.samples.iter()) {
            if let (Some(pa), Some(pb)) = (sa.position, sb.position) {
                let d = sub(pa, pb);
                let n = (dot(d, h) / dot(h, h)).round();
                assert!(length(add_scaled(d, h, -n)) < 1e-8);
                checked += 1;
            }
        }
        assert!(checked > 200);
    }

    #[test]
    fn level_sections() {
        let im = immersion(FRAC_PI_4, 0.0, 0.0);
        let m = im.mesh(&GridDomain::flat(32, 32).unwrap()).unwrap();
        let mut heights = m.end_heights.clone();
        heights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let generic = 0.5 * (heights[0] + heights[3]);
        for dh in [0.0, 1e-3, -1e-3] {
            let s = level_section(&m, generic + dh).unwrap();
            assert_eq!(s.components, 1);
            assert_eq!(s.polylines.len(), 1);
        }
        let flux = im.level_flux(generic, &m.end_heights).unwrap();
        assert!((flux[2] - 2.0 * PI).abs() < 1e-6);
        for bad in [heights[0], heights[3] + 5e-7, heights[0] + im.lattice.t[2]] {
            assert!(matches!(level_section(&m, bad), Err(Error::DegenerateHeight(_))));
            assert!(matches!(im.level_flux(bad, &m.end_heights), Err(Error::DegenerateHeight(_))));
        }
    }

    #[test]
    fn obj_round_trip() {
        let im = immersion(FRAC_PI_4, 0.0, 0.0);
        let m = im.mesh(&GridDomain::flat(8, 8).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let tr = Translates { m: (0, 1), n: (-1, 0) };
        let written = export_obj(&m, &tr, &path).unwrap();
        assert_eq!(written, 4 * m.vertices.len());
        let text = std::fs::read_to_string(&path).unwrap();
        let vs: Vec<[f64; 3]> = text
            .lines()
            .filter(|l| l.starts_with("v "))
            .map(|l| {
                let p: Vec<f64> = l[2..].split(' ').map(|x| x.parse().unwrap()).collect();
                [p[0], p[1], p[2]]
            })
            .collect();
        assert_eq!(vs.len(), written);
        assert_eq!(text.lines().filter(|l| l.starts_with("o ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 4 * m.faces.len());
        // first object is the translate (0, -1)
        for (v, p) in m.vertices.iter().zip(vs.iter()) {
            let expected = add_scaled(*v, m.lattice.t, -1.0);
            assert!(length(sub(expected, *p)) < 1e-6 * (1.0 + length(expected)));
        }
        let single = export_obj(&m, &Translates::single(), &path).unwrap();
        assert_eq!(single, m.vertices.len());
        assert!(export_obj(&m, &Translates { m: (1, 0), n: (0, 0) }, &path).is_err());
    }

    #[test]
    fn domain_validation() {
        assert!(matches!(GridDomain::flat(1, 16), Err(Error::Invalid(_))));
        assert!(GridDomain::flat(8, 8).unwrap().with_trunc_radius(0.0).is_err());
        assert!(GridDomain::annulus(2.0, 1.0, 8, 8).is_err());
        let im = immersion(FRAC_PI_4, 0.0, 0.0);
        // lambda = 1 + sqrt 2: a branch point at |z| = 2.414 lies in this annulus
        let dom = GridDomain::annulus(1.0, 3.0, 8, 8).unwrap();
        assert!(matches!(im.mesh(&dom), Err(Error::Domain(_))));
    }

    #[test]
    fn annulus_near_catenoid_limit() {
        let im = immersion(0.05, 0.0, 0.0);
        let m = im.mesh(&GridDomain::annulus(1.0 / 3.0, 3.0, 24, 24).unwrap()).unwrap();
        let fit = catenoid_fit(&m).unwrap();
        assert!((fit.neck_radius - 1.0).abs() < 1e-3);
        assert!(fit.hausdorff < 0.02, "{fit:?}");
        assert!(boundary_identification(&m).bottom_top < 1e-9);
    }

    #[test]
    fn triangle_distance_cases() {
        let (a, b, c) = ([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        assert!((point_triangle_distance([0.25, 0.25, 2.0], a, b, c) - 2.0).abs() < 1e-15);
        assert!((point_triangle_distance([-1.0, -1.0, 0.0], a, b, c) - 2f64.sqrt()).abs() < 1e-15);
        assert!((point_triangle_distance([1.0, 1.0, 0.0], a, b, c) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((meridian_distance(1.0, 0.0)).abs() < 1e-12);
        assert!((meridian_distance(2.0, 0.0) - 1.0).abs() < 1e-12);
    }
}
