//! Minimisation of hover specific power over the design vector.
//!
//! Every design point is scored by solving its hover equilibrium; a design
//! whose solve fails, or whose equilibrium draws no electrical power, is
//! infeasible and is rejected rather than penalised.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aero::AeroVariant;
use crate::error::{ModelError, SearchError};
use crate::hover::{default_guess, solve_hover_with, HoverState, HoverUnknowns, SolverSettings};
use crate::io::format_sig;
use crate::model::{expand_design, BaseConstants, DesignVector, MassModel, VehicleModel};

/// Default cap on the number of lattice points in a grid search.
pub const DEFAULT_GRID_CAP: u64 = 10_000_000;

/// Bounds and resolution of one design variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarRange {
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "one")]
    pub points: usize,
}

fn one() -> usize {
    1
}

impl VarRange {
    pub fn fixed(value: f64) -> Self {
        Self {
            lower: value,
            upper: value,
            points: 1,
        }
    }

    pub fn span(lower: f64, upper: f64, points: usize) -> Self {
        Self { lower, upper, points }
    }

    pub fn is_frozen(&self) -> bool {
        self.lower == self.upper
    }

    /// Evenly spaced lattice including both ends.
    pub fn samples(&self) -> Vec<f64> {
        if self.is_frozen() || self.points <= 1 {
            return vec![self.lower];
        }
        let n = self.points - 1;
        (0..=n)
            .map(|k| {
                if k == n {
                    self.upper
                } else {
                    self.lower + (self.upper - self.lower) * k as f64 / n as f64
                }
            })
            .collect()
    }
}

/// Bounds for all six design variables, in `DesignVector` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub ranges: [VarRange; 6],
}

impl DesignSpace {
    /// Every variable frozen at `x`.
    pub fn point(x: &DesignVector) -> Self {
        Self {
            ranges: x.to_array().map(VarRange::fixed),
        }
    }

    pub fn with(mut self, index: usize, range: VarRange) -> Self {
        self.ranges[index] = range;
        self
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..6).filter(|&i| !self.ranges[i].is_frozen()).collect()
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        for (name, r) in DesignVector::NAMES.iter().zip(&self.ranges) {
            if !(r.lower.is_finite() && r.upper.is_finite()) {
                return Err(SearchError::InvalidSpace(format!("{name}: bounds must be finite")));
            }
            if r.lower > r.upper {
                return Err(SearchError::InvalidSpace(format!(
                    "{name}: lower {} above upper {}",
                    r.lower, r.upper
                )));
            }
            if r.points == 0 {
                return Err(SearchError::InvalidSpace(format!("{name}: resolution must be at least 1")));
            }
        }
        Ok(())
    }

    fn validate_lattice(&self) -> Result<(), SearchError> {
        self.validate()?;
        for i in self.free_indices() {
            if self.ranges[i].points < 2 {
                return Err(SearchError::InvalidSpace(format!(
                    "{}: a free variable needs at least 2 grid points",
                    DesignVector::NAMES[i]
                )));
            }
        }
        Ok(())
    }

    pub fn lattice_size(&self) -> u64 {
        self.ranges
            .iter()
            .map(|r| r.samples().len() as u64)
            .fold(1u64, |acc, n| acc.saturating_mul(n))
    }

    pub fn clamp(&self, x: &DesignVector) -> DesignVector {
        let mut a = x.to_array();
        for (v, r) in a.iter_mut().zip(&self.ranges) {
            *v = v.clamp(r.lower, r.upper);
        }
        DesignVector::from_array(a)
    }

    pub fn figure(figure: Figure) -> Self {
        let x = match figure {
            Figure::Fig7 => DesignVector::new(10.0, 10.0, 1.0, 5.0, 0.0, 0.0),
            _ => DesignVector::new(10.0, 10.0, 1.05, 1.75, 0.0, 0.0),
        };
        let s = Self::point(&x);
        match figure {
            Figure::Fig4 => s
                .with(0, VarRange::span(0.0, 10.0, 11))
                .with(1, VarRange::span(0.0, 10.0, 11)),
            Figure::Fig5 => s
                .with(2, VarRange::span(0.05, 2.05, 41))
                .with(3, VarRange::span(0.75, 2.75, 41)),
            Figure::Fig6 => s.with(3, VarRange::span(0.75, 4.75, 81)),
            Figure::Fig7 => s.with(5, VarRange::span(-1.0, 1.0, 81)),
        }
    }
}

/// The reproduced design-sweep figures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    /// Angle of attack of propeller and fuselage.
    Fig4,
    /// Chord and radius ratios.
    Fig5,
    /// Radius ratio at chord ratio 1.05.
    Fig6,
    /// Rotor offset at chord ratio 1, radius ratio 5, no tilt.
    Fig7,
}

impl Figure {
    pub fn number(&self) -> u8 {
        match self {
            Figure::Fig4 => 4,
            Figure::Fig5 => 5,
            Figure::Fig6 => 6,
            Figure::Fig7 => 7,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "4" => Ok(Figure::Fig4),
            "5" => Ok(Figure::Fig5),
            "6" => Ok(Figure::Fig6),
            "7" => Ok(Figure::Fig7),
            other => Err(format!("unknown figure {other:?}, expected 4, 5, 6 or 7")),
        }
    }
}

/// Outcome of scoring one design.
#[derive(Debug, Clone, PartialEq)]
pub enum Evaluation {
    Feasible(HoverState),
    Infeasible(String),
}

impl Evaluation {
    pub fn p_s(&self) -> Option<f64> {
        match self {
            Evaluation::Feasible(h) => Some(h.p_s),
            Evaluation::Infeasible(_) => None,
        }
    }

    pub fn hover(&self) -> Option<&HoverState> {
        match self {
            Evaluation::Feasible(h) => Some(h),
            Evaluation::Infeasible(_) => None,
        }
    }
}

/// One named axis of a sweep grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    /// Position in `DesignVector` order.
    pub index: usize,
    pub values: Vec<f64>,
}

/// Specific power over a lattice; `None` marks an infeasible cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    /// Row-major over the axes, first axis slowest.
    pub p_s: Vec<Option<f64>>,
}

impl SweepGrid {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    pub fn feasible(&self) -> Vec<bool> {
        self.p_s.iter().map(Option::is_some).collect()
    }

    /// Multi-index of flat position `flat`.
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for (slot, n) in idx.iter_mut().zip(&shape).rev() {
            *slot = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn coordinates(&self, flat: usize) -> Vec<f64> {
        self.unravel(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&k, a)| a.values[k])
            .collect()
    }

    /// Smallest feasible value; ties go to the earliest cell.
    pub fn min(&self) -> Option<(usize, f64)> {
        self.p_s
            .iter()
            .enumerate()
            .filter_map(|(k, v)| v.map(|p| (k, p)))
            .fold(None, |best, (k, p)| match best {
                Some((_, bp)) if bp <= p => best,
                _ => Some((k, p)),
            })
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<&str> = self.axes.iter().map(|a| a.name.as_str()).collect();
        cols.push("P_s");
        cols.push("feasible");
        cols.join(",")
    }

    /// Axis values, then `P_s` (empty when infeasible), then `1`/`0`; twelve
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for (k, value) in self.p_s.iter().enumerate() {
            let mut cells: Vec<String> = self.coordinates(k).iter().map(|&c| format_sig(c, 12)).collect();
            match value {
                Some(p) => {
                    cells.push(format_sig(*p, 12));
                    cells.push("1".into());
                }
                None => {
                    cells.push(String::new());
                    cells.push("0".into());
                }
            }
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: DesignVector,
    pub best_hover: HoverState,
    pub grid: SweepGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalSearchSettings {
    /// Stop when the projected gradient norm (scaled coordinates) falls below.
    pub grad_tol: f64,
    /// Stop when an accepted step would be shorter than this.
    pub step_tol: f64,
    pub max_iterations: usize,
    /// Finite-difference step in scaled coordinates.
    pub fd_step: f64,
    /// Radius used to probe for a feasible start and for saddle escapes.
    pub trust_radius: f64,
    /// Negative-curvature escapes allowed from stationary points.
    pub max_escapes: usize,
    pub hessian_step: f64,
    pub curvature_tol: f64,
}

impl Default for LocalSearchSettings {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            step_tol: 1e-9,
            max_iterations: 300,
            fd_step: 1e-6,
            trust_radius: 0.05,
            max_escapes: 4,
            hessian_step: 1e-3,
            curvature_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    StepSize,
    MaxIterations,
    NoFreeVariables,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub x: DesignVector,
    pub p_s: f64,
    pub hover: HoverState,
    pub start: DesignVector,
    pub start_p_s: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub escapes: usize,
    pub termination: Termination,
}

/// Constants, masses and model variant shared by every evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Problem {
    pub base: BaseConstants,
    pub masses: MassModel,
    pub variant: AeroVariant,
    pub solver: SolverSettings,
}

impl Problem {
    pub fn new(base: BaseConstants, masses: MassModel) -> Self {
        Self {
            base,
            masses,
            variant: AeroVariant::Quadratic,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_variant(mut self, variant: AeroVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn vehicle(&self, x: &DesignVector) -> Result<VehicleModel, ModelError> {
        Ok(expand_design(&self.base, &self.masses, x)?.with_variant(self.variant))
    }

    /// Scores `x` from the default hover guess.
    pub fn evaluate(&self, x: &DesignVector) -> Result<Evaluation, ModelError> {
        self.evaluate_from(x, None)
    }

    /// Scores `x`, trying `warm` first and the default guess second.
    pub fn evaluate_from(
        &self,
        x: &DesignVector,
        warm: Option<&HoverUnknowns>,
    ) -> Result<Evaluation, ModelError> {
        let v = match self.vehicle(x) {
            Ok(v) => v,
            Err(e @ ModelError::OutOfRange { field: "alpha_p" | "alpha_B", .. }) => {
                return Ok(Evaluation::Infeasible(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        let mut last_error = None;
        let guesses = warm.copied().into_iter().chain(std::iter::once(default_guess(&v)));
        for guess in guesses {
            match solve_hover_with(&v, &guess, &self.solver) {
                Ok(h) if h.power() > 0.0 => return Ok(Evaluation::Feasible(h)),
                Ok(h) => {
                    last_error = Some(format!("non-positive electrical power {:.4e} W", h.power()))
                }
                Err(e) => last_error = Some(e.to_string()),
            }
        }
        Ok(Evaluation::Infeasible(
            last_error.unwrap_or_else(|| "no hover guess".into()),
        ))
    }

    fn evaluate_lattice(&self, space: &DesignSpace, cap: u64) -> Result<SweepGrid, SearchError> {
        space.validate_lattice()?;
        let points = space.lattice_size();
        if points > cap {
            return Err(SearchError::GridTooLarge { points, cap });
        }
        let axes: Vec<Axis> = space
            .free_indices()
            .into_iter()
            .map(|i| Axis {
                name: DesignVector::NAMES[i].to_string(),
                index: i,
                values: space.ranges[i].samples(),
            })
            .collect();
        let base = space.ranges.map(|r| r.lower);
        let shape: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
        let design_at = |mut flat: usize| {
            let mut a = base;
            for (axis, n) in axes.iter().zip(&shape).rev() {
                a[axis.index] = axis.values[flat % n];
                flat /= n;
            }
            DesignVector::from_array(a)
        };
        let p_s = (0..points as usize)
            .into_par_iter()
            .map(|k| self.evaluate(&design_at(k)).map(|e| e.p_s()))
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(SweepGrid { axes, p_s })
    }

    /// Exhaustive search over the lattice of `space`.
    pub fn grid_search(&self, space: &DesignSpace) -> Result<GridResult, SearchError> {
        self.grid_search_capped(space, DEFAULT_GRID_CAP)
    }

    pub fn grid_search_capped(&self, space: &DesignSpace, cap: u64) -> Result<GridResult, SearchError> {
        let grid = self.evaluate_lattice(space, cap)?;
        let (flat, _) = grid.min().ok_or(SearchError::NoSolution)?;
        let mut a = space.ranges.map(|r| r.lower);
        for (axis, value) in grid.axes.iter().zip(grid.coordinates(flat)) {
            a[axis.index] = value;
        }
        let best = DesignVector::from_array(a);
        let best_hover = match self.evaluate(&best)? {
            Evaluation::Feasible(h) => h,
            Evaluation::Infeasible(_) => return Err(SearchError::NoSolution),
        };
        Ok(GridResult {
            best,
            best_hover,
            grid,
        })
    }

    /// Dense evaluation over one or two free variables, mass held fixed.
    pub fn sweep(&self, space: &DesignSpace) -> Result<SweepGrid, SearchError> {
        let free = space.free_indices().len();
        if !(1..=2).contains(&free) {
            return Err(SearchError::InvalidSpace(format!(
                "a sweep needs 1 or 2 free variables, got {free}"
            )));
        }
        let grid = self.evaluate_lattice(space, DEFAULT_GRID_CAP)?;
        if grid.min().is_none() {
            return Err(SearchError::NoSolution);
        }
        Ok(grid)
    }

    /// Projected quasi-Newton descent from `x0` inside `space`.
    pub fn local_search(
        &self,
        x0: &DesignVector,
        space: &DesignSpace,
        settings: &LocalSearchSettings,
    ) -> Result<LocalResult, SearchError> {
        space.validate()?;
        LocalSearch::new(self, space, settings, x0).run()
    }
}

/// Scores `x` with the quadratic aero model from the default guess.
pub fn evaluate_design(
    base: &BaseConstants,
    masses: &MassModel,
    x: &DesignVector,
) -> Result<Evaluation, ModelError> {
    Problem::new(*base, *masses).evaluate(x)
}

/// A scored iterate in scaled coordinates.
#[derive(Debug, Clone)]
struct Point {
    z: DVector<f64>,
    x: DesignVector,
    f: f64,
    hover: HoverState,
}

/// Local search state. Works in coordinates scaled to `[0, 1]` per free
/// variable; every evaluation is warm-started from the current iterate's
/// hover state so the search follows one equilibrium branch.
struct LocalSearch<'a> {
    problem: &'a Problem,
    space: &'a DesignSpace,
    settings: &'a LocalSearchSettings,
    free: Vec<usize>,
    origin: [f64; 6],
    x0: DesignVector,
    evaluations: usize,
}

impl<'a> LocalSearch<'a> {
    fn new(
        problem: &'a Problem,
        space: &'a DesignSpace,
        settings: &'a LocalSearchSettings,
        x0: &DesignVector,
    ) -> Self {
        let x0 = space.clamp(x0);
        Self {
            problem,
            space,
            settings,
            free: space.free_indices(),
            origin: x0.to_array(),
            x0,
            evaluations: 0,
        }
    }

    fn design(&self, z: &DVector<f64>) -> DesignVector {
        let mut a = self.origin;
        for (k, &i) in self.free.iter().enumerate() {
            let r = &self.space.ranges[i];
            a[i] = r.lower + z[k] * (r.upper - r.lower);
        }
        DesignVector::from_array(a)
    }

    fn scaled(&self, x: &DesignVector) -> DVector<f64> {
        let a = x.to_array();
        DVector::from_iterator(
            self.free.len(),
            self.free.iter().map(|&i| {
                let r = &self.space.ranges[i];
                (a[i] - r.lower) / (r.upper - r.lower)
            }),
        )
    }

    fn eval(&mut self, z: &DVector<f64>, warm: Option<&HoverState>) -> Result<Option<Point>, SearchError> {
        let x = self.design(z);
        self.eval_exact(z, x, warm)
    }

    fn eval_exact(
        &mut self,
        z: &DVector<f64>,
        x: DesignVector,
        warm: Option<&HoverState>,
    ) -> Result<Option<Point>, SearchError> {
        self.evaluations += 1;
        let guess = warm.map(HoverState::unknowns);
        let e = self.problem.evaluate_from(&x, guess.as_ref())?;
        Ok(e.hover().map(|h| Point {
            z: z.clone(),
            x,
            f: h.p_s,
            hover: *h,
        }))
    }

    fn clip(z: &DVector<f64>) -> DVector<f64> {
        z.map(|v| v.clamp(0.0, 1.0))
    }

    fn start(&mut self) -> Result<Point, SearchError> {
        let z0 = self.scaled(&self.x0);
        if let Some(p) = self.eval_exact(&z0, self.x0, None)? {
            return Ok(p);
        }
        // infeasible start: take the best feasible probe within the trust region
        let mut best: Option<Point> = None;
        for k in 0..self.free.len() {
            for sign in [1.0, -1.0] {
                let mut z = z0.clone();
                z[k] += sign * self.settings.trust_radius;
                let z = Self::clip(&z);
                if let Some(p) = self.eval(&z, None)? {
                    if best.as_ref().map_or(true, |b| p.f < b.f) {
                        best = Some(p);
                    }
                }
            }
        }
        best.ok_or(SearchError::InfeasibleStart)
    }

    /// Finite-difference gradient; one-sided at bounds or next to infeasible
    /// points, zero when both sides are unavailable.
    fn gradient(&mut self, at: &Point) -> Result<DVector<f64>, SearchError> {
        let h = self.settings.fd_step;
        let mut g = DVector::zeros(self.free.len());
        for k in 0..self.free.len() {
            let probe = |s: f64| {
                let mut z = at.z.clone();
                z[k] += s;
                z
            };
            let up = probe(h);
            let down = probe(-h);
            let f_up = if up[k] <= 1.0 { self.eval(&up, Some(&at.hover))? } else { None };
            let f_down = if down[k] >= 0.0 { self.eval(&down, Some(&at.hover))? } else { None };
            g[k] = match (f_up, f_down) {
                (Some(u), Some(d)) => (u.f - d.f) / (2.0 * h),
                (Some(u), None) => (u.f - at.f) / h,
                (None, Some(d)) => (at.f - d.f) / h,
                (None, None) => 0.0,
            };
        }
        Ok(g)
    }

    fn active(z: &DVector<f64>, g: &DVector<f64>) -> Vec<bool> {
        z.iter()
            .zip(g.iter())
            .map(|(&zi, &gi)| (zi <= 0.0 && gi > 0.0) || (zi >= 1.0 && gi < 0.0))
            .collect()
    }

    fn projected(z: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
        let act = Self::active(z, g);
        DVector::from_iterator(g.len(), g.iter().zip(act).map(|(&gi, a)| if a { 0.0 } else { gi }))
    }

    /// Looks for a direction of negative curvature at a stationary point and
    /// steps along it. The eigenvector sign is fixed so that its largest
    /// component is positive.
    fn escape(&mut self, at: &Point, g: &DVector<f64>) -> Result<Option<Point>, SearchError> {
        let h = self.settings.hessian_step;
        let act = Self::active(&at.z, g);
        let dims: Vec<usize> = (0..at.z.len())
            .filter(|&k| !act[k] && at.z[k] - h >= 0.0 && at.z[k] + h <= 1.0)
            .collect();
        if dims.is_empty() {
            return Ok(None);
        }
        let n = dims.len();
        let mut hess = DMatrix::zeros(n, n);
        let shifted = |ks: &[(usize, f64)]| {
            let mut z = at.z.clone();
            for &(k, s) in ks {
                z[k] += s;
            }
            z
        };
        for a in 0..n {
            let ka = dims[a];
            let (Some(up), Some(down)) = (
                self.eval(&shifted(&[(ka, h)]), Some(&at.hover))?,
                self.eval(&shifted(&[(ka, -h)]), Some(&at.hover))?,
            ) else {
                return Ok(None);
            };
            hess[(a, a)] = (up.f - 2.0 * at.f + down.f) / (h * h);
            for b in 0..a {
                let kb = dims[b];
                let mut corners = [0.0; 4];
                for (slot, (sa, sb)) in corners.iter_mut().zip([(h, h), (h, -h), (-h, h), (-h, -h)]) {
                    match self.eval(&shifted(&[(ka, sa), (kb, sb)]), Some(&at.hover))? {
                        Some(p) => *slot = p.f,
                        None => return Ok(None),
                    }
                }
                let v = (corners[0] - corners[1] - corners[2] + corners[3]) / (4.0 * h * h);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(hess);
        let (kmin, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty Hessian");
        if lambda >= -self.settings.curvature_tol {
            return Ok(None);
        }
        let mut dir = eig.eigenvectors.column(kmin).into_owned();
        let lead = dir.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if lead < 0.0 {
            dir = -dir;
        }
        let mut full = DVector::zeros(at.z.len());
        for (a, &k) in dims.iter().enumerate() {
            full[k] = dir[a];
        }
        let mut t = 4.0 * self.settings.trust_radius;
        while t >= 1e-6 {
            let z = Self::clip(&(&at.z + &full * t));
            if let Some(p) = self.eval(&z, Some(&at.hover))? {
                if p.f < at.f {
                    return Ok(Some(p));
                }
            }
            t *= 0.5;
        }
        Ok(None)
    }

    fn run(mut self) -> Result<LocalResult, SearchError> {
        let mut current = self.start()?;
        let start_p_s = current.f;
        let start = current.x;
        let dim = self.free.len();
        let finish = |s: &Self, p: &Point, iterations, escapes, termination| LocalResult {
            x: p.x,
            p_s: p.f,
            hover: p.hover,
            start,
            start_p_s,
            iterations,
            evaluations: s.evaluations,
            escapes,
            termination,
        };
        if dim == 0 {
            return Ok(finish(&self, &current, 0, 0, Termination::NoFreeVariables));
        }

        let mut inv_hess = DMatrix::<f64>::identity(dim, dim);
        let mut escapes = 0;
        let mut previous: Option<(DVector<f64>, DVector<f64>)> = None;
        for iteration in 0..self.settings.max_iterations {
            let g = self.gradient(&current)?;
            if let Some((s, g_old)) = previous.take() {
                let y = &g - &g_old;
                let sy = s.dot(&y);
                if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
                    let rho = 1.0 / sy;
                    let eye = DMatrix::<f64>::identity(dim, dim);
                    let left = &eye - &s * y.transpose() * rho;
                    let right = &eye - &y * s.transpose() * rho;
                    inv_hess = &left * &inv_hess * &right + &s * s.transpose() * rho;
                } else {
                    inv_hess = DMatrix::identity(dim, dim);
                }
            }

            let gp = Self::projected(&current.z, &g);
            if gp.norm() < self.settings.grad_tol {
                if escapes < self.settings.max_escapes {
                    if let Some(p) = self.escape(&current, &g)? {
                        escapes += 1;
                        current = p;
                        inv_hess = DMatrix::identity(dim, dim);
                        continue;
                    }
                }
                return Ok(finish(&self, &current, iteration, escapes, Termination::Gradient));
            }

            let act = Self::active(&current.z, &g);
            let mut d = -(&inv_hess * &gp);
            for (k, &a) in act.iter().enumerate() {
                if a {
                    d[k] = 0.0;
                }
            }
            if d.dot(&gp) >= 0.0 {
                inv_hess = DMatrix::identity(dim, dim);
                d = -gp.clone();
            }

            let mut t = 1.0;
            let accepted = loop {
                let z = Self::clip(&(&current.z + &d * t));
                let s = &z - &current.z;
                if s.amax() < self.settings.step_tol {
                    break None;
                }
                if let Some(p) = self.eval(&z, Some(&current.hover))? {
                    if p.f <= current.f + 1e-4 * g.dot(&s) && p.f < current.f {
                        break Some(p);
                    }
                }
                t *= 0.5;
            };
            match accepted {
                Some(p) => {
                    previous = Some((&p.z - &current.z, g));
                    current = p;
                }
                None => {
                    return Ok(finish(&self, &current, iteration, escapes, Termination::StepSize));
                }
            }
        }
        Ok(finish(
            &self,
            &current,
            self.settings.max_iterations,
            escapes,
            Termination::MaxIterations,
        ))
    }
}
