//! Synthetic densities on `[0,1]^d` with analytically known level sets.
//!
//! Every model is built from a region `G` (one or two intervals, balls, or a
//! slab) and a regularity exponent `alpha`. Densities take the form
//!
//! * `alpha > 0`:  `f(x) = gamma + a * s(x) * min(rho(x), cap)^alpha`, where
//!   `s` is +1 inside `G` and -1 outside and `rho` is the distance to the
//!   region boundary;
//! * `alpha = 0`:  the two-level jump density `gamma + h` inside, `gamma - h`
//!   outside;
//! * `gamma = 0`:  the support variant `a * min(rho, cap)^alpha` inside `G`
//!   and exactly zero outside.
//!
//! The amplitude is solved numerically so the density integrates to one, and
//! each model records the regularity constants it achieves so that harness
//! checks can test the theory's inequalities with concrete numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::grid::{CellIndex, DyadicGrid, GridSet};
use crate::quad::{integrate_refined, QuadError};
use crate::scalar::{fmt_g17, Real};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension {0} unsupported (expected 1..=3)")]
    BadDimension(u32),
    #[error("shape invalid for d={d}: {reason}")]
    BadShape { d: u32, reason: String },
    #[error("alpha must be finite and >= 0, got {0}")]
    BadAlpha(String),
    #[error("gamma must be finite and >= 0, got {0}")]
    BadGamma(String),
    #[error("normalization infeasible: {0}")]
    Infeasible(String),
    #[error("point outside [0,1]^d")]
    PointOutOfDomain,
    #[error("point has wrong arity")]
    PointArity,
    #[error("quadrature failure: {0}")]
    Quadrature(#[from] QuadError),
    #[error("sample file parse error at line {line}: {reason}")]
    SampleParse { line: usize, reason: String },
    #[error("grid error: {0}")]
    Grid(#[from] crate::grid::GridError),
}

/// Level-set region. Two-component variants model disjoint pieces.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape<F> {
    /// `[lo, hi]`, d = 1.
    Interval { lo: F, hi: F },
    /// Euclidean ball, d >= 2.
    Ball { center: Vec<F>, radius: F },
    /// Two disjoint intervals, d = 1.
    TwoIntervals { first: (F, F), second: (F, F) },
    /// Two disjoint balls, d >= 2.
    TwoBalls { centers: [Vec<F>; 2], radii: [F; 2] },
    /// Thin axis-aligned slab on the last axis, d >= 2. Negative control
    /// for the inner-cover diagnostic; deliberately violates the level-set
    /// regularity assumption at grid scale.
    Ribbon { lo: F, hi: F },
    /// The uniform density: no level structure at all.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
enum Piece<F> {
    Slab { axis: usize, lo: F, hi: F },
    Ball { center: Vec<F>, radius: F },
}

impl<F: Real> Piece<F> {
    fn contains(&self, x: &[F]) -> bool {
        match self {
            Piece::Slab { axis, lo, hi } => x[*axis] >= *lo && x[*axis] <= *hi,
            Piece::Ball { center, radius } => dist(x, center) <= *radius,
        }
    }

    fn boundary_dist(&self, x: &[F]) -> F {
        match self {
            Piece::Slab { axis, lo, hi } => (x[*axis] - *lo).abs().min((x[*axis] - *hi).abs()),
            Piece::Ball { center, radius } => (dist(x, center) - *radius).abs(),
        }
    }

    fn inradius(&self) -> F {
        match self {
            Piece::Slab { lo, hi, .. } => (*hi - *lo) * F::half(),
            Piece::Ball { radius, .. } => *radius,
        }
    }

    fn measure(&self, d: u32) -> F {
        match self {
            Piece::Slab { lo, hi, .. } => *hi - *lo,
            Piece::Ball { radius, .. } => ball_volume(d, *radius),
        }
    }
}

fn dist<F: Real>(x: &[F], y: &[F]) -> F {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .fold(F::zero(), |s, v| s + v)
        .sqrt()
}

fn ball_volume<F: Real>(d: u32, r: F) -> F {
    match d {
        2 => F::of(std::f64::consts::PI) * r * r,
        3 => F::of(4.0 * std::f64::consts::PI / 3.0) * r * r * r,
        _ => unreachable!("balls require d in 2..=3"),
    }
}

fn sphere_area<F: Real>(d: u32, t: F) -> F {
    match d {
        2 => F::of(2.0 * std::f64::consts::PI) * t,
        3 => F::of(4.0 * std::f64::consts::PI) * t * t,
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind<F> {
    /// gamma > 0, alpha > 0.
    Power { amplitude: F, cap: F },
    /// gamma > 0, alpha = 0.
    Jump { half_gap: F },
    /// gamma = 0 (support estimation target).
    Support { amplitude: F, cap: F },
    Uniform,
}

/// Regularity constants achieved by a constructed model, in the notation of
/// the local-regularity and level-set-regularity assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularityConstants<F> {
    pub c1: F,
    pub c2: F,
    pub delta1: F,
    pub delta2: F,
    pub eps_o: F,
    pub c3: F,
    /// Designated boundary point around which the upper regularity bound
    /// is certified.
    pub x0: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel<F> {
    d: u32,
    gamma: F,
    alpha: F,
    shape: Shape<F>,
    pieces: Vec<Piece<F>>,
    kind: Kind<F>,
    f_max: F,
    norm_residual: F,
    constants: RegularityConstants<F>,
}

const NORM_REL_TOL: f64 = 1e-12;
const MAX_PANELS: usize = 1 << 14;

impl<F: Real> DensityModel<F> {
    /// Builds a normalized density with level `gamma`, regularity exponent
    /// `alpha`, and the given region as its gamma-level set (its support for
    /// `gamma = 0`). The amplitude is solved by bisection so the density
    /// integrates to one; construction fails if no positive amplitude yields
    /// a valid density.
    pub fn new(d: u32, gamma: F, alpha: F, shape: Shape<F>) -> Result<Self, ModelError> {
        if !(1..=3).contains(&d) {
            return Err(ModelError::BadDimension(d));
        }
        if !(alpha.is_finite() && alpha >= F::zero()) {
            return Err(ModelError::BadAlpha(format!("{alpha}")));
        }
        if !(gamma.is_finite() && gamma >= F::zero()) {
            return Err(ModelError::BadGamma(format!("{gamma}")));
        }

        if let Shape::Uniform = shape {
            return Ok(Self::uniform_with(d, gamma, alpha, shape));
        }

        let pieces = decompose(d, &shape)?;
        let inradius = pieces
            .iter()
            .map(|p| p.inradius())
            .fold(F::infinity(), F::min);
        let cap = inradius * F::half();
        check_geometry(d, &pieces, cap)?;

        let measure: F = pieces.iter().map(|p| p.measure(d)).sum();
        let support_mode = gamma == F::zero();
        let jump_mode = alpha == F::zero() && !support_mode;

        let (kind, f_max) = if support_mode {
            let region_integral = capped_power_integral_inside(d, &pieces, alpha, cap)?;
            if region_integral <= F::zero() {
                return Err(ModelError::Infeasible(
                    "support region has zero capped-power mass".into(),
                ));
            }
            let target = |a: F| a * region_integral - F::one();
            let hi = F::two() / region_integral;
            let a = bisect(target, F::zero(), hi).ok_or_else(|| {
                ModelError::Infeasible("no positive amplitude normalizes the support density".into())
            })?;
            (Kind::Support { amplitude: a, cap }, a * cap.powf(alpha))
        } else if jump_mode {
            let signed = F::two() * measure - F::one(); // exact: |G| - |G^c|
            solve_amplitude(gamma, signed, gamma, "jump half-gap")
                .map(|h| (Kind::Jump { half_gap: h }, gamma + h))?
        } else {
            let signed = capped_power_integral_signed(d, &pieces, alpha, cap)?;
            let a_max = gamma / cap.powf(alpha);
            solve_amplitude(gamma, signed, a_max, "power amplitude")
                .map(|a| (Kind::Power { amplitude: a, cap }, gamma + a * cap.powf(alpha)))?
        };

        let constants = derive_constants(d, gamma, alpha, &pieces, kind, cap);

        let mut model = Self {
            d,
            gamma,
            alpha,
            shape,
            pieces,
            kind,
            f_max,
            norm_residual: F::zero(),
            constants,
        };
        let (integral, resid) = model.integral_check()?;
        model.norm_residual = (integral - F::one()).abs().max(resid);
        if model.norm_residual > F::of(1e-9) {
            return Err(ModelError::Infeasible(format!(
                "normalized density integrates to {integral}, residual {}",
                model.norm_residual
            )));
        }
        Ok(model)
    }

    /// The uniform density on `[0,1]^d`; `gamma` is retained because level
    /// queries against a constant density are still meaningful in tests.
    pub fn uniform(d: u32, gamma: F) -> Self {
        Self::uniform_with(d, gamma, F::zero(), Shape::Uniform)
    }

    fn uniform_with(d: u32, gamma: F, alpha: F, shape: Shape<F>) -> Self {
        Self {
            d,
            gamma,
            alpha,
            shape,
            pieces: Vec::new(),
            kind: Kind::Uniform,
            f_max: F::one(),
            norm_residual: F::zero(),
            constants: RegularityConstants {
                c1: F::zero(),
                c2: F::zero(),
                delta1: F::zero(),
                delta2: F::zero(),
                eps_o: F::half(),
                c3: F::one(),
                x0: vec![F::zero(); d as usize],
            },
        }
    }

    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn f_max(&self) -> F {
        self.f_max
    }

    pub fn shape(&self) -> &Shape<F> {
        self.shape_ref()
    }

    fn shape_ref(&self) -> &Shape<F> {
        &self.shape
    }

    pub fn constants(&self) -> &RegularityConstants<F> {
        &self.constants
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, Kind::Uniform)
    }

    pub fn is_support(&self) -> bool {
        matches!(self.kind, Kind::Support { .. })
    }

    /// Residual of the normalization solve, `| int f - 1 |` as tracked by
    /// the quadrature.
    pub fn normalization_residual(&self) -> F {
        self.norm_residual
    }

    fn check_point(&self, x: &[F]) -> Result<(), ModelError> {
        if x.len() != self.d as usize {
            return Err(ModelError::PointArity);
        }
        if x.iter().any(|&v| !(v >= F::zero() && v <= F::one())) {
            return Err(ModelError::PointOutOfDomain);
        }
        Ok(())
    }

    /// Exact analytic density value.
    pub fn density_at(&self, x: &[F]) -> Result<F, ModelError> {
        self.check_point(x)?;
        Ok(self.density_unchecked(x))
    }

    fn density_unchecked(&self, x: &[F]) -> F {
        match self.kind {
            Kind::Uniform => F::one(),
            Kind::Jump { half_gap } => {
                if self.inside(x) {
                    self.gamma + half_gap
                } else {
                    self.gamma - half_gap
                }
            }
            Kind::Power { amplitude, cap } => {
                let rho = self.rho_boundary(x);
                let term = amplitude * rho.min(cap).powf(self.alpha);
                if self.inside(x) {
                    self.gamma + term
                } else {
                    self.gamma - term
                }
            }
            Kind::Support { amplitude, cap } => {
                if self.inside(x) {
                    let rho = self.rho_boundary(x);
                    amplitude * rho.min(cap).powf(self.alpha)
                } else {
                    F::zero()
                }
            }
        }
    }

    fn inside(&self, x: &[F]) -> bool {
        self.pieces.iter().any(|p| p.contains(x))
    }

    fn rho_boundary(&self, x: &[F]) -> F {
        self.pieces
            .iter()
            .map(|p| p.boundary_dist(x))
            .fold(F::infinity(), F::min)
    }

    /// Distance to the boundary of the true level set.
    pub fn boundary_distance(&self, x: &[F]) -> Result<F, ModelError> {
        self.check_point(x)?;
        if self.is_uniform() {
            // The level set is all of the domain (or empty); its boundary is
            // the domain boundary.
            return Ok(x
                .iter()
                .map(|&v| v.min(F::one() - v))
                .fold(F::infinity(), F::min));
        }
        Ok(self.rho_boundary(x))
    }

    /// Whether a point belongs to the true level set. For `gamma > 0` the
    /// set is `{f >= gamma}`; the support target (`gamma = 0`) is the strict
    /// region `{f > 0}`.
    pub fn in_level_set(&self, x: &[F]) -> Result<bool, ModelError> {
        let f = self.density_at(x)?;
        Ok(if self.gamma == F::zero() {
            f > F::zero()
        } else {
            f >= self.gamma
        })
    }

    /// Rasterization of the true level set at resolution `j` by cell-center
    /// membership.
    pub fn true_level_set(&self, j: u32) -> Result<GridSet, ModelError> {
        let grid = DyadicGrid::new(self.d, j)?;
        Ok(GridSet::from_center_predicate::<F, _>(grid, |c| {
            self.in_level_set(c).expect("cell centers are in-domain")
        }))
    }

    /// Probability mass of one grid cell, `P(A)`, by per-cell quadrature.
    pub fn cell_probability(&self, grid: &DyadicGrid, cell: &CellIndex) -> Result<F, ModelError> {
        assert_eq!(grid.dim(), self.d);
        let side = grid.sidelength::<F>();
        if self.is_uniform() {
            return Ok(grid.cell_measure());
        }
        let lo: Vec<F> = cell.coords().iter().map(|&k| F::of_u64(k) * side).collect();
        let hi: Vec<F> = lo.iter().map(|&v| v + side).collect();
        match self.d {
            1 => {
                let mut f = |x: F| self.density_unchecked(&[x]);
                let bps = self.breakpoints_1d(0);
                let (v, _) =
                    integrate_refined(&mut f, lo[0], hi[0], &bps, NORM_REL_TOL, MAX_PANELS)?;
                Ok(v)
            }
            _ => {
                if let Some(axis) = self.slab_only_axis() {
                    // Density varies along one axis only: integrate that
                    // axis, multiply by the cross-section measure.
                    let mut f = |x: F| {
                        let mut p = vec![F::half(); self.d as usize];
                        p[axis] = x;
                        self.density_unchecked(&p)
                    };
                    let bps = self.breakpoints_1d(axis);
                    let (v, _) = integrate_refined(
                        &mut f,
                        lo[axis],
                        hi[axis],
                        &bps,
                        NORM_REL_TOL,
                        MAX_PANELS,
                    )?;
                    let cross: F = (0..self.d as usize)
                        .filter(|&i| i != axis)
                        .map(|_| side)
                        .product();
                    Ok(v * cross)
                } else {
                    self.tensor_cell_integral(&lo, &hi)
                }
            }
        }
    }

    /// Average density over one cell, `P(A) / mu(A)`.
    pub fn cell_mean_density(&self, grid: &DyadicGrid, cell: &CellIndex) -> Result<F, ModelError> {
        Ok(self.cell_probability(grid, cell)? / grid.cell_measure())
    }

    fn slab_only_axis(&self) -> Option<usize> {
        let mut axis = None;
        for p in &self.pieces {
            match p {
                Piece::Slab { axis: a, .. } => match axis {
                    None => axis = Some(*a),
                    Some(prev) if prev == *a => {}
                    _ => return None,
                },
                Piece::Ball { .. } => return None,
            }
        }
        axis
    }

    /// Kink locations of the 1-d density profile along `axis`.
    fn breakpoints_1d(&self, axis: usize) -> Vec<F> {
        let mut bounds: Vec<F> = Vec::new();
        for p in &self.pieces {
            if let Piece::Slab { axis: a, lo, hi } = p {
                if *a == axis {
                    bounds.push(*lo);
                    bounds.push(*hi);
                }
            }
        }
        bounds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cap = match self.kind {
            Kind::Power { cap, .. } | Kind::Support { cap, .. } => cap,
            _ => F::zero(),
        };
        let mut bps = Vec::new();
        for w in bounds.windows(2) {
            bps.push((w[0] + w[1]) * F::half());
        }
        for &b in &bounds {
            bps.push(b);
            if cap > F::zero() {
                bps.push(b - cap);
                bps.push(b + cap);
            }
        }
        bps
    }

    fn tensor_cell_integral(&self, lo: &[F], hi: &[F]) -> Result<F, ModelError> {
        // Tensorized composite Gauss-Legendre with panel doubling; the
        // integrand is continuous (kinks only), so refinement converges.
        let mut prev: Option<F> = None;
        let mut panels = 2usize;
        loop {
            let v = self.tensor_pass(lo, hi, panels);
            if let Some(p) = prev {
                let resid = (v - p).abs();
                if resid <= v.abs().max(F::one()) * F::of(1e-8) {
                    return Ok(v);
                }
                if panels >= 64 {
                    return Err(ModelError::Quadrature(QuadError::NotConverged {
                        residual: resid.to_f64().unwrap_or(f64::NAN),
                    }));
                }
            }
            prev = Some(v);
            panels *= 2;
        }
    }

    fn tensor_pass(&self, lo: &[F], hi: &[F], panels: usize) -> F {
        const NODES: usize = 8;
        let gl_x: [f64; 8] = [
            -0.9602898564975363,
            -0.7966664774136267,
            -0.525532409916329,
            -0.18343464249564978,
            0.18343464249564978,
            0.525532409916329,
            0.7966664774136267,
            0.9602898564975363,
        ];
        let gl_w: [f64; 8] = [
            0.10122853629037669,
            0.22238103445337434,
            0.31370664587788705,
            0.36268378337836177,
            0.36268378337836177,
            0.31370664587788705,
            0.22238103445337434,
            0.10122853629037669,
        ];
        let d = self.d as usize;
        let pts = panels * NODES;
        let mut axis_nodes: Vec<Vec<(F, F)>> = Vec::with_capacity(d);
        for i in 0..d {
            let mut nodes = Vec::with_capacity(pts);
            let step = (hi[i] - lo[i]) / F::of_usize(panels);
            for p in 0..panels {
                let a = lo[i] + step * F::of_usize(p);
                let half = step * F::half();
                let mid = a + half;
                for k in 0..NODES {
                    nodes.push((mid + half * F::of(gl_x[k]), half * F::of(gl_w[k])));
                }
            }
            axis_nodes.push(nodes);
        }
        let mut total = F::zero();
        let mut idx = vec![0usize; d];
        let mut x = vec![F::zero(); d];
        'outer: loop {
            let mut w = F::one();
            for i in 0..d {
                let (xi, wi) = axis_nodes[i][idx[i]];
                x[i] = xi;
                w = w * wi;
            }
            total = total + w * self.density_unchecked(&x);
            for i in (0..d).rev() {
                idx[i] += 1;
                if idx[i] < pts {
                    continue 'outer;
                }
                idx[i] = 0;
                if i == 0 {
                    break 'outer;
                }
            }
        }
        total
    }

    fn integral_check(&self) -> Result<(F, F), ModelError> {
        if self.is_uniform() {
            return Ok((F::one(), F::zero()));
        }
        match self.d {
            1 => {
                let mut f = |x: F| self.density_unchecked(&[x]);
                let bps = self.breakpoints_1d(0);
                let (v, r) =
                    integrate_refined(&mut f, F::zero(), F::one(), &bps, NORM_REL_TOL, MAX_PANELS)?;
                Ok((v, r))
            }
            _ => {
                if let Some(axis) = self.slab_only_axis() {
                    let mut f = |x: F| {
                        let mut p = vec![F::half(); self.d as usize];
                        p[axis] = x;
                        self.density_unchecked(&p)
                    };
                    let bps = self.breakpoints_1d(axis);
                    let (v, r) = integrate_refined(
                        &mut f,
                        F::zero(),
                        F::one(),
                        &bps,
                        NORM_REL_TOL,
                        MAX_PANELS,
                    )?;
                    Ok((v, r))
                } else {
                    self.radial_integral_check()
                }
            }
        }
    }

    /// Integral of the full density over the domain for ball shapes, using
    /// the radial decomposition (exact because every cap shell lies strictly
    /// inside the domain, so the density is constant elsewhere).
    fn radial_integral_check(&self) -> Result<(F, F), ModelError> {
        let (amp, cap, base_in, base_out) = match self.kind {
            Kind::Power { amplitude, cap } => (amplitude, cap, self.gamma, self.gamma),
            Kind::Support { amplitude, cap } => (amplitude, cap, F::zero(), F::zero()),
            _ => unreachable!("radial check applies to power/support ball models"),
        };
        let support = matches!(self.kind, Kind::Support { .. });
        let mut total = F::zero();
        let mut resid = F::zero();
        let mut shells_volume = F::zero();
        let mut deep_volume = F::zero();
        for p in &self.pieces {
            let (r, _z) = match p {
                Piece::Ball { radius, center } => (*radius, center),
                _ => unreachable!(),
            };
            let d = self.d;
            let alpha = self.alpha;
            let lo = r - cap;
            let hi = if support { r } else { r + cap };
            let mut g = |t: F| {
                let dev = (t - r).abs().min(cap).powf(alpha);
                let signed = if t < r { dev } else { -dev };
                let value = if support {
                    amp * dev
                } else {
                    self.gamma + amp * signed
                };
                value * sphere_area::<F>(d, t)
            };
            let (v, rr) = integrate_refined(&mut g, lo, hi, &[r], NORM_REL_TOL, MAX_PANELS)?;
            total = total + v;
            resid = resid + rr;
            shells_volume = shells_volume + ball_volume(d, hi) - ball_volume(d, lo);
            deep_volume = deep_volume + ball_volume(d, lo);
        }
        // Deep inside each ball the density is constant base_in + amp*cap^a;
        // outside all shells it is base_out - amp*cap^a (or 0 for support).
        let peak = amp * cap.powf(self.alpha);
        total = total + (base_in + peak) * deep_volume;
        if !support {
            let outer = F::one() - shells_volume - deep_volume;
            total = total + (base_out - peak) * outer;
        }
        Ok((total, resid))
    }

    /// Exact rejection sampling: uniform proposals accepted with
    /// probability `f(x)/f_max`. Deterministic for a given seed.
    pub fn sample(&self, n: u64, seed: u64) -> SampleSet<F> {
        assert!(n >= 1, "sample size must be positive");
        let d = self.d as usize;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(n as usize * d);
        let mut proposal = vec![F::zero(); d];
        let mut proposals = 0u64;
        let mut accepted = 0u64;
        while accepted < n {
            proposals += 1;
            for slot in proposal.iter_mut() {
                *slot = F::of(rng.random::<f64>());
            }
            let u: f64 = rng.random();
            if F::of(u) * self.f_max < self.density_unchecked(&proposal) {
                points.extend_from_slice(&proposal);
                accepted += 1;
            }
        }
        SampleSet {
            d: self.d,
            n,
            seed,
            points,
            acceptance_rate: F::of_u64(n) / F::of_u64(proposals),
        }
    }
}

fn decompose<F: Real>(d: u32, shape: &Shape<F>) -> Result<Vec<Piece<F>>, ModelError> {
    let bad = |reason: &str| ModelError::BadShape {
        d,
        reason: reason.into(),
    };
    let check_interval = |lo: F, hi: F| -> Result<(), ModelError> {
        if !(F::zero() < lo && lo < hi && hi < F::one()) {
            return Err(bad("interval endpoints must satisfy 0 < lo < hi < 1"));
        }
        Ok(())
    };
    let check_ball = |center: &[F], radius: F| -> Result<(), ModelError> {
        if center.len() != d as usize {
            return Err(bad("ball center arity differs from d"));
        }
        if !(radius > F::zero()) {
            return Err(bad("ball radius must be positive"));
        }
        let face = center
            .iter()
            .map(|&z| z.min(F::one() - z))
            .fold(F::infinity(), F::min);
        if face <= radius {
            return Err(bad("ball must lie strictly inside the domain"));
        }
        Ok(())
    };
    match shape {
        Shape::Interval { lo, hi } => {
            if d != 1 {
                return Err(bad("interval shapes require d = 1"));
            }
            check_interval(*lo, *hi)?;
            Ok(vec![Piece::Slab {
                axis: 0,
                lo: *lo,
                hi: *hi,
            }])
        }
        Shape::TwoIntervals { first, second } => {
            if d != 1 {
                return Err(bad("two-interval shapes require d = 1"));
            }
            check_interval(first.0, first.1)?;
            check_interval(second.0, second.1)?;
            if !(first.1 < second.0) {
                return Err(bad("the two intervals must be disjoint and ordered"));
            }
            Ok(vec![
                Piece::Slab {
                    axis: 0,
                    lo: first.0,
                    hi: first.1,
                },
                Piece::Slab {
                    axis: 0,
                    lo: second.0,
                    hi: second.1,
                },
            ])
        }
        Shape::Ball { center, radius } => {
            if d < 2 {
                return Err(bad("ball shapes require d >= 2"));
            }
            check_ball(center, *radius)?;
            Ok(vec![Piece::Ball {
                center: center.clone(),
                radius: *radius,
            }])
        }
        Shape::TwoBalls { centers, radii } => {
            if d < 2 {
                return Err(bad("two-ball shapes require d >= 2"));
            }
            check_ball(&centers[0], radii[0])?;
            check_ball(&centers[1], radii[1])?;
            let gap = dist(&centers[0], &centers[1]) - radii[0] - radii[1];
            if !(gap > F::zero()) {
                return Err(bad("the two balls must be disjoint"));
            }
            Ok(vec![
                Piece::Ball {
                    center: centers[0].clone(),
                    radius: radii[0],
                },
                Piece::Ball {
                    center: centers[1].clone(),
                    radius: radii[1],
                },
            ])
        }
        Shape::Ribbon { lo, hi } => {
            if d < 2 {
                return Err(bad("ribbon shapes require d >= 2 (use interval in d = 1)"));
            }
            check_interval(*lo, *hi)?;
            Ok(vec![Piece::Slab {
                axis: d as usize - 1,
                lo: *lo,
                hi: *hi,
            }])
        }
        Shape::Uniform => unreachable!("uniform handled by caller"),
    }
}

/// Geometric requirements for the exact radial treatment of ball shapes:
/// cap shells must stay inside the domain and must not touch each other.
fn check_geometry<F: Real>(d: u32, pieces: &[Piece<F>], cap: F) -> Result<(), ModelError> {
    let balls: Vec<(&Vec<F>, F)> = pieces
        .iter()
        .filter_map(|p| match p {
            Piece::Ball { center, radius } => Some((center, *radius)),
            _ => None,
        })
        .collect();
    for (z, r) in &balls {
        let face = z
            .iter()
            .map(|&v| v.min(F::one() - v))
            .fold(F::infinity(), F::min);
        if face < *r + cap {
            return Err(ModelError::BadShape {
                d,
                reason: "ball cap shell extends outside the domain; shrink the radius".into(),
            });
        }
    }
    if balls.len() == 2 {
        let gap = dist(balls[0].0, balls[1].0) - balls[0].1 - balls[1].1;
        if gap < F::two() * cap {
            return Err(ModelError::BadShape {
                d,
                reason: "ball cap shells overlap; separate the components".into(),
            });
        }
    }
    Ok(())
}

/// `int_G min(rho, cap)^alpha` for slab pieces by 1-d quadrature, for ball
/// pieces by the radial decomposition.
fn capped_power_integral_inside<F: Real>(
    d: u32,
    pieces: &[Piece<F>],
    alpha: F,
    cap: F,
) -> Result<F, ModelError> {
    signed_or_inside_integral(d, pieces, alpha, cap, false)
}

/// `int s(x) min(rho, cap)^alpha` over the whole domain.
fn capped_power_integral_signed<F: Real>(
    d: u32,
    pieces: &[Piece<F>],
    alpha: F,
    cap: F,
) -> Result<F, ModelError> {
    signed_or_inside_integral(d, pieces, alpha, cap, true)
}

fn signed_or_inside_integral<F: Real>(
    d: u32,
    pieces: &[Piece<F>],
    alpha: F,
    cap: F,
    signed: bool,
) -> Result<F, ModelError> {
    let slab_axis = {
        let mut axis = None;
        let mut ok = true;
        for p in pieces {
            match p {
                Piece::Slab { axis: a, .. } => match axis {
                    None => axis = Some(*a),
                    Some(prev) if prev == *a => {}
                    _ => ok = false,
                },
                Piece::Ball { .. } => ok = false,
            }
        }
        if ok {
            axis
        } else {
            None
        }
    };

    if let Some(axis) = slab_axis {
        let bounds: Vec<(F, F)> = pieces
            .iter()
            .map(|p| match p {
                Piece::Slab { lo, hi, .. } => (*lo, *hi),
                _ => unreachable!(),
            })
            .collect();
        let inside = |t: F| bounds.iter().any(|&(lo, hi)| t >= lo && t <= hi);
        let rho = |t: F| {
            bounds
                .iter()
                .flat_map(|&(lo, hi)| [(t - lo).abs(), (t - hi).abs()])
                .fold(F::infinity(), F::min)
        };
        let mut g = |t: F| {
            let v = rho(t).min(cap).powf(alpha);
            if inside(t) {
                v
            } else if signed {
                -v
            } else {
                F::zero()
            }
        };
        let mut bps = Vec::new();
        let mut edges: Vec<F> = bounds.iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in edges.windows(2) {
            bps.push((w[0] + w[1]) * F::half());
        }
        for &b in &edges {
            bps.push(b);
            bps.push(b - cap);
            bps.push(b + cap);
        }
        let _ = axis;
        let (v, _) = integrate_refined(&mut g, F::zero(), F::one(), &bps, NORM_REL_TOL, MAX_PANELS)?;
        return Ok(v);
    }

    // Ball pieces: radial decomposition. rho is piecewise radial because
    // shells are disjoint and well inside the domain.
    let mut total = F::zero();
    let mut shells_and_deep = F::zero();
    for p in pieces {
        let (z, r) = match p {
            Piece::Ball { center, radius } => (center, *radius),
            _ => unreachable!(),
        };
        let _ = z;
        let lo = r - cap;
        let hi = if signed { r + cap } else { r };
        let mut g = |t: F| {
            let v = (t - r).abs().min(cap).powf(alpha);
            let v = if t < r || !signed { v } else { -v };
            v * sphere_area::<F>(d, t)
        };
        let (v, _) = integrate_refined(&mut g, lo, hi, &[r], NORM_REL_TOL, MAX_PANELS)?;
        total = total + v;
        // Deep interior contributes the capped constant.
        total = total + cap.powf(alpha) * ball_volume(d, lo);
        shells_and_deep = shells_and_deep + ball_volume(d, hi);
    }
    if signed {
        // Everything outside all shells sits at capped distance outside G.
        total = total - cap.powf(alpha) * (F::one() - shells_and_deep);
    }
    Ok(total)
}

/// Solves `gamma + a * signed_integral = 1` for `a` in `(0, a_max]` by
/// bisection. A flat objective (signed integral ~ 0) is feasible only at
/// `gamma = 1`, where the amplitude is unconstrained; the midpoint of the
/// valid range is used so the density dips to `gamma / 2`.
fn solve_amplitude<F: Real>(
    gamma: F,
    signed_integral: F,
    a_max: F,
    what: &str,
) -> Result<(F, F), ModelError>
where
    (F, F): Sized,
{
    let tol = F::of(1e-12);
    if signed_integral.abs() <= tol {
        if (gamma - F::one()).abs() <= tol {
            return Ok((a_max * F::half(), a_max * F::half()));
        }
        return Err(ModelError::Infeasible(format!(
            "signed region integral is zero (symmetric region) but gamma = {gamma} != 1; \
             no {what} can normalize the density"
        )));
    }
    let g = |a: F| gamma + a * signed_integral - F::one();
    let (mut lo, mut hi) = (F::zero(), a_max);
    let (glo, ghi) = (g(lo), g(hi));
    if glo.abs() <= tol {
        return Err(ModelError::Infeasible(format!(
            "gamma = {gamma} already integrates to one with zero amplitude; \
             the level structure would be degenerate"
        )));
    }
    if glo * ghi > F::zero() {
        return Err(ModelError::Infeasible(format!(
            "no {what} in (0, {a_max}] normalizes the density \
             (needs amplitude {}, which violates positivity or sign)",
            (F::one() - gamma) / signed_integral
        )));
    }
    for _ in 0..200 {
        let mid = (lo + hi) * F::half();
        if g(mid) * g(lo) <= F::zero() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let a = (lo + hi) * F::half();
    if !(a > F::zero()) {
        return Err(ModelError::Infeasible(format!(
            "{what} collapsed to zero during bisection"
        )));
    }
    Ok((a, a))
}

fn derive_constants<F: Real>(
    d: u32,
    _gamma: F,
    alpha: F,
    pieces: &[Piece<F>],
    kind: Kind<F>,
    cap: F,
) -> RegularityConstants<F> {
    let (c1, c2, delta1) = match kind {
        Kind::Power { amplitude, cap } | Kind::Support { amplitude, cap } => (
            amplitude,
            amplitude,
            amplitude * cap.powf(alpha) * F::half(),
        ),
        Kind::Jump { half_gap } => (half_gap, half_gap, half_gap),
        Kind::Uniform => (F::zero(), F::zero(), F::zero()),
    };
    let min_inradius = pieces
        .iter()
        .map(|p| p.inradius())
        .fold(F::infinity(), F::min);
    let eps_o = if pieces.len() == 2 {
        let gap = match (&pieces[0], &pieces[1]) {
            (Piece::Slab { hi, .. }, Piece::Slab { lo, .. }) => *lo - *hi,
            (Piece::Ball { center: z1, radius: r1 }, Piece::Ball { center: z2, radius: r2 }) => {
                dist(z1, z2) - *r1 - *r2
            }
            _ => min_inradius,
        };
        min_inradius.min(gap * F::of(0.25))
    } else {
        min_inradius
    };
    let x0 = match &pieces[0] {
        Piece::Slab { axis, lo, .. } => {
            let mut p = vec![F::half(); d as usize];
            p[*axis] = *lo;
            p
        }
        Piece::Ball { center, radius } => {
            let mut p = center.clone();
            p[0] = p[0] + *radius;
            p
        }
    };
    RegularityConstants {
        c1,
        c2,
        delta1,
        delta2: cap,
        eps_o,
        c3: F::one(),
        x0,
    }
}

/// An i.i.d. sample from a model. Regenerating with the same
/// `(model, n, seed)` reproduces the points bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<F> {
    d: u32,
    n: u64,
    seed: u64,
    points: Vec<F>,
    acceptance_rate: F,
}

impl<F: Real> SampleSet<F> {
    pub fn dim(&self) -> u32 {
        self.d
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn acceptance_rate(&self) -> F {
        self.acceptance_rate
    }

    pub fn row(&self, i: usize) -> &[F] {
        let d = self.d as usize;
        &self.points[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.points.chunks_exact(self.d as usize)
    }

    /// CSV encoding: a `# d=.. n=.. seed=..` header line, then one row of
    /// coordinates per sample at 17 significant digits.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# d={} n={} seed={}\n", self.d, self.n, self.seed);
        for row in self.rows() {
            let fields: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(s: &str) -> Result<Self, ModelError> {
        let mut lines = s.lines().enumerate();
        let (_, header) = lines.next().ok_or(ModelError::SampleParse {
            line: 1,
            reason: "empty file".into(),
        })?;
        let header = header.strip_prefix("# ").ok_or(ModelError::SampleParse {
            line: 1,
            reason: "expected `# d=.. n=.. seed=..` header".into(),
        })?;
        let mut d: Option<u32> = None;
        let mut n: Option<u64> = None;
        let mut seed: Option<u64> = None;
        for tok in header.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or(ModelError::SampleParse {
                line: 1,
                reason: format!("malformed header token `{tok}`"),
            })?;
            let parse_err = |_| ModelError::SampleParse {
                line: 1,
                reason: format!("invalid integer in `{tok}`"),
            };
            match k {
                "d" => d = Some(v.parse().map_err(parse_err)?),
                "n" => n = Some(v.parse().map_err(parse_err)?),
                "seed" => seed = Some(v.parse().map_err(parse_err)?),
                _ => {
                    return Err(ModelError::SampleParse {
                        line: 1,
                        reason: format!("unknown header key `{k}`"),
                    })
                }
            }
        }
        let (d, n, seed) = match (d, n, seed) {
            (Some(d), Some(n), Some(seed)) => (d, n, seed),
            _ => {
                return Err(ModelError::SampleParse {
                    line: 1,
                    reason: "header must define d, n and seed".into(),
                })
            }
        };
        let mut points = Vec::with_capacity(n as usize * d as usize);
        let mut rows = 0u64;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = idx + 1;
            let mut fields = 0;
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| ModelError::SampleParse {
                    line: line_no,
                    reason: format!("invalid float `{field}`"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(ModelError::SampleParse {
                        line: line_no,
                        reason: format!("coordinate {v} outside [0,1]"),
                    });
                }
                points.push(F::of(v));
                fields += 1;
            }
            if fields != d as usize {
                return Err(ModelError::SampleParse {
                    line: line_no,
                    reason: format!("expected {d} fields, found {fields}"),
                });
            }
            rows += 1;
        }
        if rows != n {
            return Err(ModelError::SampleParse {
                line: rows as usize + 1,
                reason: format!("header declares n={n} but file has {rows} rows"),
            });
        }
        Ok(Self {
            d,
            n,
            seed,
            points,
            acceptance_rate: F::nan(),
        })
    }
}

/// Default interval endpoints used by the experiment harness. Deliberately
/// non-dyadic so that no cell average ties the level exactly at any
/// resolution.
pub fn default_interval<F: Real>() -> Shape<F> {
    Shape::Interval {
        lo: F::of(0.23),
        hi: F::of(0.73),
    }
}
