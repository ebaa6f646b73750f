//! Reduced and full Coulomb vector fields, their derivatives, conserved
//! quantities, the action, and joint propagation of state and sensitivities.
//!
//! Units: electron charge `q = -1`, mass `m = 1`, Coulomb constant `κ = 1`.
//! The nucleus sits at the origin with charge `Q`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CollisionKind, Error, Result};
use crate::integrator::{Dop853, IntegratorConfig, OdeSystem};
use crate::symmetry::{PolyhedralGroup, TwistSpec};

/// Denominators below this abort the evaluation with a collision error.
pub const COLLISION_GUARD: f64 = 1e-8;

/// State of the generating particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub u: [f64; 3],
    pub v: [f64; 3],
}

impl ReducedState {
    pub fn new(u: Vector3<f64>, v: Vector3<f64>) -> Self {
        ReducedState {
            u: [u[0], u[1], u[2]],
            v: [v[0], v[1], v[2]],
        }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        ReducedState {
            u: [x[0], x[1], x[2]],
            v: [x[3], x[4], x[5]],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.u[0], self.u[1], self.u[2], self.v[0], self.v[1], self.v[2]]
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.u)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::from(self.v)
    }
}

/// Which parameter a continuation varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Central charge `Q`.
    Charge,
    /// Forcing weight `ε`.
    Forcing,
}

/// A time-dependent forcing `ψ(t)` subtracted from the vector field as `ε ψ(t)`.
pub trait Forcing: Send + Sync {
    fn psi(&self, t: f64) -> Result<[f64; 6]>;
}

/// Problem constants shared by every stage.
#[derive(Clone)]
pub struct ProblemParams {
    pub q: f64,
    pub epsilon: f64,
    pub period: f64,
    pub group: Arc<PolyhedralGroup>,
    pub twist: TwistSpec,
    /// Electron–electron repulsion on/off. Off reduces each electron to a Kepler problem.
    pub interactions: bool,
}

impl ProblemParams {
    pub fn new(group: Arc<PolyhedralGroup>, twist: TwistSpec, q: f64) -> Self {
        ProblemParams {
            q,
            epsilon: 0.0,
            period: 1.0,
            group,
            twist,
            interactions: true,
        }
    }

    pub fn n_electrons(&self) -> usize {
        self.group.order()
    }

    /// Length of the fundamental interval `T/M`.
    pub fn fundamental_time(&self) -> f64 {
        self.period / self.twist.repetitions as f64
    }

    /// `μ = Q^{-1/3}`, the electron coupling after rescaling positions by `Q^{1/3}`.
    pub fn mu(&self) -> f64 {
        self.q.powf(-1.0 / 3.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) {
            return Err(Error::Domain(format!("central charge Q = {} must be positive", self.q)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Domain(format!("forcing weight {} outside [0, 1]", self.epsilon)));
        }
        Ok(())
    }
}

/// A vector field with state and parameter derivatives.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Dense row-major `dim × dim` Jacobian `∂f/∂x`.
    fn jacobian(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
    /// Derivative with respect to the active continuation parameter.
    fn param_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()>;
}

/// Hessian-like kernel `I/|w|³ − 3 w wᵀ/|w|⁵`.
#[inline]
fn kernel(w: &Vector3<f64>, r: f64) -> Matrix3<f64> {
    let r3 = r * r * r;
    let r5 = r3 * r * r;
    Matrix3::identity() / r3 - w * w.transpose() * (3.0 / r5)
}

/// The first-order system of the generating particle,
/// `u̇ = v`, `v̇ = Σ_{R≠I} (I−R)u/|(R−I)u|³ − Q u/|u|³ − ε ψ(t)`.
#[derive(Clone)]
pub struct ReducedField {
    /// Non-identity rotations and their indices in the group's element list.
    rotations: Vec<(usize, Matrix3<f64>)>,
    pub q: f64,
    pub epsilon: f64,
    pub interactions: bool,
    pub forcing: Option<Arc<dyn Forcing>>,
    pub param: ParamKind,
}

impl ReducedField {
    pub fn new(group: &PolyhedralGroup, q: f64) -> Self {
        ReducedField {
            rotations: group
                .elements
                .iter()
                .enumerate()
                .filter(|(_, e)| !e.is_identity())
                .map(|(i, e)| (i, e.matrix))
                .collect(),
            q,
            epsilon: 0.0,
            interactions: true,
            forcing: None,
            param: ParamKind::Charge,
        }
    }

    pub fn from_params(params: &ProblemParams) -> Self {
        let mut f = ReducedField::new(&params.group, params.q);
        f.epsilon = params.epsilon;
        f.interactions = params.interactions;
        f
    }

    pub fn with_forcing(mut self, forcing: Arc<dyn Forcing>, epsilon: f64) -> Self {
        self.forcing = Some(forcing);
        self.epsilon = epsilon;
        self
    }

    pub fn with_param(mut self, param: ParamKind) -> Self {
        self.param = param;
        self
    }

    fn check_nucleus(u: &Vector3<f64>) -> Result<f64> {
        let r = u.norm();
        if r < COLLISION_GUARD {
            return Err(Error::Collision {
                kind: CollisionKind::Nucleus,
                distance: r,
                time: None,
            });
        }
        Ok(r)
    }

    fn check_axis(idx: usize, w: &Vector3<f64>) -> Result<f64> {
        let r = w.norm();
        if r < COLLISION_GUARD {
            return Err(Error::Collision {
                kind: CollisionKind::Axis(idx),
                distance: r,
                time: None,
            });
        }
        Ok(r)
    }

    /// Acceleration of the autonomous field (no forcing).
    pub fn acceleration(&self, u: &Vector3<f64>) -> Result<Vector3<f64>> {
        let r = Self::check_nucleus(u)?;
        let mut acc = -u * (self.q / (r * r * r));
        if self.interactions {
            for (idx, m) in &self.rotations {
                let w = m * u - u;
                let d = Self::check_axis(*idx, &w)?;
                acc -= w / (d * d * d);
            }
        }
        Ok(acc)
    }

    /// `∂v̇/∂u`, the only non-trivial block of the Jacobian.
    pub fn acceleration_jacobian(&self, u: &Vector3<f64>) -> Result<Matrix3<f64>> {
        let r = Self::check_nucleus(u)?;
        let mut k = -kernel(u, r) * self.q;
        if self.interactions {
            for (idx, m) in &self.rotations {
                let w = m * u - u;
                let d = Self::check_axis(*idx, &w)?;
                k -= kernel(&w, d) * (m - Matrix3::identity());
            }
        }
        Ok(k)
    }

    /// Autonomous part `f(x)` of the field.
    pub fn autonomous(&self, x: &[f64; 6]) -> Result<[f64; 6]> {
        let a = self.acceleration(&Vector3::new(x[0], x[1], x[2]))?;
        Ok([x[3], x[4], x[5], a[0], a[1], a[2]])
    }

    /// Full field including the forcing term at time `t`.
    pub fn field(&self, t: f64, x: &[f64; 6]) -> Result<[f64; 6]> {
        let mut f = self.autonomous(x)?;
        if let (Some(forcing), true) = (&self.forcing, self.epsilon != 0.0) {
            let psi = forcing.psi(t)?;
            for i in 0..6 {
                f[i] -= self.epsilon * psi[i];
            }
        }
        Ok(f)
    }

    pub fn jacobian6(&self, x: &[f64; 6]) -> Result<Matrix6<f64>> {
        let k = self.acceleration_jacobian(&Vector3::new(x[0], x[1], x[2]))?;
        let mut j = Matrix6::zeros();
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        j.fixed_view_mut::<3, 3>(3, 0).copy_from(&k);
        Ok(j)
    }

    pub fn dparam(&self, t: f64, x: &[f64; 6]) -> Result<[f64; 6]> {
        match self.param {
            ParamKind::Charge => {
                let u = Vector3::new(x[0], x[1], x[2]);
                let r = Self::check_nucleus(&u)?;
                let g = -u / (r * r * r);
                Ok([0.0, 0.0, 0.0, g[0], g[1], g[2]])
            }
            ParamKind::Forcing => match &self.forcing {
                Some(forcing) => {
                    let psi = forcing.psi(t)?;
                    Ok(psi.map(|p| -p))
                }
                None => Ok([0.0; 6]),
            },
        }
    }

    /// Conserved energy `½|v|² + ½Σ 1/|(R−I)u| − Q/|u|` of the autonomous field.
    pub fn energy(&self, x: &[f64; 6]) -> Result<f64> {
        let u = Vector3::new(x[0], x[1], x[2]);
        let v = Vector3::new(x[3], x[4], x[5]);
        Ok(0.5 * v.norm_squared() + self.interaction_potential(&u)? - self.q / Self::check_nucleus(&u)?)
    }

    /// Reduced Lagrangian `½|v|² − ½Σ 1/|(R−I)u| + Q/|u|`.
    pub fn lagrangian(&self, x: &[f64; 6]) -> Result<f64> {
        let u = Vector3::new(x[0], x[1], x[2]);
        let v = Vector3::new(x[3], x[4], x[5]);
        Ok(0.5 * v.norm_squared() - self.interaction_potential(&u)? + self.q / Self::check_nucleus(&u)?)
    }

    fn interaction_potential(&self, u: &Vector3<f64>) -> Result<f64> {
        if !self.interactions {
            return Ok(0.0);
        }
        let mut s = 0.0;
        for (idx, m) in &self.rotations {
            let w = m * u - u;
            s += 0.5 / Self::check_axis(*idx, &w)?;
        }
        Ok(s)
    }

    /// Hessian in `u` of `−½Σ 1/|(R−I)u| + Q/|u|`, assembled from the
    /// symmetric form `Mᵀ K M` of each term.
    pub fn potential_hessian(&self, u: &Vector3<f64>) -> Result<Matrix3<f64>> {
        let r = Self::check_nucleus(u)?;
        // Hessian of 1/|u| is −K(u).
        let mut h = -kernel(u, r) * self.q;
        if self.interactions {
            for (idx, m) in &self.rotations {
                let mm = m - Matrix3::identity();
                let w = mm * u;
                let d = Self::check_axis(*idx, &w)?;
                h += mm.transpose() * kernel(&w, d) * mm * 0.5;
            }
        }
        Ok(h)
    }
}

fn arr6(x: &[f64]) -> [f64; 6] {
    [x[0], x[1], x[2], x[3], x[4], x[5]]
}

impl VectorField for ReducedField {
    fn dim(&self) -> usize {
        6
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.field(t, &arr6(x))?);
        Ok(())
    }

    fn jacobian(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let j = self.jacobian6(&arr6(x))?;
        for r in 0..6 {
            for c in 0..6 {
                out[r * 6 + c] = j[(r, c)];
            }
        }
        Ok(())
    }

    fn param_derivative(&self, t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.dparam(t, &arr6(x))?);
        Ok(())
    }
}

/// State of all `N` electrons: positions then velocities, ordered like the group elements.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl FullState {
    /// Symmetric configuration `u_R = R u_I`, `v_R = R v_I`.
    pub fn symmetric(group: &PolyhedralGroup, x: &ReducedState) -> Self {
        let (u, v) = (x.position(), x.velocity());
        FullState {
            positions: group.elements.iter().map(|e| e.matrix * u).collect(),
            velocities: group.elements.iter().map(|e| e.matrix * v).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(6 * self.len());
        for p in self.positions.iter().chain(&self.velocities) {
            out.extend_from_slice(p.as_slice());
        }
        out
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let n = x.len() / 6;
        let vec3 = |k: usize| Vector3::new(x[3 * k], x[3 * k + 1], x[3 * k + 2]);
        FullState {
            positions: (0..n).map(vec3).collect(),
            velocities: (n..2 * n).map(vec3).collect(),
        }
    }
}

/// The unreduced `N`-electron field `ü_i = Σ_{j≠i} (u_i−u_j)/|u_i−u_j|³ − Q u_i/|u_i|³`.
#[derive(Debug, Clone)]
pub struct FullField {
    pub n: usize,
    pub q: f64,
    pub interactions: bool,
}

impl FullField {
    pub fn new(n: usize, q: f64) -> Self {
        FullField {
            n,
            q,
            interactions: true,
        }
    }

    fn pos(x: &[f64], i: usize) -> Vector3<f64> {
        Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])
    }

    fn separation(x: &[f64], i: usize, j: usize) -> Result<(Vector3<f64>, f64)> {
        let d = Self::pos(x, i) - Self::pos(x, j);
        let r = d.norm();
        if r < COLLISION_GUARD {
            return Err(Error::Collision {
                kind: CollisionKind::Pair(i, j),
                distance: r,
                time: None,
            });
        }
        Ok((d, r))
    }

    fn radius(x: &[f64], i: usize) -> Result<(Vector3<f64>, f64)> {
        let u = Self::pos(x, i);
        let r = u.norm();
        if r < COLLISION_GUARD {
            return Err(Error::Collision {
                kind: CollisionKind::Nucleus,
                distance: r,
                time: None,
            });
        }
        Ok((u, r))
    }

    pub fn accelerations(&self, x: &[f64]) -> Result<Vec<Vector3<f64>>> {
        let n = self.n;
        let mut acc = Vec::with_capacity(n);
        for i in 0..n {
            let (u, r) = Self::radius(x, i)?;
            acc.push(-u * (self.q / (r * r * r)));
        }
        if self.interactions {
            for i in 0..n {
                for j in (i + 1)..n {
                    let (d, r) = Self::separation(x, i, j)?;
                    let f = d / (r * r * r);
                    acc[i] += f;
                    acc[j] -= f;
                }
            }
        }
        Ok(acc)
    }

    /// Row-major `3N × 3N` block `∂ü/∂u`.
    pub fn stiffness(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut k = DMatrix::zeros(3 * n, 3 * n);
        for i in 0..n {
            let (u, r) = Self::radius(x, i)?;
            let h = -kernel(&u, r) * self.q;
            k.fixed_view_mut::<3, 3>(3 * i, 3 * i).copy_from(&h);
        }
        if self.interactions {
            for i in 0..n {
                for j in (i + 1)..n {
                    let (d, r) = Self::separation(x, i, j)?;
                    let h = kernel(&d, r);
                    for (a, b, s) in [(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)] {
                        let mut blk = k.fixed_view_mut::<3, 3>(3 * a, 3 * b);
                        blk += h * s;
                    }
                }
            }
        }
        Ok(k)
    }
}

impl VectorField for FullField {
    fn dim(&self) -> usize {
        6 * self.n
    }

    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let m = 3 * self.n;
        out[..m].copy_from_slice(&x[m..]);
        for (i, a) in self.accelerations(x)?.into_iter().enumerate() {
            out[m + 3 * i..m + 3 * i + 3].copy_from_slice(a.as_slice());
        }
        Ok(())
    }

    fn jacobian(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let m = 3 * self.n;
        let d = 2 * m;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            out[i * d + m + i] = 1.0;
        }
        let k = self.stiffness(x)?;
        for r in 0..m {
            for c in 0..m {
                out[(m + r) * d + c] = k[(r, c)];
            }
        }
        Ok(())
    }

    fn param_derivative(&self, _t: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let m = 3 * self.n;
        out[..m].iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let (u, r) = Self::radius(x, i)?;
            let g = -u / (r * r * r);
            out[m + 3 * i..m + 3 * i + 3].copy_from_slice(g.as_slice());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowOptions {
    pub state_sensitivity: bool,
    pub param_sensitivity: bool,
}

impl FlowOptions {
    pub const STATE: FlowOptions = FlowOptions {
        state_sensitivity: true,
        param_sensitivity: false,
    };
    pub const ALL: FlowOptions = FlowOptions {
        state_sensitivity: true,
        param_sensitivity: true,
    };
}

/// `x(t1)` together with `A = ∂x(t1)/∂x(t0)` and `w = ∂x(t1)/∂λ` when requested.
#[derive(Debug, Clone)]
pub struct FlowResult {
    pub x: Vec<f64>,
    pub a: Option<DMatrix<f64>>,
    pub w: Option<DVector<f64>>,
}

/// Joint system `ẋ = f`, `Ȧ = (∂f/∂x) A`, `ẇ = (∂f/∂x) w + ∂f/∂λ`,
/// with `A` stored column-major after `x`, then `w`.
struct JointSystem<'a, F: VectorField + ?Sized> {
    field: &'a F,
    opts: FlowOptions,
}

impl<'a, F: VectorField + ?Sized> JointSystem<'a, F> {
    fn layout(&self) -> (usize, usize, usize) {
        let d = self.field.dim();
        let na = if self.opts.state_sensitivity { d * d } else { 0 };
        let nw = if self.opts.param_sensitivity { d } else { 0 };
        (d, na, nw)
    }
}

impl<'a, F: VectorField + ?Sized> OdeSystem for JointSystem<'a, F> {
    fn dim(&self) -> usize {
        let (d, na, nw) = self.layout();
        d + na + nw
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (d, na, nw) = self.layout();
        let (x, rest) = y.split_at(d);
        self.field.eval(t, x, &mut dy[..d])?;
        if na + nw == 0 {
            return Ok(());
        }
        let mut jac = vec![0.0; d * d];
        self.field.jacobian(t, x, &mut jac)?;
        // Columns of A and (optionally) w are all propagated by J.
        let ncols = na / d + nw / d;
        let dyrest = &mut dy[d..];
        dyrest.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..d {
            let row = &jac[r * d..(r + 1) * d];
            for (c, jrc) in row.iter().enumerate() {
                if *jrc == 0.0 {
                    continue;
                }
                for col in 0..ncols {
                    dyrest[col * d + r] += jrc * rest[col * d + c];
                }
            }
        }
        if nw > 0 {
            let mut dp = vec![0.0; d];
            self.field.param_derivative(t, x, &mut dp)?;
            for r in 0..d {
                dyrest[na + r] += dp[r];
            }
        }
        Ok(())
    }
}

fn initial_joint(x0: &[f64], opts: FlowOptions) -> Vec<f64> {
    let d = x0.len();
    let mut y = x0.to_vec();
    if opts.state_sensitivity {
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            a[i * d + i] = 1.0;
        }
        y.extend(a);
    }
    if opts.param_sensitivity {
        y.extend(std::iter::repeat_n(0.0, d));
    }
    y
}

fn unpack(y: &[f64], d: usize, opts: FlowOptions) -> FlowResult {
    let x = y[..d].to_vec();
    let mut off = d;
    let a = opts.state_sensitivity.then(|| {
        let m = DMatrix::from_column_slice(d, d, &y[off..off + d * d]);
        off += d * d;
        m
    });
    let w = opts
        .param_sensitivity
        .then(|| DVector::from_column_slice(&y[off..off + d]));
    FlowResult { x, a, w }
}

/// Propagate `x0` from `t0` to `t1`, optionally with sensitivities.
pub fn flow<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    opts: FlowOptions,
    cfg: &IntegratorConfig,
) -> Result<FlowResult> {
    let sys = JointSystem { field, opts };
    let mut y = initial_joint(x0, opts);
    Dop853::new(*cfg).integrate(&sys, t0, t1, &mut y, &[], |_, _| {})?;
    Ok(unpack(&y, field.dim(), opts))
}

/// Like [`flow`], also returning the joint state at each of `times`.
pub fn flow_sampled<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t0: f64,
    t1: f64,
    times: &[f64],
    opts: FlowOptions,
    cfg: &IntegratorConfig,
) -> Result<(FlowResult, Vec<(f64, FlowResult)>)> {
    let sys = JointSystem { field, opts };
    let d = field.dim();
    let mut y = initial_joint(x0, opts);
    let mut samples = Vec::with_capacity(times.len());
    Dop853::new(*cfg).integrate(&sys, t0, t1, &mut y, times, |t, y| {
        samples.push((t, unpack(y, d, opts)))
    })?;
    Ok((unpack(&y, d, opts), samples))
}

/// Uniform time grid with `k` intervals on `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, k: usize) -> Vec<f64> {
    (0..=k)
        .map(|i| if i == k { t1 } else { t0 + (t1 - t0) * i as f64 / k as f64 })
        .collect()
}

/// Action `N ∫ L dt` from uniformly spaced samples of a `T`-periodic orbit.
pub fn action(samples: &[(f64, [f64; 6])], field: &ReducedField, n_electrons: usize) -> Result<f64> {
    action_with_closure(samples, field, n_electrons, &Matrix6::identity())
}

/// Action over an interval whose endpoints satisfy `x(end) = S x(start)`.
///
/// The Lagrangian is invariant under `S`, so the integrand is periodic over
/// the sampled interval and the trapezoidal rule converges spectrally.
pub fn action_with_closure(
    samples: &[(f64, [f64; 6])],
    field: &ReducedField,
    n_electrons: usize,
    s: &Matrix6<f64>,
) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::Domain("action needs at least three samples".into()));
    }
    let first = nalgebra::Vector6::from_row_slice(&samples[0].1);
    let last = nalgebra::Vector6::from_row_slice(&samples[samples.len() - 1].1);
    let mismatch = (last - s * first).amax();
    if mismatch > 1e-8 * (1.0 + first.amax()) {
        return Err(Error::Domain(format!(
            "samples do not close up (endpoint mismatch {mismatch:e})"
        )));
    }
    let h = (samples[samples.len() - 1].0 - samples[0].0) / (samples.len() - 1) as f64;
    let mut sum = 0.0;
    for (k, (_, x)) in samples.iter().enumerate() {
        let w = if k == 0 || k == samples.len() - 1 { 0.5 } else { 1.0 };
        sum += w * field.lagrangian(x)?;
    }
    Ok(n_electrons as f64 * h * sum)
}
