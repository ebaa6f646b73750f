//! Seed loops, the forcing homotopy and the three-step orbit search.
//!
//! A seed is a closed loop through waypoints on a sphere. The forcing
//! `ψ = f(φ) − φ̇` makes the seed an exact solution of `ẋ = f(x) − εψ(t)` at
//! `ε = 1`; continuation in `ε` down to zero then lands on a true orbit of the
//! same free-homotopy class, which is finally continued in `Q`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::continuation::{trace, ContinuationCurve, ContinuationRecord, StepControl, StopCriteria, TraceStatus};
use crate::dynamics::{action_with_closure, Forcing, ParamKind, ProblemParams, ReducedField};
use crate::error::{Error, Result};
use crate::shooting::{ShootingConfig, ShootingProblem, ShootingVector};
use crate::symmetry::{build_group, distance_to_axes, twist_matrix, GroupKind, PolyhedralGroup, TwistSpec};

/// A free-homotopy class given extensionally: the path of the generating
/// particle over one fundamental interval plus the twist that closes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoints {
    pub group: GroupKind,
    pub twist_axis: usize,
    /// Twist angle as a fraction of a full turn, e.g. `1/3`.
    pub twist_fraction: (i64, i64),
    pub repetitions: usize,
    pub points: Vec<[f64; 3]>,
}

impl Waypoints {
    pub fn fraction(&self) -> f64 {
        self.twist_fraction.0 as f64 / self.twist_fraction.1 as f64
    }

    pub fn twist(&self, group: &PolyhedralGroup) -> Result<TwistSpec> {
        let r = group.twist_element(self.twist_axis, self.fraction())?;
        twist_matrix(&r, self.repetitions)
    }

    pub fn vectors(&self) -> Vec<Vector3<f64>> {
        self.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect()
    }
}

/// Parses `p/q` or a bare integer.
pub fn parse_fraction(s: &str) -> Result<(i64, i64)> {
    let bad = || Error::Parse(format!("bad twist fraction {s:?}"));
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?),
        None => (s.trim().parse().map_err(|_| bad())?, 1),
    };
    if den <= 0 {
        return Err(bad());
    }
    Ok((num, den))
}

impl FromStr for Waypoints {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let (mut group, mut axis, mut fraction, mut reps) = (None, None, None, None);
        let mut points = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| Error::Parse(format!("line {}: {msg}", lineno + 1));
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "group" => group = Some(value.parse::<GroupKind>().map_err(|e| at(e.to_string()))?),
                    "twist_axis" => axis = Some(value.parse::<usize>().map_err(|e| at(e.to_string()))?),
                    "twist_fraction" => fraction = Some(parse_fraction(value).map_err(|e| at(e.to_string()))?),
                    "repetitions" => reps = Some(value.parse::<usize>().map_err(|e| at(e.to_string()))?),
                    other => return Err(at(format!("unknown key {other:?}"))),
                }
                continue;
            }
            let coords: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| at(format!("{t:?}: {e}"))))
                .collect::<Result<_>>()?;
            if coords.len() != 3 {
                return Err(at(format!("expected 3 coordinates, found {}", coords.len())));
            }
            points.push([coords[0], coords[1], coords[2]]);
        }
        let missing = |k: &str| Error::Parse(format!("missing header key {k}"));
        Ok(Waypoints {
            group: group.ok_or_else(|| missing("group"))?,
            twist_axis: axis.ok_or_else(|| missing("twist_axis"))?,
            twist_fraction: fraction.ok_or_else(|| missing("twist_fraction"))?,
            repetitions: reps.ok_or_else(|| missing("repetitions"))?,
            points,
        })
    }
}

impl fmt::Display for Waypoints {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "group = {}", self.group)?;
        writeln!(f, "twist_axis = {}", self.twist_axis)?;
        writeln!(f, "twist_fraction = {}/{}", self.twist_fraction.0, self.twist_fraction.1)?;
        writeln!(f, "repetitions = {}", self.repetitions)?;
        for p in &self.points {
            writeln!(f, "{:.17e} {:.17e} {:.17e}", p[0], p[1], p[2])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedOptions {
    pub period: f64,
    /// Extra radius multiplier on top of `ρ = Q^{1/3}`. `None` picks
    /// `(T/2π)^{2/3}`, which turns a once-around circle into a Kepler orbit.
    pub radius_factor: Option<f64>,
    /// Minimum distance to Γ as a fraction of the seed radius.
    pub guard_fraction: f64,
    /// Interpolant samples per waypoint used for the guard check.
    pub guard_samples: usize,
}

impl Default for SeedOptions {
    fn default() -> Self {
        SeedOptions {
            period: 1.0,
            radius_factor: None,
            guard_fraction: 0.05,
            guard_samples: 32,
        }
    }
}

impl SeedOptions {
    pub fn factor(&self) -> f64 {
        self.radius_factor
            .unwrap_or_else(|| (self.period / (2.0 * PI)).powf(2.0 / 3.0))
    }
}

/// Trigonometric interpolant of the twisted waypoint cycle.
#[derive(Debug, Clone)]
pub struct SeedCurve {
    pub waypoints: Vec<Vector3<f64>>,
    /// `Q^{1/3}`.
    pub rho: f64,
    /// Actual radius of the waypoint sphere, `ρ` times the radius factor.
    pub radius: f64,
    pub period: f64,
    pub repetitions: usize,
    cos: Vec<Vector3<f64>>,
    sin: Vec<Vector3<f64>>,
}

impl SeedCurve {
    fn omega(&self) -> f64 {
        2.0 * PI / self.period
    }

    pub fn fundamental_time(&self) -> f64 {
        self.period / self.repetitions as f64
    }

    /// Position and its first two derivatives.
    pub fn jet(&self, t: f64) -> [Vector3<f64>; 3] {
        let w = self.omega();
        let mut out = [self.cos[0], Vector3::zeros(), Vector3::zeros()];
        for k in 1..self.cos.len() {
            let kw = k as f64 * w;
            let (s, c) = (kw * t).sin_cos();
            let (a, b) = (self.cos[k], self.sin[k]);
            out[0] += a * c + b * s;
            out[1] += (b * c - a * s) * kw;
            out[2] -= (a * c + b * s) * (kw * kw);
        }
        out
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.jet(t)[0]
    }

    pub fn state(&self, t: f64) -> [f64; 6] {
        let [u, v, _] = self.jet(t);
        [u[0], u[1], u[2], v[0], v[1], v[2]]
    }

    /// The seed sampled at shooting nodes.
    pub fn nodes(&self, times: &[f64]) -> ShootingVector {
        let n = times.len() - 1;
        let states: Vec<[f64; 6]> = times[..n].iter().map(|&t| self.state(t)).collect();
        ShootingVector::from_nodes(&states)
    }

    /// Smallest distance to Γ over `samples` equispaced points of the fundamental interval.
    pub fn min_gamma_distance(&self, group: &PolyhedralGroup, samples: usize) -> Result<f64> {
        let tm = self.fundamental_time();
        let mut best = f64::INFINITY;
        for k in 0..=samples {
            let u = self.position(tm * k as f64 / samples as f64);
            best = best.min(distance_to_axes(&u, &group.axes)?);
        }
        Ok(best)
    }
}

/// Interpolate `radius·wⱼ` on the fundamental interval, replicated by powers
/// of `R` so that `φ(t + T/M) = S φ(t)` holds identically.
pub fn build_seed(
    waypoints: &[Vector3<f64>],
    twist: &TwistSpec,
    group: &PolyhedralGroup,
    q: f64,
    opts: &SeedOptions,
) -> Result<SeedCurve> {
    if waypoints.len() < 3 && twist.repetitions * waypoints.len() < 3 {
        return Err(Error::Domain("a seed loop needs at least 3 waypoints per period".into()));
    }
    if !(q > 0.0) {
        return Err(Error::Domain(format!("central charge Q = {q} must be positive")));
    }
    let rho = q.cbrt();
    let radius = rho * opts.factor();
    let guard = opts.guard_fraction * radius;
    let mut unit = Vec::with_capacity(waypoints.len());
    for w in waypoints {
        let n = w.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Domain(format!("waypoint {w:?} is not a direction")));
        }
        let w = w / n;
        let d = distance_to_axes(&(w * radius), &group.axes)?;
        if d < guard {
            return Err(Error::HomotopySafety { distance: d, guard });
        }
        unit.push(w);
    }
    let m = unit.len();
    let total = m * twist.repetitions;
    let r = twist.rotation();
    let mut samples = Vec::with_capacity(total);
    let mut power = nalgebra::Matrix3::<f64>::identity();
    for _ in 0..twist.repetitions {
        samples.extend(unit.iter().map(|w| power * w * radius));
        power = r * power;
    }
    let half = total / 2;
    let mut cos = vec![Vector3::zeros(); half + 1];
    let mut sin = vec![Vector3::zeros(); half + 1];
    for (j, p) in samples.iter().enumerate() {
        cos[0] += p / total as f64;
        for k in 1..=half {
            let (s, c) = (2.0 * PI * (j * k % total) as f64 / total as f64).sin_cos();
            let weight = if 2 * k == total { 1.0 } else { 2.0 } / total as f64;
            cos[k] += p * (c * weight);
            if 2 * k != total {
                sin[k] += p * (s * weight);
            }
        }
    }
    let seed = SeedCurve {
        waypoints: unit,
        rho,
        radius,
        period: opts.period,
        repetitions: twist.repetitions,
        cos,
        sin,
    };
    let d = seed.min_gamma_distance(group, opts.guard_samples * m)?;
    if d < guard {
        return Err(Error::HomotopySafety { distance: d, guard });
    }
    Ok(seed)
}

/// `ψ(t) = f(φ(t)) − φ̇(t)` for the unperturbed field `f`, so that `φ`
/// solves `ẋ = f(x) − ψ(t)`.
pub struct ForcingTerm {
    pub seed: Arc<SeedCurve>,
    field: ReducedField,
}

impl ForcingTerm {
    pub fn new(seed: Arc<SeedCurve>, field: &ReducedField) -> Self {
        let mut field = field.clone();
        field.forcing = None;
        field.epsilon = 0.0;
        ForcingTerm { seed, field }
    }
}

impl Forcing for ForcingTerm {
    fn psi(&self, t: f64) -> Result<[f64; 6]> {
        let [u, _, acc] = self.seed.jet(t);
        let a = self.field.acceleration(&u)?;
        let d = a - acc;
        Ok([0.0, 0.0, 0.0, d[0], d[1], d[2]])
    }
}

/// Build the forcing for a seed and return the field `f − εψ` with `ε = 1`.
pub fn forcing(seed: Arc<SeedCurve>, params: &ProblemParams) -> Result<(Arc<ForcingTerm>, ReducedField)> {
    let base = ReducedField::from_params(params);
    let term = Arc::new(ForcingTerm::new(seed.clone(), &base));
    let tm = seed.fundamental_time();
    for k in 0..=64 {
        term.psi(tm * k as f64 / 64.0)?;
    }
    let field = base.with_forcing(term.clone(), 1.0).with_param(ParamKind::Forcing);
    Ok((term, field))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Starting charge; `None` means `2N`.
    pub q_start: Option<f64>,
    pub interactions: bool,
    pub seed: SeedOptions,
    pub shooting: ShootingConfig,
    /// First `ε` step taken by a plain solve below `ε = 1`.
    pub epsilon_first_step: f64,
    /// The `ε`-continuation stops once `ε` drops below this value.
    pub epsilon_stop: f64,
    pub epsilon_max_records: usize,
    pub epsilon_control: StepControl,
    /// Step from `Q` to the second seed of the `Q`-continuation.
    pub charge_first_step: f64,
    pub charge_control: StepControl,
    /// An unset `return_lambda` defaults to the starting charge.
    pub charge_stop: StopCriteria,
    /// Orbits must keep this fraction of the seed radius away from Γ.
    pub orbit_guard_fraction: f64,
    /// Mesh intervals over `[0, T/M]` for the guard check and the action.
    pub mesh: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            q_start: None,
            interactions: true,
            seed: SeedOptions::default(),
            shooting: ShootingConfig::default(),
            epsilon_first_step: 1e-2,
            epsilon_stop: 1e-2,
            epsilon_max_records: 2000,
            epsilon_control: StepControl::default(),
            charge_first_step: 1.0,
            charge_control: StepControl::default(),
            charge_stop: StopCriteria::default(),
            orbit_guard_fraction: 0.01,
            mesh: 128,
        }
    }
}

pub struct PipelineResult {
    pub group: Arc<PolyhedralGroup>,
    pub seed: Arc<SeedCurve>,
    /// The `ε`-curve at the starting charge.
    pub epsilon_curve: ContinuationCurve,
    /// Solution of the unperturbed problem at the starting charge.
    pub unforced: ContinuationRecord,
    pub charge_curve: ContinuationCurve,
    /// Charge-parameterized problem at `ε = 0`, valid for every record of the `Q`-curve.
    pub problem: ShootingProblem,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Energy, action and the homotopy-safety check of an accepted record.
pub fn annotate_record(
    problem: &ShootingProblem,
    rec: &mut ContinuationRecord,
    guard: f64,
    mesh: usize,
    with_action: bool,
) -> Result<()> {
    let p = problem.at_lambda(rec.lambda);
    let samples = p.sample_orbit(&rec.x, mesh)?;
    for (_, x) in &samples {
        let d = distance_to_axes(&Vector3::new(x[0], x[1], x[2]), &p.params.group.axes)?;
        if d < guard {
            return Err(Error::HomotopySafety { distance: d, guard });
        }
    }
    let mut unforced = p.field.clone();
    unforced.epsilon = 0.0;
    rec.energy = Some(unforced.energy(&rec.x.node(0))?);
    if with_action {
        let n = p.params.n_electrons();
        let m = p.params.twist.repetitions as f64;
        rec.action = Some(m * action_with_closure(&samples, &unforced, n, &p.params.twist.s)?);
    }
    Ok(())
}

fn curve_failure(curve: &ContinuationCurve, control: &StepControl) -> Error {
    match curve.status {
        TraceStatus::StepUnderflow => Error::StepControlExhausted {
            delta_min: control.delta_min,
        },
        _ => Error::Domain(curve.message.clone().unwrap_or_else(|| format!("{:?}", curve.status))),
    }
}

/// Steps 1–3: seed near `2N`, continue the forcing weight to zero, then
/// continue the orbit in `Q`.
pub fn run_pipeline(waypoints: &Waypoints, config: &PipelineConfig) -> Result<PipelineResult> {
    let group = Arc::new(build_group(waypoints.group));
    let twist = stage("seed", waypoints.twist(&group))?;
    let n = group.order();
    let q0 = config.q_start.unwrap_or(2.0 * n as f64);
    let mut params = ProblemParams::new(group.clone(), twist.clone(), q0);
    params.period = config.seed.period;
    params.interactions = config.interactions;
    stage("seed", params.validate())?;

    // Step 1
    let seed = Arc::new(stage(
        "seed",
        build_seed(&waypoints.vectors(), &twist, &group, q0, &config.seed),
    )?);
    let (_, forced) = stage("seed", forcing(seed.clone(), &params))?;
    let mut eparams = params.clone();
    eparams.epsilon = 1.0;
    let eproblem = stage("seed", ShootingProblem::new(eparams, config.shooting))?.with_field(forced);
    let guard = config.orbit_guard_fraction * seed.radius;
    let x_seed = seed.nodes(&eproblem.times);

    // Step 2
    let (x1, rep1) = stage("epsilon-start", eproblem.solve(&x_seed))?;
    let e2 = 1.0 - config.epsilon_first_step;
    let (x2, rep2) = stage("epsilon-start", eproblem.at_lambda(e2).solve(&x1))?;
    let r1 = ContinuationRecord::new(1.0, x1, rep1.final_residual());
    let r2 = ContinuationRecord::new(e2, x2, rep2.final_residual());
    let estop = StopCriteria {
        lambda_min: config.epsilon_stop,
        lambda_max: 1.0 + 0.5,
        max_records: config.epsilon_max_records,
        return_lambda: None,
        corrector_iters: config.charge_stop.corrector_iters,
    };
    let epsilon_curve = trace(
        &eproblem,
        ParamKind::Forcing,
        r1,
        r2,
        &estop,
        config.epsilon_control,
        |rec| annotate_record(&eproblem, rec, guard, config.mesh, false),
    );
    let last = epsilon_curve.last().unwrap().clone();
    if epsilon_curve.status != TraceStatus::LambdaBound || last.lambda >= config.epsilon_stop {
        return Err(curve_failure(&epsilon_curve, &config.epsilon_control).in_stage("epsilon-continuation"));
    }
    let cproblem = stage("epsilon-zero", ShootingProblem::new(params.clone(), config.shooting))?;
    let (x0, rep0) = stage("epsilon-zero", cproblem.solve(&last.x))?;
    let mut unforced = ContinuationRecord::new(q0, x0, rep0.final_residual());
    stage(
        "epsilon-zero",
        annotate_record(&cproblem, &mut unforced, guard, config.mesh, true),
    )?;
    let q1 = q0 - config.charge_first_step;
    let (xq, repq) = stage("charge-step", cproblem.at_lambda(q1).solve(&unforced.x))?;
    let second = ContinuationRecord::new(q1, xq, repq.final_residual());

    // Step 3
    let cstop = StopCriteria {
        return_lambda: config.charge_stop.return_lambda.or(Some(q0)),
        ..config.charge_stop
    };
    let charge_curve = trace(
        &cproblem,
        ParamKind::Charge,
        unforced.clone(),
        second,
        &cstop,
        config.charge_control,
        |rec| {
            let g = config.orbit_guard_fraction * (rec.lambda.max(0.0).cbrt() * config.seed.factor());
            annotate_record(&cproblem, rec, g, config.mesh, true)
        },
    );
    if charge_curve.records.len() < 3 {
        return Err(curve_failure(&charge_curve, &config.charge_control).in_stage("charge-continuation"));
    }
    Ok(PipelineResult {
        group,
        seed,
        epsilon_curve,
        unforced,
        charge_curve,
        problem: cproblem,
    })
}
