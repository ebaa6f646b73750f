//! Adaptive Dormand–Prince 8(5,3) integrator on flat `f64` state vectors.
//!
//! Steps are clipped so that every requested output time is hit exactly,
//! which lets callers sample trajectories without a dense-output interpolant.

#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-hand side of `ẏ = F(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-12,
            atol: 1e-12,
            max_step: 0.05,
            min_step: 1e-13,
            max_steps: 200_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(v > 0.0 && v <= 1e-3) {
                return Err(Error::Domain(format!("{name} = {v} must lie in (0, 1e-3]")));
            }
        }
        if !(self.max_step > 0.0 && self.min_step >= 0.0 && self.min_step < self.max_step) {
            return Err(Error::Domain("step bounds must satisfy 0 <= min_step < max_step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510e+00,
    0.281649658092772603273242802490e+00,
    0.333333333333333333333333333333e+00,
    0.25e+00,
    0.307692307692307692307692307692e+00,
    0.651282051282051282051282051282e+00,
    0.6e+00,
    0.857142857142857142857142857142e+00,
    1.0,
];

const A: [&[f64]; 12] = [
    &[],
    &[5.26001519587677318785587544488e-2],
    &[1.97250569845378994544595329183e-2, 5.91751709536136983633785987549e-2],
    &[2.95875854768068491816892993775e-2, 0.0, 8.87627564304205475450678981324e-2],
    &[
        2.41365134159266685502369798665e-1,
        0.0,
        -8.84549479328286085344864962717e-1,
        9.24834003261792003115737966543e-1,
    ],
    &[
        3.7037037037037037037037037037e-2,
        0.0,
        0.0,
        1.70828608729473871279604482173e-1,
        1.25467687566822425016691814123e-1,
    ],
    &[
        3.7109375e-2,
        0.0,
        0.0,
        1.70252211019544039314978060272e-1,
        6.02165389804559606850219397283e-2,
        -1.7578125e-2,
    ],
    &[
        3.70920001185047927108779319836e-2,
        0.0,
        0.0,
        1.70383925712239993810214054705e-1,
        1.07262030446373284651809199168e-1,
        -1.53194377486244017527936158236e-2,
        8.27378916381402288758473766002e-3,
    ],
    &[
        6.24110958716075717114429577812e-1,
        0.0,
        0.0,
        -3.36089262944694129406857109825e0,
        -8.68219346841726006818189891453e-1,
        2.75920996994467083049415600797e1,
        2.01540675504778934086186788979e1,
        -4.34898841810699588477366255144e1,
    ],
    &[
        4.77662536438264365890433908527e-1,
        0.0,
        0.0,
        -2.48811461997166764192642586468e0,
        -5.90290826836842996371446475743e-1,
        2.12300514481811942347288949897e1,
        1.52792336328824235832596922938e1,
        -3.32882109689848629194453265587e1,
        -2.03312017085086261358222928593e-2,
    ],
    &[
        -9.3714243008598732571704021658e-1,
        0.0,
        0.0,
        5.18637242884406370830023853209e0,
        1.09143734899672957818500254654e0,
        -8.14978701074692612513997267357e0,
        -1.85200656599969598641566180701e1,
        2.27394870993505042818970056734e1,
        2.49360555267965238987089396762e0,
        -3.0467644718982195003823669022e0,
    ],
    &[
        2.27331014751653820792359768449e0,
        0.0,
        0.0,
        -1.05344954667372501984066689879e1,
        -2.00087205822486249909675718444e0,
        -1.79589318631187989172765950534e1,
        2.79488845294199600508499808837e1,
        -2.85899827713502369474065508674e0,
        -8.87285693353062954433549289258e0,
        1.23605671757943030647266201528e1,
        6.43392746015763530355970484046e-1,
    ],
];

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566e0,
    1.89151789931450038304281599044e0,
    -5.8012039600105847814672114227e0,
    3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

/// Coefficients of the fifth-order error estimator.
const ER: [f64; 12] = [
    0.1312004499419488073250102996e-01,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.1225156446376204440720569753e+01,
    -0.4957589496572501915214079952e+00,
    0.1664377182454986536961530415e+01,
    -0.3503288487499736816886487290e+00,
    0.3341791187130174790297318841e+00,
    0.8192320648511571246570742613e-01,
    -0.2235530786388629525884427845e-01,
];

/// Third-order embedded weights for stages 1, 9, 12.
const BHH: [f64; 3] = [
    0.244094488188976377952755905512e+00,
    0.733846688281611857341361741547e+00,
    0.220588235294117647058823529412e-01,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;

pub struct Dop853 {
    pub config: IntegratorConfig,
}

struct Workspace {
    k: Vec<Vec<f64>>,
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: vec![vec![0.0; n]; 12],
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        }
    }
}

impl Dop853 {
    pub fn new(config: IntegratorConfig) -> Self {
        Dop853 { config }
    }

    /// Integrate from `t0` to `t1` in place. `outputs` must be monotone in the
    /// direction of integration and lie within `[t0, t1]`; `observer` is called
    /// at each of them (and at `t0` if it is listed).
    pub fn integrate<S, F>(
        &self,
        sys: &S,
        t0: f64,
        t1: f64,
        y: &mut [f64],
        outputs: &[f64],
        mut observer: F,
    ) -> Result<Stats>
    where
        S: OdeSystem + ?Sized,
        F: FnMut(f64, &[f64]),
    {
        let n = sys.dim();
        assert_eq!(y.len(), n, "state length does not match system dimension");
        let mut stats = Stats::default();
        let mut out_iter = outputs.iter().copied().peekable();
        let dir = if t1 >= t0 { 1.0 } else { -1.0 };
        while let Some(&t) = out_iter.peek() {
            if (t - t0) * dir <= 0.0 {
                observer(t0, y);
                out_iter.next();
            } else {
                break;
            }
        }
        if t1 == t0 {
            return Ok(stats);
        }

        let cfg = &self.config;
        let mut ws = Workspace::new(n);
        let mut t = t0;
        sys.rhs(t, y, &mut ws.k[0]).map_err(|e| e.at_time(t))?;
        stats.evaluations += 1;
        let mut h = self.initial_step(sys, t, y, t1, &mut ws, &mut stats)?;
        let mut rejected_last = false;

        while (t1 - t) * dir > 0.0 {
            if stats.accepted + stats.rejected >= cfg.max_steps {
                return Err(Error::TooManySteps {
                    steps: cfg.max_steps,
                    time: t,
                });
            }
            let target = out_iter
                .peek()
                .copied()
                .filter(|&o| (t1 - o) * dir >= 0.0)
                .unwrap_or(t1);
            let mut hs = h.min(cfg.max_step);
            let mut hits_target = false;
            if t + 1.01 * hs * dir - target >= 0.0 && dir > 0.0
                || t + 1.01 * hs * dir - target <= 0.0 && dir < 0.0
            {
                hs = (target - t).abs();
                hits_target = true;
            }
            if hs < cfg.min_step && !hits_target {
                return Err(Error::StepUnderflow { time: t });
            }
            let hh = hs * dir;

            let err = self.step(sys, t, hh, y, &mut ws, &mut stats)?;

            let fac11 = err.powf(0.125);
            let fac = (fac11 / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            if err <= 1.0 {
                stats.accepted += 1;
                t = if hits_target { target } else { t + hh };
                y.copy_from_slice(&ws.ynew);
                sys.rhs(t, y, &mut ws.k[0]).map_err(|e| e.at_time(t))?;
                stats.evaluations += 1;
                let mut hnew = hs / fac;
                if rejected_last {
                    hnew = hnew.min(hs);
                }
                rejected_last = false;
                if hits_target {
                    // Keep the natural step size rather than the clipped one.
                    hnew = hnew.max(h.min(cfg.max_step));
                }
                h = hnew;
                while let Some(&o) = out_iter.peek() {
                    if (o - t) * dir <= 0.0 {
                        observer(t, y);
                        out_iter.next();
                    } else {
                        break;
                    }
                }
            } else {
                stats.rejected += 1;
                rejected_last = true;
                h = hs / (1.0 / FAC_MIN).min(fac11 / SAFETY);
                if h < cfg.min_step {
                    return Err(Error::StepUnderflow { time: t });
                }
            }
        }
        Ok(stats)
    }

    /// One trial step of signed size `h`; leaves the candidate in `ws.ynew`
    /// and returns the scaled error norm.
    fn step<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        h: f64,
        y: &[f64],
        ws: &mut Workspace,
        stats: &mut Stats,
    ) -> Result<f64> {
        let n = y.len();
        for s in 1..12 {
            let (done, rest) = ws.k.split_at_mut(s);
            for i in 0..n {
                let mut acc = 0.0;
                for (j, a) in A[s].iter().enumerate() {
                    if *a != 0.0 {
                        acc += a * done[j][i];
                    }
                }
                ws.ytmp[i] = y[i] + h * acc;
            }
            let ts = t + C[s] * h;
            sys.rhs(ts, &ws.ytmp, &mut rest[0])
                .map_err(|e| e.at_time(ts))?;
        }
        stats.evaluations += 11;

        let cfg = &self.config;
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        for i in 0..n {
            let mut bsum = 0.0;
            let mut e5 = 0.0;
            for s in 0..12 {
                let ks = ws.k[s][i];
                bsum += B[s] * ks;
                e5 += ER[s] * ks;
            }
            let e3 = bsum - BHH[0] * ws.k[0][i] - BHH[1] * ws.k[8][i] - BHH[2] * ws.k[11][i];
            let ynew = y[i] + h * bsum;
            ws.ynew[i] = ynew;
            let sc = cfg.atol + cfg.rtol * y[i].abs().max(ynew.abs());
            err5 += (e5 / sc) * (e5 / sc);
            err3 += (e3 / sc) * (e3 / sc);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err5 * (1.0 / (deno * n as f64)).sqrt();
        if !err.is_finite() {
            return Ok(f64::INFINITY);
        }
        Ok(err)
    }

    fn initial_step<S: OdeSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        y: &[f64],
        t1: f64,
        ws: &mut Workspace,
        stats: &mut Stats,
    ) -> Result<f64> {
        let cfg = &self.config;
        let n = y.len();
        let span = (t1 - t).abs();
        let dir = (t1 - t).signum();
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = cfg.atol + cfg.rtol * y[i].abs();
            dnf += (ws.k[0][i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(cfg.max_step).min(span);
        for i in 0..n {
            ws.ytmp[i] = y[i] + dir * h * ws.k[0][i];
        }
        let (k0, k1) = ws.k.split_at_mut(1);
        sys.rhs(t + dir * h, &ws.ytmp, &mut k1[0])
            .map_err(|e| e.at_time(t + dir * h))?;
        stats.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..n {
            let sk = cfg.atol + cfg.rtol * y[i].abs();
            der2 += ((k1[0][i] - k0[0][i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.abs().max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 {
            (1e-6f64).max(h * 1e-3)
        } else {
            (0.01 / der12).powf(1.0 / 8.0)
        };
        Ok((100.0 * h).min(h1).min(span).min(cfg.max_step).max(cfg.min_step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;
    impl OdeSystem for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = y[1];
            dy[1] = -y[0];
            Ok(())
        }
    }

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
            dy[0] = -2.0 * t * y[0];
            Ok(())
        }
    }

    #[test]
    fn harmonic_oscillator_period() {
        let solver = Dop853::new(IntegratorConfig::default());
        let mut y = [1.0, 0.0];
        solver
            .integrate(&Oscillator, 0.0, 2.0 * std::f64::consts::PI, &mut y, &[], |_, _| {})
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11 && y[1].abs() < 1e-11, "{y:?}");
    }

    #[test]
    fn time_dependent_and_backward() {
        let solver = Dop853::new(IntegratorConfig::default());
        let mut y = [1.0];
        solver.integrate(&Decay, 0.0, 1.5, &mut y, &[], |_, _| {}).unwrap();
        assert!((y[0] - (-2.25f64).exp()).abs() < 1e-12);
        solver.integrate(&Decay, 1.5, 0.0, &mut y, &[], |_, _| {}).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn outputs_are_hit_exactly() {
        let solver = Dop853::new(IntegratorConfig::default());
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.3).collect();
        let mut seen = Vec::new();
        let mut y = [1.0, 0.0];
        solver
            .integrate(&Oscillator, 0.0, 3.0, &mut y, &times, |t, y| seen.push((t, y[0])))
            .unwrap();
        assert_eq!(seen.len(), times.len());
        for ((t, c), expect) in seen.iter().zip(&times) {
            assert_eq!(t, expect);
            assert!((c - t.cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn zero_span_is_identity() {
        let solver = Dop853::new(IntegratorConfig::default());
        let mut y = [0.3, -0.2];
        let stats = solver.integrate(&Oscillator, 1.0, 1.0, &mut y, &[], |_, _| {}).unwrap();
        assert_eq!(y, [0.3, -0.2]);
        assert_eq!(stats.accepted, 0);
    }

    #[test]
    fn rejects_bad_tolerances() {
        assert!(IntegratorConfig::with_tolerances(1e-2, 1e-12).validate().is_err());
        assert!(IntegratorConfig::with_tolerances(0.0, 1e-12).validate().is_err());
        assert!(IntegratorConfig::default().validate().is_ok());
    }
}
