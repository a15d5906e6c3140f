//! Seeded random corpora for the functional inequalities and the spectral
//! identities, calibration of the empirical constants, and JSON reports.
//!
//! Every sample draws from its own generator keyed by `(seed, kind, index)`,
//! so corpora are reproducible regardless of the worker count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{clms_check, interp_terms, log_riesz_terms};
use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::patch::{build_patch_density, build_tangential_family, FourierCurve, PatchSpec};
use crate::spectral::{SpectralOps, Spectrum};

/// Calibrated constants are the largest calibration ratio times this.
pub const HEADROOM: f64 = 1.5;
pub const CORPUS_GRID: usize = 64;
pub const INTERP_P: f64 = 2.0;
pub const INTERP_Q: f64 = 4.0;
pub const LOG_RIESZ_P: f64 = 4.0;
pub const LOG_RIESZ_Q: f64 = 4.0;
pub const IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusKind {
    InterpL2,
    InterpLq,
    Clms,
    LogRiesz,
}

impl CorpusKind {
    pub const ALL: [CorpusKind; 4] = [Self::InterpL2, Self::InterpLq, Self::Clms, Self::LogRiesz];

    fn tag(self) -> u64 {
        match self {
            Self::InterpL2 | Self::InterpLq => 1,
            Self::Clms => 2,
            Self::LogRiesz => 3,
        }
    }
}

/// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn sample_rng(seed: u64, stream: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(stream)) ^ index as u64))
}

/// Real zero-mean field with random modes `0 < |m|_inf <= kmax` and amplitudes
/// decaying like `|m|^-decay`; never touches the Nyquist row.
pub fn band_limited(ops: &SpectralOps, rng: &mut impl Rng, kmax: usize, decay: f64) -> ScalarField {
    let grid = ops.grid();
    let n = grid.n();
    let kmax = kmax.min(n / 2 - 1) as i64;
    let mut s = Spectrum::zeros(grid);
    for my in -kmax..=kmax {
        for mx in 0..=kmax {
            if (mx == 0 && my <= 0) || (mx, my) == (0, 0) {
                continue;
            }
            let amp = ((mx * mx + my * my) as f64).powf(-0.5 * decay);
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp;
            let i = mx.rem_euclid(n as i64) as usize;
            let j = my.rem_euclid(n as i64) as usize;
            s.data[j * n + i] = z;
            let (ic, jc) = ((-mx).rem_euclid(n as i64) as usize, (-my).rem_euclid(n as i64) as usize);
            s.data[jc * n + ic] = z.conj();
        }
    }
    let mut f = ops.inverse(&s);
    let scale = f.linf();
    if scale > 0.0 {
        f = f.scale(1.0 / scale);
    }
    f
}

fn bump(grid: Grid, cx: f64, cy: f64, r: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x, y| {
        let d2 = ((x - cx).powi(2) + (y - cy).powi(2)) / (r * r);
        if d2 < 1.0 {
            (-1.0 / (1.0 - d2)).exp() * std::f64::consts::E
        } else {
            0.0
        }
    })
}

/// A density with an exact vacuum region and the velocity test function.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpSample {
    pub rho: ScalarField,
    pub v: ScalarField,
    pub rho_tilde: f64,
}

pub fn interp_sample(ops: &SpectralOps, seed: u64, index: usize) -> InterpSample {
    let mut rng = sample_rng(seed, CorpusKind::InterpL2.tag(), index);
    let grid = ops.grid();
    let l = grid.length();
    let rho_tilde = rng.gen_range(0.5..2.0);
    let variant = index % 4;
    let centers: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..4))
        .map(|_| (rng.gen_range(0.2..0.8) * l, rng.gen_range(0.2..0.8) * l, rng.gen_range(0.08..0.2) * l))
        .collect();
    let rho = match variant {
        // smooth positive perturbation
        0 => {
            let b = band_limited(ops, &mut rng, 4, 1.5);
            let a = rng.gen_range(0.0..0.9);
            b.map(|x| rho_tilde * (1.0 + a * x))
        }
        // vacuum pockets with a smooth wall
        _ => {
            let mut hole = ScalarField::constant(grid, 1.0);
            for &(cx, cy, r) in &centers {
                let b = bump(grid, cx, cy, r);
                hole = hole.zip_map(&b, |h, b| h * (1.0 - (1.5 * b).min(1.0)));
            }
            hole.scale(rho_tilde)
        }
    };
    let v = match variant {
        // supported inside the first pocket
        2 => {
            let (cx, cy, r) = centers[0];
            bump(grid, cx, cy, 0.5 * r)
        }
        _ => {
            let kmax = rng.gen_range(1..8);
            let offset = rng.gen_range(-1.0..1.0) * f64::from(u8::from(variant == 3));
            let decay = rng.gen_range(0.5..2.5);
            band_limited(ops, &mut rng, kmax, decay).map(|x| x + offset)
        }
    };
    InterpSample { rho, v, rho_tilde }
}

/// Three zero-mean band-limited fields.
pub fn clms_sample(ops: &SpectralOps, seed: u64, index: usize) -> [ScalarField; 3] {
    let mut rng = sample_rng(seed, CorpusKind::Clms.tag(), index);
    std::array::from_fn(|_| {
        let kmax = rng.gen_range(1..12);
        let decay = rng.gen_range(0.0..3.0);
        let amp = rng.gen_range(0.1..10.0);
        band_limited(ops, &mut rng, kmax, decay).scale(amp)
    })
}

/// A mollified indicator of a random perturbed ellipse, optionally with a
/// smooth addition, together with the patch it came from.
pub fn log_riesz_sample(grid: Grid, seed: u64, index: usize) -> Result<(ScalarField, PatchSpec)> {
    let mut rng = sample_rng(seed, CorpusKind::LogRiesz.tag(), index);
    let l = grid.length();
    let c = 0.5 * l;
    let a = rng.gen_range(0.08..0.18) * l;
    let b = rng.gen_range(0.08..0.18) * l;
    let tilt: f64 = rng.gen_range(0.0..PI);
    let (s, co) = tilt.sin_cos();
    let mut boundary = FourierCurve {
        x_cos: vec![c + rng.gen_range(-0.03..0.03) * l, a * co],
        x_sin: vec![0.0, -b * s],
        y_cos: vec![c + rng.gen_range(-0.03..0.03) * l, a * s],
        y_sin: vec![0.0, b * co],
    };
    // a small third harmonic keeps curvature moderate
    let wobble = rng.gen_range(0.0..0.04) * a.min(b);
    boundary.x_cos.push(wobble * rng.gen_range(-1.0..1.0));
    boundary.y_sin.push(wobble * rng.gen_range(-1.0..1.0));
    boundary.x_sin.push(0.0);
    boundary.y_cos.push(0.0);
    let h = grid.h();
    let spec = PatchSpec {
        boundary,
        alpha: if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(1.5..4.0) },
        rho_tilde: 1.0,
        edge_width: Some(rng.gen_range(1.5..8.0) * h),
        chi_radius: None,
    };
    let indicator = build_patch_density(&spec, &grid)?;
    let amplitude = rng.gen_range(0.2..5.0);
    let mut g = indicator.map(|r| amplitude * (r - 1.0));
    if rng.gen_bool(0.5) {
        let ops = SpectralOps::new(grid);
        let smooth = band_limited(&ops, &mut rng, 3, 2.0);
        let w = rng.gen_range(0.0..1.0) * amplitude;
        g = g.zip_map(&smooth, |x, y| x + w * y);
    }
    Ok((g, spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub index: usize,
    /// Absent when the inequality is undefined for the sample.
    pub ratio: Option<f64>,
}

/// Results per sample in index order; a failing sample does not stop the others.
fn run_samples<T: Send>(count: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = workers.clamp(1, count.max(1));
    let chunk = count.div_ceil(workers).max(1);
    let mut out: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (c, slot) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (k, s) in slot.iter_mut().enumerate() {
                    *s = Some(f(c * chunk + k));
                }
            });
        }
    });
    out.into_iter().map(|x| x.expect("every sample ran")).collect()
}

/// Ratios for one corpus, two for the interpolation pair.
pub fn corpus_ratios(kind: CorpusKind, seed: u64, count: usize, workers: usize) -> Vec<Result<SampleOutcome>> {
    let grid = Grid::new(CORPUS_GRID, 2.0 * PI).expect("valid corpus grid");
    let ops = SpectralOps::new(grid);
    run_samples(count, workers, |index| {
        let ratio = match kind {
            CorpusKind::InterpL2 | CorpusKind::InterpLq => {
                let s = interp_sample(&ops, seed, index);
                let t = interp_terms(&ops, &s.v, &s.rho, s.rho_tilde, INTERP_P, INTERP_Q)?;
                let (lhs, rhs) = if kind == CorpusKind::InterpL2 {
                    (t.lhs_l2, t.rhs_l2)
                } else {
                    (t.lhs_lq, t.rhs_lq)
                };
                // both sides vanish when v lives where rho = 0; a zero right side
                // with a positive left side is an infinite ratio, i.e. a violation
                Some(if lhs == 0.0 { 0.0 } else { lhs / rhs })
            }
            CorpusKind::Clms => {
                let [f, v, w] = clms_sample(&ops, seed, index);
                clms_check(&ops, &f, &v, &w)?
            }
            CorpusKind::LogRiesz => {
                let (g, spec) = log_riesz_sample(grid, seed, index)?;
                let family = build_tangential_family(&spec, &grid, LOG_RIESZ_P)?;
                log_riesz_terms(&ops, &g, &family, LOG_RIESZ_P, LOG_RIESZ_Q)?.map(|t| t.ratio())
            }
        };
        Ok(SampleOutcome { index, ratio })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedConstant {
    pub value: f64,
    pub max_ratio: f64,
    pub samples: usize,
}

/// Contents of `data/constants.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    pub seed: u64,
    pub headroom: f64,
    pub grid: usize,
    pub interp_p: f64,
    pub interp_q: f64,
    pub log_riesz_p: f64,
    pub log_riesz_q: f64,
    pub interp_l2: CalibratedConstant,
    pub interp_lq: CalibratedConstant,
    pub clms: CalibratedConstant,
    pub log_riesz: CalibratedConstant,
}

impl Constants {
    pub fn get(&self, kind: CorpusKind) -> CalibratedConstant {
        match kind {
            CorpusKind::InterpL2 => self.interp_l2,
            CorpusKind::InterpLq => self.interp_lq,
            CorpusKind::Clms => self.clms,
            CorpusKind::LogRiesz => self.log_riesz,
        }
    }

    /// The constants shipped with the crate.
    pub fn committed() -> Self {
        serde_json::from_str(COMMITTED_CONSTANTS).expect("committed constants parse")
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("constants serialize");
        s.push('\n');
        s
    }
}

pub const COMMITTED_CONSTANTS: &str = include_str!("../data/constants.json");
pub const CALIBRATION_SEED: u64 = 20_240_601;
pub const CALIBRATION_SAMPLES: usize = 1000;
pub const LOG_RIESZ_CALIBRATION_SAMPLES: usize = 200;

pub fn calibration_size(kind: CorpusKind) -> usize {
    if kind == CorpusKind::LogRiesz {
        LOG_RIESZ_CALIBRATION_SAMPLES
    } else {
        CALIBRATION_SAMPLES
    }
}

fn calibrate_one(kind: CorpusKind, seed: u64, count: usize, workers: usize) -> Result<CalibratedConstant> {
    let mut max_ratio: f64 = 0.0;
    for r in corpus_ratios(kind, seed, count, workers) {
        if let Some(v) = r?.ratio {
            max_ratio = max_ratio.max(v);
        }
    }
    if max_ratio <= 0.0 {
        return Err(Error::Constants(format!("{kind:?} calibration produced no positive ratio")));
    }
    Ok(CalibratedConstant {
        value: HEADROOM * max_ratio,
        max_ratio,
        samples: count,
    })
}

/// Runs every calibration corpus; any failing sample aborts the calibration.
pub fn calibrate(seed: u64, workers: usize) -> Result<Constants> {
    let c = |k| calibrate_one(k, seed, calibration_size(k), workers);
    Ok(Constants {
        seed,
        headroom: HEADROOM,
        grid: CORPUS_GRID,
        interp_p: INTERP_P,
        interp_q: INTERP_Q,
        log_riesz_p: LOG_RIESZ_P,
        log_riesz_q: LOG_RIESZ_Q,
        interp_l2: c(CorpusKind::InterpL2)?,
        interp_lq: c(CorpusKind::InterpLq)?,
        clms: c(CorpusKind::Clms)?,
        log_riesz: c(CorpusKind::LogRiesz)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub kind: CorpusKind,
    pub seed: u64,
    pub samples: usize,
    pub constant: f64,
    pub max_ratio: f64,
    /// `min (C rhs - lhs) / rhs`, nonnegative when every sample holds.
    pub min_margin: f64,
    pub violations: Vec<usize>,
    pub undefined: Vec<usize>,
    pub errors: Vec<SampleError>,
    pub passed: bool,
}

/// Checks a fresh corpus against frozen constants.
pub fn check_corpus(kind: CorpusKind, constants: &Constants, seed: u64, count: usize, workers: usize) -> Result<CorpusReport> {
    if constants.grid != CORPUS_GRID
        || constants.interp_p != INTERP_P
        || constants.interp_q != INTERP_Q
        || constants.log_riesz_p != LOG_RIESZ_P
        || constants.log_riesz_q != LOG_RIESZ_Q
    {
        return Err(Error::Constants("constants were calibrated for different corpus parameters".into()));
    }
    if seed == constants.seed {
        return Err(Error::Constants("a fresh corpus needs a seed other than the calibration seed".into()));
    }
    let constant = constants.get(kind).value;
    let mut report = CorpusReport {
        kind,
        seed,
        samples: count,
        constant,
        max_ratio: 0.0,
        min_margin: f64::INFINITY,
        violations: Vec::new(),
        undefined: Vec::new(),
        errors: Vec::new(),
        passed: false,
    };
    for (index, r) in corpus_ratios(kind, seed, count, workers).into_iter().enumerate() {
        match r {
            Ok(SampleOutcome { ratio: Some(v), .. }) => {
                report.max_ratio = report.max_ratio.max(v);
                let margin = constant - v;
                report.min_margin = report.min_margin.min(margin);
                if margin < 0.0 {
                    report.violations.push(index);
                }
            }
            Ok(SampleOutcome { ratio: None, .. }) => report.undefined.push(index),
            Err(e) => report.errors.push(SampleError {
                index,
                message: e.to_string(),
            }),
        }
    }
    report.passed = report.violations.is_empty() && report.errors.is_empty() && report.min_margin.is_finite();
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub name: String,
    pub samples: usize,
    /// Largest relative error over the samples.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn rel(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

/// Riesz sum, Hodge reconstruction, inverse-Laplacian round trip and Parseval
/// on `count` random fields with a random mean.
pub fn spectral_identities(seed: u64, count: usize, workers: usize) -> Vec<IdentityReport> {
    let grid = Grid::new(CORPUS_GRID, 2.0 * PI).expect("valid corpus grid");
    let ops = SpectralOps::new(grid);
    let errors = run_samples(count, workers, |index| -> [f64; 4] {
        let mut rng = sample_rng(seed, 4, index);
        let kmax = rng.gen_range(1..CORPUS_GRID / 2);
        let mean = rng.gen_range(-2.0..2.0);
        let decay = rng.gen_range(0.0..2.0);
        let f = band_limited(&ops, &mut rng, kmax, decay).map(|x| x + mean);
        let u = VectorField::from_components(
            band_limited(&ops, &mut rng, kmax, 1.0).map(|x| x + mean),
            band_limited(&ops, &mut rng, kmax, 1.0),
        );
        let fluct = f.minus_mean();
        let sum = ops
            .riesz(0, 0, &f)
            .and_then(|a| Ok(a.add(&ops.riesz(1, 1, &f)?)))
            .map_or(f64::INFINITY, |s| rel(s.sub(&fluct).linf(), fluct.linf()));
        let hodge = ops.hodge(&u).map_or(f64::INFINITY, |(g, d)| {
            let (mx, my) = u.mean();
            let back = g.add(&d).add(&VectorField::constant(grid, mx, my));
            rel(back.sub(&u).linf(), u.linf())
        });
        let round = ops
            .inverse_neg_laplacian(&fluct)
            .and_then(|psi| ops.laplacian(&psi))
            .map_or(f64::INFINITY, |lap| rel(lap.scale(-1.0).sub(&fluct).linf(), fluct.linf()));
        let physical = f.l2().powi(2);
        let spectral = ops.spectral_l2(&ops.forward(&f)).powi(2);
        [sum, hodge, round, rel((physical - spectral).abs(), physical)]
    });
    ["riesz_sum", "hodge_reconstruction", "inverse_laplacian_round_trip", "parseval"]
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let max_error = errors.iter().map(|e| e[k]).fold(0.0, f64::max);
            IdentityReport {
                name: name.to_string(),
                samples: count,
                max_error,
                tolerance: IDENTITY_TOL,
                passed: max_error <= IDENTITY_TOL,
            }
        })
        .collect()
}
