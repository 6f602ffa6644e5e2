//! Independent oracles: finite differences, quadrature KL, exhaustive
//! posterior enumeration and cross-algorithm equivalence runs.

mod enumerate;
mod equivalence;
mod independent;
pub mod quadrature;
mod sampling;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::FamilySpec;
use crate::models::{LatentModel, ModelKind};
use crate::solver::{missing_information_values, StepSchedule};
use crate::tolerances::Tolerances;

pub use enumerate::{enumerate_posterior_stats, MAX_ENUMERATION_K, MAX_ENUMERATION_N};
pub use equivalence::{
    gd_reparam_control, reparam_invariance, smd_equivalence, ReparamReport, GD_CONTROL_MIN_KL, REPARAM_DECREMENT_REL,
};
pub use independent::{conditional_information, direct_nll};
pub use quadrature::{numeric_kl_continuous, numeric_kl_discrete};
pub use sampling::{random_covariance, random_instance, random_natural, reference_families};

/// Whether an error must stay below or rise above the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub tolerance_name: String,
    pub direction: Direction,
    /// Judge on the relative rather than the absolute error.
    pub relative: bool,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl OracleReport {
    pub fn new(name: &str, tolerance_name: &str, tolerance: f64, direction: Direction) -> Self {
        OracleReport {
            name: name.into(),
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            samples: 0,
            tolerance,
            tolerance_name: tolerance_name.into(),
            direction,
            relative: false,
            pass: true,
            note: None,
        }
    }

    pub fn relative(mut self) -> Self {
        self.relative = true;
        self
    }

    /// Records one comparison. NaN errors count as failures.
    pub fn observe_value(&mut self, abs: f64, rel: f64) {
        self.samples += 1;
        if abs.is_nan() || rel.is_nan() {
            self.pass = false;
            self.note.get_or_insert_with(|| "non-finite comparison".into());
        }
        if self.samples == 1 && self.direction == Direction::Above {
            self.max_abs_err = abs;
            self.max_rel_err = rel;
        } else if self.direction == Direction::Above {
            self.max_abs_err = self.max_abs_err.min(abs);
            self.max_rel_err = self.max_rel_err.min(rel);
        } else {
            self.max_abs_err = self.max_abs_err.max(abs);
            self.max_rel_err = self.max_rel_err.max(rel);
        }
    }

    /// Element-wise comparison of two vectors.
    pub fn observe_slice(&mut self, a: &[f64], b: &[f64]) {
        if a.len() != b.len() {
            self.samples += 1;
            self.pass = false;
            self.note = Some(format!("length mismatch {} vs {}", a.len(), b.len()));
            return;
        }
        let (abs, scale) = a
            .iter()
            .zip(b)
            .fold((0.0f64, 0.0f64), |(e, s), (&x, &y)| (e.max((x - y).abs()), s.max(x.abs()).max(y.abs())));
        self.observe_value(abs, if scale > 0.0 { abs / scale } else { abs });
    }

    /// Sets `pass` from the recorded errors.
    pub fn finish(mut self) -> Self {
        let err = if self.relative { self.max_rel_err } else { self.max_abs_err };
        let ok = match self.direction {
            Direction::Below => err < self.tolerance,
            Direction::Above => err > self.tolerance,
        };
        self.pass = self.pass && ok && self.samples > 0;
        self
    }

    pub fn merge(mut self, other: &OracleReport) -> Self {
        self.samples += other.samples;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.pass = self.pass && other.pass;
        if self.note.is_none() {
            self.note = other.note.clone();
        }
        self
    }
}

/// Relative error `‖a - b‖_∞ / max(‖a‖_∞, ‖b‖_∞, floor)`.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>, floor: f64) -> f64 {
    let scale = a.amax().max(b.amax()).max(floor);
    (a - b).amax() / scale
}

/// Central differences with step `h·(1 + |θ_i|)`. A probe that `f` rejects
/// with a domain error halves that coordinate's step, up to 30 times.
pub fn finite_diff_gradient(
    f: impl Fn(&DVector<f64>) -> Result<f64>,
    theta: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let mut g = DVector::zeros(theta.len());
    for i in 0..theta.len() {
        let mut step = h * (1.0 + theta[i].abs());
        let mut tries = 0;
        loop {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += step;
            minus[i] -= step;
            match (f(&plus), f(&minus)) {
                (Ok(a), Ok(b)) => {
                    g[i] = (a - b) / (2.0 * step);
                    break;
                }
                (Err(e), _) | (_, Err(e)) if e.is_domain() && tries < 30 => {
                    tries += 1;
                    step *= 0.5;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
    }
    Ok(g)
}

/// Jacobian of a vector field by central differences, same step rule.
pub fn finite_diff_jacobian(
    f: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    theta: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>> {
    let mut cols = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut step = h * (1.0 + theta[i].abs());
        let mut tries = 0;
        loop {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += step;
            minus[i] -= step;
            match (f(&plus), f(&minus)) {
                (Ok(a), Ok(b)) => {
                    cols.push((a - b) / (2.0 * step));
                    break;
                }
                (Err(e), _) | (_, Err(e)) if e.is_domain() && tries < 30 => {
                    tries += 1;
                    step *= 0.5;
                }
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Round trip, duality, three-point identity and (for 1-D families) the
/// quadrature KL, over `pairs` random parameter pairs.
pub fn family_identities(family: &FamilySpec, pairs: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let tol = Tolerances::DEFAULT;
    let name = family.name();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut round = OracleReport::new(&format!("round_trip[{name}]"), "round_trip", tol.round_trip, Direction::Below);
    let mut dual = OracleReport::new(&format!("duality[{name}]"), "duality", tol.duality, Direction::Below);
    let mut three = OracleReport::new(&format!("three_point[{name}]"), "duality", tol.duality, Direction::Below);
    let mut quad = OracleReport::new(&format!("quadrature_kl[{name}]"), "quadrature_kl", tol.quadrature_kl, Direction::Below);
    for _ in 0..pairs {
        let a = random_natural(family, &mut rng)?;
        let b = random_natural(family, &mut rng)?;
        let c = random_natural(family, &mut rng)?;
        let (ma, mb) = (family.mean_map(&a)?, family.mean_map(&b)?);
        let back = family.inverse_mean_map(&ma)?;
        round.observe_value((&back - &a).amax(), relative_error(&back, &a, 1.0));

        let d_nat = family.bregman(&b, &a)?;
        let d_mean = family.dual_bregman(&ma, &mb)?;
        dual.observe_value((d_nat - d_mean).abs(), (d_nat - d_mean).abs() / d_nat.abs().max(1.0));

        // D(c, a) = D(c, b) + D(b, a) - ⟨∇A(a) - ∇A(b), c - b⟩
        let lhs = family.bregman(&c, &a)?;
        let rhs = family.bregman(&c, &b)? + family.bregman(&b, &a)? - (&ma - &mb).dot(&(&c - &b));
        three.observe_value((lhs - rhs).abs(), (lhs - rhs).abs() / lhs.abs().max(1.0));

        if let Some(q) = quadrature_kl(family, &a, &b)? {
            quad.observe_value((q - d_nat).abs(), (q - d_nat).abs() / q.abs().max(1.0));
        }
    }
    let mut out = vec![round.finish(), dual.finish(), three.finish()];
    if quad.samples > 0 {
        out.push(quad.finish());
    }
    Ok(out)
}

/// `KL(p_a ‖ p_b)` by quadrature or exact summation, from usual parameters.
/// `None` for families without a 1-D reference density.
pub fn quadrature_kl(family: &FamilySpec, a: &DVector<f64>, b: &DVector<f64>) -> Result<Option<f64>> {
    let sig = |e: f64| 1.0 / (1.0 + (-e).exp());
    let probs = |t: &DVector<f64>| {
        let mut e: Vec<f64> = t.iter().map(|v| v.exp()).collect();
        e.push(1.0);
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect::<Vec<_>>()
    };
    Ok(Some(match family {
        FamilySpec::Bernoulli => numeric_kl_discrete(&[1.0 - sig(a[0]), sig(a[0])], &[1.0 - sig(b[0]), sig(b[0])])?,
        FamilySpec::Categorical { .. } => numeric_kl_discrete(&probs(a), &probs(b))?,
        FamilySpec::Gaussian => {
            let (va, vb) = (-0.5 / a[1], -0.5 / b[1]);
            quadrature::gaussian_kl_quadrature(a[0] * va, va, b[0] * vb, vb)?
        }
        FamilySpec::UnitVarianceGaussian => quadrature::gaussian_kl_quadrature(a[0], 1.0, b[0], 1.0)?,
        _ => return Ok(None),
    }))
}

/// `∇A` against finite differences of `A`, and `∇²A` against finite
/// differences of `∇A`, at `points` random parameters.
pub fn family_derivatives(family: &FamilySpec, points: usize, seed: u64) -> Result<Vec<OracleReport>> {
    let name = family.name();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad =
        OracleReport::new(&format!("log_partition_gradient[{name}]"), "log_partition_gradient", 1e-6, Direction::Below)
            .relative();
    let mut hess = OracleReport::new(&format!("fisher[{name}]"), "gradient_rel", Tolerances::DEFAULT.gradient_rel, Direction::Below)
        .relative();
    for _ in 0..points {
        let t = random_natural(family, &mut rng)?;
        let fd = finite_diff_gradient(|v| family.log_partition(v), &t, 1e-5)?;
        let an = family.mean_map(&t)?;
        grad.observe_value((&fd - &an).amax(), relative_error(&fd, &an, 1.0));
        let jac = finite_diff_jacobian(|v| family.mean_map(v), &t, 1e-5)?;
        let f = family.fisher(&t)?;
        let scale = f.amax().max(1.0);
        hess.observe_value((&jac - &f).amax(), (&jac - &f).amax() / scale);
    }
    Ok(vec![grad.finish(), hess.finish()])
}

/// Analytic `∇L` against finite differences of an independently computed NLL.
pub fn gradient_check(model: &LatentModel, theta: &DVector<f64>) -> Result<OracleReport> {
    let fd = finite_diff_gradient(|v| direct_nll(model, v), theta, 1e-5)?;
    let an = model.nll_gradient_values(theta)?;
    let mut r = OracleReport::new(
        &format!("nll_gradient[{:?}]", model.kind()),
        "gradient_rel",
        Tolerances::DEFAULT.gradient_rel,
        Direction::Below,
    )
    .relative();
    r.observe_value((&fd - &an).amax(), relative_error(&fd, &an, 1e-3));
    Ok(r.finish())
}

/// Curvature checks at one point: `∇²A - ∇²L_fd` against the analytic
/// conditional information, its symmetry and PSD-ness, and the spectral
/// identity `1 - λ_max(M) = λ_min(∇²L, ∇²A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureCheck {
    /// Largest entry of `|(∇²A - ∇²L_fd) - I_{z|x}|`.
    pub conditional_err: f64,
    pub conditional_asymmetry: f64,
    pub conditional_min_eig: f64,
    pub lambda_max: f64,
    pub generalized_min: f64,
    pub spectral_gap_err: f64,
}

/// Tolerance for the curvature identities.
pub const CURVATURE_TOL: f64 = 1e-4;

pub fn curvature_check(model: &LatentModel, theta: &DVector<f64>) -> Result<CurvatureCheck> {
    let info = missing_information_values(model, theta)?;
    let analytic = conditional_information(model, theta)?;
    let scale = info.fisher.amax().max(1.0);
    let conditional_err = (&info.conditional - &analytic).amax() / scale;
    let conditional_asymmetry = (&analytic - analytic.transpose()).amax();
    let conditional_min_eig = SymmetricEigen::new(analytic.clone()).eigenvalues.min();
    // generalized eigenvalues of (H, F) through F^{-1/2}, with H from the
    // analytic conditional information
    let eig = SymmetricEigen::new(info.fisher.clone());
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Solve("Fisher information is not positive-definite".into()));
    }
    let inv_sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig.eigenvectors.transpose();
    let h = &info.fisher - &analytic;
    let w = &inv_sqrt * h * &inv_sqrt;
    let generalized_min = SymmetricEigen::new((&w + w.transpose()) * 0.5).eigenvalues.min();
    let spectral_gap_err = ((1.0 - info.lambda_max) - generalized_min).abs();
    Ok(CurvatureCheck {
        conditional_err,
        conditional_asymmetry,
        conditional_min_eig,
        lambda_max: info.lambda_max,
        generalized_min,
        spectral_gap_err,
    })
}

impl CurvatureCheck {
    pub fn pass(&self) -> bool {
        self.conditional_err < CURVATURE_TOL
            && self.conditional_asymmetry < CURVATURE_TOL
            && self.conditional_min_eig > -CURVATURE_TOL
            && self.spectral_gap_err < CURVATURE_TOL
    }
}

/// E-step against exhaustive enumeration.
pub fn enumeration_check(model: &LatentModel, theta: &DVector<f64>) -> Result<OracleReport> {
    let oracle = enumerate_posterior_stats(model, theta)?;
    let s = model.expected_stats(&model.natural(theta.clone())?)?;
    let mut r = OracleReport::new(
        &format!("enumeration[{:?}]", model.kind()),
        "enumeration",
        Tolerances::DEFAULT.enumeration,
        Direction::Below,
    );
    r.observe_slice(s.as_slice(), oracle.as_slice());
    Ok(r.finish())
}

fn fold(name: &str, reports: Vec<OracleReport>) -> OracleReport {
    let mut it = reports.into_iter();
    let first = it.next().expect("at least one report");
    let mut out = it.fold(first, |acc, r| acc.merge(&r));
    out.name = name.into();
    out
}

/// The full oracle suite at moderate sizes, deterministic in `seed`.
pub fn run_suite(seed: u64) -> Result<Vec<OracleReport>> {
    let mut out = Vec::new();
    for (i, fam) in reference_families().iter().enumerate() {
        out.extend(family_identities(fam, 20, seed.wrapping_add(i as u64))?);
        out.extend(family_derivatives(fam, 5, seed.wrapping_add(100 + i as u64))?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kinds = [
        (ModelKind::GaussianMixture { k: 2 }, 1),
        (ModelKind::GaussianMixture { k: 3 }, 2),
        (ModelKind::BernoulliMixture { k: 2 }, 3),
        (ModelKind::SingleGaussian, 2),
        (ModelKind::UnitVarianceGaussian, 1),
    ];
    let mut grads = Vec::new();
    let mut enums = Vec::new();
    let mut curv = OracleReport::new("curvature_identities", "curvature", CURVATURE_TOL, Direction::Below);
    for &(kind, p) in &kinds {
        for _ in 0..3 {
            let (model, theta) = random_instance(kind, 30, p, &mut rng)?;
            grads.push(gradient_check(&model, &theta)?);
            let c = curvature_check(&model, &theta)?;
            let worst = c.conditional_err.max(c.spectral_gap_err).max(c.conditional_asymmetry).max(-c.conditional_min_eig);
            curv.observe_value(worst, worst);
            let (small, theta) = random_instance(kind, 5, p, &mut rng)?;
            enums.push(enumeration_check(&small, &theta)?);
        }
    }
    out.push(fold("nll_gradient", grads));
    out.push(fold("enumeration", enums));
    out.push(curv.finish());

    let (bern, theta) = random_instance(ModelKind::BernoulliMixture { k: 3 }, 100, 4, &mut rng)?;
    out.push(smd_equivalence(&bern, &theta, 500, StepSchedule::InverseT { offset: 10.0 }, seed)?);
    let (gmm, theta) = random_instance(ModelKind::GaussianMixture { k: 2 }, 100, 2, &mut rng)?;
    let rep = reparam_invariance(&gmm, &theta, 50)?;
    out.push(rep.iterates);
    out.push(rep.decrement);
    let (uni, _) = random_instance(ModelKind::SingleGaussian, 50, 1, &mut rng)?;
    let start = crate::expfam::gaussian_natural(0.5, 2.0);
    // largest step on a halving ladder that keeps both paths in the domain
    let mut step = 0.5;
    let control = loop {
        match gd_reparam_control(&uni, &start, 5, step) {
            Err(e) if e.is_domain() && step > 1e-3 => step *= 0.5,
            other => break other?,
        }
    };
    out.push(control);
    Ok(out)
}
