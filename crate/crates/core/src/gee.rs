//! Penalized estimating equations: the Monte Carlo score, the curvature
//! matrix, the SCAD penalty terms, and the damped Newton update.
//!
//! Subject i contributes D_i^T L_i R^{-1} A_u^{-1/2} (y_i - mu_i) to the
//! score and D_i^T L_i R^{-1} L_i D_i to the curvature, where A_u is the
//! unit variance function b''(theta) and L = diag(d mu/d eta) A_u^{-1/2}.
//! Under a canonical link with unit dispersion L = A^{1/2}, which recovers
//! the familiar A^{1/2} R^{-1} A^{-1/2} weighting; non-canonical pairs route
//! through the same general chain rule. Expectations over the random
//! effects are Monte Carlo averages over a [`DrawBank`]. Sums over subjects
//! are left unnormalized, matching the n E_n scaling of the penalty block.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{evaluate_basis, make_knots, SplineConfig};
use crate::correlation::{correlation_inverse, CorrelationSpec};
use crate::data::{LongitudinalDataset, SolverConfig};
use crate::error::{Error, Result};
use crate::family::{
    conditional_variance, mean_derivative, mean_from_linear_predictor, Family, LinkSpec,
};
use crate::sampler::DrawBank;

/// Combined regression coefficients: penalized fixed effects and the
/// never-penalized spline block.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub beta: DVector<f64>,
    pub alpha: DVector<f64>,
}

impl CoefficientVector {
    pub fn zeros(p: usize, h: usize) -> Self {
        CoefficientVector { beta: DVector::zeros(p), alpha: DVector::zeros(h) }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn h(&self) -> usize {
        self.alpha.len()
    }

    pub fn dim(&self) -> usize {
        self.p() + self.h()
    }

    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        v.rows_mut(0, self.p()).copy_from(&self.beta);
        v.rows_mut(self.p(), self.h()).copy_from(&self.alpha);
        v
    }

    pub fn from_stacked(p: usize, v: &DVector<f64>) -> Self {
        CoefficientVector {
            beta: v.rows(0, p).into_owned(),
            alpha: v.rows(p, v.len() - p).into_owned(),
        }
    }
}

/// SCAD penalty parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScadPenalty {
    pub lambda: f64,
    pub a: f64,
    pub epsilon: f64,
}

impl ScadPenalty {
    pub fn new(lambda: f64) -> Self {
        ScadPenalty { lambda, a: 3.7, epsilon: 1e-6 }
    }

    pub fn with_shape(lambda: f64, a: f64, epsilon: f64) -> Result<Self> {
        if a <= 2.0 {
            return Err(Error::InvalidConfig("SCAD requires a > 2".into()));
        }
        if epsilon <= 0.0 {
            return Err(Error::InvalidConfig("penalty epsilon must be positive".into()));
        }
        if lambda < 0.0 {
            return Err(Error::InvalidConfig("lambda must be nonnegative".into()));
        }
        Ok(ScadPenalty { lambda, a, epsilon })
    }
}

/// SCAD derivative q_lambda(|beta|): lambda on [0, lambda], linearly decaying
/// to zero on [lambda, a*lambda], zero beyond.
pub fn scad_derivative(beta_abs: f64, penalty: &ScadPenalty) -> f64 {
    assert!(beta_abs >= 0.0, "scad_derivative takes |beta|");
    let l = penalty.lambda;
    if l == 0.0 {
        return 0.0;
    }
    if beta_abs <= l {
        l
    } else {
        (penalty.a * l - beta_abs).max(0.0) / (penalty.a - 1.0)
    }
}

/// A dataset joined with its response family and spline design: D_i stacks
/// the fixed covariates with the spline basis evaluated at the subject's
/// observation times.
pub struct GeeModel<'a> {
    pub dataset: &'a LongitudinalDataset,
    pub family: Family,
    pub link: LinkSpec,
    pub spline: SplineConfig,
    pub knots: Vec<f64>,
    design: Vec<DMatrix<f64>>,
    /// Some observation time fell outside the configured time domain.
    pub extrapolated: bool,
}

impl<'a> GeeModel<'a> {
    pub fn new(
        dataset: &'a LongitudinalDataset,
        family: Family,
        link: LinkSpec,
        spline: SplineConfig,
    ) -> Result<Self> {
        dataset.validate_support(family)?;
        let knots = make_knots(&spline, &dataset.all_times())?;
        let p = dataset.n_fixed();
        let h = spline.basis_dim();
        let (lo, hi) = spline.time_domain;
        let mut extrapolated = false;
        let design = dataset
            .subjects()
            .iter()
            .map(|s| {
                let m = s.n_obs();
                let mut d = DMatrix::zeros(m, p + h);
                for j in 0..m {
                    for c in 0..p {
                        d[(j, c)] = s.fixed[(j, c)];
                    }
                    let t = s.times[j];
                    if t < lo || t > hi {
                        extrapolated = true;
                    }
                    let b = evaluate_basis(&spline, &knots, t);
                    for (c, &v) in b.values().iter().enumerate() {
                        d[(j, p + c)] = v;
                    }
                }
                d
            })
            .collect();
        Ok(GeeModel { dataset, family, link, spline, knots, design, extrapolated })
    }

    pub fn p(&self) -> usize {
        self.dataset.n_fixed()
    }

    pub fn h(&self) -> usize {
        self.spline.basis_dim()
    }

    pub fn dim(&self) -> usize {
        self.p() + self.h()
    }

    pub fn design(&self, i: usize) -> &DMatrix<f64> {
        &self.design[i]
    }

    /// The u-free part of the linear predictor, D_i theta, per subject.
    pub fn fixed_eta(&self, theta: &CoefficientVector) -> Vec<DVector<f64>> {
        let stacked = theta.stacked();
        self.design.iter().map(|d| d * &stacked).collect()
    }

    /// Inverses of the working correlation for every cluster size present.
    pub(crate) fn correlation_inverses(
        &self,
        corr: &CorrelationSpec,
    ) -> Result<BTreeMap<usize, DMatrix<f64>>> {
        let mut map = BTreeMap::new();
        for s in self.dataset.subjects() {
            let m = s.n_obs();
            if !map.contains_key(&m) {
                map.insert(m, correlation_inverse(corr, m)?);
            }
        }
        Ok(map)
    }
}

pub(crate) struct Assembled {
    pub score: DVector<f64>,
    pub h: Option<DMatrix<f64>>,
    pub meat: Option<DMatrix<f64>>,
    pub clamp_events: usize,
}

/// One pass over subjects and draws computing the Monte Carlo score and,
/// on request, the curvature H and the sandwich meat M.
pub(crate) fn assemble(
    model: &GeeModel<'_>,
    theta: &CoefficientVector,
    bank: &DrawBank,
    corr: &CorrelationSpec,
    want_h: bool,
    want_meat: bool,
) -> Result<Assembled> {
    assert!(!bank.is_empty(), "assembly needs a nonempty draw bank");
    let dim = model.dim();
    let n = model.dataset.n_subjects();
    let n_draws = bank.len();
    let q = bank.q();
    let rinv = model.correlation_inverses(corr)?;
    let fixed = model.fixed_eta(theta);
    let eta_bound = model.link.eta_bound().unwrap_or(f64::INFINITY);

    let mut score = DVector::zeros(dim);
    let mut h = if want_h { Some(DMatrix::zeros(dim, dim)) } else { None };
    let mut meat = if want_meat { Some(DMatrix::zeros(dim, dim)) } else { None };
    let mut clamp_events = 0usize;

    let mut g_mat = DMatrix::<f64>::zeros(0, 0);
    let mut t_mat = DMatrix::<f64>::zeros(0, 0);
    let mut rs = DVector::<f64>::zeros(0);
    let mut w = DVector::<f64>::zeros(0);
    let mut g_vec = DVector::zeros(dim);

    for i in 0..n {
        let subject = &model.dataset.subjects()[i];
        let m = subject.n_obs();
        let d_i = model.design(i);
        let r_inv = &rinv[&m];
        if g_mat.nrows() != m {
            g_mat = DMatrix::zeros(m, dim);
            t_mat = DMatrix::zeros(m, dim);
            rs = DVector::zeros(m);
            w = DVector::zeros(m);
        }
        for k in 0..n_draws {
            let u = bank.subject_draw(k, i);
            for j in 0..m {
                let mut eta = fixed[i][j];
                for (c, &uc) in u.iter().enumerate().take(q) {
                    eta += subject.random[(j, c)] * uc;
                }
                if eta.abs() > eta_bound {
                    clamp_events += 1;
                }
                let mu = mean_from_linear_predictor(model.family, model.link, eta);
                let lam = mean_derivative(model.family, model.link, eta);
                let nu_unit =
                    conditional_variance(model.family, mu)? / model.family.dispersion;
                let su = nu_unit.sqrt();
                let left = lam / su;
                for c in 0..dim {
                    g_mat[(j, c)] = d_i[(j, c)] * left;
                }
                rs[j] = (subject.responses[j] - mu) / su;
            }
            w.gemv(1.0, r_inv, &rs, 0.0);
            g_vec.gemv_tr(1.0, &g_mat, &w, 0.0);
            score += &g_vec;
            if let Some(meat) = meat.as_mut() {
                meat.ger(1.0, &g_vec, &g_vec, 1.0);
            }
            if let Some(h) = h.as_mut() {
                t_mat.gemm(1.0, r_inv, &g_mat, 0.0);
                h.gemm_tr(1.0, &g_mat, &t_mat, 1.0);
            }
        }
    }
    let scale = 1.0 / n_draws as f64;
    score *= scale;
    if let Some(h) = h.as_mut() {
        *h *= scale;
        let sym = (&*h + h.transpose()) * 0.5;
        h.copy_from(&sym);
    }
    if let Some(meat) = meat.as_mut() {
        *meat *= scale;
        let sym = (&*meat + meat.transpose()) * 0.5;
        meat.copy_from(&sym);
    }
    Ok(Assembled { score, h, meat, clamp_events })
}

/// Monte Carlo GEE score S_n(theta), summed over subjects and averaged over
/// the draw bank.
pub fn assemble_score(
    model: &GeeModel<'_>,
    theta: &CoefficientVector,
    bank: &DrawBank,
    corr: &CorrelationSpec,
) -> Result<DVector<f64>> {
    Ok(assemble(model, theta, bank, corr, false, false)?.score)
}

/// Monte Carlo curvature H_n(theta); symmetric by construction.
pub fn assemble_h(
    model: &GeeModel<'_>,
    theta: &CoefficientVector,
    bank: &DrawBank,
    corr: &CorrelationSpec,
) -> Result<DMatrix<f64>> {
    Ok(assemble(model, theta, bank, corr, true, false)?.h.unwrap())
}

/// Monte Carlo sandwich meat M_n(theta): the draw average of the outer
/// products of per-subject score contributions.
pub fn assemble_meat(
    model: &GeeModel<'_>,
    theta: &CoefficientVector,
    bank: &DrawBank,
    corr: &CorrelationSpec,
) -> Result<DMatrix<f64>> {
    Ok(assemble(model, theta, bank, corr, false, true)?.meat.unwrap())
}

/// Diagonal of the local quadratic penalty matrix E_n(theta):
/// q_lambda(|beta_k|)/(epsilon + |beta_k|) on the beta block, exact zeros on
/// the spline block.
pub fn assemble_e(theta: &CoefficientVector, penalty: &ScadPenalty) -> DVector<f64> {
    let p = theta.p();
    DVector::from_fn(theta.dim(), |k, _| {
        if k < p {
            let b = theta.beta[k].abs();
            scad_derivative(b, penalty) / (penalty.epsilon + b)
        } else {
            0.0
        }
    })
}

/// Penalized estimating function U_n(theta) = S_n(theta) - n E_n(theta) theta
/// in its local-quadratic form; the spline block passes through unpenalized.
pub fn penalized_u(
    score: &DVector<f64>,
    theta: &CoefficientVector,
    penalty: &ScadPenalty,
    n: usize,
) -> DVector<f64> {
    let e = assemble_e(theta, penalty);
    score - e.component_mul(&theta.stacked()) * n as f64
}

/// Solve (H + nE) x = rhs by Cholesky, retrying once with a 1e-8 ridge.
fn solve_penalized_system(
    mut m: DMatrix<f64>,
    rhs: &DVector<f64>,
) -> Result<(DVector<f64>, bool)> {
    if let Some(chol) = m.clone().cholesky() {
        return Ok((chol.solve(rhs), false));
    }
    for k in 0..m.nrows() {
        m[(k, k)] += 1e-8;
    }
    match m.cholesky() {
        Some(chol) => Ok((chol.solve(rhs), true)),
        None => Err(Error::SingularSystem),
    }
}

/// Outcome of one damped Newton update.
#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub theta: CoefficientVector,
    /// False when step-halving exhausted without decreasing the penalized
    /// score norm; theta is then unchanged.
    pub accepted: bool,
    pub halvings: usize,
    pub jittered: bool,
    pub u_norm_before: f64,
    pub u_norm_after: f64,
    pub delta_inf: f64,
    pub clamp_events: usize,
}

/// One Newton update of the penalized estimating equation:
/// theta + (H + nE)^{-1} (S - nE theta), with step-halving whenever the
/// sup-norm of U_n does not decrease.
pub fn newton_step(
    model: &GeeModel<'_>,
    theta: &CoefficientVector,
    bank: &DrawBank,
    corr: &CorrelationSpec,
    penalty: &ScadPenalty,
    solver: &SolverConfig,
) -> Result<NewtonOutcome> {
    let n = model.dataset.n_subjects();
    let p = model.p();
    let asm = assemble(model, theta, bank, corr, true, false)?;
    let mut clamp_events = asm.clamp_events;
    let h = asm.h.unwrap();
    let e = assemble_e(theta, penalty);
    // S - nE theta is exactly the local-quadratic U_n at theta.
    let u0 = penalized_u(&asm.score, theta, penalty, n);
    let u0_norm = u0.amax();
    let mut system = h;
    for k in 0..system.nrows() {
        system[(k, k)] += n as f64 * e[k];
    }
    let (delta, jittered) = solve_penalized_system(system, &u0)?;
    let stacked = theta.stacked();
    let mut step = delta;
    let mut halvings = 0usize;
    loop {
        let candidate = CoefficientVector::from_stacked(p, &(&stacked + &step));
        let trial = assemble(model, &candidate, bank, corr, false, false)?;
        clamp_events += trial.clamp_events;
        let u_new = penalized_u(&trial.score, &candidate, penalty, n).amax();
        if u_new.is_finite() && u_new <= u0_norm {
            return Ok(NewtonOutcome {
                delta_inf: step.amax(),
                theta: candidate,
                accepted: true,
                halvings,
                jittered,
                u_norm_before: u0_norm,
                u_norm_after: u_new,
                clamp_events,
            });
        }
        if halvings >= solver.step_halving_limit {
            return Ok(NewtonOutcome {
                theta: theta.clone(),
                accepted: false,
                halvings,
                jittered,
                u_norm_before: u0_norm,
                u_norm_after: u0_norm,
                delta_inf: 0.0,
                clamp_events,
            });
        }
        step /= 2.0;
        halvings += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::KnotPlacement;
    use crate::data::SubjectData;
    use approx::assert_relative_eq;

    fn scad(lambda: f64) -> ScadPenalty {
        ScadPenalty::new(lambda)
    }

    #[test]
    fn scad_derivative_examples() {
        let p = scad(0.45);
        assert_relative_eq!(scad_derivative(0.1, &p), 0.45);
        // a*lambda = 1.665 < 2, flat tail
        assert_relative_eq!(scad_derivative(2.0, &p), 0.0);
        assert_relative_eq!(
            scad_derivative(1.0, &p),
            0.45 * (1.665 - 1.0) / (2.7 * 0.45),
            max_relative = 1e-12
        );
    }

    #[test]
    fn scad_derivative_shape() {
        for lambda in [0.1, 0.45, 1.0] {
            let p = scad(lambda);
            // lambda on [0, lambda]
            for i in 0..=20 {
                let b = lambda * i as f64 / 20.0;
                assert_eq!(scad_derivative(b, &p), lambda);
            }
            // 0 on [a lambda, inf)
            for i in 0..=20 {
                let b = p.a * lambda + i as f64 * 0.3;
                assert_eq!(scad_derivative(b, &p), 0.0);
            }
            // continuity at branch points and nonincreasing overall
            for &branch in &[lambda, p.a * lambda] {
                let below = scad_derivative((branch - 1e-9).max(0.0), &p);
                let above = scad_derivative(branch + 1e-9, &p);
                assert!((below - above).abs() < 1e-8);
            }
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let v = scad_derivative(i as f64 * 0.05 * lambda.max(0.1), &p);
                assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
        let p0 = scad(0.0);
        for i in 0..10 {
            assert_eq!(scad_derivative(i as f64 * 0.3, &p0), 0.0);
        }
    }

    #[test]
    fn penalty_matrix_examples() {
        let theta = CoefficientVector {
            beta: DVector::from_vec(vec![0.0, 1.0]),
            alpha: DVector::from_vec(vec![3.0]),
        };
        let e = assemble_e(&theta, &scad(0.0));
        assert!(e.iter().all(|&v| v == 0.0));

        let e = assemble_e(&theta, &scad(0.45));
        assert_relative_eq!(e[0], 0.45 / 1e-6);
        let q1 = 0.45 * (1.665 - 1.0) / (2.7 * 0.45);
        assert_relative_eq!(e[1], q1 / (1e-6 + 1.0), max_relative = 1e-12);
        // spline block exactly zero regardless of theta
        assert_eq!(e[2], 0.0);
    }

    #[test]
    fn penalized_u_examples() {
        let theta = CoefficientVector {
            beta: DVector::from_vec(vec![1.0, 0.0]),
            alpha: DVector::from_vec(vec![2.0]),
        };
        let score = DVector::from_vec(vec![1.0, 0.7, -0.2]);
        // lambda = 0: U = S
        assert_eq!(penalized_u(&score, &theta, &scad(0.0), 10), score);
        // beta = 0 exactly: penalty contribution vanishes
        let u = penalized_u(&score, &theta, &scad(0.45), 10);
        assert_eq!(u[1], 0.7);
        // hand value for the first coordinate
        let q1 = 0.45 * (1.665 - 1.0) / (2.7 * 0.45);
        assert_relative_eq!(u[0], 1.0 - 10.0 * q1 / (1.0 + 1e-6), max_relative = 1e-9);
        // spline block unpenalized
        assert_eq!(u[2], -0.2);
    }

    fn toy_gaussian_dataset() -> LongitudinalDataset {
        // 4 subjects, 2 observations each, 2 fixed covariates, no random
        // effects.
        let xs = [
            [[1.0, 0.5], [-0.3, 0.2]],
            [[0.4, -1.0], [0.9, 0.1]],
            [[-0.6, 0.3], [0.2, -0.8]],
            [[0.7, 0.9], [-0.5, -0.4]],
        ];
        let ys = [[1.2, 0.3], [-0.4, 0.8], [0.5, -0.2], [1.0, 0.1]];
        let subjects = (0..4)
            .map(|i| SubjectData {
                id: format!("s{i}"),
                times: vec![0.2, 0.8],
                responses: ys[i].to_vec(),
                fixed: DMatrix::from_fn(2, 2, |r, c| xs[i][r][c]),
                random: DMatrix::zeros(2, 0),
            })
            .collect();
        LongitudinalDataset::new(
            subjects,
            vec!["x1".into(), "x2".into()],
            vec![],
        )
        .unwrap()
    }

    fn linear_spline() -> SplineConfig {
        SplineConfig {
            degree: 1,
            interior_knot_count: 0,
            knot_placement: KnotPlacement::EquallySpaced,
            smoothness_order: 2,
            time_domain: (0.0, 1.0),
        }
    }

    #[test]
    fn gaussian_identity_score_is_exact_residual_projection() {
        // Gaussian, identity link, Z = 0, independence: the score is exactly
        // sum_i D_i^T (y_i - D_i theta).
        let dataset = toy_gaussian_dataset();
        let model = GeeModel::new(
            &dataset,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let theta = CoefficientVector {
            beta: DVector::from_vec(vec![0.3, -0.2]),
            alpha: DVector::from_vec(vec![0.1, 0.4]),
        };
        let bank = DrawBank::zero(4, 0);
        let corr = CorrelationSpec::independence();
        let score = assemble_score(&model, &theta, &bank, &corr).unwrap();
        let stacked = theta.stacked();
        let mut expected = DVector::zeros(model.dim());
        for i in 0..4 {
            let d = model.design(i);
            let y = DVector::from_vec(dataset.subjects()[i].responses.clone());
            expected += d.transpose() * (y - d * &stacked);
        }
        assert_relative_eq!(score, expected, max_relative = 1e-12, epsilon = 1e-12);

        // Residuals vanish when y = mu for every draw.
        let mut exact = dataset.clone();
        let fitted = model.fixed_eta(&theta);
        let mut subjects = exact.subjects().to_vec();
        for (i, s) in subjects.iter_mut().enumerate() {
            s.responses = fitted[i].iter().copied().collect();
        }
        exact = LongitudinalDataset::new(
            subjects,
            exact.fixed_names().to_vec(),
            exact.random_names().to_vec(),
        )
        .unwrap();
        let model2 = GeeModel::new(
            &exact,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let score = assemble_score(&model2, &theta, &bank, &corr).unwrap();
        assert!(score.amax() < 1e-12);
    }

    #[test]
    fn h_is_gram_matrix_under_independence_and_unit_variance() {
        let dataset = toy_gaussian_dataset();
        let model = GeeModel::new(
            &dataset,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let theta = CoefficientVector::zeros(2, 2);
        let bank = DrawBank::zero(4, 0);
        let h = assemble_h(&model, &theta, &bank, &CorrelationSpec::independence()).unwrap();
        let mut expected = DMatrix::zeros(4, 4);
        for i in 0..4 {
            let d = model.design(i);
            expected += d.transpose() * d;
        }
        assert_relative_eq!(h, expected, max_relative = 1e-12, epsilon = 1e-12);
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn h_is_positive_semidefinite_on_random_vectors() {
        let dataset = toy_gaussian_dataset();
        let model = GeeModel::new(
            &dataset,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let theta = CoefficientVector::zeros(2, 2);
        let bank = DrawBank::zero(4, 0);
        let corr = CorrelationSpec {
            kind: crate::correlation::CorrelationKind::Exchangeable,
            rho: 0.4,
        };
        let h = assemble_h(&model, &theta, &bank, &corr).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x = DVector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5);
            let v = (x.transpose() * &h * &x)[(0, 0)];
            assert!(v >= -1e-12, "x^T H x = {v}");
        }
    }

    #[test]
    fn newton_from_zero_hits_least_squares_in_one_step() {
        let dataset = toy_gaussian_dataset();
        let model = GeeModel::new(
            &dataset,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let theta = CoefficientVector::zeros(2, 2);
        let bank = DrawBank::zero(4, 0);
        let corr = CorrelationSpec::independence();
        let out = newton_step(
            &model,
            &theta,
            &bank,
            &corr,
            &scad(0.0),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(out.accepted);
        // Least squares on the stacked design via an independent route (SVD).
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for i in 0..4 {
            let d = model.design(i);
            for j in 0..2 {
                rows.push(d.row(j).into_owned());
                ys.push(dataset.subjects()[i].responses[j]);
            }
        }
        let x = DMatrix::from_rows(&rows);
        let y = DVector::from_vec(ys);
        let ls = x.svd(true, true).solve(&y, 1e-12).unwrap();
        assert_relative_eq!(out.theta.stacked(), ls, epsilon = 1e-9);
    }

    #[test]
    fn zero_score_and_penalty_is_a_fixed_point() {
        // With y = mu(theta) the score vanishes; beta = 0 kills E theta.
        let dataset = toy_gaussian_dataset();
        let model = GeeModel::new(
            &dataset,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let theta = CoefficientVector::zeros(2, 2);
        let fitted = model.fixed_eta(&theta);
        let mut subjects = dataset.subjects().to_vec();
        for (i, s) in subjects.iter_mut().enumerate() {
            s.responses = fitted[i].iter().copied().collect();
        }
        let exact = LongitudinalDataset::new(
            subjects,
            dataset.fixed_names().to_vec(),
            dataset.random_names().to_vec(),
        )
        .unwrap();
        let model = GeeModel::new(
            &exact,
            Family::gaussian(1.0).unwrap(),
            LinkSpec::identity(),
            linear_spline(),
        )
        .unwrap();
        let bank = DrawBank::zero(4, 0);
        let out = newton_step(
            &model,
            &theta,
            &bank,
            &CorrelationSpec::independence(),
            &scad(0.45),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(out.accepted);
        assert!(out.delta_inf < 1e-12);
        assert_relative_eq!(out.theta.stacked(), theta.stacked());
    }
}
