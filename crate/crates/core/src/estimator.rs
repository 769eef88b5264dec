//! Kalman filter over a [`LinearSystemModel`].
//!
//! The posterior covariance is symmetrized and clamped to PSD after every
//! update rather than using the Joseph form.

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::linalg::{clamp_psd, min_eigenvalue, symmetrize, Mat, Vector};
use crate::plant::LinearSystemModel;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: Vector,
    pub cov: Mat,
    pub t: f64,
}

impl GaussianBelief {
    pub fn new(mean: Vector, cov: Mat, t: f64) -> Self {
        Self { mean, cov, t }
    }

    /// Belief at the true initial state with `cov = 10 G Q Gᵀ`.
    pub fn initial(model: &LinearSystemModel, x0: &Vector, t: f64) -> Self {
        Self::new(x0.clone(), model.process_covariance() * 10.0, t)
    }
}

/// Measurement residual and its predicted covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub r: Vector,
    pub s: Mat,
    pub t: f64,
}

impl Innovation {
    /// Normalized innovation squared `rᵀ S⁻¹ r`.
    pub fn nis(&self) -> Result<f64> {
        let chol = self.s.clone().cholesky().ok_or(Error::EstimatorDegenerate)?;
        Ok(self.r.dot(&chol.solve(&self.r)))
    }

    /// NIS restricted to a subset of measurement components.
    pub fn nis_subset(&self, components: &[usize]) -> Result<f64> {
        let k = components.len();
        let r = Vector::from_iterator(k, components.iter().map(|&i| self.r[i]));
        let s = Mat::from_fn(k, k, |a, b| self.s[(components[a], components[b])]);
        Innovation { r, s, t: self.t }.nis()
    }
}

pub fn kf_predict(belief: &GaussianBelief, model: &LinearSystemModel, u: &Vector) -> Result<GaussianBelief> {
    model.check_state(&belief.mean)?;
    model.check_input(u)?;
    if belief.cov.shape() != (model.state_dim(), model.state_dim()) {
        return Err(Error::Dimension {
            what: "belief covariance",
            expected: format!("{0}x{0}", model.state_dim()),
            got: format!("{}x{}", belief.cov.nrows(), belief.cov.ncols()),
        });
    }
    let a = model.a();
    let mut mean = a * &belief.mean + model.b() * u;
    model.wrap_state(&mut mean);
    let cov = symmetrize(&(a * &belief.cov * a.transpose() + model.process_covariance()));
    Ok(GaussianBelief {
        mean,
        cov,
        t: belief.t + model.dt(),
    })
}

pub fn kf_update(
    belief: &GaussianBelief,
    model: &LinearSystemModel,
    z: &Vector,
) -> Result<(GaussianBelief, Innovation)> {
    model.check_state(&belief.mean)?;
    if z.len() != model.measurement_dim() {
        return Err(Error::Dimension {
            what: "measurement",
            expected: model.measurement_dim().to_string(),
            got: z.len().to_string(),
        });
    }
    let h = model.h();
    let mut r = z - h * &belief.mean;
    model.wrap_measurement(&mut r);
    let s = symmetrize(&(h * &belief.cov * h.transpose() + model.r()));
    let chol = s.clone().cholesky().ok_or(Error::EstimatorDegenerate)?;
    // K = P Hᵀ S⁻¹, via S Kᵀ = H P
    let ph_t = &belief.cov * h.transpose();
    let k = chol.solve(&ph_t.transpose()).transpose();
    let mut mean = &belief.mean + &k * &r;
    model.wrap_state(&mut mean);
    let n = model.state_dim();
    let cov = (Mat::identity(n, n) - &k * h) * &belief.cov;
    let mut cov = symmetrize(&cov);
    if min_eigenvalue(&cov) < 0.0 {
        cov = clamp_psd(&cov);
    }
    Ok((
        GaussianBelief { mean, cov, t: belief.t },
        Innovation { r, s, t: belief.t },
    ))
}

/// Linearizes `f(x, u) -> x'` about `(x_eq, u_eq)` by central differences
/// (step 1e-5 per component). `G`, `Q`, `H`, `R` and `dt` come from `template`.
pub fn linearize<F>(f: F, x_eq: &Vector, u_eq: &Vector, template: &LinearSystemModel) -> Result<LinearSystemModel>
where
    F: Fn(&Vector, &Vector) -> Vector,
{
    const H: f64 = 1e-5;
    let n = x_eq.len();
    let p = u_eq.len();
    let jac = |perturb_state: bool, cols: usize| -> Result<Mat> {
        let mut m = Mat::zeros(n, cols);
        for j in 0..cols {
            let (mut xp, mut xm) = (x_eq.clone(), x_eq.clone());
            let (mut up, mut um) = (u_eq.clone(), u_eq.clone());
            if perturb_state {
                xp[j] += H;
                xm[j] -= H;
            } else {
                up[j] += H;
                um[j] -= H;
            }
            let fp = f(&xp, &up);
            let fm = f(&xm, &um);
            if fp.len() != n || fm.len() != n {
                return Err(Error::Dimension {
                    what: "linearized map output",
                    expected: n.to_string(),
                    got: fp.len().to_string(),
                });
            }
            for i in 0..n {
                let mut d = fp[i] - fm[i];
                if template.angle_states().contains(&i) {
                    d = wrap(d);
                }
                let v = d / (2.0 * H);
                if !v.is_finite() {
                    return Err(Error::LinearizationFailure { row: i, col: j });
                }
                m[(i, j)] = v;
            }
        }
        Ok(m)
    };
    let a = jac(true, n)?;
    let b = jac(false, p)?;
    Ok(LinearSystemModel::new(
        a,
        b,
        template.g().clone(),
        template.h().clone(),
        template.q().clone(),
        template.r().clone(),
        template.dt(),
    )?
    .with_angles(template.angle_states().to_vec(), template.angle_measurements().to_vec()))
}
