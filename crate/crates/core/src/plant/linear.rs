use rand::Rng;
use rand_distr::StandardNormal;

use crate::angle::wrap;
use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, min_eigenvalue, psd_sqrt, Mat, Vector};

/// Time-invariant linear plant
///
/// ```text
/// x' = A x + B u + G w,   w ~ N(0, Q)
/// z  = H x + v,           v ~ N(0, R)
/// ```
#[derive(Debug, Clone)]
pub struct LinearSystemModel {
    a: Mat,
    b: Mat,
    g: Mat,
    h: Mat,
    q: Mat,
    r: Mat,
    dt: f64,
    angle_states: Vec<usize>,
    angle_measurements: Vec<usize>,
    q_sqrt: Mat,
    r_sqrt: Mat,
}

fn dim_err(what: &'static str, expected: (usize, usize), got: &Mat) -> Error {
    Error::Dimension {
        what,
        expected: format!("{}x{}", expected.0, expected.1),
        got: format!("{}x{}", got.nrows(), got.ncols()),
    }
}

impl LinearSystemModel {
    pub fn new(a: Mat, b: Mat, g: Mat, h: Mat, q: Mat, r: Mat, dt: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(dim_err("A", (n, n), &a));
        }
        if b.nrows() != n {
            return Err(dim_err("B", (n, b.ncols()), &b));
        }
        if g.nrows() != n {
            return Err(dim_err("G", (n, g.ncols()), &g));
        }
        let rd = g.ncols();
        if q.shape() != (rd, rd) {
            return Err(dim_err("Q", (rd, rd), &q));
        }
        if h.ncols() != n {
            return Err(dim_err("H", (h.nrows(), n), &h));
        }
        let qd = h.nrows();
        if r.shape() != (qd, qd) {
            return Err(dim_err("R", (qd, qd), &r));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config("dt", "must be positive and finite"));
        }
        if !is_symmetric(&q, 1e-12) || min_eigenvalue(&q) < -1e-12 {
            return Err(Error::config("Q", "must be symmetric positive semi-definite"));
        }
        if !is_symmetric(&r, 1e-12) || (qd > 0 && min_eigenvalue(&r) <= 0.0) {
            return Err(Error::config("R", "must be symmetric positive definite"));
        }
        let q_sqrt = psd_sqrt(&q).ok_or_else(|| Error::config("Q", "not factorizable"))?;
        let r_sqrt = psd_sqrt(&r).ok_or_else(|| Error::config("R", "not factorizable"))?;
        Ok(Self {
            a,
            b,
            g,
            h,
            q,
            r,
            dt,
            angle_states: Vec::new(),
            angle_measurements: Vec::new(),
            q_sqrt,
            r_sqrt,
        })
    }

    /// Marks state and measurement components that are angles; they are
    /// wrapped to (-pi, pi] after every step.
    pub fn with_angles(mut self, states: Vec<usize>, measurements: Vec<usize>) -> Self {
        self.angle_states = states;
        self.angle_measurements = measurements;
        self
    }

    /// Same structure with different noise covariances.
    pub fn with_noise(&self, q: Mat, r: Mat) -> Result<Self> {
        Ok(Self::new(
            self.a.clone(),
            self.b.clone(),
            self.g.clone(),
            self.h.clone(),
            q,
            r,
            self.dt,
        )?
        .with_angles(self.angle_states.clone(), self.angle_measurements.clone()))
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    pub fn g(&self) -> &Mat {
        &self.g
    }
    pub fn h(&self) -> &Mat {
        &self.h
    }
    pub fn q(&self) -> &Mat {
        &self.q
    }
    pub fn r(&self) -> &Mat {
        &self.r
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn angle_states(&self) -> &[usize] {
        &self.angle_states
    }
    pub fn angle_measurements(&self) -> &[usize] {
        &self.angle_measurements
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn noise_dim(&self) -> usize {
        self.g.ncols()
    }
    pub fn measurement_dim(&self) -> usize {
        self.h.nrows()
    }

    /// `G Q Gᵀ`, the process-noise covariance in state space.
    pub fn process_covariance(&self) -> Mat {
        &self.g * &self.q * self.g.transpose()
    }

    pub(crate) fn wrap_state(&self, x: &mut Vector) {
        for &i in &self.angle_states {
            x[i] = wrap(x[i]);
        }
    }

    pub(crate) fn wrap_measurement(&self, z: &mut Vector) {
        for &i in &self.angle_measurements {
            z[i] = wrap(z[i]);
        }
    }

    pub(crate) fn check_state(&self, x: &Vector) -> Result<()> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension {
                what: "state",
                expected: self.state_dim().to_string(),
                got: x.len().to_string(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_input(&self, u: &Vector) -> Result<()> {
        if u.len() != self.input_dim() {
            return Err(Error::Dimension {
                what: "control input",
                expected: self.input_dim().to_string(),
                got: u.len().to_string(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x: Vector,
    pub t: f64,
}

impl PlantState {
    pub fn new(x: Vector, t: f64) -> Self {
        Self { x, t }
    }
}

fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn finite_or_diverged(x: &Vector) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NumericalDivergence {
            component: i,
            value: x[i],
        }),
        None => Ok(()),
    }
}

/// One step of `x' = A x + B u + G w`. A full noise vector is drawn on every
/// call even when `Q` is zero, so the stream position never depends on the
/// noise magnitude.
pub fn step_linear<R: Rng + ?Sized>(
    model: &LinearSystemModel,
    state: &PlantState,
    u: &Vector,
    rng: &mut R,
) -> Result<PlantState> {
    model.check_state(&state.x)?;
    model.check_input(u)?;
    let e = standard_normals(model.noise_dim(), rng);
    let w = &model.q_sqrt * e;
    let mut x = &model.a * &state.x + &model.b * u + &model.g * w;
    model.wrap_state(&mut x);
    finite_or_diverged(&x)?;
    Ok(PlantState {
        x,
        t: state.t + model.dt,
    })
}

/// Sensor reading `z = H x + v`.
pub fn measure<R: Rng + ?Sized>(model: &LinearSystemModel, state: &PlantState, rng: &mut R) -> Result<Vector> {
    model.check_state(&state.x)?;
    let e = standard_normals(model.measurement_dim(), rng);
    let mut z = &model.h * &state.x + &model.r_sqrt * e;
    model.wrap_measurement(&mut z);
    finite_or_diverged(&z)?;
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn eye(n: usize) -> Mat {
        Mat::identity(n, n)
    }

    fn double_integrator(dt: f64, qv: f64) -> LinearSystemModel {
        LinearSystemModel::new(
            Mat::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]),
            Mat::from_row_slice(2, 1, &[0.0, dt]),
            eye(2),
            eye(2),
            eye(2) * qv,
            eye(2) * 1e-6,
            dt,
        )
        .unwrap()
    }

    #[test]
    fn identity_dynamics_zero_noise() {
        let m =
            LinearSystemModel::new(eye(2), Mat::zeros(2, 1), eye(2), eye(2), Mat::zeros(2, 2), eye(2), 0.02).unwrap();
        let mut rng = seeded(1);
        let s = PlantState::new(Vector::from_vec(vec![1.0, 2.0]), 0.0);
        let mut cur = s.clone();
        for _ in 0..50 {
            cur = step_linear(&m, &cur, &Vector::zeros(1), &mut rng).unwrap();
        }
        // bit-identical fixed point
        assert_eq!(cur.x, s.x);
        assert!((cur.t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_integrator_euler_step() {
        let m = double_integrator(0.02, 0.0);
        let s = PlantState::new(Vector::zeros(2), 0.0);
        let n = step_linear(&m, &s, &Vector::from_vec(vec![1.0]), &mut seeded(3)).unwrap();
        assert_eq!(n.x.as_slice(), &[0.0, 0.02]);
        assert_eq!(n.t, 0.02);
    }

    #[test]
    fn process_noise_covariance_matches_gqgt() {
        // Monte Carlo oracle: empirical covariance of x' against G Q Gᵀ.
        let g = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        let m = LinearSystemModel::new(eye(2), Mat::zeros(2, 1), g, eye(2), eye(2) * 0.01, eye(2), 0.02).unwrap();
        let expected = m.process_covariance();
        let s = PlantState::new(Vector::zeros(2), 0.0);
        let mut rng = seeded(11);
        let n = 100_000;
        let mut acc = Mat::zeros(2, 2);
        let u = Vector::zeros(1);
        for _ in 0..n {
            let x = step_linear(&m, &s, &u, &mut rng).unwrap().x;
            acc += &x * x.transpose();
        }
        acc /= n as f64;
        for i in 0..2 {
            for j in 0..2 {
                let e = expected[(i, j)];
                if e.abs() > 0.0 {
                    assert!(((acc[(i, j)] - e) / e).abs() < 0.05, "({i},{j}) {} vs {e}", acc[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn measurement_identity_and_noise() {
        let m = LinearSystemModel::new(
            eye(2),
            Mat::zeros(2, 1),
            eye(2),
            eye(2),
            Mat::zeros(2, 2),
            eye(2) * 1e-300,
            0.02,
        )
        .unwrap();
        let s = PlantState::new(Vector::from_vec(vec![0.3, -0.7]), 0.0);
        let z = measure(&m, &s, &mut seeded(5)).unwrap();
        assert!((z - &s.x).amax() < 1e-140);

        let sigma2 = 0.04;
        let m = m.with_noise(Mat::zeros(2, 2), eye(2) * sigma2).unwrap();
        let mut rng = seeded(9);
        let n = 100_000;
        let mut ss = 0.0;
        for _ in 0..n {
            let z = measure(&m, &s, &mut rng).unwrap();
            ss += (z[0] - s.x[0]).powi(2);
        }
        let var = ss / n as f64;
        assert!(((var - sigma2) / sigma2).abs() < 0.05, "{var}");
    }

    #[test]
    fn yaw_row_projection() {
        let mut h = Mat::zeros(1, 3);
        h[(0, 2)] = 1.0;
        let m = LinearSystemModel::new(
            eye(3),
            Mat::zeros(3, 1),
            eye(3),
            h,
            Mat::zeros(3, 3),
            Mat::from_element(1, 1, 1e-300),
            0.02,
        )
        .unwrap();
        let s = PlantState::new(Vector::from_vec(vec![1.0, 2.0, 0.25]), 0.0);
        let z = measure(&m, &s, &mut seeded(1)).unwrap();
        assert_eq!(z.len(), 1);
        assert!((z[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn dimension_and_config_errors() {
        assert!(matches!(
            LinearSystemModel::new(eye(2), Mat::zeros(3, 1), eye(2), eye(2), eye(2), eye(2), 0.1),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            LinearSystemModel::new(eye(2), Mat::zeros(2, 1), eye(2), eye(2), eye(2), eye(2), 0.0),
            Err(Error::Config { .. })
        ));
        assert!(
            LinearSystemModel::new(eye(2), Mat::zeros(2, 1), eye(2), eye(2), eye(2), Mat::zeros(2, 2), 0.1).is_err()
        );
        let m = double_integrator(0.02, 0.0);
        let s = PlantState::new(Vector::zeros(3), 0.0);
        assert!(step_linear(&m, &s, &Vector::zeros(1), &mut seeded(1)).is_err());
    }

    #[test]
    fn divergence_names_component() {
        let m = LinearSystemModel::new(
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e300]),
            Mat::zeros(2, 1),
            eye(2),
            eye(2),
            Mat::zeros(2, 2),
            eye(2),
            0.02,
        )
        .unwrap();
        let s = PlantState::new(Vector::from_vec(vec![1.0, 1e300]), 0.0);
        match step_linear(&m, &s, &Vector::zeros(1), &mut seeded(1)) {
            Err(Error::NumericalDivergence { component, .. }) => assert_eq!(component, 1),
            other => panic!("{other:?}"),
        }
    }
}
