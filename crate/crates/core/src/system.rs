//! Autonomous ODE systems with an explicit fast/slow split of the state.
//!
//! A state vector is laid out as `[f_1 .. f_N, I_1 .. I_n]`: `N` fast degrees of
//! freedom followed by `n` slow loading variables.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type FieldFn = dyn Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync;
pub type JacobianFn = dyn Fn(&[f64], &mut DMatrix<f64>) -> Result<()> + Send + Sync;

/// An autonomous vector field together with its metadata.
///
/// Cloning is cheap: the field and Jacobian closures are shared.
#[derive(Clone)]
pub struct SystemSpec {
    pub name: String,
    pub dim_fast: usize,
    pub dim_slow: usize,
    pub params: BTreeMap<String, f64>,
    pub component_names: Vec<String>,
    field: Arc<FieldFn>,
    jacobian: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemSpec")
            .field("name", &self.name)
            .field("dim_fast", &self.dim_fast)
            .field("dim_slow", &self.dim_slow)
            .field("params", &self.params)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl SystemSpec {
    pub fn new<F>(name: impl Into<String>, dim_fast: usize, dim_slow: usize, field: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        let dim = dim_fast + dim_slow;
        Self {
            name: name.into(),
            dim_fast,
            dim_slow,
            params: BTreeMap::new(),
            component_names: (0..dim).map(|i| format!("u{i}")).collect(),
            field: Arc::new(field),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64], &mut DMatrix<f64>) -> Result<()> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_names<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        assert_eq!(names.len(), self.dim(), "one name per state component");
        self.component_names = names.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim_fast + self.dim_slow
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    pub(crate) fn field_fn(&self) -> Arc<FieldFn> {
        Arc::clone(&self.field)
    }

    pub(crate) fn jacobian_fn(&self) -> Option<Arc<JacobianFn>> {
        self.jacobian.clone()
    }

    /// Evaluate the vector field into `out` without allocating.
    #[inline]
    pub fn eval_into(&self, state: &[f64], out: &mut [f64]) -> Result<()> {
        (self.field)(state, out)
    }

    pub fn eval_field(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(state)?;
        let mut out = vec![0.0; self.dim()];
        (self.field)(state, &mut out)?;
        Ok(out)
    }

    /// Full `dim × dim` Jacobian: analytic when available, central differences otherwise.
    pub fn jacobian(&self, state: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(state)?;
        match &self.jacobian {
            Some(jac) => {
                let mut m = DMatrix::zeros(self.dim(), self.dim());
                jac(state, &mut m)?;
                Ok(m)
            }
            None => self.fd_jacobian(state),
        }
    }

    /// Central-difference Jacobian with step `1e-6·(1 + |u_j|)`.
    pub fn fd_jacobian(&self, state: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(state)?;
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        let mut u = state.to_vec();
        let mut fp = vec![0.0; d];
        let mut fm = vec![0.0; d];
        for j in 0..d {
            let h = 1e-6 * (1.0 + state[j].abs());
            u[j] = state[j] + h;
            (self.field)(&u, &mut fp)?;
            u[j] = state[j] - h;
            (self.field)(&u, &mut fm)?;
            u[j] = state[j];
            for i in 0..d {
                m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        Ok(m)
    }

    pub fn check_dim(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: state.len() });
        }
        Ok(())
    }

    /// The fast flow with the slow variables frozen (their derivatives zeroed).
    pub fn frozen(&self) -> SystemSpec {
        let field = self.field_fn();
        let n_fast = self.dim_fast;
        let mut sys = SystemSpec::new(format!("{}-frozen", self.name), self.dim_fast, self.dim_slow, move |u, out| {
            field(u, out)?;
            out[n_fast..].iter_mut().for_each(|v| *v = 0.0);
            Ok(())
        });
        if let Some(jac) = self.jacobian_fn() {
            sys = sys.with_jacobian(move |u, m| {
                jac(u, m)?;
                for i in n_fast..m.nrows() {
                    m.row_mut(i).fill(0.0);
                }
                Ok(())
            });
        }
        sys.params = self.params.clone();
        sys.component_names = self.component_names.clone();
        sys
    }
}

/// Maximum elementwise relative error between the analytic Jacobian and central
/// differences with step `1e-6·(1 + |u_j|)`.
///
/// Relative error is measured against `max(1, |J_ij|)` so entries that vanish
/// analytically are compared absolutely.
pub fn jacobian_check(system: &SystemSpec, state: &[f64]) -> Result<f64> {
    if !system.has_jacobian() {
        return Err(Error::InvalidArgument(format!("system {} has no analytic jacobian", system.name)));
    }
    let analytic = system.jacobian(state)?;
    let numeric = system.fd_jacobian(state)?;
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        worst = worst.max((a - n).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(a: [[f64; 2]; 2]) -> SystemSpec {
        SystemSpec::new("linear", 2, 0, move |u, out| {
            out[0] = a[0][0] * u[0] + a[0][1] * u[1];
            out[1] = a[1][0] * u[0] + a[1][1] * u[1];
            Ok(())
        })
        .with_jacobian(move |_, m| {
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] = a[i][j];
                }
            }
            Ok(())
        })
    }

    #[test]
    fn linear_jacobian_is_exact() {
        let sys = linear([[-1.0, 3.5], [0.25, -7.0]]);
        // Truncation error vanishes for a linear field; what remains is roundoff,
        // about 1e-16·|f| / h, which stays below 1e-10 for states near the origin.
        for s in [[0.0, 0.0], [1e-3, -2e-3], [-5e-4, 1e-4]] {
            let err = jacobian_check(&sys, &s).unwrap();
            assert!(err < 1e-10, "{s:?}: {err}");
        }
        assert!(jacobian_check(&sys, &[1.0, -2.0]).unwrap() < 1e-8);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let sys = linear([[0.0, 1.0], [-1.0, 0.0]]);
        assert!(matches!(sys.eval_field(&[1.0]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn frozen_zeroes_slow_block() {
        let sys = SystemSpec::new("s", 1, 1, |u, out| {
            out[0] = u[1];
            out[1] = 1.0;
            Ok(())
        });
        let d = sys.frozen().eval_field(&[0.0, 2.0]).unwrap();
        assert_eq!(d, vec![2.0, 0.0]);
    }
}
