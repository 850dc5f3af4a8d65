//! The benchmark systems.
//!
//! Systems that carry a slow load come in two forms. The *split* form returns
//! `(H(f, I), L(f, I))` and is what [`crate::tikhonov::SlowFastSpec`] wraps; the
//! fast-time form (`dI/dt = ε L`) is what fine simulations integrate.

use crate::error::{Error, Result};
use crate::system::SystemSpec;
use crate::tikhonov::{Epsilon, SlowFastSpec};

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;
pub const LORENZ_GAMMA: f64 = 25.0;

/// `x* = 2·3^{-3/2}`: the critical value of `y − y³`, where the branches fold.
pub fn fold_x() -> f64 {
    2.0 * 3f64.powf(-1.5)
}

/// `y* = 3^{-1/2}`: the branch value at the fold.
pub fn fold_y() -> f64 {
    3f64.powf(-0.5)
}

/// The classic Lorenz system.
pub fn lorenz(sigma: f64, beta: f64, gamma: f64) -> SystemSpec {
    SystemSpec::new("lorenz", 3, 0, move |u, d| {
        d[0] = sigma * (u[1] - u[0]);
        d[1] = gamma * u[0] - u[1] - u[0] * u[2];
        d[2] = u[0] * u[1] - beta * u[2];
        Ok(())
    })
    .with_jacobian(move |u, m| {
        m[(0, 0)] = -sigma;
        m[(0, 1)] = sigma;
        m[(0, 2)] = 0.0;
        m[(1, 0)] = gamma - u[2];
        m[(1, 1)] = -1.0;
        m[(1, 2)] = -u[0];
        m[(2, 0)] = u[1];
        m[(2, 1)] = u[0];
        m[(2, 2)] = -beta;
        Ok(())
    })
    .with_names(&["x", "y", "z"])
    .with_param("sigma", sigma)
    .with_param("beta", beta)
    .with_param("gamma", gamma)
}

pub fn lorenz_default() -> SystemSpec {
    lorenz(LORENZ_SIGMA, LORENZ_BETA, LORENZ_GAMMA)
}

/// Lorenz with `x̃ = x + L` riding on the monotone load `dL/dt = 1/(1+L)`.
pub fn forced_monotone_lorenz(sigma: f64, beta: f64, gamma: f64) -> SystemSpec {
    SystemSpec::new("forced-monotone-lorenz", 3, 1, move |u, d| {
        let (x, y, z, l) = (u[0], u[1], u[2], u[3]);
        let rate = 1.0 / (1.0 + l);
        d[0] = sigma * (y - x) + sigma * l + rate;
        d[1] = gamma * x - y - x * z - gamma * l + l * z;
        d[2] = x * y - beta * z - l * y;
        d[3] = rate;
        Ok(())
    })
    .with_jacobian(move |u, m| {
        let (x, y, z, l) = (u[0], u[1], u[2], u[3]);
        let dr = -1.0 / ((1.0 + l) * (1.0 + l));
        m.fill(0.0);
        m[(0, 0)] = -sigma;
        m[(0, 1)] = sigma;
        m[(0, 3)] = sigma + dr;
        m[(1, 0)] = gamma - z;
        m[(1, 1)] = -1.0;
        m[(1, 2)] = l - x;
        m[(1, 3)] = z - gamma;
        m[(2, 0)] = y;
        m[(2, 1)] = x - l;
        m[(2, 2)] = -beta;
        m[(2, 3)] = -y;
        m[(3, 3)] = dr;
        Ok(())
    })
    .with_names(&["x", "y", "z", "L"])
    .with_param("sigma", sigma)
    .with_param("beta", beta)
    .with_param("gamma", gamma)
}

/// Split form of the Lorenz system on a sinusoidal load `(L, g)`.
///
/// `load_coupling` multiplies the `g` term in the `x` equation; it equals ω for the
/// physical system and 0 for the ω → 0 limit.
fn oscillatory_lorenz_split(sigma: f64, beta: f64, gamma: f64, load_coupling: f64) -> SystemSpec {
    SystemSpec::new("oscillatory-forced-lorenz", 3, 2, move |u, d| {
        let (x, y, z, l, g) = (u[0], u[1], u[2], u[3], u[4]);
        d[0] = sigma * (y - x) + sigma * l + load_coupling * g;
        d[1] = gamma * x - y - x * z - gamma * l + l * z;
        d[2] = x * y - beta * z - l * y;
        d[3] = g;
        d[4] = -l;
        Ok(())
    })
    .with_jacobian(move |u, m| {
        let (x, y, z, l) = (u[0], u[1], u[2], u[3]);
        m.fill(0.0);
        m[(0, 0)] = -sigma;
        m[(0, 1)] = sigma;
        m[(0, 3)] = sigma;
        m[(0, 4)] = load_coupling;
        m[(1, 0)] = gamma - z;
        m[(1, 1)] = -1.0;
        m[(1, 2)] = l - x;
        m[(1, 3)] = z - gamma;
        m[(2, 0)] = y;
        m[(2, 1)] = x - l;
        m[(2, 2)] = -beta;
        m[(2, 3)] = -y;
        m[(3, 4)] = 1.0;
        m[(4, 3)] = -1.0;
        Ok(())
    })
    .with_names(&["x", "y", "z", "L", "g"])
    .with_param("sigma", sigma)
    .with_param("beta", beta)
    .with_param("gamma", gamma)
}

/// Oscillatory forced Lorenz as a slow-fast system with ε = ω.
pub fn oscillatory_forced_lorenz_slow_fast(omega: Epsilon) -> SlowFastSpec {
    let coupling = match omega {
        Epsilon::Value(w) => w,
        Epsilon::Limit => 0.0,
    };
    let base = oscillatory_lorenz_split(LORENZ_SIGMA, LORENZ_BETA, LORENZ_GAMMA, coupling);
    SlowFastSpec::new(base, omega)
}

/// Oscillatory forced Lorenz on the fast time scale, `dL/dt = ωg, dg/dt = −ωL`.
pub fn oscillatory_forced_lorenz(omega: f64) -> SystemSpec {
    let mut sys = oscillatory_forced_lorenz_slow_fast(Epsilon::Value(omega))
        .fast_time_system()
        .expect("finite omega");
    sys.params.insert("omega".into(), omega);
    sys
}

/// Two nonlinearly coupled oscillators (a 4D Hamiltonian system).
pub fn hald() -> SystemSpec {
    SystemSpec::new("hald", 4, 0, |u, d| {
        d[0] = u[1];
        d[1] = -u[0] * (1.0 + u[2] * u[2]);
        d[2] = u[3];
        d[3] = -u[2] * (1.0 + u[0] * u[0]);
        Ok(())
    })
    .with_jacobian(|u, m| {
        m.fill(0.0);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = -(1.0 + u[2] * u[2]);
        m[(1, 2)] = -2.0 * u[0] * u[2];
        m[(2, 3)] = 1.0;
        m[(3, 0)] = -2.0 * u[0] * u[2];
        m[(3, 2)] = -(1.0 + u[0] * u[0]);
        Ok(())
    })
    .with_names(&["x1", "x2", "x3", "x4"])
}

/// `E = ½(x2² + x4²) + ½(x1² + x3²) + ½ x1² x3²`, conserved by [`hald`].
pub fn hald_energy(u: &[f64]) -> f64 {
    0.5 * (u[1] * u[1] + u[3] * u[3]) + 0.5 * (u[0] * u[0] + u[2] * u[2]) + 0.5 * u[0] * u[0] * u[2] * u[2]
}

/// Which root of `−x + y − y³ = 0` a branch tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Upper,
    Lower,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::Upper => "upper",
            Branch::Lower => "lower",
        }
    }

    fn sign(self) -> f64 {
        match self {
            Branch::Upper => 1.0,
            Branch::Lower => -1.0,
        }
    }

    /// Signed distance to this branch's fold; positive inside the domain of validity.
    pub fn fold_distance(self, x: f64) -> f64 {
        match self {
            Branch::Upper => fold_x() - x,
            Branch::Lower => x + fold_x(),
        }
    }

    pub fn is_valid(self, x: f64) -> bool {
        self.fold_distance(x) > 0.0
    }

    /// The branch root `z(x)` with `−x + z − z³ = 0`, `|z| > 3^{-1/2}`.
    ///
    /// Safeguarded Newton inside a bracket that always contains the root; the
    /// upper branch is solved directly and the lower one through `z_lo(x) = −z_up(−x)`.
    pub fn root(self, x: f64) -> Result<f64> {
        if !self.is_valid(x) {
            return Err(Error::BranchInvalid { branch: self.label(), x, fold: self.sign() * fold_x() });
        }
        let s = self.sign();
        Ok(s * upper_root(s * x))
    }

    /// `dz/dx = 1 / (1 − 3z²)`.
    pub fn slope(self, x: f64) -> Result<f64> {
        let z = self.root(x)?;
        Ok(1.0 / (1.0 - 3.0 * z * z))
    }
}

fn upper_root(x: f64) -> f64 {
    // p(y) = y − y³ − x is positive at the fold and negative at `hi`.
    let mut lo = fold_y();
    let mut hi = 1.2f64.max(1.0 + 1.5 * x.abs().cbrt());
    let p = |y: f64| y - y * y * y - x;
    let mut y = 1.2f64.clamp(lo, hi);
    for _ in 0..200 {
        let py = p(y);
        if py > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        let dp = 1.0 - 3.0 * y * y;
        let mut next = y - py / dp;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 {
            return next;
        }
        y = next;
    }
    y
}

/// Example 5.1-type slow-fast system in split form: fast `(y1, y2)`, slow `x`.
///
/// `g = α(x)(1 − A(x)(y1 − z)²) y2 − (y1 − z)` with `α = d²` and `A = 1/d`, where
/// `d > 0` is the distance to the branch fold. The fast flow is a van der Pol
/// oscillator centred on `z(x)` whose limit cycle shrinks to zero at the fold.
pub fn artstein_split(branch: Branch) -> SystemSpec {
    let field_branch = branch;
    SystemSpec::new(format!("artstein-{}", branch.label()), 2, 1, move |u, d| {
        let (y1, y2, x) = (u[0], u[1], u[2]);
        let dist = field_branch.fold_distance(x);
        let z = field_branch.root(x)?;
        let w = y1 - z;
        d[0] = y2;
        d[1] = dist * dist * y2 - dist * w * w * y2 - w;
        d[2] = y1;
        Ok(())
    })
    .with_jacobian(move |u, m| {
        let (y1, y2, x) = (u[0], u[1], u[2]);
        let dist = branch.fold_distance(x);
        let ddist = -branch.sign();
        let z = branch.root(x)?;
        let dz = 1.0 / (1.0 - 3.0 * z * z);
        let w = y1 - z;
        m.fill(0.0);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = -2.0 * dist * w * y2 - 1.0;
        m[(1, 1)] = dist * dist - dist * w * w;
        m[(1, 2)] = 2.0 * dist * ddist * y2 - ddist * w * w * y2 + 2.0 * dist * w * dz * y2 + dz;
        m[(2, 0)] = 1.0;
        Ok(())
    })
    .with_names(&["y1", "y2", "x"])
}

pub fn artstein_slow_fast(branch: Branch, epsilon: f64) -> SlowFastSpec {
    SlowFastSpec::new(artstein_split(branch), Epsilon::Value(epsilon))
}

/// The algebraic constraint of the Artstein example, `0 = ŷ2`, `0 = −x + ŷ1 − ŷ1³`,
/// with `dx/ds = ŷ1`. Its Jacobian in `ŷ` is singular exactly at the folds.
pub fn artstein_dae() -> SlowFastSpec {
    let base = SystemSpec::new("artstein-dae", 2, 1, |u, d| {
        let (y1, y2, x) = (u[0], u[1], u[2]);
        d[0] = y2;
        d[1] = -x + y1 - y1 * y1 * y1;
        d[2] = y1;
        Ok(())
    })
    .with_jacobian(|u, m| {
        m.fill(0.0);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0 - 3.0 * u[0] * u[0];
        m[(1, 2)] = -1.0;
        m[(2, 0)] = 1.0;
        Ok(())
    })
    .with_names(&["y1", "y2", "x"]);
    SlowFastSpec::new(base, Epsilon::Limit)
}

/// `ε dy/ds = −(y − L)`, `dL/ds = 1`: the slow manifold is `y = L − ε` exactly.
pub fn linear_relaxation(epsilon: f64) -> SlowFastSpec {
    let base = SystemSpec::new("linear-relaxation", 1, 1, |u, d| {
        d[0] = -(u[0] - u[1]);
        d[1] = 1.0;
        Ok(())
    })
    .with_jacobian(|_, m| {
        m.fill(0.0);
        m[(0, 0)] = -1.0;
        m[(0, 1)] = 1.0;
        Ok(())
    })
    .with_names(&["y", "L"]);
    SlowFastSpec::new(base, Epsilon::Value(epsilon))
}

/// Harmonic oscillator `ÿ = −y`; every orbit is a circle.
pub fn harmonic() -> SystemSpec {
    SystemSpec::new("harmonic", 2, 0, |u, d| {
        d[0] = u[1];
        d[1] = -u[0];
        Ok(())
    })
    .with_jacobian(|_, m| {
        m.fill(0.0);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = -1.0;
        Ok(())
    })
    .with_names(&["y1", "y2"])
}

/// Names accepted by [`by_name`].
pub const SYSTEM_NAMES: &[&str] = &[
    "lorenz",
    "forced-monotone-lorenz",
    "oscillatory-forced-lorenz",
    "hald",
    "artstein-upper",
    "artstein-lower",
    "linear-relaxation",
    "harmonic",
];

/// Fast-time system by name. `omega` / `epsilon` feed the loaded systems.
pub fn by_name(name: &str, epsilon: f64) -> Result<SystemSpec> {
    Ok(match name {
        "lorenz" => lorenz_default(),
        "forced-monotone-lorenz" => forced_monotone_lorenz(LORENZ_SIGMA, LORENZ_BETA, LORENZ_GAMMA),
        "oscillatory-forced-lorenz" => oscillatory_forced_lorenz(epsilon),
        "hald" => hald(),
        "artstein-upper" => artstein_slow_fast(Branch::Upper, epsilon).fast_time_system()?,
        "artstein-lower" => artstein_slow_fast(Branch::Lower, epsilon).fast_time_system()?,
        "linear-relaxation" => linear_relaxation(epsilon).fast_time_system()?,
        "harmonic" => harmonic(),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown system `{other}` (expected one of {})",
                SYSTEM_NAMES.join(", ")
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::jacobian_check;

    #[test]
    fn lorenz_equilibria_are_stationary() {
        let sys = lorenz_default();
        assert_eq!(sys.eval_field(&[8.0, 8.0, 24.0]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(sys.eval_field(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn hald_direct_substitution() {
        assert_eq!(hald().eval_field(&[1.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn lorenz_jacobian_at_origin_is_linear_part() {
        let j = lorenz_default().jacobian(&[0.0, 0.0, 0.0]).unwrap();
        let expect = [[-10.0, 10.0, 0.0], [25.0, -1.0, 0.0], [0.0, 0.0, -8.0 / 3.0]];
        for i in 0..3 {
            for k in 0..3 {
                assert_eq!(j[(i, k)], expect[i][k]);
            }
        }
        assert!(jacobian_check(&lorenz_default(), &[0.0, 0.0, 0.0]).unwrap() < 1e-6);
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let cases: Vec<(SystemSpec, Vec<f64>)> = vec![
            (hald(), vec![1.0, 0.0, 1.0, 0.0]),
            (hald(), vec![0.3, -1.2, 0.7, 2.0]),
            (lorenz_default(), vec![-3.0, 4.0, 17.0]),
            (forced_monotone_lorenz(10.0, 8.0 / 3.0, 25.0), vec![3.0, -2.0, 30.0, 1.7]),
            (oscillatory_forced_lorenz(0.01), vec![3.0, -2.0, 30.0, 1.7, -0.4]),
            (artstein_split(Branch::Upper), vec![1.1, 0.4, -1.2]),
            (artstein_split(Branch::Lower), vec![-0.2, -0.9, 0.8]),
            (artstein_dae().base, vec![1.5, 0.0, -1.875]),
        ];
        for (sys, state) in cases {
            let err = jacobian_check(&sys, &state).unwrap();
            assert!(err < 1e-6, "{}: {err}", sys.name);
        }
    }

    #[test]
    fn cubic_branch_roots() {
        assert!((Branch::Upper.root(0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((Branch::Lower.root(0.0).unwrap() + 1.0).abs() < 1e-14);
        let z = Branch::Upper.root(-1.875).unwrap();
        assert!((z - 1.5).abs() < 1e-13, "{z}");
        assert!((Branch::Lower.root(1.875).unwrap() + 1.5).abs() < 1e-13);
    }

    #[test]
    fn cubic_branch_matches_bisection_oracle() {
        // Independent oracle: plain bisection on y³ − y − (−x) over the upper bracket.
        let bisect = |x: f64| {
            let (mut lo, mut hi) = (fold_y(), 10.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid - mid * mid * mid - x > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        for x in [-1.875, -1.0, -0.3, 0.1, 0.3, 0.38] {
            assert!((Branch::Upper.root(x).unwrap() - bisect(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn branch_outside_validity_is_an_error() {
        assert!(matches!(Branch::Upper.root(0.4), Err(Error::BranchInvalid { .. })));
        assert!(matches!(Branch::Lower.root(-0.4), Err(Error::BranchInvalid { .. })));
        assert!(artstein_split(Branch::Upper).eval_field(&[0.5, 0.0, 1.0]).is_err());
    }

    #[test]
    fn unknown_system_name() {
        assert!(by_name("duffing", 0.1).is_err());
        for n in SYSTEM_NAMES {
            by_name(n, 0.01).unwrap();
        }
    }
}
