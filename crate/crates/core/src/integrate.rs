//! Fixed-step explicit integrators.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

impl Integrator {
    pub fn step<T: Real>(self, f: impl FnMut(T, &DVector<T>) -> DVector<T>, x: &DVector<T>, t: T, dt: T) -> DVector<T> {
        match self {
            Integrator::Euler => euler_step(f, x, t, dt),
            Integrator::Rk4 => rk4_step(f, x, t, dt),
        }
    }
}

pub fn euler_step<T: Real>(mut f: impl FnMut(T, &DVector<T>) -> DVector<T>, x: &DVector<T>, t: T, dt: T) -> DVector<T> {
    x + f(t, x) * dt
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<T: Real>(mut f: impl FnMut(T, &DVector<T>) -> DVector<T>, x: &DVector<T>, t: T, dt: T) -> DVector<T> {
    let half = dt * T::lit(0.5);
    let k1 = f(t, x);
    let k2 = f(t + half, &(x + &k1 * half));
    let k3 = f(t + half, &(x + &k2 * half));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + (k2 + k3) * T::lit(2.0) + k4) * (dt / T::lit(6.0))
}
