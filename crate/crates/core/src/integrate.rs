//! Classic fixed-step fourth-order Runge–Kutta.

use nalgebra::DVector;

/// One RK4 step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(f: F, t: f64, x: &DVector<f64>, dt: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &(x + &k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(x + &k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_on_exponential() {
        let f = |_t: f64, x: &DVector<f64>| -x;
        let err = |dt: f64| {
            let mut x = DVector::from_element(1, 1.0);
            let steps = (1.0 / dt).round() as usize;
            for k in 0..steps {
                x = rk4_step(f, k as f64 * dt, &x, dt);
            }
            (x[0] - (-1.0f64).exp()).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!(order > 3.8, "observed order {order}");
    }
}
