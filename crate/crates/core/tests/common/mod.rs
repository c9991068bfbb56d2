#![allow(dead_code)]

//! Independent reference for spatially constant data: the four reaction
//! equations integrated with classical RK4.

#[derive(Debug, Clone, Copy)]
pub struct OdeParams {
    pub mu_d: f64,
    pub mu_s: f64,
    pub mu_v: f64,
    pub mu_max: f64,
    /// `None` for a constant rate `mu_max`, `Some(k)` for `mu_max c/(k + c)`.
    pub saturation: Option<f64>,
}

fn emt(p: &OdeParams, cd: f64) -> f64 {
    match p.saturation {
        None => p.mu_max,
        Some(k) => p.mu_max * cd / (k + cd),
    }
}

pub fn rhs(p: &OdeParams, y: [f64; 4]) -> [f64; 4] {
    let [cd, cs, v, m] = y;
    let free = 1.0 - cd - cs - v;
    let x = emt(p, cd) * cd;
    [
        p.mu_d * cd * free - x,
        p.mu_s * cs * free + x,
        p.mu_v * v * free - m * v,
        cd + cs - m,
    ]
}

pub fn rk4(p: &OdeParams, y0: [f64; 4], t_end: f64, steps: usize) -> [f64; 4] {
    let h = t_end / steps as f64;
    let add = |y: [f64; 4], k: [f64; 4], s: f64| -> [f64; 4] {
        [
            y[0] + s * k[0],
            y[1] + s * k[1],
            y[2] + s * k[2],
            y[3] + s * k[3],
        ]
    };
    let mut y = y0;
    for _ in 0..steps {
        let k1 = rhs(p, y);
        let k2 = rhs(p, add(y, k1, 0.5 * h));
        let k3 = rhs(p, add(y, k2, 0.5 * h));
        let k4 = rhs(p, add(y, k3, h));
        for i in 0..4 {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

/// RK4 with step `t_end/steps` and with twice as many steps, plus the
/// difference between the two as an error estimate.
pub fn reference(p: &OdeParams, y0: [f64; 4], t_end: f64, steps: usize) -> ([f64; 4], f64) {
    let a = rk4(p, y0, t_end, steps);
    let b = rk4(p, y0, t_end, 2 * steps);
    let err = (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    (b, err)
}
