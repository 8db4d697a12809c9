//! Default hyperparameter grid.

pub const LAMBDAS: [f64; 3] = [1.0, 0.1, 0.01];
pub const ALPHA_US: [f64; 3] = [1.0, 0.1, 0.01];
pub const LR_HS: [f64; 3] = [0.1, 0.01, 0.001];
pub const LR_THETAS: [f64; 3] = [0.1, 0.01, 0.001];
pub const THETA_STEPS: [usize; 1] = [1];
pub const H_STEPS: [usize; 3] = [1, 2, 5];

/// One point of the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub alpha_u: f64,
    pub lr_h: f64,
    pub lr_theta: f64,
    pub theta_steps: usize,
    pub h_steps: usize,
}

/// Full cross product, λ varying slowest and H-steps fastest.
pub fn grid_points() -> Vec<GridPoint> {
    let mut out = Vec::new();
    for lambda in LAMBDAS {
        for alpha_u in ALPHA_US {
            for lr_h in LR_HS {
                for lr_theta in LR_THETAS {
                    for theta_steps in THETA_STEPS {
                        for h_steps in H_STEPS {
                            out.push(GridPoint {
                                lambda,
                                alpha_u,
                                lr_h,
                                lr_theta,
                                theta_steps,
                                h_steps,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}
