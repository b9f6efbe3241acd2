//! Adam: per-parameter adaptive moment estimates with bias correction.

/// Optimizer state for a flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize) -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    /// One update: theta -= lr * m_hat / (sqrt(v_hat) + eps). Elementwise,
    /// so the parallel split cannot change results.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        use rayon::prelude::*;
        assert_eq!(theta.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, eps) = (self.beta1, self.beta2, self.eps);
        const CHUNK: usize = 16 * 1024;
        theta
            .par_chunks_mut(CHUNK)
            .zip(self.m.par_chunks_mut(CHUNK))
            .zip(self.v.par_chunks_mut(CHUNK))
            .zip(grad.par_chunks(CHUNK))
            .for_each(|(((ts, ms), vs), gs)| {
                for i in 0..ts.len() {
                    let g = gs[i];
                    ms[i] = beta1 * ms[i] + (1.0 - beta1) * g;
                    vs[i] = beta2 * vs[i] + (1.0 - beta2) * g * g;
                    let m_hat = ms[i] / bc1;
                    let v_hat = vs[i] / bc2;
                    ts[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
    }
}
