//! Plain scalar-arithmetic reference implementations used only by tests.

fn sigma(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn affine(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    w.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Gate order everywhere: input, forget, output, candidate.
pub struct ScalarLstm {
    pub w_e: Vec<Vec<f64>>,
    pub w_x: [Vec<Vec<f64>>; 4],
    pub w_h: [Vec<Vec<f64>>; 4],
    pub b: [Vec<f64>; 4],
}

impl ScalarLstm {
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pre: Vec<Vec<f64>> = (0..4)
            .map(|g| {
                let wx = affine(&self.w_x[g], x);
                let wh = affine(&self.w_h[g], h);
                (0..c.len()).map(|j| wx[j] + wh[j] + self.b[g][j]).collect()
            })
            .collect();
        let mut h_new = vec![0.0; c.len()];
        let mut c_new = vec![0.0; c.len()];
        for j in 0..c.len() {
            let i = sigma(pre[0][j]);
            let f = sigma(pre[1][j]);
            let o = sigma(pre[2][j]);
            c_new[j] = f * c[j] + i * pre[3][j].tanh();
            h_new[j] = o * c_new[j].tanh();
        }
        (h_new, c_new)
    }
}

pub fn lstm_scalar_oracle(m: &ScalarLstm, tokens: &[usize]) -> Vec<f64> {
    let d = m.b[0].len();
    let (mut h, mut c) = (vec![0.0; d], vec![0.0; d]);
    for &t in tokens {
        (h, c) = m.step(&m.w_e[t], &h, &c);
    }
    h
}

/// Sliding-window n-gram convolution with max pooling, one window size.
/// `x` is indexed `[position][embedding]`, `w` is `filters × (c·e)`.
pub fn cnn_window_oracle(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64], c: usize) -> Vec<f64> {
    let positions = x.len() + 1 - c;
    (0..w.len())
        .map(|f| {
            (0..positions)
                .map(|t| {
                    let window: Vec<f64> = x[t..t + c].iter().flatten().copied().collect();
                    (w[f].iter().zip(&window).map(|(a, b)| a * b).sum::<f64>() + b[f]).tanh()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}
