//! Dense tensors and a single GRU layer with explicit backpropagation
//! through time.
//!
//! ```text
//! z  = sigmoid(W_z x + U_z h + b_z)
//! r  = sigmoid(W_r x + U_r h + b_r)
//! h~ = tanh(W_h x + U_h (r * h) + b_h)
//! h' = (1 - z) * h + z * h~
//! ```

use rand::Rng;

/// Row-major matrix; column vectors have `cols == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Tensor { rows, cols, data })
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..=scale)).collect();
        Tensor { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out += self * x`
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += self^T * v`
    pub fn matvec_t_add(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows);
        for (&vi, row) in v.iter().zip(self.data.chunks_exact(self.cols)) {
            if vi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += vi * a;
                }
            }
        }
    }

    /// `self += a * b^T`
    pub fn outer_add(&mut self, a: &[f64], b: &[f64]) {
        for (&ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if ai != 0.0 {
                for (r, bj) in row.iter_mut().zip(b) {
                    *r += ai * bj;
                }
            }
        }
    }

    pub fn add_vec(&mut self, v: &[f64]) {
        for (d, x) in self.data.iter_mut().zip(v) {
            *d += x;
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|d| *d = value);
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate order inside the weight arrays.
pub const Z: usize = 0;
pub const R: usize = 1;
pub const H: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    /// Input-to-hidden matrices `hidden x input` for z, r, h~.
    pub w: [Tensor; 3],
    /// Hidden-to-hidden matrices `hidden x hidden`.
    pub u: [Tensor; 3],
    /// Bias vectors `hidden x 1`.
    pub b: [Tensor; 3],
}

/// Activations of one layer over one sequence.
#[derive(Debug, Clone)]
pub struct LayerCache {
    pub inputs: Vec<Vec<f64>>,
    /// `h_0 .. h_T`, with `h_0 = 0`.
    pub hidden: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    cand: Vec<Vec<f64>>,
}

impl LayerCache {
    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.hidden[1..]
    }

    pub fn last(&self) -> &[f64] {
        self.hidden.last().expect("h_0 always present")
    }
}

impl GruLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(hidden, input);
        let u = || Tensor::zeros(hidden, hidden);
        let b = || Tensor::zeros(hidden, 1);
        GruLayer {
            w: [w(), w(), w()],
            u: [u(), u(), u()],
            b: [b(), b(), b()],
        }
    }

    pub fn input_size(&self) -> usize {
        self.w[0].cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.u[0].rows()
    }

    pub fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w[Z], &self.u[Z], &self.b[Z], &self.w[R], &self.u[R], &self.b[R], &self.w[H], &self.u[H], &self.b[H],
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 9] {
        let [wz, wr, wh] = &mut self.w;
        let [uz, ur, uh] = &mut self.u;
        let [bz, br, bh] = &mut self.b;
        [wz, uz, bz, wr, ur, br, wh, uh, bh]
    }

    pub fn forward(&self, inputs: Vec<Vec<f64>>) -> LayerCache {
        let hsz = self.hidden_size();
        let steps = inputs.len();
        let mut cache = LayerCache {
            inputs,
            hidden: Vec::with_capacity(steps + 1),
            z: Vec::with_capacity(steps),
            r: Vec::with_capacity(steps),
            cand: Vec::with_capacity(steps),
        };
        cache.hidden.push(vec![0.0; hsz]);
        for t in 0..steps {
            let x = &cache.inputs[t];
            let h = &cache.hidden[t];
            let gate = |g: usize, recur: &[f64]| {
                let mut a = self.b[g].data().to_vec();
                self.w[g].matvec_add(x, &mut a);
                self.u[g].matvec_add(recur, &mut a);
                a
            };
            let z: Vec<f64> = gate(Z, h).into_iter().map(sigmoid).collect();
            let r: Vec<f64> = gate(R, h).into_iter().map(sigmoid).collect();
            let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
            let cand: Vec<f64> = gate(H, &rh).into_iter().map(f64::tanh).collect();
            let next: Vec<f64> = (0..hsz).map(|i| (1.0 - z[i]) * h[i] + z[i] * cand[i]).collect();
            cache.z.push(z);
            cache.r.push(r);
            cache.cand.push(cand);
            cache.hidden.push(next);
        }
        cache
    }

    /// Backpropagates `d_out[t]` (gradient w.r.t. `h_{t+1}` from above)
    /// through the sequence, accumulating into `grad`; returns the gradient
    /// w.r.t. each input.
    pub fn backward(&self, cache: &LayerCache, d_out: &[Vec<f64>], grad: &mut GruLayer) -> Vec<Vec<f64>> {
        let hsz = self.hidden_size();
        let isz = self.input_size();
        let steps = cache.inputs.len();
        let mut d_inputs = vec![vec![0.0; isz]; steps];
        let mut dh_next = vec![0.0; hsz];
        for t in (0..steps).rev() {
            let x = &cache.inputs[t];
            let h_prev = &cache.hidden[t];
            let (z, r, c) = (&cache.z[t], &cache.r[t], &cache.cand[t]);
            let dh: Vec<f64> = (0..hsz).map(|i| d_out[t][i] + dh_next[i]).collect();

            let mut dh_prev: Vec<f64> = (0..hsz).map(|i| dh[i] * (1.0 - z[i])).collect();
            let da_h: Vec<f64> = (0..hsz).map(|i| dh[i] * z[i] * (1.0 - c[i] * c[i])).collect();
            let da_z: Vec<f64> = (0..hsz)
                .map(|i| dh[i] * (c[i] - h_prev[i]) * z[i] * (1.0 - z[i]))
                .collect();

            let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
            grad.w[H].outer_add(&da_h, x);
            grad.u[H].outer_add(&da_h, &rh);
            grad.b[H].add_vec(&da_h);
            let dx = &mut d_inputs[t];
            self.w[H].matvec_t_add(&da_h, dx);
            let mut d_rh = vec![0.0; hsz];
            self.u[H].matvec_t_add(&da_h, &mut d_rh);

            let da_r: Vec<f64> = (0..hsz).map(|i| d_rh[i] * h_prev[i] * r[i] * (1.0 - r[i])).collect();
            for i in 0..hsz {
                dh_prev[i] += d_rh[i] * r[i];
            }

            for (g, da) in [(R, &da_r), (Z, &da_z)] {
                grad.w[g].outer_add(da, x);
                grad.u[g].outer_add(da, h_prev);
                grad.b[g].add_vec(da);
                self.w[g].matvec_t_add(da, dx);
                self.u[g].matvec_t_add(da, &mut dh_prev);
            }
            dh_next = dh_prev;
        }
        d_inputs
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matvec_shapes() {
        let m = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = vec![0.0; 2];
        m.matvec_add(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);
        let mut back = vec![0.0; 3];
        m.matvec_t_add(&[1.0, 1.0], &mut back);
        assert_eq!(back, vec![5.0, 7.0, 9.0]);
        let mut acc = Tensor::zeros(2, 2);
        acc.outer_add(&[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(acc.data(), &[3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn hidden_states_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = GruLayer::zeros(4, 5);
        for t in layer.tensors_mut() {
            *t = Tensor::uniform(t.rows(), t.cols(), 1.0, &mut rng);
        }
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let cache = layer.forward(inputs);
        for h in cache.outputs() {
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }
}
