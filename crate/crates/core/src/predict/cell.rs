//! Batched long short-term-memory cell plus the Adam optimizer and
//! gradient clipping, shared by the recurrent classifier and the
//! Q-network. Everything is f64 and deterministic.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Glorot-uniform matrix.
pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

/// One recurrent layer: input and recurrent weights stacked row-wise
/// into `w` ((input_dim + hidden) x 4*hidden), gate order
/// [input, forget, cell, output]; `b` is 1 x 4*hidden.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
    pub input_dim: usize,
    pub hidden: usize,
}

/// Per-step activations kept for backpropagation through time.
pub struct CellCache {
    pub x: Array2<f64>,
    pub h_prev: Array2<f64>,
    pub c_prev: Array2<f64>,
    pub gate_i: Array2<f64>,
    pub gate_f: Array2<f64>,
    pub gate_g: Array2<f64>,
    pub gate_o: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
}

impl LstmLayer {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w = xavier(input_dim + hidden, 4 * hidden, rng);
        let mut b = Array2::zeros((1, 4 * hidden));
        // forget-gate bias starts at 1 so early training keeps memory
        b.slice_mut(s![0, hidden..2 * hidden]).fill(1.0);
        LstmLayer {
            w,
            b,
            input_dim,
            hidden,
        }
    }

    fn split_w(&self) -> (ArrayView2<'_, f64>, ArrayView2<'_, f64>) {
        self.w.view().split_at(Axis(0), self.input_dim)
    }

    /// One batched step. `x` is B x input_dim; `h_prev`/`c_prev` are
    /// B x hidden (or 1 x hidden, broadcast over the batch).
    pub fn step(
        &self,
        x: ArrayView2<'_, f64>,
        h_prev: ArrayView2<'_, f64>,
        c_prev: ArrayView2<'_, f64>,
    ) -> CellCache {
        let batch = x.nrows();
        let h = self.hidden;
        let (wx, wh) = self.split_w();
        let mut z = x.dot(&wx);
        if h_prev.nrows() == batch {
            z += &h_prev.dot(&wh);
        } else {
            // broadcast a shared state over the batch
            z += &h_prev.dot(&wh).broadcast((batch, 4 * h)).unwrap();
        }
        z += &self.b;

        let gate_i = z.slice(s![.., 0..h]).mapv(sigmoid);
        let gate_f = z.slice(s![.., h..2 * h]).mapv(sigmoid);
        let gate_g = z.slice(s![.., 2 * h..3 * h]).mapv(f64::tanh);
        let gate_o = z.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);
        let c_prev_full = if c_prev.nrows() == batch {
            c_prev.to_owned()
        } else {
            c_prev.broadcast((batch, h)).unwrap().to_owned()
        };
        let c = &gate_f * &c_prev_full + &gate_i * &gate_g;
        let tanh_c = c.mapv(f64::tanh);
        let h_out = &gate_o * &tanh_c;
        let h_prev_full = if h_prev.nrows() == batch {
            h_prev.to_owned()
        } else {
            h_prev.broadcast((batch, h)).unwrap().to_owned()
        };
        CellCache {
            x: x.to_owned(),
            h_prev: h_prev_full,
            c_prev: c_prev_full,
            gate_i,
            gate_f,
            gate_g,
            gate_o,
            c,
            tanh_c,
            h: h_out,
        }
    }

    /// Backward through one step. `dh` is the gradient on this step's
    /// hidden output, `dc_in` the cell-state gradient carried back from
    /// the step after it. Accumulates parameter gradients into `gw`/`gb`
    /// and returns (dx, dh_prev, dc_prev).
    pub fn step_backward(
        &self,
        cache: &CellCache,
        dh: &Array2<f64>,
        dc_in: &Array2<f64>,
        gw: &mut Array2<f64>,
        gb: &mut Array2<f64>,
    ) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let h = self.hidden;
        let batch = dh.nrows();

        let dc = dc_in + &(dh * &cache.gate_o * &cache.tanh_c.mapv(|v| 1.0 - v * v));
        let d_o = dh * &cache.tanh_c;
        let d_i = &dc * &cache.gate_g;
        let d_g = &dc * &cache.gate_i;
        let d_f = &dc * &cache.c_prev;
        let dc_prev = &dc * &cache.gate_f;

        let mut dz = Array2::<f64>::zeros((batch, 4 * h));
        dz.slice_mut(s![.., 0..h])
            .assign(&(&d_i * &cache.gate_i.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![.., h..2 * h])
            .assign(&(&d_f * &cache.gate_f.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![.., 2 * h..3 * h])
            .assign(&(&d_g * &cache.gate_g.mapv(|v| 1.0 - v * v)));
        dz.slice_mut(s![.., 3 * h..4 * h])
            .assign(&(&d_o * &cache.gate_o.mapv(|v| v * (1.0 - v))));

        // parameter gradients
        gw.slice_mut(s![..self.input_dim, ..])
            .scaled_add(1.0, &cache.x.t().dot(&dz));
        gw.slice_mut(s![self.input_dim.., ..])
            .scaled_add(1.0, &cache.h_prev.t().dot(&dz));
        gb.scaled_add(1.0, &dz.sum_axis(Axis(0)).insert_axis(Axis(0)));

        let (wx, wh) = self.split_w();
        let dx = dz.dot(&wx.t());
        let dh_prev = dz.dot(&wh.t());
        (dx, dh_prev, dc_prev)
    }
}

/// Scale all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [&mut Array2<f64>], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        sq += g.iter().map(|v| v * v).sum::<f64>();
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * scale);
        }
    }
    norm
}

/// Adam with bias correction. Moment buffers follow the tensor order
/// handed to `step`, which must stay fixed across calls.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        shapes: &[(usize, usize)],
    ) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            t: 0,
            m: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
            v: shapes.iter().map(|&s| Array2::zeros(s)).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            m.zip_mut_with(grad, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(grad, |vi, &gi| {
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi
            });
            ndarray::Zip::from(&mut **param)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &mi, &vi| {
                    let m_hat = mi / bc1;
                    let v_hat = vi / bc2;
                    *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn step_shapes_and_broadcast_agree() {
        let mut r = rng::stream(1, "cell-test", &[]);
        let layer = LstmLayer::new(3, 4, &mut r);
        let x = xavier(5, 3, &mut r);
        let h0 = Array2::<f64>::zeros((5, 4));
        let c0 = Array2::<f64>::zeros((5, 4));
        let cache = layer.step(x.view(), h0.view(), c0.view());
        assert_eq!(cache.h.dim(), (5, 4));

        // broadcasting a shared 1-row state equals replicating it
        let h_shared = xavier(1, 4, &mut r);
        let c_shared = xavier(1, 4, &mut r);
        let broadcasted = layer.step(x.view(), h_shared.view(), c_shared.view());
        let h_full = h_shared.broadcast((5, 4)).unwrap().to_owned();
        let c_full = c_shared.broadcast((5, 4)).unwrap().to_owned();
        let replicated = layer.step(x.view(), h_full.view(), c_full.view());
        assert_eq!(broadcasted.h, replicated.h);
        assert_eq!(broadcasted.c, replicated.c);
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut a = Array2::from_elem((2, 2), 3.0);
        let mut b = Array2::from_elem((1, 2), 4.0);
        let norm = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        let expected = (4.0 * 9.0 + 2.0 * 16.0f64).sqrt();
        assert!((norm - expected).abs() < 1e-12);
        let after = (a.iter().map(|v| v * v).sum::<f64>() + b.iter().map(|v| v * v).sum::<f64>())
            .sqrt();
        assert!((after - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_reduces_simple_quadratic() {
        // minimize ||p||^2 from a fixed start
        let mut p = Array2::from_elem((2, 2), 1.0);
        let mut opt = Adam::new(0.05, 0.9, 0.999, 1e-8, &[(2, 2)]);
        for _ in 0..200 {
            let g = p.mapv(|v| 2.0 * v);
            opt.step(&mut [&mut p], &[&g]);
        }
        assert!(p.iter().all(|v| v.abs() < 0.05));
    }
}
