//! Single-direction LSTM recurrence and its backward pass.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::LstmCell;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the backward pass needs. Rows are indexed by sequence
/// position regardless of direction.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    pub x: Array2<f64>,
    /// Post-activation gates `[i, f, g, o]`, T × 4h.
    pub gates: Array2<f64>,
    pub c: Array2<f64>,
    pub tanh_c: Array2<f64>,
    pub h: Array2<f64>,
    pub reverse: bool,
}

fn position(step: usize, len: usize, reverse: bool) -> usize {
    if reverse {
        len - 1 - step
    } else {
        step
    }
}

pub(crate) fn forward(cell: &LstmCell, x: Array2<f64>, reverse: bool) -> LstmTrace {
    let t_len = x.nrows();
    let hd = cell.hidden();
    let zx = x.dot(&cell.w_ih.t()) + &cell.bias;
    let mut gates = Array2::zeros((t_len, 4 * hd));
    let mut c = Array2::zeros((t_len, hd));
    let mut tanh_c = Array2::zeros((t_len, hd));
    let mut h = Array2::zeros((t_len, hd));
    let mut h_prev = Array1::<f64>::zeros(hd);
    let mut c_prev = Array1::<f64>::zeros(hd);
    for step in 0..t_len {
        let pos = position(step, t_len, reverse);
        let z = &zx.row(pos) + &cell.w_hh.dot(&h_prev);
        let mut g_row = gates.row_mut(pos);
        for k in 0..4 * hd {
            g_row[k] = if (2 * hd..3 * hd).contains(&k) {
                z[k].tanh()
            } else {
                sigmoid(z[k])
            };
        }
        for k in 0..hd {
            let (i, f, g, o) = (
                g_row[k],
                g_row[hd + k],
                g_row[2 * hd + k],
                g_row[3 * hd + k],
            );
            let ck = f * c_prev[k] + i * g;
            let tc = ck.tanh();
            c[[pos, k]] = ck;
            tanh_c[[pos, k]] = tc;
            h[[pos, k]] = o * tc;
        }
        h_prev = h.row(pos).to_owned();
        c_prev = c.row(pos).to_owned();
    }
    LstmTrace {
        x,
        gates,
        c,
        tanh_c,
        h,
        reverse,
    }
}

/// Backpropagates `d_h` (gradient w.r.t. every output row) through the
/// recurrence, accumulating into `grads` and returning the input gradient.
pub(crate) fn backward(
    cell: &LstmCell,
    tr: &LstmTrace,
    d_h: ArrayView2<'_, f64>,
    grads: &mut LstmCell,
) -> Array2<f64> {
    let t_len = tr.x.nrows();
    let hd = cell.hidden();
    let mut dz_all = Array2::<f64>::zeros((t_len, 4 * hd));
    let mut dh_next = Array1::<f64>::zeros(hd);
    let mut dc_next = Array1::<f64>::zeros(hd);
    let zero = Array1::<f64>::zeros(hd);
    for step in (0..t_len).rev() {
        let pos = position(step, t_len, tr.reverse);
        let prev = (step > 0).then(|| position(step - 1, t_len, tr.reverse));
        let (h_prev, c_prev): (ArrayView1<'_, f64>, ArrayView1<'_, f64>) = match prev {
            Some(p) => (tr.h.row(p), tr.c.row(p)),
            None => (zero.view(), zero.view()),
        };
        let g_row = tr.gates.row(pos);
        let mut dz = dz_all.row_mut(pos);
        for k in 0..hd {
            let (i, f, g, o) = (
                g_row[k],
                g_row[hd + k],
                g_row[2 * hd + k],
                g_row[3 * hd + k],
            );
            let tc = tr.tanh_c[[pos, k]];
            let dh = d_h[[pos, k]] + dh_next[k];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            dz[k] = dc * g * i * (1.0 - i);
            dz[hd + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * hd + k] = dc * i * (1.0 - g * g);
            dz[3 * hd + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let dz = dz_all.row(pos);
        let dz_col = dz.view().insert_axis(Axis(1));
        let h_row = h_prev.insert_axis(Axis(0));
        grads.w_hh += &dz_col.dot(&h_row);
        dh_next = cell.w_hh.t().dot(&dz);
    }
    grads.w_ih += &dz_all.t().dot(&tr.x);
    grads.bias += &dz_all.sum_axis(Axis(0));
    dz_all.dot(&cell.w_ih)
}

/// Final hidden state of a trace: last position forward, first backward.
pub(crate) fn final_state(tr: &LstmTrace) -> ArrayView1<'_, f64> {
    let pos = if tr.reverse { 0 } else { tr.h.nrows() - 1 };
    tr.h.slice(s![pos, ..])
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cell(input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> LstmCell {
        LstmCell {
            w_ih: Array2::from_shape_fn((4 * hidden, input), |_| rng.gen_range(-1.0..1.0)),
            w_hh: Array2::from_shape_fn((4 * hidden, hidden), |_| rng.gen_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(4 * hidden, |_| rng.gen_range(-1.0..1.0)),
        }
    }

    /// Scalar loops over the textbook equations.
    fn scalar_oracle(cell: &LstmCell, x: &Array2<f64>, reverse: bool) -> Vec<Vec<f64>> {
        let (t_len, input) = x.dim();
        let hd = cell.hidden();
        let mut out = vec![vec![0.0; hd]; t_len];
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let order: Vec<usize> = if reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        };
        for pos in order {
            let pre = |gate: usize, k: usize| {
                let row = gate * hd + k;
                let mut z = cell.bias[row];
                for j in 0..input {
                    z += cell.w_ih[[row, j]] * x[[pos, j]];
                }
                for j in 0..hd {
                    z += cell.w_hh[[row, j]] * h[j];
                }
                z
            };
            let mut new_h = vec![0.0; hd];
            for k in 0..hd {
                let i = sigmoid(pre(0, k));
                let f = sigmoid(pre(1, k));
                let g = pre(2, k).tanh();
                let o = sigmoid(pre(3, k));
                c[k] = f * c[k] + i * g;
                new_h[k] = o * c[k].tanh();
            }
            h = new_h;
            out[pos] = h.clone();
        }
        out
    }

    #[test]
    fn matches_scalar_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cell = random_cell(3, 2, &mut rng);
        let x = Array2::from_shape_fn((3, 3), |_| rng.gen_range(-1.0..1.0));
        for reverse in [false, true] {
            let tr = forward(&cell, x.clone(), reverse);
            let oracle = scalar_oracle(&cell, &x, reverse);
            for t in 0..3 {
                for k in 0..2 {
                    assert!((tr.h[[t, k]] - oracle[t][k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let cell = LstmCell::zeros(4, 3);
        let tr = forward(&cell, Array2::ones((5, 4)), false);
        assert!(tr.h.iter().all(|&v| v == 0.0));
        assert!(tr.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = random_cell(3, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let weights = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        for reverse in [false, true] {
            let loss = |c: &LstmCell, x: &Array2<f64>| {
                (&forward(c, x.clone(), reverse).h * &weights).sum()
            };
            let tr = forward(&cell, x.clone(), reverse);
            let mut grads = LstmCell::zeros(3, 2);
            let dx = backward(&cell, &tr, weights.view(), &mut grads);
            let eps = 1e-6;
            for idx in 0..x.len() {
                let (r, c) = (idx / 3, idx % 3);
                let mut xp = x.clone();
                xp[[r, c]] += eps;
                let mut xm = x.clone();
                xm[[r, c]] -= eps;
                let num = (loss(&cell, &xp) - loss(&cell, &xm)) / (2.0 * eps);
                assert!((num - dx[[r, c]]).abs() < 1e-7);
            }
            for (r, c) in [(0, 0), (5, 1), (7, 0)] {
                let mut p = cell.clone();
                p.w_hh[[r, c]] += eps;
                let mut m = cell.clone();
                m.w_hh[[r, c]] -= eps;
                let num = (loss(&p, &x) - loss(&m, &x)) / (2.0 * eps);
                assert!((num - grads.w_hh[[r, c]]).abs() < 1e-7);
            }
        }
    }
}
