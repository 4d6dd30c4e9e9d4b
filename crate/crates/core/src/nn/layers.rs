//! Slice-level forward/backward kernels. Activations are laid out
//! `(batch, length, channels)` row-major; all inner loops are axpy-shaped
//! over the contiguous last axis.

use rand::Rng;
use rand_xoshiro::SplitMix64;

use super::Real;
use super::spec::Activation;

#[inline]
pub(crate) fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Strided read-only matrix view: element `(r, c)` sits at
/// `data[r * rs + c * cs]`.
#[derive(Clone, Copy)]
struct View<'a, T> {
    data: &'a [T],
    rs: usize,
    cs: usize,
}

fn view<T>(data: &[T], rs: usize, cs: usize) -> View<'_, T> {
    View { data, rs, cs }
}

fn fits(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> bool {
    rows == 0 || cols == 0 || (rows - 1) * rs + (cols - 1) * cs < len
}

/// `c (m x n, row-major with row stride rsc) = a (m x k) b (k x n) + beta c`.
#[allow(clippy::too_many_arguments)]
fn gemm<T: Real>(m: usize, k: usize, n: usize, a: View<T>, b: View<T>, beta: T, c: &mut [T], rsc: usize) {
    assert!(fits(a.data.len(), m, k, a.rs, a.cs), "gemm: a out of bounds");
    assert!(fits(b.data.len(), k, n, b.rs, b.cs), "gemm: b out of bounds");
    assert!(fits(c.len(), m, n, rsc, 1), "gemm: c out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: bounds asserted above; `c` is a unique borrow so it cannot
    // alias the shared `a` and `b` slices.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Fills every `width`-long row of `out` with `bias`.
fn broadcast_rows<T: Real>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        row.copy_from_slice(bias);
    }
}

/// Adds the column sums of the `(rows, width)` matrix `m` to `acc`.
fn add_column_sums<T: Real>(m: &[T], acc: &mut [T]) {
    for row in m.chunks_exact(acc.len()) {
        axpy(T::one(), row, acc);
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn elu<T: Real>(x: T) -> T {
    if x > T::zero() { x } else { x.exp() - T::one() }
}

pub(crate) fn relu<T: Real>(x: T) -> T {
    if x > T::zero() { x } else { T::zero() }
}

/// Applies `act` in place; softmax normalizes each run of `width` values.
pub(crate) fn activate<T: Real>(act: Activation, v: &mut [T], width: usize) {
    match act {
        Activation::Linear => {}
        Activation::Relu => v.iter_mut().for_each(|x| *x = relu(*x)),
        Activation::Elu => v.iter_mut().for_each(|x| *x = elu(*x)),
        Activation::Softmax => v.chunks_mut(width).for_each(softmax_in_place),
    }
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Multiplies `grad` by the activation derivative, expressed through the
/// activation output. Softmax is handled by the loss.
fn activation_backward<T: Real>(act: Activation, out: &[T], grad: &mut [T]) {
    match act {
        Activation::Linear | Activation::Softmax => {}
        Activation::Relu => {
            for (g, &a) in grad.iter_mut().zip(out) {
                if a <= T::zero() {
                    *g = T::zero();
                }
            }
        }
        Activation::Elu => {
            for (g, &a) in grad.iter_mut().zip(out) {
                if a <= T::zero() {
                    *g *= a + T::one();
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub len: usize,
    pub cin: usize,
    pub kernel: usize,
    pub cout: usize,
}

impl ConvDims {
    fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    fn padded_len(&self) -> usize {
        self.len + self.kernel - 1
    }

    /// Copies example `b` into a zero-padded `(len + k - 1, cin)` buffer so
    /// that the receptive field of output `t` is the contiguous slice
    /// `[t*cin, (t+k)*cin)`.
    fn pad_into<T: Real>(&self, x: &[T], b: usize, padded: &mut [T]) {
        let row = self.len * self.cin;
        let off = self.pad_left() * self.cin;
        padded.fill(T::zero());
        padded[off..off + row].copy_from_slice(&x[b * row..(b + 1) * row]);
    }
}

/// Same-padded stride-1 convolution followed by `act`.
pub(crate) fn conv_forward<T: Real>(
    d: ConvDims,
    x: &[T],
    kernel: &[T],
    bias: &[T],
    act: Activation,
) -> Vec<T> {
    let span = d.kernel * d.cin;
    let plane = d.len * d.cout;
    let mut out = vec![T::zero(); d.batch * plane];
    let mut padded = vec![T::zero(); d.padded_len() * d.cin];
    for (b, ob) in out.chunks_exact_mut(plane).enumerate() {
        d.pad_into(x, b, &mut padded);
        broadcast_rows(ob, bias);
        // receptive fields overlap: row t of the patch matrix starts at t*cin
        gemm(d.len, span, d.cout, view(&padded, d.cin, 1), view(kernel, d.cout, 1), T::one(), ob, d.cout);
    }
    activate(act, &mut out, d.cout);
    out
}

/// Returns the input gradient; accumulates kernel and bias gradients.
/// `dout` is consumed as scratch.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Real>(
    d: ConvDims,
    x: &[T],
    out: &[T],
    mut dout: Vec<T>,
    kernel: &[T],
    act: Activation,
    dkernel: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    activation_backward(act, out, &mut dout);
    add_column_sums(&dout, dbias);
    let span = d.kernel * d.cin;
    let plane = d.len * d.cout;
    let mut dx = vec![T::zero(); x.len()];
    let mut padded = vec![T::zero(); d.padded_len() * d.cin];
    let mut dpadded = vec![T::zero(); d.padded_len() * d.cin];
    let mut dcols = vec![T::zero(); d.len * span];
    let row_len = d.len * d.cin;
    let off = d.pad_left() * d.cin;
    for (b, dz) in dout.chunks_exact(plane).enumerate() {
        d.pad_into(x, b, &mut padded);
        // dkernel += patches^T dz
        gemm(span, d.len, d.cout, view(&padded, 1, d.cin), view(dz, d.cout, 1), T::one(), dkernel, d.cout);
        // per-position patch gradients dz kernel^T, then scattered back
        gemm(d.len, d.cout, span, view(dz, d.cout, 1), view(kernel, 1, d.cout), T::zero(), &mut dcols, span);
        dpadded.fill(T::zero());
        for (t, dc) in dcols.chunks_exact(span).enumerate() {
            axpy(T::one(), dc, &mut dpadded[t * d.cin..t * d.cin + span]);
        }
        dx[b * row_len..(b + 1) * row_len].copy_from_slice(&dpadded[off..off + row_len]);
    }
    dx
}

/// Non-overlapping max pooling along the length axis. Also returns, per
/// output element, the offset of the winning input within its window.
pub(crate) fn maxpool_forward<T: Real>(
    x: &[T],
    batch: usize,
    len: usize,
    ch: usize,
    pool: usize,
) -> (Vec<T>, Vec<u16>) {
    let out_len = len / pool;
    let mut out = vec![T::zero(); batch * out_len * ch];
    let mut arg = vec![0u16; out.len()];
    for b in 0..batch {
        for t in 0..out_len {
            let o_base = (b * out_len + t) * ch;
            let i_base = (b * len + t * pool) * ch;
            out[o_base..o_base + ch].copy_from_slice(&x[i_base..i_base + ch]);
            for j in 1..pool {
                let src = &x[i_base + j * ch..i_base + (j + 1) * ch];
                for c in 0..ch {
                    // strict comparison: ties go to the earliest position
                    if src[c] > out[o_base + c] {
                        out[o_base + c] = src[c];
                        arg[o_base + c] = j as u16;
                    }
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward<T: Real>(
    dout: &[T],
    arg: &[u16],
    batch: usize,
    len: usize,
    ch: usize,
    pool: usize,
) -> Vec<T> {
    let out_len = len / pool;
    let mut dx = vec![T::zero(); batch * len * ch];
    for b in 0..batch {
        for t in 0..out_len {
            let o_base = (b * out_len + t) * ch;
            let i_base = (b * len + t * pool) * ch;
            for c in 0..ch {
                dx[i_base + arg[o_base + c] as usize * ch + c] = dout[o_base + c];
            }
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNormCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased batch variance.
    pub var: Vec<T>,
}

/// Normalizes with batch statistics over all `n` rows of `(n, ch)`.
pub(crate) fn batchnorm_forward_train<T: Real>(
    x: &[T],
    ch: usize,
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Vec<T>, BatchNormCache<T>) {
    let n = x.len() / ch;
    let inv_n = T::one() / T::lit(n as f64);
    let mut mean = vec![T::zero(); ch];
    for row in x.chunks_exact(ch) {
        axpy(T::one(), row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m *= inv_n);
    let mut var = vec![T::zero(); ch];
    for row in x.chunks_exact(ch) {
        for c in 0..ch {
            let d = row[c] - mean[c];
            var[c] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v *= inv_n);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::lit(eps)).sqrt()).collect();

    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for ((xr, hr), yr) in x.chunks_exact(ch).zip(xhat.chunks_exact_mut(ch)).zip(y.chunks_exact_mut(ch)) {
        for c in 0..ch {
            hr[c] = (xr[c] - mean[c]) * inv_std[c];
            yr[c] = gamma[c] * hr[c] + beta[c];
        }
    }
    (
        y,
        BatchNormCache {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

pub(crate) fn batchnorm_forward_infer<T: Real>(
    x: &[T],
    ch: usize,
    gamma: &[T],
    beta: &[T],
    moving_mean: &[T],
    moving_var: &[T],
    eps: f64,
) -> Vec<T> {
    let scale: Vec<T> = (0..ch)
        .map(|c| gamma[c] / (moving_var[c] + T::lit(eps)).sqrt())
        .collect();
    let mut y = x.to_vec();
    for row in y.chunks_exact_mut(ch) {
        for c in 0..ch {
            row[c] = (row[c] - moving_mean[c]) * scale[c] + beta[c];
        }
    }
    y
}

pub(crate) fn batchnorm_backward<T: Real>(
    dy: &[T],
    cache: &BatchNormCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let ch = gamma.len();
    let n = T::lit((dy.len() / ch) as f64);
    let mut sum_dy = vec![T::zero(); ch];
    let mut sum_dy_xhat = vec![T::zero(); ch];
    for (dr, hr) in dy.chunks_exact(ch).zip(cache.xhat.chunks_exact(ch)) {
        for c in 0..ch {
            sum_dy[c] += dr[c];
            sum_dy_xhat[c] += dr[c] * hr[c];
        }
    }
    axpy(T::one(), &sum_dy, dbeta);
    axpy(T::one(), &sum_dy_xhat, dgamma);

    let coef: Vec<T> = (0..ch).map(|c| gamma[c] * cache.inv_std[c] / n).collect();
    let mut dx = vec![T::zero(); dy.len()];
    for ((xr, dr), hr) in dx.chunks_exact_mut(ch).zip(dy.chunks_exact(ch)).zip(cache.xhat.chunks_exact(ch)) {
        for c in 0..ch {
            xr[c] = coef[c] * (n * dr[c] - sum_dy[c] - hr[c] * sum_dy_xhat[c]);
        }
    }
    dx
}

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. Returns the
/// output and the per-element multiplier.
pub(crate) fn dropout_forward<T: Real>(x: &[T], rate: f64, rng: &mut SplitMix64) -> (Vec<T>, Vec<T>) {
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask: Vec<T> = x
        .iter()
        .map(|_| if rng.r#gen::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let y = x.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (y, mask)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub cin: usize,
    pub units: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache<T> {
    /// Post-activation gates `(batch, steps, 4u)`: i, f, g, o.
    pub gates: Vec<T>,
    /// Cell states `(batch, steps + 1, u)`, slot 0 holding the zero state.
    pub cells: Vec<T>,
    /// Hidden states `(batch, steps + 1, u)`, slot 0 holding the zero state.
    pub hidden: Vec<T>,
}

/// Unrolled LSTM. Returns the full hidden sequence or only the final state.
pub(crate) fn lstm_forward<T: Real>(
    d: LstmDims,
    x: &[T],
    kernel: &[T],
    recurrent: &[T],
    bias: &[T],
    return_sequences: bool,
) -> (Vec<T>, LstmCache<T>) {
    let u = d.units;
    let g4 = 4 * u;
    let rows = d.batch * d.steps;
    // input projection for every (batch, step) at once
    let mut gates = vec![T::zero(); rows * g4];
    broadcast_rows(&mut gates, bias);
    gemm(rows, d.cin, g4, view(x, d.cin, 1), view(kernel, g4, 1), T::one(), &mut gates, g4);

    let state = (d.steps + 1) * u;
    let seq = d.steps * g4;
    let mut cells = vec![T::zero(); d.batch * state];
    let mut hidden = vec![T::zero(); d.batch * state];
    for t in 0..d.steps {
        // recurrent term for the whole batch: rows are strided by sequence
        gemm(
            d.batch,
            u,
            g4,
            view(&hidden[t * u..], state, 1),
            view(recurrent, g4, 1),
            T::one(),
            &mut gates[t * g4..],
            seq,
        );
        for b in 0..d.batch {
            let z = &mut gates[b * seq + t * g4..][..g4];
            for v in &mut z[..2 * u] {
                *v = sigmoid(*v);
            }
            for v in &mut z[2 * u..3 * u] {
                *v = v.tanh();
            }
            for v in &mut z[3 * u..] {
                *v = sigmoid(*v);
            }
            let (c_prev, c_rest) = cells[b * state + t * u..].split_at_mut(u);
            let c_next = &mut c_rest[..u];
            let h_next = &mut hidden[b * state + (t + 1) * u..][..u];
            for j in 0..u {
                let (i, f, g, o) = (z[j], z[u + j], z[2 * u + j], z[3 * u + j]);
                c_next[j] = f * c_prev[j] + i * g;
                h_next[j] = o * c_next[j].tanh();
            }
        }
    }

    let out = if return_sequences {
        let mut out = Vec::with_capacity(rows * u);
        for b in 0..d.batch {
            out.extend_from_slice(&hidden[b * state + u..(b + 1) * state]);
        }
        out
    } else {
        let mut out = Vec::with_capacity(d.batch * u);
        for b in 0..d.batch {
            out.extend_from_slice(&hidden[b * state + d.steps * u..(b + 1) * state]);
        }
        out
    };
    (out, LstmCache { gates, cells, hidden })
}

/// Backpropagation through time. `dout` matches the forward output layout.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward<T: Real>(
    d: LstmDims,
    x: &[T],
    cache: &LstmCache<T>,
    dout: &[T],
    kernel: &[T],
    recurrent: &[T],
    return_sequences: bool,
    grads: &mut [Vec<T>],
) -> Vec<T> {
    let u = d.units;
    let g4 = 4 * u;
    let rows = d.batch * d.steps;
    let state = (d.steps + 1) * u;
    let seq = d.steps * g4;
    let mut dz_all = vec![T::zero(); rows * g4];
    let (dkernel, rest) = grads.split_at_mut(1);
    let (drec, dbias) = rest.split_at_mut(1);
    let (dkernel, drec, dbias) = (&mut dkernel[0], &mut drec[0], &mut dbias[0]);

    // dh and dc for every batch row, flowing backwards in time
    let mut dh = vec![T::zero(); d.batch * u];
    let mut dc = vec![T::zero(); d.batch * u];
    if !return_sequences {
        dh.copy_from_slice(dout);
    }
    for t in (0..d.steps).rev() {
        for b in 0..d.batch {
            let dhb = &mut dh[b * u..(b + 1) * u];
            if return_sequences {
                axpy(T::one(), &dout[(b * d.steps + t) * u..][..u], dhb);
            }
            let dcb = &mut dc[b * u..(b + 1) * u];
            let z = &cache.gates[b * seq + t * g4..][..g4];
            let c_prev = &cache.cells[b * state + t * u..][..u];
            let c_cur = &cache.cells[b * state + (t + 1) * u..][..u];
            let dz = &mut dz_all[b * seq + t * g4..][..g4];
            for j in 0..u {
                let (i, f, g, o) = (z[j], z[u + j], z[2 * u + j], z[3 * u + j]);
                let tc = c_cur[j].tanh();
                let d_o = dhb[j] * tc;
                let dcell = dhb[j] * o * (T::one() - tc * tc) + dcb[j];
                dz[j] = dcell * g * i * (T::one() - i);
                dz[u + j] = dcell * c_prev[j] * f * (T::one() - f);
                dz[2 * u + j] = dcell * i * (T::one() - g * g);
                dz[3 * u + j] = d_o * o * (T::one() - o);
                dcb[j] = dcell * f;
            }
        }
        // dh_prev = dz recurrent^T
        gemm(
            d.batch,
            g4,
            u,
            view(&dz_all[t * g4..], seq, 1),
            view(recurrent, 1, g4),
            T::zero(),
            &mut dh,
            u,
        );
    }

    // drec += sum over steps of h_prev^T dz, one sequence at a time
    for b in 0..d.batch {
        gemm(
            u,
            d.steps,
            g4,
            view(&cache.hidden[b * state..], 1, u),
            view(&dz_all[b * seq..], g4, 1),
            T::one(),
            drec,
            g4,
        );
    }
    add_column_sums(&dz_all, dbias);
    gemm(d.cin, rows, g4, view(x, 1, d.cin), view(&dz_all, g4, 1), T::one(), dkernel, g4);
    let mut dx = vec![T::zero(); x.len()];
    gemm(rows, g4, d.cin, view(&dz_all, g4, 1), view(kernel, 1, g4), T::zero(), &mut dx, d.cin);
    dx
}

/// `x (batch, cin) @ kernel (cin, cout) + bias`, then `act`.
pub(crate) fn dense_forward<T: Real>(
    x: &[T],
    cin: usize,
    kernel: &[T],
    bias: &[T],
    act: Activation,
) -> Vec<T> {
    let cout = bias.len();
    let batch = x.len() / cin;
    let mut out = vec![T::zero(); batch * cout];
    broadcast_rows(&mut out, bias);
    gemm(batch, cin, cout, view(x, cin, 1), view(kernel, cout, 1), T::one(), &mut out, cout);
    activate(act, &mut out, cout);
    out
}

/// For softmax layers `dout` must already be the gradient w.r.t. the logits.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward<T: Real>(
    x: &[T],
    out: &[T],
    mut dout: Vec<T>,
    cin: usize,
    kernel: &[T],
    act: Activation,
    dkernel: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let cout = dbias.len();
    let batch = x.len() / cin;
    activation_backward(act, out, &mut dout);
    add_column_sums(&dout, dbias);
    gemm(cin, batch, cout, view(x, 1, cin), view(&dout, cout, 1), T::one(), dkernel, cout);
    let mut dx = vec![T::zero(); x.len()];
    gemm(batch, cout, cin, view(&dout, cout, 1), view(kernel, 1, cout), T::zero(), &mut dx, cin);
    dx
}
