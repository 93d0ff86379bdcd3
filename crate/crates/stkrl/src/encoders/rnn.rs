use rand::Rng;

use crate::encoders::{EncoderKind, EncoderTape};
use crate::error::{Error, Result};
use crate::numerics::{dtanh_from_output, uniform_symmetric, Matrix, Vector};
use crate::scalar::Scalar;

/// Parameters of the plain recurrent cell `h_t = tanh(W x_t + U h_{t-1} + b)`.
///
/// `w` is `k×(k_w+k_p)`, `u` is `k×k`, `b` has length `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnParams<T> {
    pub w: Matrix<T>,
    pub u: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Scalar> RnnParams<T> {
    pub fn zeros(k: usize, input_dim: usize) -> Self {
        RnnParams {
            w: Matrix::zeros(k, input_dim),
            u: Matrix::zeros(k, k),
            b: Vector::zeros(k),
        }
    }

    /// All entries i.i.d. uniform from `[-width, width]`; draw order is
    /// W row-major, then U row-major, then b.
    pub fn random(k: usize, input_dim: usize, width: f64, rng: &mut impl Rng) -> Self {
        let mut p = RnnParams::zeros(k, input_dim);
        for x in p.w.as_mut_slice() {
            *x = uniform_symmetric(rng, width);
        }
        for x in p.u.as_mut_slice() {
            *x = uniform_symmetric(rng, width);
        }
        for x in p.b.as_mut_slice() {
            *x = uniform_symmetric(rng, width);
        }
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let k = self.w.rows();
        if self.u.rows() != k || self.u.cols() != k || self.b.len() != k {
            return Err(Error::Config(format!(
                "recurrent cell shapes disagree: W is {}×{}, U is {}×{}, b has length {}",
                self.w.rows(),
                self.w.cols(),
                self.u.rows(),
                self.u.cols(),
                self.b.len()
            )));
        }
        Ok(())
    }

    /// `self += alpha * other`, used for gradient accumulation and SGD.
    pub fn axpy(&mut self, alpha: T, other: &RnnParams<T>) {
        self.w.axpy(alpha, &other.w);
        self.u.axpy(alpha, &other.u);
        self.b.axpy(alpha, &other.b);
    }

    pub fn scale(&mut self, alpha: T) {
        for x in self.w.as_mut_slice() {
            *x = *x * alpha;
        }
        for x in self.u.as_mut_slice() {
            *x = *x * alpha;
        }
        for x in self.b.as_mut_slice() {
            *x = *x * alpha;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.w.all_finite() && self.u.all_finite() && self.b.all_finite()
    }

    pub fn coord_count(&self) -> usize {
        self.w.rows() * self.w.cols() + self.u.rows() * self.u.cols() + self.b.len()
    }
}

/// Shared recurrence for the plain and the pooled variant.
pub(crate) fn rnn_run<T: Scalar>(
    p: &RnnParams<T>,
    xs: &[Vector<T>],
    pool: bool,
) -> Result<(Vector<T>, EncoderTape<T>)> {
    if xs.is_empty() {
        return Err(Error::Argument("encoder input sequence is empty".into()));
    }
    p.check_shapes()?;
    for x in xs {
        if x.len() != p.input_dim() {
            return Err(Error::Config(format!(
                "encoder input has dimension {}, cell expects {}",
                x.len(),
                p.input_dim()
            )));
        }
    }
    let k = p.hidden_dim();
    let n = xs.len();
    let mut hidden: Vec<Vector<T>> = Vec::with_capacity(n);
    let mut prev = Vector::zeros(k);
    for x in xs {
        let mut a = p.w.matvec(x);
        a.add_assign(&p.u.matvec(&prev));
        a.add_assign(&p.b);
        let mut h = Vector::zeros(k);
        for i in 0..k {
            h[i] = a[i].tanh();
        }
        prev = h.clone();
        hidden.push(h);
    }
    let output = if pool {
        let mut mean = Vector::zeros(k);
        for h in &hidden {
            mean.add_assign(h);
        }
        mean.scale(T::one() / crate::scalar::real::<T>(n as f64));
        mean
    } else {
        hidden[n - 1].clone()
    };
    let tape = EncoderTape {
        kind: if pool { EncoderKind::RnnPool } else { EncoderKind::Rnn },
        xs: xs.to_vec(),
        hidden,
        lstm: None,
        token_ids: Vec::new(),
        position_ids: Vec::new(),
        word_dim: 0,
    };
    Ok((output, tape))
}

/// Reverse-mode pass through the recurrence recorded on `tape`.
///
/// `upstream` is `dL/d output`; for the pooled variant it is spread as
/// `upstream / n` onto every hidden state before unrolling. Returns parameter
/// gradients and `dL/dx_t` per step.
pub(crate) fn rnn_backward<T: Scalar>(
    p: &RnnParams<T>,
    tape: &EncoderTape<T>,
    upstream: &Vector<T>,
) -> (RnnParams<T>, Vec<Vector<T>>) {
    let n = tape.xs.len();
    let k = p.hidden_dim();
    let mut grads = RnnParams::zeros(k, p.input_dim());
    let mut dx: Vec<Vector<T>> = vec![Vector::zeros(p.input_dim()); n];
    let pool = tape.kind == EncoderKind::RnnPool;
    let share = if pool {
        let mut s = upstream.clone();
        s.scale(T::one() / crate::scalar::real::<T>(n as f64));
        s
    } else {
        Vector::zeros(k)
    };

    let mut dh = Vector::zeros(k);
    for t in (0..n).rev() {
        if pool {
            dh.add_assign(&share);
        } else if t == n - 1 {
            dh.add_assign(upstream);
        }
        let h = &tape.hidden[t];
        let mut da = Vector::zeros(k);
        for i in 0..k {
            da[i] = dh[i] * dtanh_from_output(h[i]);
        }
        grads.w.add_outer(&da, &tape.xs[t]);
        if t > 0 {
            grads.u.add_outer(&da, &tape.hidden[t - 1]);
        }
        grads.b.add_assign(&da);
        dx[t] = p.w.matvec_t(&da);
        dh = p.u.matvec_t(&da);
    }
    (grads, dx)
}
